"""Invertible coupling backbone with dense atrous transformation blocks.

Each coupling block updates the LF branch additively from the HF branch and
the HF branch affinely from the updated LF branch::

    y1 = x1 + phi([x2, p])
    y2 = x2 * exp(alpha * (2 * sigmoid(rho([y1, p])) - 1)) + eta([y1, p])

so the inverse is available in closed form. ``p`` is the scale-encoding field,
used purely as conditioning input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional, Union

import numpy as np

from .tensor import Tensor, concat, conv2d

ENCODING_CHANNELS = 4


class DivergenceError(RuntimeError):
    """Non-finite values appeared in the network or the loss."""


class EncodingMode(str, Enum):
    DUAL = "dual"
    LF_ONLY = "lf_only"
    HF_ONLY = "hf_only"
    NONE = "none"

    @classmethod
    def parse(cls, value) -> "EncodingMode":
        if isinstance(value, cls):
            return value
        aliases = {"lf": "lf_only", "hf": "hf_only", "both": "dual"}
        key = str(value).strip().lower()
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown encoding mode {value!r}") from None

    @property
    def on_hf(self) -> bool:
        # phi reads the HF branch
        return self in (EncodingMode.DUAL, EncodingMode.HF_ONLY)

    @property
    def on_lf(self) -> bool:
        # rho and eta read the LF branch
        return self in (EncodingMode.DUAL, EncodingMode.LF_ONLY)


@dataclass
class BackboneConfig:
    num_blocks: int = 20
    atrous_layers: int = 4
    feature_width: int = 32
    clamp: float = 1.0
    use_atrous: bool = True
    encoding_mode: EncodingMode = EncodingMode.DUAL
    channels: int = 3

    def __post_init__(self):
        self.encoding_mode = EncodingMode.parse(self.encoding_mode)
        if self.num_blocks < 0:
            raise ValueError("num_blocks must be >= 0")
        if self.atrous_layers < 1 or self.feature_width < 1 or self.channels < 1:
            raise ValueError("atrous_layers, feature_width and channels must be positive")
        if not self.clamp > 0:
            raise ValueError("clamp must be positive")

    @property
    def dilations(self) -> list[int]:
        return list(range(1, self.atrous_layers + 1))

    @property
    def layer_dilations(self) -> list[int]:
        """Dilations actually used; all ones when atrous convolution is off."""
        return self.dilations if self.use_atrous else [1] * self.atrous_layers


def _dense_block_shapes(in_ch: int, out_ch: int, width: int, layers: int) -> list[tuple[int, int]]:
    shapes = [(width, in_ch + k * width) for k in range(layers)]
    shapes.append((out_ch, in_ch + layers * width))
    return shapes


def _subnet_inputs(cfg: BackboneConfig) -> dict[str, int]:
    c, e = cfg.channels, ENCODING_CHANNELS
    return {
        "phi": c + (e if cfg.encoding_mode.on_hf else 0),
        "rho": c + (e if cfg.encoding_mode.on_lf else 0),
        "eta": c + (e if cfg.encoding_mode.on_lf else 0),
    }


def param_count(cfg: BackboneConfig) -> int:
    """Number of trainable scalars, computed from the config alone."""
    total = 0
    for in_ch in _subnet_inputs(cfg).values():
        for out_ch, cin in _dense_block_shapes(in_ch, cfg.channels, cfg.feature_width, cfg.atrous_layers):
            total += out_ch * cin * 9 + out_ch
    return total * cfg.num_blocks


class DenseAtrousBlock:
    """Dense stack of 3x3 convolutions with dilations 1..l and a linear projection."""

    def __init__(self, params: dict[str, Tensor], prefix: str, dilations: list[int]):
        self.dilations = dilations
        self.layers = [(params[f"{prefix}.conv{k}.weight"], params[f"{prefix}.conv{k}.bias"]) for k in range(len(dilations))]
        self.proj = (params[f"{prefix}.proj.weight"], params[f"{prefix}.proj.bias"])

    def __call__(self, x: Tensor) -> Tensor:
        feats = [x]
        for (w, b), d in zip(self.layers, self.dilations):
            inp = feats[0] if len(feats) == 1 else concat(feats, axis=1)
            feats.append(conv2d(inp, w, b, dilation=d).leaky_relu())
        w, b = self.proj
        return conv2d(concat(feats, axis=1), w, b, dilation=1)


class CouplingBlock:
    def __init__(self, params: dict[str, Tensor], prefix: str, cfg: BackboneConfig):
        dil = cfg.layer_dilations
        self.phi = DenseAtrousBlock(params, f"{prefix}.phi", dil)
        self.rho = DenseAtrousBlock(params, f"{prefix}.rho", dil)
        self.eta = DenseAtrousBlock(params, f"{prefix}.eta", dil)
        self.clamp = cfg.clamp
        self.mode = cfg.encoding_mode

    def _log_scale(self, cond_lf: Tensor) -> Tensor:
        return (self.rho(cond_lf).sigmoid() * 2.0 - 1.0) * self.clamp

    def _cond(self, x: Tensor, p: Tensor, use: bool) -> Tensor:
        return concat([x, p], axis=1) if use else x

    def forward(self, x1: Tensor, x2: Tensor, p: Tensor) -> tuple[Tensor, Tensor]:
        y1 = x1 + self.phi(self._cond(x2, p, self.mode.on_hf))
        cond = self._cond(y1, p, self.mode.on_lf)
        y2 = x2 * self._log_scale(cond).exp() + self.eta(cond)
        return y1, y2

    def inverse(self, y1: Tensor, y2: Tensor, p: Tensor) -> tuple[Tensor, Tensor]:
        cond = self._cond(y1, p, self.mode.on_lf)
        x2 = (y2 - self.eta(cond)) * (-self._log_scale(cond)).exp()
        x1 = y1 - self.phi(self._cond(x2, p, self.mode.on_hf))
        return x1, x2


TensorLike = Union[Tensor, np.ndarray]


class Backbone:
    """Stack of coupling blocks operating on (LF, HF) branch pairs.

    Parameters live in ``self.params`` (ordered, named); blocks hold references
    to the same ``Tensor`` objects.
    """

    def __init__(self, config: BackboneConfig, rng: Optional[np.random.Generator] = None, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: dict[str, Tensor] = {}
        for name, shape, proj in self._param_layout():
            if name.endswith(".bias") or proj:
                data = np.zeros(shape, dtype=self.dtype)
            else:
                bound = 0.1 / np.sqrt(shape[1] * 9)
                data = rng.uniform(-bound, bound, size=shape).astype(self.dtype)
            self.params[name] = Tensor(data, requires_grad=True, dtype=self.dtype)
        self._build()

    def _param_layout(self) -> Iterator[tuple[str, tuple, bool]]:
        cfg = self.config
        for b in range(cfg.num_blocks):
            for net, in_ch in _subnet_inputs(cfg).items():
                shapes = _dense_block_shapes(in_ch, cfg.channels, cfg.feature_width, cfg.atrous_layers)
                for k, (out_ch, cin) in enumerate(shapes):
                    proj = k == len(shapes) - 1
                    layer = "proj" if proj else f"conv{k}"
                    prefix = f"blocks.{b}.{net}.{layer}"
                    yield f"{prefix}.weight", (out_ch, cin, 3, 3), proj
                    yield f"{prefix}.bias", (out_ch,), proj

    def _build(self) -> None:
        self.blocks = [CouplingBlock(self.params, f"blocks.{b}", self.config) for b in range(self.config.num_blocks)]

    # -- parameter utilities ------------------------------------------------------

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def param_count(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if missing or extra:
            raise KeyError(f"state mismatch: missing {sorted(missing)[:3]}, unexpected {sorted(extra)[:3]}")
        for k, p in self.params.items():
            arr = np.asarray(state[k])
            if arr.shape != p.shape:
                raise ValueError(f"{k}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(self.dtype, copy=True)

    def fill_(self, value: float) -> "Backbone":
        for p in self.params.values():
            p.data[...] = value
        return self

    def randomize_(self, rng: np.random.Generator, scale: float = 0.05) -> "Backbone":
        """Overwrite every parameter (projections included) with N(0, scale^2)."""
        for p in self.params.values():
            p.data = rng.normal(0.0, scale, size=p.shape).astype(self.dtype)
        return self

    def astype(self, dtype) -> "Backbone":
        other = Backbone.__new__(Backbone)
        other.config = self.config
        other.dtype = np.dtype(dtype)
        other.params = {k: Tensor(v.data.astype(dtype), requires_grad=True, dtype=dtype) for k, v in self.params.items()}
        other._build()
        return other

    # -- transforms ---------------------------------------------------------------

    def _prepare(self, a: TensorLike, b: TensorLike, p: np.ndarray):
        a = a if isinstance(a, Tensor) else Tensor(a, dtype=self.dtype)
        b = b if isinstance(b, Tensor) else Tensor(b, dtype=self.dtype)
        squeeze = a.ndim == 3
        if squeeze:
            a = Tensor._from_op(a.data[None], (a,), lambda g: (g[0],), "unsqueeze")
            b = Tensor._from_op(b.data[None], (b,), lambda g: (g[0],), "unsqueeze")
        if a.shape != b.shape or a.ndim != 4 or a.shape[1] != self.config.channels:
            raise ValueError(f"branch shapes {a.shape} / {b.shape} do not match a {self.config.channels}-channel pair")
        p = np.asarray(p.data if isinstance(p, Tensor) else p)
        if p.shape != (ENCODING_CHANNELS,) + a.shape[2:]:
            raise ValueError(f"encoding field {p.shape} does not match spatial size {a.shape[2:]}")
        pt = Tensor(np.broadcast_to(p, (a.shape[0],) + p.shape).astype(self.dtype), dtype=self.dtype)
        return a, b, pt, squeeze

    @staticmethod
    def _check(t: Tensor, where: str) -> None:
        if not np.all(np.isfinite(t.data)):
            raise DivergenceError(f"non-finite activation in {where}")

    def _finish(self, a: Tensor, b: Tensor, squeeze: bool):
        if squeeze:
            a = Tensor._from_op(a.data[0], (a,), lambda g: (g[None],), "squeeze")
            b = Tensor._from_op(b.data[0], (b,), lambda g: (g[None],), "squeeze")
        return a, b

    def forward(self, lf: TensorLike, hf: TensorLike, p: np.ndarray) -> tuple[Tensor, Tensor]:
        """(lf, hf) -> (y_H, z_H); inputs are [N, C, H, W] or [C, H, W]."""
        x1, x2, pt, squeeze = self._prepare(lf, hf, p)
        for i, block in enumerate(self.blocks):
            x1, x2 = block.forward(x1, x2, pt)
            self._check(x1, f"block {i} forward (LF)")
            self._check(x2, f"block {i} forward (HF)")
        return self._finish(x1, x2, squeeze)

    def inverse(self, y: TensorLike, z: TensorLike, p: np.ndarray) -> tuple[Tensor, Tensor]:
        """(y_H, z_H) -> (lf, hf), blocks undone in reverse order."""
        y1, y2, pt, squeeze = self._prepare(y, z, p)
        for i in reversed(range(len(self.blocks))):
            y1, y2 = self.blocks[i].inverse(y1, y2, pt)
            self._check(y1, f"block {i} inverse (LF)")
            self._check(y2, f"block {i} inverse (HF)")
        return self._finish(y1, y2, squeeze)
