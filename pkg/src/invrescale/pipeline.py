"""The full downscale / upscale cycle around the invertible backbone."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import checkpoint
from .backbone import Backbone
from .config import TrainConfig
from .encoding import encode
from .resample import ResampleMethod, ScalePair, output_size, realized_scale, resize
from .splitting import split
from .tensor import Tensor, no_grad


@dataclass
class Cycle:
    """Every intermediate of one forward + inverse pass (batched)."""

    x: np.ndarray
    lf: np.ndarray
    hf: np.ndarray
    y_hr: Tensor
    z_hr: Tensor
    y_lr: Tensor
    y_hat_hr: Tensor
    x_hat: Tensor
    scale: ScalePair  # realized
    lr_size: tuple[int, int]


class RescalingModel:
    """Backbone plus the resampling method and channel-split setting it was trained with."""

    def __init__(self, cfg: TrainConfig, backbone: Optional[Backbone] = None, rng=None, dtype=np.float32):
        self.cfg = cfg
        if backbone is None:
            rng = rng if rng is not None else np.random.default_rng(cfg.seed)
            backbone = Backbone(cfg.backbone, rng=rng, dtype=dtype)
        self.backbone = backbone

    @property
    def method(self) -> ResampleMethod:
        return self.cfg.method

    @property
    def dtype(self):
        return self.backbone.dtype

    # -- persistence ---------------------------------------------------------------

    def save(self, path) -> None:
        checkpoint.save(path, self.cfg, self.backbone.state_dict())

    @classmethod
    def load(cls, path) -> "RescalingModel":
        cfg, params = checkpoint.load(path)
        model = cls(cfg, rng=np.random.default_rng(0))
        model.backbone.load_state_dict(params)
        return model

    # -- building blocks -----------------------------------------------------------

    def _batch(self, x: np.ndarray) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 3:
            return x[None], True
        if x.ndim != 4:
            raise ValueError(f"expected [C,H,W] or [N,C,H,W], got {x.shape}")
        return x, False

    def lr_geometry(self, h: int, w: int, scale: ScalePair) -> tuple[tuple[int, int], ScalePair]:
        lh, lw = output_size(h, w, scale, "down")
        return (lh, lw), realized_scale(h, w, lh, lw)

    def cycle(self, x: np.ndarray, scale: ScalePair, zhat: Optional[np.ndarray] = None) -> Cycle:
        """Differentiable round trip: split, forward, d, u, inverse(z = zhat or 0), merge."""
        x, _ = self._batch(x)
        h, w = x.shape[-2:]
        lr, real = self.lr_geometry(h, w, scale)
        pair = split(x, scale, self.method, enabled=self.cfg.channel_split)
        p = encode(h, w, real, dtype=self.dtype)
        y_hr, z_hr = self.backbone.forward(pair.lf, pair.hf, p)
        y_lr = resize(y_hr, lr, self.method)
        y_hat = resize(y_lr, (h, w), self.method)
        if zhat is None:
            zhat = np.zeros_like(z_hr.data)
        lf_hat, hf_hat = self.backbone.inverse(y_hat, Tensor(zhat, dtype=self.dtype), p)
        return Cycle(x, pair.lf, pair.hf, y_hr, z_hr, y_lr, y_hat, lf_hat + hf_hat, real, lr)

    def downscale(self, x: np.ndarray, scale: ScalePair) -> tuple[np.ndarray, np.ndarray, ScalePair]:
        """HR image(s) -> (LR image(s), latent z, realized scale)."""
        xb, squeeze = self._batch(x)
        h, w = xb.shape[-2:]
        lr, real = self.lr_geometry(h, w, scale)
        with no_grad():
            pair = split(xb, scale, self.method, enabled=self.cfg.channel_split)
            y_hr, z_hr = self.backbone.forward(pair.lf, pair.hf, encode(h, w, real, dtype=self.dtype))
            y_lr = resize(y_hr.data, lr, self.method)
        if squeeze:
            return y_lr[0], z_hr.data[0], real
        return y_lr, z_hr.data, real

    def upscale(self, y_lr: np.ndarray, size: tuple[int, int], z: Optional[np.ndarray] = None) -> np.ndarray:
        """LR image(s) -> restored HR image(s) of ``size`` (latent zero unless given)."""
        yb, squeeze = self._batch(y_lr)
        h, w = size
        real = realized_scale(h, w, *yb.shape[-2:])
        with no_grad():
            y_hat = resize(yb, (h, w), self.method)
            zb = np.zeros_like(y_hat) if z is None else self._batch(z)[0]
            lf, hf = self.backbone.inverse(y_hat, zb, encode(h, w, real, dtype=self.dtype))
            out = lf.data + hf.data
        return out[0] if squeeze else out

    def round_trip(self, x: np.ndarray, scale: ScalePair) -> tuple[np.ndarray, np.ndarray]:
        y_lr, _, _ = self.downscale(x, scale)
        return self.upscale(y_lr, tuple(np.shape(x)[-2:])), y_lr


def bicubic_round_trip(x: np.ndarray, scale: ScalePair) -> np.ndarray:
    """Baseline: bicubic downscale followed by bicubic upscale to the original size."""
    h, w = x.shape[-2:]
    lr = output_size(h, w, scale, "down")
    return resize(resize(x, lr, ResampleMethod.BICUBIC), (h, w), ResampleMethod.BICUBIC)


def load_model(path) -> RescalingModel:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return RescalingModel.load(path)
