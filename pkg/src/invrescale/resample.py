"""Arbitrary-scale, asymmetric image resampling.

All three kernels share one coordinate convention: output pixel ``j`` maps to
source coordinate ``(j + 0.5) * in_len / out_len - 0.5`` and out-of-range taps
are clamped to the edge. Resampling is separable; each axis is described by a
``Taps`` table so the same numbers drive both the plain-array path and the
differentiable ``Tensor`` path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Union

import numpy as np

from .tensor import Tensor, apply_taps, resample_axis

BICUBIC_A = -0.5


class ResampleMethod(str, Enum):
    NEAREST = "nearest"
    BILINEAR = "bilinear"
    BICUBIC = "bicubic"

    @classmethod
    def parse(cls, value: Union[str, "ResampleMethod"]) -> "ResampleMethod":
        if isinstance(value, cls):
            return value
        aliases = {"nn": "nearest", "linear": "bilinear", "cubic": "bicubic"}
        key = str(value).strip().lower()
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown resample method {value!r}") from None


@dataclass(frozen=True)
class ScalePair:
    """Horizontal and vertical scale factors (HR size / LR size)."""

    s_h: float
    s_v: float

    def __post_init__(self):
        for name in ("s_h", "s_v"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v!r}")

    @classmethod
    def symmetric(cls, s: float) -> "ScalePair":
        return cls(float(s), float(s))

    @property
    def is_symmetric(self) -> bool:
        return self.s_h == self.s_v

    def __str__(self) -> str:
        if self.is_symmetric:
            return f"{self.s_h:g}"
        return f"{self.s_h:g}x{self.s_v:g}"


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def output_size(in_h: int, in_w: int, scale: ScalePair, direction: str) -> tuple[int, int]:
    """Target (height, width) for a down- or upscale by ``scale``."""
    if in_h < 1 or in_w < 1:
        raise ValueError(f"input size must be positive, got {in_h}x{in_w}")
    if direction == "down":
        return max(1, round_half_up(in_h / scale.s_v)), max(1, round_half_up(in_w / scale.s_h))
    if direction == "up":
        return max(1, round_half_up(in_h * scale.s_v)), max(1, round_half_up(in_w * scale.s_h))
    raise ValueError(f"direction must be 'down' or 'up', got {direction!r}")


def realized_scale(hr_h: int, hr_w: int, lr_h: int, lr_w: int) -> ScalePair:
    """Scale actually applied once sizes have been rounded to integers."""
    return ScalePair(hr_w / lr_w, hr_h / lr_h)


def bicubic_kernel(t: float, a: float = BICUBIC_A) -> float:
    t = abs(t)
    if t <= 1:
        return (a + 2) * t**3 - (a + 3) * t**2 + 1
    if t < 2:
        return a * t**3 - 5 * a * t**2 + 8 * a * t - 4 * a
    return 0.0


def _bicubic_weights(f: np.ndarray, a: float = BICUBIC_A) -> np.ndarray:
    # taps at offsets -1, 0, 1, 2 from floor(src); f = frac(src)
    t = np.stack([1 + f, f, 1 - f, 2 - f], axis=1)
    near = (a + 2) * t**3 - (a + 3) * t**2 + 1
    far = a * t**3 - 5 * a * t**2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


@dataclass(frozen=True)
class Taps:
    index: np.ndarray  # [out_len, k] int64
    weight: np.ndarray  # [out_len, k] float64

    @property
    def out_len(self) -> int:
        return self.index.shape[0]


@lru_cache(maxsize=512)
def axis_taps(in_len: int, out_len: int, method: ResampleMethod) -> Taps:
    if in_len < 1 or out_len < 1:
        raise ValueError(f"zero-size resample {in_len} -> {out_len}")
    method = ResampleMethod.parse(method)
    src = (np.arange(out_len, dtype=np.float64) + 0.5) * (in_len / out_len) - 0.5
    if method is ResampleMethod.NEAREST:
        idx = np.floor(src + 0.5).astype(np.int64)[:, None]
        w = np.ones_like(idx, dtype=np.float64)
    else:
        base = np.floor(src)
        f = src - base
        base = base.astype(np.int64)
        if method is ResampleMethod.BILINEAR:
            idx = np.stack([base, base + 1], axis=1)
            w = np.stack([1 - f, f], axis=1)
        else:
            idx = np.stack([base - 1, base, base + 1, base + 2], axis=1)
            w = _bicubic_weights(f)
    idx = np.clip(idx, 0, in_len - 1)
    idx.setflags(write=False)
    w.setflags(write=False)
    return Taps(idx, w)


Array = Union[np.ndarray, Tensor]


def resize_axis(x: Array, out_len: int, method, axis: int) -> Array:
    """Resample one axis of ``x`` to ``out_len`` samples."""
    method = ResampleMethod.parse(method)
    in_len = x.shape[axis]
    if in_len == out_len:
        return x
    taps = axis_taps(in_len, out_len, method)
    if isinstance(x, Tensor):
        return resample_axis(x, taps.index, taps.weight, axis)
    return apply_taps(x, taps.index, taps.weight.astype(x.dtype), axis % x.ndim)


def resize(x: Array, size: tuple[int, int], method) -> Array:
    """Resize the last two axes (H, W) of an array or tensor to ``size``.

    Columns are resampled first, then rows.
    """
    out_h, out_w = size
    if out_h < 1 or out_w < 1:
        raise ValueError(f"zero-size output {size}")
    x = resize_axis(x, out_w, method, axis=-1)
    return resize_axis(x, out_h, method, axis=-2)


def resample(img, scale: ScalePair, direction: str, method, size: tuple[int, int] | None = None):
    """Down- or upscale an image by ``scale``.

    ``img`` may be an ``Image``, a plain array or a ``Tensor`` whose last two
    axes are (H, W). ``size`` overrides the size rule when given.
    """
    from .imageio import Image

    data = img.data if isinstance(img, Image) else img
    h, w = data.shape[-2:]
    target = size if size is not None else output_size(h, w, scale, direction)
    out = resize(data, target, method)
    if isinstance(img, Image):
        return Image(out, img.colorspace)
    return out
