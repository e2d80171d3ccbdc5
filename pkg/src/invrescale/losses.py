"""Training objective terms and image-quality metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor


@dataclass
class LossWeights:
    recon: float = 1.0  # L_r
    guide: float = 16.0  # L_g
    latent: float = 0.0  # L_d
    invert: float = 2.0  # L_i

    def __post_init__(self):
        for k, v in vars(self).items():
            if v < 0:
                raise ValueError(f"loss weight {k} must be non-negative")


@dataclass
class LossReport:
    total: float
    l_r: float
    l_g: float
    l_d: float
    l_i: float

    def as_tuple(self) -> tuple[float, ...]:
        return (self.total, self.l_r, self.l_g, self.l_d, self.l_i)


def _same_shape(a: Tensor, b, what: str) -> None:
    shape_b = b.shape
    if a.shape != shape_b:
        raise ShapeError(f"{what}: shapes {a.shape} and {shape_b} differ", dim="shape")


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=like.dtype if like is not None else None)


def loss_r(x_hat, x) -> Tensor:
    """Mean absolute reconstruction error."""
    x_hat = _as_tensor(x_hat)
    x = _as_tensor(x, x_hat)
    _same_shape(x_hat, x, "loss_r")
    return (x_hat - x).abs().mean()


def loss_g(y_lr, y_ref) -> Tensor:
    """Mean squared error of the generated LR image against its bicubic reference."""
    y_lr = _as_tensor(y_lr)
    y_ref = _as_tensor(y_ref, y_lr)
    _same_shape(y_lr, y_ref, "loss_g")
    return (y_lr - y_ref).square().mean()


def loss_d(z) -> Tensor:
    """Mean squared magnitude of the latent branch (distance to a zero latent)."""
    return _as_tensor(z).square().mean()


def loss_i(y_hat_hr, y_hr) -> Tensor:
    """Mean squared gap between ``u(d(y_H))`` and ``y_H``."""
    y_hat_hr = _as_tensor(y_hat_hr)
    y_hr = _as_tensor(y_hr, y_hat_hr)
    _same_shape(y_hat_hr, y_hr, "loss_i")
    return (y_hat_hr - y_hr).square().mean()


def combine(weights: LossWeights, l_r: Tensor, l_g: Tensor, l_d: Tensor, l_i: Tensor) -> tuple[Tensor, LossReport]:
    """Weighted total plus a float report of every term."""
    total = l_r * weights.recon + l_g * weights.guide + l_d * weights.latent + l_i * weights.invert
    report = LossReport(total.item(), l_r.item(), l_g.item(), l_d.item(), l_i.item())
    return total, report


# -- metrics ---------------------------------------------------------------------------

_BT601 = np.array([65.481, 128.553, 24.966])


def luminance(img: np.ndarray) -> np.ndarray:
    """BT.601 luma of a [3, H, W] image in [0, 1], returned in [0, 1] (16..235 range)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.shape[0] == 1:
        return img[0]
    if img.shape[0] != 3:
        raise ValueError(f"expected 1 or 3 channels, got {img.shape[0]}")
    return (np.tensordot(_BT601, img, axes=(0, 0)) + 16.0) / 255.0


def _data(img) -> np.ndarray:
    return np.asarray(getattr(img, "data", img), dtype=np.float64)


def psnr(a, b, mode: str = "y_channel") -> float:
    """PSNR in dB of two [C, H, W] images in [0, 1]; ``inf`` when identical."""
    a, b = _data(a), _data(b)
    if a.shape != b.shape:
        raise ValueError(f"psnr: shapes {a.shape} and {b.shape} differ")
    if mode in ("y", "y_channel"):
        a, b = luminance(a), luminance(b)
    elif mode != "rgb":
        raise ValueError(f"unknown psnr mode {mode!r}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return -10.0 * math.log10(mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(ax**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a, b, window: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03) -> float:
    """Single-scale SSIM on luminance, mean over all fully-contained windows."""
    ya, yb = luminance(_data(a)), luminance(_data(b))
    if ya.shape != yb.shape:
        raise ValueError(f"ssim: shapes {ya.shape} and {yb.shape} differ")
    if min(ya.shape) < window:
        raise ValueError(f"ssim needs images of at least {window}x{window}, got {ya.shape}")
    w = gaussian_window(window, sigma)
    c1, c2 = k1**2, k2**2

    def filt(x):
        return np.einsum("ijkl,kl->ij", sliding_window_view(x, (window, window)), w)

    mu_a, mu_b = filt(ya), filt(yb)
    var_a = filt(ya * ya) - mu_a**2
    var_b = filt(yb * yb) - mu_b**2
    cov = filt(ya * yb) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
