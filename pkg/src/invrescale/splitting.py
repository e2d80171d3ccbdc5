"""Preemptive channel splitting into a rescaling-invertible base and a residual."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .resample import ResampleMethod, ScalePair, output_size, resize


@dataclass
class SplitPair:
    lf: np.ndarray
    hf: np.ndarray
    scale: ScalePair
    method: ResampleMethod


def lr_size(h: int, w: int, scale: ScalePair) -> tuple[int, int]:
    lh, lw = output_size(h, w, scale, "down")
    if lh < 1 or lw < 1:
        raise ValueError(f"{h}x{w} collapses to nothing at scale {scale}")
    return lh, lw


def round_trip(x: np.ndarray, scale: ScalePair, method) -> np.ndarray:
    """``u(d(x))``: downscale by ``scale`` and back up to the original size."""
    h, w = x.shape[-2:]
    return resize(resize(x, lr_size(h, w, scale), method), (h, w), method)


def split(x: np.ndarray, scale: ScalePair, method=ResampleMethod.NEAREST, enabled: bool = True) -> SplitPair:
    """Split ``x`` (..., H, W) into ``lf = u(d(x))`` and ``hf = x - lf``.

    With ``enabled=False`` the whole image goes to ``lf`` and ``hf`` is zero.
    """
    method = ResampleMethod.parse(method)
    if not enabled:
        return SplitPair(x.copy(), np.zeros_like(x), scale, method)
    lf = round_trip(x, scale, method)
    if lf is x:
        lf = x.copy()
    return SplitPair(lf, x - lf, scale, method)


def merge(pair: SplitPair) -> np.ndarray:
    if pair.lf.shape != pair.hf.shape:
        raise ValueError(f"lf {pair.lf.shape} and hf {pair.hf.shape} differ")
    return pair.lf + pair.hf
