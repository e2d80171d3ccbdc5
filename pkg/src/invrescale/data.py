"""Procedural test images: smooth colour fields, hard-edged shapes, stripes and texture."""

from __future__ import annotations

import numpy as np

from .resample import ResampleMethod, resize


def _smooth_field(rng: np.random.Generator, h: int, w: int, cells: int) -> np.ndarray:
    coarse = rng.random((3, cells, cells)).astype(np.float32)
    return resize(coarse, (h, w), ResampleMethod.BICUBIC)


def synthetic_image(rng: np.random.Generator, h: int = 96, w: int = 96) -> np.ndarray:
    """A [3, h, w] float32 image in [0, 1]."""
    img = 0.6 * _smooth_field(rng, h, w, 4) + 0.2
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    for _ in range(int(rng.integers(3, 7))):
        colour = rng.random(3).astype(np.float32)[:, None, None]
        kind = rng.integers(3)
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        if kind == 0:
            r = rng.uniform(0.08, 0.25) * min(h, w)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        elif kind == 1:
            hh, ww = rng.uniform(0.1, 0.4) * h, rng.uniform(0.1, 0.4) * w
            mask = (np.abs(yy - cy) <= hh / 2) & (np.abs(xx - cx) <= ww / 2)
        else:
            period = rng.uniform(3.0, 9.0)
            angle = rng.uniform(0, np.pi)
            phase = (xx * np.cos(angle) + yy * np.sin(angle)) / period
            r = rng.uniform(0.15, 0.35) * min(h, w)
            mask = ((phase % 1.0) < 0.5) & ((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r)
        img = np.where(mask[None], colour, img)
    img = img + rng.normal(0, 0.02, size=img.shape).astype(np.float32)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def synthetic_set(n: int, size: int = 96, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [synthetic_image(rng, size, size) for _ in range(n)]
