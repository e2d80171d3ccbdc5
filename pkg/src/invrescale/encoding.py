"""Position-aware scale encoding.

Every HR pixel gets four values: the horizontal and vertical scale factors and
the distance (in HR pixel units, input pixel size 1) from the pixel to the
closest resampled-grid line at or after it along each axis. Distances are
divided by the resampled pixel size so they lie in [0, 1).
"""

from __future__ import annotations

import math

import numpy as np

from .resample import ScalePair


def axis_distances(n: int, step: float) -> np.ndarray:
    """Raw distance ``min_{k: k*step - i >= 0} (k*step - i)`` for ``i < n``.

    ``k`` starts from ``ceil(i / step)`` and is nudged so the result is the
    true minimiser under floating-point products, not just the exact-arithmetic one.
    """
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        k = math.ceil(i / step)
        while k > 0 and (k - 1) * step - i >= 0:
            k -= 1
        while k * step - i < 0:
            k += 1
        out[i] = k * step - i
    return out


def encode(h: int, w: int, scale: ScalePair, dtype=np.float32) -> np.ndarray:
    """Encoding field of shape [4, h, w]: (s_h, s_v, d_h / s_h, d_v / s_v)."""
    if h < 1 or w < 1:
        raise ValueError(f"encoding size must be positive, got {h}x{w}")
    field = np.empty((4, h, w), dtype=dtype)
    field[0] = scale.s_h
    field[1] = scale.s_v
    field[2] = (axis_distances(w, scale.s_h) / scale.s_h)[None, :]
    field[3] = (axis_distances(h, scale.s_v) / scale.s_v)[:, None]
    return field


def crop_consistency_check(field_a: np.ndarray, field_b: np.ndarray) -> bool:
    """True when ``field_b`` equals the top-left corner of the larger ``field_a``.

    Raises ``ValueError`` if the two fields encode different scales.
    """
    if field_a.shape[0] != 4 or field_b.shape[0] != 4:
        raise ValueError("expected [4, H, W] encoding fields")
    sa = (float(field_a[0, 0, 0]), float(field_a[1, 0, 0]))
    sb = (float(field_b[0, 0, 0]), float(field_b[1, 0, 0]))
    if sa != sb:
        raise ValueError(f"fields encode different scales {sa} vs {sb}")
    h, w = field_b.shape[1:]
    if h > field_a.shape[1] or w > field_a.shape[2]:
        raise ValueError("field_b must not be larger than field_a")
    return bool(np.array_equal(field_a[:, :h, :w], field_b))
