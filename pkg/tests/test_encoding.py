import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invrescale.encoding import axis_distances, crop_consistency_check, encode
from invrescale.resample import ScalePair

SCALES = [1.0, 1.1, 1.5, 2.0, 2.5, 3.3, 4.0]


def brute_force_distances(n, step):
    """Search every candidate resampled index k for the smallest non-negative k*step - i."""
    out = np.empty(n)
    for i in range(n):
        best = None
        for k in range(0, int(np.ceil(n / step)) + 2):
            d = k * step - i
            if d >= 0 and (best is None or d < best):
                best = d
        out[i] = best
    return out


def test_scale_two_column_pattern():
    np.testing.assert_array_equal(axis_distances(4, 2.0), [0, 1, 0, 1])
    field = encode(3, 4, ScalePair.symmetric(2.0))
    np.testing.assert_array_equal(field[2, 0], [0, 0.5, 0, 0.5])


def test_scale_two_and_a_half():
    np.testing.assert_allclose(axis_distances(5, 2.5), [0, 1.5, 0.5, 2, 1])


def test_unit_scale_has_zero_distances():
    field = encode(6, 5, ScalePair.symmetric(1.0))
    assert not field[2:].any()
    assert np.all(field[:2] == 1.0)


@pytest.mark.parametrize("s", SCALES)
def test_matches_brute_force(s):
    for n in (1, 7, 33, 64):
        np.testing.assert_array_equal(axis_distances(n, s), brute_force_distances(n, s))
    field = encode(64, 64, ScalePair.symmetric(s))
    expected = (brute_force_distances(64, s) / s).astype(np.float32)
    np.testing.assert_array_equal(field[2, 0], expected)
    np.testing.assert_array_equal(field[3, :, 0], expected)


@pytest.mark.parametrize("s", SCALES)
def test_field_invariants(s):
    f = encode(20, 30, ScalePair(s, s * 0.9 + 0.1))
    assert np.all(f[2:] >= 0) and np.all(f[2:] < 1)
    assert np.all(f[0] == f[0, 0, 0]) and np.all(f[1] == f[1, 0, 0])
    # d_h varies along columns only, d_v along rows only
    assert np.all(f[2] == f[2, :1]) and np.all(f[3] == f[3, :, :1])


def test_asymmetric_axis_separability():
    a, b = 2.5, 3.3
    f = encode(40, 50, ScalePair(a, b))
    np.testing.assert_array_equal(f[2], encode(40, 50, ScalePair(a, a))[2])
    np.testing.assert_array_equal(f[3], encode(40, 50, ScalePair(b, b))[3])


def test_crop_consistency_examples():
    s = ScalePair.symmetric(2.0)
    assert crop_consistency_check(encode(8, 8, s), encode(4, 4, s))
    s = ScalePair.symmetric(3.3)
    assert crop_consistency_check(encode(64, 64, s), encode(16, 16, s))
    with pytest.raises(ValueError):
        crop_consistency_check(encode(8, 8, ScalePair.symmetric(2.0)), encode(4, 4, ScalePair.symmetric(3.0)))


@settings(max_examples=50, deadline=None)
@given(
    h=st.integers(1, 64),
    w=st.integers(1, 64),
    dh=st.integers(0, 63),
    dw=st.integers(0, 63),
    s_h=st.sampled_from(SCALES),
    s_v=st.sampled_from(SCALES),
)
def test_size_independence(h, w, dh, dw, s_h, s_v):
    s = ScalePair(s_h, s_v)
    big = encode(h + dh, w + dw, s)
    assert crop_consistency_check(big, encode(h, w, s))
