import math

import numpy as np
import pytest

from invrescale.losses import (
    LossWeights,
    combine,
    gaussian_window,
    loss_d,
    loss_g,
    loss_i,
    loss_r,
    luminance,
    psnr,
    ssim,
)
from invrescale.resample import ScalePair, output_size, resize
from invrescale.tensor import ShapeError, Tensor


def test_term_values():
    x = np.random.default_rng(0).random((3, 8, 8)).astype(np.float32)
    assert loss_r(x, x).item() == 0.0
    assert loss_r(x + 0.1, x).item() == pytest.approx(0.1, abs=1e-6)
    assert loss_g(x + 0.1, x).item() == pytest.approx(0.01, abs=1e-6)
    assert loss_d(np.zeros((3, 4, 4))).item() == 0.0
    assert loss_d(np.full((3, 4, 4), 0.5)).item() == 0.25
    assert loss_i(x + 0.2, x).item() == pytest.approx(0.04, abs=1e-6)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        loss_g(np.zeros((3, 4, 4)), np.zeros((3, 5, 5)))


def test_loss_i_zero_on_rescaling_invertible():
    x = np.random.default_rng(1).random((3, 20, 20)).astype(np.float32)
    s = ScalePair.symmetric(2.5)
    lr = output_size(20, 20, s, "down")
    y = resize(resize(x, lr, "nearest"), (20, 20), "nearest")
    y_hat = resize(resize(y, lr, "nearest"), (20, 20), "nearest")
    assert loss_i(y_hat, y).item() == 0.0


def test_combine_is_weighted_sum():
    rng = np.random.default_rng(2)
    terms = [Tensor(rng.random((3, 4, 4))).abs().mean() for _ in range(4)]
    w = LossWeights()
    total, rep = combine(w, *terms)
    expected = rep.l_r + 16 * rep.l_g + 0 * rep.l_d + 2 * rep.l_i
    assert abs(rep.total - expected) <= 1e-6
    assert total.item() == rep.total
    with pytest.raises(ValueError):
        LossWeights(guide=-1.0)


def test_combine_gradients_flow_to_weighted_terms():
    a = Tensor(np.ones(3), requires_grad=True)
    total, _ = combine(LossWeights(), a.mean(), a.mean(), a.mean(), a.mean())
    total.backward()
    np.testing.assert_allclose(a.grad, np.full(3, (1 + 16 + 0 + 2) / 3), rtol=1e-6)


def test_psnr_values():
    a = np.random.default_rng(3).uniform(0.2, 0.7, (3, 16, 16))
    assert psnr(a, a) == math.inf
    assert abs(psnr(a + 0.1, a, "rgb") - 20.0) <= 1e-4
    assert abs(psnr(a + 0.01, a, "rgb") - 40.0) <= 1e-4
    b = np.random.default_rng(4).random((3, 16, 16))
    assert psnr(a, b) == psnr(b, a)
    with pytest.raises(ValueError):
        psnr(a, b, "lab")


def test_luminance_range():
    assert luminance(np.zeros((3, 1, 1)))[0, 0] == pytest.approx(16 / 255)
    assert luminance(np.ones((3, 1, 1)))[0, 0] == pytest.approx(235 / 255)


def naive_ssim(a, b, size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Loop over every valid window position and evaluate the SSIM formula directly."""
    ya, yb = luminance(a), luminance(b)
    w = gaussian_window(size, sigma)
    c1, c2 = k1**2, k2**2
    vals = []
    for i in range(ya.shape[0] - size + 1):
        for j in range(ya.shape[1] - size + 1):
            pa = ya[i : i + size, j : j + size]
            pb = yb[i : i + size, j : j + size]
            ma, mb = np.sum(w * pa), np.sum(w * pb)
            va = np.sum(w * (pa - ma) ** 2)
            vb = np.sum(w * (pb - mb) ** 2)
            cv = np.sum(w * (pa - ma) * (pb - mb))
            vals.append((2 * ma * mb + c1) * (2 * cv + c2) / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def test_ssim_identical():
    a = np.random.default_rng(5).random((3, 20, 20))
    assert ssim(a, a) == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_ssim_matches_naive(seed):
    rng = np.random.default_rng(seed)
    a = rng.random((3, 18, 21))
    b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
    assert abs(ssim(a, b) - naive_ssim(a, b)) <= 1e-6
    assert abs(ssim(a, b) - ssim(b, a)) <= 1e-9


def test_ssim_binary_inverse_is_negative():
    a = (np.random.default_rng(6).random((1, 16, 16)) > 0.5).astype(np.float64)
    a = np.repeat(a, 3, axis=0)
    val = ssim(a, 1 - a)
    assert val < 0
    assert abs(val - naive_ssim(a, 1 - a)) <= 1e-6


def test_ssim_constant_offset():
    a = np.full((3, 16, 16), 0.4)
    assert abs(ssim(a, a + 0.1) - naive_ssim(a, a + 0.1)) <= 1e-6


def test_ssim_too_small():
    with pytest.raises(ValueError):
        ssim(np.zeros((3, 8, 8)), np.zeros((3, 8, 8)))
