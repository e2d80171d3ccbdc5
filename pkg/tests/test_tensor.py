import numpy as np
import pytest

from invrescale.gradcheck import check_gradients
from invrescale.tensor import (
    ConvSpec,
    GraphError,
    ShapeError,
    Tensor,
    concat,
    conv2d,
    conv2d_reference,
    elementwise,
    record_kinks,
    resample_axis,
)
from invrescale.resample import axis_taps


def _t(rng, shape, dtype=np.float32, grad=True):
    return Tensor(rng.standard_normal(shape), requires_grad=grad, dtype=dtype)


# -- conv2d -------------------------------------------------------------------------


def test_conv_constant_input_all_ones_kernel():
    x = Tensor(np.full((1, 1, 3, 3), 2.0))
    w = Tensor(np.ones((1, 1, 3, 3)))
    out = conv2d(x, w, Tensor(np.zeros(1)), dilation=1)
    assert out.data[0, 0, 1, 1] == 18.0
    # the oracle agrees everywhere, including zero-padded borders
    np.testing.assert_array_equal(out.data, conv2d_reference(x.data, w.data, np.zeros(1, np.float32)))


def test_conv_identity_kernel():
    rng = np.random.default_rng(1)
    x = _t(rng, (2, 3, 7, 5), grad=False)
    w = np.zeros((3, 3, 3, 3), np.float32)
    for c in range(3):
        w[c, c, 1, 1] = 1.0
    out = conv2d(x, Tensor(w), Tensor(np.zeros(3)), dilation=2)
    np.testing.assert_array_equal(out.data, x.data)


def test_conv_dilation_two_taps():
    x = np.arange(25, dtype=np.float32).reshape(1, 1, 5, 5)
    w = np.arange(9, dtype=np.float32).reshape(1, 1, 3, 3)
    out = conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(1)), dilation=2).data
    ref = conv2d_reference(x, w, np.zeros(1, np.float32), dilation=2)
    # centre pixel only sees offsets -2, 0, +2
    expected = sum(w[0, 0, ky, kx] * x[0, 0, 2 + 2 * (ky - 1), 2 + 2 * (kx - 1)] for ky in range(3) for kx in range(3))
    assert out[0, 0, 2, 2] == expected
    np.testing.assert_allclose(out, ref, atol=1e-5)


@pytest.mark.parametrize("dilation", [1, 2, 3, 4])
def test_conv_matches_reference(dilation):
    rng = np.random.default_rng(dilation)
    x = rng.standard_normal((2, 3, 6, 7)).astype(np.float32)
    w = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
    b = rng.standard_normal(4).astype(np.float32)
    out = conv2d(Tensor(x), Tensor(w), Tensor(b), dilation=dilation).data
    np.testing.assert_allclose(out, conv2d_reference(x, w, b, dilation), atol=1e-5)


def test_conv_shape_errors_name_dimension():
    x = Tensor(np.zeros((1, 3, 4, 4)))
    with pytest.raises(ShapeError) as exc:
        conv2d(x, Tensor(np.zeros((2, 4, 3, 3))), Tensor(np.zeros(2)))
    assert exc.value.dim == "in_channels"
    with pytest.raises(ShapeError) as exc:
        conv2d(x, Tensor(np.zeros((2, 3, 3, 3))), Tensor(np.zeros(3)))
    assert exc.value.dim == "out_channels"
    with pytest.raises(ShapeError) as exc:
        conv2d(Tensor(np.zeros((3, 4, 4))), Tensor(np.zeros((2, 3, 3, 3))), Tensor(np.zeros(2)))
    assert exc.value.dim == "rank"


def test_conv_spec():
    spec = ConvSpec(7, 16, dilation=3)
    assert spec.padding == 3
    assert spec.param_count == 16 * 7 * 9 + 16 == 1024
    with pytest.raises(ValueError):
        ConvSpec(3, 3, kernel=5)
    with pytest.raises(ValueError):
        ConvSpec(3, 3, dilation=0)


def test_conv_is_deterministic():
    rng = np.random.default_rng(7)
    x, w, b = _t(rng, (2, 5, 9, 9)), _t(rng, (6, 5, 3, 3)), _t(rng, (6,))
    a = conv2d(x, w, b, dilation=3).data
    assert np.array_equal(a, conv2d(x, w, b, dilation=3).data)


# -- elementwise ----------------------------------------------------------------------


def test_additive_inverse():
    x = Tensor([1.5, -2.0, 3.25])
    assert np.array_equal(elementwise("add", x, -x).data, np.zeros(3))


def test_sigmoid_and_leaky_relu_values():
    assert elementwise("sigmoid", Tensor(0.0)).item() == 0.5
    assert elementwise("leaky_relu", Tensor(-1.0)).item() == pytest.approx(-0.2)
    assert Tensor(3.0).leaky_relu().item() == 3.0
    big = Tensor([-1000.0, 1000.0]).sigmoid().data
    assert np.all(np.isfinite(big)) and big[0] == 0.0 and big[1] == 1.0


def test_binary_shape_mismatch():
    with pytest.raises(ShapeError):
        Tensor(np.zeros((2, 3))) + Tensor(np.zeros((3, 2)))
    # scalar broadcast is allowed
    out = Tensor(np.ones((2, 3))) * 2.0
    assert np.array_equal(out.data, np.full((2, 3), 2.0))


def test_unknown_op():
    with pytest.raises(ValueError):
        elementwise("tanh", Tensor(1.0))


# -- backward ----------------------------------------------------------------------------


def test_backward_square_sum():
    x = Tensor([1.0, 2.0], requires_grad=True)
    (x * x).sum().backward()
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])


def test_constant_leaf_gets_no_grad():
    x = Tensor([1.0, 2.0], requires_grad=True)
    c = Tensor([3.0, 4.0])
    (x * c).sum().backward()
    assert c.grad is None
    np.testing.assert_array_equal(x.grad, [3.0, 4.0])


def test_backward_errors():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(GraphError):
        (x * 2.0).backward()
    loss = (x * x).sum()
    loss.backward()
    with pytest.raises(GraphError):
        loss.backward()


def test_gradients_accumulate_over_shared_use():
    x = Tensor([1.0, -2.0], requires_grad=True)
    y = x * 3.0
    (y + y + x).sum().backward()
    np.testing.assert_array_equal(x.grad, [7.0, 7.0])
    (x * 1.0).sum().backward()
    np.testing.assert_array_equal(x.grad, [8.0, 8.0])


def test_conv_weight_grad_finite_differences():
    rng = np.random.default_rng(3)
    x = _t(rng, (1, 2, 5, 5), grad=False)
    w, b = _t(rng, (3, 2, 3, 3)), _t(rng, (3,))
    res = check_gradients(lambda w_, b_: conv2d(x, w_, b_, dilation=1), [w, b])
    assert res.passes(1e-3, frac=0.95, max_tol=1e-2)


def _positive(rng, shape, dtype):
    return Tensor(rng.uniform(0.5, 1.5, shape) * rng.choice([-1, 1], shape), requires_grad=True, dtype=dtype)


UNARY = ["neg", "exp", "sigmoid", "leaky_relu", "abs", "square"]
BINARY = ["add", "sub", "mul"]


def _cases(rng, dtype):
    taps = axis_taps(6, 9, "bicubic")
    cases = {}
    for op in UNARY:
        cases[op] = (lambda a, op=op: elementwise(op, a), [_positive(rng, (3, 4), dtype)])
    for op in BINARY:
        cases[op] = (lambda a, b, op=op: elementwise(op, a, b), [_t(rng, (3, 4), dtype), _t(rng, (3, 4), dtype)])
    cases["scalar_mul"] = (lambda a, b: a * b, [_t(rng, (3, 4), dtype), _t(rng, (), dtype)])
    cases["sum"] = (lambda a: a.sum(), [_t(rng, (3, 4), dtype)])
    cases["mean"] = (lambda a: a.mean(), [_t(rng, (3, 4), dtype)])
    cases["concat"] = (lambda a, b: concat([a, b], axis=1), [_t(rng, (2, 2, 3), dtype), _t(rng, (2, 3, 3), dtype)])
    cases["resample"] = (lambda a: resample_axis(a, taps.index, taps.weight, axis=-1), [_t(rng, (2, 3, 6), dtype)])
    for d in (1, 2):
        cases[f"conv_d{d}"] = (
            lambda x, w, b, d=d: conv2d(x, w, b, dilation=d),
            [_t(rng, (2, 2, 5, 4), dtype), _t(rng, (3, 2, 3, 3), dtype), _t(rng, (3,), dtype)],
        )
    return cases


CASE_NAMES = list(_cases(np.random.default_rng(0), np.float32))


@pytest.mark.parametrize("name", CASE_NAMES)
def test_gradcheck_float32(name):
    fn, inputs = _cases(np.random.default_rng(11), np.float32)[name]
    res = check_gradients(fn, inputs, eps=1e-3)
    assert res.passes(1e-3, frac=0.95, max_tol=1e-2), (name, res.max_err)


@pytest.mark.parametrize("name", CASE_NAMES)
def test_gradcheck_float64(name):
    fn, inputs = _cases(np.random.default_rng(11), np.float64)[name]
    res = check_gradients(fn, inputs, eps=1e-6)
    assert res.max_err <= 1e-5, (name, res.max_err)
    for t in inputs:
        assert t.dtype == np.float64


def test_record_kinks_collects_branch_masks():
    x = Tensor(np.array([-1.0, 2.0]))
    with record_kinks() as log:
        x.leaky_relu()
        x.abs()
        x.exp()
    assert len(log) == 2
    assert log[0].tolist() == [True, False]


def test_gradcheck_skips_coordinates_straddling_a_kink():
    a = Tensor(np.array([5e-4, 1.0, -2.0]), requires_grad=True, dtype=np.float64)
    plain = check_gradients(lambda t: t.abs(), [a], eps=1e-3)
    assert plain.max_err > 0.1  # the difference quotient at 5e-4 is not |x|'
    res = check_gradients(lambda t: t.abs(), [a], eps=1e-3, skip_kinks=True)
    assert res.skipped == 1 and res.rel_err.size == 2
    assert res.max_err < 1e-9
