"""Minimal N-d tensor with reverse-mode automatic differentiation.

Only the operations needed by the rescaling network are provided: 3x3 dilated
convolution, channel concatenation, separable resampling along one axis,
a handful of elementwise functions and the reductions used by the losses.
Every op records a closure that maps the output gradient to input gradients;
``Tensor.backward`` walks the recorded graph in reverse topological order.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32
LEAKY_SLOPE = 0.2


_grad_enabled = True
_kink_log: Optional[list] = None


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference)."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextlib.contextmanager
def record_kinks():
    """Collect the branch masks of piecewise ops (leaky ReLU, abs) evaluated inside the block."""
    global _kink_log
    prev, _kink_log = _kink_log, []
    try:
        yield _kink_log
    finally:
        _kink_log = prev


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible.

    ``dim`` names the offending dimension so callers can report it.
    """

    def __init__(self, message: str, dim: Optional[str] = None):
        super().__init__(message)
        self.dim = dim


class GraphError(RuntimeError):
    pass


class Tensor:
    """Array value plus optional gradient tracking.

    Args:
        data: anything ``np.asarray`` accepts.
        requires_grad: mark as a trainable leaf.
        dtype: storage dtype; float32 unless asked otherwise.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op", "_freed")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype or DEFAULT_DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None
        self._op = ""
        self._freed = False

    # -- construction helpers -------------------------------------------------

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], backward, op: str) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out._op = op
        out._freed = False
        out.requires_grad = _grad_enabled and any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None and not self._freed

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # -- operators --------------------------------------------------------------

    def __add__(self, other):
        return elementwise("add", self, other)

    def __radd__(self, other):
        return elementwise("add", self, other)

    def __sub__(self, other):
        return elementwise("sub", self, other)

    def __rsub__(self, other):
        return elementwise("sub", _as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return elementwise("mul", self, other)

    def __rmul__(self, other):
        return elementwise("mul", self, other)

    def __neg__(self):
        return elementwise("neg", self)

    def exp(self):
        return elementwise("exp", self)

    def sigmoid(self):
        return elementwise("sigmoid", self)

    def leaky_relu(self, slope: float = LEAKY_SLOPE):
        return elementwise("leaky_relu", self, slope=slope)

    def abs(self):
        return elementwise("abs", self)

    def square(self):
        return elementwise("square", self)

    def sum(self):
        return reduce_sum(self)

    def mean(self):
        return reduce_mean(self)

    # -- autodiff ---------------------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every tracked leaf.

        The graph is released afterwards; a second call raises ``GraphError``.
        """
        if self.data.size != 1:
            raise GraphError(f"backward() needs a scalar, got shape {self.shape}")
        if self._freed:
            raise GraphError("graph already consumed by a previous backward()")
        if not self.requires_grad:
            raise GraphError("tensor does not require grad")

        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if node._backward is None:
                if g is not None and node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            if g is not None:
                parent_grads = node._backward(g)
                for parent, pg in zip(node._parents, parent_grads):
                    if pg is None or not parent.requires_grad:
                        continue
                    key = id(parent)
                    if key in grads:
                        grads[key] = grads[key] + pg
                    else:
                        grads[key] = pg
            node._backward = None
            node._parents = ()
            node._freed = True


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def _as_tensor(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


# -- elementwise -------------------------------------------------------------------

_UNARY = {"neg", "exp", "sigmoid", "leaky_relu", "abs", "square"}
_BINARY = {"add", "sub", "mul"}


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def elementwise(op_kind: str, a, b=None, *, slope: float = LEAKY_SLOPE) -> Tensor:
    """Apply an elementwise op.

    Binary ops accept equal shapes or a scalar (size-1) operand on either
    side; anything else is a ``ShapeError``.
    """
    if op_kind in _UNARY:
        if b is not None:
            raise TypeError(f"{op_kind} is unary")
        return _unary(op_kind, _as_tensor(a, None), slope)
    if op_kind not in _BINARY:
        raise ValueError(f"unknown elementwise op {op_kind!r}")
    if b is None:
        raise TypeError(f"{op_kind} needs two operands")
    a = _as_tensor(a, b.dtype if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a.dtype)
    if a.shape != b.shape and a.data.size != 1 and b.data.size != 1:
        dim = next(
            (str(i) for i, (p, q) in enumerate(zip(a.shape, b.shape)) if p != q),
            "rank",
        )
        raise ShapeError(f"{op_kind}: shapes {a.shape} and {b.shape} differ at dim {dim}", dim=dim)
    return _binary(op_kind, a, b)


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.asarray(g.sum(), dtype=g.dtype).reshape(shape)


def _binary(op_kind: str, a: Tensor, b: Tensor) -> Tensor:
    x, y = a.data, b.data
    if op_kind == "add":
        out = x + y

        def back(g):
            return _reduce_to(g, x.shape), _reduce_to(g, y.shape)

    elif op_kind == "sub":
        out = x - y

        def back(g):
            return _reduce_to(g, x.shape), _reduce_to(-g, y.shape)

    else:
        out = x * y

        def back(g):
            return _reduce_to(g * y, x.shape), _reduce_to(g * x, y.shape)

    return Tensor._from_op(out, (a, b), back, op_kind)


def _unary(op_kind: str, a: Tensor, slope: float) -> Tensor:
    x = a.data
    if _kink_log is not None and op_kind in ("leaky_relu", "abs"):
        _kink_log.append(x < 0)
    if op_kind == "neg":
        out = -x

        def back(g):
            return (-g,)

    elif op_kind == "exp":
        out = np.exp(x)

        def back(g):
            return (g * out,)

    elif op_kind == "sigmoid":
        out = _sigmoid(x)

        def back(g):
            return (g * out * (1 - out),)

    elif op_kind == "leaky_relu":
        neg = x < 0
        out = np.where(neg, x * x.dtype.type(slope), x)

        def back(g):
            return (np.where(neg, g * g.dtype.type(slope), g),)

    elif op_kind == "abs":
        out = np.abs(x)

        def back(g):
            return (g * np.sign(x),)

    else:
        out = x * x

        def back(g):
            return (2 * g * x,)

    return Tensor._from_op(out, (a,), back, op_kind)


# -- reductions ----------------------------------------------------------------------


def reduce_sum(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum(), dtype=a.dtype)

    def back(g):
        return (np.broadcast_to(g, a.shape).astype(a.dtype),)

    return Tensor._from_op(out, (a,), back, "sum")


def reduce_mean(a: Tensor) -> Tensor:
    n = a.data.size
    out = np.asarray(a.data.mean(), dtype=a.dtype)

    def back(g):
        return (np.full(a.shape, g / n, dtype=a.dtype),)

    return Tensor._from_op(out, (a,), back, "mean")


# -- structural ops -----------------------------------------------------------------


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    """Concatenate along ``axis`` (the channel axis by default)."""
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat of nothing")
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != ax):
            raise ShapeError(f"concat: {t.shape} incompatible with {ref} along axis {axis}", dim="spatial")
    out = np.concatenate([t.data for t in tensors], axis=ax)
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def back(g):
        index = [slice(None)] * g.ndim
        parts = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            index[ax] = slice(lo, hi)
            parts.append(g[tuple(index)])
        return parts

    return Tensor._from_op(out, tensors, back, "concat")


def resample_axis(x: Tensor, index: np.ndarray, weight: np.ndarray, axis: int) -> Tensor:
    """Linear resampling along one axis from precomputed taps.

    ``out[..., j, ...] = sum_k weight[j, k] * x[..., index[j, k], ...]``;
    taps are summed in k order so a single unit tap is pure selection.
    """
    ax = axis % x.ndim
    n_in = x.shape[ax]
    if index.shape != weight.shape or index.ndim != 2:
        raise ShapeError("index/weight must both be [out, taps]", dim="taps")
    if index.size and (index.min() < 0 or index.max() >= n_in):
        raise ShapeError(f"tap index out of range for extent {n_in}", dim=str(ax))
    w = weight.astype(x.dtype)
    out = apply_taps(x.data, index, w, ax)

    def back(g):
        dense = np.zeros((index.shape[0], n_in), dtype=g.dtype)
        rows = np.repeat(np.arange(index.shape[0]), index.shape[1])
        np.add.at(dense, (rows, index.ravel()), w.ravel())
        moved = np.moveaxis(g, ax, -1)
        return (np.moveaxis(moved @ dense, -1, ax),)

    return Tensor._from_op(out, (x,), back, "resample")


def apply_taps(data: np.ndarray, index: np.ndarray, weight: np.ndarray, ax: int) -> np.ndarray:
    shape = [1] * data.ndim
    shape[ax] = index.shape[0]
    out = None
    for k in range(index.shape[1]):
        term = np.take(data, index[:, k], axis=ax) * weight[:, k].reshape(shape)
        out = term if out is None else out + term
    return out


# -- convolution -------------------------------------------------------------------


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    dilation: int = 1
    kernel: int = 3

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")
        if self.dilation < 1:
            raise ValueError("dilation must be >= 1")
        if self.kernel != 3:
            raise ValueError("only 3x3 kernels are supported")

    @property
    def padding(self) -> int:
        return self.dilation

    @property
    def weight_shape(self) -> tuple:
        return (self.out_channels, self.in_channels, 3, 3)

    @property
    def param_count(self) -> int:
        return self.out_channels * self.in_channels * 9 + self.out_channels


def _im2col(xp: np.ndarray, h: int, w: int, d: int) -> np.ndarray:
    """[N, C, H+2d, W+2d] -> [C*9, N*H*W] with rows ordered (c, ky, kx)."""
    n, c = xp.shape[:2]
    cols = np.empty((c, 3, 3, n, h, w), dtype=xp.dtype)
    xt = xp.transpose(1, 0, 2, 3)
    for ky in range(3):
        for kx in range(3):
            cols[:, ky, kx] = xt[:, :, ky * d : ky * d + h, kx * d : kx * d + w]
    return cols.reshape(c * 9, n * h * w)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, dilation: int = 1, spec: Optional[ConvSpec] = None) -> Tensor:
    """Zero-padded 3x3 convolution that preserves H x W.

    ``x`` is [N, C, H, W], ``weight`` [C', C, 3, 3], ``bias`` [C'].
    """
    if spec is not None:
        dilation = spec.dilation
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be [N,C,H,W], got {x.shape}", dim="rank")
    n, c, h, w = x.shape
    if weight.ndim != 4 or weight.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d weight must be [C',C,3,3], got {weight.shape}", dim="kernel")
    if weight.shape[1] != c:
        raise ShapeError(f"conv2d: input has {c} channels, weight expects {weight.shape[1]}", dim="in_channels")
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"conv2d: bias {bias.shape} vs out_channels {weight.shape[0]}", dim="out_channels")
    if spec is not None and spec.weight_shape != weight.shape:
        raise ShapeError(f"conv2d: weight {weight.shape} does not match {spec}", dim="out_channels")
    d = dilation
    o = weight.shape[0]
    xp = np.pad(x.data, ((0, 0), (0, 0), (d, d), (d, d)))
    w2 = weight.data.reshape(o, c * 9)
    out = w2 @ _im2col(xp, h, w, d)
    out += bias.data[:, None]
    out = out.reshape(o, n, h, w).transpose(1, 0, 2, 3)

    def back(g):
        g2 = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(o, n * h * w)
        gx = gw = gb = None
        if bias.requires_grad:
            gb = g2.sum(axis=1)
        if weight.requires_grad:
            gw = (g2 @ _im2col(xp, h, w, d).T).reshape(weight.shape)
        if x.requires_grad:
            dcols = (w2.T @ g2).reshape(c, 3, 3, n, h, w)
            gxp = np.zeros((c, n) + xp.shape[2:], dtype=xp.dtype)
            for ky in range(3):
                for kx in range(3):
                    gxp[:, :, ky * d : ky * d + h, kx * d : kx * d + w] += dcols[:, ky, kx]
            gx = gxp[:, :, d : d + h, d : d + w].transpose(1, 0, 2, 3)
        return gx, gw, gb

    return Tensor._from_op(out, (x, weight, bias), back, "conv2d")


def conv2d_reference(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, dilation: int = 1) -> np.ndarray:
    """Naive nested-loop convolution, channel-major then ky, kx summation."""
    n, c, h, w = x.shape
    o = weight.shape[0]
    d = dilation
    xp = np.pad(x, ((0, 0), (0, 0), (d, d), (d, d)))
    out = np.zeros((n, o, h, w), dtype=x.dtype)
    for b in range(n):
        for oc in range(o):
            for y in range(h):
                for xx in range(w):
                    acc = x.dtype.type(bias[oc])
                    for ic in range(c):
                        for ky in range(3):
                            for kx in range(3):
                                acc += weight[oc, ic, ky, kx] * xp[b, ic, y + ky * d, xx + kx * d]
                    out[b, oc, y, xx] = acc
    return out


def parameters_grad_norm(params: Iterable[Tensor]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    return float(np.sqrt(total))
