"""Reverse-mode automatic differentiation over float64 numpy arrays.

A :class:`Tensor` wraps an ndarray plus an optional tape entry (parents and
a vector-Jacobian closure). Operations record onto the implicit tape only
when gradients are enabled and some input requires them, so inference-mode
math costs a plain numpy call. ``backward()`` walks the tape in reverse
topological order, accumulates gradients into ``.grad``, and raises
:class:`NonFiniteError` naming the offending operation the moment a NaN or
inf shows up in a value or gradient.

The op set is exactly what the actor-critic stack needs; there is no
broadcasting cleverness beyond numpy's own rules plus gradient
un-broadcasting.
"""

from __future__ import annotations

import contextlib
import math
from collections.abc import Sequence

import numpy as np

from . import accel


class NonFiniteError(ArithmeticError):
    """A NaN or inf appeared in a value or gradient."""


_grad_enabled = [True]


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    _grad_enabled.append(False)
    try:
        yield
    finally:
        _grad_enabled.pop()


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "_op")

    # Defer mixed ndarray/Tensor arithmetic to our reflected operators
    # instead of numpy's ufunc machinery.
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("non-finite value in tensor constructor")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None
        self._op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return _constant(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's .grad."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        if not np.isfinite(self.data):
            raise NonFiniteError(
                f"non-finite loss value at op '{self._op}'")
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            g = node.grad
            if g is None or node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if not np.all(np.isfinite(pg)):
                    raise NonFiniteError(
                        f"non-finite gradient produced by op '{node._op}'")
                if parent.grad is None:
                    parent.grad = pg.copy() if pg is g else pg
                else:
                    parent.grad = parent.grad + pg
            if node._op != "leaf":
                node.grad = None  # free intermediate grads as we go

    # Operator sugar. Scalars and ndarrays are wrapped as constants.
    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        flags = "grad" if self.requires_grad else "const"
        return f"Tensor(shape={self.data.shape}, {flags}, op={self._op})"


def _constant(data) -> Tensor:
    t = Tensor.__new__(Tensor)
    t.data = np.asarray(data, dtype=np.float64)
    t.grad = None
    t.requires_grad = False
    t._parents = ()
    t._vjp = None
    t._op = "const"
    return t


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else _constant(x)


def _record(data, parents, vjp, op: str) -> Tensor:
    if _grad_enabled[-1] and any(p.requires_grad for p in parents):
        t = Tensor.__new__(Tensor)
        t.data = data
        t.grad = None
        t.requires_grad = True
        t._parents = tuple(parents)
        t._vjp = vjp
        t._op = op
        return t
    return _constant(data)


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ------------------------------------------------------------- arithmetic --


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def vjp(g):
        ga = _unbroadcast(g, a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(g, b.data.shape) if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), vjp, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def vjp(g):
        ga = _unbroadcast(g, a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(-g, b.data.shape) if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), vjp, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    out = ad * bd

    def vjp(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), vjp, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    out = ad / bd

    def vjp(g):
        ga = _unbroadcast(g / bd, ad.shape) if a.requires_grad else None
        gb = (_unbroadcast(-g * ad / (bd * bd), bd.shape)
              if b.requires_grad else None)
        return ga, gb

    return _record(out, (a, b), vjp, "div")


def neg(a: Tensor) -> Tensor:
    return _record(-a.data, (a,), lambda g: (-g,), "neg")


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _record(ad * ad, (a,), lambda g: (2.0 * ad * g,), "square")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _record(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    ad = a.data
    return _record(np.log(ad), (a,), lambda g: (g / ad,), "log")


def relu(a: Tensor) -> Tensor:
    out = accel.relu_fwd(a.data)
    return _record(out, (a,), lambda g: (accel.relu_bwd(out, g),), "relu")


def tanh(a: Tensor) -> Tensor:
    out = accel.tanh_fwd(a.data)
    return _record(out, (a,), lambda g: (accel.tanh_bwd(out, g),), "tanh")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient is zero outside [lo, hi]."""
    ad = a.data
    out = np.clip(ad, lo, hi)
    mask = (ad >= lo) & (ad <= hi)
    return _record(out, (a,), lambda g: (g * mask,), "clip")


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min; ties route the gradient to the first argument."""
    take_a = a.data <= b.data
    out = np.where(take_a, a.data, b.data)

    def vjp(g):
        ga = g * take_a if a.requires_grad else None
        gb = g * ~take_a if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), vjp, "minimum")


def huber(a: Tensor, delta: float) -> Tensor:
    """Elementwise Huber penalty: quadratic within delta, linear outside."""
    ad = a.data
    out = accel.huber_fwd(ad, delta)
    return _record(out, (a,),
                   lambda g: (g * accel.huber_bwd(ad, delta),), "huber")


# ---------------------------------------------------------------- linear --


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b for x (n, in), w (in, out), b (out,)."""
    xd, wd = x.data, w.data
    if xd.ndim != 2 or wd.ndim != 2 or xd.shape[1] != wd.shape[0]:
        raise ValueError(
            f"affine shape mismatch: x {xd.shape} vs w {wd.shape}")
    out = xd @ wd
    out += b.data

    def vjp(g):
        gx = g @ wd.T if x.requires_grad else None
        gw = xd.T @ g if w.requires_grad else None
        gb = g.sum(axis=0) if b.requires_grad else None
        return gx, gw, gb

    return _record(out, (x, w, b), vjp, "affine")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data

    def vjp(g):
        ga = g @ bd.T if a.requires_grad else None
        gb = ad.T @ g if b.requires_grad else None
        return ga, gb

    return _record(ad @ bd, (a, b), vjp, "matmul")


# ------------------------------------------------------------ structural --


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    out = np.concatenate([p.data for p in parts], axis=1)
    widths = [p.data.shape[1] for p in parts]
    edges = np.cumsum([0] + widths)

    def vjp(g):
        return tuple(
            g[:, edges[i]:edges[i + 1]] if p.requires_grad else None
            for i, p in enumerate(parts))

    return _record(out, tuple(parts), vjp, "concat_cols")


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    out = a.data[:, start:stop].copy()

    def vjp(g):
        ga = np.zeros_like(a.data)
        ga[:, start:stop] = g
        return (ga,)

    return _record(out, (a,), vjp, "slice_cols")


def take_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Row gather; duplicate indices accumulate in the backward pass."""
    out = a.data[idx]

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return _record(out, (a,), vjp, "take_rows")


def repeat_rows(a: Tensor, k: int) -> Tensor:
    """Repeat each row k times (row-major blocks)."""
    n = a.data.shape[0]
    out = np.repeat(a.data, k, axis=0)

    def vjp(g):
        return (g.reshape(n, k, -1).sum(axis=1).reshape(a.data.shape),)

    return _record(out, (a,), vjp, "repeat_rows")


def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape)
    return _record(out, (a,), lambda g: (g.reshape(a.data.shape),), "reshape")


# ------------------------------------------------------------ reductions --


def total(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum())
    return _record(out, (a,),
                   lambda g: (np.broadcast_to(g, a.data.shape).copy(),),
                   "sum")


def mean(a: Tensor) -> Tensor:
    n = a.data.size
    out = np.asarray(a.data.mean())

    def vjp(g):
        return (np.broadcast_to(g / n, a.data.shape).copy(),)

    return _record(out, (a,), vjp, "mean")


def sum_cols(a: Tensor) -> Tensor:
    """Row sums, keeping a trailing unit axis: (n, d) -> (n, 1)."""
    out = a.data.sum(axis=1, keepdims=True)

    def vjp(g):
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _record(out, (a,), vjp, "sum_cols")


# -------------------------------------------------------------- rowwise ---


def softmax_rows(a: Tensor, temperature: float) -> Tensor:
    """Row softmax of a/temperature with max-subtraction for stability."""
    if temperature <= 0.0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    inv = 1.0 / temperature
    out = accel.softmax_rows(a.data, inv)
    return _record(out, (a,),
                   lambda g: (accel.softmax_rows_bwd(out, g, inv),),
                   "softmax_rows")


def cosine_rows(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise cosine similarity of two (n, d) arrays, clamped to [-1, 1].

    Rows are assumed non-degenerate (callers floor embedding norms first).
    """
    ad, bd = a.data, b.data
    na = np.sqrt((ad * ad).sum(axis=1))
    nb = np.sqrt((bd * bd).sum(axis=1))
    dot = (ad * bd).sum(axis=1)
    denom = na * nb
    cos = np.clip(dot / denom, -1.0, 1.0)

    def vjp(g):
        scale = (g / denom)[:, None]
        ga = gb = None
        if a.requires_grad:
            ga = scale * (bd - (dot / (na * na))[:, None] * ad)
        if b.requires_grad:
            gb = scale * (ad - (dot / (nb * nb))[:, None] * bd)
        return ga, gb

    return _record(cos, (a, b), vjp, "cosine_rows")


def norm_floor_rows(a: Tensor, floor: float = 1e-6) -> Tensor:
    """Replace rows with L2 norm below ``floor`` by the first basis vector.

    Keeps downstream cosine computations well defined; replaced rows pass
    no gradient.
    """
    ad = a.data
    norms = np.sqrt((ad * ad).sum(axis=1))
    bad = norms < floor
    if not bad.any():
        return _record(ad.copy(), (a,), lambda g: (g.copy(),),
                       "norm_floor_rows")
    out = ad.copy()
    out[bad] = 0.0
    out[bad, 0] = 1.0
    keep = ~bad

    def vjp(g):
        return (g * keep[:, None],)

    return _record(out, (a,), vjp, "norm_floor_rows")


def finite_difference_gradient(fn, x: np.ndarray, h: float = 1e-5):
    """Central-difference gradient of scalar fn at x; the test-side oracle.

    Lives here rather than in the test tree because the gradient acceptance
    check and the benchmark both use it.
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = fn(x)
        flat[i] = orig - h
        lo = fn(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * h)
    return grad


LOG_2PI = math.log(2.0 * math.pi)
