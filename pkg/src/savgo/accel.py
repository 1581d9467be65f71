"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

Every kernel exists twice: a numba ``@njit`` version and a plain numpy
version with identical semantics. The active set is picked at import time
from the ``SAVGO_BACKEND`` environment variable ("numba" or "numpy";
default "numba" when numba imports) and can be swapped at runtime with
:func:`use_backend`. Matrix products are deliberately not jitted: numpy's
BLAS beats a naive loop by a wide margin, so both backends share it. The
kernels below cover the elementwise and row-wise loops where fusion pays.

All kernels take and return float64 C-contiguous arrays.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np


# ---------------------------------------------------------------- numpy ----


def _np_relu_fwd(x):
    return np.maximum(x, 0.0)


def _np_relu_bwd(y, g):
    return np.where(y > 0.0, g, 0.0)


def _np_tanh_fwd(x):
    return np.tanh(x)


def _np_tanh_bwd(y, g):
    return g * (1.0 - y * y)


def _np_adam_update(p, m, v, g, lr, b1, b2, eps, bc1, bc2):
    """In-place Adam update of flat parameter array p.

    bc1, bc2 are the bias-correction denominators 1 - b^t.
    """
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def _np_polyak_update(target, online, tau):
    target *= tau
    target += (1.0 - tau) * online


def _np_softmax_rows(x, inv_temp):
    z = (x - x.max(axis=1, keepdims=True)) * inv_temp
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _np_softmax_rows_bwd(y, g, inv_temp):
    dot = (g * y).sum(axis=1, keepdims=True)
    return inv_temp * y * (g - dot)


def _np_huber_fwd(r, delta):
    a = np.abs(r)
    return np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))


def _np_huber_bwd(r, delta):
    return np.clip(r, -delta, delta)


_NUMPY = SimpleNamespace(
    relu_fwd=_np_relu_fwd,
    relu_bwd=_np_relu_bwd,
    tanh_fwd=_np_tanh_fwd,
    tanh_bwd=_np_tanh_bwd,
    adam_update=_np_adam_update,
    polyak_update=_np_polyak_update,
    softmax_rows=_np_softmax_rows,
    softmax_rows_bwd=_np_softmax_rows_bwd,
    huber_fwd=_np_huber_fwd,
    huber_bwd=_np_huber_bwd,
)


# ---------------------------------------------------------------- numba ----


def _build_numba_backend():
    from numba import njit

    @njit(cache=True)
    def _relu_fwd_flat(x, out):
        for i in range(x.size):
            v = x[i]
            out[i] = v if v > 0.0 else 0.0

    @njit(cache=True)
    def _relu_bwd_flat(y, g, out):
        for i in range(y.size):
            out[i] = g[i] if y[i] > 0.0 else 0.0

    @njit(cache=True)
    def _tanh_fwd_flat(x, out):
        for i in range(x.size):
            out[i] = np.tanh(x[i])

    @njit(cache=True)
    def _tanh_bwd_flat(y, g, out):
        for i in range(y.size):
            out[i] = g[i] * (1.0 - y[i] * y[i])

    @njit(cache=True)
    def _adam_flat(p, m, v, g, lr, b1, b2, eps, bc1, bc2):
        for i in range(p.size):
            gi = g[i]
            mi = b1 * m[i] + (1.0 - b1) * gi
            vi = b2 * v[i] + (1.0 - b2) * gi * gi
            m[i] = mi
            v[i] = vi
            p[i] -= lr * (mi / bc1) / (np.sqrt(vi / bc2) + eps)

    @njit(cache=True)
    def _polyak_flat(target, online, tau):
        for i in range(target.size):
            target[i] = tau * target[i] + (1.0 - tau) * online[i]

    @njit(cache=True)
    def _softmax_rows(x, inv_temp):
        n, k = x.shape
        out = np.empty((n, k))
        for i in range(n):
            m = x[i, 0]
            for j in range(1, k):
                if x[i, j] > m:
                    m = x[i, j]
            s = 0.0
            for j in range(k):
                e = np.exp((x[i, j] - m) * inv_temp)
                out[i, j] = e
                s += e
            inv_s = 1.0 / s
            for j in range(k):
                out[i, j] *= inv_s
        return out

    @njit(cache=True)
    def _softmax_rows_bwd(y, g, inv_temp):
        n, k = y.shape
        out = np.empty((n, k))
        for i in range(n):
            dot = 0.0
            for j in range(k):
                dot += g[i, j] * y[i, j]
            for j in range(k):
                out[i, j] = inv_temp * y[i, j] * (g[i, j] - dot)
        return out

    @njit(cache=True)
    def _huber_fwd_flat(r, delta, out):
        for i in range(r.size):
            v = r[i]
            a = abs(v)
            if a <= delta:
                out[i] = 0.5 * v * v
            else:
                out[i] = delta * (a - 0.5 * delta)

    @njit(cache=True)
    def _huber_bwd_flat(r, delta, out):
        for i in range(r.size):
            v = r[i]
            if v > delta:
                out[i] = delta
            elif v < -delta:
                out[i] = -delta
            else:
                out[i] = v

    def _flat_unary(kernel):
        def run(x, *args):
            x = np.ascontiguousarray(x)
            out = np.empty_like(x)
            kernel(x.ravel(), *args, out.ravel())
            return out

        return run

    def _flat_binary(kernel):
        def run(a, b, *args):
            a = np.ascontiguousarray(a)
            b = np.ascontiguousarray(b)
            out = np.empty_like(a)
            kernel(a.ravel(), b.ravel(), *args, out.ravel())
            return out

        return run

    relu_fwd = _flat_unary(_relu_fwd_flat)
    relu_bwd = _flat_binary(_relu_bwd_flat)
    tanh_fwd = _flat_unary(_tanh_fwd_flat)
    tanh_bwd = _flat_binary(_tanh_bwd_flat)

    def huber_fwd(r, delta):
        r = np.ascontiguousarray(r)
        out = np.empty_like(r)
        _huber_fwd_flat(r.ravel(), delta, out.ravel())
        return out

    def huber_bwd(r, delta):
        r = np.ascontiguousarray(r)
        out = np.empty_like(r)
        _huber_bwd_flat(r.ravel(), delta, out.ravel())
        return out

    def adam_update(p, m, v, g, lr, b1, b2, eps, bc1, bc2):
        _adam_flat(p.ravel(), m.ravel(), v.ravel(),
                   np.ascontiguousarray(g).ravel(),
                   lr, b1, b2, eps, bc1, bc2)

    def polyak_update(target, online, tau):
        _polyak_flat(target.ravel(), online.ravel(), tau)

    def softmax_rows(x, inv_temp):
        return _softmax_rows(np.ascontiguousarray(x), inv_temp)

    def softmax_rows_bwd(y, g, inv_temp):
        return _softmax_rows_bwd(np.ascontiguousarray(y),
                                 np.ascontiguousarray(g), inv_temp)

    return SimpleNamespace(
        relu_fwd=relu_fwd,
        relu_bwd=relu_bwd,
        tanh_fwd=tanh_fwd,
        tanh_bwd=tanh_bwd,
        adam_update=adam_update,
        polyak_update=polyak_update,
        softmax_rows=softmax_rows,
        softmax_rows_bwd=softmax_rows_bwd,
        huber_fwd=huber_fwd,
        huber_bwd=huber_bwd,
    )


_REGISTRY = {"numpy": _NUMPY}
try:
    _REGISTRY["numba"] = _build_numba_backend()
except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
    pass

_KERNEL_NAMES = (
    "relu_fwd", "relu_bwd", "tanh_fwd", "tanh_bwd", "adam_update",
    "polyak_update", "softmax_rows", "softmax_rows_bwd",
    "huber_fwd", "huber_bwd",
)

active_backend = ""


def available_backends():
    return sorted(_REGISTRY)


def use_backend(name: str) -> None:
    """Bind the module-level kernel names to the given backend."""
    if name not in _REGISTRY:
        raise ValueError(
            f"unknown backend {name!r}; available: {available_backends()}")
    impl = _REGISTRY[name]
    g = globals()
    for kernel in _KERNEL_NAMES:
        g[kernel] = getattr(impl, kernel)
    g["active_backend"] = name


_default = os.environ.get("SAVGO_BACKEND", "numba")
if _default not in _REGISTRY:
    if _default != "numba":
        raise ValueError(
            f"SAVGO_BACKEND={_default!r} is not one of {available_backends()}")
    _default = "numpy"
use_backend(_default)
