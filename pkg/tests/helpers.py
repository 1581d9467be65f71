"""Shared test utilities: gradient checking, rank correlation, net rigging."""

import numpy as np

from savgo.autodiff import Tensor, finite_difference_gradient
from savgo.networks import Mlp, parameters


def rel_err(analytic: np.ndarray, numeric: np.ndarray,
            floor: float = 1e-8) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(loss_fn, params, tol: float = 1e-4,
                    h: float = 1e-5) -> float:
    """Compare analytic gradients of loss_fn() against central differences.

    loss_fn must rebuild the loss graph from the params' current .data on
    every call. Returns the worst relative error across all parameters.
    """
    for p in params:
        p.grad = None
    loss_fn().backward()
    analytic = [p.grad if p.grad is not None else np.zeros_like(p.data)
                for p in params]
    worst = 0.0
    for p, g in zip(params, analytic):
        def eval_at(_x, p=p):
            return float(loss_fn().data)

        fd = finite_difference_gradient(eval_at, p.data, h=h)
        worst = max(worst, rel_err(g, fd))
    assert worst <= tol, f"gradient mismatch: rel err {worst:.3e} > {tol}"
    return worst


def spearman(a: np.ndarray, b: np.ndarray) -> float:
    """Spearman rank correlation, hand-rolled (continuous data, no ties)."""
    def ranks(x):
        order = np.argsort(x)
        r = np.empty_like(order, dtype=np.float64)
        r[order] = np.arange(x.size)
        return r

    return float(np.corrcoef(ranks(np.asarray(a)), ranks(np.asarray(b)))[0, 1])


def set_params(net: Mlp, weights, biases) -> None:
    """Overwrite network parameters with hand-chosen arrays."""
    for w, new in zip(net.weights, weights):
        w.data[...] = np.asarray(new, dtype=np.float64)
    for b, new in zip(net.biases, biases):
        b.data[...] = np.asarray(new, dtype=np.float64)


def params_snapshot(net: Mlp) -> list:
    return [p.data.copy() for p in parameters(net)]


def params_equal(a: list, b: list) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))
