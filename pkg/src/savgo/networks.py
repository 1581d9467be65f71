"""Fully connected networks, Adam, and Polyak-averaged target copies.

Weights initialize uniformly in [-1/sqrt(fan_in), 1/sqrt(fan_in)] (biases
too), the usual scheme for small actor-critic MLPs. Checkpoints are numpy
``.npz`` archives; see README for the exact key layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import accel
from .autodiff import NonFiniteError, Tensor, affine, relu, tanh

_ACTIVATIONS = ("relu", "tanh", "identity")


@dataclass
class Mlp:
    """A stack of affine layers with a fixed hidden activation."""

    layer_sizes: list[int]
    weights: list[Tensor]
    biases: list[Tensor]
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]


def init_mlp(layer_sizes, rng: np.random.Generator,
             hidden_activation: str = "relu",
             output_activation: str = "identity",
             trainable: bool = True) -> Mlp:
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ValueError(f"bad layer sizes {sizes}")
    for name in (hidden_activation, output_activation):
        if name not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {name!r}")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)),
                              requires_grad=trainable))
        biases.append(Tensor(rng.uniform(-bound, bound, fan_out),
                             requires_grad=trainable))
    return Mlp(sizes, weights, biases, hidden_activation, output_activation)


def _activate(x: Tensor, name: str) -> Tensor:
    if name == "relu":
        return relu(x)
    if name == "tanh":
        return tanh(x)
    return x


def forward(net: Mlp, x) -> Tensor:
    """Run the network on a (batch, input_dim) array or tensor."""
    if not isinstance(x, Tensor):
        x = Tensor(np.asarray(x, dtype=np.float64))
    if x.data.ndim != 2 or x.data.shape[1] != net.input_dim:
        raise ValueError(
            f"expected input shape (n, {net.input_dim}), got {x.data.shape}")
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = affine(h, w, b)
        h = _activate(h, net.hidden_activation if i < last
                      else net.output_activation)
    if not np.all(np.isfinite(h.data)):
        raise NonFiniteError("non-finite network output")
    return h


def parameters(net: Mlp) -> list[Tensor]:
    out = []
    for w, b in zip(net.weights, net.biases):
        out.append(w)
        out.append(b)
    return out


def param_count(net: Mlp) -> int:
    return sum(p.data.size for p in parameters(net))


def zero_grad(params) -> None:
    for p in params:
        p.grad = None


def grad_of(loss: Tensor, params) -> list[np.ndarray]:
    """Gradient of a scalar loss for the given parameter list."""
    zero_grad(params)
    loss.backward()
    return [p.grad if p.grad is not None else np.zeros_like(p.data)
            for p in params]


def make_target(net: Mlp) -> Mlp:
    """Non-trainable deep copy used as a Polyak-averaged target."""
    return Mlp(list(net.layer_sizes),
               [Tensor(w.data.copy()) for w in net.weights],
               [Tensor(b.data.copy()) for b in net.biases],
               net.hidden_activation, net.output_activation)


def copy_params(dst: Mlp, src: Mlp) -> None:
    for d, s in zip(parameters(dst), parameters(src)):
        np.copyto(d.data, s.data)


@dataclass
class TargetPair:
    """An online network and its slow-moving target copy.

    tau is the retention coefficient: target <- tau*target + (1-tau)*online.
    """

    online: Mlp
    target: Mlp
    tau: float = 0.995

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")


def make_target_pair(net: Mlp, tau: float = 0.995) -> TargetPair:
    return TargetPair(net, make_target(net), tau)


def polyak_update(pair: TargetPair) -> None:
    for t, o in zip(parameters(pair.target), parameters(pair.online)):
        accel.polyak_update(t.data, o.data, pair.tau)


@dataclass
class AdamState:
    """Adam moments and hyperparameters for one parameter list."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)


def adam_init(params, learning_rate: float, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    if learning_rate < 0.0:
        raise ValueError(f"learning rate must be >= 0, got {learning_rate}")
    state = AdamState(learning_rate, beta1, beta2, epsilon)
    for p in params:
        state.first_moment.append(np.zeros_like(p.data))
        state.second_moment.append(np.zeros_like(p.data))
    return state


def adam_step(params, grads, state: AdamState) -> None:
    """One bias-corrected Adam update, in place."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ValueError("parameter, gradient, and state lists disagree")
    state.step_count += 1
    bc1 = 1.0 - state.beta1 ** state.step_count
    bc2 = 1.0 - state.beta2 ** state.step_count
    for p, g, m, v in zip(params, grads, state.first_moment,
                          state.second_moment):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape:
            raise ValueError(
                f"gradient shape {g.shape} != parameter shape {p.data.shape}")
        accel.adam_update(p.data, m, v, g, state.learning_rate,
                          state.beta1, state.beta2, state.epsilon, bc1, bc2)
        if not np.all(np.isfinite(p.data)):
            raise NonFiniteError("non-finite parameter after Adam step")


def save_mlp(net: Mlp, path) -> None:
    arrays = {"layer_sizes": np.asarray(net.layer_sizes, dtype=np.int64),
              "hidden_activation": np.asarray(net.hidden_activation),
              "output_activation": np.asarray(net.output_activation)}
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"w{i}"] = w.data
        arrays[f"b{i}"] = b.data
    np.savez(path, **arrays)


def load_mlp(path, trainable: bool = False) -> Mlp:
    with np.load(path) as archive:
        sizes = [int(s) for s in archive["layer_sizes"]]
        hidden = str(archive["hidden_activation"])
        output = str(archive["output_activation"])
        weights = [Tensor(archive[f"w{i}"], requires_grad=trainable)
                   for i in range(len(sizes) - 1)]
        biases = [Tensor(archive[f"b{i}"], requires_grad=trainable)
                  for i in range(len(sizes) - 1)]
    return Mlp(sizes, weights, biases, hidden, output)
