"""Soft actor-critic core: squashed Gaussian policy, twin critics,
entropy-regularized TD targets, and automatic temperature tuning.

Conventions fixed here and reused by the kernel-weighted variant:

* Actions squash through tanh and rescale to the env's box, so log-density
  carries the tanh and rescale corrections.
* ``conservative_q`` is the elementwise minimum of the two critics and is
  always evaluated on target copies when building update targets.
* TD targets are computed without gradient tracking and returned as plain
  arrays; target-network parameters can never receive gradients from them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .networks import Mlp, forward
from .replay import Minibatch

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_SQUASH_EPS = 1e-6


@dataclass
class GaussianPolicy:
    """Tanh-squashed diagonal Gaussian over a bounded action box.

    The network maps observations to 2*action_dim outputs: means first,
    then log standard deviations (clamped to [-20, 2]).
    """

    net: Mlp
    action_low: np.ndarray
    action_high: np.ndarray

    def __post_init__(self):
        self.action_low = np.asarray(self.action_low, dtype=np.float64)
        self.action_high = np.asarray(self.action_high, dtype=np.float64)
        if np.any(self.action_high <= self.action_low):
            raise ValueError("action_high must exceed action_low")
        self.center = 0.5 * (self.action_high + self.action_low)
        self.halfspan = 0.5 * (self.action_high - self.action_low)
        self.action_dim = self.action_low.size
        if self.net.output_dim != 2 * self.action_dim:
            raise ValueError(
                f"policy net output {self.net.output_dim} != "
                f"2 * action_dim {2 * self.action_dim}")


def _policy_heads(policy: GaussianPolicy, obs) -> tuple[Tensor, Tensor]:
    out = forward(policy.net, obs)
    d = policy.action_dim
    mean = ad.slice_cols(out, 0, d)
    log_std = ad.clip(ad.slice_cols(out, d, 2 * d), LOG_STD_MIN, LOG_STD_MAX)
    return mean, log_std


def sample_action(policy: GaussianPolicy, obs,
                  rng: np.random.Generator) -> tuple[Tensor, Tensor]:
    """Reparameterized sample and its log-density.

    Returns (actions (n, action_dim), log_probs (n, 1)) as graph tensors;
    consumes exactly one standard-normal draw of shape (n, action_dim).
    """
    mean, log_std = _policy_heads(policy, obs)
    n = mean.data.shape[0]
    xi = rng.standard_normal((n, policy.action_dim))
    std = ad.exp(log_std)
    pre_squash = mean + std * xi
    squashed = ad.tanh(pre_squash)
    action = policy.center + policy.halfspan * squashed

    # With u = mean + std*xi, the Gaussian term reduces to
    # -0.5 xi^2 - log_std - 0.5 log(2 pi); only log_std carries gradient.
    gauss = (-0.5) * (xi * xi) - log_std - 0.5 * ad.LOG_2PI
    # Change of variables for tanh and the affine rescale.
    squash_corr = ad.log((1.0 + _SQUASH_EPS) - ad.square(squashed))
    log_prob = ad.sum_cols(gauss - squash_corr) \
        - float(np.sum(np.log(policy.halfspan)))
    return action, log_prob


def deterministic_action(policy: GaussianPolicy, obs: np.ndarray) -> np.ndarray:
    """Mode of the squashed distribution, as a plain array."""
    with ad.no_grad():
        mean, _ = _policy_heads(policy, np.atleast_2d(obs))
        squashed = np.tanh(mean.data)
    return policy.center + policy.halfspan * squashed


def action_log_prob(policy: GaussianPolicy, obs: np.ndarray,
                    actions: np.ndarray) -> np.ndarray:
    """Log-density of given actions; plain-array diagnostic path."""
    with ad.no_grad():
        mean, log_std = _policy_heads(policy, obs)
    mean, log_std = mean.data, log_std.data
    squashed = (np.asarray(actions) - policy.center) / policy.halfspan
    squashed = np.clip(squashed, -1.0 + 1e-12, 1.0 - 1e-12)
    u = np.arctanh(squashed)
    std = np.exp(log_std)
    gauss = -0.5 * ((u - mean) / std) ** 2 - log_std - 0.5 * math.log(2 * math.pi)
    corr = np.log(1.0 + _SQUASH_EPS - squashed ** 2)
    return (gauss - corr).sum(axis=1, keepdims=True) \
        - np.sum(np.log(policy.halfspan))


@dataclass
class TwinCritics:
    """Two independently initialized Q networks over (state, action)."""

    q1: Mlp
    q2: Mlp


def critic_value(net: Mlp, states, actions) -> Tensor:
    states = states if isinstance(states, Tensor) else Tensor(states)
    actions = actions if isinstance(actions, Tensor) else Tensor(actions)
    return forward(net, ad.concat_cols([states, actions]))


def conservative_q(critics: TwinCritics, states, actions) -> Tensor:
    """Elementwise minimum of the two critic heads, shape (n, 1)."""
    return ad.minimum(critic_value(critics.q1, states, actions),
                      critic_value(critics.q2, states, actions))


def td_targets_from_parts(rewards, continuations, next_q, next_log_prob,
                          eta: float, gamma: float) -> np.ndarray:
    """y = r + gamma * d * (Q_next - eta * log pi_next), plain arrays."""
    return rewards + gamma * continuations * (next_q - eta * next_log_prob)


def td_target(batch: Minibatch, policy: GaussianPolicy,
              critics_target: TwinCritics, eta: float, gamma: float,
              rng: np.random.Generator) -> np.ndarray:
    """Entropy-regularized one-step targets; returned without gradients."""
    with ad.no_grad():
        next_action, next_log_prob = sample_action(policy, batch.next_states,
                                                   rng)
        next_q = conservative_q(critics_target, batch.next_states,
                                next_action)
        return td_targets_from_parts(batch.rewards, batch.continuations,
                                     next_q.data, next_log_prob.data,
                                     eta, gamma)


def critic_loss(critic: Mlp, states, actions, targets: np.ndarray) -> Tensor:
    """Mean squared Bellman error against fixed targets."""
    q = critic_value(critic, states, actions)
    return ad.mean(ad.square(q - Tensor(targets)))


def sac_actor_loss(policy: GaussianPolicy, critics_target: TwinCritics,
                   states, eta: float,
                   rng: np.random.Generator) -> tuple[Tensor, np.ndarray]:
    """mean(eta * log pi(a|s) - Q_min(s, a)) over fresh policy samples.

    Q_min is evaluated on target critics; the gradient reaches the policy
    both through the log-density and through the sampled action.
    """
    action, log_prob = sample_action(policy, states, rng)
    q = conservative_q(critics_target, Tensor(np.asarray(states)), action)
    loss = ad.mean(eta * log_prob - q)
    return loss, log_prob.data


@dataclass
class EntropyTemperature:
    """Learnable entropy weight eta = exp(log_eta) with a target entropy."""

    log_eta: Tensor
    target_entropy: float

    @property
    def eta(self) -> float:
        return float(np.exp(self.log_eta.data))


def make_temperature(initial_eta: float,
                     target_entropy: float) -> EntropyTemperature:
    if initial_eta <= 0.0:
        raise ValueError(f"initial eta must be positive, got {initial_eta}")
    return EntropyTemperature(Tensor(np.log(initial_eta), requires_grad=True),
                              target_entropy)


def temperature_loss(temp: EntropyTemperature,
                     log_probs: np.ndarray) -> Tensor:
    """loss = -eta * mean(log pi + target_entropy).

    Descending this raises eta when entropy is below target (log pi too
    high) and lowers it otherwise.
    """
    gap = float(np.mean(log_probs) + temp.target_entropy)
    return ad.exp(temp.log_eta) * (-gap)
