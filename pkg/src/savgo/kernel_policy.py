"""Kernel-weighted policy evaluation.

Instead of scoring the actor's sampled action alone, the actor update
draws K candidate actions per state, scores them with the target critics,
and aggregates with weights from a softmax over cosine similarities
between each candidate's embedding and the anchor's:

    w = (1 - epsilon) * softmax(c / rho) + epsilon / K
    Q_hat = sum_k w_k q_k

The temperature rho follows a cosine schedule from rho_max down to
rho_min over ``anneal_steps`` steps, so aggregation starts broad and
sharpens toward the best-matching candidates. Candidates and their q
values are constants; the actor gradient reaches the weights only through
the anchor's embedding (target encoder as a fixed feature map), plus the
usual entropy path through the anchor's log-density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .geometry import encode
from .networks import Mlp
from .sac import GaussianPolicy, TwinCritics, conservative_q, sample_action


@dataclass
class KernelConfig:
    """Candidate-set and weighting knobs for the kernel actor update."""

    num_candidates: int = 32
    epsilon: float = 0.05
    rho_max: float = 0.75
    rho_min: float = 0.05
    anneal_steps: int = 200_000
    proposal_mix: float = 0.2

    def __post_init__(self):
        if self.num_candidates < 1:
            raise ValueError(
                f"num_candidates must be >= 1, got {self.num_candidates}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(
                f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.rho_min <= 0.0 or self.rho_max < self.rho_min:
            raise ValueError(
                f"need rho_max >= rho_min > 0, got "
                f"({self.rho_max}, {self.rho_min})")
        if self.anneal_steps < 1:
            raise ValueError(
                f"anneal_steps must be >= 1, got {self.anneal_steps}")
        if not 0.0 <= self.proposal_mix <= 1.0:
            raise ValueError(
                f"proposal_mix must lie in [0, 1], got {self.proposal_mix}")


def rho_schedule(step: int, cfg: KernelConfig) -> float:
    """Cosine decay from rho_max at step 0 to rho_min at anneal_steps.

    Holds at rho_min afterwards.
    """
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    frac = min(step / cfg.anneal_steps, 1.0)
    return cfg.rho_min + 0.5 * (cfg.rho_max - cfg.rho_min) \
        * (1.0 + math.cos(math.pi * frac))


def sample_candidates(policy: GaussianPolicy, states: np.ndarray,
                      cfg: KernelConfig,
                      rng: np.random.Generator) -> np.ndarray:
    """K candidate actions per state, shape (n, K, action_dim).

    ceil((1 - proposal_mix) * K) candidates come from the policy, the rest
    uniformly from the action box. Policy candidates are drawn first with
    a single reparameterized call on the row-repeated states.
    """
    states = np.asarray(states, dtype=np.float64)
    n = states.shape[0]
    k = cfg.num_candidates
    da = policy.action_dim
    n_policy = math.ceil((1.0 - cfg.proposal_mix) * k)
    parts = []
    if n_policy > 0:
        tiled = np.repeat(states, n_policy, axis=0)
        with ad.no_grad():
            actions, _ = sample_action(policy, tiled, rng)
        parts.append(actions.data.reshape(n, n_policy, da))
    n_uniform = k - n_policy
    if n_uniform > 0:
        u = rng.uniform(0.0, 1.0, (n, n_uniform, da))
        parts.append(policy.action_low + u
                     * (policy.action_high - policy.action_low))
    return np.concatenate(parts, axis=1) if len(parts) > 1 else parts[0]


def kernel_weights(similarities, rho: float, epsilon: float) -> Tensor:
    """Rows of (1 - eps) * softmax(c / rho) + eps / K on the simplex."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    c = similarities if isinstance(similarities, Tensor) \
        else Tensor(similarities)
    k = c.data.shape[1]
    return (1.0 - epsilon) * ad.softmax_rows(c, rho) + epsilon / k


def kernel_value(weights: Tensor, q_values) -> Tensor:
    """Q_hat = sum_k w_k q_k, shape (n, 1)."""
    q = q_values if isinstance(q_values, Tensor) else Tensor(q_values)
    return ad.sum_cols(weights * q)


@dataclass
class KernelBundle:
    """Everything one kernel actor update needs, graph edges included."""

    anchor_action: Tensor
    anchor_log_prob: Tensor
    anchor_embedding: Tensor
    candidate_actions: np.ndarray
    candidate_values: np.ndarray
    similarities: Tensor
    weights: Tensor
    q_hat: Tensor
    rho: float


def build_bundle(states: np.ndarray, policy: GaussianPolicy,
                 encoder_target: Mlp, critics_target: TwinCritics,
                 cfg: KernelConfig, step: int, rng: np.random.Generator,
                 rho_override: float | None = None,
                 candidates: np.ndarray | None = None) -> KernelBundle:
    """Assemble the kernel-weighted value estimate for one batch.

    Candidates draw from the per-step stream before the anchor does.
    Candidate actions, embeddings, and q values are constants; the graph
    reaches Q_hat only through the anchor embedding inside the cosine
    similarities. A precomputed (n, K, action_dim) candidate set may be
    injected, which pins the constants while the policy varies (the
    finite-difference oracle needs exactly that).
    """
    states = np.asarray(states, dtype=np.float64)
    n = states.shape[0]
    k = cfg.num_candidates
    if candidates is None:
        candidates = sample_candidates(policy, states, cfg, rng)
    elif candidates.shape != (n, k, policy.action_dim):
        raise ValueError(
            f"candidates shape {candidates.shape} != "
            f"{(n, k, policy.action_dim)}")
    anchor, anchor_log_prob = sample_action(policy, states, rng)

    states_rep = np.repeat(states, k, axis=0)
    flat_candidates = candidates.reshape(n * k, -1)
    with ad.no_grad():
        z_cand = encode(encoder_target, states_rep, flat_candidates)
        q_cand = conservative_q(critics_target, states_rep, flat_candidates)
    q_cand = q_cand.data.reshape(n, k)

    z_anchor = encode(encoder_target, Tensor(states), anchor)
    similarities = ad.reshape(
        ad.cosine_rows(ad.repeat_rows(z_anchor, k), z_cand), (n, k))

    rho = rho_schedule(step, cfg) if rho_override is None else rho_override
    weights = kernel_weights(similarities, rho, cfg.epsilon)
    q_hat = kernel_value(weights, q_cand)
    return KernelBundle(anchor, anchor_log_prob, z_anchor, candidates,
                        q_cand, similarities, weights, q_hat, rho)


def actor_loss(bundle: KernelBundle, anchor_log_prob: Tensor,
               eta: float) -> Tensor:
    """mean(eta * log pi(anchor|s) - Q_hat)."""
    return ad.mean(eta * anchor_log_prob - bundle.q_hat)
