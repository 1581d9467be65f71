"""Learned state-action value geometry.

An encoder embeds (state, action) pairs; training pulls the cosine
similarity of two embeddings toward a target derived from how far apart
their conservative Q values sit. The normalized gap

    Delta_ij = clip(|q_i - q_j| / beta, 0, 1)

uses a slow exponential moving average beta of the batch mean absolute
gap, and maps to a target similarity

    Y_ij = 1 - 2 * Delta_ij ** curvature

so identical values target +1, maximally separated values target -1, and
``curvature`` (the knob configs spell ``lambda``) shapes the transition
between them. The representation loss is a Huber penalty on cos - Y over
a derangement pairing of the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .networks import Mlp, forward


@dataclass
class GeometryConfig:
    """Knobs for the value-geometry objective."""

    curvature: float = 1.0
    huber_delta: float = 1.0
    embed_dim: int = 64

    def __post_init__(self):
        if self.curvature <= 0.0:
            raise ValueError(
                f"curvature must be positive, got {self.curvature}")
        if self.huber_delta <= 0.0:
            raise ValueError(
                f"huber_delta must be positive, got {self.huber_delta}")
        if self.embed_dim < 1:
            raise ValueError(f"embed_dim must be >= 1, got {self.embed_dim}")


@dataclass
class BetaScale:
    """EMA of the batch mean |q_i - q_j|, floored away from zero."""

    value: float = 1.0
    decay: float = 0.99
    floor: float = 1e-3

    def __post_init__(self):
        if not 0.0 <= self.decay < 1.0:
            raise ValueError(f"decay must lie in [0, 1), got {self.decay}")
        if self.floor <= 0.0:
            raise ValueError(f"floor must be positive, got {self.floor}")
        if self.value < self.floor:
            raise ValueError(
                f"initial value {self.value} below floor {self.floor}")


def update_beta(beta: BetaScale, abs_gaps: np.ndarray) -> float:
    """Fold one batch of |q_i - q_j| into the running scale."""
    batch_mean = float(np.mean(abs_gaps))
    beta.value = max(beta.decay * beta.value
                     + (1.0 - beta.decay) * batch_mean, beta.floor)
    return beta.value


def value_gap(q_i: np.ndarray, q_j: np.ndarray, beta: float) -> np.ndarray:
    """Normalized gap Delta = clip(|q_i - q_j| / beta, 0, 1)."""
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    return np.clip(np.abs(q_i - q_j) / beta, 0.0, 1.0)


def target_similarity(delta: np.ndarray, curvature: float) -> np.ndarray:
    """Y = 1 - 2 * delta^curvature, mapping [0, 1] onto [1, -1]."""
    if curvature <= 0.0:
        raise ValueError(f"curvature must be positive, got {curvature}")
    return 1.0 - 2.0 * np.power(delta, curvature)


def form_pairs(batch_size: int,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Pair each batch index with a distinct partner (a derangement).

    Rejection-samples uniform permutations until one has no fixed point,
    which keeps the partner marginals uniform over the off-diagonal.
    """
    if batch_size < 2:
        raise ValueError(f"need at least 2 rows to pair, got {batch_size}")
    i = np.arange(batch_size)
    while True:
        j = rng.permutation(batch_size)
        if not np.any(j == i):
            return i, j


def encode(encoder: Mlp, states, actions) -> Tensor:
    """Embed (state, action) rows; rows are floored to nonzero norm."""
    states = states if isinstance(states, Tensor) else Tensor(states)
    actions = actions if isinstance(actions, Tensor) else Tensor(actions)
    z = forward(encoder, ad.concat_cols([states, actions]))
    return ad.norm_floor_rows(z)


def cosine(z_i: Tensor, z_j: Tensor) -> Tensor:
    """Row-wise cosine similarity in [-1, 1], shape (n,)."""
    return ad.cosine_rows(z_i, z_j)


@dataclass
class GeometryPairs:
    """A batch of derangement pairs and their similarity targets."""

    idx_i: np.ndarray
    idx_j: np.ndarray
    q_i: np.ndarray
    q_j: np.ndarray
    delta: np.ndarray
    target_sim: np.ndarray


def make_pairs(q_values: np.ndarray, beta: BetaScale, cfg: GeometryConfig,
               rng: np.random.Generator,
               adapt_beta: bool = True) -> GeometryPairs:
    """Draw pairs, refresh beta (unless pinned), and build targets.

    q_values is the (n,) or (n, 1) conservative Q of each batch row under
    the target critics; beta updates BEFORE the gaps normalize so the
    current batch participates in its own scale.
    """
    q = np.asarray(q_values, dtype=np.float64).reshape(-1)
    i, j = form_pairs(q.size, rng)
    q_i, q_j = q[i], q[j]
    gaps = np.abs(q_i - q_j)
    if adapt_beta:
        update_beta(beta, gaps)
    delta = value_gap(q_i, q_j, beta.value)
    return GeometryPairs(i, j, q_i, q_j, delta,
                         target_similarity(delta, cfg.curvature))


def representation_loss(encoder: Mlp, states, actions,
                        pairs: GeometryPairs,
                        cfg: GeometryConfig) -> Tensor:
    """Mean Huber penalty on cos(z_i, z_j) - Y_ij over the pairing."""
    z = encode(encoder, states, actions)
    z_i = ad.take_rows(z, pairs.idx_i)
    z_j = ad.take_rows(z, pairs.idx_j)
    residual = cosine(z_i, z_j) - Tensor(pairs.target_sim)
    return ad.mean(ad.huber(residual, cfg.huber_delta))
