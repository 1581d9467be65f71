"""Experiment configuration: a flat dataclass with JSON round-tripping.

``resolve()`` produces the effective config actually used by a run:
derived fields filled in, ablation flags folded into the knobs they
override. The effective dict is what gets echoed next to each run's
metrics so any run can be reproduced from its own output directory.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .envs import env_ids

ALGORITHMS = ("sac", "savgo")

# JSON uses the reserved word "lambda" for the curvature knob.
_JSON_ALIASES = {"lambda": "curvature"}
_FIELD_ALIASES = {v: k for k, v in _JSON_ALIASES.items()}


class ConfigError(ValueError):
    """A config file or dict failed validation."""


@dataclass
class ExperimentConfig:
    # run identity
    env_id: str = "pendulum"
    algorithm: str = "savgo"
    seed: int = 0
    # budget
    total_steps: int = 50_000
    warmup_steps: int = 1_000
    # optimization
    batch_size: int = 256
    gamma: float = 0.99
    tau: float = 0.995
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    encoder_lr: float = 3e-4
    eta_lr: float = 3e-4
    initial_eta: float = 1.0
    target_entropy: float | None = None  # None: -action_dim at runtime
    hidden_sizes: tuple = (256, 256)
    replay_capacity: int = 100_000
    normalize_observations: bool = True
    # evaluation
    eval_interval: int = 1_000
    eval_episodes: int = 10
    # geometry
    embed_dim: int = 64
    curvature: float = 1.0
    huber_delta: float = 1.0
    beta_init: float = 1.0
    beta_decay: float = 0.99
    beta_floor: float = 1e-3
    # kernel
    num_candidates: int = 32
    epsilon: float = 0.05
    rho_max: float = 0.75
    rho_min: float = 0.05
    anneal_steps: int = 200_000
    proposal_mix: float = 0.2
    # ablation switches
    fixed_rho: float | None = None
    freeze_encoder: bool = False
    fixed_beta: float | None = None
    uniform_kernel: bool = False

    def validate(self) -> None:
        problems = []
        if self.env_id not in env_ids():
            problems.append(f"env_id {self.env_id!r} not in {env_ids()}")
        if self.algorithm not in ALGORITHMS:
            problems.append(
                f"algorithm {self.algorithm!r} not in {list(ALGORITHMS)}")
        if self.seed < 0:
            problems.append(f"seed must be >= 0, got {self.seed}")
        if self.total_steps < 1:
            problems.append(f"total_steps must be >= 1, got {self.total_steps}")
        if self.warmup_steps < 0:
            problems.append(
                f"warmup_steps must be >= 0, got {self.warmup_steps}")
        if self.total_steps < self.warmup_steps:
            problems.append(
                f"total_steps {self.total_steps} < warmup_steps "
                f"{self.warmup_steps}")
        if self.batch_size < 2:
            problems.append(f"batch_size must be >= 2, got {self.batch_size}")
        if not 0.0 <= self.gamma < 1.0:
            problems.append(f"gamma must lie in [0, 1), got {self.gamma}")
        if not 0.0 <= self.tau <= 1.0:
            problems.append(f"tau must lie in [0, 1], got {self.tau}")
        for name in ("actor_lr", "critic_lr", "encoder_lr", "eta_lr"):
            if getattr(self, name) < 0.0:
                problems.append(f"{name} must be >= 0")
        if self.initial_eta <= 0.0:
            problems.append(
                f"initial_eta must be positive, got {self.initial_eta}")
        if (not self.hidden_sizes
                or any(int(h) < 1 for h in self.hidden_sizes)):
            problems.append(f"bad hidden_sizes {self.hidden_sizes!r}")
        if self.replay_capacity < self.batch_size:
            problems.append("replay_capacity must be >= batch_size")
        if self.eval_interval < 1:
            problems.append(
                f"eval_interval must be >= 1, got {self.eval_interval}")
        if self.eval_episodes < 1:
            problems.append(
                f"eval_episodes must be >= 1, got {self.eval_episodes}")
        if self.embed_dim < 1:
            problems.append(f"embed_dim must be >= 1, got {self.embed_dim}")
        if self.curvature <= 0.0:
            problems.append(
                f"curvature must be positive, got {self.curvature}")
        if self.huber_delta <= 0.0:
            problems.append(
                f"huber_delta must be positive, got {self.huber_delta}")
        if self.beta_floor <= 0.0 or self.beta_init < self.beta_floor:
            problems.append("need beta_init >= beta_floor > 0")
        if not 0.0 <= self.beta_decay < 1.0:
            problems.append(
                f"beta_decay must lie in [0, 1), got {self.beta_decay}")
        if self.num_candidates < 1:
            problems.append(
                f"num_candidates must be >= 1, got {self.num_candidates}")
        if not 0.0 <= self.epsilon <= 1.0:
            problems.append(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.rho_min <= 0.0 or self.rho_max < self.rho_min:
            problems.append("need rho_max >= rho_min > 0")
        if self.anneal_steps < 1:
            problems.append(
                f"anneal_steps must be >= 1, got {self.anneal_steps}")
        if not 0.0 <= self.proposal_mix <= 1.0:
            problems.append(
                f"proposal_mix must lie in [0, 1], got {self.proposal_mix}")
        if self.fixed_rho is not None and self.fixed_rho <= 0.0:
            problems.append(
                f"fixed_rho must be positive, got {self.fixed_rho}")
        if self.fixed_beta is not None and self.fixed_beta <= 0.0:
            problems.append(
                f"fixed_beta must be positive, got {self.fixed_beta}")
        if problems:
            raise ConfigError("; ".join(problems))

    def resolve(self) -> "ExperimentConfig":
        """Effective config: ablation flags folded into their knobs."""
        self.validate()
        out = dataclasses.replace(self)
        if out.uniform_kernel:
            out.epsilon = 1.0
        out.hidden_sizes = tuple(int(h) for h in out.hidden_sizes)
        return out


def from_dict(raw: dict) -> ExperimentConfig:
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    kwargs = {}
    unknown = []
    for key, value in raw.items():
        name = _JSON_ALIASES.get(key, key)
        if name not in known:
            unknown.append(key)
            continue
        if name == "hidden_sizes":
            value = tuple(int(h) for h in value)
        kwargs[name] = value
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = ExperimentConfig(**kwargs)
    cfg.validate()
    return cfg


def to_dict(cfg: ExperimentConfig) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if f.name == "hidden_sizes":
            value = list(value)
        out[_FIELD_ALIASES.get(f.name, f.name)] = value
    return out


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: not valid JSON ({err})") from err
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return from_dict(raw)


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
