"""Kernel-weighted off-policy actor-critic on a self-contained numpy stack.

The policy update aggregates K candidate actions through a learned
cosine-similarity kernel over state-action embeddings; a plain soft
actor-critic baseline, three desk-scale control environments, and an
experiment harness (CLI, CSV metrics, SVG curves) round out the lab.
"""

from .autodiff import NonFiniteError, Tensor, no_grad
from .config import ConfigError, ExperimentConfig, from_dict, load_config
from .envs import EnvSpec, ObsNormalizer, Transition, env_ids, make_env
from .geometry import BetaScale, GeometryConfig, GeometryPairs
from .kernel_policy import KernelBundle, KernelConfig
from .networks import AdamState, Mlp, TargetPair
from .replay import Minibatch, ReplayBuffer
from .sac import EntropyTemperature, GaussianPolicy, TwinCritics
from .trainer import MetricsRow, TrainingLoop, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "AdamState", "BetaScale", "ConfigError", "EntropyTemperature", "EnvSpec",
    "ExperimentConfig", "GaussianPolicy", "GeometryConfig", "GeometryPairs",
    "KernelBundle", "KernelConfig", "MetricsRow", "Minibatch", "Mlp",
    "NonFiniteError", "ObsNormalizer", "ReplayBuffer", "TargetPair", "Tensor",
    "TrainingLoop", "Transition", "TwinCritics", "env_ids", "evaluate",
    "from_dict", "load_config", "make_env", "no_grad", "train",
]
