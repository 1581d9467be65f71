"""Desk-scale continuous-control environments with deterministic dynamics.

All three tasks use float64 observations, bounded action boxes, dense
rewards computed on the pre-transition state, and end only by time limit
(the step method returns continuation 0.0 exactly on the final step of an
episode). Reset noise comes from a seeded numpy Generator; with a fixed
seed every trajectory is bit-reproducible.

Roster:

* ``pendulum``: torque-limited swing-up of a point-mass pendulum.
* ``reacher2d``: frictionless 2d point mass pushed toward a random goal.
* ``lqr1d``: scalar discounted linear-quadratic regulator with a
  closed-form optimal value function for oracle checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EnvSpec:
    """Static description of one environment's interface."""

    state_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    max_episode_steps: int
    dt: float


@dataclass
class Transition:
    """One step of experience as stored in the replay buffer."""

    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    continuation: float


class _EpisodicEnv:
    """Shared bookkeeping: step counting, time limits, done guarding."""

    spec: EnvSpec
    # Episodes here never terminate early; continuation==0 always means the
    # time limit fired, which trainers may treat as a non-terminal cut.
    time_limit_only = True

    def __init__(self, seed: int | None = None):
        self._rng = np.random.default_rng(seed)
        self._steps = 0
        self._done = True

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self._steps = 0
        self._done = False
        self._reset_state(self._rng)
        return self._observe()

    def step(self, action) -> tuple[np.ndarray, float, float]:
        if self._done:
            raise RuntimeError("step() on a finished episode; call reset()")
        action = np.asarray(action, dtype=np.float64).reshape(-1)
        if action.shape != (self.spec.action_dim,):
            raise ValueError(
                f"expected action shape ({self.spec.action_dim},), "
                f"got {action.shape}")
        action = np.clip(action, self.spec.action_low, self.spec.action_high)
        reward = self._advance(action)
        self._steps += 1
        continuation = 1.0
        if self._steps >= self.spec.max_episode_steps:
            continuation = 0.0
            self._done = True
        return self._observe(), float(reward), continuation

    # subclass hooks
    def _reset_state(self, rng: np.random.Generator) -> None:
        raise NotImplementedError

    def _advance(self, action: np.ndarray) -> float:
        raise NotImplementedError

    def _observe(self) -> np.ndarray:
        raise NotImplementedError


def _wrap_angle(theta: float) -> float:
    """Map to [-pi, pi)."""
    return float((theta + np.pi) % (2.0 * np.pi) - np.pi)


class Pendulum(_EpisodicEnv):
    """Torque-limited swing-up of a point-mass pendulum.

    State is (theta, theta_dot) with theta = 0 upright, stored wrapped to
    [-pi, pi). Dynamics integrate semi-implicit Euler at dt = 0.05 with
    gravity g = 10, mass and length 1, angular speed clamped to +-8.
    Observation is (cos theta, sin theta, theta_dot); torque is bounded to
    [-2, 2]. Reward, computed on the pre-step state, is
    -(theta^2 + 0.1 theta_dot^2 + 0.001 u^2), so hanging still costs about
    -pi^2 per step and the upright fixed point with zero torque costs 0.
    Episodes run 200 steps. Reset draws theta ~ U[-pi, pi),
    theta_dot ~ U[-1, 1].
    """

    gravity = 10.0
    mass = 1.0
    length = 1.0
    max_speed = 8.0

    spec = EnvSpec(
        state_dim=3,
        action_dim=1,
        action_low=np.array([-2.0]),
        action_high=np.array([2.0]),
        max_episode_steps=200,
        dt=0.05,
    )

    def _reset_state(self, rng):
        self.theta = float(rng.uniform(-np.pi, np.pi))
        self.theta_dot = float(rng.uniform(-1.0, 1.0))

    def set_state(self, theta: float, theta_dot: float) -> np.ndarray:
        """Diagnostic hook for tests; places the pendulum exactly."""
        self.theta = _wrap_angle(theta)
        self.theta_dot = float(theta_dot)
        self._done = False
        self._steps = 0
        return self._observe()

    def _advance(self, action):
        u = float(action[0])
        reward = -(self.theta ** 2
                   + 0.1 * self.theta_dot ** 2
                   + 0.001 * u ** 2)
        dt = self.spec.dt
        accel = (self.gravity / self.length) * np.sin(self.theta) \
            + u / (self.mass * self.length ** 2)
        self.theta_dot = float(np.clip(self.theta_dot + accel * dt,
                                       -self.max_speed, self.max_speed))
        self.theta = _wrap_angle(self.theta + self.theta_dot * dt)
        return reward

    def _observe(self):
        return np.array([np.cos(self.theta), np.sin(self.theta),
                         self.theta_dot])


class Reacher2D(_EpisodicEnv):
    """Frictionless 2d point mass pushed toward a random goal.

    The agent applies a force in [-1, 1]^2 to a unit mass integrated
    semi-implicitly at dt = 0.1. Observation stacks (position, velocity,
    goal, position - goal). Reward on the pre-step state is
    -||position - goal|| - 0.01 ||u||^2; sitting on the goal at rest with
    zero force costs 0. Episodes run 100 steps. Reset draws position and
    goal uniformly in [-1, 1]^2 with zero velocity.
    """

    spec = EnvSpec(
        state_dim=8,
        action_dim=2,
        action_low=np.array([-1.0, -1.0]),
        action_high=np.array([1.0, 1.0]),
        max_episode_steps=100,
        dt=0.1,
    )

    def _reset_state(self, rng):
        self.position = rng.uniform(-1.0, 1.0, 2)
        self.velocity = np.zeros(2)
        self.goal = rng.uniform(-1.0, 1.0, 2)

    def set_state(self, position, velocity, goal) -> np.ndarray:
        self.position = np.asarray(position, dtype=np.float64).copy()
        self.velocity = np.asarray(velocity, dtype=np.float64).copy()
        self.goal = np.asarray(goal, dtype=np.float64).copy()
        self._done = False
        self._steps = 0
        return self._observe()

    def _advance(self, action):
        gap = self.position - self.goal
        reward = -np.linalg.norm(gap) - 0.01 * float(action @ action)
        dt = self.spec.dt
        self.velocity = self.velocity + action * dt
        self.position = self.position + self.velocity * dt
        return reward

    def _observe(self):
        return np.concatenate([self.position, self.velocity, self.goal,
                               self.position - self.goal])


def riccati_fixed_point(a: float, b: float, q: float, r: float,
                        gamma: float, tol: float = 1e-13,
                        max_iters: int = 100_000) -> float:
    """Positive solution P of the discounted scalar Riccati equation.

    Iterates P <- q + gamma a^2 P - (gamma a b P)^2 / (r + gamma b^2 P)
    to a fixed point. The optimal value of the discounted LQR with costs
    q x^2 + r u^2 is then -P x^2.
    """
    p = q
    for _ in range(max_iters):
        p_next = q + gamma * a * a * p \
            - (gamma * a * b * p) ** 2 / (r + gamma * b * b * p)
        if abs(p_next - p) < tol:
            return float(p_next)
        p = p_next
    raise RuntimeError("Riccati iteration did not converge")


class Lqr1D(_EpisodicEnv):
    """Scalar discounted LQR: x' = x + u, reward -(x^2 + u^2).

    Discount 0.99 is part of the task definition so the optimal value
    function is available in closed form for oracle checks:
    V*(x) = -P x^2 with P the discounted Riccati fixed point, and the
    optimal controller is u = -k x. Actions clip to [-4, 4]; episodes run
    100 steps; reset draws x ~ U[-2, 2].
    """

    a = 1.0
    b = 1.0
    q = 1.0
    r = 1.0
    gamma = 0.99

    spec = EnvSpec(
        state_dim=1,
        action_dim=1,
        action_low=np.array([-4.0]),
        action_high=np.array([4.0]),
        max_episode_steps=100,
        dt=1.0,
    )

    def __init__(self, seed: int | None = None):
        super().__init__(seed)
        self.p_star = riccati_fixed_point(self.a, self.b, self.q, self.r,
                                          self.gamma)
        self.gain = (self.gamma * self.a * self.b * self.p_star
                     / (self.r + self.gamma * self.b ** 2 * self.p_star))

    def _reset_state(self, rng):
        self.x = float(rng.uniform(-2.0, 2.0))

    def set_state(self, x: float) -> np.ndarray:
        self.x = float(x)
        self._done = False
        self._steps = 0
        return self._observe()

    def _advance(self, action):
        u = float(action[0])
        reward = -(self.x ** 2 + u ** 2)
        self.x = self.a * self.x + self.b * u
        return reward

    def _observe(self):
        return np.array([self.x])

    def lqr_optimal_value(self, x) -> np.ndarray:
        """Closed-form discounted optimal value V*(x) = -P x^2."""
        x = np.asarray(x, dtype=np.float64)
        return -self.p_star * x * x

    def optimal_action(self, x: float) -> np.ndarray:
        return np.array([-self.gain * float(x)])


_REGISTRY = {
    "pendulum": Pendulum,
    "reacher2d": Reacher2D,
    "lqr1d": Lqr1D,
}


def env_ids() -> list[str]:
    return sorted(_REGISTRY)


def make_env(env_id: str, seed: int | None = None) -> _EpisodicEnv:
    if env_id not in _REGISTRY:
        raise ValueError(f"unknown env {env_id!r}; known: {env_ids()}")
    return _REGISTRY[env_id](seed)


class ObsNormalizer:
    """Running per-dimension standardizer over observations.

    Statistics update only when ``update`` is called (collection time);
    ``normalize`` is a pure read so evaluation sees frozen statistics.
    Uses Welford's algorithm; normalized outputs clip to +-10.
    """

    def __init__(self, dim: int, enabled: bool = True, clip: float = 10.0):
        self.dim = dim
        self.enabled = enabled
        self.clip = clip
        self.count = 0
        self.mean = np.zeros(dim)
        self._m2 = np.zeros(dim)

    def update(self, obs: np.ndarray) -> None:
        if not self.enabled:
            return
        obs = np.asarray(obs, dtype=np.float64)
        self.count += 1
        delta = obs - self.mean
        self.mean = self.mean + delta / self.count
        self._m2 = self._m2 + delta * (obs - self.mean)

    @property
    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.ones(self.dim)
        return self._m2 / self.count

    def normalize(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float64)
        if not self.enabled or self.count < 2:
            return obs.copy()
        scale = np.sqrt(self.variance + 1e-8)
        return np.clip((obs - self.mean) / scale, -self.clip, self.clip)
