"""Off-policy training loop shared by the SAC baseline and the
kernel-weighted variant.

Every random draw comes from its own derived stream
``default_rng(SeedSequence([seed, purpose, step]))``, so two runs with the
same config are bit-identical, evaluation seeds are disjoint from training
seeds by construction, and the per-step draw pattern of one algorithm can
be lined up against another's in tests.

Per post-warmup step the loop performs exactly one update of each of:
critic 1, critic 2, encoder (kernel variant, unless frozen), actor,
entropy temperature, and the Polyak targets. Time-limit episode ends are
stored with continuation 1.0 so bootstrapping treats the cut as
non-terminal; the environments here end only by time limit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError
from .config import ExperimentConfig
from .envs import ObsNormalizer, Transition, make_env
from .geometry import BetaScale, GeometryConfig, make_pairs, \
    representation_loss
from .kernel_policy import KernelConfig, actor_loss, build_bundle, \
    rho_schedule
from .networks import adam_init, adam_step, grad_of, init_mlp, \
    make_target_pair, parameters, polyak_update
from .replay import Minibatch, ReplayBuffer
from .sac import GaussianPolicy, TwinCritics, conservative_q, critic_loss, \
    deterministic_action, make_temperature, sac_actor_loss, sample_action, \
    td_target, temperature_loss

# Purpose tags for derived RNG streams.
ACTOR_INIT = 1
CRITIC1_INIT = 2
CRITIC2_INIT = 3
ENCODER_INIT = 4
RESET = 5
ACTION = 6
REPLAY = 7
TD = 8
PAIRS = 9
ACTOR_UPDATE = 10
EVAL = 11


def derived_rng(seed: int, purpose: int, step: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, purpose, step]))


@dataclass
class MetricsRow:
    """One evaluation-time log line; the CSV schema mirrors these fields."""

    step: int
    mean_eval_return: float
    std_eval_return: float
    critic_loss: float
    actor_loss: float
    representation_loss: float
    eta: float
    beta: float
    rho: float
    wall_seconds: float


CSV_FIELDS = ("step", "mean_eval_return", "std_eval_return", "critic_loss",
              "actor_loss", "representation_loss", "eta", "beta", "rho",
              "wall_seconds")


def evaluate(policy_fn, env, episodes: int, seed: int) -> tuple[float, float]:
    """Mean and std of undiscounted returns over fresh seeded episodes.

    ``policy_fn`` maps a raw observation to an action array. Repeated
    calls with the same arguments return identical statistics.
    """
    returns = np.zeros(episodes)
    for ep in range(episodes):
        obs = env.reset(seed=np.random.SeedSequence([seed, ep]))
        total = 0.0
        while True:
            obs, reward, continuation = env.step(policy_fn(obs))
            total += reward
            if continuation == 0.0:
                break
        returns[ep] = total
    return float(returns.mean()), float(returns.std())


@dataclass
class _LossWindow:
    """Running means of the update losses between evaluation points."""

    critic: float = 0.0
    actor: float = 0.0
    representation: float = 0.0
    count: int = 0

    def add(self, critic, actor, representation):
        self.critic += critic
        self.actor += actor
        self.representation += representation
        self.count += 1

    def means(self) -> tuple[float, float, float]:
        if self.count == 0:
            return 0.0, 0.0, 0.0
        n = self.count
        return self.critic / n, self.actor / n, self.representation / n

    def reset(self):
        self.critic = self.actor = self.representation = 0.0
        self.count = 0


class TrainingLoop:
    """Owns the networks, buffers, and schedules for one run."""

    def __init__(self, config: ExperimentConfig):
        cfg = config.resolve()
        self.cfg = cfg
        self.env = make_env(cfg.env_id)
        self.eval_env = make_env(cfg.env_id)
        spec = self.env.spec
        obs_dim, act_dim = spec.state_dim, spec.action_dim
        hidden = list(cfg.hidden_sizes)

        policy_net = init_mlp([obs_dim, *hidden, 2 * act_dim],
                              self._rng(ACTOR_INIT))
        self.policy = GaussianPolicy(policy_net, spec.action_low,
                                     spec.action_high)
        q_sizes = [obs_dim + act_dim, *hidden, 1]
        self.critic1_pair = make_target_pair(
            init_mlp(q_sizes, self._rng(CRITIC1_INIT)), cfg.tau)
        self.critic2_pair = make_target_pair(
            init_mlp(q_sizes, self._rng(CRITIC2_INIT)), cfg.tau)
        self.critics = TwinCritics(self.critic1_pair.online,
                                   self.critic2_pair.online)
        self.critic_targets = TwinCritics(self.critic1_pair.target,
                                          self.critic2_pair.target)

        self.is_kernel = cfg.algorithm == "savgo"
        self.encoder_pair = None
        if self.is_kernel:
            self.encoder_pair = make_target_pair(
                init_mlp([obs_dim + act_dim, *hidden, cfg.embed_dim],
                         self._rng(ENCODER_INIT)), cfg.tau)
        self.geometry_cfg = GeometryConfig(cfg.curvature, cfg.huber_delta,
                                           cfg.embed_dim)
        beta_init = cfg.beta_init if cfg.fixed_beta is None else cfg.fixed_beta
        self.beta = BetaScale(beta_init, cfg.beta_decay,
                              min(cfg.beta_floor, beta_init))
        self.kernel_cfg = KernelConfig(cfg.num_candidates, cfg.epsilon,
                                       cfg.rho_max, cfg.rho_min,
                                       cfg.anneal_steps, cfg.proposal_mix)

        self.temperature = make_temperature(
            cfg.initial_eta,
            cfg.target_entropy if cfg.target_entropy is not None
            else -float(act_dim))

        self.actor_opt = adam_init(parameters(self.policy.net), cfg.actor_lr)
        self.critic1_opt = adam_init(parameters(self.critics.q1),
                                     cfg.critic_lr)
        self.critic2_opt = adam_init(parameters(self.critics.q2),
                                     cfg.critic_lr)
        self.encoder_opt = None
        if self.is_kernel:
            self.encoder_opt = adam_init(parameters(self.encoder_pair.online),
                                         cfg.encoder_lr)
        self.eta_opt = adam_init([self.temperature.log_eta], cfg.eta_lr)

        self.buffer = ReplayBuffer(cfg.replay_capacity, obs_dim, act_dim)
        self.normalizer = ObsNormalizer(obs_dim, cfg.normalize_observations)
        self.metrics: list[MetricsRow] = []

    def _rng(self, purpose: int, step: int = 0) -> np.random.Generator:
        return derived_rng(self.cfg.seed, purpose, step)

    def current_rho(self, step: int) -> float:
        if self.cfg.fixed_rho is not None:
            return self.cfg.fixed_rho
        return rho_schedule(step, self.kernel_cfg)

    def eval_policy_fn(self):
        """Deterministic policy on frozen normalizer statistics."""
        def act(obs):
            normed = self.normalizer.normalize(obs)
            return deterministic_action(self.policy, normed)[0]
        return act

    # ------------------------------------------------------------- loop --

    def run(self, step_hook=None, metrics_hook=None) -> list[MetricsRow]:
        cfg = self.cfg
        start = time.perf_counter()
        episode = 0
        obs = self.env.reset(seed=self._rng(RESET, episode))
        self.normalizer.update(obs)
        window = _LossWindow()

        for step in range(1, cfg.total_steps + 1):
            action = self._act(obs, step)
            next_obs, reward, continuation = self.env.step(action)
            stored = continuation
            if continuation == 0.0 and self.env.time_limit_only:
                stored = 1.0
            self.buffer.push(Transition(obs, action, reward, next_obs,
                                        stored))
            self.normalizer.update(next_obs)
            obs = next_obs
            if continuation == 0.0:
                episode += 1
                obs = self.env.reset(seed=self._rng(RESET, episode))
                self.normalizer.update(obs)

            if step > cfg.warmup_steps and self.buffer.size >= cfg.batch_size:
                stats = self._update(step)
                window.add(stats["critic_loss"], stats["actor_loss"],
                           stats["representation_loss"])
                if step_hook is not None:
                    step_hook(self, stats)

            if step % cfg.eval_interval == 0:
                mean_ret, std_ret = evaluate(
                    self.eval_policy_fn(), self.eval_env, cfg.eval_episodes,
                    seed=self._seed_for_eval(step))
                critic_m, actor_m, repr_m = window.means()
                row = MetricsRow(step, mean_ret, std_ret, critic_m, actor_m,
                                 repr_m, self.temperature.eta,
                                 self.beta.value, self.current_rho(step),
                                 time.perf_counter() - start)
                self.metrics.append(row)
                window.reset()
                if metrics_hook is not None:
                    metrics_hook(row)
        return self.metrics

    def _seed_for_eval(self, step: int) -> int:
        # Fold the run seed and step into one int for evaluate(); the EVAL
        # purpose keeps the stream disjoint from every training stream.
        return int(np.random.SeedSequence(
            [self.cfg.seed, EVAL, step]).generate_state(1)[0])

    def _act(self, obs: np.ndarray, step: int) -> np.ndarray:
        spec = self.env.spec
        if step <= self.cfg.warmup_steps:
            u = self._rng(ACTION, step).uniform(0.0, 1.0, spec.action_dim)
            return spec.action_low + u * (spec.action_high - spec.action_low)
        with ad.no_grad():
            normed = self.normalizer.normalize(obs)[None, :]
            action, _ = sample_action(self.policy, normed,
                                      self._rng(ACTION, step))
        return action.data[0]

    # ---------------------------------------------------------- updates --

    def _update(self, step: int) -> dict:
        cfg = self.cfg
        try:
            return self._update_inner(step)
        except NonFiniteError as err:
            raise RuntimeError(
                f"training diverged at step {step} "
                f"({cfg.algorithm} on {cfg.env_id}): {err}") from err

    def _update_inner(self, step: int) -> dict:
        cfg = self.cfg
        batch = self.buffer.sample(cfg.batch_size, self._rng(REPLAY, step))
        batch = Minibatch(self.normalizer.normalize(batch.states),
                          batch.actions, batch.rewards,
                          self.normalizer.normalize(batch.next_states),
                          batch.continuations)
        eta = self.temperature.eta

        targets = td_target(batch, self.policy, self.critic_targets, eta,
                            cfg.gamma, self._rng(TD, step))
        critic_losses = []
        for critic, opt in ((self.critics.q1, self.critic1_opt),
                            (self.critics.q2, self.critic2_opt)):
            loss = critic_loss(critic, batch.states, batch.actions, targets)
            params = parameters(critic)
            adam_step(params, grad_of(loss, params), opt)
            critic_losses.append(loss.item())

        repr_value = 0.0
        if self.is_kernel and not cfg.freeze_encoder:
            with ad.no_grad():
                q_batch = conservative_q(self.critic_targets, batch.states,
                                         batch.actions)
            pairs = make_pairs(q_batch.data, self.beta, self.geometry_cfg,
                               self._rng(PAIRS, step),
                               adapt_beta=cfg.fixed_beta is None)
            rloss = representation_loss(self.encoder_pair.online,
                                        batch.states, batch.actions, pairs,
                                        self.geometry_cfg)
            params = parameters(self.encoder_pair.online)
            adam_step(params, grad_of(rloss, params), self.encoder_opt)
            repr_value = rloss.item()

        actor_started = time.perf_counter()
        bundle = None
        if self.is_kernel:
            bundle = build_bundle(batch.states, self.policy,
                                  self.encoder_pair.target,
                                  self.critic_targets, self.kernel_cfg, step,
                                  self._rng(ACTOR_UPDATE, step),
                                  rho_override=cfg.fixed_rho)
            a_loss = actor_loss(bundle, bundle.anchor_log_prob, eta)
            log_probs = bundle.anchor_log_prob.data
            rho_used = bundle.rho
        else:
            a_loss, log_probs = sac_actor_loss(
                self.policy, self.critic_targets, batch.states, eta,
                self._rng(ACTOR_UPDATE, step))
            rho_used = self.current_rho(step)
        params = parameters(self.policy.net)
        adam_step(params, grad_of(a_loss, params), self.actor_opt)
        actor_seconds = time.perf_counter() - actor_started

        t_loss = temperature_loss(self.temperature, log_probs)
        adam_step([self.temperature.log_eta],
                  grad_of(t_loss, [self.temperature.log_eta]), self.eta_opt)

        polyak_update(self.critic1_pair)
        polyak_update(self.critic2_pair)
        if self.is_kernel and not cfg.freeze_encoder:
            polyak_update(self.encoder_pair)

        return {
            "step": step,
            "critic_loss": float(np.mean(critic_losses)),
            "actor_loss": a_loss.item(),
            "representation_loss": repr_value,
            "eta": self.temperature.eta,
            "beta": self.beta.value,
            "rho": rho_used,
            "actor_seconds": actor_seconds,
            "bundle": bundle,
        }


def train(config: ExperimentConfig, step_hook=None,
          metrics_hook=None) -> TrainingLoop:
    """Run one experiment; returns the loop with metrics and networks."""
    loop = TrainingLoop(config)
    loop.run(step_hook=step_hook, metrics_hook=metrics_hook)
    return loop
