"""Kernel-weighted policy evaluation: schedule, candidates, weights, Q_hat."""

import numpy as np
import pytest

from savgo import autodiff as ad
from savgo import kernel_policy as kp
from savgo import sac
from savgo.autodiff import Tensor
from savgo.networks import init_mlp, make_target, parameters

from helpers import check_gradients


def _policy(obs_dim=3, low=(-1.0,), high=(1.0,), hidden=(8,), seed=0):
    sizes = [obs_dim, *hidden, 2 * len(low)]
    return sac.GaussianPolicy(init_mlp(sizes, np.random.default_rng(seed)),
                              np.asarray(low), np.asarray(high))


def _nets(obs_dim=3, act_dim=1, hidden=(8,), seed=1):
    rngs = [np.random.default_rng(seed + i) for i in range(3)]
    critics = sac.TwinCritics(
        init_mlp([obs_dim + act_dim, *hidden, 1], rngs[0]),
        init_mlp([obs_dim + act_dim, *hidden, 1], rngs[1]))
    encoder = init_mlp([obs_dim + act_dim, *hidden, 6], rngs[2])
    return critics, encoder


# --- rho schedule ----------------------------------------------------------

def test_rho_schedule_endpoints():
    cfg = kp.KernelConfig()
    assert kp.rho_schedule(0, cfg) == 0.75
    assert kp.rho_schedule(200_000, cfg) == pytest.approx(0.05, abs=1e-15)
    assert kp.rho_schedule(10_000_000, cfg) == pytest.approx(0.05, abs=1e-15)


def test_rho_schedule_midpoint():
    cfg = kp.KernelConfig()
    assert abs(kp.rho_schedule(100_000, cfg) - 0.40) < 1e-12


def test_rho_schedule_monotone_decrease():
    cfg = kp.KernelConfig(anneal_steps=1000)
    vals = [kp.rho_schedule(t, cfg) for t in range(0, 1001, 50)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        kp.rho_schedule(-1, cfg)


# --- candidate sampling ----------------------------------------------------

def test_candidate_shape_and_bounds():
    policy = _policy(low=(-0.5, -2.0), high=(1.5, 2.0))
    cfg = kp.KernelConfig(num_candidates=16, proposal_mix=0.25)
    states = np.random.default_rng(2).normal(size=(6, 3))
    cands = kp.sample_candidates(policy, states, cfg,
                                 np.random.default_rng(3))
    assert cands.shape == (6, 16, 2)
    assert np.all(cands > np.array([-0.5, -2.0]))
    assert np.all(cands <= np.array([1.5, 2.0]))


def test_candidates_all_from_policy_at_mix_zero():
    # a near-deterministic policy pins its samples near tanh(mean), so a
    # pure-policy candidate set collapses onto that point
    net = init_mlp([3, 2], np.random.default_rng(4))
    net.weights[0].data[:] = 0.0
    net.biases[0].data[:] = [0.7, -30.0]  # mean 0.7, log_std at clamp floor
    policy = sac.GaussianPolicy(net, np.array([-1.0]), np.array([1.0]))
    cfg = kp.KernelConfig(num_candidates=8, proposal_mix=0.0)
    cands = kp.sample_candidates(policy, np.zeros((4, 3)), cfg,
                                 np.random.default_rng(5))
    assert np.max(np.abs(cands - np.tanh(0.7))) < 1e-7


def test_candidates_uniform_at_mix_one():
    # 100k draws into 20 bins: each bin count is Binomial(n, 0.05)
    policy = _policy(low=(-2.0,), high=(2.0,))
    cfg = kp.KernelConfig(num_candidates=10, proposal_mix=1.0)
    rng = np.random.default_rng(6)
    draws = kp.sample_candidates(policy, np.zeros((10_000, 3)), cfg,
                                 rng).ravel()
    assert draws.size == 100_000
    counts, _ = np.histogram(draws, bins=20, range=(-2.0, 2.0))
    expect = draws.size / 20
    sigma = np.sqrt(draws.size * 0.05 * 0.95)
    assert np.all(np.abs(counts - expect) <= 3 * sigma)


def test_candidate_split_rounds_up_policy_share():
    policy = _policy()
    cfg = kp.KernelConfig(num_candidates=5, proposal_mix=0.5)
    # ceil(0.5 * 5) = 3 policy draws come first in the stream
    rng_a = np.random.default_rng(7)
    cands = kp.sample_candidates(policy, np.zeros((1, 3)), cfg, rng_a)
    assert cands.shape == (1, 5, 1)


# --- kernel weights ---------------------------------------------------------

def test_weights_equal_similarities_give_uniform():
    w = kp.kernel_weights(np.full((3, 4), 0.2), rho=0.3, epsilon=0.0)
    assert np.allclose(w.data, 0.25, atol=1e-15)


def test_weights_epsilon_one_is_uniform_regardless():
    rng = np.random.default_rng(8)
    w = kp.kernel_weights(rng.normal(size=(5, 8)), rho=0.1, epsilon=1.0)
    assert np.max(np.abs(w.data - 0.125)) < 1e-12


def test_weights_two_candidate_hand_example():
    w = kp.kernel_weights(np.array([[1.0, 0.0]]), rho=1.0, epsilon=0.0)
    e = np.e
    assert np.allclose(w.data, [[e / (e + 1), 1 / (e + 1)]], atol=1e-15)
    assert abs(w.data[0, 0] - 0.7311) < 5e-5
    assert abs(w.data[0, 1] - 0.2689) < 5e-5


def test_weights_low_temperature_concentrates_on_argmax():
    c = np.array([[1.0, 0.9, 0.5, -0.2]])
    w = kp.kernel_weights(c, rho=1e-4, epsilon=0.0).data
    assert w[0, 0] >= 1.0 - 1e-6


def test_weights_simplex_invariants():
    rng = np.random.default_rng(9)
    for _ in range(200):
        k = int(rng.integers(2, 12))
        c = rng.uniform(-1, 1, (4, k))
        rho = rng.uniform(0.05, 0.75)
        eps = float(rng.choice([0.0, 0.05, 1.0]))
        w = kp.kernel_weights(c, rho, eps).data
        assert np.all(np.abs(w.sum(axis=1) - 1.0) <= 1e-9)
        assert np.all(w >= eps / k - 1e-12)


def test_weights_survive_extreme_similarity_scale():
    # max-subtraction keeps the softmax finite for huge logits
    w = kp.kernel_weights(np.array([[4000.0, -4000.0]]), rho=1e-3,
                          epsilon=0.0).data
    assert np.all(np.isfinite(w))
    assert abs(w.sum() - 1.0) < 1e-9


def test_weights_argmax_mass_nonincreasing_in_rho():
    c = np.array([[0.9, 0.1, -0.4]])
    masses = [kp.kernel_weights(c, rho, 0.0).data[0, 0]
              for rho in np.linspace(0.01, 2.0, 40)]
    assert all(a >= b - 1e-15 for a, b in zip(masses, masses[1:]))


def test_weights_permutation_equivariance():
    rng = np.random.default_rng(10)
    c = rng.uniform(-1, 1, (3, 6))
    perm = rng.permutation(6)
    w = kp.kernel_weights(c, 0.2, 0.05).data
    w_perm = kp.kernel_weights(c[:, perm], 0.2, 0.05).data
    assert np.allclose(w[:, perm], w_perm, atol=1e-15)
    q = rng.normal(size=(3, 6))
    v = kp.kernel_value(Tensor(w), q).data
    v_perm = kp.kernel_value(Tensor(w_perm), q[:, perm]).data
    assert np.allclose(v, v_perm, atol=1e-12)


def test_weights_validate_epsilon():
    with pytest.raises(ValueError):
        kp.kernel_weights(np.zeros((1, 2)), 0.1, 1.5)


# --- kernel value ------------------------------------------------------------

def test_kernel_value_examples():
    assert kp.kernel_value(Tensor(np.array([[0.25, 0.75]])),
                           np.array([[0.0, 4.0]])).data.item() == 3.0
    assert kp.kernel_value(Tensor(np.array([[0.0, 1.0, 0.0]])),
                           np.array([[5.0, -2.0, 9.0]])).data.item() == -2.0
    q = np.array([[1.0, 2.0, 3.0, 4.0]])
    w = np.full((1, 4), 0.25)
    assert kp.kernel_value(Tensor(w), q).data.item() == 2.5


# --- bundle ------------------------------------------------------------------

def _bundle(policy, critics, encoder, cfg, states, seed=11, step=0):
    return kp.build_bundle(states, policy, encoder, critics, cfg, step,
                           np.random.default_rng(seed))


def test_bundle_single_candidate_epsilon_zero_uses_its_q():
    policy = _policy(seed=12)
    critics, encoder = _nets(seed=13)
    cfg = kp.KernelConfig(num_candidates=1, epsilon=0.0, proposal_mix=0.0)
    states = np.random.default_rng(14).normal(size=(5, 3))
    b = _bundle(policy, critics, encoder, cfg, states)
    assert np.allclose(b.weights.data, 1.0, atol=1e-15)
    assert np.allclose(b.q_hat.data.ravel(), b.candidate_values.ravel(),
                       atol=1e-15)


def test_bundle_epsilon_one_matches_plain_mean():
    policy = _policy(seed=15)
    critics, encoder = _nets(seed=16)
    cfg = kp.KernelConfig(num_candidates=12, epsilon=1.0)
    states = np.random.default_rng(17).normal(size=(8, 3))
    b = _bundle(policy, critics, encoder, cfg, states)
    assert np.max(np.abs(b.q_hat.data.ravel()
                         - b.candidate_values.mean(axis=1))) < 1e-12


def test_bundle_q_hat_is_convex_combination():
    policy = _policy(seed=18)
    critics, encoder = _nets(seed=19)
    cfg = kp.KernelConfig(num_candidates=16, epsilon=0.05)
    states = np.random.default_rng(20).normal(size=(32, 3))
    b = _bundle(policy, critics, encoder, cfg, states)
    q_hat = b.q_hat.data.ravel()
    assert np.all(q_hat >= b.candidate_values.min(axis=1) - 1e-12)
    assert np.all(q_hat <= b.candidate_values.max(axis=1) + 1e-12)


def test_bundle_rho_follows_schedule_and_override():
    policy = _policy(seed=21)
    critics, encoder = _nets(seed=22)
    cfg = kp.KernelConfig(num_candidates=4, anneal_steps=100)
    states = np.zeros((2, 3))
    b = _bundle(policy, critics, encoder, cfg, states, step=0)
    assert b.rho == 0.75
    b = kp.build_bundle(states, policy, encoder, critics, cfg, 0,
                        np.random.default_rng(23), rho_override=0.33)
    assert b.rho == 0.33


def test_actor_loss_hand_value():
    # eta=0.2, logp=-1, q_hat=2 -> -2.2
    bundle = kp.KernelBundle(
        anchor_action=Tensor(np.zeros((1, 1))),
        anchor_log_prob=Tensor(np.array([[-1.0]])),
        anchor_embedding=Tensor(np.zeros((1, 4))),
        candidate_actions=np.zeros((1, 2, 1)),
        candidate_values=np.zeros((1, 2)),
        similarities=Tensor(np.zeros((1, 2))),
        weights=Tensor(np.full((1, 2), 0.5)),
        q_hat=Tensor(np.array([[2.0]])),
        rho=0.5)
    loss = kp.actor_loss(bundle, bundle.anchor_log_prob, eta=0.2)
    assert abs(loss.data.item() - (-2.2)) < 1e-15


def test_actor_loss_eta_zero_is_negative_mean_q_hat():
    policy = _policy(seed=24)
    critics, encoder = _nets(seed=25)
    cfg = kp.KernelConfig(num_candidates=8)
    states = np.random.default_rng(26).normal(size=(6, 3))
    b = _bundle(policy, critics, encoder, cfg, states)
    loss = kp.actor_loss(b, b.anchor_log_prob, eta=0.0)
    assert abs(loss.data.item() + b.q_hat.data.mean()) < 1e-12


def test_actor_gradient_matches_finite_differences():
    # candidates are constants of the objective, so the finite-difference
    # probe must hold them fixed while theta moves
    policy = _policy(hidden=(4,), seed=27)
    critics, encoder = _nets(hidden=(6,), seed=28)
    cfg = kp.KernelConfig(num_candidates=6, epsilon=0.05, proposal_mix=0.2)
    states = np.random.default_rng(29).normal(size=(4, 3))
    frozen = kp.sample_candidates(policy, states, cfg,
                                  np.random.default_rng(30))

    def loss_fn():
        b = kp.build_bundle(states, policy, encoder, critics, cfg, 1000,
                            np.random.default_rng(31), candidates=frozen)
        return kp.actor_loss(b, b.anchor_log_prob, eta=0.2)

    check_gradients(loss_fn, parameters(policy.net), tol=1e-4)


def test_actor_gradient_with_box_candidates_needs_no_freezing():
    # with a pure-uniform proposal the candidate set never depends on
    # theta, so differencing straight through build_bundle is valid too
    policy = _policy(hidden=(4,), seed=43)
    critics, encoder = _nets(hidden=(6,), seed=44)
    cfg = kp.KernelConfig(num_candidates=5, epsilon=0.0, proposal_mix=1.0)
    states = np.random.default_rng(45).normal(size=(3, 3))

    def loss_fn():
        b = kp.build_bundle(states, policy, encoder, critics, cfg, 0,
                            np.random.default_rng(46))
        return kp.actor_loss(b, b.anchor_log_prob, eta=0.1)

    check_gradients(loss_fn, parameters(policy.net), tol=1e-4)


def test_gradient_reaches_policy_even_with_entropy_off():
    # the kernel path alone (anchor embedding inside the weights) must
    # carry signal back to theta
    policy = _policy(hidden=(4,), seed=31)
    critics, encoder = _nets(hidden=(6,), seed=32)
    cfg = kp.KernelConfig(num_candidates=6, epsilon=0.0, proposal_mix=0.2)
    states = np.random.default_rng(33).normal(size=(4, 3))
    b = kp.build_bundle(states, policy, encoder, critics, cfg, 0,
                        np.random.default_rng(34))
    loss = kp.actor_loss(b, b.anchor_log_prob, eta=0.0)
    loss.backward()
    total = sum(np.abs(p.grad).sum() for p in parameters(policy.net))
    assert total > 0.0


def test_candidates_and_critics_stay_out_of_the_graph():
    policy = _policy(seed=35)
    critics, encoder = _nets(seed=36)
    target = sac.TwinCritics(make_target(critics.q1), make_target(critics.q2))
    enc_target = make_target(encoder)
    cfg = kp.KernelConfig(num_candidates=8)
    states = np.random.default_rng(37).normal(size=(5, 3))
    b = kp.build_bundle(states, policy, enc_target, target, cfg, 0,
                        np.random.default_rng(38))
    loss = kp.actor_loss(b, b.anchor_log_prob, eta=0.2)
    loss.backward()
    frozen = (parameters(target.q1) + parameters(target.q2)
              + parameters(enc_target))
    assert all(p.grad is None for p in frozen)


def test_online_encoder_is_not_consulted():
    # bundle uses the target encoder; shifting the online encoder's
    # parameters must not move the loss, shifting the target's must
    policy = _policy(seed=39)
    critics, encoder = _nets(seed=40)
    enc_target = make_target(encoder)
    cfg = kp.KernelConfig(num_candidates=8, epsilon=0.0)
    states = np.random.default_rng(41).normal(size=(5, 3))

    def loss_value():
        b = kp.build_bundle(states, policy, enc_target, critics, cfg, 0,
                            np.random.default_rng(42))
        return kp.actor_loss(b, b.anchor_log_prob, eta=0.2).data.item()

    base = loss_value()
    for p in parameters(encoder):
        p.data += 0.5
    assert loss_value() == base
    enc_target.weights[0].data += 0.5
    assert loss_value() != base


def test_kernel_config_validation():
    with pytest.raises(ValueError):
        kp.KernelConfig(num_candidates=0)
    with pytest.raises(ValueError):
        kp.KernelConfig(epsilon=-0.1)
    with pytest.raises(ValueError):
        kp.KernelConfig(rho_max=0.1, rho_min=0.2)
    with pytest.raises(ValueError):
        kp.KernelConfig(proposal_mix=1.5)
    with pytest.raises(ValueError):
        kp.KernelConfig(anneal_steps=0)
