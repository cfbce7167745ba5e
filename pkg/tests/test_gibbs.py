import numpy as np
import pytest

from iffsm.gibbs import (
    SamplerConfig,
    SamplerState,
    TemperSchedule,
    TransitionCounts,
    channel_posterior,
    extended_design,
    full_iteration,
    init_state,
    log_joint,
    read_snapshot,
    sample_channels,
    sample_tap_variances,
    sample_transition_probs,
    write_snapshot,
)
from iffsm.model import Constellation, GlobalParams, Hyperparams, log_prior_latent, loglik_sequence
from iffsm.simulator import ScenarioConfig, simulate


def test_transition_counts_by_hand():
    idx = np.array([[0, 1], [2, 1], [3, 0], [0, 0]])
    c = TransitionCounts.from_idx(idx)
    np.testing.assert_array_equal(c.n00, [1, 1])
    np.testing.assert_array_equal(c.n01, [1, 1])
    np.testing.assert_array_equal(c.n11, [1, 1])
    np.testing.assert_array_equal(c.n10, [1, 1])
    np.testing.assert_array_equal(c.total, [4, 4])


def test_transition_probs_need_activation(rng):
    c = TransitionCounts.from_idx(np.zeros((5, 1), int))
    with pytest.raises(ValueError):
        sample_transition_probs(c, Hyperparams(), rng)
    a, b = sample_transition_probs(c, Hyperparams(), rng, a_shape=0.5)
    assert 0 < a[0] < 1 and 0 < b[0] < 1


def test_transition_probs_stay_inside_unit_interval(rng):
    # Beta(2, 0.1) puts visible mass on 1.0 in double precision
    c = TransitionCounts(*(np.zeros(20000, int) for _ in range(2)), np.zeros(20000, int),
                         np.zeros(20000, int))
    c.n01[:] = 1
    _, b = sample_transition_probs(c, Hyperparams(), rng)
    assert np.all(b < 1.0) and np.all(b > 0.0)


def test_extended_design_layout():
    X = np.array([[1, 10], [2, 20], [3, 30]], complex)
    Xe = extended_design(X, 2)
    np.testing.assert_array_equal(Xe, [[1, 0, 10, 0], [2, 1, 20, 10], [3, 2, 30, 20]])


def test_channel_posterior_is_ridge_solution(rng, qpsk):
    T, M, L, D = 40, 2, 2, 3
    X = qpsk.alphabet[rng.integers(0, 5, (T, M))]
    Y = rng.standard_normal((T, D)) + 1j * rng.standard_normal((T, D))
    tap_var = np.array([1.0, 0.4])
    sigma2 = 0.7
    mean, gamma = channel_posterior(Y, X, tap_var, sigma2)
    # stack prior as pseudo-observations and solve by least squares
    Xe = extended_design(X, L)
    prior_sd = np.sqrt(np.tile(tap_var, M))
    A = np.vstack((Xe / np.sqrt(sigma2), np.diag(1 / prior_sd)))
    B = np.vstack((Y / np.sqrt(sigma2), np.zeros((M * L, D))))
    ref = np.linalg.lstsq(A, B, rcond=None)[0].reshape(M, L, D)
    np.testing.assert_allclose(mean, ref, atol=1e-10)
    np.testing.assert_allclose(gamma, np.linalg.inv(A.conj().T @ A), atol=1e-10)


def test_channel_draws_match_posterior_moments(rng, qpsk):
    T, M, L, D = 30, 2, 1, 1
    X = qpsk.alphabet[rng.integers(0, 5, (T, M))]
    Y = rng.standard_normal((T, D)) + 1j * rng.standard_normal((T, D))
    mean, gamma = channel_posterior(Y, X, np.ones(1), 1.5)
    draws = np.array([sample_channels(Y, X, np.ones(1), 1.5, rng)[:, 0, 0] for _ in range(20000)])
    np.testing.assert_allclose(draws.mean(axis=0), mean[:, 0, 0], atol=0.02)
    cov = np.cov(draws.T)
    np.testing.assert_allclose(cov, gamma, atol=0.02)


def test_channels_without_chains(rng):
    assert sample_channels(np.zeros((4, 2)), np.zeros((4, 0)), np.ones(3), 1.0, rng).shape == (0, 3, 2)


def test_tap_variance_shape(rng):
    taps = np.ones((3, 4, 2), complex)
    v = sample_tap_variances(taps, Hyperparams(), rng)
    assert v.shape == (4,) and np.all(v > 0)


def test_geometric_schedule_frozen_horizon():
    s = TemperSchedule(1.0, decay=0.9995)
    # ceil(log(0.01 / (10**1.2 - 1)) / log(0.9995))
    assert s.temper_iters == 14603
    assert s.sigma2(0) == pytest.approx(10 ** 1.2)
    assert s.sigma2(s.temper_iters) == 1.0
    vals = [s.sigma2(i) for i in range(0, 16000, 500)]
    assert np.all(np.diff(vals) <= 0)
    assert TemperSchedule(2.0, decay=0.99, n_exploit=200).total_iters == 651 + 200


def test_lineardb_schedule():
    s = TemperSchedule(1e-3, start_var=10.0, mode="lineardb", n_temper=4)
    db = [10 * np.log10(s.sigma2(i)) for i in range(5)]
    np.testing.assert_allclose(np.diff(db), -10.0, rtol=1e-12)
    with pytest.raises(ValueError):
        TemperSchedule(1.0, mode="lineardb")


def test_off_schedule_and_bad_mode():
    s = TemperSchedule(2.0, mode="off", n_exploit=7)
    assert s.total_iters == 7 and s.sigma2(0) == 2.0
    with pytest.raises(ValueError):
        TemperSchedule(2.0, mode="cosine")
    with pytest.raises(ValueError):
        TemperSchedule(2.0, decay=1.5)


def test_adaptive_particle_count():
    assert SamplerConfig(particles=100).n_particles(50) == 100
    assert SamplerConfig(particles=100, particles_per_chain=30).n_particles(5) == 150


def test_init_state_seeds_one_idle_chain(rng):
    s = init_state(20, 3, Hyperparams(), rng, n_taps=2)
    assert s.idx.shape == (20, 1) and not s.idx.any()
    assert s.globals_.taps.shape == (1, 2, 3)
    assert s.next_id == 1
    assert init_state(20, 3, Hyperparams(), rng, seed_chain=False).n_chains == 0


def test_log_joint_by_hand(rng, qpsk):
    T, M, L, D = 6, 2, 2, 3
    idx = rng.integers(0, 5, (T, M)).astype(np.int16)
    taps = rng.standard_normal((M, L, D)) + 1j * rng.standard_normal((M, L, D))
    g = GlobalParams(np.array([0.2, 0.3]), np.array([0.8, 0.9]), taps, np.array([1.0, 0.5]))
    Y = rng.standard_normal((T, D)) + 1j * rng.standard_normal((T, D))
    state = SamplerState(idx, g, np.arange(M))
    hyper = Hyperparams(noise_var=0.9)
    ref = (loglik_sequence(Y, qpsk.alphabet[idx], taps, 0.9).sum()
           + log_prior_latent(idx, g.a, g.b, 4))
    for m in range(M):
        for ell in range(L):
            v = g.tap_var[ell]
            ref += -D * np.log(np.pi * v) - np.sum(np.abs(taps[m, ell]) ** 2) / v
    assert log_joint(Y, state, hyper, qpsk) == pytest.approx(ref, rel=1e-12)


def test_full_iteration_finds_strong_users():
    cfg = ScenarioConfig(T=150, D=8, n_tx=2, burst_len=80, noise_var=0.2)
    rng = np.random.default_rng(3)
    Y, truth = simulate(cfg, rng)
    hyper = Hyperparams(noise_var=0.2)
    schedule = TemperSchedule(0.2, start_var=2.0, decay=0.95, n_exploit=40)
    config = SamplerConfig(particles=200)
    state = init_state(150, 8, hyper, rng)
    c = Constellation.qpsk()
    for i in range(schedule.total_iters):
        state = full_iteration(state, Y, schedule, i, rng, hyper, c, config)
        assert len(set(state.chain_ids.tolist())) == state.n_chains
        assert state.idx.any(axis=0).all()
    assert state.n_chains == 2
    assert state.iteration == schedule.total_iters
    assert np.isfinite(state.logjoint)


def test_snapshot_round_trip(tmp_path, rng):
    state = init_state(7, 2, Hyperparams(), rng, n_taps=2)
    state.idx[2:5, 0] = [1, 3, 4]
    state.iteration, state.sigma2, state.logjoint = 12, 1.25, -321.5
    f = tmp_path / "s.snap"
    write_snapshot(f, state)
    back = read_snapshot(f)
    np.testing.assert_array_equal(back.idx, state.idx)
    np.testing.assert_array_equal(back.globals_.taps, state.globals_.taps)
    np.testing.assert_array_equal(back.globals_.a, state.globals_.a)
    np.testing.assert_array_equal(back.chain_ids, state.chain_ids)
    assert (back.iteration, back.sigma2, back.logjoint, back.next_id) == (12, 1.25, -321.5, 1)


def test_snapshot_rejects_foreign_file(tmp_path):
    f = tmp_path / "x.snap"
    f.write_text("hello\n")
    with pytest.raises(ValueError):
        read_snapshot(f)
