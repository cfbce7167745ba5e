import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from iffsm.model import (
    Constellation,
    GlobalParams,
    Hyperparams,
    log_prior_latent,
    log_transition,
    loglik_obs,
    loglik_sequence,
    mean_sequence,
    snr_db,
    transition_table,
)
from iffsm.numerics import DomainError


@pytest.mark.parametrize("order", [4, 16, 64, 1024])
def test_qam_unit_energy(order):
    c = Constellation.qam(order)
    assert c.order == order
    assert c.energy == pytest.approx(1.0, rel=1e-12)


def test_qpsk_points():
    c = Constellation.qpsk()
    expected = {(s1 + 1j * s2) / np.sqrt(2) for s1 in (-1, 1) for s2 in (-1, 1)}
    got = set(np.round(c.symbols, 12))
    assert got == set(np.round(list(expected), 12))


def test_qam16_gray_neighbours_differ_in_one_bit():
    c = Constellation.qam(16)
    step = 2 / np.sqrt(10)
    for i, p in enumerate(c.symbols):
        for j, q in enumerate(c.symbols):
            if abs(abs(p - q) - step) < 1e-9:
                assert bin(i ^ j).count("1") == 1


def test_alphabet_prepends_idle(qpsk):
    assert qpsk.alphabet[0] == 0
    np.testing.assert_array_equal(qpsk.index_of(qpsk.alphabet), np.arange(5))


def test_index_of_rejects_foreign_value(qpsk):
    with pytest.raises(DomainError):
        qpsk.index_of(0.3 + 0.1j)


def test_constellation_rejects_zero_and_duplicates():
    with pytest.raises(ValueError):
        Constellation(np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        Constellation(np.array([1.0, 1.0]))


def test_symmetry_groups(bpsk, qpsk):
    np.testing.assert_allclose(bpsk.symmetry_group(), [1, -1])
    g = qpsk.symmetry_group()
    assert g.size == 4
    assert all(np.min(np.abs(g - r)) < 1e-12 for r in (1, 1j, -1, -1j))
    assert Constellation.qam(16).symmetry_group().size == 4


def test_rotation_permutation_fixes_idle(qpsk):
    for r in qpsk.symmetry_group():
        perm = qpsk.rotation_permutation(r)
        assert perm[0] == 0
        np.testing.assert_allclose(qpsk.alphabet[perm], r * qpsk.alphabet, atol=1e-12)


def test_by_name():
    assert Constellation.by_name("QPSK").order == 4
    assert Constellation.by_name("qam1024").order == 1024
    assert Constellation.by_name("16-QAM").order == 16
    with pytest.raises(ValueError):
        Constellation.by_name("8psk")


def test_constellation_file(tmp_path):
    f = tmp_path / "pts.txt"
    f.write_text("# two points\n1 0\n-1 0\n")
    c = Constellation.from_file(f)
    np.testing.assert_allclose(c.symbols, [1, -1])
    f.write_text("1 0 3\n")
    with pytest.raises(ValueError):
        Constellation.from_file(f)


def test_hyperparams_frozen_values():
    h = Hyperparams()
    assert h.tau == 3.0
    np.testing.assert_allclose(h.nu(3), [2.0, 2.0 * np.exp(-0.5), 2.0 * np.exp(-1.0)])
    # prior mean of each tap variance is nu / (tau - 1)
    np.testing.assert_allclose(h.nu(3) / (h.tau - 1), h.tap_var_mean(3))
    with pytest.raises(DomainError):
        Hyperparams(alpha=0.0)


def test_global_params_shape_checks():
    with pytest.raises(ValueError):
        GlobalParams(np.ones(2) / 2, np.ones(3) / 2, np.zeros((2, 1, 1)))
    g = GlobalParams(np.array([0.1, 0.2]), np.array([0.5, 0.6]), np.zeros((2, 1, 3)))
    h = g.append(0.05, 0.9, np.ones((1, 1, 3)))
    assert h.n_chains == 3 and g.n_chains == 2
    assert h.subset([2]).a[0] == 0.05


def test_loglik_obs_direct(rng):
    M, L, D = 2, 3, 4
    taps = rng.standard_normal((M, L, D)) + 1j * rng.standard_normal((M, L, D))
    win = rng.standard_normal((L, M)) + 1j * rng.standard_normal((L, M))
    y = rng.standard_normal(D) + 1j * rng.standard_normal(D)
    mean = sum(taps[m, l] * win[l, m] for m in range(M) for l in range(L))
    ref = -D * np.log(np.pi * 0.8) - np.sum(np.abs(y - mean) ** 2) / 0.8
    assert loglik_obs(y, win, taps, 0.8) == pytest.approx(ref, rel=1e-12)
    with pytest.raises(ValueError):
        loglik_obs(y, win[:2], taps, 0.8)


def test_mean_sequence_convolution(rng):
    T, M, L, D = 6, 2, 3, 2
    X = rng.standard_normal((T, M)) + 0j
    taps = rng.standard_normal((M, L, D)) + 0j
    out = mean_sequence(X, taps)
    for t in range(T):
        ref = sum(taps[m, l] * X[t - l, m] for m in range(M) for l in range(L) if t - l >= 0)
        np.testing.assert_allclose(out[t], ref, atol=1e-12)


def test_loglik_sequence_sums_loglik_obs(rng, qpsk):
    T, M, L, D = 5, 2, 2, 3
    idx = rng.integers(0, 5, (T, M))
    X = qpsk.alphabet[idx]
    taps = rng.standard_normal((M, L, D)) + 1j * rng.standard_normal((M, L, D))
    Y = rng.standard_normal((T, D)) + 1j * rng.standard_normal((T, D))
    Xp = np.vstack((np.zeros((L - 1, M)), X))
    per_t = [loglik_obs(Y[t], Xp[t + L - 1 - np.arange(L)], taps, 1.1) for t in range(T)]
    np.testing.assert_allclose(loglik_sequence(Y, X, taps, 1.1), per_t, rtol=1e-12)


@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.integers(1, 16))
def test_transition_rows_normalized(a, b, K):
    tab = transition_table([a], [b], K)
    np.testing.assert_allclose(np.exp(tab).sum(axis=2), 1.0, rtol=1e-12)


def test_log_transition_matches_table(qpsk):
    tab = transition_table([0.3], [0.8], 4)
    for s_prev in (0, 1):
        for k, x in enumerate(qpsk.alphabet):
            got = log_transition(s_prev, int(k > 0), x, 0.3, 0.8, qpsk)
            assert got == pytest.approx(tab[0, s_prev, k])
    assert log_transition(0, 1, 0j, 0.3, 0.8, qpsk) == -np.inf
    with pytest.raises(DomainError):
        log_transition(0, 0, 0j, 1.0, 0.5, qpsk)


def test_log_prior_latent_by_hand():
    # one chain: idle, active(k=1), active(k=2), idle with a=0.2, b=0.7, BPSK
    idx = np.array([[0], [1], [2], [0]])
    ref = np.log(0.8) + np.log(0.2 / 2) + np.log(0.7 / 2) + np.log(0.3)
    assert log_prior_latent(idx, [0.2], [0.7], 2) == pytest.approx(ref)


def test_log_prior_latent_normalizes_over_sequences():
    from itertools import product

    total = sum(np.exp(log_prior_latent(np.array(seq).reshape(3, 1), [0.3], [0.6], 2))
                for seq in product(range(3), repeat=3))
    assert total == pytest.approx(1.0)


def test_snr_db_frozen():
    assert snr_db(20, 1, 1.0) == pytest.approx(13.010299956639813)
    assert snr_db(20, 1, 10 ** 1.2) == pytest.approx(1.0102999566398125)
