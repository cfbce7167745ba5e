import numpy as np
import pytest

from iffsm.baselines import (
    GenieConfig,
    GenieResult,
    StateSpaceTooLarge,
    bcjr_joint,
    enumerate_posterior,
    extended_means,
    extended_transition,
    ffbs_chain,
    ffbs_gibbs,
    genie_pgas,
    joint_state_digits,
)
from iffsm.model import Constellation
from iffsm.simulator import gen_observations


@pytest.fixture
def toy(rng):
    taps = np.array([[[1.0 + 0.2j], [0.4j]], [[-0.3 + 0.8j], [0.5]]])   # N_t=2, L=2, D=1
    genie = GenieConfig(taps, 0.4, Constellation.bpsk(), a=0.35, b=0.75)
    X = np.array([[1, 0], [-1, 1], [0, 1]], complex)
    return genie, gen_observations(X, taps, 0.4, rng)


def test_genie_defaults():
    g = GenieConfig(np.zeros((2, 1, 3)), 1.0)
    assert (g.a, g.b) == (0.998, 0.002)
    assert g.constellation.order == 4
    with pytest.raises(ValueError):
        GenieConfig(np.zeros((2, 3)), 1.0)


@pytest.mark.parametrize("L", [1, 2, 3])
def test_extended_transition_rows_stochastic(L):
    A = extended_transition(0.3, 0.8, 4, L)
    assert A.shape == (5 ** L, 5 ** L)
    np.testing.assert_allclose(A.sum(axis=1), 1.0)


def test_extended_transition_shifts_inputs():
    K, L = 3, 2
    A = extended_transition(0.3, 0.8, 2, L)
    for e in range(K ** L):
        nxt = np.flatnonzero(A[e])
        # successor keeps the current input as its lag-1 digit
        assert np.all((nxt // K) % K == e % K)


def test_extended_means():
    taps = np.array([[2.0], [3.0j]])
    mu = extended_means(taps, np.array([0, 1, -1], complex))
    # state e = k0 + 3 k1 -> 2 x(k0) + 3j x(k1)
    assert mu[1 + 3 * 2, 0] == pytest.approx(2.0 - 3.0j)
    assert mu[0, 0] == 0


def test_joint_digits_round_trip():
    dig = joint_state_digits(2, 2, 3)
    e = np.sum(dig * 3 ** (np.arange(2)[:, None] * 2 + np.arange(2)[None, :]), axis=(1, 2))
    np.testing.assert_array_equal(e, np.arange(81))


def test_bcjr_matches_enumeration_with_memory(toy):
    genie, Y = toy
    np.testing.assert_allclose(bcjr_joint(Y, genie).marginals, enumerate_posterior(Y, genie),
                               atol=1e-12)


def test_ffbs_matches_enumeration_with_memory(toy, rng):
    genie, Y = toy
    res = ffbs_gibbs(Y, genie, 6000, rng, burn_in=100)
    assert res.n_samples == 5900
    np.testing.assert_allclose(res.marginals, enumerate_posterior(Y, genie), atol=0.03)


def test_genie_pgas_blockwise(toy, rng):
    genie, Y = toy
    res = genie_pgas(Y, genie, 8, 6000, rng, burn_in=100, block_size=1, joint_iters=50)
    np.testing.assert_allclose(res.marginals, enumerate_posterior(Y, genie), atol=0.03)


def test_ffbs_chain_is_valid_path(toy, rng):
    genie, Y = toy
    path = ffbs_chain(Y, genie, 0, np.zeros((3, 2), int), rng)
    assert path.shape == (3,) and path.dtype == np.int16
    assert np.all((path >= 0) & (path <= 2))


def test_state_cap(toy):
    genie, Y = toy
    genie.state_cap = 100.0
    with pytest.raises(StateSpaceTooLarge):
        bcjr_joint(Y, genie)


def test_map_idx_tie_goes_low():
    r = GenieResult(np.array([[[0.5, 0.5, 0.0]]]))
    assert r.map_idx()[0, 0] == 0
