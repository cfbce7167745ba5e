import numpy as np
import pytest

from iffsm.evaluation import (
    MapEstimate,
    align_chains,
    box_stats,
    compute_metrics,
    map_estimate,
    modal_indices,
    summarize_runs,
)
from iffsm.model import mean_sequence
from iffsm.simulator import ScenarioConfig, simulate


def test_modal_indices_ties_to_lowest():
    s = np.array([[[1]], [[2]], [[2]], [[1]]])
    assert modal_indices(s, 4)[0, 0] == 1
    s = np.array([[[3, 0]], [[3, 2]], [[1, 2]]])
    np.testing.assert_array_equal(modal_indices(s, 4), [[3, 2]])


@pytest.fixture
def truth(rng):
    cfg = ScenarioConfig(T=200, D=6, n_tx=3, burst_len=100, noise_var=0.1)
    Y, tr = simulate(cfg, rng)
    return cfg, Y, tr


def _scrambled(truth, qpsk, order=(2, 0, 1), rots=(1j, -1, -1j)):
    """Estimate equal to the truth up to a chain permutation and rotations."""
    idx = np.zeros_like(truth.idx)
    taps = np.zeros_like(truth.taps)
    for j, (i, r) in enumerate(zip(order, rots)):
        # (h, x) -> (conj(r) h, r x) explains the data equally well
        idx[:, j] = qpsk.rotation_permutation(r)[truth.idx[:, i]]
        taps[j] = np.conj(r) * truth.taps[i]
    return MapEstimate(idx, taps, np.arange(3))


def test_alignment_undoes_permutation_and_rotation(truth, qpsk):
    _, _, tr = truth
    est = _scrambled(tr, qpsk)
    al = align_chains(est, tr.idx, tr.taps, qpsk)
    assert sorted(al.pairs) == [(0, 2), (1, 0), (2, 1)]
    assert al.n_recovered == 3 and al.discarded == []
    m = compute_metrics(al, est, tr.idx, tr.taps, qpsk)
    assert (m.ser, m.ader, m.mse) == (0.0, 0.0, pytest.approx(0.0, abs=1e-28))
    assert m.m_plus == 3 and m.recovered == 3


def test_alignment_undoes_delay_with_longer_model(truth, qpsk):
    _, _, tr = truth
    T, N = tr.idx.shape
    k = 1
    # symbols emitted one step early with the taps moved one lag later
    idx = np.zeros_like(tr.idx)
    idx[: T - k] = tr.idx[k:]
    taps = np.zeros((N, 3, tr.taps.shape[2]), complex)
    taps[:, k] = tr.taps[:, 0]
    mean_est = mean_sequence(qpsk.alphabet[idx], taps)
    mean_true = mean_sequence(qpsk.alphabet[tr.idx], tr.taps)
    np.testing.assert_allclose(mean_est[k:], mean_true[k:], atol=1e-12)

    est = MapEstimate(idx, taps, np.arange(N))
    al = align_chains(est, tr.idx, tr.taps, qpsk)
    assert al.delays == [k] * N and al.n_recovered == N
    m = compute_metrics(al, est, tr.idx, tr.taps, qpsk)
    lost = np.sum(tr.idx[:k] > 0) / (N * T)      # symbols before the first observation
    assert m.ser == pytest.approx(lost) and m.mse == pytest.approx(0.0, abs=1e-28)


def test_no_delay_search_when_model_is_not_longer(truth, qpsk):
    _, _, tr = truth
    est = _scrambled(tr, qpsk)
    assert align_chains(est, tr.idx, tr.taps, qpsk).delays == [0, 0, 0]


def test_spurious_chain_is_discarded(truth, qpsk, rng):
    _, _, tr = truth
    est = _scrambled(tr, qpsk)
    junk_idx = rng.integers(0, 5, (tr.idx.shape[0], 1)).astype(np.int16)
    junk_taps = 5.0 * np.ones((1, 1, tr.taps.shape[2]), complex)
    est = MapEstimate(np.hstack((est.idx, junk_idx)), np.concatenate((est.taps, junk_taps)))
    al = align_chains(est, tr.idx, tr.taps, qpsk)
    assert 3 in al.discarded and al.n_recovered == 3
    assert compute_metrics(al, est, tr.idx, tr.taps, qpsk).m_plus == 4


def test_metrics_by_hand(qpsk):
    truth_idx = np.array([[0], [1], [2], [3], [0]], np.int16)
    est_idx = np.array([[1], [1], [2], [4], [0]], np.int16)
    h = np.ones((1, 1, 2), complex)
    est = MapEstimate(est_idx, 0.9 * h)
    al = align_chains(est, truth_idx, h, qpsk)
    m = compute_metrics(al, est, truth_idx, h, qpsk)
    assert m.ser == pytest.approx(2 / 5)
    assert m.ader == pytest.approx(1 / 5)
    assert m.mse == pytest.approx(0.01)


def test_unrecovered_gives_nan(qpsk):
    truth_idx = np.array([[1], [2], [3], [4]], np.int16)
    est = MapEstimate(np.zeros((4, 1), np.int16), np.ones((1, 1, 2), complex))
    al = align_chains(est, truth_idx, np.ones((1, 1, 2)), qpsk)
    m = compute_metrics(al, est, truth_idx, np.ones((1, 1, 2)), qpsk)
    assert m.recovered == 0 and np.isnan(m.ser) and np.isnan(m.mse)


def test_mismatched_tap_lengths_zero_pad(qpsk):
    truth_idx = np.array([[1], [2]], np.int16)
    h_true = np.ones((1, 1, 2), complex)
    h_est = np.concatenate((h_true, 0.1 * h_true), axis=1)            # L=2 estimate
    est = MapEstimate(truth_idx.copy(), h_est)
    m = compute_metrics(align_chains(est, truth_idx, h_true, qpsk), est, truth_idx, h_true, qpsk)
    assert m.mse == pytest.approx(0.02 / 4)


def test_no_chains(qpsk):
    est = MapEstimate(np.zeros((5, 0), np.int16), np.zeros((0, 1, 2), complex))
    al = align_chains(est, np.ones((5, 1), np.int16), np.ones((1, 1, 2)), qpsk)
    assert al.pairs == [] and compute_metrics(al, est, np.ones((5, 1)), np.ones((1, 1, 2)), qpsk).m_plus == 0


def test_map_estimate_aligns_by_chain_id(truth, qpsk):
    cfg, Y, tr = truth
    a = (tr.idx, np.array([10, 11, 12]))
    b = (tr.idx[:, [2, 0, 1]], np.array([12, 10, 11]))
    junk = tr.idx.copy()
    junk[:, 0] = 0
    c = (junk[:, [0, 1, 2]], np.array([10, 11, 12]))
    est = map_estimate([a, b, c], Y, qpsk, np.ones(1), cfg.noise_var)
    np.testing.assert_array_equal(est.idx, tr.idx)
    np.testing.assert_array_equal(est.chain_ids, [10, 11, 12])
    assert np.max(np.abs(est.taps - tr.taps)) < 0.2


def test_map_estimate_drops_idle_columns(truth, qpsk):
    cfg, Y, tr = truth
    window = [(np.hstack((tr.idx, np.zeros((tr.idx.shape[0], 1), np.int16))), np.arange(4))]
    assert map_estimate(window, Y, qpsk, np.ones(1), 0.1).n_chains == 3
    with pytest.raises(ValueError):
        map_estimate([], Y, qpsk, np.ones(1), 0.1)


def test_box_stats_frozen():
    s = box_stats([1.0, 2.0, 3.0, 4.0, float("nan")])
    assert s == {"min": 1.0, "p25": 1.75, "median": 2.5, "p75": 3.25, "max": 4.0, "mean": 2.5}
    assert np.isnan(box_stats([float("nan")])["median"])


def test_summarize_runs():
    recs = [{"ser": 0.1, "ader": 0.0}, {"ser": 0.3, "ader": 0.2}]
    out = summarize_runs(recs, keys=("ser", "ader"))
    assert out["ser"]["median"] == pytest.approx(0.2)
    with pytest.raises(ValueError):
        summarize_runs([])
