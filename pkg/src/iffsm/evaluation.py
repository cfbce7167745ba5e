"""Point estimates, chain-to-user alignment and the detection metrics.

Blind inference identifies each user only up to a rotation ``r`` of the
constellation's symmetry group: ``(r h, conj(r) x)`` explains the data as
well as ``(h, x)``.  When the inferred channel has more taps than a user's
true channel, a delay ``k`` is equally unidentifiable: symbols emitted ``k``
steps early with the taps moved ``k`` lags later give the same mean.
Alignment therefore scores every (inferred, true) pair at its best rotation
and delay before solving the assignment problem.

Metrics are averaged over *recovered* pairs: matched pairs whose symbol
error rate inside the true active window is below ``recover_threshold``.
Other inferred chains (spurious or merged users) are discarded.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .gibbs import channel_posterior

__all__ = [
    "MapEstimate",
    "Alignment",
    "Metrics",
    "modal_indices",
    "map_estimate",
    "align_chains",
    "compute_metrics",
    "summarize_runs",
    "box_stats",
]


@dataclass
class MapEstimate:
    idx: np.ndarray          # (T, M) alphabet indices
    taps: np.ndarray         # (M, L, D)
    chain_ids: np.ndarray = None

    @property
    def n_chains(self):
        return self.idx.shape[1]


@dataclass
class Alignment:
    pairs: list                        # (inferred j, true i) after assignment
    rotations: list                    # complex r applied as (r h, conj(r) x)
    recovered: list                    # bool per pair
    discarded: list                    # inferred chains not in a recovered pair
    pair_mse: list = field(default_factory=list)
    pair_active_ser: list = field(default_factory=list)
    delays: list = None                # k per pair; None means all zero

    def delay(self, n):
        return 0 if self.delays is None else self.delays[n]

    @property
    def n_recovered(self):
        return int(sum(self.recovered))


@dataclass
class Metrics:
    ader: float
    ser: float
    mse: float
    m_plus: int
    recovered: int
    per_user_ser: dict = field(default_factory=dict)
    per_user_mse: dict = field(default_factory=dict)


def modal_indices(samples, n_symbols):
    """Per-cell mode over a stack ``(W, T, M)``; ties go to the lowest index."""
    samples = np.asarray(samples)
    W, T, M = samples.shape
    K = n_symbols + 1
    cell = np.arange(T * M).reshape(T, M)
    flat = (cell[None] * K + samples).ravel()
    counts = np.bincount(flat, minlength=T * M * K).reshape(T, M, K)
    return np.argmax(counts, axis=2).astype(np.int16)


def map_estimate(window, Y, constellation, tap_var, sigma2):
    """Component-wise MAP over a window of ``(idx, chain_ids)`` samples.

    Columns are matched across samples by their persistent chain id; a chain
    missing from a sample counts as idle there.  Chains whose modal column is
    all idle are dropped.  Taps are the Gaussian posterior mean given ``Y``
    and the modal symbols.
    """
    if not window:
        raise ValueError("empty sample window")
    ids = sorted({int(c) for _, cid in window for c in cid})
    T = window[0][0].shape[0]
    stack = np.zeros((len(window), T, len(ids)), dtype=np.int16)
    col = {c: j for j, c in enumerate(ids)}
    for w, (idx, cid) in enumerate(window):
        for k, c in enumerate(cid):
            stack[w, :, col[int(c)]] = idx[:, k]
    mode = modal_indices(stack, constellation.order)
    keep = mode.any(axis=0)
    mode = mode[:, keep]
    ids = np.array(ids, dtype=np.int64)[keep]
    taps, _ = channel_posterior(Y, constellation.alphabet[mode], tap_var, sigma2)
    return MapEstimate(mode, taps, ids)


def _pad_taps(h, L):
    if h.shape[1] >= L:
        return h
    pad = np.zeros((h.shape[0], L - h.shape[1], h.shape[2]), dtype=h.dtype)
    return np.concatenate((h, pad), axis=1)


def _advance_taps(h, k):
    """Undo a ``k``-step delay on taps: lag ``l`` takes lag ``l + k``."""
    out = np.zeros_like(h)
    out[..., : h.shape[-2] - k, :] = h[..., k:, :]
    return out


def _aligned_symbols(idx, r, k, constellation):
    """Inferred column with rotation ``r`` and delay ``k`` undone."""
    x = constellation.rotation_permutation(np.conj(r))[idx]
    return np.concatenate((np.zeros(k, x.dtype), x[: x.size - k]))


def align_chains(est, truth_idx, truth_taps, constellation, recover_threshold=0.5):
    """Match inferred chains to true users by minimum rotated, delayed channel MSE.

    Delays range over ``0 .. L_est - L_true``; zero when the model is not
    longer than the truth.
    """
    M = est.n_chains
    L = max(est.taps.shape[1], truth_taps.shape[1])
    h_hat = _pad_taps(est.taps, L)
    h_true = _pad_taps(np.asarray(truth_taps), L)
    group = constellation.symmetry_group()
    if M == 0:
        return Alignment([], [], [], [])
    D = h_true.shape[2]
    shifts = np.arange(max(est.taps.shape[1] - truth_taps.shape[1], 0) + 1)
    # mse[j, i, k, g] = MSE of r_g * (h_hat_j with delay k undone) against h_true_i
    moved = np.stack([_advance_taps(h_hat, k) for k in shifts], axis=1)  # (M, K, L, D)
    rot = group[None, None, :, None, None] * moved[:, :, None]           # (M, K, G, L, D)
    diff = rot[:, None] - h_true[None, :, None, None]                    # (M, N, K, G, L, D)
    mse = np.sum(np.abs(diff) ** 2, axis=(4, 5)) / (L * D)
    flat = mse.reshape(mse.shape[0], mse.shape[1], -1)
    best = np.argmin(flat, axis=2)
    cost = np.take_along_axis(flat, best[..., None], axis=2)[..., 0]
    rows, cols = linear_sum_assignment(cost)
    pairs, rotations, delays, recovered, pair_mse, pair_ser = [], [], [], [], [], []
    for j, i in zip(rows, cols):
        k, g = divmod(int(best[j, i]), group.size)
        r = group[g]
        x_hat = _aligned_symbols(est.idx[:, j], r, k, constellation)
        active = truth_idx[:, i] > 0
        n_act = max(int(active.sum()), 1)
        ser_act = float(np.sum(x_hat[active] != truth_idx[active, i])) / n_act
        pairs.append((int(j), int(i)))
        rotations.append(complex(r))
        delays.append(int(shifts[k]))
        recovered.append(ser_act < recover_threshold)
        pair_mse.append(float(cost[j, i]))
        pair_ser.append(ser_act)
    kept = {j for (j, _), ok in zip(pairs, recovered) if ok}
    discarded = [j for j in range(M) if j not in kept]
    return Alignment(pairs, rotations, recovered, discarded, pair_mse, pair_ser, delays)


def compute_metrics(alignment, est, truth_idx, truth_taps, constellation):
    """ADER, SER and channel MSE averaged over recovered pairs.

    SER counts an error at every ``t`` where the (rotation- and delay-corrected) symbol
    differs from the truth, idle counting as the symbol 0.  Rates are ``nan``
    when nothing is recovered.
    """
    L = max(est.taps.shape[1], truth_taps.shape[1])
    h_hat = _pad_taps(est.taps, L)
    h_true = _pad_taps(np.asarray(truth_taps), L)
    D = h_true.shape[2]
    aders, sers, mses = [], [], []
    per_ser, per_mse = {}, {}
    for n, ((j, i), r, ok) in enumerate(zip(alignment.pairs, alignment.rotations,
                                             alignment.recovered)):
        if not ok:
            continue
        k = alignment.delay(n)
        x_hat = _aligned_symbols(est.idx[:, j], r, k, constellation)
        x_true = truth_idx[:, i]
        aders.append(float(np.mean((x_hat > 0) != (x_true > 0))))
        sers.append(float(np.mean(x_hat != x_true)))
        h = _advance_taps(h_hat[j], k)
        mses.append(float(np.sum(np.abs(h_true[i] - r * h) ** 2) / (L * D)))
        per_ser[int(i)] = sers[-1]
        per_mse[int(i)] = mses[-1]
    nan = float("nan")
    return Metrics(
        ader=float(np.mean(aders)) if aders else nan,
        ser=float(np.mean(sers)) if sers else nan,
        mse=float(np.mean(mses)) if mses else nan,
        m_plus=int(est.n_chains),
        recovered=alignment.n_recovered,
        per_user_ser=per_ser,
        per_user_mse=per_mse,
    )


def box_stats(values):
    """Box-plot statistics with linearly interpolated percentiles."""
    v = np.asarray([x for x in values if x == x], dtype=float)
    if v.size == 0:
        return {k: float("nan") for k in ("min", "p25", "median", "p75", "max", "mean")}
    p25, p50, p75 = np.percentile(v, [25, 50, 75], method="linear")
    return {"min": float(v.min()), "p25": float(p25), "median": float(p50),
            "p75": float(p75), "max": float(v.max()), "mean": float(v.mean())}


def summarize_runs(records, keys=("m_plus", "recovered", "ader", "ser", "mse")):
    """Box statistics per metric over a list of dict-like run records."""
    if not records:
        raise ValueError("no run records to summarize")
    return {k: box_stats([r[k] for r in records]) for k in keys}
