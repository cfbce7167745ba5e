"""Genie-aided detectors that know the number of users and their channels.

Three detectors share one :class:`GenieConfig`:

* ``genie_pgas``: the PGAS kernel with the chain set and globals frozen;
* ``ffbs_gibbs``: Gibbs over chains, each chain drawn exactly by forward
  filtering backward sampling on its extended state;
* ``bcjr_joint``: exact per-symbol marginals on the joint trellis.

Extended state of one chain (memory ``L``, ``K = |A| + 1`` alphabet indices)::

    e = sum_{lag=0}^{L-1} k_lag * K**lag          (k_lag: input at t - lag)

Joint state of ``N`` chains (mixed radix over ``(chain, lag)``)::

    e = sum_m sum_lag k[m, lag] * K**(m * L + lag)

so the joint transition matrix is ``kron(A_{N-1}, ..., A_1, A_0)`` of the
per-chain extended matrices.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import pgas
from .model import Constellation, GlobalParams, log_prior_latent, loglik_sequence, mean_sequence

__all__ = [
    "GenieConfig",
    "GenieResult",
    "StateSpaceTooLarge",
    "genie_pgas",
    "extended_transition",
    "extended_means",
    "ffbs_chain",
    "ffbs_gibbs",
    "bcjr_joint",
    "joint_state_digits",
    "enumerate_posterior",
]


class StateSpaceTooLarge(ValueError):
    pass


@dataclass
class GenieConfig:
    """Known users and channels.  ``a``/``b`` default to the stated genie values."""

    taps: np.ndarray                       # (N_t, L, D)
    noise_var: float
    constellation: Constellation = field(default_factory=Constellation.qpsk)
    a: float = 0.998
    b: float = 0.002
    state_cap: float = 1e6

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=complex)
        if self.taps.ndim != 3:
            raise ValueError("taps must have shape (N_t, L, D)")

    @property
    def n_tx(self):
        return self.taps.shape[0]

    @property
    def n_taps(self):
        return self.taps.shape[1]

    def globals_(self):
        n = self.n_tx
        return GlobalParams(np.full(n, self.a), np.full(n, self.b), self.taps, np.ones(self.n_taps))


@dataclass
class GenieResult:
    marginals: np.ndarray      # (T, N_t, K) posterior symbol probabilities
    last: np.ndarray = None    # (T, N_t) final sample (MC methods only)
    n_samples: int = 0

    def map_idx(self):
        """Component-wise MAP indices; ties go to the lowest alphabet index."""
        return np.argmax(self.marginals, axis=2).astype(np.int16)


def _accumulate(counts, idx):
    T, N = idx.shape
    K = counts.shape[2]
    flat = (np.arange(T)[:, None] * N + np.arange(N)[None, :]) * K + idx
    counts.reshape(-1)[:] += np.bincount(flat.ravel(), minlength=counts.size)


def genie_pgas(Y, genie, P, iters, rng, burn_in=0, init=None, block_size=None,
               joint_iters=None):
    """PGAS with ``N_t`` fixed chains and frozen globals.

    With ``block_size`` set, sweeps after the first ``joint_iters`` update
    chains in blocks of that size.  Returns marginal symbol frequencies over
    the samples after ``burn_in``.
    """
    T = Y.shape[0]
    K = genie.constellation.order + 1
    g = genie.globals_()
    ref = np.zeros((T, genie.n_tx), np.int16) if init is None else np.asarray(init, np.int16)
    counts = np.zeros((T, genie.n_tx, K))
    kept = 0
    for it in range(iters):
        if block_size and (joint_iters is None or it >= joint_iters):
            ref = pgas.block_sweep(ref, g, Y, genie.constellation, genie.noise_var,
                                   block_size, lambda m: P, rng)
        else:
            ref = pgas.pgas_sweep(ref, g, Y, genie.constellation, genie.noise_var, P, rng)
        if it >= burn_in:
            _accumulate(counts, ref)
            kept += 1
    return GenieResult(counts / max(kept, 1), ref, kept)


# ---------------------------------------------------------------------------
# extended single-chain HMM
# ---------------------------------------------------------------------------

def extended_transition(a, b, n_symbols, L):
    """Dense ``(K^L, K^L)`` transition matrix of one chain's extended state."""
    K = n_symbols + 1
    S = K ** L
    A = np.zeros((S, S))
    p_new = np.empty((2, K))
    p_new[0, 0], p_new[0, 1:] = 1 - a, a / n_symbols
    p_new[1, 0], p_new[1, 1:] = 1 - b, b / n_symbols
    for e in range(S):
        active = (e % K) != 0
        base = K * (e % (K ** (L - 1))) if L > 1 else 0
        A[e, base:base + K] = p_new[int(active)]
    return A


def _digits(S, K, n_digits):
    e = np.arange(S)
    return np.stack([(e // K ** j) % K for j in range(n_digits)], axis=1)


def extended_means(taps_m, alphabet):
    """Noiseless contribution ``(K^L, D)`` of one chain for each extended state."""
    L, D = taps_m.shape
    K = alphabet.size
    dig = _digits(K ** L, K, L)
    return sum(alphabet[dig[:, ell]][:, None] * taps_m[ell][None, :] for ell in range(L))


def _loglik_table(R, means, sigma2):
    """``(T, S)`` observation log-likelihoods for residual ``R`` and state means."""
    D = R.shape[1]
    d2 = (np.sum(np.abs(R) ** 2, axis=1)[:, None]
          - 2 * np.real(R @ means.conj().T)
          + np.sum(np.abs(means) ** 2, axis=1)[None, :])
    return -D * np.log(np.pi * sigma2) - np.maximum(d2, 0.0) / sigma2


def _forward(A, loglik):
    """Scaled forward pass from the all-idle state 0; returns filtered probs."""
    T, S = loglik.shape
    alpha = np.empty((T, S))
    prev = np.zeros(S)
    prev[0] = 1.0
    log_z = 0.0
    for t in range(T):
        pred = prev @ A
        with np.errstate(divide="ignore"):
            lw = loglik[t] + np.log(pred)
        mx = lw.max()
        w = np.exp(lw - mx)
        z = w.sum()
        alpha[t] = w / z
        log_z += mx + np.log(z)
        prev = alpha[t]
    return alpha, log_z


def _check_cap(n_states, cap, what):
    if float(n_states) ** 2 > cap:
        raise StateSpaceTooLarge(
            f"{what}: {n_states} states, squared count {float(n_states) ** 2:.3g} exceeds cap {cap:.3g}")


def ffbs_chain(Y, genie, m, idx, rng):
    """Exact draw of chain ``m``'s column given the other chains in ``idx``."""
    c = genie.constellation
    K, L = c.order + 1, genie.n_taps
    S = K ** L
    _check_cap(S, genie.state_cap, "FFBS")
    idx = np.asarray(idx)
    others = [j for j in range(genie.n_tx) if j != m]
    X = c.alphabet[idx]
    R = np.asarray(Y) - mean_sequence(X[:, others], genie.taps[others])
    A = extended_transition(genie.a, genie.b, c.order, L)
    ll = _loglik_table(R, extended_means(genie.taps[m], c.alphabet), genie.noise_var)
    alpha, _ = _forward(A, ll)
    T = Y.shape[0]
    states = np.empty(T, dtype=np.int64)
    p = alpha[-1]
    states[-1] = rng.choice(S, p=p / p.sum())
    for t in range(T - 2, -1, -1):
        w = alpha[t] * A[:, states[t + 1]]
        states[t] = rng.choice(S, p=w / w.sum())
    return (states % K).astype(np.int16)


def ffbs_gibbs(Y, genie, iters, rng, burn_in=0, init=None):
    """Systematic-scan Gibbs over chains with exact FFBS per chain."""
    T = Y.shape[0]
    K = genie.constellation.order + 1
    idx = np.zeros((T, genie.n_tx), np.int16) if init is None else np.array(init, np.int16)
    counts = np.zeros((T, genie.n_tx, K))
    kept = 0
    for it in range(iters):
        for m in range(genie.n_tx):
            idx[:, m] = ffbs_chain(Y, genie, m, idx, rng)
        if it >= burn_in:
            _accumulate(counts, idx)
            kept += 1
    return GenieResult(counts / max(kept, 1), idx.copy(), kept)


# ---------------------------------------------------------------------------
# joint trellis
# ---------------------------------------------------------------------------

def joint_state_digits(n_tx, L, K):
    """``(S, N_t, L)`` digit table of the joint mixed-radix state encoding."""
    S = K ** (n_tx * L)
    return _digits(S, K, n_tx * L).reshape(S, n_tx, L)


def bcjr_joint(Y, genie):
    """Exact posterior symbol marginals ``(T, N_t, K)`` on the joint trellis."""
    c = genie.constellation
    K, L, N = c.order + 1, genie.n_taps, genie.n_tx
    S = K ** (L * N)
    _check_cap(S, genie.state_cap, "BCJR")
    A1 = extended_transition(genie.a, genie.b, c.order, L)
    A = np.ones((1, 1))
    for _ in range(N):
        A = np.kron(A1, A)       # chain m ends up with stride K**(m L)
    dig = joint_state_digits(N, L, K)
    means = np.zeros((S, Y.shape[1]), complex)
    for m in range(N):
        for ell in range(L):
            means += c.alphabet[dig[:, m, ell]][:, None] * genie.taps[m, ell][None, :]
    ll = _loglik_table(np.asarray(Y), means, genie.noise_var)
    alpha, _ = _forward(A, ll)
    T = Y.shape[0]
    # backward pass in the same scaling
    beta = np.ones(S)
    post = np.empty((T, S))
    post[-1] = alpha[-1]
    for t in range(T - 2, -1, -1):
        lw = ll[t + 1]
        w = np.exp(lw - lw.max()) * beta
        beta = A @ w
        beta /= beta.sum()
        g = alpha[t] * beta
        post[t] = g / g.sum()
    marg = np.zeros((T, N, K))
    for m in range(N):
        for k in range(K):
            marg[:, m, k] = post[:, dig[:, m, 0] == k].sum(axis=1)
    return GenieResult(marg)


def enumerate_posterior(Y, genie):
    """Brute-force ``(T, N_t, K)`` marginals; only for tiny problems (tests)."""
    c = genie.constellation
    K, N = c.order + 1, genie.n_tx
    T = Y.shape[0]
    g = genie.globals_()
    cells = T * N
    seqs = np.array(np.unravel_index(np.arange(K ** cells), (K,) * cells)).T.reshape(-1, T, N)
    logp = np.array([log_prior_latent(s, g.a, g.b, c.order)
                     + loglik_sequence(Y, c.alphabet[s], g.taps, genie.noise_var).sum()
                     for s in seqs])
    w = np.exp(logp - logsumexp(logp))
    marg = np.zeros((T, N, K))
    for k in range(K):
        marg[..., k] = np.tensordot(w, seqs == k, axes=1)
    return marg
