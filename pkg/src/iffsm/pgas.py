"""Particle Gibbs with ancestor sampling over the factorial chain states.

One call of :func:`pgas_sweep` is one application of the PGAS Markov kernel
to the joint symbol matrix of ``M`` chains:

* particles ``0 .. P-2`` are propagated with the bootstrap kernel (each
  chain moves by its own two-state Markov transition, active chains emit a
  uniform symbol) after multinomial resampling on the previous weights;
* particle ``P-1`` is pinned to the reference trajectory and only its
  ancestor is resampled, with weights that include the transition into the
  reference and the ``L-1`` look-ahead likelihood terms in which the
  particle's history still overlaps the reference window;
* importance weights are the likelihood of the current observation given the
  last ``L`` inputs of every chain.

Residual norms are expanded through the tap Gram matrix.  With flat tap
index ``j = m * L + l``, ``H = h^H h`` and ``Z_t = h^H y_t``::

    ||y_t - sum_j h_j x_j||^2 = ||y_t||^2 - 2 Re sum_j x_j conj(Z_tj)
                                + sum_{j, j'} conj(x_j) x_j' H_jj'

so a particle costs ``O(active^2)`` scalar operations instead of
``O(active * D)``.

The inner loop is compiled with numba and draws from the caller's
:class:`numpy.random.Generator` directly, so a fixed seed reproduces a run
bit for bit.
"""

from dataclasses import dataclass

import numba
import numpy as np

from .model import mean_sequence, transition_table
from .numerics import DegenerateWeightsError

__all__ = [
    "ParticleSystem",
    "SweepTables",
    "build_tables",
    "pgas_sweep",
    "importance_weight",
    "importance_weights",
    "ancestor_weights",
    "window_from_trajectory",
    "trace_trajectory",
    "block_sweep",
    "compact",
]


@dataclass
class ParticleSystem:
    """Full record of one sweep: particle states, ancestors, final weights."""

    states: np.ndarray      # (T, P, M) alphabet indices x_t^i
    ancestors: np.ndarray   # (T, P) index of the parent of x_t^i (row 0: itself)
    logw: np.ndarray        # (P,) final importance log-weights
    chosen: int             # index k of the returned trajectory


@dataclass
class SweepTables:
    gram: np.ndarray        # (ML, ML) complex, H = h^H h
    proj: np.ndarray        # (T, ML) complex, Z_t = h^H y_t
    ynorm: np.ndarray       # (T,) ||y_t||^2
    alphabet: np.ndarray    # (K,) complex, index 0 is idle
    logtr: np.ndarray       # (M, 2, K) log transition table
    pact: np.ndarray        # (M, 2) activation probability given previous state
    n_taps: int


def build_tables(globals_, constellation, Y):
    """Precompute the Gram matrix, projections and transition tables."""
    M, L, D = globals_.taps.shape
    hflat = globals_.taps.reshape(M * L, D)
    Y = np.asarray(Y, dtype=np.complex128)
    gram = np.ascontiguousarray(hflat.conj() @ hflat.T)
    proj = np.ascontiguousarray(Y @ hflat.conj().T)
    ynorm = np.ascontiguousarray(np.sum(Y.real ** 2 + Y.imag ** 2, axis=1))
    logtr = transition_table(globals_.a, globals_.b, constellation.order)
    pact = np.ascontiguousarray(np.stack((globals_.a, globals_.b), axis=1).astype(float))
    return SweepTables(gram, proj, ynorm, constellation.alphabet, logtr, pact, L)


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------

@numba.njit(cache=True, fastmath=True, inline="always")
def _quad(base, z, row, gram, js, xs, n):
    """``base - 2 Re sum x_j conj(z[row, j]) + sum conj(x_j) x_j' H_jj'`` over ``n`` entries."""
    acc = base
    for a in range(n):
        ja = js[a]
        xa = xs[a]
        za = z[row, ja]
        acc -= 2.0 * (xa.real * za.real + xa.imag * za.imag)
        acc += (xa.real * xa.real + xa.imag * xa.imag) * gram[ja, ja].real
        cr = 0.0
        ci = 0.0
        for b in range(a + 1, n):
            g = gram[ja, js[b]]
            xb = xs[b]
            cr += g.real * xb.real - g.imag * xb.imag
            ci += g.real * xb.imag + g.imag * xb.real
        acc += 2.0 * (xa.real * cr + xa.imag * ci)
    return acc


@numba.njit(cache=True, fastmath=True)
def _loglik_all(t, win, proj, ynorm, gram, alphabet, L, sigma2, lognorm, out, js, xs):
    """Log-likelihood of ``y_t`` for every particle window ``win[i, l, m]``."""
    P, _, M = win.shape
    for i in range(P):
        n = 0
        for ell in range(L):
            for m in range(M):
                k = win[i, ell, m]
                if k != 0:
                    js[n] = m * L + ell
                    xs[n] = alphabet[k]
                    n += 1
        r2 = _quad(ynorm[t], proj, t, gram, js, xs, n)
        out[i] = lognorm - max(r2, 0.0) / sigma2


@numba.njit(cache=True, fastmath=True)
def _ancestor_logweights(t, win, logw, ref, proj, ynorm, gram, alphabet, logtr,
                         sigma2, lognorm, out, zref, js, xs):
    """``log w~_{t-1|T}`` for every particle window at time ``t-1``.

    ``win[i, l, m]`` is particle ``i``'s input of chain ``m`` at ``t-1-l``.
    """
    P, L, M = win.shape
    T = ref.shape[0]
    ML = M * L
    for i in range(P):
        acc = logw[i]
        for m in range(M):
            sp = 1 if win[i, 0, m] != 0 else 0
            acc += logtr[m, sp, ref[t, m]]
        out[i] = acc
    last = min(t + L - 2, T - 1)
    for tau in range(t, last + 1):
        # reference inputs occupy taps l <= tau - t; fold them into base and z
        n = 0
        for ell in range(tau - t + 1):
            for m in range(M):
                k = ref[tau - ell, m]
                if k != 0:
                    js[n] = m * L + ell
                    xs[n] = alphabet[k]
                    n += 1
        base = _quad(ynorm[tau], proj, tau, gram, js, xs, n)
        for j in range(ML):
            zj = proj[tau, j]
            for a in range(n):
                zj -= gram[j, js[a]] * xs[a]
            zref[0, j] = zj
        # particle input at time t-1-lag sits on tap l = lag + (tau - t) + 1
        shift = tau - t + 1
        for i in range(P):
            if out[i] == -np.inf:
                continue
            n = 0
            for lag in range(L - shift):
                for m in range(M):
                    k = win[i, lag, m]
                    if k != 0:
                        js[n] = m * L + lag + shift
                        xs[n] = alphabet[k]
                        n += 1
            r2 = _quad(base, zref, 0, gram, js, xs, n)
            out[i] += lognorm - max(r2, 0.0) / sigma2


@numba.njit(cache=True)
def _categorical(rng, logw, cdf, pos, n, out, systematic):
    """Fill ``out[:n]`` with sorted categorical draws; False if degenerate.

    ``cdf`` and ``pos`` are scratch arrays of length ``P`` and ``n + 1``.
    """
    P = logw.shape[0]
    mx = -np.inf
    for i in range(P):
        if logw[i] > mx:
            mx = logw[i]
    if not np.isfinite(mx):
        return False
    tot = 0.0
    for i in range(P):
        v = logw[i] - mx
        if v > -700.0:
            tot += np.exp(v)
        cdf[i] = tot
    if not (tot > 0.0) or not np.isfinite(tot):
        return False
    # sorted targets merged against the cdf in O(P); sorted uniforms come from
    # normalized exponential spacings, which keeps the draws i.i.d. multinomial
    if systematic:
        u0 = rng.random()
        for j in range(n):
            pos[j] = (u0 + j) / n * tot
    else:
        acc = 0.0
        for j in range(n + 1):
            acc += rng.standard_exponential()
            pos[j] = acc
        for j in range(n):
            pos[j] = pos[j] / acc * tot
    k = 0
    for j in range(n):
        u = pos[j]
        while k < P - 1 and cdf[k] <= u:
            k += 1
        out[j] = k
    return True


@numba.njit(cache=True)
def _propagate(p, u, n_sym):
    """Bootstrap move of one chain with activation probability ``p`` and uniform ``u``."""
    if u < p:
        k = 1 + int(u / p * n_sym)
        return k if k <= n_sym else n_sym
    return 0


@numba.njit(cache=True)
def _pgas_kernel(proj, ynorm, gram, alphabet, ref, logtr, pact, L, sigma2, lognorm, P,
                 rng, systematic, states, ancestors, logw_out):
    """Run the PGAS sweep; returns (chosen index, failing t or -1)."""
    T, M = ref.shape
    ML = M * L
    n_sym = alphabet.shape[0] - 1
    win = np.zeros((P, L, M), dtype=np.int16)
    win_new = np.zeros((P, L, M), dtype=np.int16)
    logw = np.empty(P)
    aw = np.empty(P)
    cdf = np.empty(P)
    pos = np.empty(P + 1)
    anc = np.empty(P, dtype=np.int64)
    one = np.empty(1, dtype=np.int64)
    js = np.empty(ML, dtype=np.int64)
    xs = np.empty(ML, dtype=np.complex128)
    zref = np.empty((1, ML), dtype=np.complex128)

    u = rng.random((P, M))
    for i in range(P - 1):
        for m in range(M):
            win[i, 0, m] = _propagate(pact[m, 0], u[i, m], n_sym)
    for m in range(M):
        win[P - 1, 0, m] = ref[0, m]
    for i in range(P):
        ancestors[0, i] = i
        for m in range(M):
            states[0, i, m] = win[i, 0, m]
    _loglik_all(0, win, proj, ynorm, gram, alphabet, L, sigma2, lognorm, logw, js, xs)

    for t in range(1, T):
        if not _categorical(rng, logw, cdf, pos, P - 1, anc, systematic):
            return -1, t - 1
        _ancestor_logweights(t, win, logw, ref, proj, ynorm, gram, alphabet, logtr,
                             sigma2, lognorm, aw, zref, js, xs)
        if not _categorical(rng, aw, cdf, pos, 1, one, False):
            return -1, t
        anc[P - 1] = one[0]
        u = rng.random((P, M))
        for i in range(P):
            j = anc[i]
            for ell in range(1, L):
                for m in range(M):
                    win_new[i, ell, m] = win[j, ell - 1, m]
            if i == P - 1:
                for m in range(M):
                    win_new[i, 0, m] = ref[t, m]
            else:
                for m in range(M):
                    sp = 1 if win[j, 0, m] != 0 else 0
                    win_new[i, 0, m] = _propagate(pact[m, sp], u[i, m], n_sym)
        tmp = win
        win = win_new
        win_new = tmp
        for i in range(P):
            ancestors[t, i] = anc[i]
            for m in range(M):
                states[t, i, m] = win[i, 0, m]
        _loglik_all(t, win, proj, ynorm, gram, alphabet, L, sigma2, lognorm, logw, js, xs)

    if not _categorical(rng, logw, cdf, pos, 1, one, False):
        return -1, T - 1
    for i in range(P):
        logw_out[i] = logw[i]
    return one[0], -1


@numba.njit(cache=True)
def _trace(states, ancestors, k, out):
    T = states.shape[0]
    for t in range(T - 1, -1, -1):
        for m in range(states.shape[2]):
            out[t, m] = states[t, k, m]
        k = ancestors[t, k]


# ---------------------------------------------------------------------------
# Python surface
# ---------------------------------------------------------------------------

def _lognorm(D, sigma2):
    return float(-D * np.log(np.pi * sigma2))


def pgas_sweep(ref, globals_, Y, constellation, sigma2, P, rng, systematic=False,
               return_particles=False):
    """Draw a new ``(T, M)`` index matrix from the PGAS kernel.

    Parameters
    ----------
    ref : ndarray (T, M)
        Reference trajectory (alphabet indices), including zero columns for
        newborn chains.
    globals_ : GlobalParams
        Parameters of exactly the ``M`` chains in ``ref``.
    Y : ndarray (T, D)
        Observations (or the residual left by chains held fixed).
    sigma2 : float
        Effective noise variance used for the weights.
    P : int
        Number of particles; ``P = 1`` returns the reference unchanged.
    rng : numpy.random.Generator
        Consumed directly by the compiled kernel.
    return_particles : bool
        Also return the :class:`ParticleSystem`.
    """
    ref = np.ascontiguousarray(ref, dtype=np.int16)
    T, M = ref.shape
    if np.shape(Y)[0] != T:
        raise ValueError("reference and observations disagree on T")
    if globals_.n_chains != M:
        raise ValueError(f"reference has {M} chains, globals {globals_.n_chains}")
    if P < 1:
        raise ValueError("need at least one particle")
    if M == 0:
        out = ref.copy()
        return (out, None) if return_particles else out
    tb = build_tables(globals_, constellation, Y)
    states = np.empty((T, P, M), dtype=np.int16)
    ancestors = np.empty((T, P), dtype=np.int32)
    logw = np.empty(P)
    k, bad_t = _pgas_kernel(tb.proj, tb.ynorm, tb.gram, tb.alphabet, ref, tb.logtr, tb.pact,
                            tb.n_taps, float(sigma2), _lognorm(np.shape(Y)[1], sigma2),
                            int(P), rng, bool(systematic), states, ancestors, logw)
    if bad_t >= 0:
        raise DegenerateWeightsError(f"particle weights collapsed at t={bad_t}", t=bad_t)
    out = np.empty((T, M), dtype=np.int16)
    _trace(states, ancestors, k, out)
    if return_particles:
        return out, ParticleSystem(states, ancestors, logw, int(k))
    return out


def trace_trajectory(system, k=None):
    """Follow ancestor pointers back from particle ``k`` at the final time."""
    k = system.chosen if k is None else k
    T, _, M = system.states.shape
    out = np.empty((T, M), dtype=np.int16)
    _trace(system.states, system.ancestors, k, out)
    return out


def window_from_trajectory(traj, t, L):
    """Window ``(L, M)`` of alphabet indices ending at row ``t`` (idle before 0)."""
    traj = np.asarray(traj)
    win = np.zeros((L, traj.shape[1]), dtype=np.int16)
    for ell in range(L):
        if t - ell >= 0:
            win[ell] = traj[t - ell]
    return win


def _scratch(M, L):
    n = max(M * L, 1)
    return np.empty(n, dtype=np.int64), np.empty(n, dtype=np.complex128)


def importance_weights(windows, y_t, globals_, constellation, sigma2):
    """Log importance weights ``log p(y_t | window_i)`` for windows ``(P, L, M)``."""
    windows = np.ascontiguousarray(windows, dtype=np.int16)
    y_t = np.asarray(y_t, dtype=complex).reshape(1, -1)
    tb = build_tables(globals_, constellation, y_t)
    M, L = globals_.n_chains, globals_.n_taps
    out = np.empty(windows.shape[0])
    js, xs = _scratch(M, L)
    _loglik_all(0, windows, tb.proj, tb.ynorm, tb.gram, tb.alphabet, L, float(sigma2),
                _lognorm(y_t.size, sigma2), out, js, xs)
    return out


def importance_weight(traj, t, Y, globals_, constellation, sigma2):
    """Log weight of one particle trajectory at time ``t`` (0-based)."""
    win = window_from_trajectory(traj, t, globals_.n_taps)[None]
    return float(importance_weights(win, Y[t], globals_, constellation, sigma2)[0])


def ancestor_weights(t, windows, logw, ref, Y, globals_, constellation, sigma2):
    """Log ancestor weights ``log w~_{t-1|T}^i``.

    ``windows[i, l, m]`` is particle ``i``'s input of chain ``m`` at time
    ``t-1-l``; ``logw`` are the importance log-weights at ``t-1``; ``t`` is
    0-based and must be at least 1.
    """
    if t < 1:
        raise ValueError("ancestor weights need t >= 1")
    windows = np.ascontiguousarray(windows, dtype=np.int16)
    ref = np.ascontiguousarray(ref, dtype=np.int16)
    tb = build_tables(globals_, constellation, Y)
    M, L = globals_.n_chains, globals_.n_taps
    out = np.empty(windows.shape[0])
    js, xs = _scratch(M, L)
    _ancestor_logweights(int(t), windows, np.asarray(logw, float), ref, tb.proj, tb.ynorm,
                         tb.gram, tb.alphabet, tb.logtr, float(sigma2),
                         _lognorm(np.shape(Y)[1], sigma2), out,
                         np.empty((1, max(M * L, 1)), dtype=np.complex128), js, xs)
    return out


def block_sweep(ref, globals_, Y, constellation, sigma2, block_size, n_particles, rng,
                systematic=False):
    """Sweep chains in random blocks, each conditioned on the rest.

    ``n_particles(m)`` gives the particle count for a block of ``m`` chains.
    """
    M = ref.shape[1]
    idx = np.array(ref, dtype=np.int16)
    X = constellation.alphabet[idx]
    order = rng.permutation(M)
    for start in range(0, M, block_size):
        blk = np.sort(order[start:start + block_size])
        rest = np.setdiff1d(np.arange(M), blk)
        resid = Y - mean_sequence(X[:, rest], globals_.taps[rest])
        new = pgas_sweep(idx[:, blk], globals_.subset(blk), resid, constellation, sigma2,
                         n_particles(len(blk)), rng, systematic=systematic)
        idx[:, blk] = new
        X[:, blk] = constellation.alphabet[new]
    return idx


def compact(idx, globals_, chain_ids=None):
    """Drop all-zero chains; returns ``(idx, globals_, chain_ids, M_plus)``."""
    keep = np.flatnonzero(np.asarray(idx).any(axis=0))
    ids = None if chain_ids is None else np.asarray(chain_ids)
    if keep.size == idx.shape[1]:
        return idx, globals_, ids, keep.size
    return idx[:, keep], globals_.subset(keep), (None if ids is None else ids[keep]), keep.size
