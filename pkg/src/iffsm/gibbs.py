"""Conjugate updates of the global variables, tempering, and the full sweep.

One :func:`full_iteration` runs the three inference steps in order:

1. slice variable and birth of new inactive chains (:mod:`iffsm.mibp`);
2. a PGAS sweep over all chains, jointly or in blocks, followed by removal
   of chains that stayed inactive (:mod:`iffsm.pgas`);
3. Gibbs updates of ``a``, ``b``, the channel taps and the tap variances.

Snapshot files are plain text; see :func:`write_snapshot` for the layout.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import mibp, pgas
from .model import GlobalParams, log_prior_latent, loglik_sequence
from .numerics import sample_cgauss, sample_invgamma

logger = logging.getLogger(__name__)

__all__ = [
    "NumericalError",
    "TransitionCounts",
    "TemperSchedule",
    "SamplerConfig",
    "SamplerState",
    "sample_transition_probs",
    "extended_design",
    "channel_posterior",
    "sample_channels",
    "sample_tap_variances",
    "init_state",
    "log_joint",
    "full_iteration",
    "write_snapshot",
    "read_snapshot",
]

# keep Beta draws away from the closed endpoints (Beta(2, 0.1) hits 1.0 in double)
_P_LO = 1e-300
_P_HI = 1.0 - 2.0 ** -53


class NumericalError(ArithmeticError):
    pass


@dataclass
class TransitionCounts:
    """Per-chain transition counts over ``t = 1..T`` with an idle state before."""

    n00: np.ndarray
    n01: np.ndarray
    n10: np.ndarray
    n11: np.ndarray

    @classmethod
    def from_idx(cls, idx):
        s = np.asarray(idx) > 0
        prev = np.vstack((np.zeros((1, s.shape[1]), bool), s[:-1]))
        return cls(
            n00=np.sum(~prev & ~s, axis=0),
            n01=np.sum(~prev & s, axis=0),
            n10=np.sum(prev & ~s, axis=0),
            n11=np.sum(prev & s, axis=0),
        )

    @property
    def total(self):
        return self.n00 + self.n01 + self.n10 + self.n11


def sample_transition_probs(counts, hyper, rng, a_shape=0.0):
    """Draw ``a ~ Beta(a_shape + n01, 1 + n00)`` and ``b ~ Beta(beta0 + n11, beta1 + n10)``.

    ``a_shape = 0`` is the semi-ordered stick-breaking conditional and needs
    every chain to have activated at least once.  A finite model with
    ``a ~ Beta(alpha / M, 1)`` uses ``a_shape = alpha / M``.
    """
    n01 = np.asarray(counts.n01, float)
    if a_shape <= 0 and np.any(n01 < 1):
        raise ValueError("a chain that never activates cannot be updated; compact first")
    a = rng.beta(a_shape + n01, 1.0 + counts.n00)
    b = rng.beta(hyper.beta0 + counts.n11, hyper.beta1 + counts.n10)
    return np.clip(a, _P_LO, _P_HI), np.clip(b, _P_LO, _P_HI)


# ---------------------------------------------------------------------------
# channels
# ---------------------------------------------------------------------------

def extended_design(X, L):
    """``X_ext`` with column ``m * L + l`` holding chain ``m`` delayed by ``l``."""
    X = np.asarray(X, dtype=complex)
    T, M = X.shape
    out = np.zeros((T, M * L), dtype=complex)
    for ell in range(min(L, T)):
        out[ell:, ell::L] = X[: T - ell]
    return out


def _precision_factor(X, tap_var, sigma2):
    """Cholesky factor of the posterior precision and the design matrix."""
    L = len(tap_var)
    Xe = extended_design(X, L)
    prior_var = np.tile(np.asarray(tap_var, float), X.shape[1])
    prec = Xe.conj().T @ Xe / sigma2
    prec[np.diag_indices_from(prec)] += 1.0 / prior_var
    try:
        chol = scipy.linalg.cholesky(prec, lower=True)
    except np.linalg.LinAlgError:
        cond = np.linalg.cond(prec)
        raise NumericalError(
            f"posterior precision of size {prec.shape[0]} not positive definite "
            f"(condition number {cond:.3e})") from None
    return chol, Xe


def channel_posterior(Y, X, tap_var, sigma2):
    """Posterior mean ``(M, L, D)`` and shared covariance ``Gamma`` of the taps."""
    Y = np.asarray(Y, dtype=complex)
    M, L, D = np.asarray(X).shape[1], len(tap_var), Y.shape[1]
    if M == 0:
        return np.zeros((0, L, D), complex), np.zeros((0, 0), complex)
    chol, Xe = _precision_factor(X, tap_var, sigma2)
    mu = scipy.linalg.cho_solve((chol, True), Xe.conj().T @ Y / sigma2)
    gamma = scipy.linalg.cho_solve((chol, True), np.eye(chol.shape[0]))
    return mu.reshape(M, L, D), gamma


def sample_channels(Y, X, tap_var, sigma2, rng):
    """Draw all taps from their Gaussian conditional; returns ``(M, L, D)``.

    The precision matrix is factored once and shared by the ``D`` antennas.
    """
    Y = np.asarray(Y, dtype=complex)
    M, L, D = np.asarray(X).shape[1], len(tap_var), Y.shape[1]
    if M == 0:
        return np.zeros((0, L, D), complex)
    chol, Xe = _precision_factor(X, tap_var, sigma2)
    mu = scipy.linalg.cho_solve((chol, True), Xe.conj().T @ Y / sigma2)
    z = sample_cgauss(np.zeros(mu.shape), 1.0, rng)
    # Lambda = C C^H, so C^{-H} z has covariance Lambda^{-1}
    h = mu + scipy.linalg.solve_triangular(chol, z, lower=True, trans="C")
    return h.reshape(M, L, D)


def sample_tap_variances(taps, hyper, rng):
    """``sigma_l^2 ~ IG(tau + D M, nu_l + sum_m ||h_m^l||^2)`` for each tap."""
    taps = np.asarray(taps)
    M, L, D = taps.shape
    shape = hyper.tau + D * M
    scale = hyper.nu(L) + np.sum(np.abs(taps) ** 2, axis=(0, 2))
    return sample_invgamma(shape, scale, rng)


# ---------------------------------------------------------------------------
# tempering
# ---------------------------------------------------------------------------

@dataclass
class TemperSchedule:
    """Effective noise variance per iteration.

    ``geometric``: the artificial part ``start_var - noise_var`` shrinks by
    ``decay`` every iteration and is dropped once it falls below
    ``clamp_rel * noise_var``.  ``lineardb``: the effective SNR rises linearly
    in dB from ``start_var`` to ``noise_var`` over ``n_temper`` iterations.
    ``off``: always ``noise_var``.  ``n_exploit`` iterations follow the
    annealing phase.
    """

    noise_var: float
    start_var: float = 10 ** 1.2
    decay: float = 0.9995
    mode: str = "geometric"
    n_temper: int = None
    n_exploit: int = 2000
    clamp_rel: float = 1e-2

    def __post_init__(self):
        if self.mode not in ("geometric", "lineardb", "off"):
            raise ValueError(f"unknown tempering mode {self.mode!r}")
        if self.mode == "geometric" and not 0 < self.decay < 1:
            raise ValueError("decay must lie in (0, 1)")
        if self.mode == "lineardb" and not self.n_temper:
            raise ValueError("lineardb tempering needs n_temper")

    @property
    def temper_iters(self):
        """Iterations until the effective variance equals ``noise_var``."""
        art = self.start_var - self.noise_var
        if self.mode == "off" or art <= 0:
            return 0
        if self.mode == "lineardb":
            return int(self.n_temper)
        if self.n_temper is not None:
            return int(self.n_temper)
        ratio = self.clamp_rel * self.noise_var / art
        if ratio >= 1:
            return 0
        return int(math.ceil(math.log(ratio) / math.log(self.decay)))

    @property
    def total_iters(self):
        return self.temper_iters + self.n_exploit

    def sigma2(self, i):
        if i >= self.temper_iters:
            return float(self.noise_var)
        if self.mode == "lineardb":
            frac = 1.0 - i / self.temper_iters
            return float(self.noise_var * (self.start_var / self.noise_var) ** frac)
        art = (self.start_var - self.noise_var) * self.decay ** i
        if art <= self.clamp_rel * self.noise_var:
            return float(self.noise_var)
        return float(self.noise_var + art)


# ---------------------------------------------------------------------------
# sampler state and the sweep
# ---------------------------------------------------------------------------

@dataclass
class SamplerConfig:
    """Knobs of one inference run.

    ``a_shape > 0`` together with ``birth=False`` and ``compact=False`` gives
    the finite model with ``M`` fixed chains and ``a ~ Beta(a_shape, 1)``.
    ``block_size`` switches PGAS to blocks of randomly chosen chains.
    ``particles_per_chain`` enables ``P = max(P, particles_per_chain * M)``.
    """

    n_taps: int = 1
    particles: int = 3000
    systematic: bool = False
    birth: bool = True
    compact: bool = True
    a_shape: float = 0.0
    slice_beta: tuple = None
    max_chains: int = 50
    block_size: int = None
    particles_per_chain: int = None

    def n_particles(self, n_chains):
        if self.particles_per_chain:
            return max(self.particles, self.particles_per_chain * n_chains)
        return self.particles


@dataclass
class SamplerState:
    idx: np.ndarray                   # (T, M) alphabet indices
    globals_: GlobalParams
    chain_ids: np.ndarray             # (M,) persistent labels
    next_id: int = 0
    iteration: int = 0
    sigma2: float = float("nan")
    logjoint: float = float("nan")
    history: list = field(default_factory=list, repr=False)

    @property
    def n_chains(self):
        return self.idx.shape[1]

    def copy(self):
        return SamplerState(self.idx.copy(), self.globals_.copy(), self.chain_ids.copy(),
                            self.next_id, self.iteration, self.sigma2, self.logjoint)


def _seed_chain(state, hyper, rng):
    """Append one all-idle chain whose stick, ``b`` and taps come from the prior."""
    T = state.idx.shape[0]
    g = state.globals_
    a = float(mibp.sample_next_stick(1.0, hyper.alpha, T, rng))
    b = np.clip(rng.beta(hyper.beta0, hyper.beta1), _P_LO, _P_HI)
    taps = sample_cgauss(np.zeros((1, g.n_taps, g.n_antennas)), g.tap_var[None, :, None], rng)
    state.globals_ = g.append(a, b, taps)
    state.idx = np.hstack((state.idx, np.zeros((T, 1), dtype=state.idx.dtype)))
    state.chain_ids = np.append(state.chain_ids, state.next_id)
    state.next_id += 1


def init_state(T, D, hyper, rng, n_taps=1, seed_chain=True):
    """Cold start: no active chain plus (optionally) one inactive prior chain."""
    tap_var = sample_invgamma(hyper.tau, hyper.nu(n_taps), rng)
    g = GlobalParams(np.zeros(0), np.zeros(0), np.zeros((0, n_taps, D), complex), tap_var)
    idx = np.zeros((T, 0), dtype=np.int16)
    state = SamplerState(idx, g, np.zeros(0, dtype=np.int64), 0)
    if seed_chain:
        _seed_chain(state, hyper, rng)
    return state


def log_joint(Y, state, hyper, constellation, sigma2=None):
    """``log p(Y, S, X, h | a, b, sigma_l^2)`` at noise variance ``sigma2``."""
    sigma2 = hyper.noise_var if sigma2 is None else sigma2
    g = state.globals_
    X = constellation.alphabet[state.idx]
    out = float(loglik_sequence(Y, X, g.taps, sigma2).sum())
    out += log_prior_latent(state.idx, g.a, g.b, constellation.order)
    if g.n_chains:
        M, L, D = g.taps.shape
        energy = np.sum(np.abs(g.taps) ** 2, axis=(0, 2))
        out += float(np.sum(-M * D * np.log(np.pi * g.tap_var) - energy / g.tap_var))
    return out


def _pgas_step(state, Y, constellation, sigma2, config, rng):
    g = state.globals_
    M = state.n_chains
    P = config.n_particles(M)
    if not config.block_size or config.block_size >= M:
        return pgas.pgas_sweep(state.idx, g, Y, constellation, sigma2, P, rng,
                               systematic=config.systematic)
    return pgas.block_sweep(state.idx, g, Y, constellation, sigma2, config.block_size,
                            config.n_particles, rng, systematic=config.systematic)


def full_iteration(state, Y, schedule, i, rng, hyper, constellation, config):
    """One sweep of the three inference steps; returns the updated state."""
    sigma2 = schedule.sigma2(i)
    T, D = Y.shape

    # Step 1: slice and births
    if config.birth:
        if not state.idx.any():
            # empty model: a_min = 1 makes births ~1/T likely, so reseed a prior chain
            _seed_chain(state, hyper, rng)
            a_min = float(state.globals_.a.min())
        else:
            a_min = mibp.active_min_stick(state.globals_.a, state.idx)
        theta = mibp.draw_slice(a_min, rng, config.slice_beta)
        idx, g, n_new, _ = mibp.extend_chains(state.idx, state.globals_, theta, hyper, rng,
                                              a_min=a_min, max_chains=config.max_chains)
        if n_new:
            state.idx, state.globals_ = idx, g
            state.chain_ids = np.concatenate(
                (state.chain_ids, np.arange(state.next_id, state.next_id + n_new)))
            state.next_id += n_new

    # Step 2: PGAS then compaction
    if state.n_chains:
        state.idx = _pgas_step(state, Y, constellation, sigma2, config, rng)
    if config.compact:
        state.idx, state.globals_, state.chain_ids, _ = pgas.compact(
            state.idx, state.globals_, state.chain_ids)

    # Step 3: transitions, channels, tap variances
    g = state.globals_
    if g.n_chains:
        counts = TransitionCounts.from_idx(state.idx)
        a, b = sample_transition_probs(counts, hyper, rng, a_shape=config.a_shape)
        X = constellation.alphabet[state.idx]
        taps = sample_channels(Y, X, g.tap_var, sigma2, rng)
        g = GlobalParams(a, b, taps, g.tap_var)
    g.tap_var = sample_tap_variances(g.taps, hyper, rng)
    state.globals_ = g
    state.iteration = i + 1
    state.sigma2 = sigma2
    state.logjoint = log_joint(Y, state, hyper, constellation, hyper.noise_var)
    return state


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------

def write_snapshot(path, state):
    """Write a line-oriented snapshot.

    Layout (one ``key values...`` per line)::

        iffsm-snapshot 1
        iteration <int>
        sigma2 <float>
        logjoint <float>
        shape <T> <M> <L> <D>
        next_id <int>
        chain_ids <M ints>
        a <M floats>
        b <M floats>
        tap_var <L floats>
        tap <m> <l> <d> <re> <im>        (M*L*D lines, 0-based)
        row <M ints>                     (T lines of alphabet indices)
    """
    g = state.globals_
    T, M = state.idx.shape
    L, D = g.n_taps, g.n_antennas

    def fl(v):
        return " ".join(repr(float(x)) for x in v)

    lines = [
        "iffsm-snapshot 1",
        f"iteration {state.iteration}",
        f"sigma2 {float(state.sigma2)!r}",
        f"logjoint {float(state.logjoint)!r}",
        f"shape {T} {M} {L} {D}",
        f"next_id {state.next_id}",
        "chain_ids " + " ".join(str(int(c)) for c in state.chain_ids),
        "a " + fl(g.a),
        "b " + fl(g.b),
        "tap_var " + fl(g.tap_var),
    ]
    for m in range(M):
        for ell in range(L):
            for d in range(D):
                c = complex(g.taps[m, ell, d])
                lines.append(f"tap {m} {ell} {d} {c.real!r} {c.imag!r}")
    for row in state.idx:
        lines.append("row " + " ".join(str(int(k)) for k in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_snapshot(path):
    """Inverse of :func:`write_snapshot`."""
    meta = {}
    taps = rows = None
    with open(path) as fh:
        head = fh.readline().split()
        if head != ["iffsm-snapshot", "1"]:
            raise ValueError(f"{path}: not a snapshot file")
        for lineno, line in enumerate(fh, 2):
            key, _, rest = line.rstrip("\n").partition(" ")
            vals = rest.split()
            if key == "tap":
                m, ell, d = (int(v) for v in vals[:3])
                taps[m, ell, d] = float(vals[3]) + 1j * float(vals[4])
            elif key == "row":
                rows.append([int(v) for v in vals])
            elif key == "shape":
                T, M, L, D = (int(v) for v in vals)
                meta["shape"] = (T, M, L, D)
                taps = np.zeros((M, L, D), complex)
                rows = []
            elif key in ("a", "b", "tap_var"):
                meta[key] = np.array([float(v) for v in vals])
            elif key == "chain_ids":
                meta[key] = np.array([int(v) for v in vals], dtype=np.int64)
            elif key in ("iteration", "next_id"):
                meta[key] = int(vals[0])
            elif key in ("sigma2", "logjoint"):
                meta[key] = float(vals[0])
            else:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    T, M, L, D = meta["shape"]
    idx = np.array(rows, dtype=np.int16).reshape(T, M)
    g = GlobalParams(meta["a"], meta["b"], taps, meta["tap_var"])
    return SamplerState(idx, g, meta["chain_ids"], meta["next_id"], meta["iteration"],
                        meta["sigma2"], meta["logjoint"])
