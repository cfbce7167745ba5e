"""Slice-sampled birth of new inactive chains (semi-ordered stick breaking).

New sticks are drawn one after another below the smallest active stick
from the density

    p(a | a_prev) ∝ exp(alpha * sum_{t=1}^T (1 - a)^t / t) a^(alpha-1) (1 - a)^T,
    0 <= a <= a_prev

which is log-concave in ``u = log a``; sampling happens in ``u`` with
adaptive rejection sampling.  Drawing stops at the first stick below the
slice variable.
"""

import logging

import numpy as np

from .numerics import ars_sample_logconcave, sample_cgauss

logger = logging.getLogger(__name__)

__all__ = [
    "birth_logdensity",
    "birth_logdensity_grad",
    "active_min_stick",
    "draw_slice",
    "sample_next_stick",
    "extend_chains",
]

# runaway guard for pathological slice values
_MAX_BIRTHS = 500


def _power_sum(log1m_a, T):
    t = np.arange(1, T + 1)
    return np.exp(np.multiply.outer(log1m_a, t)) @ (1.0 / t)


def birth_logdensity(u, alpha, T):
    """Unnormalized log-density of a new stick in the variable ``u = log a``.

    Includes the Jacobian ``a`` of the change of variables.
    """
    u = np.asarray(u, dtype=float)
    a = np.exp(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        log1m = np.log1p(-a)
        out = alpha * _power_sum(log1m, T) + alpha * u + T * log1m
    return np.where(a < 1, out, -np.inf)


def birth_logdensity_grad(u, alpha, T):
    u = np.asarray(u, dtype=float)
    a = np.exp(u)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        g = alpha * np.exp(T * np.log1p(-a)) - T * a / (1 - a)
    return np.where(a < 1, g, -np.inf)


def active_min_stick(a, idx):
    """Smallest ``a`` over chains active at least once; 1 when none is."""
    active = np.asarray(idx).any(axis=0)
    return float(np.min(a[active])) if active.any() else 1.0


def draw_slice(a_min, rng, slice_beta=None):
    """Slice variable ``U(0, a_min)``, or ``a_min * Beta(*slice_beta)``."""
    if slice_beta is None:
        return a_min * rng.random()
    return a_min * rng.beta(*slice_beta)


def sample_next_stick(a_prev, alpha, T, rng, size=None):
    """Draw the next ordered stick(s) below ``a_prev`` via ARS in ``log a``."""
    u_top = np.log(a_prev)
    # rough mode: alpha (1-a)^T = T a / (1 - a)
    a_mode = min(alpha / (T + alpha), 0.5)
    init = [u_top + np.log(0.999), u_top + np.log(0.5)]
    if np.log(a_mode) < init[-1]:
        init += [np.log(a_mode), np.log(a_mode) - 1.0]
    u = ars_sample_logconcave(
        lambda v: birth_logdensity(v, alpha, T),
        lambda v: birth_logdensity_grad(v, alpha, T),
        -np.inf, u_top, rng, size=size, init=sorted(init))
    return np.exp(u)


def extend_chains(idx, globals_, theta, hyper, rng, a_min=None, max_chains=None):
    """Append newly born all-zero chains whose sticks exceed the slice ``theta``.

    Parameters
    ----------
    idx : ndarray (T, M)
        Current alphabet-index matrix.
    globals_ : GlobalParams
    theta : float
        Slice variable, ``0 < theta <= a_min``.
    hyper : Hyperparams
    a_min : float, optional
        Smallest active stick; computed from ``idx`` when omitted.
    max_chains : int, optional
        Hard cap on the total number of chains after the birth step.

    Returns
    -------
    idx, globals_, n_new, sticks
        ``sticks`` lists the drawn values including the final one below
        ``theta`` (useful for diagnostics).
    """
    T = idx.shape[0]
    if a_min is None:
        a_min = active_min_stick(globals_.a, idx)
    new = []
    sticks = []
    a_prev = a_min
    while len(new) < _MAX_BIRTHS:
        if max_chains is not None and globals_.n_chains + len(new) >= max_chains:
            break
        a_next = float(sample_next_stick(a_prev, hyper.alpha, T, rng))
        sticks.append(a_next)
        if a_next < theta:
            break
        new.append(a_next)
        a_prev = a_next
    else:
        logger.warning("birth step stopped after %d chains (theta=%g)", _MAX_BIRTHS, theta)
    n_new = len(new)
    if n_new == 0:
        return idx, globals_, 0, sticks
    L, D = globals_.n_taps, globals_.n_antennas
    b_new = rng.beta(hyper.beta0, hyper.beta1, size=n_new)
    taps_new = sample_cgauss(np.zeros((n_new, L, D)), globals_.tap_var[None, :, None], rng)
    idx = np.hstack((idx, np.zeros((T, n_new), dtype=idx.dtype)))
    globals_ = globals_.append(np.array(new), b_new, taps_new)
    return idx, globals_, n_new, sticks
