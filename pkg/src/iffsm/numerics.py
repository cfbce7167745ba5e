"""Random variates and small numerical helpers shared by the sampler.

Complex Gaussian convention
---------------------------
``CN(mu, v)`` denotes a circularly symmetric complex Gaussian with *total*
variance ``v`` per complex entry, i.e. ``v / 2`` on each of the real and
imaginary parts.  Its log-density for a length-``D`` vector is::

    -D * log(pi * v) - ||x - mu||^2 / v

Every module uses this convention.

Random number generation
------------------------
Each sampler owns one :class:`numpy.random.Generator`.  Independent streams
for a run are obtained with :func:`spawn_rngs`, which splits a
:class:`numpy.random.SeedSequence`; compiled kernels receive an integer seed
drawn from the owning generator, so a fixed seed reproduces a run bit-exactly
on one worker.
"""

import logging
import warnings

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "DomainError",
    "DegenerateWeightsError",
    "ARSFallbackWarning",
    "spawn_rngs",
    "sample_cgauss",
    "cgauss_logpdf",
    "sample_invgamma",
    "normalize_logweights",
    "resample_ancestors",
    "ars_sample_logconcave",
    "grid_inverse_cdf_sample",
]


class DomainError(ValueError):
    """A distribution parameter lies outside its domain."""


class DegenerateWeightsError(FloatingPointError):
    """All log-weights are -inf or NaN; the particle system has collapsed."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class ARSFallbackWarning(RuntimeWarning):
    """Adaptive rejection sampling gave up and the grid sampler was used."""


def spawn_rngs(seed, n):
    """Return ``n`` independent generators derived from one integer seed."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.default_rng(c) for c in children]


def sample_cgauss(mean, variance, rng, size=None):
    """Draw from ``CN(mean, variance * I)``.

    Parameters
    ----------
    mean : array_like, complex
        Mean vector (or any array shape).
    variance : float or array_like
        Total variance per complex entry; broadcast against ``mean``.
    rng : numpy.random.Generator
    size : tuple, optional
        Output shape when ``mean`` is a scalar.
    """
    variance = np.asarray(variance, dtype=float)
    if np.any(variance < 0) or not np.all(np.isfinite(variance)):
        raise DomainError(f"variance must be finite and >= 0, got {variance}")
    mean = np.asarray(mean, dtype=complex)
    shape = np.broadcast_shapes(mean.shape, variance.shape) if size is None else size
    g = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return mean + np.sqrt(variance / 2.0) * g


def cgauss_logpdf(x, mean, variance):
    """Log-density of ``CN(mean, variance * I)`` evaluated at vector ``x``."""
    if variance <= 0:
        raise DomainError(f"variance must be > 0, got {variance}")
    r = np.asarray(x, dtype=complex) - mean
    dim = r.size
    return -dim * np.log(np.pi * variance) - float(np.vdot(r, r).real) / variance


def sample_invgamma(shape, scale, rng, size=None):
    """Draw from the inverse-gamma density ``∝ v^-(shape+1) exp(-scale / v)``."""
    shape = np.asarray(shape, dtype=float)
    scale = np.asarray(scale, dtype=float)
    if np.any(shape <= 0) or np.any(scale <= 0):
        raise DomainError(f"inverse-gamma needs shape, scale > 0 (got {shape}, {scale})")
    return scale / rng.gamma(shape, 1.0, size=size)


def normalize_logweights(logw):
    """Exponentiate and normalize log-weights after subtracting the max."""
    logw = np.asarray(logw, dtype=float)
    finite = np.isfinite(logw)
    if not finite.any():
        raise DegenerateWeightsError("no finite log-weight to normalize")
    w = np.where(finite, np.exp(logw - logw[finite].max()), 0.0)
    return w / w.sum()


def resample_ancestors(logw, count, rng, systematic=False):
    """Draw ``count`` ancestor indices with probabilities ``∝ exp(logw)``.

    Multinomial (i.i.d. categorical) by default; ``systematic=True`` uses a
    single stratified uniform instead.
    """
    p = normalize_logweights(logw)
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    if systematic:
        u = (rng.random() + np.arange(count)) / count
    else:
        u = rng.random(count)
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(p) - 1)


# ---------------------------------------------------------------------------
# Adaptive rejection sampling
# ---------------------------------------------------------------------------

class _EnvelopeViolation(Exception):
    pass


class _Hull:
    """Tangent upper hull and chord squeeze of a concave log-density."""

    def __init__(self, x, h, dh, lower, upper):
        order = np.argsort(x)
        self.x = np.asarray(x, float)[order]
        self.h = np.asarray(h, float)[order]
        self.dh = np.asarray(dh, float)[order]
        self.lower = lower
        self.upper = upper
        self._update()

    def _update(self):
        x, h, dh = self.x, self.h, self.dh
        if np.any(np.diff(dh) > 1e-9 * (1 + np.abs(dh[1:]))):
            raise _EnvelopeViolation("derivative not decreasing")
        if np.isinf(self.lower) and dh[0] <= 0:
            raise _EnvelopeViolation("unbounded left tail without positive slope")
        if np.isinf(self.upper) and dh[-1] >= 0:
            raise _EnvelopeViolation("unbounded right tail without negative slope")
        ddh = dh[:-1] - dh[1:]
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (h[1:] - h[:-1] - x[1:] * dh[1:] + x[:-1] * dh[:-1]) / ddh
        # parallel tangents: put the breakpoint halfway
        z = np.where(ddh > 0, z, 0.5 * (x[:-1] + x[1:]))
        z = np.clip(z, x[:-1], x[1:])
        self.z = np.concatenate(([self.lower], z, [self.upper]))
        self.log_mass = self._log_masses()
        m = self.log_mass.max()
        p = np.exp(self.log_mass - m)
        self.cdf = np.cumsum(p) / p.sum()

    def _log_masses(self):
        x, h, dh, z = self.x, self.h, self.dh, self.z
        za, zb = z[:-1], z[1:]
        width = zb - za
        out = np.empty_like(h)
        for j in range(len(h)):
            s = dh[j]
            if abs(s) * (width[j] if np.isfinite(width[j]) else 1.0) < 1e-12:
                out[j] = h[j] + s * (0.5 * (za[j] + zb[j]) - x[j]) + np.log(width[j])
            elif s > 0:
                out[j] = h[j] + s * (zb[j] - x[j]) + np.log1p(-np.exp(-s * width[j])) - np.log(s)
            else:
                out[j] = h[j] + s * (za[j] - x[j]) + np.log1p(-np.exp(s * width[j])) - np.log(-s)
        return out

    def upper_at(self, xs):
        j = np.searchsorted(self.z[1:-1], xs, side="right")
        return self.h[j] + self.dh[j] * (xs - self.x[j])

    def lower_at(self, xs):
        j = np.searchsorted(self.x, xs, side="right") - 1
        out = np.full(xs.shape, -np.inf)
        inside = (j >= 0) & (j < len(self.x) - 1)
        jj = j[inside]
        x0, x1 = self.x[jj], self.x[jj + 1]
        w = (xs[inside] - x0) / (x1 - x0)
        out[inside] = (1 - w) * self.h[jj] + w * self.h[jj + 1]
        return out

    def draw(self, n, rng):
        j = np.searchsorted(self.cdf, rng.random(n), side="right")
        j = np.minimum(j, len(self.cdf) - 1)
        za, zb, s = self.z[j], self.z[j + 1], self.dh[j]
        v = rng.random(n)
        out = np.empty(n)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            width = zb - za
            flat = np.abs(s) * np.where(np.isfinite(width), width, 1.0) < 1e-12
            pos = (s > 0) & ~flat
            neg = (s < 0) & ~flat
            out[flat] = za[flat] + v[flat] * width[flat]
            out[pos] = zb[pos] + np.log(v[pos] + (1 - v[pos]) * np.exp(-s[pos] * width[pos])) / s[pos]
            out[neg] = za[neg] + np.log(v[neg] + (1 - v[neg]) * np.exp(s[neg] * width[neg])) / s[neg]
        return np.clip(out, za, zb)

    def insert(self, xs, hs, dhs):
        keep = np.isfinite(hs) & np.isfinite(dhs) & ~np.isin(xs, self.x)
        if not keep.any():
            return
        self.x = np.concatenate((self.x, xs[keep]))
        self.h = np.concatenate((self.h, hs[keep]))
        self.dh = np.concatenate((self.dh, dhs[keep]))
        order = np.argsort(self.x)
        self.x, self.h, self.dh = self.x[order], self.h[order], self.dh[order]
        self._update()


def _initial_abscissae(log_density, grad, lower, upper, init):
    """Pick starting points so the hull is integrable on (lower, upper)."""
    if init is not None:
        pts = np.asarray(init, float)
    else:
        lo = lower if np.isfinite(lower) else (upper - 10.0 if np.isfinite(upper) else -10.0)
        hi = upper if np.isfinite(upper) else lo + 20.0
        pts = lo + (hi - lo) * np.array([0.1, 0.5, 0.9])
    pts = np.sort(pts[(pts > lower) & (pts < upper)])
    if pts.size == 0:
        raise _EnvelopeViolation("no interior starting point")
    # walk outward until the unbounded tails have the right slope sign
    step = 1.0
    for _ in range(200):
        if np.isfinite(lower) or grad(pts[:1])[0] > 0:
            break
        pts = np.concatenate(([pts[0] - step], pts))
        step *= 2
    step = 1.0
    for _ in range(200):
        if np.isfinite(upper) or grad(pts[-1:])[0] < 0:
            break
        pts = np.concatenate((pts, [pts[-1] + step]))
        step *= 2
    h = log_density(pts)
    ok = np.isfinite(h)
    if not ok.any():
        raise _EnvelopeViolation("log-density not finite at starting points")
    return pts[ok], h[ok], grad(pts[ok])


def ars_sample_logconcave(log_density, grad, lower, upper, rng, size=None,
                          init=None, max_points=60, batch=256):
    """Exact draws from a log-concave density restricted to ``(lower, upper)``.

    Tangent-envelope adaptive rejection sampling with a chord squeeze.
    ``log_density`` and ``grad`` must be vectorized over a 1-D array.
    Candidates are proposed in batches from a fixed hull and the hull is
    refined between batches, so every accepted value is an exact draw.

    If the envelope is ever found below the density (the target is not
    log-concave), the grid inverse-CDF sampler is used instead and an
    :class:`ARSFallbackWarning` is emitted.
    """
    n = 1 if size is None else int(np.prod(size))
    try:
        hull = _Hull(*_initial_abscissae(log_density, grad, lower, upper, init),
                     lower, upper)
        out = []
        have = 0
        for _ in range(10_000):
            m = min(batch, max(n - have, 1) * 2)
            cand = hull.draw(m, rng)
            u = hull.upper_at(cand)
            w = np.log(rng.random(m))
            accept = w <= hull.lower_at(cand) - u
            rest = ~accept
            if rest.any():
                xr = cand[rest]
                hr = log_density(xr)
                if np.any(hr > u[rest] + 1e-8 * (1 + np.abs(u[rest]))):
                    raise _EnvelopeViolation("envelope below log-density")
                accept[rest] = w[rest] <= hr - u[rest]
                if hull.x.size < max_points:
                    take = slice(0, max(1, min(4, max_points - hull.x.size)))
                    hull.insert(xr[take], hr[take], grad(xr[take]))
            got = cand[accept]
            out.append(got)
            have += got.size
            if have >= n:
                break
        else:
            raise _EnvelopeViolation("too many rejections")
        draws = np.concatenate(out)[:n]
    except _EnvelopeViolation as err:
        msg = f"ARS failed ({err}); using grid inverse-CDF sampler"
        logger.warning(msg)
        warnings.warn(msg, ARSFallbackWarning, stacklevel=2)
        draws = grid_inverse_cdf_sample(log_density, lower, upper, rng, size=n, anchor=init)
    return draws[0] if size is None else draws.reshape(size)


def _effective_bounds(log_density, lower, upper, anchor, drop=50.0):
    """Finite interval holding all but ~exp(-drop) of a unimodal density."""
    if anchor is None:
        lo = lower if np.isfinite(lower) else (upper - 1.0 if np.isfinite(upper) else -1.0)
        hi = upper if np.isfinite(upper) else lo + 2.0
        anchor = [0.5 * (lo + hi)]
    probe = np.linspace(min(anchor), max(anchor), 64) if len(anchor) > 1 else np.asarray(anchor, float)
    ref = np.nanmax(log_density(probe))
    lo, hi = lower, upper
    if not np.isfinite(lower):
        step = 1.0
        lo = probe[0] - step
        while log_density(np.array([lo]))[0] > ref - drop and step < 1e8:
            step *= 2
            lo = probe[0] - step
    if not np.isfinite(upper):
        step = 1.0
        hi = probe[-1] + step
        while log_density(np.array([hi]))[0] > ref - drop and step < 1e8:
            step *= 2
            hi = probe[-1] + step
    return lo, hi


def grid_inverse_cdf_sample(log_density, lower, upper, rng, size=None, n_grid=4096, anchor=None):
    """Approximate draws by inverting a trapezoid CDF on an ``n_grid`` mesh.

    Infinite bounds are replaced by points where the log-density has fallen
    50 nats below its value near ``anchor``.
    """
    lo, hi = _effective_bounds(log_density, lower, upper, anchor)
    grid = np.linspace(lo, hi, n_grid)
    ld = log_density(grid)
    ld = np.where(np.isfinite(ld), ld, -np.inf)
    pdf = np.exp(ld - ld.max())
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid))))
    cdf /= cdf[-1]
    n = 1 if size is None else int(np.prod(size))
    draws = np.interp(rng.random(n), cdf, grid)
    return draws[0] if size is None else draws.reshape(size)
