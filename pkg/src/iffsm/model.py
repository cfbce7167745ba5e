"""Domain types of the infinite factorial FSM and its exact densities.

Latent symbols are stored as integer indices into an *alphabet*: index 0 is
the idle symbol (the chain is inactive, ``x = 0``) and ``k >= 1`` is the
``k-1``-th constellation point.  An index matrix ``idx`` of shape ``(T, M)``
therefore encodes both the activity matrix (``idx > 0``) and the symbol
matrix (``alphabet[idx]``).  Rows before ``t = 1`` are implicitly idle.

Channel taps are stored as a complex array ``taps[m, l, d]`` with shape
``(M, L, D)``: chain ``m``, tap ``l`` (0 is the direct tap) and antenna ``d``.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import DomainError, cgauss_logpdf

__all__ = [
    "Constellation",
    "Hyperparams",
    "GlobalParams",
    "loglik_obs",
    "loglik_sequence",
    "mean_sequence",
    "log_transition",
    "transition_table",
    "log_prior_latent",
    "snr_db",
]


def _gray_to_binary(g):
    b = 0
    while g:
        b ^= g
        g >>= 1
    return b


@dataclass(frozen=True, eq=False)
class Constellation:
    """A finite symbol set ``A``; ``alphabet`` prepends the idle symbol 0."""

    symbols: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        s = np.asarray(self.symbols, dtype=complex).ravel()
        if s.size == 0:
            raise ValueError("empty constellation")
        if np.any(np.abs(s) < 1e-12):
            raise ValueError("0 is reserved for the idle symbol")
        d = np.abs(s[:, None] - s[None, :]) + np.eye(s.size)
        if np.any(d < 1e-9):
            raise ValueError("constellation symbols must be distinct")
        object.__setattr__(self, "symbols", s)

    @property
    def order(self):
        return self.symbols.size

    @property
    def alphabet(self):
        return np.concatenate(([0j], self.symbols))

    @property
    def energy(self):
        return float(np.mean(np.abs(self.symbols) ** 2))

    def normalized(self):
        return Constellation(self.symbols / np.sqrt(self.energy), self.name)

    def index_of(self, x, tol=1e-9):
        """Alphabet index of complex symbol(s) ``x``; raises on foreign values."""
        x = np.asarray(x, dtype=complex)
        d = np.abs(x[..., None] - self.alphabet)
        k = d.argmin(axis=-1)
        if np.any(np.take_along_axis(d, k[..., None], -1)[..., 0] > tol):
            raise DomainError("value outside the alphabet A ∪ {0}")
        return k

    def symmetry_group(self, tol=1e-9):
        """Unit-modulus rotations ``r`` with ``r * A == A``, identity first."""
        s = self.symbols
        out = [1.0 + 0j]
        for c in s / s[0]:
            if abs(abs(c) - 1) > tol or abs(c - 1) < tol:
                continue
            rot = c * s
            if np.all(np.min(np.abs(rot[:, None] - s[None, :]), axis=1) < 1e-7):
                if not any(abs(c - r) < tol for r in out):
                    out.append(complex(c))
        return np.array(out)

    def rotation_permutation(self, r):
        """Alphabet-index map ``k -> index_of(r * alphabet[k])``."""
        return self.index_of(r * self.alphabet, tol=1e-7)

    @classmethod
    def bpsk(cls):
        return cls(np.array([1.0, -1.0]), "bpsk")

    @classmethod
    def qam(cls, order):
        """Gray-labeled square QAM with unit mean energy (4-QAM is QPSK)."""
        k = int(round(np.sqrt(order)))
        if k * k != order or k & (k - 1):
            raise ValueError(f"square power-of-two QAM order expected, got {order}")
        bits = k.bit_length() - 1
        pts = []
        for label in range(order):
            i_pos = _gray_to_binary(label >> bits)
            q_pos = _gray_to_binary(label & (k - 1))
            pts.append((2 * i_pos - (k - 1)) + 1j * (2 * q_pos - (k - 1)))
        c = cls(np.array(pts), "qpsk" if order == 4 else f"qam{order}")
        return c.normalized()

    @classmethod
    def qpsk(cls):
        return cls.qam(4)

    @classmethod
    def by_name(cls, name):
        name = name.lower().replace("-", "")
        if name == "bpsk":
            return cls.bpsk()
        if name == "qpsk":
            return cls.qpsk()
        if name.startswith("qam"):
            return cls.qam(int(name[3:]))
        if name.endswith("qam"):
            return cls.qam(int(name[:-3]))
        raise ValueError(f"unknown constellation {name!r}")

    @classmethod
    def from_file(cls, path, normalize=True):
        """Read one ``re im`` pair per line (``#`` starts a comment)."""
        pts = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 're im', got {line!r}")
                pts.append(float(parts[0]) + 1j * float(parts[1]))
        c = cls(np.array(pts), str(path))
        return c.normalized() if normalize else c


@dataclass(frozen=True)
class Hyperparams:
    """Prior hyperparameters; ``noise_var`` is the known noise variance."""

    alpha: float = 1.0
    beta0: float = 2.0
    beta1: float = 0.1
    sigma_h2: float = 1.0
    lam: float = 0.5
    kappa: float = 1.0
    noise_var: float = 2.0

    def __post_init__(self):
        for k in ("alpha", "beta0", "beta1", "sigma_h2", "kappa", "noise_var"):
            if not getattr(self, k) > 0:
                raise DomainError(f"{k} must be positive")
        if self.lam < 0:
            raise DomainError("lam must be nonnegative")

    @property
    def tau(self):
        return 2.0 + self.kappa ** -2

    def nu(self, n_taps):
        ell = np.arange(n_taps)
        return (self.tau - 1.0) * self.sigma_h2 * np.exp(-self.lam * ell)

    def tap_var_mean(self, n_taps):
        return self.sigma_h2 * np.exp(-self.lam * np.arange(n_taps))

    def replace(self, **kw):
        return replace(self, **kw)


@dataclass
class GlobalParams:
    """Per-chain transition probabilities and taps plus shared tap variances."""

    a: np.ndarray
    b: np.ndarray
    taps: np.ndarray
    tap_var: np.ndarray = field(default_factory=lambda: np.ones(1))

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float).reshape(-1)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.taps = np.asarray(self.taps, dtype=complex)
        self.tap_var = np.asarray(self.tap_var, dtype=float).reshape(-1)
        if self.taps.ndim != 3:
            raise ValueError("taps must have shape (M, L, D)")
        m = self.taps.shape[0]
        if self.a.size != m or self.b.size != m:
            raise ValueError("a, b and taps disagree on the number of chains")

    @property
    def n_chains(self):
        return self.taps.shape[0]

    @property
    def n_taps(self):
        return self.taps.shape[1]

    @property
    def n_antennas(self):
        return self.taps.shape[2]

    def subset(self, keep):
        keep = np.asarray(keep)
        return GlobalParams(self.a[keep], self.b[keep], self.taps[keep], self.tap_var.copy())

    def append(self, a, b, taps):
        return GlobalParams(np.concatenate((self.a, np.atleast_1d(a))),
                            np.concatenate((self.b, np.atleast_1d(b))),
                            np.concatenate((self.taps, taps), axis=0),
                            self.tap_var.copy())

    def copy(self):
        return GlobalParams(self.a.copy(), self.b.copy(), self.taps.copy(), self.tap_var.copy())


def loglik_obs(y_t, window, taps, sigma2):
    """``log CN(y_t; sum_m sum_l taps[m, l] * window[l, m], sigma2 I)``.

    ``window[l, m]`` holds the complex symbol of chain ``m`` at time
    ``t - l`` (row 0 is the current input).
    """
    window = np.asarray(window, dtype=complex)
    taps = np.asarray(taps, dtype=complex)
    y_t = np.asarray(y_t, dtype=complex)
    L, M = window.shape
    if taps.shape[:2] != (M, L) or taps.shape[2] != y_t.size:
        raise ValueError(f"shape mismatch: window {window.shape}, taps {taps.shape}, y {y_t.shape}")
    mean = np.einsum("lm,mld->d", window, taps)
    return cgauss_logpdf(y_t, mean, sigma2)


def mean_sequence(X, taps):
    """Noiseless received signal ``(T, D)`` for complex symbol matrix ``X``."""
    X = np.asarray(X, dtype=complex)
    T = X.shape[0]
    M, L, D = taps.shape
    out = np.zeros((T, D), dtype=complex)
    for ell in range(L):
        if ell >= T:
            break
        out[ell:] += X[: T - ell] @ taps[:, ell, :]
    return out


def loglik_sequence(Y, X, taps, sigma2):
    """Per-time log-likelihoods ``log p(y_t | X, taps)`` as a length-T array."""
    r = np.asarray(Y) - mean_sequence(X, taps)
    D = r.shape[1]
    return -D * np.log(np.pi * sigma2) - np.sum(np.abs(r) ** 2, axis=1) / sigma2


def log_transition(s_prev, s, x, a, b, constellation):
    """``log p(s | s_prev; a, b) + log p(x | s)`` for one chain and step."""
    if not (0 < a < 1 and 0 < b < 1):
        raise DomainError("a and b must lie in (0, 1)")
    k = int(constellation.index_of(x))
    if s == 0:
        if k != 0:
            return -np.inf
        return float(np.log1p(-b) if s_prev else np.log1p(-a))
    if k == 0:
        return -np.inf
    return float(np.log(b if s_prev else a) - np.log(constellation.order))


def transition_table(a, b, n_symbols):
    """Log transition table ``tab[m, s_prev, k]`` over alphabet indices ``k``."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    M = a.size
    tab = np.empty((M, 2, n_symbols + 1))
    with np.errstate(divide="ignore"):
        tab[:, 0, 0] = np.log1p(-a)
        tab[:, 1, 0] = np.log1p(-b)
        tab[:, 0, 1:] = (np.log(a) - np.log(n_symbols))[:, None]
        tab[:, 1, 1:] = (np.log(b) - np.log(n_symbols))[:, None]
    return tab


def log_prior_latent(idx, a, b, n_symbols):
    """``log p(S, X | a, b)`` for an index matrix, with idle rows before t=1."""
    idx = np.asarray(idx)
    if idx.shape[1] == 0:
        return 0.0
    tab = transition_table(a, b, n_symbols)
    prev = np.vstack((np.zeros((1, idx.shape[1]), dtype=idx.dtype), idx[:-1])) > 0
    m = np.broadcast_to(np.arange(idx.shape[1]), idx.shape)
    return float(tab[m, prev.astype(int), idx].sum())


def snr_db(D, L, noise_var):
    """Per-user SNR in dB, ``10 log10(D L / noise_var)``."""
    return 10.0 * np.log10(D * L / noise_var)
