"""Synthetic multiuser data with ground truth, and channel-file I/O.

Channel file format (plain text)::

    # optional comments
    N_t D L scale
    m d l re im        # one row per coefficient, 1-based m, d, l

Rows may appear in any order but every ``(m, d, l)`` must be present once.
On import the coefficients are multiplied by ``scale`` (or an override).
"""

from dataclasses import dataclass, field

import numpy as np

from .model import Constellation, mean_sequence, snr_db
from .numerics import sample_cgauss

__all__ = [
    "ScenarioConfig",
    "GroundTruth",
    "ChannelFileError",
    "gen_channel_rayleigh",
    "gen_activity_bursts",
    "gen_observations",
    "simulate",
    "export_channel_file",
    "import_channel_file",
]


class ChannelFileError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    """One synthetic scenario.

    ``tap_var`` defaults to unit variance on every tap so that the per-user
    SNR is ``10 log10(D L / noise_var)``.  Burst start times are uniform on
    ``[1, T // 2]`` (1-based) unless ``start_max`` says otherwise, and are
    clipped so the burst fits inside the horizon.
    """

    T: int = 1000
    D: int = 20
    L: int = 1
    n_tx: int = 5
    constellation: str = "qpsk"
    noise_var: float = 2.0
    burst_len: int = 500
    tap_var: tuple = None
    start_max: int = None
    channel_file: str = None

    def validate(self):
        if self.n_tx < 1:
            raise ValueError("need at least one transmitter")
        if not 1 <= self.burst_len <= self.T:
            raise ValueError(f"burst length {self.burst_len} must be in [1, T={self.T}]")
        if self.noise_var < 0:
            raise ValueError("noise variance must be >= 0")
        if self.tap_var is not None and len(self.tap_var) != self.L:
            raise ValueError("tap_var needs one entry per tap")

    def tap_variances(self):
        return np.ones(self.L) if self.tap_var is None else np.asarray(self.tap_var, float)

    def get_constellation(self):
        return Constellation.by_name(self.constellation)

    @property
    def snr_db(self):
        return snr_db(self.D, self.L, self.noise_var)


@dataclass
class GroundTruth:
    idx: np.ndarray          # (T, N_t) alphabet indices
    X: np.ndarray            # (T, N_t) complex symbols
    taps: np.ndarray         # (N_t, L, D)
    starts: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    stops: np.ndarray = field(default_factory=lambda: np.zeros(0, int))

    @property
    def S(self):
        return (self.idx > 0).astype(np.int8)

    @property
    def n_tx(self):
        return self.idx.shape[1]


def gen_channel_rayleigh(n_tx, D, L, tap_var, rng):
    """Independent Rayleigh taps ``h[m, l] ~ CN(0, tap_var[l] I_D)``."""
    tap_var = np.broadcast_to(np.asarray(tap_var, float), (L,))
    return sample_cgauss(np.zeros((n_tx, L, D)), tap_var[None, :, None], rng)


def gen_activity_bursts(config, rng):
    """One contiguous burst per transmitter with i.i.d. uniform symbols.

    Returns ``(idx, starts)`` where ``idx`` is ``(T, N_t)`` and ``starts``
    are 0-based burst start rows.
    """
    config.validate()
    T, n, burst = config.T, config.n_tx, config.burst_len
    constellation = config.get_constellation()
    start_max = config.start_max if config.start_max is not None else max(T // 2, 1)
    start_max = min(start_max, T - burst + 1)
    starts = rng.integers(1, start_max + 1, size=n) - 1
    idx = np.zeros((T, n), dtype=np.int16)
    for m, s0 in enumerate(starts):
        idx[s0:s0 + burst, m] = rng.integers(1, constellation.order + 1, size=burst)
    return idx, starts


def gen_observations(X, taps, noise_var, rng):
    """``y_t = sum_m sum_l h[m, l] x_{t-l, m} + n_t`` with ``n_t ~ CN(0, noise_var I)``.

    ``noise_var = 0`` returns the noiseless convolution exactly.
    """
    mean = mean_sequence(X, taps)
    if noise_var == 0:
        return mean
    return mean + sample_cgauss(np.zeros(mean.shape), noise_var, rng)


def simulate(config, rng):
    """Draw taps, bursts and observations; returns ``(Y, GroundTruth)``."""
    config.validate()
    constellation = config.get_constellation()
    if config.channel_file:
        taps = import_channel_file(config.channel_file)
        if taps.shape[0] < config.n_tx or taps.shape[2] != config.D or taps.shape[1] != config.L:
            raise ChannelFileError(
                f"channel file shape {taps.shape} incompatible with "
                f"n_tx={config.n_tx}, L={config.L}, D={config.D}")
        taps = taps[: config.n_tx]
    else:
        taps = gen_channel_rayleigh(config.n_tx, config.D, config.L, config.tap_variances(), rng)
    idx, starts = gen_activity_bursts(config, rng)
    X = constellation.alphabet[idx]
    Y = gen_observations(X, taps, config.noise_var, rng)
    truth = GroundTruth(idx=idx, X=X, taps=taps, starts=starts, stops=starts + config.burst_len)
    return Y, truth


def export_channel_file(path, taps, scale=1.0):
    """Write ``taps (N_t, L, D)`` so :func:`import_channel_file` restores them."""
    taps = np.asarray(taps, dtype=complex)
    n, L, D = taps.shape
    with open(path, "w") as fh:
        fh.write("# N_t D L scale\n")
        fh.write(f"{n} {D} {L} {float(scale)!r}\n")
        for m in range(n):
            for d in range(D):
                for ell in range(L):
                    c = complex(taps[m, ell, d])
                    fh.write(f"{m + 1} {d + 1} {ell + 1} {c.real!r} {c.imag!r}\n")


def import_channel_file(path, scale=None):
    """Read a channel file; multiply by the header scale unless overridden."""
    header = None
    taps = None
    seen = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if header is None:
                if len(parts) != 4:
                    raise ChannelFileError(f"{path}:{lineno}: header must be 'N_t D L scale'")
                try:
                    n, D, L = (int(p) for p in parts[:3])
                    file_scale = float(parts[3])
                except ValueError as err:
                    raise ChannelFileError(f"{path}:{lineno}: bad header ({err})") from None
                if min(n, D, L) < 1:
                    raise ChannelFileError(f"{path}:{lineno}: header sizes must be positive")
                header = (n, D, L, file_scale)
                taps = np.zeros((n, L, D), dtype=complex)
                seen = np.zeros((n, L, D), dtype=bool)
                continue
            if len(parts) != 5:
                raise ChannelFileError(f"{path}:{lineno}: expected 'm d l re im', got {line!r}")
            try:
                m, d, ell = (int(p) - 1 for p in parts[:3])
                val = float(parts[3]) + 1j * float(parts[4])
            except ValueError as err:
                raise ChannelFileError(f"{path}:{lineno}: malformed row ({err})") from None
            if not (0 <= m < n and 0 <= d < D and 0 <= ell < L):
                raise ChannelFileError(
                    f"{path}:{lineno}: index ({m + 1}, {d + 1}, {ell + 1}) outside header "
                    f"N_t={n}, D={D}, L={L}")
            if seen[m, ell, d]:
                raise ChannelFileError(f"{path}:{lineno}: duplicate coefficient")
            taps[m, ell, d] = val
            seen[m, ell, d] = True
    if header is None:
        raise ChannelFileError(f"{path}: empty channel file")
    if not seen.all():
        raise ChannelFileError(
            f"{path}: {int((~seen).sum())} coefficients missing for header "
            f"N_t={header[0]}, D={header[1]}, L={header[2]}")
    s = header[3] if scale is None else scale
    return taps if s == 1.0 else taps * s
