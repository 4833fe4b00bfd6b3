"""Bearing fault orders, order-band masks and attention-spectrum alignment."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import czt

from .errors import EmptyMaskError, GeometryError, InputError, InsufficientDataError, ParameterError

ORDER_NAMES = ("BPFI", "BPFO", "BSF", "FTF")
DEFAULT_SMOOTHING = 0.05
DEFAULT_WEIGHT_DECAY = 0.5


@dataclass(frozen=True)
class BearingGeometry:
    ball_count: int
    ball_diameter: float
    pitch_diameter: float
    contact_angle: float = 0.0  # radians

    def __post_init__(self):
        if int(self.ball_count) != self.ball_count or self.ball_count < 1:
            raise GeometryError(f"ball count must be a positive integer, got {self.ball_count}")
        if not 0 < self.ball_diameter < self.pitch_diameter:
            raise GeometryError("need 0 < ball diameter < pitch diameter")
        r = self.ratio
        if not 0 < r < 1:
            raise GeometryError(f"(d/D_p) cos(theta) must lie in (0, 1), got {r}")

    @property
    def ratio(self):
        return self.ball_diameter / self.pitch_diameter * math.cos(self.contact_angle)

    @classmethod
    def from_json(cls, cfg):
        return cls(
            ball_count=int(cfg["ball_count"]),
            ball_diameter=float(cfg["ball_diameter"]),
            pitch_diameter=float(cfg["pitch_diameter"]),
            contact_angle=float(cfg.get("contact_angle_rad", 0.0)),
        )

    def to_json(self):
        return {
            "ball_count": self.ball_count,
            "ball_diameter": self.ball_diameter,
            "pitch_diameter": self.pitch_diameter,
            "contact_angle_rad": self.contact_angle,
        }


@dataclass(frozen=True)
class FaultOrders:
    BPFI: float
    BPFO: float
    BSF: float
    FTF: float
    f_r: float

    def as_dict(self):
        return {name: getattr(self, name) for name in ORDER_NAMES}


def fault_orders(geom, f_r):
    """Classical defect frequencies (Hz) for shaft rate ``f_r`` (Hz)."""
    if not f_r > 0:
        raise ParameterError(f"shaft rate must be positive, got {f_r}")
    r = geom.ratio
    if not 0 < r < 1:
        raise GeometryError(f"(d/D_p) cos(theta) must lie in (0, 1), got {r}")
    half = 0.5 * geom.ball_count * f_r
    return FaultOrders(
        BPFI=half * (1.0 + r),
        BPFO=half * (1.0 - r),
        BSF=geom.pitch_diameter / (2.0 * geom.ball_diameter) * f_r * (1.0 - r * r),
        FTF=0.5 * f_r * (1.0 - r),
        f_r=f_r,
    )


@dataclass(frozen=True)
class FrequencyGrid:
    n: int
    df: float
    fs: float

    def __post_init__(self):
        if self.n < 2 or not self.df > 0 or not self.fs > 0:
            raise ParameterError("grid needs n >= 2, df > 0, fs > 0")
        if (self.n - 1) * self.df > self.fs / 2 * (1 + 1e-12):
            raise ParameterError("grid extends beyond Nyquist")

    @classmethod
    def uniform(cls, fs, n, f_max=None):
        f_max = fs / 2 if f_max is None else f_max
        if f_max > fs / 2 * (1 + 1e-12):
            raise ParameterError(f"f_max={f_max} exceeds Nyquist {fs / 2}")
        return cls(n=int(n), df=f_max / (n - 1), fs=float(fs))

    @property
    def freqs(self):
        return np.arange(self.n) * self.df


@dataclass(frozen=True)
class BandMask:
    grid: FrequencyGrid
    probs: np.ndarray
    centers: dict  # order name -> array of sideband centers (Hz)


@dataclass(frozen=True)
class SpectralAttention:
    grid: FrequencyGrid
    probs: np.ndarray


@dataclass(frozen=True)
class MsdParams:
    m: float
    c: object  # scalar or per-sample array
    k: object

    def __post_init__(self):
        if not np.all(np.asarray(self.m) > 0):
            raise ParameterError("mass must be positive")
        if np.any(np.asarray(self.c) < 0):
            raise ParameterError("damping must be non-negative")
        if not np.all(np.asarray(self.k) > 0):
            raise ParameterError("stiffness must be positive")


def band_mask(orders, grid, sidebands=1, sigma=None, weights=None, include=ORDER_NAMES, weight_decay=DEFAULT_WEIGHT_DECAY):
    """Gaussian-mixture mask over order bands and their shaft-rate sidebands.

    ``sigma`` is a scalar or a mapping ``order -> width`` (default two grid
    steps).  ``weights`` is an array of shape ``(len(include), 2K+1)``; by
    default sideband ``m`` gets ``weight_decay**|m|``.  Centers outside the
    grid are not folded back; only their in-band tails contribute.
    """
    if sidebands < 0 or int(sidebands) != sidebands:
        raise ParameterError("sideband count must be a non-negative integer")
    include = tuple(include)
    ms = np.arange(-sidebands, sidebands + 1)
    if weights is None:
        weights = np.tile(weight_decay ** np.abs(ms), (len(include), 1))
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(include), ms.size):
        raise ParameterError(f"weights must have shape {(len(include), ms.size)}")
    if np.any(weights < 0) or not np.any(weights > 0):
        raise ParameterError("weights must be non-negative and not all zero")
    f = grid.freqs
    mix = np.zeros(grid.n)
    centers = {}
    for j, name in enumerate(include):
        s = 2.0 * grid.df if sigma is None else (sigma[name] if isinstance(sigma, dict) else sigma)
        if not s > 0:
            raise ParameterError(f"band width for {name} must be positive")
        c = getattr(orders, name) + ms * orders.f_r
        centers[name] = c
        mix += (weights[j][:, None] * np.exp(-((f[None, :] - c[:, None]) ** 2) / (2.0 * s * s))).sum(axis=0)
    total = mix.sum()
    if not total > 0 or not np.isfinite(total):
        raise EmptyMaskError("all mixture mass falls outside the frequency grid")
    return BandMask(grid=grid, probs=mix / total, centers=centers)


def _check_assoc(p):
    p = np.asarray(p, dtype=float)
    if p.ndim not in (1, 2) or p.shape[-1] < 1:
        raise InputError("association must be a 1-D or 2-D array")
    if np.any(p < 0) or not np.allclose(p.sum(axis=-1), 1.0, atol=1e-9):
        raise InputError("association weights must be non-negative and sum to 1")
    return p


def spectral_power_direct(p, grid, i0=None):
    """Unnormalized weighted-DFT power by explicit summation, O(W * N_f)."""
    p = _check_assoc(p)
    w = p.shape[-1]
    i0 = (w - 1) / 2.0 if i0 is None else i0
    phase = np.exp(-2j * np.pi * np.outer(grid.freqs, np.arange(w) - i0) / grid.fs)
    return np.abs(p @ phase.T) ** 2


def _bins_per_grid_step(grid):
    m = grid.fs / grid.df
    mr = round(m)
    return int(mr) if mr >= 2 and abs(m - mr) <= 1e-9 * m else None


def spectral_power_fft(p, grid):
    """Same quantity as :func:`spectral_power_direct` via FFT (or chirp-z)."""
    p = _check_assoc(p)
    w = p.shape[-1]
    m = _bins_per_grid_step(grid)
    if m is not None:
        nfft = m * -(-w // m)
        step = nfft // m
        spec = np.fft.rfft(p, n=nfft, axis=-1)[..., : (grid.n - 1) * step + 1 : step]
    else:
        spec = czt(p, m=grid.n, w=np.exp(-2j * np.pi * grid.df / grid.fs), a=1.0, axis=-1)
    # the centering shift i0 is a pure phase and drops out of |.|^2
    return spec.real**2 + spec.imag**2


def spectral_attention(p, grid, i0=None, method="fft"):
    """Normalized attention spectrum of association weights ``p`` (over time lags)."""
    if method == "fft":
        power = spectral_power_fft(p, grid)
    elif method == "direct":
        power = spectral_power_direct(p, grid, i0)
    else:
        raise ParameterError(f"unknown method {method!r}")
    probs = power / power.sum(axis=-1, keepdims=True)
    return SpectralAttention(grid=grid, probs=probs)


def smooth_uniform(probs, zeta):
    if not 0 < zeta < 0.5:
        raise ParameterError(f"smoothing must lie in (0, 0.5), got {zeta}")
    probs = np.asarray(probs, dtype=float)
    return (1.0 - zeta) * probs + zeta / probs.shape[-1]


def spectral_gradient(a):
    """Forward differences on the grid; the last bin repeats the backward difference."""
    g = np.empty_like(a)
    g[..., :-1] = a[..., 1:] - a[..., :-1]
    g[..., -1] = a[..., -1] - a[..., -2]
    return g


def _as_probs(x):
    return np.asarray(x.probs if hasattr(x, "probs") else x, dtype=float)


def _check_same_grid(a, m):
    ga, gm = getattr(a, "grid", None), getattr(m, "grid", None)
    if ga is not None and gm is not None and ga != gm:
        raise InputError("attention spectrum and mask live on different grids")
    pa, pm = _as_probs(a), _as_probs(m)
    if pa.shape[-1] != pm.shape[-1]:
        raise InputError("attention spectrum and mask have different lengths")
    return pa, pm


def align_loss(a, m, zeta=DEFAULT_SMOOTHING, lambda_align=1.0, lambda_lap=0.0):
    """``lambda_align * KL(M_bar || A_bar) + lambda_lap * sum |grad_f A_bar|``."""
    pa, pm = _check_same_grid(a, m)
    abar = smooth_uniform(pa, zeta)
    mbar = smooth_uniform(pm, zeta)
    kl = np.sum(mbar * np.log(mbar / abar), axis=-1)
    rough = np.sum(np.abs(spectral_gradient(abar)), axis=-1)
    return lambda_align * kl + lambda_lap * rough


def align_loss_grad(a, m, zeta=DEFAULT_SMOOTHING, lambda_align=1.0, lambda_lap=0.0):
    """Gradient of :func:`align_loss` with respect to the raw attention spectrum."""
    pa, pm = _check_same_grid(a, m)
    abar = smooth_uniform(pa, zeta)
    mbar = smooth_uniform(pm, zeta)
    grad = -lambda_align * (1.0 - zeta) * mbar / abar
    sg = np.sign(spectral_gradient(abar))
    # d/dabar of sum_k |g_k|, with g_k = abar[k+1]-abar[k] (k<n-1), g_{n-1} = abar[n-1]-abar[n-2]
    d = np.zeros_like(abar)
    d[..., 1:] += sg[..., :-1]
    d[..., :-1] -= sg[..., :-1]
    d[..., -1] += sg[..., -1]
    d[..., -2] -= sg[..., -1]
    return grad + lambda_lap * (1.0 - zeta) * d


def band_alignment_score(a, m):
    """Overlap coefficient ``sum_k min(A, M)`` in [0, 1]."""
    pa, pm = _check_same_grid(a, m)
    return np.minimum(pa, pm).sum(axis=-1)


def msd_residual(y, force, params, fs, lambda_msd=1.0):
    """Backward-difference residual of ``m y'' + c y' + k y = f``.

    Returns ``(r, loss)`` with ``r`` defined for samples ``n >= 2``.
    """
    y = np.asarray(y, dtype=float)
    force = np.asarray(force, dtype=float)
    if y.shape != force.shape or y.ndim != 1:
        raise ParameterError("displacement and forcing must be aligned 1-D series")
    if y.size < 3:
        raise InsufficientDataError("MSD residual needs at least 3 samples")
    if not fs > 0:
        raise ParameterError("sample rate must be positive")
    c = np.broadcast_to(np.asarray(params.c, dtype=float), y.shape)[2:]
    k = np.broadcast_to(np.asarray(params.k, dtype=float), y.shape)[2:]
    acc = fs * fs * (y[2:] - 2.0 * y[1:-1] + y[:-2])
    vel = fs * (y[2:] - y[1:-1])
    r = params.m * acc + c * vel + k * y[2:] - force[2:]
    return r, float(lambda_msd * np.sum(r * r))


def msd_loss_grad(y, force, params, fs, lambda_msd=1.0):
    """Gradient of the MSD loss with respect to the displacement series."""
    r, _ = msd_residual(y, force, params, fs, lambda_msd)
    n = np.asarray(y).size
    c = np.broadcast_to(np.asarray(params.c, dtype=float), (n,))[2:]
    k = np.broadcast_to(np.asarray(params.k, dtype=float), (n,))[2:]
    m = params.m
    g = np.zeros(n)
    w = 2.0 * lambda_msd * r
    g[2:] += w * (m * fs * fs + c * fs + k)
    g[1:-1] += w * (-2.0 * m * fs * fs - c * fs)
    g[:-2] += w * (m * fs * fs)
    return g


def envelope_association(x, axis=-1):
    """Squared-envelope weights over time, normalized to a distribution.

    A physics-side proxy for an attention association: periodic impacts
    produce envelope energy that recurs at the defect period.
    """
    from scipy.signal import hilbert

    x = np.asarray(x, dtype=float)
    x = x - x.mean(axis=axis, keepdims=True)
    env = np.abs(hilbert(x, axis=axis)) ** 2
    return env / env.sum(axis=axis, keepdims=True)
