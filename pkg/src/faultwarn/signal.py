"""Sampled series, sliding windows, normalization, noise, and a synthetic bearing rig."""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import (
    AliasingError,
    DegenerateChannelError,
    EmptyInputError,
    ParameterError,
    ShapeError,
    UndefinedPowerError,
)
from .physics import BearingGeometry, fault_orders

DEFAULT_FS = 20_000.0
DEFAULT_L = 2048
DEFAULT_HOP = 256
FAULT_TYPES = ("none", "BPFI", "BPFO", "BSF", "FTF")


@dataclass(frozen=True)
class SampledSeries:
    data: np.ndarray  # (channels, samples)
    sample_rate: float
    start_time: float = 0.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2:
            raise ShapeError("series data must be (channels, samples)")
        if not self.sample_rate > 0:
            raise ParameterError("sample rate must be positive")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def channels(self):
        return self.data.shape[0]

    def __len__(self):
        return self.data.shape[1]

    def time_of(self, n):
        return self.start_time + np.asarray(n) / self.sample_rate

    @property
    def duration(self):
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class Window:
    parent: SampledSeries
    offset: int
    length: int
    hop: int
    index: int = 0

    @property
    def data(self):
        return self.parent.data[:, self.offset : self.offset + self.length]

    @property
    def start_time(self):
        return float(self.parent.time_of(self.offset))

    @property
    def end_time(self):
        """Time just after the window's last sample; the window's decision time."""
        return float(self.parent.time_of(self.offset + self.length))

    @property
    def sample_rate(self):
        return self.parent.sample_rate


def n_windows(n, length, hop):
    if hop < 1:
        raise ParameterError(f"hop must be >= 1, got {hop}")
    if length < 1:
        raise ParameterError(f"window length must be >= 1, got {length}")
    if length > n:
        raise EmptyInputError(f"window length {length} exceeds series length {n}")
    return (n - length) // hop + 1


def make_windows(series, length=DEFAULT_L, hop=DEFAULT_HOP):
    """Windows at offsets 0, h, 2h, ...; a trailing partial window is dropped."""
    count = n_windows(len(series), length, hop)
    return [Window(series, k * hop, length, hop, k) for k in range(count)]


def window_end_times(series, length, hop):
    count = n_windows(len(series), length, hop)
    return series.time_of(np.arange(count) * hop + length)


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if np.any(~(np.asarray(self.std) > 0)):
            raise DegenerateChannelError("normalization std must be positive per channel")

    def to_json(self):
        return {"mean": np.asarray(self.mean).tolist(), "std": np.asarray(self.std).tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(np.asarray(obj["mean"], dtype=float), np.asarray(obj["std"], dtype=float))


def _channel_blocks(items):
    for it in items:
        if isinstance(it, (Window, SampledSeries)):
            yield it.data
        else:
            arr = np.asarray(it, dtype=float)
            yield arr[None, :] if arr.ndim == 1 else arr


def fit_norm(train):
    """Per-channel mean/std over training windows or series (population std)."""
    if isinstance(train, (Window, SampledSeries, np.ndarray)):
        train = [train]
    blocks = list(_channel_blocks(train))
    if not blocks:
        raise EmptyInputError("no training data for normalization")
    data = np.concatenate(blocks, axis=1)
    mean = data.mean(axis=1)
    std = data.std(axis=1)
    bad = np.flatnonzero(~(std > 1e-12 * np.maximum(1.0, np.abs(mean))))
    if bad.size:
        raise DegenerateChannelError(f"zero-variance channel(s) {bad.tolist()} in training data")
    return NormStats(mean, std)


def apply_norm(stats, x):
    """Standardize a window, series or raw ``(C, N)`` array with fixed stats."""
    mean = np.asarray(stats.mean)[:, None]
    std = np.asarray(stats.std)[:, None]
    if isinstance(x, Window):
        s = SampledSeries((x.data - mean) / std, x.sample_rate, x.start_time)
        return Window(s, 0, x.length, x.hop, x.index)
    if isinstance(x, SampledSeries):
        return SampledSeries((x.data - mean) / std, x.sample_rate, x.start_time)
    arr = np.asarray(x, dtype=float)
    return (arr - mean) / std


def noise_variance(x, snr_db):
    """``||x||_F^2 / (C L) * 10^(-SNR/10)``."""
    power = float(np.mean(np.square(x)))
    if power <= 0:
        raise UndefinedPowerError("window has zero power; SNR is undefined")
    return power * 10.0 ** (-snr_db / 10.0)


def _noise_rng(seed, index, channel):
    # counter-style keying: the draw for (seed, window, channel) never depends on call order
    return np.random.default_rng([int(seed), int(index), int(channel)])


def inject_noise(window, snr_db, seed, index=None):
    """Add white Gaussian noise at ``snr_db`` relative to the window's own power.

    Accepts a :class:`Window` (returns a new Window) or a ``(C, L)`` array.
    ``snr_db=None`` means no noise.
    """
    is_window = isinstance(window, Window)
    x = window.data if is_window else np.asarray(window, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if snr_db is None or math.isinf(snr_db):
        noisy = x.copy()
    else:
        sigma = math.sqrt(noise_variance(x, snr_db))
        idx = (window.index if is_window else 0) if index is None else index
        noisy = np.empty_like(x)
        for c in range(x.shape[0]):
            noisy[c] = x[c] + sigma * _noise_rng(seed, idx, c).standard_normal(x.shape[1])
    if is_window:
        s = SampledSeries(noisy, window.sample_rate, window.start_time)
        return Window(s, 0, window.length, window.hop, window.index)
    return noisy


def inject_noise_stream(data, length, hop, snr_db, seed):
    """Noise for hop-by-hop replay.

    Each sample is consumed once, by the first window that contains it; its
    noise level is set by that window's power and its draw is keyed by that
    window's index, so streaming and whole-sequence replays see identical
    inputs.  Samples beyond the last full window are left untouched.
    """
    data = np.asarray(data, dtype=float)
    if snr_db is None or math.isinf(snr_db):
        return data.copy()
    out = data.copy()
    count = n_windows(data.shape[1], length, hop)
    for k in range(count):
        win = data[:, k * hop : k * hop + length]
        a = 0 if k == 0 else k * hop + length - hop
        b = k * hop + length
        sigma = math.sqrt(noise_variance(win, snr_db))
        for c in range(data.shape[0]):
            out[c, a:b] += sigma * _noise_rng(seed, k, c).standard_normal(b - a)
    return out


# --------------------------------------------------------------------------
# Synthetic rig
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    geometry: BearingGeometry
    fault: str = "none"
    onset: float = 0.0
    duration: float = 10.0
    impulse_amplitude: float = 3.0
    resonance_hz: float = 3000.0
    damping_ratio: float = 0.05
    noise_level: float = 1.0
    seed: int = 0
    shaft_hz: float = 10.0
    sample_rate: float = DEFAULT_FS
    channels: int = 1
    shaft_tone: float = 0.2
    ramp_s: float = 0.0  # linear growth of impact amplitude after onset
    channel_gains: tuple = field(default=())

    def __post_init__(self):
        if self.fault not in FAULT_TYPES:
            raise ParameterError(f"fault must be one of {FAULT_TYPES}")
        if not 0 <= self.onset <= self.duration:
            raise ParameterError("onset must lie in [0, duration]")
        if not 0 < self.damping_ratio < 1:
            raise ParameterError("damping ratio must lie in (0, 1)")
        if self.channels < 1 or self.duration <= 0 or self.sample_rate <= 0:
            raise ParameterError("need channels >= 1, duration > 0, sample rate > 0")

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        geom = obj.pop("geometry")
        if not isinstance(geom, BearingGeometry):
            geom = BearingGeometry.from_json(geom)
        if "channel_gains" in obj:
            obj["channel_gains"] = tuple(obj["channel_gains"])
        return cls(geometry=geom, **obj)

    def to_json(self):
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "geometry"}
        out["channel_gains"] = list(self.channel_gains)
        out["geometry"] = self.geometry.to_json()
        return out

    @property
    def fault_frequency(self):
        if self.fault == "none":
            return None
        return getattr(fault_orders(self.geometry, self.shaft_hz), self.fault)


def resonance_filter(resonance_hz, damping_ratio, fs):
    """Impulse-invariant second-order section for ``exp(-z w t) sin(w_d t)``."""
    wn = 2.0 * math.pi * resonance_hz
    wd = wn * math.sqrt(1.0 - damping_ratio**2)
    r = math.exp(-damping_ratio * wn / fs)
    th = wd / fs
    return np.array([0.0, r * math.sin(th)]), np.array([1.0, -2.0 * r * math.cos(th), r * r])


def synth_bearing(spec):
    """Generate a run; returns ``(series, t_phys)`` with ``t_phys=None`` when healthy."""
    fs = spec.sample_rate
    n = int(round(spec.duration * fs))
    t = np.arange(n) / fs
    rng = np.random.default_rng(spec.seed)
    gains = np.asarray(spec.channel_gains or [1.0 / (1 + 0.5 * c) for c in range(spec.channels)], dtype=float)
    if gains.size != spec.channels:
        raise ParameterError("channel_gains must have one entry per channel")

    phase = rng.uniform(0, 2 * math.pi, size=spec.channels)
    data = spec.noise_level * rng.standard_normal((spec.channels, n))
    data += spec.shaft_tone * np.sin(2 * math.pi * spec.shaft_hz * t[None, :] + phase[:, None])

    if spec.fault == "none":
        return SampledSeries(data, fs, 0.0), None

    f_fault = spec.fault_frequency
    if f_fault >= fs / 2:
        raise AliasingError(f"fault frequency {f_fault:.3f} Hz is at or above Nyquist {fs / 2} Hz")
    if spec.resonance_hz >= fs / 2:
        raise AliasingError(f"resonance {spec.resonance_hz} Hz is at or above Nyquist {fs / 2} Hz")

    times = np.arange(spec.onset, spec.duration, 1.0 / f_fault)
    idx = np.round(times * fs).astype(np.int64)
    keep = idx < n
    idx, times = idx[keep], times[keep]
    amp = np.full(times.shape, spec.impulse_amplitude)
    if spec.ramp_s > 0:
        amp *= np.clip((times - spec.onset) / spec.ramp_s, 0.05, 1.0)
    if spec.fault == "BPFI":
        # inner-race defect rotates with the shaft: load-zone amplitude modulation
        amp *= 0.6 + 0.4 * np.cos(2 * math.pi * spec.shaft_hz * times)
    train = np.zeros(n)
    np.add.at(train, idx, amp)
    b, a = resonance_filter(spec.resonance_hz, spec.damping_ratio, fs)
    b = b / np.max(np.abs(lfilter(b, a, np.r_[1.0, np.zeros(int(fs / spec.resonance_hz) + 2)])))
    response = lfilter(b, a, train)
    data += gains[:, None] * response[None, :]
    return SampledSeries(data, fs, 0.0), float(spec.onset)


# --------------------------------------------------------------------------
# I/O
# --------------------------------------------------------------------------


def _sidecar(path):
    return path.with_suffix(".json")


def write_series(series, path):
    """Write raw little-endian float32 frames plus a JSON sidecar, or a CSV."""
    path = Path(path)
    if path.suffix == ".csv":
        t = series.time_of(np.arange(len(series)))
        header = "time_s," + ",".join(f"ch{c}" for c in range(series.channels))
        np.savetxt(path, np.column_stack([t, series.data.T]), delimiter=",", header=header, comments="", fmt="%.9g")
        return path
    series.data.T.astype("<f4").tofile(path)
    meta = {"channels": series.channels, "sample_rate_hz": series.sample_rate, "start_time_s": series.start_time}
    _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path


def read_series(path):
    path = Path(path)
    if path.suffix == ".csv":
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if arr.shape[0] < 2 or arr.shape[1] < 2:
            raise EmptyInputError(f"{path}: need a timestamp column, >= 1 channel and >= 2 rows")
        t = arr[:, 0]
        fs = 1.0 / float(np.median(np.diff(t)))
        return SampledSeries(arr[:, 1:].T, fs, float(t[0]))
    meta = json.loads(_sidecar(path).read_text())
    c = int(meta["channels"])
    raw = np.fromfile(path, dtype="<f4")
    if raw.size % c:
        raise ShapeError(f"{path}: {raw.size} floats is not a multiple of {c} channels")
    return SampledSeries(raw.reshape(-1, c).T.astype(np.float64), float(meta["sample_rate_hz"]), float(meta.get("start_time_s", 0.0)))
