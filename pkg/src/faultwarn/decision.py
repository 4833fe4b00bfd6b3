"""Peaks-over-threshold calibration and the alarm automaton.

Healthy scores above a high level ``u`` are modelled as a generalized Pareto
tail with Poisson arrivals.  Inverting the tail survival function gives the
on-threshold that produces a requested false-alarm intensity; a dual-threshold
hysteresis with a minimum hold time and a refractory merge turns the score
stream into alarm episodes.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from ._accel import njit
from .errors import (
    BinCalibrationError,
    FitError,
    InsufficientTailError,
    ParameterError,
    StreamOrderError,
    ValidityDomainError,
)

MIN_EXCEEDANCES = 30
XI_BOUNDS = (-0.5, 1.0)
XI_LIMIT_EPS = 1e-6

DEFAULT_Q = 0.98
DEFAULT_DELTA_FRACTION = 0.25
DEFAULT_T_MIN_S = 5.0
DEFAULT_DT_MERGE_S = 2.0

LAMBDA_MODES = ("intervals", "runs", "raw")


@dataclass(frozen=True)
class GpdTail:
    u: float
    xi: float
    beta: float
    lambda_u: float  # exceedance episodes per hour above u
    n_exceed: int
    calib_hours: float
    lambda_mode: str = "intervals"

    def __post_init__(self):
        if not self.beta > 0:
            raise ParameterError(f"GPD scale must be positive, got {self.beta}")
        if not self.lambda_u > 0:
            raise ParameterError(f"exceedance rate must be positive, got {self.lambda_u}")

    @property
    def support_bound(self):
        """Upper end point of the fitted tail; ``inf`` unless ``xi < 0``."""
        if self.xi < 0:
            return self.u - self.beta / self.xi
        return math.inf

    def intensity(self, tau):
        """Exceedance intensity (per hour) above ``tau >= u``."""
        return gpd_intensity(tau, self.u, self.xi, self.beta, self.lambda_u)


@dataclass(frozen=True)
class HysteresisPolicy:
    tau_on: float
    delta: float
    t_min: float = DEFAULT_T_MIN_S
    dt_merge: float = DEFAULT_DT_MERGE_S

    def __post_init__(self):
        if not self.delta > 0:
            raise ParameterError("delta must be > 0 so that tau_off < tau_on")
        if not self.t_min > 0:
            raise ParameterError("t_min must be > 0")
        if self.dt_merge < 0:
            raise ParameterError("dt_merge must be >= 0")

    @property
    def tau_off(self):
        return self.tau_on - self.delta


@dataclass
class HysteresisState:
    alarm: bool = False
    t_on: float = -math.inf
    last_t: float = -math.inf


@dataclass(frozen=True)
class AlarmEpisode:
    start: float
    end: float
    peak_score: float
    peak_time: float

    def to_json(self, run=None):
        out = {} if run is None else {"run": run}
        out.update(start_s=self.start, end_s=self.end, peak_score=self.peak_score, peak_s=self.peak_time)
        return out


# --------------------------------------------------------------------------
# Tail calibration
# --------------------------------------------------------------------------


def select_u(scores, q=DEFAULT_Q, min_exceed=MIN_EXCEEDANCES):
    """Return ``(u, n_exceed)`` with ``u`` the linear-interpolated ``q``-quantile."""
    if not 0.90 <= q <= 0.999:
        raise ParameterError(f"quantile q must lie in [0.90, 0.999], got {q}")
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise InsufficientTailError("no calibration scores")
    u = float(np.quantile(scores, q))
    n_exceed = int(np.count_nonzero(scores > u))
    if n_exceed < min_exceed:
        raise InsufficientTailError(
            f"only {n_exceed} exceedances above u={u:.6g} (need {min_exceed}); "
            "lower q or extend calibration"
        )
    return u, n_exceed


def gpd_pwm(excesses):
    """Probability-weighted-moment estimate ``(xi, beta)``."""
    y = np.sort(np.asarray(excesses, dtype=float))
    n = y.size
    a0 = y.mean()
    p = (np.arange(1, n + 1) - 0.35) / n
    a1 = np.mean(y * (1.0 - p))
    denom = a0 - 2.0 * a1
    if denom <= 0:
        return XI_BOUNDS[1], a0
    xi = 2.0 - a0 / denom
    beta = 2.0 * a0 * a1 / denom
    return xi, beta


def _profile(theta, y, ybar):
    """Profile log-likelihood per observation and its implied ``xi``."""
    if abs(theta) * ybar < 1e-12:
        return -math.log(ybar) - 1.0, theta * ybar
    xi = float(np.mean(np.log1p(theta * y)))
    ratio = xi / theta
    if ratio <= 0:
        return -math.inf, xi
    return -math.log(ratio) - xi - 1.0, xi


def fit_gpd(excesses, min_n=MIN_EXCEEDANCES, n_grid=64):
    """Fit ``GPD(xi, beta)`` to positive excesses.

    PWM gives the starting point; the estimate is refined by maximizing the
    profile likelihood in ``theta = xi / beta`` with ``xi`` restricted to
    ``XI_BOUNDS``.
    """
    y = np.asarray(excesses, dtype=float).ravel()
    if y.size < min_n:
        raise InsufficientTailError(f"need at least {min_n} excesses, got {y.size}")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise FitError("excesses must be finite and strictly positive")
    ybar = float(y.mean())
    ymax = float(y.max())
    if ymax - float(y.min()) <= 1e-12 * ymax:
        raise FitError("degenerate excesses (all equal)")

    xi_of = lambda th: float(np.mean(np.log1p(th * y)))  # noqa: E731
    lo_edge = -1.0 / ymax
    # xi(theta) is increasing, so the xi box maps to a theta interval
    th_lo = lo_edge * (1.0 - 1e-12)
    if xi_of(th_lo) < XI_BOUNDS[0]:
        th_lo = brentq(lambda th: xi_of(th) - XI_BOUNDS[0], th_lo, 0.0, xtol=1e-14 / ymax)
    hi = 1.0 / ybar
    while xi_of(hi) < XI_BOUNDS[1]:
        hi *= 4.0
    th_hi = brentq(lambda th: xi_of(th) - XI_BOUNDS[1], 0.0, hi, xtol=1e-14 / ybar)

    xi0, beta0 = gpd_pwm(y)
    grid = np.concatenate(
        [
            th_lo + (0.0 - th_lo) * (1.0 - np.linspace(0, 1, n_grid // 2, endpoint=False) ** 2),
            th_hi * np.linspace(0, 1, n_grid // 2) ** 2,
        ]
    )
    th_pwm = xi0 / beta0 if beta0 > 0 else 0.0
    if th_lo < th_pwm < th_hi:
        grid = np.append(grid, th_pwm)
    grid = np.unique(grid)
    vals = np.array([_profile(th, y, ybar)[0] for th in grid])
    k = int(np.nanargmax(vals))
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, grid.size - 1)]
    best_th, best_val = grid[k], vals[k]
    if b > a:
        res = minimize_scalar(
            lambda th: -_profile(th, y, ybar)[0],
            bounds=(a, b),
            method="bounded",
            options={"xatol": 1e-10 * max(abs(a), abs(b), 1.0 / ybar)},
        )
        if res.success and -res.fun >= best_val:
            best_th = float(res.x)
    _, xi = _profile(best_th, y, ybar)
    if abs(best_th) * ybar < 1e-12:
        beta = ybar
    else:
        beta = xi / best_th
    xi = float(np.clip(xi, *XI_BOUNDS))
    if not beta > 0 or not np.isfinite(beta):
        raise FitError(f"GPD fit produced invalid scale {beta}")
    return xi, float(beta)


def extremal_index(exceed_idx):
    """Ferro-Segers intervals estimator of the extremal index from exceedance positions."""
    idx = np.asarray(exceed_idx)
    if idx.size < 2:
        return 1.0
    gaps = np.diff(idx).astype(float)
    if gaps.max() <= 2:
        theta = 2.0 * gaps.sum() ** 2 / ((gaps.size) * np.sum(gaps**2))
    else:
        num = 2.0 * np.sum(gaps - 1.0) ** 2
        den = gaps.size * np.sum((gaps - 1.0) * (gaps - 2.0))
        theta = num / den if den > 0 else 1.0
    return float(min(1.0, max(theta, 1e-6)))


def cluster_count(times, dt_merge):
    """Number of runs of event times whose internal gaps are below ``dt_merge``."""
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return 0
    return int(1 + np.count_nonzero(np.diff(times) >= dt_merge))


def exceedance_rate(scores, times, u, calib_hours, mode="intervals", dt_merge=DEFAULT_DT_MERGE_S):
    """Exceedance intensity above ``u`` in events per hour.

    ``raw`` counts every exceedance; ``runs`` counts clusters separated by at
    least ``dt_merge``; ``intervals`` scales the raw count by the estimated
    extremal index, which is 1 for serially independent scores.
    """
    if calib_hours <= 0:
        raise ParameterError("calibration duration must be positive")
    scores = np.asarray(scores, dtype=float)
    mask = scores > u
    n = int(mask.sum())
    if mode == "raw":
        count = float(n)
    elif mode == "runs":
        count = float(cluster_count(np.asarray(times, dtype=float)[mask], dt_merge))
    elif mode == "intervals":
        count = n * extremal_index(np.flatnonzero(mask))
    else:
        raise ParameterError(f"unknown exceedance-rate mode {mode!r}")
    return count / calib_hours


def calib_duration_hours(times):
    times = np.asarray(times, dtype=float)
    if times.size < 2:
        raise InsufficientTailError("need at least two timestamps")
    dt = float(np.median(np.diff(times)))
    return (times[-1] - times[0] + dt) / 3600.0


def fit_tail(scores, times, q=DEFAULT_Q, calib_hours=None, mode="intervals", dt_merge=DEFAULT_DT_MERGE_S):
    """Full POT calibration on healthy scores: level, GPD fit, exceedance rate."""
    scores = np.asarray(scores, dtype=float)
    times = np.asarray(times, dtype=float)
    if scores.shape != times.shape:
        raise ParameterError("scores and times must align")
    u, n_exceed = select_u(scores, q)
    xi, beta = fit_gpd(scores[scores > u] - u)
    if calib_hours is None:
        calib_hours = calib_duration_hours(times)
    lam = exceedance_rate(scores, times, u, calib_hours, mode=mode, dt_merge=dt_merge)
    return GpdTail(u=u, xi=xi, beta=beta, lambda_u=lam, n_exceed=n_exceed, calib_hours=float(calib_hours), lambda_mode=mode)


# --------------------------------------------------------------------------
# Closed-form threshold
# --------------------------------------------------------------------------


def gpd_intensity(tau, u, xi, beta, lambda_u):
    """``lambda_u * (1 + xi (tau-u)/beta)_+^(-1/xi)``, log-limit near ``xi = 0``."""
    z = (np.asarray(tau, dtype=float) - u) / beta
    if abs(xi) < XI_LIMIT_EPS:
        return lambda_u * np.exp(-z)
    arg = 1.0 + xi * z
    with np.errstate(divide="ignore", invalid="ignore"):
        out = lambda_u * np.exp(-np.log1p(xi * z) / xi)
    return np.where(arg > 0, out, 0.0)


def on_threshold(tail, lambda_fa):
    """On-threshold whose tail intensity equals ``lambda_fa`` (events/hour)."""
    lam_u = tail.lambda_u
    if not 0 < lambda_fa <= lam_u:
        raise ValidityDomainError(
            f"target intensity {lambda_fa} outside (0, lambda_u={lam_u:.6g}]; "
            "lower q or calibrate on more data"
        )
    log_ratio = math.log(lam_u / lambda_fa)
    xi, beta = tail.xi, tail.beta
    if abs(xi) < XI_LIMIT_EPS:
        tau = tail.u + beta * log_ratio
    else:
        tau = tail.u + beta * math.expm1(xi * log_ratio) / xi
    if not 1.0 + xi * (tau - tail.u) / beta > 0 or tau > tail.support_bound:
        raise ValidityDomainError("on-threshold falls beyond the tail support bound")
    return float(tau)


def default_delta(tail, tau_on, fraction=DEFAULT_DELTA_FRACTION):
    delta = fraction * (tau_on - tail.u)
    if delta <= 0:
        # tau_on == u happens when lambda_fa == lambda_u; keep a positive gap
        delta = fraction * tail.beta
    return float(delta)


# --------------------------------------------------------------------------
# Hysteresis automaton
# --------------------------------------------------------------------------


def hysteresis_step(state, policy, s, t):
    """Advance the automaton by one score; returns ``(new_state, alarm_bit)``."""
    if not t > state.last_t:
        raise StreamOrderError(f"timestamp {t} does not advance past {state.last_t}")
    alarm, t_on = state.alarm, state.t_on
    if s >= policy.tau_on:
        if not alarm:
            t_on = t
        alarm = True
    elif s <= policy.tau_off and t - t_on >= policy.t_min:
        alarm = False
    return HysteresisState(alarm=alarm, t_on=t_on, last_t=t), int(alarm)


@njit
def _hysteresis_scan(scores, times, tau_on, tau_off, t_min, alarm0, t_on0, out):
    alarm = alarm0
    t_on = t_on0
    for i in range(scores.shape[0]):
        s = scores[i]
        t = times[i]
        if s >= tau_on[i]:
            if not alarm:
                t_on = t
            alarm = True
        elif s <= tau_off[i] and t - t_on >= t_min:
            alarm = False
        out[i] = 1 if alarm else 0
    return alarm, t_on


def run_hysteresis(scores, times, policy, state=None, tau_on=None):
    """Vectorized driver for :func:`hysteresis_step` over a score series.

    ``tau_on`` may be a per-sample array (speed-dependent thresholds); the off
    threshold follows as ``tau_on - policy.delta``.
    """
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    times = np.ascontiguousarray(times, dtype=np.float64)
    if scores.shape != times.shape or scores.ndim != 1:
        raise ParameterError("scores and times must be aligned 1-D arrays")
    state = state or HysteresisState()
    if times.size:
        if not times[0] > state.last_t or np.any(np.diff(times) <= 0):
            raise StreamOrderError("timestamps must be strictly increasing")
    if tau_on is None:
        on = np.full(scores.shape, policy.tau_on)
    else:
        on = np.ascontiguousarray(np.broadcast_to(tau_on, scores.shape), dtype=np.float64)
    off = on - policy.delta
    out = np.zeros(scores.shape, dtype=np.int8)
    alarm, t_on = _hysteresis_scan(scores, times, on, off, float(policy.t_min), bool(state.alarm), float(state.t_on), out)
    last = float(times[-1]) if times.size else state.last_t
    return out, HysteresisState(alarm=bool(alarm), t_on=float(t_on), last_t=last)


# --------------------------------------------------------------------------
# Episodes
# --------------------------------------------------------------------------


def extract_episodes(alarm, times, scores=None):
    """Maximal runs of alarm=1.

    An episode spans from its first alarmed timestamp to the timestamp at which
    the alarm is released (or the last timestamp if the stream ends alarmed).
    """
    alarm = np.asarray(alarm).astype(bool)
    times = np.asarray(times, dtype=float)
    if alarm.shape != times.shape:
        raise ParameterError("alarm bits and timestamps must align")
    if scores is None:
        scores = alarm.astype(float)
    scores = np.asarray(scores, dtype=float)
    edges = np.diff(np.concatenate(([0], alarm.astype(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)  # index of first 0 after the run
    episodes = []
    for a, b in zip(starts, stops):
        end = times[b] if b < times.size else times[-1]
        k = a + int(np.argmax(scores[a:b]))
        episodes.append(AlarmEpisode(float(times[a]), float(end), float(scores[k]), float(times[k])))
    return episodes


def merge_episodes(episodes, dt_merge=DEFAULT_DT_MERGE_S):
    """Fuse consecutive episodes whose gap is shorter than ``dt_merge``."""
    merged = []
    for ep in sorted(episodes, key=lambda e: e.start):
        if merged and ep.start - merged[-1].end < dt_merge:
            prev = merged[-1]
            if ep.peak_score > prev.peak_score:
                peak, pt = ep.peak_score, ep.peak_time
            else:
                peak, pt = prev.peak_score, prev.peak_time
            merged[-1] = AlarmEpisode(prev.start, max(prev.end, ep.end), peak, pt)
        else:
            merged.append(ep)
    return merged


def episodes_from_scores(scores, times, policy, state=None, tau_on=None):
    """Threshold, hysteresis and merge in one call."""
    alarm, state = run_hysteresis(scores, times, policy, state=state, tau_on=tau_on)
    eps = merge_episodes(extract_episodes(alarm, times, scores), policy.dt_merge)
    return eps, alarm, state


# --------------------------------------------------------------------------
# Speed-dependent thresholds
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RpmThresholdMap:
    edges: tuple
    tails: tuple
    tau_on: tuple
    centers: tuple = field(default=())

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0) or edges[0] <= 0:
            raise ParameterError("rpm bin edges must be positive and strictly increasing")
        if not self.centers:
            object.__setattr__(self, "centers", tuple(np.sqrt(edges[:-1] * edges[1:]).tolist()))

    def lookup(self, rpm):
        """Threshold at speed ``rpm``: linear in log-speed, clamped to edge bins."""
        x = np.log(np.asarray(rpm, dtype=float))
        out = np.interp(x, np.log(self.centers), self.tau_on)
        return float(out) if out.ndim == 0 else out

    def to_json(self):
        return [
            {
                "rpm_lo": float(lo),
                "rpm_hi": float(hi),
                "center_rpm": float(c),
                "tau_on": float(t),
                "tail": asdict(tail),
            }
            for lo, hi, c, t, tail in zip(self.edges[:-1], self.edges[1:], self.centers, self.tau_on, self.tails)
        ]

    @classmethod
    def from_json(cls, bins):
        edges = [b["rpm_lo"] for b in bins] + [bins[-1]["rpm_hi"]]
        return cls(
            edges=tuple(edges),
            tails=tuple(GpdTail(**b["tail"]) for b in bins),
            tau_on=tuple(b["tau_on"] for b in bins),
            centers=tuple(b["center_rpm"] for b in bins),
        )


def build_rpm_map(scores, rpm, times, edges, lambda_fa, q=DEFAULT_Q, mode="intervals", dt_merge=DEFAULT_DT_MERGE_S):
    """Calibrate one tail per rpm bin and tabulate its on-threshold."""
    scores = np.asarray(scores, dtype=float)
    rpm = np.asarray(rpm, dtype=float)
    times = np.asarray(times, dtype=float)
    edges = np.asarray(edges, dtype=float)
    dt = float(np.median(np.diff(times)))
    tails, taus, bad = [], [], []
    for b in range(edges.size - 1):
        last = b == edges.size - 2
        sel = (rpm >= edges[b]) & ((rpm <= edges[b + 1]) if last else (rpm < edges[b + 1]))
        try:
            hours = sel.sum() * dt / 3600.0
            tail = fit_tail(scores[sel], times[sel], q=q, calib_hours=hours, mode=mode, dt_merge=dt_merge)
            tau = on_threshold(tail, lambda_fa)
        except (InsufficientTailError, FitError, ValidityDomainError, ParameterError) as exc:
            bad.append((b, str(exc)))
            continue
        tails.append(tail)
        taus.append(tau)
    if bad:
        listing = ", ".join(f"bin {b} [{edges[b]:g}, {edges[b + 1]:g}) rpm: {msg}" for b, msg in bad)
        raise BinCalibrationError(f"rpm bins failed calibration: {listing}", bins=[b for b, _ in bad])
    return RpmThresholdMap(edges=tuple(edges.tolist()), tails=tuple(tails), tau_on=tuple(taus))
