"""Detection-quality and timing metrics for streaming fault warning."""

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyInputError, InsufficientDataError, ParameterError, UndefinedMetricError

# --------------------------------------------------------------------------
# Run outcomes and survival of lead times
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RunOutcome:
    """Lead-time outcome of one run.

    ``t0`` is the first issued alarm at or after ``t_phys``; ``None`` means
    the run is right-censored at ``horizon``.
    """

    run: str
    t_phys: float
    horizon: float
    t0: float = None
    n_false: int = 0

    def __post_init__(self):
        if self.t0 is not None and self.t0 < self.t_phys:
            raise ParameterError(f"run {self.run}: detection at {self.t0} precedes onset {self.t_phys}")
        if self.horizon < self.t_phys:
            raise ParameterError(f"run {self.run}: horizon ends before onset")

    @property
    def censored(self):
        return self.t0 is None

    @property
    def lead(self):
        """Detected lead time, or the censoring time when undetected."""
        return (self.t0 if self.t0 is not None else self.horizon) - self.t_phys


@dataclass(frozen=True)
class KmCurve:
    times: np.ndarray  # distinct event times
    survival: np.ndarray  # S just after each event time
    at_risk: np.ndarray
    horizon: float

    def __call__(self, t):
        """Right-continuous step function ``S(t)``."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        return np.r_[1.0, self.survival][idx]

    @property
    def restricted_mean(self):
        """``integral_0^T S(t) dt`` with ``T`` the horizon."""
        knots = np.r_[0.0, self.times[self.times < self.horizon], self.horizon]
        levels = np.r_[1.0, self.survival[self.times < self.horizon]]
        return float(np.sum(np.diff(knots) * levels))

    @property
    def median(self):
        """First time with ``S <= 1/2``; on an exact plateau at 1/2 the midpoint
        to the next event (matches the sample median without censoring).
        ``None`` when the curve never reaches 1/2."""
        hit = np.flatnonzero(self.survival <= 0.5 + 1e-12)
        if hit.size == 0:
            return None
        k = hit[0]
        if abs(self.survival[k] - 0.5) <= 1e-12 and k + 1 < self.times.size:
            return float(0.5 * (self.times[k] + self.times[k + 1]))
        return float(self.times[k])

    def table(self):
        """Step points ``(t, S)`` starting at ``(0, 1)``."""
        return [{"t": 0.0, "s": 1.0}] + [{"t": float(t), "s": float(s)} for t, s in zip(self.times, self.survival)]


def km_estimator(durations, observed, horizon=None):
    """Product-limit estimate from durations and event flags (``False`` = censored)."""
    d = np.asarray(durations, dtype=float)
    ev = np.asarray(observed, dtype=bool)
    if d.size == 0:
        raise EmptyInputError("Kaplan-Meier needs at least one duration")
    if d.shape != ev.shape:
        raise ParameterError("durations and event flags differ in length")
    if np.any(d < 0):
        raise ParameterError("durations must be non-negative")
    horizon = float(d.max()) if horizon is None else float(horizon)
    if horizon < d.max():
        raise ParameterError("horizon must cover every observed time")
    times = np.unique(d[ev])
    n_risk = np.array([np.sum(d >= t) for t in times], dtype=np.int64)
    deaths = np.array([np.sum((d == t) & ev) for t in times], dtype=np.int64)
    surv = np.cumprod(1.0 - deaths / n_risk)
    return KmCurve(times, surv, n_risk, horizon)


def km_from_outcomes(outcomes, horizon=None):
    leads = [o.lead for o in outcomes]
    if not leads:
        raise EmptyInputError("no run outcomes")
    if horizon is None:
        horizon = max(o.horizon - o.t_phys for o in outcomes)
    return km_estimator(leads, [not o.censored for o in outcomes], horizon)


# --------------------------------------------------------------------------
# False alarms
# --------------------------------------------------------------------------


def far(n_episodes, hours):
    if not hours > 0:
        raise ParameterError("healthy duration must be positive")
    return n_episodes / hours


# --------------------------------------------------------------------------
# Ranking metrics
# --------------------------------------------------------------------------


def _scored(scores, labels):
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if s.shape != y.shape:
        raise ParameterError("scores and labels differ in length")
    if not np.all(np.isfinite(s)):
        raise ParameterError("scores must be finite")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise UndefinedMetricError("both classes are required")
    return s, y


def _threshold_counts(s, y):
    """Cumulative true/false positives at each distinct threshold, high to low."""
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    return tp.astype(float), fp.astype(float)


def roc_auc(scores, labels):
    """Trapezoidal area under the ROC curve (ties get half credit)."""
    s, y = _scored(scores, labels)
    tp, fp = _threshold_counts(s, y)
    tpr = np.r_[0.0, tp / tp[-1]]
    fpr = np.r_[0.0, fp / fp[-1]]
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def pr_auc(scores, labels):
    """Average precision: sum of recall increments times precision, one step per distinct score."""
    s, y = _scored(scores, labels)
    tp, fp = _threshold_counts(s, y)
    precision = tp / (tp + fp)
    recall = tp / tp[-1]
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


# --------------------------------------------------------------------------
# Calibration error
# --------------------------------------------------------------------------


def ece(scores, labels, n_bins=10):
    """Expected calibration error over equal-width bins; returns ``(ece, table)``."""
    if n_bins < 2:
        raise ParameterError("need at least two bins")
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels, dtype=float).ravel()
    if s.size == 0:
        raise EmptyInputError("no scores")
    if np.any((s < 0) | (s > 1)):
        raise ParameterError("scores must lie in [0, 1]")
    idx = np.minimum((s * n_bins).astype(np.int64), n_bins - 1)
    table = []
    total = 0.0
    for b in range(n_bins):
        sel = idx == b
        n = int(sel.sum())
        conf = float(s[sel].mean()) if n else float("nan")
        acc = float(y[sel].mean()) if n else float("nan")
        if n:
            total += n / s.size * abs(acc - conf)
        table.append({"bin": b, "lo": b / n_bins, "hi": (b + 1) / n_bins, "conf": conf, "acc": acc, "count": n})
    return total, table


# --------------------------------------------------------------------------
# Bootstrap
# --------------------------------------------------------------------------


def bootstrap_ci(runs, statistic=None, n_boot=2000, level=0.95, seed=0):
    """Percentile bootstrap over runs; returns ``(estimate, lo, hi)``.

    ``runs`` is a sequence of per-run items; ``statistic`` maps a list of
    resampled items to a number and defaults to the mean of scalar items.
    Resamples whose statistic is undefined are skipped.
    """
    runs = list(runs)
    if len(runs) < 2:
        raise InsufficientDataError("bootstrap needs at least two runs")
    if n_boot < 200:
        raise ParameterError("use at least 200 bootstrap resamples")
    if not 0 < level < 1:
        raise ParameterError("level must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(runs), size=(n_boot, len(runs)))
    if statistic is None:
        vals = np.asarray(runs, dtype=float)
        est = float(vals.mean())
        boots = vals[idx].mean(axis=1)
    else:
        est = float(statistic(runs))
        out = []
        for row in idx:
            try:
                out.append(float(statistic([runs[i] for i in row])))
            except UndefinedMetricError:
                continue
        boots = np.asarray(out)
    boots = boots[np.isfinite(boots)]
    if boots.size == 0:
        return est, float("nan"), float("nan")
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(boots, [alpha, 1.0 - alpha])
    return est, float(lo), float(hi)


# --------------------------------------------------------------------------
# Early-warning score
# --------------------------------------------------------------------------


def earliness_credit(delay, window, steepness=5.0):
    """Scaled sigmoid credit for a detection ``delay`` seconds after onset:
    close to 1 at zero delay, 0 at the end of the window."""
    y = delay / window - 1.0
    return 2.0 / (1.0 + math.exp(steepness * y)) - 1.0


@dataclass(frozen=True)
class EwsRun:
    """Episode starts of one run; ``t_phys=None`` for a healthy run."""

    t_phys: float
    starts: tuple


def early_warning_score(runs, window, fp_penalty=0.11, fn_penalty=1.0):
    """Simplified NAB-style score normalized against perfect and null detectors.

    Per faulty run the first episode starting in ``[t_phys, t_phys + window]``
    earns earliness credit, a run without one costs ``fn_penalty``; every
    other episode (before onset, or extra detections) costs ``fp_penalty``.
    A detector alarming exactly at each onset scores 1, one that never alarms
    scores 0.  The result is clipped to ``[-1, 1]``.
    """
    if not window > 0:
        raise ParameterError("early-credit window must be positive")
    raw = perfect = null = 0.0
    for run in runs:
        starts = sorted(run.starts)
        if run.t_phys is None:
            raw -= fp_penalty * len(starts)
            continue
        hits = [t for t in starts if run.t_phys <= t <= run.t_phys + window]
        raw += earliness_credit(hits[0] - run.t_phys, window) if hits else -fn_penalty
        raw -= fp_penalty * (len(starts) - (1 if hits else 0))
        perfect += earliness_credit(0.0, window)
        null -= fn_penalty
    if perfect == null:
        return 0.0 if raw == 0 else float(np.clip(raw, -1.0, 1.0))
    return float(np.clip((raw - null) / (perfect - null), -1.0, 1.0))


# --------------------------------------------------------------------------
# Transfer retention
# --------------------------------------------------------------------------


def retention(auc_s, auc_t, auc_a, mttd_s, mttd_t, mttd_a):
    """Retention ratios and adaptation gains, oriented so higher is better."""
    if auc_s == 0 or mttd_t == 0:
        raise ParameterError("retention denominators must be nonzero")
    return {
        "retention_auc": auc_t / auc_s,
        "gain_auc": auc_a - auc_s,
        "retention_mttd": mttd_s / mttd_t,
        "gain_mttd": mttd_s - mttd_a,
    }


# --------------------------------------------------------------------------
# Report I/O
# --------------------------------------------------------------------------


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def write_report(report, path):
    """JSON with sorted keys and non-finite values as null (byte-stable)."""
    Path(path).write_text(json.dumps(_clean(report), sort_keys=True, indent=2) + "\n")


def write_csv(rows, path):
    rows = list(rows)
    with open(path, "w", newline="") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow(_clean(r))
