"""Aggregate replayed runs into the metric report."""

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyInputError, UndefinedMetricError
from ..metrics import EwsRun, bootstrap_ci, early_warning_score, ece, km_from_outcomes, pr_auc, roc_auc
from .replay import evaluate_run


@dataclass(frozen=True)
class RunRecord:
    """What evaluation needs from one replayed test run."""

    run: str
    t_phys: float  # None for a healthy run
    times: np.ndarray  # window decision times
    scores: np.ndarray
    burn_in: int
    starts: tuple  # episode start times
    hop_s: float

    @property
    def horizon(self):
        return float(self.times[-1])

    @property
    def active(self):
        return np.arange(self.times.size) >= self.burn_in

    @property
    def labels(self):
        if self.t_phys is None:
            return np.zeros(self.times.size, dtype=bool)
        return self.times >= self.t_phys

    @property
    def healthy_hours(self):
        healthy = self.active & ~self.labels
        return healthy.sum() * self.hop_s / 3600.0

    @property
    def n_false(self):
        if self.t_phys is None:
            return len(self.starts)
        return sum(1 for s in self.starts if s < self.t_phys)

    def outcome(self):
        return evaluate_run(self.starts, self.t_phys, self.horizon, run=self.run)


def _pooled(records):
    s = np.concatenate([r.scores[r.active] for r in records])
    y = np.concatenate([r.labels[r.active] for r in records])
    return s, y


def _far(records):
    hours = sum(r.healthy_hours for r in records)
    if hours <= 0:
        raise UndefinedMetricError("no healthy time to count false alarms over")
    return sum(r.n_false for r in records) / hours


def _or_none(fn, *args):
    try:
        return fn(*args)
    except UndefinedMetricError:
        return None


def build_report(records, cfg):
    """Metric report over test runs (deterministic given records and config)."""
    records = list(records)
    if not records:
        raise EmptyInputError("no runs to evaluate")
    scores, labels = _pooled(records)
    faulty = [r for r in records if r.t_phys is not None]
    outcomes = [r.outcome() for r in faulty]
    horizon = max((o.horizon - o.t_phys for o in outcomes), default=None)

    report = {
        "n_runs": len(records),
        "n_censored": sum(o.censored for o in outcomes),
        "pr_auc": _or_none(pr_auc, scores, labels),
        "roc_auc": _or_none(roc_auc, scores, labels),
    }
    report["ece"], reliability = ece(scores, labels, cfg.ece_bins)
    report["far_per_hour"] = _or_none(_far, records)
    if outcomes:
        km = km_from_outcomes(outcomes, horizon)
        report["mttd_restricted_mean_s"] = km.restricted_mean
        report["mttd_median_s"] = km.median
        report["km_curve"] = km.table()
    else:
        km = None
        report["mttd_restricted_mean_s"] = None
        report["mttd_median_s"] = None
        report["km_curve"] = []
    report["ews_score"] = early_warning_score(
        [EwsRun(r.t_phys, tuple(r.starts)) for r in records], cfg.ews_window_s
    )

    ci = {}
    if len(records) >= 2:
        boot = {"n_boot": cfg.n_boot, "level": cfg.ci_level, "seed": cfg.seed}

        def stat_auc(fn):
            return lambda rs: fn(*_pooled(rs))

        for name, fn in (("pr_auc", stat_auc(pr_auc)), ("roc_auc", stat_auc(roc_auc)), ("far_per_hour", _far)):
            if report[name] is not None:
                est, lo, hi = bootstrap_ci(records, fn, **boot)
                ci[name] = {"lo": lo, "hi": hi}
        if len(faulty) >= 2:
            est, lo, hi = bootstrap_ci(outcomes, lambda os: km_from_outcomes(os, horizon).restricted_mean, **boot)
            ci["mttd_restricted_mean_s"] = {"lo": lo, "hi": hi}
    report["ci"] = ci
    report["runs"] = [
        {
            "run": r.run,
            "t_phys": r.t_phys,
            "t0": o.t0 if o is not None else None,
            "lead_s": (o.lead if not o.censored else None) if o is not None else None,
            "censored": o.censored if o is not None else None,
            "n_false": r.n_false,
        }
        for r, o in ((r, r.outcome() if r.t_phys is not None else None) for r in records)
    ]
    tables = {"reliability": reliability, "km": km.table() if km is not None else []}
    return report, tables
