"""Post-hoc monotone maps from evidence to probability-like scores."""

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientDataError, ParameterError
from .blocks import sigmoid
from .kernels import pav_kernel

MIN_POINTS = 20
LOG_KAPPA_RANGE = (-6.0, 6.0)
# weight of the sigmoid tie-breaker blended into the isotonic step map
TIE_BREAK = 1e-6
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _nll(kappa, e, y, beta=0.0):
    z = kappa * e + beta
    # -[y log s + (1-y) log(1-s)] with s = sigmoid(z), written stably
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def golden_section(f, lo, hi, tol=1e-10, max_iter=200):
    """Minimizer of a unimodal ``f`` on ``[lo, hi]``."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


@dataclass(frozen=True)
class Calibrator:
    """Monotone evidence-to-score map.

    ``kind="temperature"`` is ``sigmoid(kappa e + beta)``.  ``kind="isotonic"``
    interpolates the pool-adjacent-violators fit between its breakpoints and
    blends in a tiny sigmoid so the map stays strictly increasing (ranks and
    therefore ROC/PR curves are untouched).
    """

    kind: str
    kappa: float = 1.0
    beta: float = 0.0
    x: tuple = ()
    y: tuple = ()

    def __post_init__(self):
        if self.kind not in ("temperature", "isotonic"):
            raise ParameterError(f"unknown calibrator kind {self.kind!r}")
        if not self.kappa > 0:
            raise ParameterError("kappa must be positive")

    def __call__(self, e):
        e = np.asarray(e, dtype=float)
        base = sigmoid(self.kappa * e + self.beta)
        if self.kind == "temperature":
            return base
        iso = np.interp(e, np.asarray(self.x), np.asarray(self.y))
        return (1.0 - TIE_BREAK) * iso + TIE_BREAK * base

    def logit(self, e):
        """Log-odds of the calibrated score: unbounded and in the same order."""
        e = np.asarray(e, dtype=float)
        if self.kind == "temperature":
            return self.kappa * e + self.beta
        s = np.clip(self(e), 1e-300, None)
        return np.log(s) - np.log1p(-np.minimum(s, 1.0 - 1e-16))

    def to_json(self):
        out = {"kind": self.kind, "kappa": self.kappa, "beta": self.beta}
        if self.kind == "isotonic":
            out.update(x=list(self.x), y=list(self.y))
        return out

    @classmethod
    def from_json(cls, obj):
        return cls(obj["kind"], float(obj["kappa"]), float(obj["beta"]), tuple(obj.get("x", ())), tuple(obj.get("y", ())))


def _check(e, y=None):
    e = np.asarray(e, dtype=float).ravel()
    if e.size < MIN_POINTS:
        raise InsufficientDataError(f"calibration needs at least {MIN_POINTS} points, got {e.size}")
    if y is None:
        return e, None
    y = np.asarray(y, dtype=float).ravel()
    if y.shape != e.shape:
        raise ParameterError("evidence and targets differ in length")
    if not np.all((y == 0) | (y == 1)):
        raise ParameterError("targets must be binary")
    return e, y


def fit_temperature(e, y):
    """NLL-optimal ``kappa`` by golden-section over ``log kappa``, with ``beta = 0``."""
    e, y = _check(e, y)
    lo, hi = LOG_KAPPA_RANGE
    log_k = golden_section(lambda lk: _nll(math.exp(lk), e, y), lo, hi)
    return Calibrator("temperature", kappa=math.exp(log_k))


def fit_isotonic(e, y):
    e, y = _check(e, y)
    order = np.argsort(e, kind="stable")
    xs, ys = e[order], y[order]
    fit = pav_kernel(ys, np.ones_like(ys))
    # collapse tied evidence to one breakpoint each (weighted mean of the fit)
    ux, start = np.unique(xs, return_index=True)
    counts = np.diff(np.r_[start, xs.size])
    uy = np.add.reduceat(fit, start) / counts
    return Calibrator("isotonic", x=tuple(ux.tolist()), y=tuple(uy.tolist()))


def fit_healthy(e, quantile=0.99, level=0.99):
    """Scale from healthy evidence alone: median maps to 0.5, the upper
    ``quantile`` maps to ``level``."""
    e, _ = _check(e)
    med = float(np.median(e))
    top = float(np.quantile(e, quantile))
    if not top > med:
        raise ParameterError("healthy evidence has no spread above its median")
    kappa = math.log(level / (1.0 - level)) / (top - med)
    return Calibrator("temperature", kappa=kappa, beta=-kappa * med)


def fit_calibrator(e, y=None, kind="temperature", healthy_only=False):
    if healthy_only:
        return fit_healthy(e)
    if y is None:
        raise ParameterError("labels are required unless healthy_only is set")
    if kind == "temperature":
        return fit_temperature(e, y)
    if kind == "isotonic":
        return fit_isotonic(e, y)
    raise ParameterError(f"unknown calibrator kind {kind!r}")
