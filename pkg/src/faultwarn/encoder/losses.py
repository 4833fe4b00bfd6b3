"""Task and total loss evaluation with analytic score gradients."""

import warnings

import numpy as np

from ..errors import ParameterError

CLAMP = 1e-12


def _prepare(s, y):
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    if s.shape != y.shape:
        raise ParameterError("scores and labels differ in shape")
    if not np.all((y == 0) | (y == 1)):
        raise ParameterError("labels must be binary")
    if np.any((s <= 0) | (s >= 1)):
        warnings.warn("scores at 0 or 1 clamped before taking logs", RuntimeWarning, stacklevel=3)
    return np.clip(s, CLAMP, 1.0 - CLAMP), y


def weighted_bce(s, y, w_pos=1.0, w_neg=1.0):
    s, y = _prepare(s, y)
    return float(-np.mean(w_pos * y * np.log(s) + w_neg * (1.0 - y) * np.log1p(-s)))


def weighted_bce_grad(s, y, w_pos=1.0, w_neg=1.0):
    s, y = _prepare(s, y)
    return -(w_pos * y / s - w_neg * (1.0 - y) / (1.0 - s)) / s.size


def focal(s, y, gamma=2.0):
    if gamma < 0:
        raise ParameterError("focal gamma must be non-negative")
    s, y = _prepare(s, y)
    pos = y * (1.0 - s) ** gamma * np.log(s)
    neg = (1.0 - y) * s**gamma * np.log1p(-s)
    return float(-np.mean(pos + neg))


def focal_grad(s, y, gamma=2.0):
    s, y = _prepare(s, y)
    ls, l1 = np.log(s), np.log1p(-s)
    d_pos = -gamma * (1.0 - s) ** (gamma - 1.0) * ls + (1.0 - s) ** gamma / s if gamma else 1.0 / s
    d_neg = gamma * s ** (gamma - 1.0) * l1 - s**gamma / (1.0 - s) if gamma else -1.0 / (1.0 - s)
    return -(y * d_pos + (1.0 - y) * d_neg) / s.size


def task_loss(s, y, mode="bce", w_pos=1.0, w_neg=1.0, gamma=2.0):
    if mode == "bce":
        return weighted_bce(s, y, w_pos, w_neg)
    if mode == "focal":
        return focal(s, y, gamma)
    raise ParameterError(f"unknown task loss {mode!r}")


def class_balanced_weights(y):
    """``(w_pos, w_neg)`` making both classes contribute equally."""
    y = np.asarray(y, dtype=float)
    n_pos = y.sum()
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ParameterError("class balancing needs both classes")
    return y.size / (2.0 * n_pos), y.size / (2.0 * n_neg)


def total_loss(task, physics=0.0):
    return float(task) + float(physics)
