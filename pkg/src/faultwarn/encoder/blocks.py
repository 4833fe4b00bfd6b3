"""Single-step building blocks of the tri-branch scorer.

These are the small, readable forms of each stage.  The fused scan kernels
in :mod:`.kernels` and :mod:`.reference` implement the same arithmetic over
whole sequences.
"""

import math

import numpy as np

from ..errors import ParameterError, ShapeError

LN2 = math.log(2.0)


def softplus(x):
    x = np.asarray(x, dtype=float)
    return np.logaddexp(0.0, x)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def gelu(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * x * (1.0 + np.tanh(0.7978845608028654 * (x + 0.044715 * x**3)))


def ssm_discretize(eta, delta, b_c):
    """Zero-order hold of the diagonal system ``A_c = -softplus(eta)``.

    Returns ``(a, b)`` where ``a`` holds the diagonal of ``exp(delta A_c)`` and
    ``b = A_c^{-1} (A - I) B_c``.
    """
    if not delta > 0:
        raise ParameterError(f"step size must be positive, got {delta}")
    a_c = -softplus(eta)
    a = np.exp(delta * a_c)
    # (a - 1) / a_c == delta * expm1(delta a_c) / (delta a_c); expm1 keeps small steps exact
    scale = np.expm1(delta * a_c) / a_c
    b_c = np.asarray(b_c, dtype=float)
    if b_c.ndim == 1:
        return a, scale * b_c
    return a, scale[:, None] * b_c


def gate_step_size(delta, gate):
    """Selective step: ``delta * softplus(g) / log 2`` so that ``g = 0`` keeps ``delta``."""
    return delta * softplus(gate) / LN2


def ssm_step(h, u, a, b, c):
    """``h' = a * h + b u``; returns ``(h', y)`` with ``y = c h'``.

    ``a`` is the diagonal of the discrete transition, ``b`` is ``(d, d_u)``
    (or ``(d,)`` for scalar input) and ``c`` is ``(d_o, d)``.
    """
    h = np.asarray(h, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    u = np.asarray(u, dtype=float)
    if a.shape != h.shape:
        raise ShapeError(f"transition {a.shape} does not match state {h.shape}")
    bu = b * u if b.ndim == 1 else b @ u
    if bu.shape != h.shape:
        raise ShapeError(f"input map gives {bu.shape}, state is {h.shape}")
    h_new = a * h + bu
    c = np.asarray(c, dtype=float)
    if c.shape[-1] != h.shape[0]:
        raise ShapeError("readout does not match state dimension")
    return h_new, c @ h_new


def local_attention_weights(q, keys, scale=None):
    """Softmax of ``<q, k_i> / sqrt(d)`` over the supplied neighborhood keys."""
    q = np.asarray(q, dtype=float)
    keys = np.asarray(keys, dtype=float)
    if keys.ndim != 2 or keys.shape[1] != q.shape[-1]:
        raise ShapeError("keys must be (n, d_head) matching the query")
    scale = 1.0 / math.sqrt(q.shape[-1]) if scale is None else scale
    logits = keys @ q * scale
    logits -= logits.max()
    w = np.exp(logits)
    return w / w.sum()


def fuse(z, w_gamma, b_gamma, w_f):
    """Gated residual ``gamma * (W_f z) + (1 - gamma) * z``."""
    z = np.asarray(z, dtype=float)
    w_gamma = np.asarray(w_gamma, dtype=float)
    w_f = np.asarray(w_f, dtype=float)
    if w_gamma.shape != (z.size, z.size) or w_f.shape != (z.size, z.size):
        raise ShapeError(f"fusion matrices must be {(z.size, z.size)}")
    gamma = sigmoid(w_gamma @ z + b_gamma)
    return gamma * (w_f @ z) + (1.0 - gamma) * z


def association(alpha):
    """Head-average of attention rows, ``alpha`` shaped ``(n_heads, n)``."""
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    if not np.allclose(alpha.sum(axis=1), 1.0, atol=1e-9):
        raise ParameterError("attention rows must be normalized")
    return alpha.mean(axis=0)


def update_prior(prior, p, rate):
    """EMA ``(1-a) prior + a p``, renormalized."""
    if not 0 < rate <= 1:
        raise ParameterError(f"EMA rate must lie in (0, 1], got {rate}")
    new = (1.0 - rate) * np.asarray(prior, dtype=float) + rate * np.asarray(p, dtype=float)
    return new / new.sum()


def js_discrepancy(p, prior, eps=0.05):
    """Jensen-Shannon discrepancy of uniformly smoothed distributions (nats)."""
    if not 0 < eps < 0.5:
        raise ParameterError(f"smoothing must lie in (0, 0.5), got {eps}")
    p = np.asarray(p, dtype=float)
    prior = np.asarray(prior, dtype=float)
    if p.shape != prior.shape:
        raise ShapeError("distributions must share a support")
    n = p.shape[-1]
    pb = (1.0 - eps) * p + eps / n
    qb = (1.0 - eps) * prior + eps / n
    m = 0.5 * (pb + qb)
    d = 0.5 * np.sum(pb * np.log(pb / m), axis=-1) + 0.5 * np.sum(qb * np.log(qb / m), axis=-1)
    return np.maximum(d, 0.0)


def evidence_score(r, disc, w, lambda_disc, kappa=1.0, beta=0.0):
    """Evidence ``w.r + lambda_disc * disc`` and score ``sigmoid(kappa e + beta)``."""
    if not kappa > 0:
        raise ParameterError(f"kappa must be positive, got {kappa}")
    e = np.asarray(r, dtype=float) @ np.asarray(w, dtype=float) + lambda_disc * np.asarray(disc)
    return e, sigmoid(kappa * e + beta)
