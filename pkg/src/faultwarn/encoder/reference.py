"""Vectorized numpy forward pass.

Independent of the fused scan kernel: stages are computed over whole chunks
with array operations (sliding windows for the stem and the attention
neighborhoods, a linear filter for the EMA prior).  Only the SSM recurrence
keeps a Python loop over time.  Serves as the numpy backend and as the
recomputation oracle for the kernel.
"""

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import lfilter

from .blocks import gelu, sigmoid, softplus

LN2 = math.log(2.0)
ATTN_BLOCK = 8192


def _stem(x, params, hist):
    k = params.dw_kernel.shape[1]
    dil = params.dilation
    xp = np.concatenate([hist, x], axis=1)
    n_hist = hist.shape[1]
    t = x.shape[1]
    dwo = params.dw_kernel[:, 0:1] * x
    for j in range(1, k):
        dwo = dwo + params.dw_kernel[:, j : j + 1] * xp[:, n_hist - j * dil : n_hist - j * dil + t]
    pre = dwo.T @ params.pw.T + params.pw_bias
    new_hist = xp[:, xp.shape[1] - n_hist :] if n_hist else hist
    return gelu(pre), new_hist


def _ssm(y_conv, params, h):
    g = y_conv @ params.gate_w + params.gate_b
    dt = params.delta * softplus(g) / LN2
    a_c = -softplus(params.eta)
    a = np.exp(dt[:, None] * a_c[None, :])
    scale = np.expm1(dt[:, None] * a_c[None, :]) / a_c[None, :]
    bu = scale * ((y_conv @ params.mix_u.T) @ params.b_c.T)
    hs = np.empty_like(a)
    for t in range(a.shape[0]):
        h = a[t] * h + bu[t]
        hs[t] = h
    return hs @ params.c_out.T, h


def _attention(y_conv, params, kcache, vcache, seen):
    """Attention rows over lags 0..W for every step of the chunk."""
    win = params.window
    n_h = params.wq.shape[0]
    t_len = y_conv.shape[0]
    q = np.einsum("hdi,ti->htd", params.wq, y_conv)
    k = np.einsum("hdi,ti->htd", params.wk, y_conv)
    v = np.einsum("hdi,ti->htd", params.wv, y_conv)
    # past keys in time order, oldest first, padded to a full window
    n_past = min(seen, win)
    order = (seen - np.arange(win, 0, -1)) % win
    kp = np.zeros((n_h, win, k.shape[2]))
    vp = np.zeros((n_h, win, v.shape[2]))
    kp[:, win - n_past :] = kcache[:, order[win - n_past :]]
    vp[:, win - n_past :] = vcache[:, order[win - n_past :]]
    kall = np.concatenate([kp, k], axis=1)
    vall = np.concatenate([vp, v], axis=1)
    # valid[t, l]: lag l exists at chunk step t
    step = seen + np.arange(t_len)
    valid = np.arange(win + 1)[None, :] <= np.minimum(step, win)[:, None]

    y_heads = np.empty((t_len, n_h, v.shape[2]))
    p = np.zeros((t_len, win + 1))
    scale = 1.0 / math.sqrt(q.shape[2])
    for a0 in range(0, t_len, ATTN_BLOCK):
        b0 = min(t_len, a0 + ATTN_BLOCK)
        # windows over kall: row t covers positions t..t+W, i.e. lags W..0
        kw = sliding_window_view(kall[:, a0 : b0 + win], win + 1, axis=1)[..., ::-1]
        vw = sliding_window_view(vall[:, a0 : b0 + win], win + 1, axis=1)[..., ::-1]
        logits = np.einsum("htd,htdl->htl", q[:, a0:b0], kw) * scale
        logits = np.where(valid[None, a0:b0], logits, -np.inf)
        logits -= logits.max(axis=2, keepdims=True)
        w = np.exp(logits)
        alpha = w / w.sum(axis=2, keepdims=True)
        y_heads[a0:b0] = np.einsum("htl,htdl->thd", alpha, vw)
        p[a0:b0] = alpha.mean(axis=0)
    y_att = y_heads.reshape(t_len, -1) @ params.wo.T

    new_k = kcache.copy()
    new_v = vcache.copy()
    tail = min(t_len, win)
    slots = (step[t_len - tail :]) % win
    new_k[:, slots] = k[:, t_len - tail :]
    new_v[:, slots] = v[:, t_len - tail :]
    return y_att, p, valid, new_k, new_v


def _discrepancy(p, valid, prior, seen, params):
    a = params.ema_rate
    if seen == 0:
        prior = p[0].copy()
    # prior used at step t is the EMA of p up to t-1
    ema, _ = lfilter([a], [1.0, -(1.0 - a)], p, axis=0, zi=((1.0 - a) * prior)[None, :])
    before = np.vstack([prior[None, :], ema[:-1]])
    before = before / before.sum(axis=1, keepdims=True)
    n_av = valid.sum(axis=1)[:, None]
    unif = np.where(valid, params.eps / n_av, 0.0)
    pb = (1.0 - params.eps) * p + unif
    qb = (1.0 - params.eps) * before + unif
    m = 0.5 * (pb + qb)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(valid, 0.5 * pb * np.log(pb / m) + 0.5 * qb * np.log(qb / m), 0.0)
    js = np.maximum(terms.sum(axis=1), 0.0)
    new_prior = ema[-1] / ema[-1].sum()
    return js, new_prior


def forward_numpy(x, params, state, trace=False):
    """Advance ``state`` over the chunk ``x`` (C, T); returns evidence and discrepancy.

    With ``trace=True`` also returns the per-step branch outputs and
    association rows.
    """
    x = np.asarray(x, dtype=np.float64)
    seen = int(state.count[0])
    y_conv, state.hist[...] = _stem(x, params, state.hist)
    y_ssm, state.h[...] = _ssm(y_conv, params, state.h.copy())
    y_att, p, valid, kc, vc = _attention(y_conv, params, state.kcache, state.vcache, seen)
    state.kcache[...] = kc
    state.vcache[...] = vc
    js, state.prior[...] = _discrepancy(p, valid, state.prior.copy(), seen, params)
    z = np.concatenate([y_conv, y_ssm, y_att], axis=1)
    gamma = sigmoid(z @ params.w_gamma.T + params.b_gamma)
    r = gamma * (z @ params.w_f.T) + (1.0 - gamma) * z
    e = r @ params.w_evid + params.lambda_disc * js
    state.count[0] = seen + x.shape[1]
    if trace:
        return e, js, {"conv": y_conv, "ssm": y_ssm, "att": y_att, "p": p, "r": r}
    return e, js
