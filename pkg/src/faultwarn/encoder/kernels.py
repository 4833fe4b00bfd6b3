"""Fused per-sample scan of the scorer (numba when enabled).

One call advances a stream by ``T`` samples, mutating the state buffers in
place.  Each sample is processed with the same arithmetic in the same order
regardless of how the stream is chunked, so hop-by-hop replay reproduces a
single whole-sequence call bit for bit.
"""

import math

import numpy as np

from .._accel import njit

_LN2 = math.log(2.0)


@njit
def _softplus(x):
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    ex = math.exp(x)
    return ex / (1.0 + ex)


@njit
def _gelu(x):
    return 0.5 * x * (1.0 + math.tanh(0.7978845608028654 * (x + 0.044715 * x * x * x)))


@njit
def encoder_scan(
    x,
    dw,
    dilation,
    pw,
    pw_b,
    a_c,
    delta,
    mix_u,
    b_c,
    c_out,
    gate_w,
    gate_b,
    wq,
    wk,
    wv,
    wo,
    w_gamma,
    b_gamma,
    w_f,
    w_evid,
    lambda_disc,
    eps,
    ema,
    hist,
    h,
    kcache,
    vcache,
    prior,
    count,
    out_e,
    out_disc,
    tr_conv,
    tr_ssm,
    tr_att,
    tr_p,
):
    n_ch, n_t = x.shape
    k_len = dw.shape[1]
    n_hist = hist.shape[1]
    d_c = pw.shape[0]
    d_ssm = a_c.shape[0]
    d_u = mix_u.shape[0]
    d_o = c_out.shape[0]
    n_h, d_head, _ = wq.shape
    d_v = wv.shape[1]
    d_a = wo.shape[0]
    win = kcache.shape[1]
    dim = d_c + d_o + d_a
    scale = 1.0 / math.sqrt(d_head)
    keep_conv = tr_conv.shape[0] > 0
    keep_ssm = tr_ssm.shape[0] > 0
    keep_att = tr_att.shape[0] > 0
    keep_p = tr_p.shape[0] > 0

    dwo = np.empty(n_ch)
    y_conv = np.empty(d_c)
    u = np.empty(d_u)
    y_ssm = np.empty(d_o)
    q = np.empty(d_head)
    kk = np.empty(d_head)
    vv = np.empty(d_v)
    logits = np.empty(win + 1)
    heads = np.empty(n_h * d_v)
    y_att = np.empty(d_a)
    p = np.empty(win + 1)
    z = np.empty(dim)

    for t in range(n_t):
        seen = count[0]
        # ---- causal depthwise + pointwise stem
        for c in range(n_ch):
            acc = dw[c, 0] * x[c, t]
            for j in range(1, k_len):
                acc += dw[c, j] * hist[c, n_hist - j * dilation]
            dwo[c] = acc
        for i in range(d_c):
            acc = pw_b[i]
            for c in range(n_ch):
                acc += pw[i, c] * dwo[c]
            y_conv[i] = _gelu(acc)
        if n_hist > 0:
            for c in range(n_ch):
                for j in range(n_hist - 1):
                    hist[c, j] = hist[c, j + 1]
                hist[c, n_hist - 1] = x[c, t]

        # ---- selective SSM: gate rescales the ZOH step
        g = gate_b
        for i in range(d_c):
            g += gate_w[i] * y_conv[i]
        dt = delta * _softplus(g) / _LN2
        for j in range(d_u):
            acc = 0.0
            for i in range(d_c):
                acc += mix_u[j, i] * y_conv[i]
            u[j] = acc
        for s in range(d_ssm):
            bu = 0.0
            for j in range(d_u):
                bu += b_c[s, j] * u[j]
            h[s] = math.exp(dt * a_c[s]) * h[s] + (math.expm1(dt * a_c[s]) / a_c[s]) * bu
        for o in range(d_o):
            acc = 0.0
            for s in range(d_ssm):
                acc += c_out[o, s] * h[s]
            y_ssm[o] = acc

        # ---- local attention over lags 0..min(seen, W)
        n_past = seen if seen < win else win
        n_av = n_past + 1
        for l in range(win + 1):
            p[l] = 0.0
        for hh in range(n_h):
            for d in range(d_head):
                aq = 0.0
                ak = 0.0
                for i in range(d_c):
                    aq += wq[hh, d, i] * y_conv[i]
                    ak += wk[hh, d, i] * y_conv[i]
                q[d] = aq
                kk[d] = ak
            for d in range(d_v):
                av = 0.0
                for i in range(d_c):
                    av += wv[hh, d, i] * y_conv[i]
                vv[d] = av
            acc = 0.0
            for d in range(d_head):
                acc += q[d] * kk[d]
            logits[0] = acc * scale
            mx = logits[0]
            for l in range(1, n_av):
                slot = (seen - l) % win
                acc = 0.0
                for d in range(d_head):
                    acc += q[d] * kcache[hh, slot, d]
                logits[l] = acc * scale
                if logits[l] > mx:
                    mx = logits[l]
            tot = 0.0
            for l in range(n_av):
                logits[l] = math.exp(logits[l] - mx)
                tot += logits[l]
            for d in range(d_v):
                heads[hh * d_v + d] = 0.0
            for l in range(n_av):
                alpha = logits[l] / tot
                p[l] += alpha / n_h
                if l == 0:
                    for d in range(d_v):
                        heads[hh * d_v + d] += alpha * vv[d]
                else:
                    slot = (seen - l) % win
                    for d in range(d_v):
                        heads[hh * d_v + d] += alpha * vcache[hh, slot, d]
            slot = seen % win
            for d in range(d_head):
                kcache[hh, slot, d] = kk[d]
            for d in range(d_v):
                vcache[hh, slot, d] = vv[d]
        for o in range(d_a):
            acc = 0.0
            for j in range(n_h * d_v):
                acc += wo[o, j] * heads[j]
            y_att[o] = acc

        # ---- association discrepancy against the slow prior
        if seen == 0:
            for l in range(win + 1):
                prior[l] = p[l]
        unif = eps / n_av
        js = 0.0
        for l in range(n_av):
            pb = (1.0 - eps) * p[l] + unif
            qb = (1.0 - eps) * prior[l] + unif
            mm = 0.5 * (pb + qb)
            js += 0.5 * pb * math.log(pb / mm) + 0.5 * qb * math.log(qb / mm)
        if js < 0.0:
            js = 0.0
        tot = 0.0
        for l in range(win + 1):
            prior[l] = (1.0 - ema) * prior[l] + ema * p[l]
            tot += prior[l]
        for l in range(win + 1):
            prior[l] /= tot

        # ---- gated residual fusion and evidence
        for i in range(d_c):
            z[i] = y_conv[i]
        for i in range(d_o):
            z[d_c + i] = y_ssm[i]
        for i in range(d_a):
            z[d_c + d_o + i] = y_att[i]
        e = lambda_disc * js
        for i in range(dim):
            ag = b_gamma[i]
            af = 0.0
            for j in range(dim):
                ag += w_gamma[i, j] * z[j]
                af += w_f[i, j] * z[j]
            gam = _sigmoid(ag)
            e += w_evid[i] * (gam * af + (1.0 - gam) * z[i])

        out_e[t] = e
        out_disc[t] = js
        if keep_conv:
            for i in range(d_c):
                tr_conv[t, i] = y_conv[i]
        if keep_ssm:
            for i in range(d_o):
                tr_ssm[t, i] = y_ssm[i]
        if keep_att:
            for i in range(d_a):
                tr_att[t, i] = y_att[i]
        if keep_p:
            for l in range(win + 1):
                tr_p[t, l] = p[l]
        count[0] = seen + 1


@njit
def pav_kernel(y, w):
    """Weighted pool-adjacent-violators; returns the nondecreasing fit."""
    n = y.shape[0]
    val = np.empty(n)
    wt = np.empty(n)
    size = np.empty(n, dtype=np.int64)
    top = 0
    for i in range(n):
        val[top] = y[i]
        wt[top] = w[i]
        size[top] = 1
        top += 1
        while top > 1 and val[top - 2] >= val[top - 1]:
            tw = wt[top - 2] + wt[top - 1]
            val[top - 2] = (wt[top - 2] * val[top - 2] + wt[top - 1] * val[top - 1]) / tw
            wt[top - 2] = tw
            size[top - 2] += size[top - 1]
            top -= 1
    out = np.empty(n)
    pos = 0
    for b in range(top):
        for _ in range(size[b]):
            out[pos] = val[b]
            pos += 1
    return out
