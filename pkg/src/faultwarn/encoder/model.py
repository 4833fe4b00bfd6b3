"""Stateful streaming scorer built on the fused scan."""

from dataclasses import dataclass

import numpy as np

from .. import _accel
from ..errors import ShapeError
from ..signal import n_windows
from .blocks import sigmoid, softplus
from .kernels import encoder_scan
from .reference import forward_numpy

_EMPTY2 = np.zeros((0, 1))


@dataclass
class StreamState:
    """Everything a stream carries between hops: stem history, SSM latent,
    attention key/value ring buffers, EMA prior and the step counter."""

    hist: np.ndarray
    h: np.ndarray
    kcache: np.ndarray
    vcache: np.ndarray
    prior: np.ndarray
    count: np.ndarray

    @classmethod
    def fresh(cls, params):
        n_h, d_head, _ = params.wq.shape
        return cls(
            hist=np.zeros((params.channels, params.history)),
            h=np.zeros(params.eta.shape[0]),
            kcache=np.zeros((n_h, params.window, d_head)),
            vcache=np.zeros((n_h, params.window, params.wv.shape[1])),
            prior=np.zeros(params.window + 1),
            count=np.zeros(1, dtype=np.int64),
        )

    def copy(self):
        return StreamState(*(np.array(getattr(self, f)) for f in self.__dataclass_fields__))

    @property
    def steps(self):
        return int(self.count[0])


def _kernel_args(params):
    return (
        params.dw_kernel,
        params.dilation,
        params.pw,
        params.pw_bias,
        -softplus(params.eta),
        float(params.delta),
        params.mix_u,
        params.b_c,
        params.c_out,
        params.gate_w,
        float(params.gate_b),
        params.wq,
        params.wk,
        params.wv,
        params.wo,
        params.w_gamma,
        params.b_gamma,
        params.w_f,
        params.w_evid,
        float(params.lambda_disc),
        float(params.eps),
        float(params.ema_rate),
    )


def advance(params, state, x, backend=None, trace=False):
    """Run the scorer over samples ``x`` (C, T), updating ``state`` in place.

    Returns per-sample evidence and association discrepancy; with
    ``trace=True`` also a dict of branch outputs.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != params.channels:
        raise ShapeError(f"expected ({params.channels}, T) samples, got {x.shape}")
    backend = backend or _accel.backend_name()
    if backend == "numpy":
        return forward_numpy(x, params, state, trace=trace)
    t = x.shape[1]
    e = np.empty(t)
    disc = np.empty(t)
    if trace:
        tr = {
            "conv": np.empty((t, params.pw.shape[0])),
            "ssm": np.empty((t, params.c_out.shape[0])),
            "att": np.empty((t, params.wo.shape[0])),
            "p": np.empty((t, params.window + 1)),
        }
        bufs = (tr["conv"], tr["ssm"], tr["att"], tr["p"])
    else:
        bufs = (_EMPTY2, _EMPTY2, _EMPTY2, _EMPTY2)
    encoder_scan(x, *_kernel_args(params), state.hist, state.h, state.kcache, state.vcache, state.prior, state.count, e, disc, *bufs)
    if trace:
        return e, disc, tr
    return e, disc


def window_evidence(e, length, hop):
    """Mean per-sample evidence over each window's final hop."""
    count = n_windows(e.shape[-1], length, hop)
    a = length - hop
    return e[a : a + count * hop].reshape(count, hop).sum(axis=1) / hop


def calibrate_score(e, kappa, beta):
    return sigmoid(kappa * np.asarray(e, dtype=float) + beta)


class StreamingScorer:
    """Hop-by-hop scorer with batch=1 semantics.

    The first call consumes a full window of ``length`` samples; each later
    call consumes the ``hop`` new samples of the next window.  Window
    evidence is the mean per-sample evidence over the window's last hop.
    """

    def __init__(self, params, length, hop, backend=None, calibrator=None):
        if not 1 <= hop <= length:
            raise ShapeError("need 1 <= hop <= window length")
        self.params = params
        self.length = length
        self.hop = hop
        self.backend = backend
        self.calibrator = calibrator
        self.state = StreamState.fresh(params)
        self.windows_seen = 0

    def push(self, samples):
        """Consume the new samples of the next window; returns ``(evidence, score)``."""
        need = self.length if self.windows_seen == 0 else self.hop
        samples = np.asarray(samples, dtype=np.float64)
        if samples.shape[-1] != need:
            raise ShapeError(f"window {self.windows_seen} needs {need} new samples, got {samples.shape[-1]}")
        e, _ = advance(self.params, self.state, samples, backend=self.backend)
        ev = float(np.sum(e[-self.hop :]) / self.hop)
        self.windows_seen += 1
        return ev, self.score(ev)

    def score(self, evidence):
        if self.calibrator is not None:
            return float(self.calibrator(evidence))
        return float(calibrate_score(evidence, self.params.kappa, self.params.beta))

    def new_samples(self, data, k):
        """Slice of ``data`` consumed by window ``k``."""
        if k == 0:
            return data[:, : self.length]
        a = k * self.hop + self.length - self.hop
        return data[:, a : a + self.hop]


def score_sequence(params, data, length, hop, backend=None):
    """Whole-sequence scoring: one scan over all samples, then per-window evidence."""
    count = n_windows(data.shape[1], length, hop)
    end = (count - 1) * hop + length
    state = StreamState.fresh(params)
    e, _ = advance(params, state, data[:, :end], backend=backend)
    return window_evidence(e, length, hop)
