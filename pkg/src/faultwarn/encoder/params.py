"""Parameter bundle for the tri-branch scorer and its JSON file format."""

import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from ..errors import ParameterError, ShapeError

FORMAT = "faultwarn-encoder/1"

ARRAY_FIELDS = (
    "dw_kernel",
    "pw",
    "pw_bias",
    "eta",
    "mix_u",
    "b_c",
    "c_out",
    "gate_w",
    "wq",
    "wk",
    "wv",
    "wo",
    "w_gamma",
    "b_gamma",
    "w_f",
    "w_evid",
)
SCALAR_FIELDS = ("dilation", "delta", "gate_b", "window", "lambda_disc", "eps", "ema_rate", "kappa", "beta")


@dataclass(frozen=True)
class EncoderParams:
    # conv stem
    dw_kernel: np.ndarray  # (C, k) depthwise, causal
    pw: np.ndarray  # (d_c, C) pointwise mixing
    pw_bias: np.ndarray  # (d_c,)
    # selective SSM
    eta: np.ndarray  # (d_ssm,)
    mix_u: np.ndarray  # (d_u, d_c) channel reduction feeding the SSM
    b_c: np.ndarray  # (d_ssm, d_u)
    c_out: np.ndarray  # (d_o, d_ssm)
    gate_w: np.ndarray  # (d_c,)
    # local attention
    wq: np.ndarray  # (n_heads, d_head, d_c)
    wk: np.ndarray
    wv: np.ndarray  # (n_heads, d_v, d_c)
    wo: np.ndarray  # (d_a, n_heads * d_v)
    # fusion and evidence
    w_gamma: np.ndarray  # (D, D)
    b_gamma: np.ndarray  # (D,)
    w_f: np.ndarray  # (D, D)
    w_evid: np.ndarray  # (D,)
    dilation: int = 1
    delta: float = 0.05
    gate_b: float = 0.0
    window: int = 32
    lambda_disc: float = 20.0
    eps: float = 0.05
    ema_rate: float = 0.05
    kappa: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        for name in ARRAY_FIELDS:
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ParameterError(f"parameter {name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name in ("dilation", "window"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.window < 1:
            raise ParameterError("attention window must be >= 1")
        if self.dilation < 1:
            raise ParameterError("dilation must be >= 1")
        if not self.kappa > 0:
            raise ParameterError("kappa must be positive")
        if not self.delta > 0:
            raise ParameterError("SSM step must be positive")
        if not 0 < self.eps < 0.5:
            raise ParameterError("association smoothing must lie in (0, 0.5)")
        if not 0 < self.ema_rate <= 1:
            raise ParameterError("EMA rate must lie in (0, 1]")
        self._check_shapes()

    def _check_shapes(self):
        c, k = self.dw_kernel.shape
        d_c = self.pw.shape[0]
        d_ssm = self.eta.shape[0]
        n_h, d_head, _ = self.wq.shape
        expect = {
            "pw": (d_c, c),
            "pw_bias": (d_c,),
            "mix_u": (self.mix_u.shape[0], d_c),
            "b_c": (d_ssm, self.mix_u.shape[0]),
            "c_out": (self.c_out.shape[0], d_ssm),
            "gate_w": (d_c,),
            "wk": (n_h, d_head, d_c),
            "wv": (n_h, self.wv.shape[1], d_c),
            "wo": (self.wo.shape[0], n_h * self.wv.shape[1]),
            "w_gamma": (self.dim, self.dim),
            "b_gamma": (self.dim,),
            "w_f": (self.dim, self.dim),
            "w_evid": (self.dim,),
        }
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise ShapeError(f"parameter {name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def channels(self):
        return self.dw_kernel.shape[0]

    @property
    def dim(self):
        """Width of the fused vector ``[y_conv | y_ssm | y_att]``."""
        return self.pw.shape[0] + self.c_out.shape[0] + self.wo.shape[0]

    @property
    def history(self):
        return (self.dw_kernel.shape[1] - 1) * self.dilation

    def replace(self, **changes):
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return EncoderParams(**kw)

    @classmethod
    def init(
        cls,
        seed,
        channels=1,
        kernel=5,
        d_c=8,
        d_ssm=8,
        d_u=4,
        d_o=4,
        n_heads=2,
        d_head=4,
        d_v=2,
        d_a=4,
        window=32,
        **scalars,
    ):
        """Deterministic seeded initialization.

        The depthwise kernels start near the identity and the attention
        query and key maps are tied, so logits are energy similarities: an
        impact concentrates the association on its own ringing, which is what
        the discrepancy term picks up.  Everything else is drawn at fan-in
        scale.
        """
        rng = np.random.default_rng(seed)
        ident = np.zeros(kernel)
        ident[0] = 1.0
        dw = ident[None, :] + 0.1 * rng.standard_normal((channels, kernel))
        dim = d_c + d_o + d_a

        def fan(shape, fan_in, gain=1.0):
            return gain * rng.standard_normal(shape) / np.sqrt(fan_in)

        wq = fan((n_heads, d_head, d_c), d_c)
        return cls(
            dw_kernel=dw,
            pw=fan((d_c, channels), channels),
            pw_bias=np.zeros(d_c),
            eta=rng.uniform(-1.0, 2.0, d_ssm),
            mix_u=fan((d_u, d_c), d_c),
            b_c=fan((d_ssm, d_u), d_u),
            c_out=fan((d_o, d_ssm), d_ssm),
            gate_w=fan((d_c,), d_c, 0.5),
            wq=wq,
            wk=wq,
            wv=fan((n_heads, d_v, d_c), d_c),
            wo=fan((d_a, n_heads * d_v), n_heads * d_v),
            w_gamma=fan((dim, dim), dim),
            b_gamma=np.zeros(dim),
            w_f=fan((dim, dim), dim),
            w_evid=fan((dim,), dim, 0.05),
            window=window,
            **scalars,
        )

    @classmethod
    def impulse(cls, channels=1, crest=2.0, gate_gain=10.0, peak_sharpness=0.5, mean_samples=256, rect_gain=4.0, bias=3.0, window=32, lambda_disc=0.0):
        """Hand-built weights that make the scorer a crest-factor detector.

        The stem full-wave rectifies each channel (``gelu(gx) + gelu(-gx)``)
        and carries one constant feature from its bias.  The SSM keeps a slow
        mean of the rectified amplitude over about ``mean_samples`` samples;
        attention, queried by the constant feature, returns a soft peak of the
        same amplitude over the last ``window`` lags.  One fusion gate opens
        when ``peak > crest * mean`` and the evidence reads it out as
        ``1 + gamma``.  The gate compares a ratio, so on normalized input the
        evidence tracks impulsiveness rather than power.  The rectifier is
        quadratic near zero, so this holds only for inputs near unit scale.
        """
        d_c, d_ssm, d_u, d_o, n_h, d_head, d_v, d_a = 8, 8, 4, 4, 2, 4, 2, 4
        if 2 * channels + 1 > d_c:
            raise ParameterError(f"impulse weights support at most {(d_c - 1) // 2} channels")
        dim = d_c + d_o + d_a
        delta = 0.05
        dw = np.zeros((channels, 5))
        dw[:, 0] = 1.0
        pw = np.zeros((d_c, channels))
        pw_bias = np.zeros(d_c)
        rect = []
        for c in range(channels):
            pw[2 * c, c] = rect_gain
            pw[2 * c + 1, c] = -rect_gain
            rect += [2 * c, 2 * c + 1]
        const = 2 * channels
        pw_bias[const] = bias
        c0 = 0.5 * bias * (1.0 + math.tanh(0.7978845608028654 * (bias + 0.044715 * bias**3)))

        # ZOH with A_c = -rate has unit DC gain when B_c = rate
        rate = 1.0 / (mean_samples * delta)
        eta = np.full(d_ssm, math.log(math.expm1(rate)))
        mix_u = np.zeros((d_u, d_c))
        mix_u[0, rect] = 1.0 / rect_gain
        b_c = np.zeros((d_ssm, d_u))
        b_c[0, 0] = rate
        c_out = np.zeros((d_o, d_ssm))
        c_out[0, 0] = 1.0

        wq = np.zeros((n_h, d_head, d_c))
        wk = np.zeros_like(wq)
        wv = np.zeros((n_h, d_v, d_c))
        for h in range(n_h):
            wq[h, 0, const] = peak_sharpness * math.sqrt(d_head) / c0
            wk[h, 0, rect] = 1.0 / rect_gain
            wv[h, 0, rect] = 1.0 / rect_gain
        wo = np.zeros((d_a, n_h * d_v))
        wo[0, ::d_v] = 1.0 / n_h

        peak, mean = d_c + d_o, d_c
        w_gamma = np.zeros((dim, dim))
        b_gamma = np.full(dim, -30.0)  # every other gate closed: identity path
        w_gamma[const, peak] = gate_gain
        w_gamma[const, mean] = -gate_gain * crest
        b_gamma[const] = 0.0
        w_f = np.zeros((dim, dim))
        w_f[const, const] = 2.0
        w_evid = np.zeros(dim)
        w_evid[const] = 1.0 / c0
        return cls(
            dw_kernel=dw,
            pw=pw,
            pw_bias=pw_bias,
            eta=eta,
            mix_u=mix_u,
            b_c=b_c,
            c_out=c_out,
            gate_w=np.zeros(d_c),
            wq=wq,
            wk=wk,
            wv=wv,
            wo=wo,
            w_gamma=w_gamma,
            b_gamma=b_gamma,
            w_f=w_f,
            w_evid=w_evid,
            delta=delta,
            window=window,
            lambda_disc=lambda_disc,
        )

    def to_json(self):
        return {
            "format": FORMAT,
            "shapes": {name: list(getattr(self, name).shape) for name in ARRAY_FIELDS},
            "arrays": {name: getattr(self, name).ravel().tolist() for name in ARRAY_FIELDS},
            "scalars": {name: getattr(self, name) for name in SCALAR_FIELDS},
        }

    @classmethod
    def from_json(cls, obj):
        if obj.get("format") != FORMAT:
            raise ParameterError(f"unsupported parameter format {obj.get('format')!r}")
        kw = {}
        for name in ARRAY_FIELDS:
            shape = tuple(obj["shapes"][name])
            flat = np.asarray(obj["arrays"][name], dtype=np.float64)
            if flat.size != int(np.prod(shape)):
                raise ShapeError(f"{name}: {flat.size} values do not fill shape {shape}")
            kw[name] = flat.reshape(shape)
        kw.update(obj.get("scalars", {}))
        return cls(**kw)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


def resolve_params(spec, channels):
    """Parameters from ``"seed:<n>"``, ``"impulse"`` or a JSON file path."""
    if isinstance(spec, EncoderParams):
        return spec
    spec = str(spec)
    if spec.startswith("seed:"):
        try:
            seed = int(spec.split(":", 1)[1])
        except ValueError:
            raise ParameterError(f"bad seed in {spec!r}") from None
        return EncoderParams.init(seed, channels=channels)
    if spec == "impulse":
        return EncoderParams.impulse(channels=channels)
    params = EncoderParams.load(spec)
    if params.channels != channels:
        raise ShapeError(f"parameters expect {params.channels} channels, data has {channels}")
    return params
