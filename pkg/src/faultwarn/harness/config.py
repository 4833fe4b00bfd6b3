"""Single-document run configuration; every key has a default."""

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..decision import DEFAULT_DT_MERGE_S, DEFAULT_Q, DEFAULT_T_MIN_S, LAMBDA_MODES
from ..errors import ParameterError
from ..physics import DEFAULT_WEIGHT_DECAY, BearingGeometry
from ..signal import DEFAULT_HOP, DEFAULT_L


@dataclass(frozen=True)
class PhysicsConfig:
    """Bearing geometry plus order-band mask settings."""

    ball_count: int = 9
    ball_diameter: float = 7.94
    pitch_diameter: float = 38.5
    contact_angle_rad: float = 0.0
    sidebands_K: int = 1
    sigma_hz: float = None  # None: two grid steps
    weight_decay: float = DEFAULT_WEIGHT_DECAY

    @property
    def geometry(self):
        return BearingGeometry(self.ball_count, self.ball_diameter, self.pitch_diameter, self.contact_angle_rad)

    def mask_kwargs(self):
        return {"sidebands": self.sidebands_K, "sigma": self.sigma_hz, "weight_decay": self.weight_decay}


@dataclass(frozen=True)
class ReplayConfig:
    window: int = DEFAULT_L
    hop: int = DEFAULT_HOP
    burn_in: int = 8  # windows
    lambda_fa_per_hour: float = 1.0
    q: float = DEFAULT_Q
    lambda_mode: str = "intervals"
    delta: float = None  # None: a quarter of (tau_on - u)
    t_min_s: float = DEFAULT_T_MIN_S
    dt_merge_s: float = DEFAULT_DT_MERGE_S
    snr_db: float = None
    seed: int = 0
    init: str = "impulse"
    evt_scale: str = "logit"  # tail and hysteresis on the score's log-odds, or on the score itself
    calibrator: str = "healthy"  # "healthy" (fit on calib windows) or "params" (kappa, beta from the encoder file)
    use_rpm_map: bool = False
    rpm_edges: tuple = ()
    backend: str = None
    n_boot: int = 1000
    ci_level: float = 0.95
    ece_bins: int = 10
    ews_window_s: float = 10.0
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)

    def __post_init__(self):
        if self.burn_in < 0:
            raise ParameterError("burn-in must be >= 0 windows")
        if not self.lambda_fa_per_hour > 0:
            raise ParameterError("target false-alarm intensity must be positive")
        if not 1 <= self.hop <= self.window:
            raise ParameterError("need 1 <= hop <= window")
        if not 0 < self.q < 1:
            raise ParameterError("POT quantile must lie in (0, 1)")
        if self.lambda_mode not in LAMBDA_MODES:
            raise ParameterError(f"lambda_mode must be one of {LAMBDA_MODES}")
        if self.evt_scale not in ("logit", "score"):
            raise ParameterError("evt_scale must be 'logit' or 'score'")
        if self.calibrator not in ("healthy", "params"):
            raise ParameterError("calibrator must be 'healthy' or 'params'")
        if self.use_rpm_map and len(self.rpm_edges) < 2:
            raise ParameterError("the rpm map needs at least two rpm_edges")
        if self.backend not in (None, "numba", "numpy"):
            raise ParameterError("backend must be 'numba' or 'numpy'")

    @classmethod
    def from_json(cls, obj):
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(obj)
        if "physics" in kw:
            pk = {f.name for f in fields(PhysicsConfig)}
            bad = set(kw["physics"]) - pk
            if bad:
                raise ParameterError(f"unknown physics keys: {sorted(bad)}")
            kw["physics"] = PhysicsConfig(**kw["physics"])
        if "rpm_edges" in kw:
            kw["rpm_edges"] = tuple(kw["rpm_edges"])
        return cls(**kw)

    def to_json(self):
        out = asdict(self)
        out["rpm_edges"] = list(self.rpm_edges)
        return out

    def replace(self, **changes):
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update({k: v for k, v in changes.items() if v is not None})
        return ReplayConfig(**kw)


def load_config(path=None, **overrides):
    obj = {} if path is None else json.loads(Path(path).read_text())
    return ReplayConfig.from_json(obj).replace(**overrides)
