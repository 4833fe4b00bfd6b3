"""Calibration on healthy data and batch-1 streaming replay."""

import time
import zlib
from dataclasses import asdict, dataclass

import numpy as np

from .. import _accel
from ..decision import (
    AlarmEpisode,
    GpdTail,
    HysteresisPolicy,
    HysteresisState,
    RpmThresholdMap,
    build_rpm_map,
    default_delta,
    extract_episodes,
    fit_tail,
    hysteresis_step,
    merge_episodes,
    on_threshold,
)
from ..encoder.calibration import Calibrator, fit_healthy
from ..encoder.model import StreamingScorer, score_sequence
from ..encoder.params import resolve_params
from ..errors import CalibrationRequiredError, EmptyInputError, InsufficientDataError, ParameterError, ShapeError
from ..metrics import RunOutcome
from ..signal import NormStats, apply_norm, fit_norm, inject_noise_stream, n_windows

LATENCY_WARMUP = 100
# spacing inserted between calibration runs so no cluster spans two recordings
RUN_GAP_S = 3600.0


@dataclass(frozen=True)
class RunData:
    """One recording in memory; ``rpm`` is an optional ``(times, rpm)`` pair."""

    run: str
    series: object
    t_phys: float = None
    rpm: tuple = None


@dataclass(frozen=True)
class CalibrationArtifact:
    tail: GpdTail
    tau_on: float
    delta: float
    t_min_s: float
    dt_merge_s: float
    lambda_fa_per_hour: float
    norm: NormStats
    calibrator: Calibrator
    encoder: str
    window: int
    hop: int
    rpm_map: RpmThresholdMap = None
    evt_scale: str = "logit"

    def decision_value(self, evidence):
        """What the tail model and the automaton see for given evidence."""
        if self.evt_scale == "logit":
            return self.calibrator.logit(evidence)
        return self.calibrator(evidence)

    @property
    def policy(self):
        return HysteresisPolicy(self.tau_on, self.delta, self.t_min_s, self.dt_merge_s)

    def to_json(self):
        return {
            "u": self.tail.u,
            "xi": self.tail.xi,
            "beta": self.tail.beta,
            "lambda_u_per_hour": self.tail.lambda_u,
            "n_exceed": self.tail.n_exceed,
            "calib_hours": self.tail.calib_hours,
            "lambda_mode": self.tail.lambda_mode,
            "tau_on": self.tau_on,
            "delta": self.delta,
            "t_min_s": self.t_min_s,
            "dt_merge_s": self.dt_merge_s,
            "lambda_fa_per_hour": self.lambda_fa_per_hour,
            "rpm_bins": [] if self.rpm_map is None else self.rpm_map.to_json(),
            "norm": self.norm.to_json(),
            "calibrator": self.calibrator.to_json(),
            "encoder": self.encoder,
            "window": self.window,
            "hop": self.hop,
            "evt_scale": self.evt_scale,
        }

    @classmethod
    def from_json(cls, obj):
        try:
            tail = GpdTail(
                u=obj["u"],
                xi=obj["xi"],
                beta=obj["beta"],
                lambda_u=obj["lambda_u_per_hour"],
                n_exceed=obj["n_exceed"],
                calib_hours=obj["calib_hours"],
                lambda_mode=obj.get("lambda_mode", "intervals"),
            )
            bins = obj.get("rpm_bins") or []
            return cls(
                tail=tail,
                tau_on=obj["tau_on"],
                delta=obj["delta"],
                t_min_s=obj["t_min_s"],
                dt_merge_s=obj["dt_merge_s"],
                lambda_fa_per_hour=obj.get("lambda_fa_per_hour", float("nan")),
                norm=NormStats.from_json(obj["norm"]),
                calibrator=Calibrator.from_json(obj["calibrator"]),
                encoder=obj["encoder"],
                window=int(obj["window"]),
                hop=int(obj["hop"]),
                rpm_map=RpmThresholdMap.from_json(bins) if bins else None,
                evt_scale=obj.get("evt_scale", "logit"),
            )
        except KeyError as exc:
            raise CalibrationRequiredError(f"calibration artifact lacks field {exc.args[0]!r}") from None


def run_seed(seed, run):
    """Per-run noise seed: the config seed combined with a stable hash of the run id."""
    return int(seed) * 2**32 + zlib.crc32(str(run).encode())


def prepare(data, norm, cfg):
    """Normalize a run and apply the configured noise override."""
    x = apply_norm(norm, data.series.data)
    return inject_noise_stream(x, cfg.window, cfg.hop, cfg.snr_db, run_seed(cfg.seed, data.run))


def window_times(data, cfg):
    count = n_windows(len(data.series), cfg.window, cfg.hop)
    return data.series.time_of(np.arange(count) * cfg.hop + cfg.window)


def window_rpm(data, times):
    if data.rpm is None:
        raise InsufficientDataError(f"run {data.run}: rpm map requested but no rpm trace")
    t, r = data.rpm
    return np.interp(times, np.asarray(t, dtype=float), np.asarray(r, dtype=float))


def healthy_mask(times, t_phys, burn_in):
    keep = np.arange(times.size) >= burn_in
    if t_phys is not None:
        keep &= times < t_phys
    return keep


def calibrate(calib_runs, cfg, train_runs=(), params=None):
    """Fit normalization, score calibrator, tail model and hysteresis policy.

    Normalization statistics come from the training runs when there are any,
    otherwise from the healthy part of the calibration runs.  Only healthy
    windows after burn-in (and before onset, for runs that carry one) enter
    the tail fit.
    """
    calib_runs = list(calib_runs)
    if not calib_runs:
        raise EmptyInputError("no calibration runs")
    channels = calib_runs[0].series.channels
    params = resolve_params(params if params is not None else cfg.init, channels)
    if train_runs:
        norm = fit_norm([r.series for r in train_runs])
    else:
        blocks = []
        for r in calib_runs:
            x = r.series.data
            if r.t_phys is not None:
                x = x[:, : max(0, int((r.t_phys - r.series.start_time) * r.series.sample_rate))]
            blocks.append(x)
        norm = fit_norm(blocks)

    evid, times, rpms = [], [], []
    hours = 0.0
    offset = 0.0
    for r in calib_runs:
        if r.series.channels != channels:
            raise ShapeError(f"run {r.run} has {r.series.channels} channels, expected {channels}")
        x = prepare(r, norm, cfg)
        e = score_sequence(params, x, cfg.window, cfg.hop, backend=cfg.backend)
        t = window_times(r, cfg)
        keep = healthy_mask(t, r.t_phys, cfg.burn_in)
        evid.append(e[keep])
        times.append(t[keep] - t[0] + offset)
        if cfg.use_rpm_map:
            rpms.append(window_rpm(r, t)[keep])
        hours += keep.sum() * cfg.hop / r.series.sample_rate / 3600.0
        offset = times[-1][-1] + RUN_GAP_S if times[-1].size else offset
    e = np.concatenate(evid)
    t = np.concatenate(times)
    if e.size == 0:
        raise InsufficientDataError("no healthy calibration windows after burn-in")

    if cfg.calibrator == "healthy":
        calibrator = fit_healthy(e)
    else:
        calibrator = Calibrator("temperature", kappa=params.kappa, beta=params.beta)
    s = calibrator.logit(e) if cfg.evt_scale == "logit" else calibrator(e)

    tail = fit_tail(s, t, q=cfg.q, calib_hours=hours, mode=cfg.lambda_mode, dt_merge=cfg.dt_merge_s)
    tau_on = on_threshold(tail, cfg.lambda_fa_per_hour)
    delta = cfg.delta if cfg.delta is not None else default_delta(tail, tau_on)
    rpm_map = None
    if cfg.use_rpm_map:
        rpm_map = build_rpm_map(
            s, np.concatenate(rpms), t, cfg.rpm_edges, cfg.lambda_fa_per_hour, q=cfg.q, mode=cfg.lambda_mode, dt_merge=cfg.dt_merge_s
        )
    return CalibrationArtifact(
        tail=tail,
        tau_on=tau_on,
        delta=delta,
        t_min_s=cfg.t_min_s,
        dt_merge_s=cfg.dt_merge_s,
        lambda_fa_per_hour=cfg.lambda_fa_per_hour,
        norm=norm,
        calibrator=calibrator,
        encoder=str(cfg.init),
        window=cfg.window,
        hop=cfg.hop,
        rpm_map=rpm_map,
        evt_scale=cfg.evt_scale,
    )


@dataclass(frozen=True)
class LatencyReport:
    p50_ms: float
    p90_ms: float
    p99_ms: float
    windows_per_s: float
    n_windows: int
    warmup: int
    backend: str

    def to_json(self):
        return asdict(self)


def latency_report(seconds, backend, warmup=LATENCY_WARMUP):
    seconds = np.asarray(seconds, dtype=float)
    warmup = min(warmup, seconds.size // 2)
    body = seconds[warmup:]
    if body.size == 0:
        raise InsufficientDataError("no windows left after warm-up")
    p50, p90, p99 = np.percentile(body * 1e3, [50, 90, 99])
    return LatencyReport(float(p50), float(p90), float(p99), float(1.0 / body.mean()), int(body.size), int(warmup), backend)


@dataclass
class ReplayResult:
    run: str
    times: np.ndarray
    evidence: np.ndarray
    scores: np.ndarray
    alarm: np.ndarray
    episodes: list
    burn_in: int
    latency: LatencyReport = None


def replay(data, artifact, cfg, params=None):
    """Stream a run window by window at batch size one.

    Each window's new hop is pushed through the stateful scorer, mapped to a
    score, and fed to the alarm automaton; wall-clock time is taken around
    that whole path.  Burn-in windows are scored but never reach the
    automaton, so no episode can start inside burn-in.
    """
    if artifact is None:
        raise CalibrationRequiredError("replay needs a calibration artifact")
    if artifact.window != cfg.window or artifact.hop != cfg.hop:
        raise ParameterError("window/hop differ from the calibration artifact")
    params = resolve_params(params if params is not None else artifact.encoder, data.series.channels)
    x = prepare(data, artifact.norm, cfg)
    times = window_times(data, cfg)
    count = times.size
    if count == 0:
        raise InsufficientDataError(f"run {data.run} is shorter than one window")
    tau_on = None
    if artifact.evt_scale != cfg.evt_scale:
        raise ParameterError("evt_scale differs from the calibration artifact")
    if cfg.use_rpm_map:
        if artifact.rpm_map is None:
            raise CalibrationRequiredError("rpm map requested but the artifact has none")
        tau_on = artifact.rpm_map.lookup(window_rpm(data, times))
        tau_on = np.atleast_1d(tau_on)

    scorer = StreamingScorer(params, cfg.window, cfg.hop, backend=cfg.backend, calibrator=artifact.calibrator)
    policy = artifact.policy
    state = HysteresisState()
    evidence = np.empty(count)
    scores = np.empty(count)
    decision = np.empty(count)
    alarm = np.zeros(count, dtype=np.int8)
    elapsed = np.empty(count)
    clock = time.perf_counter
    for k in range(count):
        t0 = clock()
        ev, s = scorer.push(scorer.new_samples(x, k))
        d = float(artifact.decision_value(ev)) if artifact.evt_scale == "logit" else s
        if k >= cfg.burn_in:
            pol = policy if tau_on is None else HysteresisPolicy(tau_on[k], policy.delta, policy.t_min, policy.dt_merge)
            state, alarm[k] = hysteresis_step(state, pol, d, times[k])
        elapsed[k] = clock() - t0
        evidence[k] = ev
        scores[k] = s
        decision[k] = d
    b = min(cfg.burn_in, count)
    episodes = merge_episodes(extract_episodes(alarm[b:], times[b:], scores[b:]), policy.dt_merge)
    backend = cfg.backend or _accel.backend_name()
    return ReplayResult(data.run, times, evidence, scores, alarm, episodes, cfg.burn_in, latency_report(elapsed, backend))


def evaluate_run(episodes, t_phys, horizon, run="", start=None):
    """Lead-time outcome: the first episode starting at or after onset.

    Episodes starting earlier (including one still active at onset) are
    false episodes.
    """
    if start is not None and not start <= t_phys <= horizon:
        raise ParameterError(f"run {run}: onset {t_phys} outside [{start}, {horizon}]")
    if t_phys > horizon:
        raise ParameterError(f"run {run}: onset {t_phys} after horizon {horizon}")
    starts = sorted(ep.start if isinstance(ep, AlarmEpisode) else float(ep) for ep in episodes)
    hits = [s for s in starts if s >= t_phys]
    n_false = sum(1 for s in starts if s < t_phys)
    return RunOutcome(run=str(run), t_phys=float(t_phys), horizon=float(horizon), t0=hits[0] if hits else None, n_false=n_false)
