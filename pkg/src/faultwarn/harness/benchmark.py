"""Desk-scale synthetic benchmark: calibrate once, replay across noise levels."""

from dataclasses import dataclass, field

from ..physics import BearingGeometry
from ..signal import SynthSpec, synth_bearing
from .config import ReplayConfig
from .evaluation import RunRecord, build_report
from .replay import RunData, calibrate, replay

GEOMETRY = BearingGeometry(ball_count=9, ball_diameter=7.94, pitch_diameter=38.5, contact_angle=0.0)


@dataclass(frozen=True)
class BenchmarkSpec:
    n_calib: int = 4
    calib_s: float = 30.0
    n_fault: int = 8
    n_healthy: int = 4
    test_s: float = 12.0
    onset_s: float = 4.0
    ramp_s: float = 4.0
    fault: str = "BPFO"
    shaft_hz: float = 29.95
    channels: int = 2
    noise_level: float = 0.2
    impulse_amplitude: float = 1.0
    seed: int = 0
    geometry: BearingGeometry = field(default=GEOMETRY)

    def synth(self, fault, duration, seed):
        return SynthSpec(
            self.geometry,
            fault=fault,
            onset=self.onset_s if fault != "none" else 0.0,
            duration=duration,
            impulse_amplitude=self.impulse_amplitude,
            seed=seed,
            shaft_hz=self.shaft_hz,
            channels=self.channels,
            noise_level=self.noise_level,
            ramp_s=self.ramp_s,
        )

    def runs(self):
        """``(calib, test)`` lists of :class:`RunData`; seeds never repeat across runs."""
        base = 1000 * self.seed
        calib = []
        for i in range(self.n_calib):
            s, _ = synth_bearing(self.synth("none", self.calib_s, base + 100 + i))
            calib.append(RunData(f"calib{i:02d}", s))
        test = []
        for i in range(self.n_fault):
            s, t_phys = synth_bearing(self.synth(self.fault, self.test_s, base + 200 + i))
            test.append(RunData(f"fault{i:02d}", s, t_phys))
        for i in range(self.n_healthy):
            s, _ = synth_bearing(self.synth("none", self.test_s, base + 300 + i))
            test.append(RunData(f"healthy{i:02d}", s))
        return calib, test


def records_for(test, artifact, cfg):
    out = []
    for data in test:
        r = replay(data, artifact, cfg)
        out.append(
            RunRecord(data.run, data.t_phys, r.times, r.scores, r.burn_in, tuple(e.start for e in r.episodes), cfg.hop / data.series.sample_rate)
        )
    return out


def noise_sweep(snrs, reference_snr=20.0, spec=None, cfg=None):
    """Calibrate at ``reference_snr`` and evaluate every SNR with that artifact held fixed.

    Returns ``(artifact, {snr: report})``.
    """
    spec = spec or BenchmarkSpec()
    cfg = cfg or ReplayConfig(lambda_fa_per_hour=30.0)
    calib, test = spec.runs()
    artifact = calibrate(calib, cfg.replace(snr_db=reference_snr))
    reports = {}
    for snr in snrs:
        c = cfg.replace(snr_db=snr)
        report, _ = build_report(records_for(test, artifact, c), c)
        reports[snr] = report
    return artifact, reports
