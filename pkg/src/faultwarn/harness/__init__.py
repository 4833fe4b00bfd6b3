"""Leakage-safe orchestration: manifests, calibration, replay, reports, CLI."""

from .config import PhysicsConfig, ReplayConfig, load_config
from .evaluation import RunRecord, build_report
from .manifest import ManifestRun, SplitManifest, leakage_check, load_manifest
from .replay import CalibrationArtifact, LatencyReport, ReplayResult, RunData, calibrate, evaluate_run, replay

__all__ = [
    "CalibrationArtifact",
    "LatencyReport",
    "ManifestRun",
    "PhysicsConfig",
    "ReplayConfig",
    "ReplayResult",
    "RunData",
    "RunRecord",
    "SplitManifest",
    "build_report",
    "calibrate",
    "evaluate_run",
    "leakage_check",
    "load_config",
    "load_manifest",
    "replay",
]
