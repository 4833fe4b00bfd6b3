"""Command-line entry point: synth, calibrate, stream, evaluate, bench."""

import argparse
import csv
import datetime
import json
import platform
import sys
from pathlib import Path

import numpy as np

from .. import __version__, _accel
from ..errors import (
    BinCalibrationError,
    CalibrationRequiredError,
    EmptyInputError,
    FaultWarnError,
    FitError,
    InsufficientDataError,
    LeakageError,
    ValidityDomainError,
)
from ..metrics import write_csv, write_report
from ..signal import SynthSpec, read_series, synth_bearing, write_series
from .config import load_config
from .evaluation import RunRecord, build_report
from .manifest import SplitManifest, ManifestRun, leakage_check, load_manifest
from .replay import CalibrationArtifact, RunData, calibrate, replay

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CALIBRATION = 3
EXIT_IO = 4

CALIBRATION_ERRORS = (InsufficientDataError, FitError, ValidityDomainError, BinCalibrationError, CalibrationRequiredError)


def exit_code(exc):
    if isinstance(exc, CALIBRATION_ERRORS):
        return EXIT_CALIBRATION
    if isinstance(exc, (OSError, json.JSONDecodeError, UnicodeDecodeError)):
        return EXIT_IO
    if isinstance(exc, (FaultWarnError, ValueError, KeyError, TypeError)):
        return EXIT_VALIDATION
    raise exc


# --------------------------------------------------------------------------
# Helpers
# --------------------------------------------------------------------------


def _read_rpm(path):
    if path is None:
        return None
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return arr[:, 0], arr[:, 1]


def _run_data(entry):
    return RunData(entry.run, read_series(entry.path), entry.t_phys, _read_rpm(entry.rpm_path))


def _checked_manifest(path):
    manifest = load_manifest(path)
    violations = leakage_check(manifest)
    if violations:
        raise LeakageError(violations)
    return manifest


def _scores_path(episodes_path):
    p = Path(episodes_path)
    return p.with_name(p.stem + ".scores.csv")


def _write_episodes(result, out):
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        for ep in result.episodes:
            fh.write(json.dumps(ep.to_json(result.run), sort_keys=False) + "\n")
    with open(_scores_path(out), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["window", "time_s", "evidence", "score", "alarm", "burn_in"])
        for k in range(result.times.size):
            w.writerow([k, repr(float(result.times[k])), repr(float(result.evidence[k])), repr(float(result.scores[k])), int(result.alarm[k]), int(k < result.burn_in)])


def _read_record(run, t_phys, directory, hop_s):
    eps_path = Path(directory) / f"{run}.jsonl"
    starts = []
    for line in eps_path.read_text().splitlines():
        if line.strip():
            starts.append(float(json.loads(line)["start_s"]))
    rows = np.loadtxt(_scores_path(eps_path), delimiter=",", skiprows=1, ndmin=2)
    if rows.shape[0] == 0:
        raise EmptyInputError(f"run {run}: no scored windows")
    burn = int(rows[:, 5].sum())
    return RunRecord(run, t_phys, rows[:, 1], rows[:, 3], burn, tuple(starts), hop_s)


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_synth(args):
    spec = json.loads(Path(args.spec).read_text())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    suffix = "." + args.format
    if "runs" not in spec:
        series, t_phys = synth_bearing(SynthSpec.from_json(spec))
        write_series(series, out / f"run{suffix}")
        (out / "truth.json").write_text(json.dumps({"run": "run", "t_phys": t_phys}) + "\n")
        return EXIT_OK
    defaults = spec.get("defaults", {})
    runs = []
    for i, entry in enumerate(spec["runs"]):
        entry = dict(entry)
        meta = {k: entry.pop(k) for k in ("run", "split", "machine", "load", "speed", "sampling") if k in entry}
        cfg = {**defaults, **entry}
        cfg.setdefault("seed", i)
        synth = SynthSpec.from_json(cfg)
        series, t_phys = synth_bearing(synth)
        name = str(meta.get("run", f"run{i:03d}"))
        write_series(series, out / f"{name}{suffix}")
        runs.append(
            ManifestRun(
                run=name,
                machine=str(meta.get("machine", name)),
                load=str(meta.get("load", "0")),
                speed=str(meta.get("speed", synth.shaft_hz)),
                sampling=str(meta.get("sampling", synth.sample_rate)),
                split=meta.get("split", "test"),
                path=out / f"{name}{suffix}",
                t_phys=t_phys,
            )
        )
    SplitManifest(runs=tuple(runs), root=out).save(out / "manifest.json")
    return EXIT_OK


def cmd_calibrate(args, cfg):
    manifest = _checked_manifest(args.manifest)
    calib = [_run_data(r) for r in manifest.split("calib")]
    train = [_run_data(r) for r in manifest.split("train") if r.t_phys is None]
    artifact = calibrate(calib, cfg, train_runs=train)
    Path(args.out).write_text(json.dumps(artifact.to_json(), indent=2) + "\n")
    return EXIT_OK


def _load_artifact(path):
    if path is None or not Path(path).exists():
        raise CalibrationRequiredError(f"calibration artifact {path} not found; run 'calibrate' first")
    return CalibrationArtifact.from_json(json.loads(Path(path).read_text()))


def _resolve_run(args):
    if args.manifest is not None:
        manifest = _checked_manifest(args.manifest)
        for r in manifest.runs:
            if r.run == args.run:
                return _run_data(r)
        raise EmptyInputError(f"run {args.run!r} not in manifest")
    path = Path(args.run)
    return RunData(path.stem, read_series(path), None, _read_rpm(args.rpm))


def cmd_stream(args, cfg):
    artifact = _load_artifact(args.calib)
    data = _resolve_run(args)
    result = replay(data, artifact, cfg)
    _write_episodes(result, args.out)
    return EXIT_OK


def cmd_evaluate(args, cfg):
    manifest = _checked_manifest(args.manifest)
    tests = manifest.split("test")
    if not tests:
        raise EmptyInputError("manifest has no test runs")
    records = []
    for r in tests:
        meta = json.loads(r.path.with_suffix(".json").read_text()) if r.path.suffix != ".csv" else None
        fs = meta["sample_rate_hz"] if meta else read_series(r.path).sample_rate
        records.append(_read_record(r.run, r.t_phys, args.episodes, cfg.hop / fs))
    report, tables = build_report(records, cfg)
    report["config"] = cfg.to_json()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report(report, out)
    write_csv(tables["reliability"], out.with_name(out.stem + ".reliability.csv"))
    write_csv(tables["km"], out.with_name(out.stem + ".km.csv"))
    meta = {
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "version": __version__,
        "backend": cfg.backend or _accel.backend_name(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    out.with_name(out.stem + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return EXIT_OK


def cmd_bench(args, cfg):
    artifact = _load_artifact(args.calib)
    data = _resolve_run(args)
    result = replay(data, artifact, cfg)
    text = json.dumps(result.latency.to_json(), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="faultwarn", description="Streaming bearing-fault early warning.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate synthetic bearing runs")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("f32", "csv"), default="f32")

    def common(sp):
        sp.add_argument("--config", default=None, help="JSON config document")
        sp.add_argument("--init", default=None, help="encoder parameters: seed:<n> or a JSON file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--snr-db", type=float, default=None)
        sp.add_argument("--backend", choices=("numba", "numpy"), default=None)

    c = sub.add_parser("calibrate", help="fit the alarm threshold on calibration runs")
    c.add_argument("--manifest", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--lambda-fa", type=float, default=None, help="target false alarms per hour")
    common(c)

    for name, help_ in (("stream", "replay one run and write its episodes"), ("bench", "measure per-window latency")):
        r = sub.add_parser(name, help=help_)
        r.add_argument("--run", required=True, help="series file, or a run id with --manifest")
        r.add_argument("--manifest", default=None)
        r.add_argument("--rpm", default=None, help="rpm trace CSV (time_s,rpm)")
        r.add_argument("--calib", required=name == "stream", default=None)
        r.add_argument("--out", required=name == "stream", default=None)
        common(r)

    e = sub.add_parser("evaluate", help="aggregate episodes into the metric report")
    e.add_argument("--manifest", required=True)
    e.add_argument("--episodes", required=True, help="directory of <run>.jsonl episode files")
    e.add_argument("--out", required=True)
    common(e)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return cmd_synth(args)
        cfg = load_config(
            args.config,
            init=args.init,
            seed=args.seed,
            snr_db=args.snr_db,
            backend=args.backend,
            lambda_fa_per_hour=getattr(args, "lambda_fa", None),
        )
        handler = {"calibrate": cmd_calibrate, "stream": cmd_stream, "evaluate": cmd_evaluate, "bench": cmd_bench}[args.command]
        return handler(args, cfg)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        code = exit_code(exc)
        print(f"faultwarn {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
