"""Run manifests and split-leakage checks."""

import json
from dataclasses import dataclass
from pathlib import Path

from ..errors import ManifestError

SPLITS = ("train", "calib", "test")
REQUIRED = ("run", "machine", "load", "speed", "sampling", "split", "path")


@dataclass(frozen=True)
class ManifestRun:
    run: str
    machine: str
    load: str
    speed: str
    sampling: str
    split: str
    path: Path
    t_phys: float = None
    rpm_path: Path = None
    start_s: float = None  # absolute position of the recording, when known
    end_s: float = None
    line: int = None

    @property
    def op_tuple(self):
        return (self.machine, self.load, self.speed, self.sampling)

    @property
    def faulty(self):
        return self.t_phys is not None


@dataclass(frozen=True)
class SplitManifest:
    runs: tuple
    root: Path

    def split(self, name):
        return [r for r in self.runs if r.split == name]

    def to_json(self):
        out = []
        for r in self.runs:
            d = {k: getattr(r, k) for k in REQUIRED}
            d["path"] = str(r.path.relative_to(self.root) if r.path.is_relative_to(self.root) else r.path)
            for k in ("t_phys", "start_s", "end_s"):
                if getattr(r, k) is not None:
                    d[k] = getattr(r, k)
            if r.rpm_path is not None:
                d["rpm_path"] = str(r.rpm_path.relative_to(self.root) if r.rpm_path.is_relative_to(self.root) else r.rpm_path)
            out.append(d)
        return {"runs": out}

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")


def _float_or_none(entry, key, line):
    v = entry.get(key)
    if v is None:
        return None
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ManifestError(f"expected a number, got {v!r}", line=line, field=key) from None


def _parse_entry(entry, line, root):
    if not isinstance(entry, dict):
        raise ManifestError("run entry must be an object", line=line)
    for key in REQUIRED:
        if key not in entry:
            raise ManifestError("missing required field", line=line, field=key)
    if entry["split"] not in SPLITS:
        raise ManifestError(f"split must be one of {SPLITS}, got {entry['split']!r}", line=line, field="split")
    path = Path(entry["path"])
    rpm = entry.get("rpm_path")
    return ManifestRun(
        run=str(entry["run"]),
        machine=str(entry["machine"]),
        load=str(entry["load"]),
        speed=str(entry["speed"]),
        sampling=str(entry["sampling"]),
        split=entry["split"],
        path=path if path.is_absolute() else root / path,
        t_phys=_float_or_none(entry, "t_phys", line),
        rpm_path=None if rpm is None else (Path(rpm) if Path(rpm).is_absolute() else root / rpm),
        start_s=_float_or_none(entry, "start_s", line),
        end_s=_float_or_none(entry, "end_s", line),
        line=line,
    )


def load_manifest(path):
    """Parse a manifest: a JSON document ``{"runs": [...]}`` or JSON lines.

    Errors name the offending line (JSON lines) or the 1-based run entry.
    """
    path = Path(path)
    text = path.read_text()
    root = path.parent
    entries = []
    if path.suffix == ".jsonl":
        for i, raw in enumerate(text.splitlines(), start=1):
            if not raw.strip():
                continue
            try:
                entries.append((json.loads(raw), i))
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON: {exc.msg}", line=i) from None
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
        if not isinstance(doc, dict) or not isinstance(doc.get("runs"), list):
            raise ManifestError("manifest must be an object with a 'runs' list", field="runs")
        entries = [(e, i) for i, e in enumerate(doc["runs"], start=1)]
    runs = tuple(_parse_entry(e, line, root) for e, line in entries)
    seen = {}
    for r in runs:
        if r.run in seen:
            raise ManifestError(f"duplicate run id {r.run!r}", line=r.line, field="run")
        seen[r.run] = r
    return SplitManifest(runs=runs, root=root)


def leakage_check(manifest):
    """List every leakage violation; an empty list means the splits are clean.

    Checks: an operating tuple (machine, load, speed, sampling) used by more
    than one split; one recording (same file, overlapping time span) shared
    across splits; calibration data recorded at or after the start of a test
    horizon on the same machine.
    """
    out = []
    by_tuple = {}
    for r in manifest.runs:
        by_tuple.setdefault(r.op_tuple, set()).add(r.split)
    for tup, splits in sorted(by_tuple.items()):
        if len(splits) > 1:
            out.append(f"operating tuple {tup} appears in splits {sorted(splits)}")

    runs = list(manifest.runs)
    for i, a in enumerate(runs):
        for b in runs[i + 1 :]:
            if a.split == b.split or a.path.resolve() != b.path.resolve():
                continue
            if a.start_s is None or b.start_s is None or a.end_s is None or b.end_s is None:
                out.append(f"runs {a.run!r} ({a.split}) and {b.run!r} ({b.split}) share recording {a.path.name}")
            elif a.start_s < b.end_s and b.start_s < a.end_s:
                out.append(f"runs {a.run!r} ({a.split}) and {b.run!r} ({b.split}) overlap in {a.path.name}")

    horizon = {}
    for r in manifest.split("test"):
        if r.start_s is not None:
            horizon[r.machine] = min(horizon.get(r.machine, r.start_s), r.start_s)
    for r in manifest.split("calib"):
        h = horizon.get(r.machine)
        if h is None or r.start_s is None:
            continue
        end = r.end_s if r.end_s is not None else r.start_s
        if r.start_s >= h or end > h:
            out.append(f"calib run {r.run!r}: calibration after horizon (machine {r.machine}, test starts at {h:g} s)")
    return out
