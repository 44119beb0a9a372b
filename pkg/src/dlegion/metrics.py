"""Event aggregation, reports, and JSON/CSV serialization."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable

from .workloads import STAGES

SI = {"T": 1e12, "P": 1e15, "E": 1e18}

# integer counters carried by events and summed by aggregation
COUNTERS = (
    "cycles", "ops", "weight_bytes", "activation_bytes", "psum_bytes", "output_bytes",
    "pe_active_cycles", "pe_cycles", "windows", "skipped_windows", "deactivated_core_cycles",
)
_LIMIT = 1 << 63


class ReportError(ValueError):
    """Inconsistent event log or malformed serialized report."""


@dataclass(frozen=True)
class Event:
    """Counters for one slice of execution (typically one phase of one stage)."""

    stage: str
    cycles: int = 0
    ops: int = 0
    weight_bytes: int = 0
    activation_bytes: int = 0
    psum_bytes: int = 0
    output_bytes: int = 0
    pe_active_cycles: int = 0
    pe_cycles: int = 0
    windows: int = 0
    skipped_windows: int = 0
    deactivated_core_cycles: int = 0


@dataclass(frozen=True)
class StageMetrics:
    cycles: int = 0
    ops: int = 0
    weight_bytes: int = 0
    activation_bytes: int = 0
    psum_bytes: int = 0
    output_bytes: int = 0
    pe_active_cycles: int = 0
    pe_cycles: int = 0
    windows: int = 0
    skipped_windows: int = 0
    deactivated_core_cycles: int = 0
    wall_time_s: float = 0.0
    throughput_ops: float = 0.0
    pe_active_fraction: float = 0.0

    @property
    def memory_bytes(self) -> int:
        """Off-chip weight plus activation traffic."""
        return self.weight_bytes + self.activation_bytes

    @classmethod
    def from_counts(cls, counts: dict[str, int], frequency: float) -> "StageMetrics":
        wall = counts["cycles"] / frequency
        thr = counts["ops"] / wall if wall else 0.0
        frac = counts["pe_active_cycles"] / counts["pe_cycles"] if counts["pe_cycles"] else 0.0
        return cls(**counts, wall_time_s=wall, throughput_ops=thr, pe_active_fraction=frac)


@dataclass(frozen=True)
class RunManifest:
    subcommand: str = ""
    config_paths: tuple[str, ...] = ()
    seed: int = 0
    output_paths: tuple[str, ...] = ()
    tool_version: str = ""
    config_hash: str = ""


@dataclass(frozen=True)
class SimReport:
    arch: str
    model: str
    frequency: float
    stages: dict[str, StageMetrics]
    total: StageMetrics
    manifest: RunManifest = field(default_factory=RunManifest)
    extra: dict = field(default_factory=dict)

    def stage(self, name: str) -> StageMetrics:
        return self.stages.get(name, StageMetrics())


def aggregate(events: Iterable[Event], frequency: float, arch: str = "", model: str = "",
              manifest: RunManifest | None = None, extra: dict | None = None) -> SimReport:
    """Sum events per stage. Order of ``events`` does not matter."""
    per: dict[str, dict[str, int]] = {}
    for ev in events:
        if ev.stage not in {s.value for s in STAGES}:
            raise ReportError(f"unknown stage tag {ev.stage!r}")
        row = per.setdefault(ev.stage, dict.fromkeys(COUNTERS, 0))
        for name in COUNTERS:
            v = getattr(ev, name)
            if v < 0:
                raise ReportError(f"negative {name} ({v}) in {ev.stage} event")
            row[name] += int(v)
            if row[name] >= _LIMIT:
                raise ReportError(f"{name} overflows 64 bits in {ev.stage}")
    stages = {s.value: StageMetrics.from_counts(per[s.value], frequency)
              for s in STAGES if s.value in per}
    tot = {name: sum(per[s][name] for s in per) for name in COUNTERS}
    return SimReport(arch, model, frequency, stages, StageMetrics.from_counts(tot, frequency),
                     manifest or RunManifest(), dict(extra or {}))


# -- serialization ------------------------------------------------------------

METRIC_FIELDS = tuple(f.name for f in fields(StageMetrics))


def to_dict(report: SimReport) -> dict:
    return {
        "arch": report.arch,
        "model": report.model,
        "frequency": report.frequency,
        "manifest": asdict(report.manifest),
        "stages": {k: asdict(v) for k, v in report.stages.items()},
        "total": asdict(report.total),
        "extra": report.extra,
    }


def from_dict(data: dict) -> SimReport:
    try:
        man = data.get("manifest", {})
        manifest = RunManifest(**{**man, "config_paths": tuple(man.get("config_paths", ())),
                                  "output_paths": tuple(man.get("output_paths", ()))})
        stages = {k: StageMetrics(**v) for k, v in data["stages"].items()}
        return SimReport(data["arch"], data["model"], data["frequency"], stages,
                         StageMetrics(**data["total"]), manifest, data.get("extra", {}))
    except (KeyError, TypeError) as exc:
        raise ReportError(f"malformed report: {exc}") from exc


def _csv(report: SimReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["arch", "model", "frequency", "stage", *METRIC_FIELDS])
    rows = [*report.stages.items(), ("total", report.total)]
    for name, m in rows:
        w.writerow([report.arch, report.model, repr(report.frequency), name,
                    *(repr(getattr(m, f)) for f in METRIC_FIELDS)])
    return buf.getvalue()


def emit(report: SimReport, fmt: str = "json") -> str:
    """Serialize with stable field order; floats are written with ``repr`` so
    parsing returns the identical values."""
    if fmt == "json":
        return json.dumps(to_dict(report), indent=2) + "\n"
    if fmt == "csv":
        return _csv(report)
    raise ReportError(f"unsupported format {fmt!r}; use json or csv")


def _num(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def parse(text: str, fmt: str = "json") -> SimReport:
    """Inverse of :func:`emit`. CSV carries no manifest."""
    if fmt == "json":
        return from_dict(json.loads(text))
    if fmt != "csv":
        raise ReportError(f"unsupported format {fmt!r}; use json or csv")
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or rows[-1]["stage"] != "total":
        raise ReportError("csv report needs stage rows followed by a total row")
    metrics = {r["stage"]: StageMetrics(**{f: _num(r[f]) for f in METRIC_FIELDS}) for r in rows}
    total = metrics.pop("total")
    return SimReport(rows[0]["arch"], rows[0]["model"], float(rows[0]["frequency"]), metrics, total)


# -- cross-architecture comparison -------------------------------------------

RATIO_METRICS = ("cycles", "wall_time_s", "throughput_ops", "memory_bytes", "weight_bytes",
                 "activation_bytes", "psum_bytes", "ops")


def metric(m: StageMetrics, name: str) -> float:
    return getattr(m, name)


def ratio(a: float, b: float) -> float:
    if b == 0:
        return float("nan") if a == 0 else float("inf")
    return a / b


def ratio_table(base: SimReport, other: SimReport, metrics: Iterable[str] = RATIO_METRICS) -> list[dict]:
    """Rows of base/other per stage and total: how many times larger the base is.

    For latency or traffic a value above 1 means ``other`` is better.
    """
    metrics = tuple(metrics)
    names = [s.value for s in STAGES if s.value in base.stages or s.value in other.stages]
    rows = []
    for name in [*names, "total"]:
        a = base.total if name == "total" else base.stage(name)
        b = other.total if name == "total" else other.stage(name)
        row = {"stage": name, "base": base.arch, "other": other.arch}
        for mname in metrics:
            row[mname] = ratio(metric(a, mname), metric(b, mname))
        rows.append(row)
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def format_table(rows: list[dict]) -> str:
    """Fixed-width text table for terminals."""
    if not rows:
        return ""
    cols = list(rows[0])

    def cell(v):
        if isinstance(v, float):
            return f"{v:.4g}"
        return str(v)

    body = [[cell(r.get(c, "")) for c in cols] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines) + "\n"
