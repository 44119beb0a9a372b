"""Run architectures on models and build comparison tables."""

from __future__ import annotations

from dataclasses import dataclass

from . import __version__
from .baselines import run_baseline
from .config import ArchConfig, ModelConfig, config_hash
from .legion import ZeroTileBook, orchestrate, simulate
from .legion.simulator import SimResult
from .metrics import RunManifest, SimReport, ratio_table
from .workloads import Stage, derive_attention_workloads


@dataclass
class RunOptions:
    policy: str = "partition_n"
    split_idle: bool = True
    functional: bool = False
    bw_stall: bool = False
    seed: int = 0
    fused_proj: bool = False


def manifest_for(subcommand: str, arch: ArchConfig, model: ModelConfig, seed: int = 0,
                 config_paths=(), output_paths=()) -> RunManifest:
    return RunManifest(subcommand, tuple(config_paths), seed, tuple(output_paths), __version__,
                       config_hash(arch, model))


def run_dlegion(arch: ArchConfig, model: ModelConfig, opts: RunOptions | None = None,
                ztbs: dict[Stage, ZeroTileBook] | None = None,
                manifest: RunManifest | None = None) -> SimResult:
    opts = opts or RunOptions()
    wset = derive_attention_workloads(model, opts.fused_proj)
    assignment = orchestrate(wset, arch, opts.policy, opts.split_idle, ztbs)
    return simulate(assignment, arch, functional=opts.functional, bw_stall=opts.bw_stall,
                    seed=opts.seed, model_name=model.name, manifest=manifest,
                    activation_bits=model.activation_bits)


def run(arch: ArchConfig, model: ModelConfig, opts: RunOptions | None = None,
        manifest: RunManifest | None = None) -> SimReport:
    """Report for any architecture: D-Legion machines are simulated, baselines
    use their closed forms."""
    opts = opts or RunOptions()
    if arch.architecture == "dlegion":
        return run_dlegion(arch, model, opts, manifest=manifest).report
    wset = derive_attention_workloads(model, opts.fused_proj)
    return run_baseline(wset, arch, model.name, manifest, model.activation_bits)


def compare(model: ModelConfig, archs: list[ArchConfig], opts: RunOptions | None = None,
            reference: str | None = None) -> tuple[dict[str, SimReport], list[dict]]:
    """Reports for every arch and ratio rows of each arch against the reference
    (the last D-Legion arch by default): ratio = arch / reference."""
    if not archs:
        raise ValueError("at least one architecture is required")
    reports = {a.label: run(a, model, opts) for a in archs}
    if reference is None:
        dl = [a.label for a in archs if a.architecture == "dlegion"]
        reference = dl[-1] if dl else archs[-1].label
    ref = reports[reference]
    rows = []
    for label, rep in reports.items():
        if label != reference:
            rows += ratio_table(rep, ref)
    return reports, rows


def side_by_side(reports: dict[str, SimReport], metric: str = "cycles") -> list[dict]:
    """One row per stage, one column per architecture."""
    names = []
    for rep in reports.values():
        names += [s for s in rep.stages if s not in names]
    rows = []
    for name in [*[s.value for s in Stage if s.value in names], "total"]:
        row = {"stage": name}
        for label, rep in reports.items():
            m = rep.total if name == "total" else rep.stage(name)
            row[label] = getattr(m, metric)
        rows.append(row)
    return rows
