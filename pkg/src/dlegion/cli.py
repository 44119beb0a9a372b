"""Command-line entry point: ``dlegion <subcommand>``.

Exit codes: 0 success, 1 internal error, 2 input or validation error,
3 data-file mismatch (zero-tile book), 4 functional-check failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .analytic import (
    DEFAULT_GRID, dse_rows, legion_candidate, peak_throughput, spec_latency, topology_ratios,
)
from .config import ArchConfig, ConfigError, ModelConfig, PrecisionMode, resolve_arch, resolve_model
from .experiments import RunOptions, compare, manifest_for, run, run_dlegion, side_by_side
from .legion import ZeroTileBook, ZtbShapeError, expected_shape
from .metrics import emit, format_table, parse, ratio_table, rows_to_csv
from .workloads import Stage, WorkloadSpec, derive_attention_workloads, workload_rows

CONFIG_DIR_ENV = "DLEGION_CONFIG_DIR"
EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_DATA, EXIT_FUNCTIONAL = 0, 1, 2, 3, 4

log = logging.getLogger("dlegion")


class DataFileError(Exception):
    pass


class FunctionalFailure(Exception):
    pass


def _lookup(ref: str) -> str:
    """Let bare names resolve against the config directory."""
    if Path(ref).exists():
        return ref
    base = os.environ.get(CONFIG_DIR_ENV)
    if base:
        for cand in (Path(base) / ref, Path(base) / f"{ref}.json"):
            if cand.exists():
                return str(cand)
    return ref


def _arch(ref: str) -> ArchConfig:
    return resolve_arch(_lookup(ref) if ref and not _is_preset(ref) else ref)


def _model(ref: str) -> ModelConfig:
    return resolve_model(_lookup(ref) if ref and not _is_preset(ref) else ref)


def _is_preset(ref: str) -> bool:
    from .config import PRESET_NAMES
    return ref in PRESET_NAMES


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _rows_out(rows: list[dict], fmt: str) -> str:
    if fmt == "csv":
        return rows_to_csv(rows)
    if fmt == "json":
        return json.dumps(rows, indent=2) + "\n"
    return format_table(rows)


# -- subcommands ----------------------------------------------------------------

def cmd_workloads(args) -> int:
    model = _model(args.model or args.preset)
    wset = derive_attention_workloads(model, args.fused_proj)
    _write(_rows_out(workload_rows(wset), args.format), args.out)
    return EXIT_OK


def _load_grid(path: str | None) -> list[tuple[int, int]]:
    if path is None:
        return list(DEFAULT_GRID)
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON ({exc})"]) from exc
    items = data.get("candidates") if isinstance(data, dict) else data
    if not isinstance(items, list):
        raise ConfigError([f"{path}: expected a list of [cores, core_dim] pairs"])
    grid = []
    for item in items:
        c, d = (item["cores"], item["core_dim"]) if isinstance(item, dict) else item
        if int(c) < 1 or int(d) < 1:
            raise ConfigError([f"candidate {item}: cores and core_dim must be >= 1"])
        grid.append((int(c), int(d)))
    return grid


def cmd_dse(args) -> int:
    grid = _load_grid(args.grid)
    cands = [legion_candidate(c, d) for c, d in grid]
    if len(cands) < 2:
        raise ConfigError([">=2 candidates required"])
    rows = dse_rows(cands)
    if args.format == "table":
        cols = ("rank", "config", "pes", "legion_input_Bps", "psum_memory_Bps", "tfu", "mean_latency", "cri")
        rows = [{k: r[k] for k in cols} for r in rows]
    _write(_rows_out(rows, args.format), args.out)
    return EXIT_OK


def _load_ztbs(args, arch: ArchConfig, model: ModelConfig) -> dict[Stage, ZeroTileBook] | None:
    if not args.ztb:
        return None
    stage = Stage(args.ztb_stage)
    try:
        book = ZeroTileBook.load(args.ztb)
    except ValueError as exc:
        raise DataFileError(f"{args.ztb}: {exc}") from exc
    spec = derive_attention_workloads(model.replace(layers=1)).by_stage(stage)[0]
    book.check_shape(expected_shape(spec.K, spec.N, arch, spec.mode))
    return {stage: book}


def cmd_simulate(args) -> int:
    arch, model = _arch(args.arch), _model(args.model)
    if arch.architecture != "dlegion":
        if args.ztb or args.functional:
            raise ConfigError([f"--ztb and --functional need a D-Legion architecture, got {arch.label}"])
        man = manifest_for("simulate", arch, model, args.seed, (args.arch, args.model),
                           (args.out,) if args.out else ())
        _write(emit(run(arch, model, manifest=man), args.format), args.out)
        return EXIT_OK
    ztbs = _load_ztbs(args, arch, model)
    paths = (args.arch, args.model) + ((args.ztb,) if args.ztb else ())
    man = manifest_for("simulate", arch, model, args.seed, paths, (args.out,) if args.out else ())
    opts = RunOptions(args.policy, not args.no_split_idle, args.functional, args.bw_stall, args.seed)
    res = run_dlegion(arch, model, opts, ztbs, man)
    _write(emit(res.report, args.format), args.out)
    if args.out:
        sys.stdout.write(format_table(side_by_side({arch.label: res.report})))
    if ztbs:
        st = res.report.stage(args.ztb_stage)
        frac = st.skipped_windows / st.windows if st.windows else 0.0
        print(f"skipped windows ({args.ztb_stage}): {st.skipped_windows}/{st.windows} = {frac:.4f}")
    if args.functional:
        if not res.functional_ok:
            for f in res.functional_failures:
                print(f"mismatch: {f}", file=sys.stderr)
            print("functional: FAIL")
            raise FunctionalFailure(f"{len(res.functional_failures)} task(s) differ from the oracle")
        print(f"functional: PASS ({res.functional_checked} tasks checked)")
    return EXIT_OK


def cmd_compare(args) -> int:
    model = _model(args.model)
    names = [a for a in (args.archs or "").split(",") if a]
    if not names and not args.ratio:
        raise ConfigError(["--archs needs at least one architecture"])
    archs = [_arch(a) for a in names]
    opts = RunOptions(args.policy, not args.no_split_idle)
    if args.ratio:
        base = parse(Path(args.ratio).read_text())
        rows = []
        for a in archs:
            rows += ratio_table(base, run(a, model, opts))
        _write(_rows_out(rows, args.format), args.out)
        return EXIT_OK
    reports, rows = compare(model, archs, opts)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for label, rep in reports.items():
            (out / f"{label}.json").write_text(emit(rep, "json"))
        for metric in ("cycles", "throughput_ops", "memory_bytes", "psum_bytes"):
            (out / f"{metric}.csv").write_text(rows_to_csv(side_by_side(reports, metric)))
        (out / "ratios.csv").write_text(rows_to_csv(rows))
    text = ""
    for metric in ("cycles", "memory_bytes", "psum_bytes"):
        text += f"# {metric}\n" + _rows_out(side_by_side(reports, metric), args.format)
    text += "# ratios (arch / reference)\n" + _rows_out(rows, args.format)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_ztb_gen(args) -> int:
    arch, model = _arch(args.arch), _model(args.model)
    stage = Stage(args.stage)
    spec = derive_attention_workloads(model.replace(layers=1)).by_stage(stage)[0]
    shape = expected_shape(spec.K, spec.N, arch, spec.mode)
    book = ZeroTileBook.random(*shape, rate=args.rate, seed=args.seed, granularity=args.granularity)
    book.save(args.out)
    windows = book.nt * book.kt
    print(f"wrote {args.out}: kt_raw={book.kt_raw} nt={book.nt} cores={book.cores} "
          f"fully-sparse windows {int(book.fully_sparse().sum())}/{windows}")
    return EXIT_OK


def _repro_quantized(arch: ArchConfig) -> list[dict]:
    rows = []
    for M, K, N in ((2048, 2560, 128), (2048, 2048, 2560), (256, 512, 1024), (64, 128, 256)):
        lat = {m: spec_latency(WorkloadSpec(M, K, N, m, Stage.OUT_PROJ), arch) for m in PrecisionMode}
        d = lat[PrecisionMode.DENSE_8X8]
        rows.append({"M": M, "K": K, "N": N, **{m.value: v for m, v in lat.items()},
                     "speedup_8x4": d / lat[PrecisionMode.PROJ_8X4],
                     "speedup_8x2": d / lat[PrecisionMode.PROJ_8X2]})
    return rows


def cmd_repro(args) -> int:
    """Every experiment table as CSV in one directory."""
    from .config import arch_preset, model_preset

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mha, kv = model_preset("bitnet-1.58b"), model_preset("bitnet-1.58b-kv")
    files = {}
    files["workloads_mha.csv"] = rows_to_csv(workload_rows(derive_attention_workloads(mha)))
    files["workloads_kv.csv"] = rows_to_csv(workload_rows(derive_attention_workloads(kv)))
    files["dse.csv"] = rows_to_csv(dse_rows([legion_candidate(c, d) for c, d in DEFAULT_GRID]))
    single = ArchConfig(legions=1, cores_per_legion=1, core_dim=64, name="1x64x64")
    spatial = legion_candidate(16, 16)
    files["topology.csv"] = rows_to_csv([{"single": single.label, "spatial": spatial.label,
                                          **topology_ratios(single, spatial)}])
    files["quantized_speedup.csv"] = rows_to_csv(_repro_quantized(arch_preset("dlegion-8")))
    files["scaling.csv"] = rows_to_csv([
        {"legions": L, **{f"peak_{m.value}_ops": peak_throughput(arch_preset("dlegion-8").replace(legions=L), m)
                          for m in PrecisionMode}}
        for L in (1, 2, 4, 8, 16, 32, 64)
    ])
    for tag, model in (("mha", mha), ("kv", kv)):
        archs = [arch_preset(a) for a in ("ws-64", "dip-64", "adip-64", "dlegion-8")]
        reports, rows = compare(model, archs)
        for metric in ("cycles", "throughput_ops", "memory_bytes", "psum_bytes"):
            files[f"single_core_{tag}_{metric}.csv"] = rows_to_csv(side_by_side(reports, metric))
        files[f"single_core_{tag}_ratios.csv"] = rows_to_csv(rows)
        reports, rows = compare(model, [arch_preset("tpuv4i"), arch_preset("dlegion-32")])
        for metric in ("wall_time_s", "throughput_ops", "memory_bytes", "psum_bytes"):
            files[f"tpu_{tag}_{metric}.csv"] = rows_to_csv(side_by_side(reports, metric))
        files[f"tpu_{tag}_ratios.csv"] = rows_to_csv(rows)
    for name, text in files.items():
        (out / name).write_text(text)
        print(out / name)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dlegion", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"dlegion {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    w = sub.add_parser("workloads", help="attention GEMM workloads of a model")
    src = w.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", help="model preset name")
    src.add_argument("--model", help="model preset or JSON file")
    w.add_argument("--fused-proj", action="store_true", help="one Q/K/V GEMM per layer")
    w.add_argument("--format", choices=("table", "csv", "json"), default="table")
    w.add_argument("--out")
    w.set_defaults(func=cmd_workloads)

    d = sub.add_parser("dse", help="rank Legion granularities by CRI")
    d.add_argument("--grid", help="JSON list of [cores, core_dim] pairs (default: built-in grid)")
    d.add_argument("--format", choices=("table", "csv", "json"), default="table")
    d.add_argument("--out")
    d.set_defaults(func=cmd_dse)

    s = sub.add_parser("simulate", help="simulate one architecture on one model")
    s.add_argument("--arch", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--ztb", help="zero-tile book file")
    s.add_argument("--ztb-stage", default=Stage.Q_PROJ.value, choices=[st.value for st in Stage])
    s.add_argument("--functional", action="store_true", help="check outputs against an integer oracle")
    s.add_argument("--bw-stall", action="store_true", help="stall when a window needs more link bandwidth")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--policy", choices=("partition_n", "per_head"), default="partition_n")
    s.add_argument("--no-split-idle", action="store_true", help="do not N-split heads over idle Legions")
    s.add_argument("--format", choices=("json", "csv"), default="json")
    s.add_argument("--out", help="report path (default: stdout)")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare", help="run several architectures on one model")
    c.add_argument("--model", required=True)
    c.add_argument("--archs", help="comma-separated architecture list")
    c.add_argument("--ratio", help="saved JSON report to divide by each architecture's report")
    c.add_argument("--policy", choices=("partition_n", "per_head"), default="partition_n")
    c.add_argument("--no-split-idle", action="store_true")
    c.add_argument("--format", choices=("table", "csv", "json"), default="table")
    c.add_argument("--out", help="directory for per-arch reports and CSV tables")
    c.set_defaults(func=cmd_compare)

    r = sub.add_parser("repro", help="write every experiment table to a directory")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_repro)

    z = sub.add_parser("ztb-gen", help="generate a random zero-tile book")
    z.add_argument("--arch", required=True)
    z.add_argument("--model", required=True)
    z.add_argument("--stage", default=Stage.Q_PROJ.value, choices=[st.value for st in Stage])
    z.add_argument("--rate", type=float, required=True, help="fraction of windows (or tiles) zeroed")
    z.add_argument("--granularity", choices=("window", "tile"), default="window")
    z.add_argument("--seed", type=int, default=0)
    z.add_argument("--out", required=True)
    z.set_defaults(func=cmd_ztb_gen)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ZtbShapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DataFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FunctionalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FUNCTIONAL
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FileNotFoundError, IsADirectoryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.debug("internal error", exc_info=True)
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
