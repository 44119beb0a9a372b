"""Closed-form performance models: tiling, Legion latency, TFU, bandwidth, CRI."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .config import ArchConfig, ModelConfig, PrecisionMode
from .workloads import Stage, WorkloadSpec


def cdiv(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class TileCounts:
    MT: int
    KT: int
    NT: int

    def __post_init__(self):
        if min(self.MT, self.KT, self.NT) < 1:
            raise ValueError(f"tile counts must be >= 1, got {self}")


def tile_counts(M: int, K: int, N: int, arch: ArchConfig, mode: PrecisionMode) -> TileCounts:
    D, C = arch.core_dim, arch.cores_per_legion
    R = arch.effective_mode(mode).ratio
    return TileCounts(cdiv(M, D), cdiv(K, C * D), cdiv(N, R * D))


def legion_latency(tiles: TileCounts, arch: ArchConfig) -> int:
    """Cycles for one Legion: every (k-chunk, n-tile) window loads weights (D),
    streams MT activation tiles (D each) and pays the pipeline depth, then the
    last window drains (D)."""
    D, P = arch.core_dim, arch.pipeline_stages
    return tiles.KT * tiles.NT * (D * (tiles.MT + 1) + P) + D


def spec_latency(spec: WorkloadSpec, arch: ArchConfig) -> int:
    return legion_latency(tile_counts(spec.M, spec.K, spec.N, arch, spec.mode), arch)


def tfu(arch: ArchConfig, topology: str = "legion") -> int:
    """Time to full utilization. Diagonal-input cores fill in D cycles whether
    they stand alone or sit in a Legion."""
    if topology not in ("single_core", "legion"):
        raise ValueError(f"unknown topology {topology!r}")
    return arch.core_dim


def peak_throughput(arch: ArchConfig, mode: PrecisionMode) -> float:
    """Peak ops/s, two ops per MAC."""
    R = arch.effective_mode(mode).ratio
    return arch.total_pes * 2 * arch.frequency * R


@dataclass(frozen=True)
class BandwidthProfile:
    legion_input_Bps: float
    accumulator_Bps: float
    psum_memory_Bps: float

    @property
    def total_Bps(self) -> float:
        return self.legion_input_Bps + self.accumulator_Bps + self.psum_memory_Bps


def bandwidth_profile(arch: ArchConfig, mode: PrecisionMode, activation_bits: int = 8) -> BandwidthProfile:
    """Per-Legion steady-state input bandwidths.

    Activations enter every core row each cycle; each core emits R*D psums per
    cycle into the accumulators, which reduce the C streams to one stream into
    psum memory.
    """
    C, D, f = arch.cores_per_legion, arch.core_dim, arch.frequency
    R = arch.effective_mode(mode).ratio
    psum_bytes = arch.psum_element_bits / 8
    legion_in = C * D * activation_bits / 8 * f
    acc = C * R * D * psum_bytes * f if C > 1 else 0.0
    mem = R * D * psum_bytes * f
    return BandwidthProfile(legion_in, acc, mem)


def psum_traffic_bytes(M: int, K: int, N: int, arch: ArchConfig, mode: PrecisionMode,
                       spatial: bool = True) -> int:
    """Psum memory bytes for one GEMM on one array group.

    Every output element is written after its first reduction step and then
    read and rewritten once per further step. With spatial reduction a step
    covers C*D of K, otherwise D.
    """
    steps = cdiv(K, arch.core_dim * (arch.cores_per_legion if spatial else 1))
    return M * N * (arch.psum_element_bits // 8) * (2 * steps - 1)


# -- design-space exploration -------------------------------------------------

@dataclass(frozen=True)
class CriScore:
    label: str
    cores: int
    core_dim: int
    bandwidth: float
    tfu: int
    mean_latency: float
    bw_norm: float
    tfu_norm: float
    latency_norm: float
    cri: float


def corner_workloads(head_dim: int = 64, seq_len: int = 2048, hidden: int = 2560,
                     proj_mode: PrecisionMode = PrecisionMode.PROJ_8X2) -> list[WorkloadSpec]:
    """QKV projection, attention score and attention output for one head."""
    dense = PrecisionMode.DENSE_8X8
    return [
        WorkloadSpec(seq_len, hidden, head_dim, proj_mode, Stage.Q_PROJ),
        WorkloadSpec(seq_len, head_dim, seq_len, dense, Stage.ATTN_SCORE),
        WorkloadSpec(seq_len, seq_len, head_dim, dense, Stage.ATTN_OUTPUT),
    ]


def legion_candidate(cores: int, core_dim: int, **kw) -> ArchConfig:
    return ArchConfig(legions=1, cores_per_legion=cores, core_dim=core_dim,
                      name=f"{cores}x{core_dim}x{core_dim}", **kw)


DEFAULT_GRID = ((2, 64), (4, 32), (8, 16), (16, 8))


def _minmax(values: Sequence[float]) -> list[float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def cri(candidates: Sequence[ArchConfig], workloads: Sequence[WorkloadSpec] | None = None,
        weights: tuple[float, float, float] = (1.0, 1.0, 1.0), eps: float = 1e-9,
        mode: PrecisionMode = PrecisionMode.PROJ_8X2) -> list[CriScore]:
    """Rank Legion configurations; higher CRI is better.

    Each raw cost (total input bandwidth, TFU, mean latency over
    ``workloads``) is min-max normalized across candidates, and
    cri = 1 / (weighted sum of normalized costs + eps). Ties go to the
    smaller core, then to more cores.
    """
    if len(candidates) < 2:
        raise ValueError(">=2 candidates required")
    workloads = list(workloads) if workloads is not None else corner_workloads()
    bw = [bandwidth_profile(a, mode).total_Bps for a in candidates]
    tf = [tfu(a) for a in candidates]
    lat = [sum(spec_latency(w, a) for w in workloads) / len(workloads) for a in candidates]
    nb, nt, nl = _minmax(bw), _minmax(tf), _minmax(lat)
    wb, wt, wl = weights
    scores = [
        CriScore(a.label, a.cores_per_legion, a.core_dim, bw[i], tf[i], lat[i], nb[i], nt[i], nl[i],
                 1.0 / (wb * nb[i] + wt * nt[i] + wl * nl[i] + eps))
        for i, a in enumerate(candidates)
    ]
    return sorted(scores, key=lambda s: (-s.cri, s.core_dim, -s.cores, s.label))


def dse_rows(candidates: Sequence[ArchConfig], workloads: Sequence[WorkloadSpec] | None = None,
             **kw) -> list[dict]:
    """Per-candidate component table in rank order, for the ``dse`` command."""
    workloads = list(workloads) if workloads is not None else corner_workloads()
    by_label = {a.label: a for a in candidates}
    rows = []
    for rank, s in enumerate(cri(candidates, workloads, **kw), 1):
        a = by_label[s.label]
        prof = bandwidth_profile(a, kw.get("mode", PrecisionMode.PROJ_8X2))
        row = {"rank": rank, "config": s.label, "cores": s.cores, "core_dim": s.core_dim,
               "pes": a.total_pes, "legion_input_Bps": prof.legion_input_Bps,
               "accumulator_Bps": prof.accumulator_Bps, "psum_memory_Bps": prof.psum_memory_Bps,
               "tfu": s.tfu}
        for w in workloads:
            row[f"latency_{w.stage.value}"] = spec_latency(w, a)
            row[f"psum_bytes_{w.stage.value}"] = psum_traffic_bytes(w.M, w.K, w.N, a, w.mode)
        row.update(mean_latency=s.mean_latency, bw_norm=s.bw_norm, tfu_norm=s.tfu_norm,
                   latency_norm=s.latency_norm, cri=s.cri)
        rows.append(row)
    return rows


def topology_ratios(single: ArchConfig, spatial: ArchConfig,
                    mode: PrecisionMode = PrecisionMode.PROJ_8X2) -> dict[str, float]:
    """spatial / single ratios for input bandwidth, psum bandwidth and TFU."""
    a, b = bandwidth_profile(single, mode), bandwidth_profile(spatial, mode)
    return {
        "input_bandwidth": b.legion_input_Bps / a.legion_input_Bps,
        "psum_bandwidth": b.psum_memory_Bps / a.psum_memory_Bps,
        "tfu": tfu(spatial) / tfu(single),
        "pes": spatial.total_pes / single.total_pes,
    }


def model_corner_workloads(model: ModelConfig, head_dim: int | None = None) -> list[WorkloadSpec]:
    return corner_workloads(head_dim or model.head_dim, model.seq_len, model.hidden_size,
                            model.projection_mode)


__all__ = [
    "TileCounts", "tile_counts", "legion_latency", "spec_latency", "tfu", "peak_throughput",
    "BandwidthProfile", "bandwidth_profile", "psum_traffic_bytes", "CriScore", "cri",
    "corner_workloads", "legion_candidate", "DEFAULT_GRID", "dse_rows", "topology_ratios",
    "cdiv", "model_corner_workloads",
]
