"""Closed-form timing and traffic for the comparison machines.

WS, DiP and ADiP are single 64x64 arrays that run every workload back to
back. The TPUv4i-like machine has four 128x128 weight-stationary MXUs; heads
go round-robin over the MXUs and a lone workload is split along N. Each
array fetches its own operands (no multicast), weights once per residency
and activations once per N-tile pass, and accumulates psums in memory after
every D-deep pass.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .analytic import TileCounts, cdiv, legion_latency, psum_traffic_bytes, tile_counts
from .config import ArchConfig
from .legion.orchestrator import orchestrate
from .metrics import Event, RunManifest, SimReport, aggregate
from .workloads import WorkloadSet, WorkloadSpec


class BaselineKind(str, enum.Enum):
    WS = "ws"
    DIP = "dip"
    ADIP_SINGLE = "adip"
    TPUV4I = "tpuv4i"

    @property
    def supports_quantized_accel(self) -> bool:
        return self is BaselineKind.ADIP_SINGLE

    @property
    def weight_stationary(self) -> bool:
        return self in (BaselineKind.WS, BaselineKind.TPUV4I)


@dataclass(frozen=True)
class BaselineTraffic:
    weight_bytes: int
    activation_bytes: int
    psum_bytes: int


def kind_of(arch: ArchConfig) -> BaselineKind:
    try:
        return BaselineKind(arch.architecture)
    except ValueError:
        raise ValueError(f"{arch.label} is not a baseline architecture") from None


def _tiles(M: int, K: int, N: int, arch: ArchConfig, spec: WorkloadSpec) -> TileCounts:
    return tile_counts(M, K, N, arch.replace(cores_per_legion=1), spec.mode)


def baseline_latency(spec: WorkloadSpec, arch: ArchConfig, N: int | None = None) -> int:
    """Cycles for one workload (or an N-slice of it) on one array.

    Diagonal-input arrays follow the Legion formula with one core; INT8-only
    machines always run with R = 1. Weight-stationary arrays add the input
    skew fill per pass and the output de-skew drain once.
    """
    kind = kind_of(arch)
    t = _tiles(spec.M, spec.K, spec.N if N is None else N, arch, spec)
    one = arch.replace(cores_per_legion=1)
    if not kind.weight_stationary:
        return legion_latency(t, one)
    D, P = arch.core_dim, arch.pipeline_stages
    return t.KT * t.NT * (D * (t.MT + 1) + P + arch.ws_fill()) + D + arch.ws_drain()


def baseline_traffic(spec: WorkloadSpec, arch: ArchConfig, N: int | None = None,
                     activation_bits: int = 8) -> BaselineTraffic:
    N = spec.N if N is None else N
    t = _tiles(spec.M, spec.K, N, arch, spec)
    w = cdiv(spec.K * N * spec.mode.weight_bits, 8)
    a = t.NT * spec.M * spec.K * activation_bits // 8
    p = psum_traffic_bytes(spec.M, spec.K, N, arch.replace(cores_per_legion=1), spec.mode, spatial=False)
    return BaselineTraffic(w, a, p)


def run_baseline(wset: WorkloadSet, arch: ArchConfig, model_name: str = "",
                 manifest: RunManifest | None = None, activation_bits: int = 8) -> SimReport:
    """Per-stage report for a whole workload set on a baseline machine."""
    kind_of(arch)
    assignment = orchestrate(wset, arch, policy="per_head", split_idle=False)
    D = arch.core_dim
    events = []
    busy = [0] * arch.legions
    for ph in assignment.phases:
        cycles = 0
        ops = wb = ab = pb = ob = pe = wins = 0
        for rnd in ph.rounds:
            longest = 0
            for task in rnd:
                s = task.spec
                lat = baseline_latency(s, arch, task.N)
                tr = baseline_traffic(s, arch, task.N, activation_bits)
                t = _tiles(s.M, s.K, task.N, arch, s)
                longest = max(longest, lat)
                busy[task.legion] += lat
                ops += 2 * s.M * s.K * task.N
                wb, ab, pb = wb + tr.weight_bytes, ab + tr.activation_bytes, pb + tr.psum_bytes
                ob += s.M * task.N * arch.psum_element_bits // 8
                pe += t.KT * t.NT * D**3 * t.MT
                wins += t.KT * t.NT
            cycles += longest
        events.append(Event(ph.stage.value, cycles, ops, wb, ab, pb, ob, pe,
                            cycles * arch.total_pes, wins, 0, 0))
    return aggregate(events, arch.frequency, arch.label, model_name, manifest,
                     extra={"legion_cycles": busy})

