"""Tile-granular D-Legion simulator.

Every task runs its schedule on one Legion: windows of C weight tiles, each
streaming the task's M-tiles through the cores, with the accumulators
reducing the C core outputs before a read-modify-write into psum memory.
Timing, psum traffic and NoC fetches are computed per window with numpy.
Phases whose structure (tasks, sharing pattern, zero-tile books) repeats are
computed once and reused, which keeps full-model runs fast.

With ``functional=True`` the cores' arithmetic is executed bit-accurately
and checked against an int64 matrix product on the masked weights.
"""

from __future__ import annotations

import functools
import zlib
from dataclasses import dataclass, field

import numpy as np

from ..analytic import cdiv
from ..config import ArchConfig, PrecisionMode
from ..functional import ACC_MAX, ACC_MIN, core_matmul
from ..metrics import Event, RunManifest, SimReport, aggregate
from .noc import LINK_ACTIVATIONS, LINK_PSUMS, LINK_WEIGHTS, NocTraffic, TileFetch, noc_traffic
from .orchestrator import Assignment, Phase, Task
from .schedule import TileSchedule, build_schedule
from .ztb import ZeroTileBook, mask_weights

FULL_CHECK_MACS = 1 << 22  # tasks up to this size are checked on every output element
_CODE_STRIDE = 1 << 24
_BATCH_ELEMS = 1 << 20  # activation elements per batched core call


class PsumOverflowError(RuntimeError):
    def __init__(self, legion: int, bank: int, used: int, capacity: int, tile: tuple):
        self.legion, self.bank, self.used, self.capacity, self.tile = legion, bank, used, capacity, tile
        super().__init__(
            f"psum bank overflow on Legion {legion} bank {bank}: {used} B live > {capacity} B "
            f"(tile n={tile[0]}, m={tile[1]})"
        )


class FunctionalMismatch(AssertionError):
    pass


@dataclass
class LegionState:
    """Mutable per-Legion resources while a task runs."""

    legion_id: int
    cores: int
    banks: int
    bank_bytes: int
    accumulators: int = 4
    core_tile: list = field(default_factory=list)  # stationary (k_raw, n) per core
    core_active: np.ndarray = None
    acc_busy_until: np.ndarray = None
    bank_used: np.ndarray = None
    bank_peak: np.ndarray = None
    bank_reads: np.ndarray = None
    bank_writes: np.ndarray = None
    cursor: int = 0
    mode: PrecisionMode | None = None

    def __post_init__(self):
        self.core_tile = [None] * self.cores
        self.core_active = np.zeros(self.cores, bool)
        self.acc_busy_until = np.zeros(max(1, self.accumulators), np.int64)
        for name in ("bank_used", "bank_peak", "bank_reads", "bank_writes"):
            setattr(self, name, np.zeros(self.banks, np.int64))

    @classmethod
    def for_arch(cls, legion_id: int, arch: ArchConfig) -> "LegionState":
        return cls(legion_id, arch.cores_per_legion, arch.psum_bank_count, arch.psum_bank_bytes,
                   arch.accumulators_per_legion)

    def set_mode(self, mode: PrecisionMode) -> None:
        if self.mode is not None and self.mode is not mode:
            raise RuntimeError(f"Legion {self.legion_id} switched mode inside one workload")
        self.mode = mode

    def hold(self, bank: int, nbytes: int, tile: tuple) -> None:
        self.bank_used[bank] += nbytes
        if self.bank_used[bank] > self.bank_bytes:
            raise PsumOverflowError(self.legion_id, bank, int(self.bank_used[bank]), self.bank_bytes, tile)
        self.bank_peak[bank] = max(self.bank_peak[bank], self.bank_used[bank])

    def release(self) -> None:
        self.bank_used[:] = 0


@dataclass
class TaskStats:
    legion: int
    round: int
    cycles: int
    stall_cycles: int
    windows: int
    skipped_windows: int
    partial_windows: int
    ops: int
    pe_active_cycles: int
    deactivated_core_cycles: int
    psum_bytes: int
    accumulator_updates: int
    output_bytes: int
    bank_peak: int
    fetches: list = field(default_factory=list)


# -- per-task timing and traffic ---------------------------------------------

def _bank_layout(sched: TileSchedule, arch: ArchConfig, M: int) -> tuple[np.ndarray, np.ndarray]:
    """(bank, valid rows) for every m-tile: quantized modes interleave m-tiles
    over the banks, dense mode parks a whole n-tile in one bank."""
    D, MT, nb = arch.core_dim, sched.tiles.MT, arch.psum_bank_count
    rows = np.minimum(D, M - np.arange(MT) * D)
    bank = np.arange(MT) % nb if sched.ratio > 1 else np.zeros(MT, np.int64)
    return bank, rows


def run_task(task: Task, sched: TileSchedule, arch: ArchConfig, state: LegionState,
             bw_stall: bool = False, activation_bits: int = 8) -> TaskStats:
    """Advance one Legion through one task's schedule."""
    spec, D, C, P = task.spec, arch.core_dim, arch.cores_per_legion, arch.pipeline_stages
    M, K = spec.M, spec.K
    RD = sched.ratio * D
    MT, kt_raw = sched.tiles.MT, sched.kt_raw
    state.set_mode(sched.mode)
    wbits = spec.mode.weight_bits
    ebytes = arch.psum_element_bits // 8

    win_cyc = sched.window_cycles(P)
    computed = ~sched.skip
    active = sched.active & computed[:, None]
    k_raw = sched.win_k[:, None] * C + np.arange(C)[None, :]  # (W, C)
    k_rows = np.clip(K - k_raw * D, 0, D)
    n_glob = task.n_start + sched.win_n
    n_cols = np.clip(spec.N - n_glob * RD, 0, RD)  # (W,)

    # weights: one tile per active core per computed window
    wi, ci = np.nonzero(active)
    w_codes = k_raw[wi, ci].astype(np.int64) * _CODE_STRIDE + n_glob[wi]
    w_bytes = -(-(k_rows[wi, ci] * n_cols[wi] * wbits) // 8)
    # activations: every active core streams all M-tiles of its K-slice
    m_rows = np.minimum(D, M - np.arange(MT) * D)
    a_codes = ((sched.win_n[wi][:, None].astype(np.int64) * kt_raw + k_raw[wi, ci][:, None]) * MT
               + np.arange(MT)[None, :]).reshape(-1)
    a_bytes = (k_rows[wi, ci][:, None] * m_rows[None, :] * activation_bits // 8).reshape(-1)

    fetches = [
        TileFetch(LINK_WEIGHTS, task.wgt_tensor, state.legion_id, w_codes, w_bytes.astype(np.int64)),
        TileFetch(LINK_ACTIVATIONS, (task.act_tensor, task.round), state.legion_id, a_codes,
                  a_bytes.astype(np.int64)),
    ]

    stall = 0
    if bw_stall:
        per_cycle = arch.legion_link_bits // 8
        win_bytes = np.zeros(sched.windows, np.int64)
        np.add.at(win_bytes, wi, w_bytes + k_rows[wi, ci] * M * activation_bits // 8)
        need = -(-win_bytes // per_cycle)
        extra = np.maximum(0, need - win_cyc) * computed
        stall = int(extra.sum())

    # psum RMW per local n-tile: first computed window writes, later ones read + write
    nt = sched.tiles.NT
    c_k = np.bincount(sched.win_n[computed], minlength=nt)
    cols = np.clip(spec.N - (task.n_start + np.arange(nt)) * RD, 0, RD)
    bank, rows = _bank_layout(sched, arch, M)
    psum_bytes = 0
    for j in range(nt):
        if c_k[j] == 0:
            continue
        state.release()
        tile_bytes = rows * cols[j] * ebytes
        if sched.ratio > 1:
            for m in range(MT):
                state.hold(int(bank[m]), int(tile_bytes[m]), (task.n_start + j, m))
            np.add.at(state.bank_writes, bank, tile_bytes * c_k[j])
            np.add.at(state.bank_reads, bank, tile_bytes * (c_k[j] - 1))
        else:
            b = j % arch.psum_bank_count
            state.hold(b, int(tile_bytes.sum()), (task.n_start + j, MT - 1))
            state.bank_writes[b] += tile_bytes.sum() * c_k[j]
            state.bank_reads[b] += tile_bytes.sum() * (c_k[j] - 1)
        psum_bytes += int(tile_bytes.sum()) * (2 * int(c_k[j]) - 1)
    state.release()

    any_compute = bool(computed.any())
    cycles = int(win_cyc.sum()) + (D if any_compute else 0) + stall
    real = sched.real_cores()
    n_active = active.sum(axis=1)
    deact = int(((real - n_active) * win_cyc * computed).sum())
    pe_active = int(n_active.sum()) * D * D * D * MT
    ops = 2 * int((k_rows[wi, ci] * n_cols[wi]).sum()) * M
    out_bytes = M * task.N * ebytes if any_compute else 0
    if out_bytes:
        fetches.append(TileFetch(LINK_PSUMS, ("out", task.spec_index, task.n_start), state.legion_id,
                                 np.zeros(1, np.int64), np.array([out_bytes], np.int64)))
    state.core_active[:] = active[-1] if active.size else False
    state.cursor += sched.windows
    if sched.windows:
        state.acc_busy_until[:] = cycles
    return TaskStats(state.legion_id, task.round, cycles, stall, sched.windows,
                     int(sched.skip.sum()), int(sched.partial.sum()), ops, pe_active, deact,
                     psum_bytes, int(n_active.sum()) * MT, out_bytes, int(state.bank_peak.max()),
                     fetches)


# -- functional execution -----------------------------------------------------

@functools.lru_cache(maxsize=8)
def tensor_data(tensor: tuple, shape: tuple[int, int], bits: int, seed: int) -> np.ndarray:
    """Deterministic integer contents for a named tensor (read-only, cached)."""
    rng = np.random.default_rng([seed, zlib.crc32(repr(tensor).encode())])
    if bits == 2:
        out = rng.integers(-1, 2, size=shape, dtype=np.int64)
    else:
        out = rng.integers(-(1 << (bits - 1)), 1 << (bits - 1), size=shape, dtype=np.int64)
    out.setflags(write=False)
    return out


def legion_gemm(A: np.ndarray, W: np.ndarray, arch: ArchConfig, mode: PrecisionMode,
                book: ZeroTileBook | None = None, m_tiles=None, n_tiles=None) -> np.ndarray:
    """Execute one Legion's windows on real data.

    ``A`` is M x K int8, ``W`` is K x N in the mode's weight width. Each
    window loads up to C weight tile groups (R interleaved D x D tiles per
    core), streams the selected M-tiles through every active core, reduces
    the core outputs and accumulates into psum memory. Returns the M x N
    int64 result; rows and column tiles that were not selected stay zero.
    """
    A = np.asarray(A, dtype=np.int64)
    W = np.asarray(W, dtype=np.int64)
    M, K = A.shape
    N = W.shape[1]
    D, C = arch.core_dim, arch.cores_per_legion
    mode = arch.effective_mode(mode)
    R = mode.ratio
    RD = R * D
    kt_raw, nt = cdiv(K, D), cdiv(N, RD)
    KT = cdiv(kt_raw, C)
    if book is None:
        book = ZeroTileBook.dense(kt_raw, nt, C)
    book.check_shape((kt_raw, nt, C))
    MT = cdiv(M, D)
    m_sel = np.arange(MT) if m_tiles is None else np.asarray(sorted(m_tiles))
    n_sel = range(nt) if n_tiles is None else sorted(n_tiles)
    rows = np.concatenate([np.arange(m * D, min(M, (m + 1) * D)) for m in m_sel]) if len(m_sel) else np.arange(0)
    Ap = np.zeros((rows.size, kt_raw * D), np.int64)
    Ap[:, :K] = A[rows]
    Wp = np.zeros((kt_raw * D, nt * RD), np.int64)
    Wp[:K, :N] = W
    skip = book.fully_sparse()
    active = book.active_cores()
    out = np.zeros((M, N), np.int64)
    for n in n_sel:
        ks, cs = np.nonzero(active[n] & ~skip[n][:, None])  # (k-chunk, core) pairs that run
        if not ks.size:
            continue
        kr = ks * C + cs
        a_tiles = Ap.reshape(rows.size, kt_raw, D).transpose(1, 0, 2)[kr]  # (B, rows, D)
        w_tiles = Wp.reshape(kt_raw, D, nt, R, D)[kr, :, n].transpose(2, 0, 1, 3)  # (R, B, D, D)
        prods = np.empty((kr.size, rows.size, RD), np.int64)
        step = max(1, _BATCH_ELEMS // max(1, rows.size * D))
        for b0 in range(0, kr.size, step):
            parts = core_matmul(a_tiles[b0:b0 + step], list(w_tiles[:, b0:b0 + step]), mode)
            prods[b0:b0 + step] = np.concatenate(parts, axis=-1)
        # accumulator: spatial reduction of each window's cores
        reduced = np.zeros((KT, rows.size, RD), np.int64)
        np.add.at(reduced, ks, prods)
        psum = None  # psum memory for this n-tile: read-modify-write per k-chunk
        for k in np.unique(ks):
            psum = reduced[k] if psum is None else psum + reduced[k]
            if psum.size and (psum.min() < ACC_MIN or psum.max() > ACC_MAX):
                raise OverflowError(f"psum exceeds 32 bits at n-tile {n}, k-chunk {k}")
        c0, c1 = n * RD, min(N, (n + 1) * RD)
        out[rows, c0:c1] = psum[:, :c1 - c0]
    return out


def _check_task(task: Task, assignment: Assignment, arch: ArchConfig, seed: int,
                full: bool, rng: np.random.Generator) -> tuple[bool, np.ndarray | None, tuple]:
    spec = task.spec
    mode = arch.effective_mode(spec.mode)
    RD = mode.ratio * arch.core_dim
    A = tensor_data(task.act_tensor, (spec.M, spec.K), 8, seed)
    W = tensor_data(task.wgt_tensor, (spec.K, spec.N), spec.mode.weight_bits, seed)
    stage_book = (assignment.ztbs or {}).get(spec.stage)
    if stage_book is not None:
        W = mask_weights(W, stage_book, arch, mode)
    Ws = W[:, task.col_start:task.col_start + task.N]
    book = assignment.book_for(task)
    MT = cdiv(spec.M, arch.core_dim)
    whole = full or spec.M * spec.K * task.N <= FULL_CHECK_MACS
    m_sel = None if whole else sorted({0, MT - 1, int(rng.integers(MT))})
    n_sel = None if whole else sorted({int(rng.integers(task.n_tiles))})
    got = legion_gemm(A, Ws, arch, mode, book, m_sel, n_sel)
    if whole:
        rows, cols = slice(None), slice(None)
    else:
        rows = np.concatenate([np.arange(m * arch.core_dim, min(spec.M, (m + 1) * arch.core_dim)) for m in m_sel])
        cols = np.concatenate([np.arange(n * RD, min(task.N, (n + 1) * RD)) for n in n_sel])
        got = got[np.ix_(rows, cols)]
    ref = A[rows] @ Ws if whole else A[rows] @ Ws[:, cols]
    ok = np.array_equal(got, ref)
    return ok, (got if whole else None), (m_sel, n_sel)


# -- whole-assignment simulation ----------------------------------------------

@dataclass
class PhaseResult:
    layer: int
    stage: str
    cycles: int
    round_cycles: list[int]
    tasks: list[TaskStats]
    traffic: NocTraffic
    event: Event
    bank_peak: int
    memoized: bool = False


@dataclass
class SimResult:
    report: SimReport
    phases: list[PhaseResult]
    legion_cycles: np.ndarray  # busy cycles per Legion
    traffic: NocTraffic
    outputs: dict[int, np.ndarray] = field(default_factory=dict)
    functional_checked: int = 0
    functional_failures: list[str] = field(default_factory=list)
    bank_peak: int = 0

    @property
    def functional_ok(self) -> bool:
        return not self.functional_failures

    @property
    def cycles(self) -> int:
        return self.report.total.cycles


def _phase_signature(phase: Phase, assignment: Assignment) -> tuple:
    acts: dict[tuple, int] = {}
    wgts: dict[tuple, int] = {}
    book = (assignment.ztbs or {}).get(phase.stage)
    sig = [phase.stage.value, book.digest() if book is not None else None]
    for t in phase.tasks:
        s = t.spec
        sig.append((t.round, t.legion, s.M, s.K, s.N, s.mode.value, t.n_start, t.n_tiles, t.N,
                    acts.setdefault(t.act_tensor, len(acts)), wgts.setdefault(t.wgt_tensor, len(wgts)),
                    t.destinations))
    return tuple(sig)


def simulate(assignment: Assignment, arch: ArchConfig | None = None, functional: bool = False,
             bw_stall: bool = False, seed: int = 0, model_name: str = "",
             manifest: RunManifest | None = None, memoize: bool = True,
             full_functional: bool = False, activation_bits: int = 8) -> SimResult:
    """Run every phase of ``assignment`` and aggregate a report.

    Functional checking covers the first occurrence of each distinct phase
    structure. Large tasks are checked on sampled M-tiles and one N-tile
    (all of K) unless ``full_functional`` is set.
    """
    arch = arch or assignment.arch
    if arch != assignment.arch:
        raise ValueError("assignment was built for a different architecture")
    L = arch.legions
    rng = np.random.default_rng(seed)
    memo: dict[tuple, PhaseResult] = {}
    phases: list[PhaseResult] = []
    legion_cycles = np.zeros(L, np.int64)
    traffic = NocTraffic()
    outputs: dict[int, np.ndarray] = {}
    failures: list[str] = []
    checked = 0
    for ph in assignment.phases:
        for t in ph.tasks:
            if not 0 <= t.legion < L:
                raise ValueError(f"task assigned to Legion {t.legion}, machine has {L}")
            if not set(t.destinations) <= set(range(L)):
                raise ValueError("multicast destinations outside the machine")
        sig = _phase_signature(ph, assignment) if memoize else None
        if sig is not None and sig in memo:
            prev = memo[sig]
            res = PhaseResult(ph.layer, ph.stage.value, prev.cycles, prev.round_cycles, prev.tasks,
                              prev.traffic, prev.event, prev.bank_peak, memoized=True)
        else:
            res = _run_phase(ph, assignment, arch, bw_stall, activation_bits)
            if functional:
                for t in ph.tasks:
                    ok, out, where = _check_task(t, assignment, arch, seed, full_functional, rng)
                    checked += 1
                    if not ok:
                        failures.append(f"layer {ph.layer} {ph.stage.value} spec {t.spec_index} "
                                        f"Legion {t.legion} (m-tiles, n-tiles) {where}")
                    elif out is not None:
                        full = outputs.setdefault(t.spec_index, np.zeros((t.spec.M, t.spec.N), np.int64))
                        full[:, t.col_start:t.col_start + t.N] = out
            if sig is not None:
                memo[sig] = res
        phases.append(res)
        for ts in res.tasks:
            legion_cycles[ts.legion] += ts.cycles
        traffic += res.traffic
    report = aggregate((p.event for p in phases), arch.frequency, arch.label, model_name, manifest,
                       extra={"legion_cycles": [int(c) for c in legion_cycles],
                              "offchip_by_link": traffic.as_dict()["offchip"],
                              "delivered_by_link": traffic.as_dict()["delivered"],
                              "psum_bank_peak_bytes": max((p.bank_peak for p in phases), default=0)})
    return SimResult(report, phases, legion_cycles, traffic, outputs, checked, failures,
                     max((p.bank_peak for p in phases), default=0))


def _run_phase(ph: Phase, assignment: Assignment, arch: ArchConfig, bw_stall: bool,
               activation_bits: int) -> PhaseResult:
    stats: list[TaskStats] = []
    round_cycles = []
    for rnd in ph.rounds:
        longest = 0
        for t in rnd:
            sched = build_schedule(t.spec, assignment.book_for(t), arch, t.destinations, N=t.N)
            st = run_task(t, sched, arch, LegionState.for_arch(t.legion, arch), bw_stall, activation_bits)
            stats.append(st)
            longest = max(longest, st.cycles)
        round_cycles.append(longest)
    traffic = noc_traffic(f for s in stats for f in s.fetches)
    for s in stats:
        s.fetches = []  # traffic is summarized; drop the per-tile arrays
    cycles = sum(round_cycles)
    ev = Event(
        stage=ph.stage.value, cycles=cycles, ops=sum(s.ops for s in stats),
        weight_bytes=traffic.offchip[LINK_WEIGHTS], activation_bytes=traffic.offchip[LINK_ACTIVATIONS],
        psum_bytes=sum(s.psum_bytes for s in stats), output_bytes=traffic.offchip[LINK_PSUMS],
        pe_active_cycles=sum(s.pe_active_cycles for s in stats), pe_cycles=cycles * arch.total_pes,
        windows=sum(s.windows for s in stats), skipped_windows=sum(s.skipped_windows for s in stats),
        deactivated_core_cycles=sum(s.deactivated_core_cycles for s in stats),
    )
    return PhaseResult(ph.layer, ph.stage.value, cycles, round_cycles, stats, traffic, ev,
                       max((s.bank_peak for s in stats), default=0))
