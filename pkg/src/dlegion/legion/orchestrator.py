"""Workload-to-Legion assignment.

Stages execute as sequential phases, one per (layer, stage). Inside a phase
the workloads are issued in rounds; a round places at most one task on each
Legion and lasts as long as its slowest task. A task is one workload, or an
N-slice of one, on one Legion.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..analytic import cdiv
from ..config import ArchConfig
from ..workloads import Stage, WorkloadSet, WorkloadSpec
from .ztb import ZeroTileBook, expected_shape

POLICIES = ("partition_n", "per_head")


@dataclass(frozen=True)
class Task:
    spec: WorkloadSpec
    spec_index: int
    legion: int
    round: int
    n_start: int  # first global N-tile of the slice
    n_tiles: int
    col_start: int
    N: int  # columns in the slice
    act_tensor: tuple
    wgt_tensor: tuple
    destinations: tuple[int, ...] = ()  # Legions sharing this task's activation in its round


@dataclass(frozen=True)
class Phase:
    layer: int
    stage: Stage
    rounds: tuple[tuple[Task, ...], ...]
    concurrent: int  # workloads per round
    parts: int  # N-partitions per workload

    @property
    def tasks(self) -> list[Task]:
        return [t for r in self.rounds for t in r]


@dataclass(frozen=True)
class Assignment:
    arch: ArchConfig
    phases: tuple[Phase, ...]
    specs: tuple[WorkloadSpec, ...]
    ztbs: dict | None = None

    @property
    def queues(self) -> dict[int, list[Task]]:
        """Legion -> ordered task queue."""
        out: dict[int, list[Task]] = {i: [] for i in range(self.arch.legions)}
        for ph in self.phases:
            for t in ph.tasks:
                out[t.legion].append(t)
        return out

    def book_for(self, task: Task) -> ZeroTileBook | None:
        """The task's slice of its stage's zero-tile book, if one was supplied."""
        if not self.ztbs or task.spec.stage not in self.ztbs:
            return None
        return self.ztbs[task.spec.stage].slice_n(task.n_start, task.n_tiles)


def activation_tensor(spec: WorkloadSpec) -> tuple:
    if spec.stage in (Stage.Q_PROJ, Stage.K_PROJ, Stage.V_PROJ):
        return ("X", spec.layer)
    if spec.stage is Stage.OUT_PROJ:
        return ("attn", spec.layer)
    tag = "Q" if spec.stage is Stage.ATTN_SCORE else "P"
    return (tag, spec.layer, spec.head_id)


def weight_tensor(spec: WorkloadSpec) -> tuple:
    st = spec.stage
    if st is Stage.ATTN_SCORE:
        return ("K", spec.layer, spec.kv_group_id)
    if st is Stage.ATTN_OUTPUT:
        return ("V", spec.layer, spec.kv_group_id)
    tag = {Stage.Q_PROJ: "Wq", Stage.K_PROJ: "Wk", Stage.V_PROJ: "Wv", Stage.OUT_PROJ: "Wo"}[st]
    return (tag, spec.layer) if st is Stage.OUT_PROJ else (tag, spec.layer, spec.head_id)


def split_tiles(tiles: int, parts: int) -> list[tuple[int, int]]:
    """(start, count) per part; the first ``tiles % parts`` parts take one extra."""
    base, extra = divmod(tiles, parts)
    out, start = [], 0
    for p in range(parts):
        n = base + (p < extra)
        out.append((start, n))
        start += n
    return out


def _layout(stage: Stage, n_specs: int, n_tiles: int, L: int, policy: str,
            split_idle: bool) -> tuple[int, int]:
    """(workloads per round, N-partitions per workload)."""
    if n_specs == 1:
        return 1, min(L, n_tiles)
    if stage.is_projection or policy == "per_head":
        conc = min(L, n_specs)
        parts = min(L // conc, n_tiles) if split_idle else 1
        return conc, max(1, parts)
    parts = min(L, n_tiles)
    return min(n_specs, max(1, L // parts)), parts


def _phases_in_order(wset: WorkloadSet):
    """Group specs by (layer, stage), keeping first-appearance order."""
    groups: dict[tuple[int, Stage], list[tuple[int, WorkloadSpec]]] = {}
    for i, s in enumerate(wset.specs):
        groups.setdefault((s.layer, s.stage), []).append((i, s))
    return groups.items()


def orchestrate(wset: WorkloadSet, arch: ArchConfig, policy: str = "partition_n",
                split_idle: bool = True, ztbs: dict[Stage, ZeroTileBook] | None = None) -> Assignment:
    """Map every workload onto Legions.

    Projections go round-robin over Legions, one head per Legion; Legions
    left idle by a short head list N-split the heads. Attention stages
    partition N across all Legions (``partition_n``) so several heads run
    side by side only when a head has fewer N-tiles than there are Legions.
    A single workload per stage is N-split across all Legions.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown mapping policy {policy!r}; choose from {', '.join(POLICIES)}")
    L = arch.legions
    if ztbs:
        for stage, book in ztbs.items():
            for s in wset.by_stage(stage):
                book.check_shape(expected_shape(s.K, s.N, arch, s.mode))
    phases = []
    for (layer, stage), items in _phases_in_order(wset):
        first = items[0][1]
        mode = arch.effective_mode(first.mode)
        tile_cols = mode.ratio * arch.core_dim
        n_tiles = cdiv(first.N, tile_cols)
        conc, parts = _layout(stage, len(items), n_tiles, L, policy, split_idle)
        rounds = []
        for r in range(cdiv(len(items), conc)):
            batch = items[r * conc:(r + 1) * conc]
            tasks = []
            for j, (idx, spec) in enumerate(batch):
                nt_spec = cdiv(spec.N, tile_cols)
                for p, (start, count) in enumerate(split_tiles(nt_spec, min(parts, nt_spec))):
                    c0 = start * tile_cols
                    tasks.append(Task(spec, idx, j * parts + p, r, start, count, c0,
                                      min(spec.N, (start + count) * tile_cols) - c0,
                                      activation_tensor(spec), weight_tensor(spec)))
            sharing: dict[tuple, list[int]] = {}
            for t in tasks:
                sharing.setdefault(t.act_tensor, []).append(t.legion)
            rounds.append(tuple(
                Task(**{**t.__dict__, "destinations": tuple(sharing[t.act_tensor])}) for t in tasks
            ))
        phases.append(Phase(layer, stage, tuple(rounds), conc, parts))
    return Assignment(arch, tuple(phases), tuple(wset.specs), dict(ztbs) if ztbs else None)
