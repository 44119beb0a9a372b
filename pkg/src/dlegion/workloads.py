"""Attention-layer GEMM workloads derived from a model description."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field

from .config import ConfigError, ModelConfig, PrecisionMode, validate


class Stage(str, enum.Enum):
    Q_PROJ = "QProj"
    K_PROJ = "KProj"
    V_PROJ = "VProj"
    ATTN_SCORE = "AttnScore"
    ATTN_OUTPUT = "AttnOutput"
    OUT_PROJ = "OutProj"

    @property
    def is_projection(self) -> bool:
        return self in PROJECTION_STAGES


STAGES = tuple(Stage)
PROJECTION_STAGES = frozenset({Stage.Q_PROJ, Stage.K_PROJ, Stage.V_PROJ, Stage.OUT_PROJ})


@dataclass(frozen=True)
class WorkloadSpec:
    """One GEMM: (M x K) activations times (K x N) stationary operand."""

    M: int
    K: int
    N: int
    mode: PrecisionMode
    stage: Stage
    head_id: int | None = None
    kv_group_id: int | None = None
    layer: int = 0

    def __post_init__(self):
        errs = [f"{d} >= 1 violated" for d in ("M", "K", "N") if getattr(self, d) < 1]
        if not self.stage.is_projection and self.mode is not PrecisionMode.DENSE_8X8:
            errs.append(f"{self.stage.value} must run in Dense8x8")
        if errs:
            raise ConfigError(errs)

    @property
    def ops(self) -> int:
        return 2 * self.M * self.K * self.N

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.M, self.K, self.N


@dataclass
class WorkloadSet:
    specs: list[WorkloadSpec] = field(default_factory=list)

    @property
    def per_stage_ops(self) -> dict[Stage, int]:
        ops = Counter()
        for s in self.specs:
            ops[s.stage] += s.ops
        return {st: ops[st] for st in STAGES if st in ops}

    @property
    def total_ops(self) -> int:
        return sum(s.ops for s in self.specs)

    def by_stage(self, stage: Stage) -> list[WorkloadSpec]:
        return [s for s in self.specs if s.stage is stage]

    def __len__(self) -> int:
        return len(self.specs)


def derive_attention_workloads(model: ModelConfig, fused_proj: bool = False) -> WorkloadSet:
    """Prefill attention GEMMs for every layer.

    Per layer, in execution order: Q projection per query head, K and V
    projections per KV head, attention score and attention output per query
    head, then one output projection. With ``fused_proj`` the Q/K/V
    projections are emitted as one GEMM each with N = heads x head_dim.
    """
    validate(model)
    S, Hd, dh = model.seq_len, model.hidden_size, model.head_dim
    H, G = model.num_heads, model.num_kv_heads
    pmode = model.projection_mode
    dense = PrecisionMode.DENSE_8X8
    group = model.group_size
    specs: list[WorkloadSpec] = []
    for layer in range(model.layers):
        if fused_proj:
            specs.append(WorkloadSpec(S, Hd, H * dh, pmode, Stage.Q_PROJ, layer=layer))
            specs.append(WorkloadSpec(S, Hd, G * dh, pmode, Stage.K_PROJ, layer=layer))
            specs.append(WorkloadSpec(S, Hd, G * dh, pmode, Stage.V_PROJ, layer=layer))
        else:
            specs += [WorkloadSpec(S, Hd, dh, pmode, Stage.Q_PROJ, h, h // group, layer) for h in range(H)]
            specs += [WorkloadSpec(S, Hd, dh, pmode, Stage.K_PROJ, g, g, layer) for g in range(G)]
            specs += [WorkloadSpec(S, Hd, dh, pmode, Stage.V_PROJ, g, g, layer) for g in range(G)]
        # scores = Q . K^T ; the K^T layout change is not modeled
        specs += [WorkloadSpec(S, dh, S, dense, Stage.ATTN_SCORE, h, h // group, layer) for h in range(H)]
        specs += [WorkloadSpec(S, S, dh, dense, Stage.ATTN_OUTPUT, h, h // group, layer) for h in range(H)]
        specs.append(WorkloadSpec(S, H * dh, Hd, pmode, Stage.OUT_PROJ, layer=layer))
    return WorkloadSet(specs)


def stage_distribution(wset: WorkloadSet) -> dict[Stage, float]:
    if not wset.specs:
        raise ValueError("empty workload set")
    total = wset.total_ops
    return {st: ops / total for st, ops in wset.per_stage_ops.items()}


def workload_rows(wset: WorkloadSet) -> list[dict]:
    """Per-stage table rows (stage, count, M, K, N, mode, ops) plus a total row."""
    rows = []
    for st in STAGES:
        specs = wset.by_stage(st)
        if not specs:
            continue
        first = specs[0]
        rows.append({
            "stage": st.value, "count": len(specs), "M": first.M, "K": first.K,
            "N": first.N, "mode": first.mode.value, "ops": sum(s.ops for s in specs),
        })
    rows.append({"stage": "total", "count": len(wset), "M": "", "K": "", "N": "",
                 "mode": "", "ops": wset.total_ops})
    return rows
