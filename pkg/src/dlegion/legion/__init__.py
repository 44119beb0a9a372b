"""Multi-Legion simulator: zero-tile books, schedules, orchestration, NoC, timing."""

from .noc import NocAddress, NocTraffic, TileFetch, noc_traffic
from .orchestrator import Assignment, Phase, Task, orchestrate
from .schedule import SKIP_CYCLES, TileSchedule, build_schedule
from .simulator import (
    FunctionalMismatch, LegionState, PsumOverflowError, SimResult, legion_gemm, simulate,
)
from .ztb import ZeroTileBook, ZtbShapeError, expected_shape, mask_weights

__all__ = [
    "NocAddress", "NocTraffic", "TileFetch", "noc_traffic", "Assignment", "Phase", "Task",
    "orchestrate", "SKIP_CYCLES", "TileSchedule", "build_schedule", "FunctionalMismatch",
    "LegionState", "PsumOverflowError", "SimResult", "legion_gemm", "simulate",
    "ZeroTileBook", "ZtbShapeError", "expected_shape", "mask_weights",
]
