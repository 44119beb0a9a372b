"""Per-Legion tile schedule with N -> K -> M loop order."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..analytic import TileCounts, cdiv, tile_counts
from ..config import ArchConfig, PrecisionMode
from ..workloads import WorkloadSpec
from .ztb import ZeroTileBook, expected_shape

SKIP_CYCLES = 1  # mapper cursor advance over a fully-sparse window


@dataclass(frozen=True, eq=False)
class TileSchedule:
    """Windows (n-tile, k-chunk) in column-major order and the M-tile events inside them.

    ``active`` marks, per window, the cores holding a real non-zero tile.
    Every event of a Legion's task shares the task's multicast destination set.
    """

    M: int
    K: int
    N: int
    mode: PrecisionMode
    tiles: TileCounts
    core_dim: int
    cores: int
    win_n: np.ndarray
    win_k: np.ndarray
    skip: np.ndarray
    active: np.ndarray  # (windows, cores) bool
    destinations: tuple[int, ...] = (0,)

    @property
    def ratio(self) -> int:
        return self.mode.ratio

    @property
    def windows(self) -> int:
        return self.win_n.size

    @property
    def kt_raw(self) -> int:
        return cdiv(self.K, self.core_dim)

    @property
    def partial(self) -> np.ndarray:
        real = self.real_cores()
        return ~self.skip & (self.active.sum(axis=1) < real)

    def real_cores(self) -> np.ndarray:
        """Cores per window that map to an actual K-tile."""
        return np.minimum(self.cores, self.kt_raw - self.win_k * self.cores)

    def events(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(n, k, m, skip) arrays, one entry per (window, m-tile)."""
        MT = self.tiles.MT
        n = np.repeat(self.win_n, MT)
        k = np.repeat(self.win_k, MT)
        m = np.tile(np.arange(MT), self.windows)
        return n, k, m, np.repeat(self.skip, MT)

    @property
    def event_count(self) -> int:
        return self.windows * self.tiles.MT

    @property
    def compute_events(self) -> int:
        return int((~self.skip).sum()) * self.tiles.MT

    def window_cycles(self, P: int) -> np.ndarray:
        D = self.core_dim
        return np.where(self.skip, SKIP_CYCLES, D * (self.tiles.MT + 1) + P).astype(np.int64)


def build_schedule(spec: WorkloadSpec, ztb: ZeroTileBook | None, arch: ArchConfig,
                   destinations: tuple[int, ...] = (0,), N: int | None = None) -> TileSchedule:
    """Tile one (possibly N-sliced) workload on one Legion.

    ``N`` overrides the workload's column count for Legions that own a slice.
    """
    N = spec.N if N is None else N
    mode = arch.effective_mode(spec.mode)
    tiles = tile_counts(spec.M, spec.K, N, arch, mode)
    shape = expected_shape(spec.K, N, arch, mode)
    if ztb is None:
        ztb = ZeroTileBook.dense(*shape)
    else:
        ztb.check_shape(shape)
    KT, NT = tiles.KT, tiles.NT
    win_n = np.repeat(np.arange(NT), KT)
    win_k = np.tile(np.arange(KT), NT)
    skip = ztb.fully_sparse().reshape(-1)
    active = ztb.active_cores().reshape(NT * KT, arch.cores_per_legion)
    return TileSchedule(spec.M, spec.K, N, mode, tiles, arch.core_dim, arch.cores_per_legion,
                        win_n, win_k, skip, active, tuple(destinations))
