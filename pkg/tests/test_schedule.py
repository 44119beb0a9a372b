import numpy as np
import pytest

from dlegion.config import ArchConfig, PrecisionMode
from dlegion.legion.schedule import build_schedule
from dlegion.legion.ztb import ZeroTileBook, ZtbShapeError, expected_shape
from dlegion.workloads import Stage, WorkloadSpec

ARCH = ArchConfig(1, 4, 4)
SPEC = WorkloadSpec(12, 40, 36, PrecisionMode.PROJ_8X2, Stage.Q_PROJ)


def test_dense_event_count_and_order():
    s = build_schedule(SPEC, None, ARCH)
    MT, KT, NT = 3, 3, 3
    assert s.event_count == MT * KT * NT and s.compute_events == s.event_count
    n, k, m, skip = s.events()
    keys = list(zip(n, k, m))
    assert keys == sorted(keys)  # N outer, K middle, M inner
    assert not skip.any()


def test_all_zero_book_has_no_compute():
    book = ZeroTileBook.full(*expected_shape(40, 36, ARCH, SPEC.mode))
    s = build_schedule(SPEC, book, ARCH)
    assert s.compute_events == 0
    assert s.window_cycles(4).tolist() == [1] * s.windows


def test_half_sparse_halves_compute():
    spec = WorkloadSpec(64, 256, 128, PrecisionMode.PROJ_8X2, Stage.Q_PROJ)
    book = ZeroTileBook.random(*expected_shape(256, 128, ARCH, spec.mode), 0.5, seed=4)
    s = build_schedule(spec, book, ARCH)
    assert s.compute_events * 2 == s.event_count


def test_partial_window_keeps_latency():
    shape = expected_shape(40, 36, ARCH, SPEC.mode)
    bits = np.zeros((shape[1], 3, 4), bool)
    bits[0, 0, 1] = True
    s = build_schedule(SPEC, ZeroTileBook(*shape, bits), ARCH)
    assert s.partial.tolist()[0] and not s.skip.any()
    assert s.active[0].tolist() == [True, False, True, True]
    assert len(set(s.window_cycles(4).tolist())) == 1


def test_shape_mismatch():
    with pytest.raises(ZtbShapeError):
        build_schedule(SPEC, ZeroTileBook.dense(10, 2, 4), ARCH)


def test_destinations_kept():
    assert build_schedule(SPEC, None, ARCH, destinations=(0, 3)).destinations == (0, 3)
