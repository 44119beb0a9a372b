import pytest
from hypothesis import given, strategies as st

from dlegion.analytic import (
    DEFAULT_GRID, TileCounts, bandwidth_profile, corner_workloads, cri, legion_candidate,
    legion_latency, peak_throughput, psum_traffic_bytes, tfu, tile_counts, topology_ratios,
)
from dlegion.config import ArchConfig, PrecisionMode, arch_preset

from oracles import legion_cycles_walk, psum_rmw_walk

DL8 = arch_preset("dlegion-8")
P2, P4, DN = PrecisionMode.PROJ_8X2, PrecisionMode.PROJ_8X4, PrecisionMode.DENSE_8X8


def test_tile_counts_examples():
    assert tile_counts(2048, 2560, 2048, DL8, P2) == TileCounts(128, 20, 32)
    assert tile_counts(16, 16, 16, ArchConfig(1, 1, 16), DN) == TileCounts(1, 1, 1)
    assert tile_counts(17, 129, 65, DL8, P2) == TileCounts(2, 2, 2)


def test_latency_examples():
    assert legion_latency(TileCounts(128, 20, 32), DL8) == 1_323_536
    assert legion_latency(TileCounts(1, 1, 1), DL8.replace(pipeline_stages=0)) == 48


def test_tfu():
    assert tfu(DL8) == 16
    assert tfu(ArchConfig(1, 1, 64), "single_core") == 64
    assert tfu(ArchConfig(1, 1, 1)) == 1
    with pytest.raises(ValueError):
        tfu(DL8, "mesh")


def test_peak_throughput():
    assert peak_throughput(DL8, P2) == 131_072e9
    assert peak_throughput(DL8.replace(legions=64), P2) == 1.048576e15  # 1.049 POPS
    assert peak_throughput(ArchConfig(1, 1, 1, frequency=1.0), DN) == 2.0


def test_bandwidth_examples():
    prof = bandwidth_profile(DL8, P2)
    assert prof.legion_input_Bps == 128e9  # 1024 bits per cycle at 1 GHz
    assert bandwidth_profile(ArchConfig(1, 1, 1, frequency=1.0), DN).legion_input_Bps == 1.0
    r = topology_ratios(ArchConfig(1, 1, 64), legion_candidate(16, 16))
    assert r == {"input_bandwidth": 4.0, "psum_bandwidth": 0.25, "tfu": 0.25, "pes": 1.0}


def test_psum_traffic_matches_rmw_walk():
    for M, K, N in [(2048, 2560, 128), (17, 129, 65), (16, 16, 16), (100, 300, 70)]:
        assert psum_traffic_bytes(M, K, N, DL8, P2) == psum_rmw_walk(M, K, N, 16, 8, 4)
        one = DL8.replace(cores_per_legion=1)
        assert psum_traffic_bytes(M, K, N, DL8, P2, spatial=False) == psum_rmw_walk(M, K, N, 16, 1, 4)
        assert psum_traffic_bytes(M, K, N, one, P2) == psum_rmw_walk(M, K, N, 16, 1, 4)


def test_psum_single_k_step_is_write_only():
    M, N = 64, 64
    assert psum_traffic_bytes(M, 128, N, DL8, P2) == M * N * 4


def test_default_grid_ranking():
    scores = cri([legion_candidate(c, d) for c, d in DEFAULT_GRID])
    assert [s.label for s in scores][0] == "8x16x16"
    assert [s.label for s in scores] == ["8x16x16", "4x32x32", "16x8x8", "2x64x64"]


def test_cri_needs_two():
    with pytest.raises(ValueError, match=">=2 candidates required"):
        cri([legion_candidate(8, 16)])


def test_cri_tie_break():
    a = legion_candidate(8, 16)
    b = legion_candidate(8, 16).replace(name="twin")
    s = cri([b, a])
    assert s[0].cri == s[1].cri
    assert [x.label for x in s] == ["8x16x16", "twin"]  # stable secondary order by label


def test_dominated_candidate_scores_lower():
    good = legion_candidate(8, 16)
    worse = good.replace(pipeline_stages=50, name="slow")  # same bandwidth and TFU, higher latency
    third = legion_candidate(4, 32)
    s = {x.label: x.cri for x in cri([good, worse, third])}
    assert s["slow"] < s["8x16x16"]


@pytest.mark.parametrize("k", [2.0, 10.0, 0.5])
def test_cri_ranking_scale_invariant(k):
    cands = [legion_candidate(c, d) for c, d in DEFAULT_GRID]
    wl = corner_workloads()
    base = [s.label for s in cri(cands, wl)]
    scaled = [legion_candidate(c, d, frequency=1e9 * k) for c, d in DEFAULT_GRID]
    assert [s.label for s in cri(scaled, wl)] == base


@given(M=st.integers(1, 3000), K=st.integers(1, 3000), N=st.integers(1, 3000),
       C=st.sampled_from([1, 2, 4, 8]), D=st.sampled_from([2, 4, 8, 16]), P=st.integers(0, 6),
       mode=st.sampled_from(list(PrecisionMode)))
def test_latency_matches_schedule_walk(M, K, N, C, D, P, mode):
    arch = ArchConfig(1, C, D, pipeline_stages=P)
    t = tile_counts(M, K, N, arch, mode)
    assert legion_latency(t, arch) == legion_cycles_walk(M, K, N, D, C, P, mode.ratio)


@given(st.integers(1, 50), st.integers(1, 50), st.integers(1, 50), st.integers(0, 9))
def test_latency_monotone(MT, KT, NT, P):
    arch = ArchConfig(1, 8, 16, pipeline_stages=P)
    base = legion_latency(TileCounts(MT, KT, NT), arch)
    assert legion_latency(TileCounts(MT + 1, KT, NT), arch) >= base
    assert legion_latency(TileCounts(MT, KT + 1, NT), arch) >= base
    assert legion_latency(TileCounts(MT, KT, NT + 1), arch) >= base
    assert legion_latency(TileCounts(MT, KT, NT), arch.replace(pipeline_stages=P + 1)) >= base
    assert legion_latency(TileCounts(MT, KT, NT), arch.replace(core_dim=17)) >= base


@given(st.integers(1, 8), st.integers(1, 8))
def test_more_cores_divides_kt(kt, k):
    C, D = 2, 8
    K = C * D * k * kt
    a = tile_counts(64, K, 64, ArchConfig(1, C, D), DN).KT
    b = tile_counts(64, K, 64, ArchConfig(1, C * k, D), DN).KT
    assert b == -(-a // k)


@given(st.integers(1, 64))
def test_peak_linear_in_legions(L):
    assert peak_throughput(DL8.replace(legions=L), P2) == L * peak_throughput(DL8.replace(legions=1), P2)
