import math
import random

import pytest
from hypothesis import given, strategies as st

from dlegion.metrics import (
    COUNTERS, Event, ReportError, RunManifest, aggregate, emit, parse, ratio, ratio_table,
)
from dlegion.workloads import STAGES

STAGE_NAMES = [s.value for s in STAGES]
events = st.lists(st.builds(
    Event, st.sampled_from(STAGE_NAMES),
    *[st.integers(0, 10**9) for _ in COUNTERS],
), max_size=30)


def test_empty_log():
    r = aggregate([], 1e9)
    assert r.stages == {} and r.total.cycles == 0 and r.total.throughput_ops == 0.0


def test_rejects_bad_events():
    with pytest.raises(ReportError, match="negative"):
        aggregate([Event("QProj", cycles=-1)], 1e9)
    with pytest.raises(ReportError, match="stage"):
        aggregate([Event("bogus")], 1e9)
    with pytest.raises(ReportError, match="overflow"):
        aggregate([Event("QProj", ops=1 << 62), Event("QProj", ops=1 << 62)], 1e9)


@given(events)
def test_permutation_invariant(evs):
    shuffled = list(evs)
    random.Random(0).shuffle(shuffled)
    assert aggregate(evs, 1e9) == aggregate(shuffled, 1e9)


@given(events)
def test_totals_and_derived(evs):
    r = aggregate(evs, 1.5e9)
    for c in COUNTERS:
        assert getattr(r.total, c) == sum(getattr(e, c) for e in evs)
    t = r.total
    if t.cycles:
        assert math.isclose(t.throughput_ops * t.wall_time_s, t.ops, rel_tol=1e-12, abs_tol=1e-6)


@given(events)
def test_json_csv_round_trip(evs):
    man = RunManifest("simulate", ("a.json",), 3, ("out.json",), "0.1.0", "abc")
    r = aggregate(evs, 1e9, "arch", "model", man, {"legion_cycles": [1, 2]})
    back = parse(emit(r, "json"), "json")
    assert back == r
    via_csv = parse(emit(back, "csv"), "csv")
    assert via_csv.stages == r.stages and via_csv.total == r.total
    assert parse(emit(via_csv, "csv"), "csv") == via_csv


def test_csv_has_stage_rows_and_total():
    evs = [Event(s, cycles=1) for s in STAGE_NAMES]
    lines = emit(aggregate(evs, 1e9), "csv").strip().splitlines()
    assert len(lines) == 1 + len(STAGE_NAMES) + 1 and lines[-1].split(",")[3] == "total"


def test_bad_formats():
    with pytest.raises(ReportError):
        emit(aggregate([], 1e9), "xml")
    with pytest.raises(ReportError):
        parse("{}", "json")


@given(st.integers(1, 10**6), st.integers(1, 10**6))
def test_ratio_antisymmetric(a, b):
    assert math.isclose(ratio(a, b) * ratio(b, a), 1.0)


def test_ratio_table_zero_denominators():
    a = aggregate([Event("QProj", cycles=4, ops=8)], 1e9, "a")
    b = aggregate([Event("QProj", cycles=2)], 1e9, "b")
    row = ratio_table(a, b)[0]
    assert row["cycles"] == 2.0 and math.isinf(row["ops"])
    assert math.isnan(ratio_table(b, b)[0]["ops"])
