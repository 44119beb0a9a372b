import numpy as np
import pytest
from hypothesis import given, strategies as st

from dlegion.legion.noc import (
    LINK_ACTIVATIONS, LINK_WEIGHTS, NocAddress, TileFetch, noc_traffic,
)


def test_prefix_layout():
    a = NocAddress(5, 3, 2)
    assert a.prefix == (5 << 5) | (3 << 2) | 2
    assert NocAddress.decode(a.encode()) == a


def test_bounds():
    for bad in [(64, 0, 0), (0, 8, 0), (0, 0, 3), (-1, 0, 0)]:
        with pytest.raises(ValueError):
            NocAddress(*bad)
    with pytest.raises(ValueError):
        NocAddress(9, 0, 0).check(8, 8)
    with pytest.raises(ValueError):
        NocAddress.to_legions([0, 9], 0, 1).check(8, 8)


def test_multicast_mask():
    a = NocAddress.to_legions(range(8), 0, LINK_ACTIVATIONS)
    assert a.multicast and a.destinations() == list(range(8))
    assert NocAddress.decode(a.encode()) == a
    assert not NocAddress.to_legions([3], 1, 0).multicast


def test_broadcast_one_tile():
    tile = 16 * 16
    f = [TileFetch(LINK_ACTIVATIONS, ("X", 0), L, np.array([7]), np.array([tile])) for L in range(8)]
    t = noc_traffic(f)
    assert t.offchip[LINK_ACTIVATIONS] == tile
    assert t.delivered[LINK_ACTIVATIONS] == 8 * tile


def test_distinct_tensors_not_merged():
    f = [TileFetch(LINK_WEIGHTS, ("K", 0, g), 0, np.array([1]), np.array([10])) for g in range(4)]
    assert noc_traffic(f).offchip[LINK_WEIGHTS] == 40


@given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 20)), min_size=1, max_size=80))
def test_conservation(pairs):
    size = lambda c: 10 + c  # noqa: E731
    fetches = [TileFetch(LINK_WEIGHTS, ("W",), L, np.array([c]), np.array([size(c)])) for L, c in pairs]
    t = noc_traffic(fetches)
    fan = {}
    for _, c in pairs:
        fan[c] = fan.get(c, 0) + 1
    assert t.offchip_total == sum(size(c) for c in fan)
    assert t.delivered_total == sum(size(c) * k for c, k in fan.items())
