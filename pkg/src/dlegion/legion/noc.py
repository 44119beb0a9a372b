"""NoC addressing and multicast traffic accounting."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

LINK_WEIGHTS, LINK_ACTIVATIONS, LINK_PSUMS = 0, 1, 2
LINK_NAMES = {LINK_WEIGHTS: "weights", LINK_ACTIVATIONS: "activations", LINK_PSUMS: "psums"}

LEGION_BITS, CORE_BITS, LINK_BITS = 6, 3, 2


@dataclass(frozen=True)
class NocAddress:
    """``[LEGION_ID | CORE_ID | LINK_ID]`` prefix, optionally multicast to a Legion set."""

    legion_id: int
    core_id: int
    link_id: int
    multicast: bool = False
    legion_mask: int = 0

    def __post_init__(self):
        if not 0 <= self.legion_id < 1 << LEGION_BITS:
            raise ValueError("legion_id does not fit 6 bits")
        if not 0 <= self.core_id < 1 << CORE_BITS:
            raise ValueError("core_id does not fit 3 bits")
        if not 0 <= self.link_id < 3:
            raise ValueError("link_id must be 0 (weights), 1 (activations) or 2 (psums)")
        if self.legion_mask >> (1 << LEGION_BITS):
            raise ValueError("legion_mask wider than 64 Legions")

    def check(self, legions: int, cores: int) -> None:
        if self.legion_id >= legions or self.core_id >= cores:
            raise ValueError(f"address {self} outside a {legions}x{cores} machine")
        if self.legion_mask >> legions:
            raise ValueError("multicast mask names a Legion that does not exist")

    @property
    def prefix(self) -> int:
        return (self.legion_id << (CORE_BITS + LINK_BITS)) | (self.core_id << LINK_BITS) | self.link_id

    def encode(self) -> int:
        """prefix in bits 0..10, multicast flag in bit 11, Legion mask from bit 12."""
        return self.prefix | (int(self.multicast) << 11) | (self.legion_mask << 12)

    @classmethod
    def decode(cls, word: int) -> "NocAddress":
        return cls(
            legion_id=(word >> (CORE_BITS + LINK_BITS)) & ((1 << LEGION_BITS) - 1),
            core_id=(word >> LINK_BITS) & ((1 << CORE_BITS) - 1),
            link_id=word & ((1 << LINK_BITS) - 1),
            multicast=bool((word >> 11) & 1),
            legion_mask=word >> 12,
        )

    @classmethod
    def to_legions(cls, legions: Iterable[int], core_id: int, link_id: int) -> "NocAddress":
        ids = sorted(set(legions))
        if len(ids) == 1:
            return cls(ids[0], core_id, link_id)
        mask = 0
        for i in ids:
            mask |= 1 << i
        return cls(ids[0], core_id, link_id, True, mask)

    def destinations(self) -> list[int]:
        if not self.multicast:
            return [self.legion_id]
        return [i for i in range(1 << LEGION_BITS) if self.legion_mask >> i & 1]


@dataclass
class TileFetch:
    """Tiles one Legion pulls over one link. ``codes`` identify tiles within ``tensor``;
    equal (tensor, code) pairs requested by several Legions are the same off-chip tile."""

    link: int
    tensor: tuple
    legion: int
    codes: np.ndarray
    nbytes: np.ndarray


@dataclass
class NocTraffic:
    offchip: dict[int, int] = field(default_factory=lambda: {l: 0 for l in LINK_NAMES})
    delivered: dict[int, int] = field(default_factory=lambda: {l: 0 for l in LINK_NAMES})
    unique_tiles: int = 0
    deliveries: int = 0

    def __iadd__(self, other: "NocTraffic") -> "NocTraffic":
        for l in LINK_NAMES:
            self.offchip[l] += other.offchip[l]
            self.delivered[l] += other.delivered[l]
        self.unique_tiles += other.unique_tiles
        self.deliveries += other.deliveries
        return self

    @property
    def offchip_total(self) -> int:
        return sum(self.offchip.values())

    @property
    def delivered_total(self) -> int:
        return sum(self.delivered.values())

    def as_dict(self) -> dict:
        return {
            "offchip": {LINK_NAMES[l]: v for l, v in self.offchip.items()},
            "delivered": {LINK_NAMES[l]: v for l, v in self.delivered.items()},
            "unique_tiles": self.unique_tiles,
            "deliveries": self.deliveries,
        }


def noc_traffic(fetches: Iterable[TileFetch]) -> NocTraffic:
    """Off-chip bytes count each distinct tile once; delivered bytes count every
    Legion that receives it."""
    groups: dict[tuple, list[TileFetch]] = defaultdict(list)
    for f in fetches:
        groups[(f.link, f.tensor)].append(f)
    out = NocTraffic()
    for (link, _), items in groups.items():
        codes = np.concatenate([f.codes for f in items])
        nbytes = np.concatenate([f.nbytes for f in items])
        if not codes.size:
            continue
        uniq, first = np.unique(codes, return_index=True)
        out.offchip[link] += int(nbytes[first].sum())
        out.delivered[link] += int(nbytes.sum())
        out.unique_tiles += int(uniq.size)
        out.deliveries += int(codes.size)
    return out
