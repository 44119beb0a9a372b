"""Zero-tile book: per-workload bitmask of structurally zero weight tiles.

One bit per core-pass weight tile (D rows of K by R*D columns of N). Tiles
are grouped into windows of C consecutive K-tiles, one per core, that share an
N-tile. Bits are stored in schedule order (N outer, K-chunk inner) with the C
core bits contiguous inside each window.

File layout (little-endian)::

    magic   4s   b"ZTB\\0"
    version u16  1
    kt_raw  u32  ceil(K / D)
    nt      u32  ceil(N / (R*D))
    cores   u32  C
    bits    packed, little bit order, nt * ceil(kt_raw / cores) * cores bits
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..analytic import cdiv
from ..config import ArchConfig, PrecisionMode

MAGIC = b"ZTB\0"
VERSION = 1
_HEADER = struct.Struct("<4sHIII")


class ZtbShapeError(ValueError):
    def __init__(self, expected: tuple[int, int, int], found: tuple[int, int, int]):
        self.expected, self.found = expected, found
        super().__init__(
            f"ZTB shape mismatch: expected (kt_raw, nt, cores) = {expected}, found {found}"
        )


def expected_shape(K: int, N: int, arch: ArchConfig, mode: PrecisionMode) -> tuple[int, int, int]:
    D = arch.core_dim
    R = arch.effective_mode(mode).ratio
    return cdiv(K, D), cdiv(N, R * D), arch.cores_per_legion


@dataclass(frozen=True, eq=False)
class ZeroTileBook:
    kt_raw: int
    nt: int
    cores: int
    bits: np.ndarray  # bool, shape (nt, kt, cores)

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool).reshape(self.nt, self.kt, self.cores).copy()
        bits &= self.real_mask  # slots past the last K-tile hold no tile
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def kt(self) -> int:
        return cdiv(self.kt_raw, self.cores)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.kt_raw, self.nt, self.cores

    @property
    def real_mask(self) -> np.ndarray:
        """(kt, cores) mask of slots that correspond to an actual K-tile."""
        idx = np.arange(self.kt)[:, None] * self.cores + np.arange(self.cores)[None, :]
        return idx < self.kt_raw

    @property
    def bit_count(self) -> int:
        return self.nt * self.kt * self.cores

    def fully_sparse(self) -> np.ndarray:
        """(nt, kt) bool: every real tile of the window is zero."""
        real = self.real_mask[None]
        return np.all(self.bits | ~real, axis=2)

    def partially_sparse(self) -> np.ndarray:
        return np.any(self.bits, axis=2) & ~self.fully_sparse()

    def active_cores(self) -> np.ndarray:
        """(nt, kt, cores) bool: core holds a real, non-zero tile."""
        return self.real_mask[None] & ~self.bits

    def slice_n(self, start: int, count: int) -> "ZeroTileBook":
        return ZeroTileBook(self.kt_raw, count, self.cores, self.bits[start:start + count])

    def digest(self) -> str:
        return hashlib.sha256(np.packbits(self.bits).tobytes()
                              + _HEADER.pack(MAGIC, VERSION, *self.shape)).hexdigest()[:16]

    def __eq__(self, other):
        return (isinstance(other, ZeroTileBook) and self.shape == other.shape
                and np.array_equal(self.bits, other.bits))

    __hash__ = None

    # -- constructors ---------------------------------------------------------

    @classmethod
    def dense(cls, kt_raw: int, nt: int, cores: int) -> "ZeroTileBook":
        return cls(kt_raw, nt, cores, np.zeros((nt, cdiv(kt_raw, cores), cores), bool))

    @classmethod
    def full(cls, kt_raw: int, nt: int, cores: int) -> "ZeroTileBook":
        return cls(kt_raw, nt, cores, np.ones((nt, cdiv(kt_raw, cores), cores), bool))

    @classmethod
    def for_spec(cls, K: int, N: int, arch: ArchConfig, mode: PrecisionMode) -> "ZeroTileBook":
        return cls.dense(*expected_shape(K, N, arch, mode))

    @classmethod
    def random(cls, kt_raw: int, nt: int, cores: int, rate: float, seed: int = 0,
               granularity: str = "window") -> "ZeroTileBook":
        """Exactly round(rate * population) windows (or tiles) marked zero."""
        if not 0.0 <= rate <= 1.0:
            raise ValueError("rate must be in [0, 1]")
        rng = np.random.default_rng(seed)
        book = cls.dense(kt_raw, nt, cores)
        bits = np.zeros_like(book.bits)
        if granularity == "window":
            nwin = nt * book.kt
            chosen = rng.permutation(nwin)[: round(rate * nwin)]
            flat = bits.reshape(nwin, cores)
            flat[chosen] = True
        elif granularity == "tile":
            real = np.broadcast_to(book.real_mask[None], bits.shape)
            where = np.flatnonzero(real)
            chosen = rng.permutation(where)[: round(rate * where.size)]
            bits.reshape(-1)[chosen] = True
        else:
            raise ValueError(f"unknown granularity {granularity!r}")
        return cls(kt_raw, nt, cores, bits)

    @classmethod
    def from_weights(cls, W: np.ndarray, arch: ArchConfig, mode: PrecisionMode) -> "ZeroTileBook":
        """Zero detection: mark every all-zero core-pass tile of ``W`` (K x N)."""
        K, N = W.shape
        kt_raw, nt, C = expected_shape(K, N, arch, mode)
        D, RD = arch.core_dim, arch.effective_mode(mode).ratio * arch.core_dim
        padded = np.zeros((kt_raw * D, nt * RD), dtype=bool)
        padded[:K, :N] = W != 0
        nz = padded.reshape(kt_raw, D, nt, RD).any(axis=(1, 3))  # (kt_raw, nt)
        kt = cdiv(kt_raw, C)
        bits = np.zeros((nt, kt * C), bool)
        bits[:, :kt_raw] = ~nz.T
        return cls(kt_raw, nt, C, bits.reshape(nt, kt, C))

    # -- serialization --------------------------------------------------------

    def to_bytes(self) -> bytes:
        packed = np.packbits(self.bits.reshape(-1), bitorder="little")
        return _HEADER.pack(MAGIC, VERSION, self.kt_raw, self.nt, self.cores) + packed.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ZeroTileBook":
        if len(blob) < _HEADER.size:
            raise ValueError("truncated ZTB header")
        magic, version, kt_raw, nt, cores = _HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise ValueError("not a ZTB file (bad magic)")
        if version != VERSION:
            raise ValueError(f"unsupported ZTB version {version}")
        nbits = nt * cdiv(kt_raw, cores) * cores
        payload = np.frombuffer(blob, dtype=np.uint8, offset=_HEADER.size)
        if payload.size != cdiv(nbits, 8):
            raise ValueError(f"ZTB payload holds {payload.size} bytes, expected {cdiv(nbits, 8)}")
        bits = np.unpackbits(payload, bitorder="little")[:nbits].astype(bool)
        return cls(kt_raw, nt, cores, bits)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "ZeroTileBook":
        return cls.from_bytes(Path(path).read_bytes())

    def check_shape(self, expected: tuple[int, int, int]) -> None:
        if tuple(expected) != self.shape:
            raise ZtbShapeError(tuple(expected), self.shape)


def mask_weights(W: np.ndarray, book: ZeroTileBook, arch: ArchConfig, mode: PrecisionMode) -> np.ndarray:
    """Copy of ``W`` with every tile the book marks as zero cleared."""
    K, N = W.shape
    book.check_shape(expected_shape(K, N, arch, mode))
    D, RD = arch.core_dim, arch.effective_mode(mode).ratio * arch.core_dim
    out = np.array(W, copy=True)
    zero = book.bits.reshape(book.nt, -1)[:, : book.kt_raw]  # (nt, kt_raw)
    for n, kr in zip(*np.nonzero(zero)):
        out[kr * D:(kr + 1) * D, n * RD:(n + 1) * RD] = 0
    return out
