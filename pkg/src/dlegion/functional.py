"""Bit-accurate model of one adaptive-precision diagonal-input core.

Products are formed the way the reconfigurable PE forms them: operands are
split into 2-bit digits (low digits unsigned, top digit signed), sixteen
2-bit multipliers are arranged as four groups of four, and each group sums
its lane products with the activation-digit shifts. Groups are then combined
per precision mode. The array itself is modeled row by row: the stationary
tile is column-rotated, every activation row enters the top of the array
rotated, and the activation registers shift one column per PE row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytic import cdiv
from .config import ArchConfig, PrecisionMode

LANES = 16
GROUPS = 4
ACC_MIN, ACC_MAX = -(2**31), 2**31 - 1


class WidthError(ValueError):
    """An operand does not fit its declared two's-complement width."""


@dataclass(frozen=True)
class IntMatrix:
    data: np.ndarray
    bits: int

    def __post_init__(self):
        object.__setattr__(self, "data", np.asarray(self.data, dtype=np.int64))
        check_width(self.data, self.bits)

    @property
    def shape(self):
        return self.data.shape

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


def check_width(x: np.ndarray, bits: int, what: str = "matrix") -> None:
    lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    if x.size and (x.min() < lo or x.max() > hi):
        raise WidthError(f"{what} has elements outside the {bits}-bit range [{lo}, {hi}]")


@dataclass(frozen=True)
class PEConfig:
    mode: PrecisionMode

    @property
    def products_per_cycle(self) -> int:
        return self.mode.ratio

    @property
    def groups_per_product(self) -> int:
        return GROUPS // self.mode.ratio

    @property
    def lanes_used(self) -> int:
        return self.products_per_cycle * self.groups_per_product * (LANES // GROUPS)


def digits(x: np.ndarray, bits: int) -> list[np.ndarray]:
    """Split into 2-bit digits, least significant first; only the top digit is signed."""
    n = bits // 2
    out = [(x >> (2 * i)) & 3 for i in range(n - 1)]
    out.append(x >> (2 * (n - 1)))
    return out


def _group(a_digits: list[np.ndarray], w_digit) -> np.ndarray:
    # one multiplier group: four 2-bit lanes, shifted by activation digit position
    acc = a_digits[0] * w_digit
    for i in range(1, len(a_digits)):
        acc = acc + (a_digits[i] * w_digit) * (4**i)
    return acc


def pe_products(a: np.ndarray, weights: list[np.ndarray], mode: PrecisionMode) -> list[np.ndarray]:
    """Products a*w_i for the R interleaved weights held by each PE."""
    ad = digits(a, 8)
    out = []
    for w in weights:
        wd = digits(w, mode.weight_bits)
        acc = _group(ad, wd[0])
        for j in range(1, len(wd)):
            acc = acc + _group(ad, wd[j]) * (4**j)
        out.append(acc)
    return out


def _rotation(D: int, sign: int) -> np.ndarray:
    r, j = np.meshgrid(np.arange(D), np.arange(D), indexing="ij")
    return (r - sign * j) % D


def permute_weights(W: np.ndarray, D: int) -> np.ndarray:
    """Rotate column j down by j rows (works on stacks of tiles too)."""
    W = np.asarray(W)
    if W.shape[-2:] != (D, D):
        raise ValueError(f"expected a {D}x{D} tile, got {W.shape}")
    return np.take_along_axis(W, np.broadcast_to(_rotation(D, 1), W.shape), axis=-2)


def unpermute_weights(Wp: np.ndarray, D: int) -> np.ndarray:
    Wp = np.asarray(Wp)
    if Wp.shape[-2:] != (D, D):
        raise ValueError(f"expected a {D}x{D} tile, got {Wp.shape}")
    return np.take_along_axis(Wp, np.broadcast_to(_rotation(D, -1), Wp.shape), axis=-2)


def core_matmul(A, W_tiles, mode: PrecisionMode, ternary_strict: bool = False,
                return_state: bool = False):
    """Run one activation tile through a core holding R interleaved weight tiles.

    ``A`` is M x D int8; ``W_tiles`` holds R = mode.ratio tiles of D x D with
    elements in the mode's weight width. Returns R exact M x D products.
    Leading batch axes on ``A`` and the tiles run independent cores at once.
    """
    A = np.asarray(A, dtype=np.int64)
    tiles = [np.asarray(w, dtype=np.int64) for w in W_tiles]
    R = mode.ratio
    if len(tiles) != R:
        raise ValueError(f"{mode.value} needs {R} weight tiles, got {len(tiles)}")
    if A.ndim < 2:
        raise ValueError("activation tile must be at least 2-D")
    M, D = A.shape[-2:]
    check_width(A, 8, "activation tile")
    for w in tiles:
        check_width(w, mode.weight_bits, "weight tile")
        if ternary_strict and mode is PrecisionMode.PROJ_8X2 and np.any(w == -2):
            raise WidthError("weight value -2 is outside the ternary set {-1, 0, 1}")
    stationary = [permute_weights(w, D) for w in tiles]

    Mp = cdiv(M, D) * D if M else 0
    batch = A.shape[:-2]
    regs = np.zeros((*batch, Mp, D), dtype=np.int64)
    # entry rotation: column c of the top PE row sees activation (-c) mod D
    regs[..., :M, :] = A[..., (-np.arange(D)) % D]
    psum = np.zeros((R, *batch, Mp, D), dtype=np.int64)
    for r in range(D):
        prods = pe_products(regs, [w[..., r:r + 1, :] for w in stationary], mode)
        for i in range(R):
            psum[i] += prods[i]
        regs = np.roll(regs, 1, axis=-1)  # diagonal move to the next PE row
    out = [psum[i, ..., :M, :] for i in range(R)]
    for o in out:
        if o.size and (o.min() < ACC_MIN or o.max() > ACC_MAX):
            raise OverflowError("core output exceeds the 32-bit accumulator")
    if return_state:
        return out, stationary
    return out


def core_cycle_count(M: int, mode: PrecisionMode, arch: ArchConfig) -> int:
    """Single-residency pass: weight load D, stream the M rows, pipeline P, drain D."""
    D = arch.core_dim
    return D * (cdiv(M, D) + 1) + arch.pipeline_stages + D


def max_abs_output(D: int, weight_bits: int) -> int:
    """Largest |output| a single D-deep core pass can produce."""
    return (2**7) * (2 ** (weight_bits - 1)) * D


def random_weights(rng: np.random.Generator, shape, bits: int, ternary: bool = True) -> np.ndarray:
    if bits == 2 and ternary:
        return rng.integers(-1, 2, size=shape, dtype=np.int64)
    return rng.integers(-(1 << (bits - 1)), 1 << (bits - 1), size=shape, dtype=np.int64)


def random_activations(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(-128, 128, size=shape, dtype=np.int64)
