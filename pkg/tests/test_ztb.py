import numpy as np
import pytest
from hypothesis import given, strategies as st

from dlegion.config import ArchConfig, PrecisionMode
from dlegion.legion.ztb import ZeroTileBook, ZtbShapeError, expected_shape, mask_weights

ARCH = ArchConfig(1, 4, 4)


def test_shape_and_bit_count():
    assert expected_shape(40, 33, ARCH, PrecisionMode.PROJ_8X2) == (10, 3, 4)
    book = ZeroTileBook.dense(10, 3, 4)
    assert book.kt == 3 and book.bit_count == 3 * 3 * 4


def test_padded_slots_are_never_zero_tiles():
    book = ZeroTileBook.full(10, 2, 4)
    assert not book.bits[:, 2, 2:].any()  # slots past K-tile 10 do not exist
    assert book.fully_sparse().all()


def test_window_classification():
    bits = np.zeros((1, 2, 4), bool)
    bits[0, 0] = [1, 1, 1, 1]
    bits[0, 1] = [1, 0, 0, 0]
    book = ZeroTileBook(8, 1, 4, bits)
    assert book.fully_sparse().tolist() == [[True, False]]
    assert book.partially_sparse().tolist() == [[False, True]]
    assert book.active_cores()[0, 1].tolist() == [False, True, True, True]


def test_bytes_round_trip(tmp_path):
    book = ZeroTileBook.random(13, 5, 4, 0.4, seed=3, granularity="tile")
    p = tmp_path / "m.ztb"
    book.save(p)
    blob = p.read_bytes()
    assert blob[:4] == b"ZTB\0"
    assert ZeroTileBook.load(p) == book


def test_core_bits_contiguous_little_endian():
    bits = np.zeros((1, 1, 8), bool)
    bits[0, 0, 0] = True  # core 0 of the first window -> bit 0 of the first payload byte
    blob = ZeroTileBook(8, 1, 8, bits).to_bytes()
    assert blob[-1] == 1


def test_bad_files():
    with pytest.raises(ValueError, match="magic"):
        ZeroTileBook.from_bytes(b"XXXX" + bytes(20))
    blob = ZeroTileBook.dense(8, 2, 4).to_bytes()
    with pytest.raises(ValueError, match="payload"):
        ZeroTileBook.from_bytes(blob + b"\0")


def test_shape_mismatch_message():
    with pytest.raises(ZtbShapeError) as exc:
        ZeroTileBook.dense(8, 2, 4).check_shape((8, 3, 4))
    assert exc.value.expected == (8, 3, 4) and exc.value.found == (8, 2, 4)


def test_from_weights_detects_zero_tiles():
    W = np.ones((16, 16), int)
    W[4:8, :] = 0
    book = ZeroTileBook.from_weights(W, ARCH, PrecisionMode.PROJ_8X2)
    assert book.bits.reshape(-1).tolist() == [False, True, False, False]


def test_random_exact_counts():
    book = ZeroTileBook.random(64, 8, 8, 0.5, seed=1)
    assert book.fully_sparse().sum() == 32
    with pytest.raises(ValueError):
        ZeroTileBook.random(4, 1, 1, 1.5)


@given(kt=st.integers(1, 30), nt=st.integers(1, 6), C=st.integers(1, 8), rate=st.floats(0, 1),
       seed=st.integers(0, 99))
def test_mask_weights_clears_marked_tiles(kt, nt, C, rate, seed):
    arch = ArchConfig(1, C, 2)
    K, N = kt * 2, nt * 8 - 3
    book = ZeroTileBook.random(*expected_shape(K, N, arch, PrecisionMode.PROJ_8X2), rate, seed, "tile")
    W = np.ones((K, N), int)
    masked = mask_weights(W, book, arch, PrecisionMode.PROJ_8X2)
    assert ZeroTileBook.from_weights(masked, arch, PrecisionMode.PROJ_8X2) == book
