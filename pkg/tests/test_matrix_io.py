import struct

import numpy as np
import pytest

from zslembed.errors import DataError
from zslembed.matrix_io import load_matrix, save_matrix


def test_csv_parse(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("1,2\n3,4\n")
    m = load_matrix(path)
    assert np.array_equal(m, [[1.0, 2.0], [3.0, 4.0]])


def test_csv_round_trip_full_precision(tmp_path):
    rng = np.random.default_rng(0)
    m = rng.standard_normal((4, 3))
    path = save_matrix(m, tmp_path / "m.csv")
    assert np.array_equal(load_matrix(path), m)


def test_binary_round_trip_bit_identical(tmp_path):
    rng = np.random.default_rng(1)
    m = rng.standard_normal((10, 10))
    first = tmp_path / "a.dmat"
    second = tmp_path / "b.dmat"
    save_matrix(m, first)
    loaded = load_matrix(first)
    assert np.array_equal(loaded, m)
    save_matrix(loaded, second)
    assert first.read_bytes() == second.read_bytes()


def test_binary_empty_matrix_rejected(tmp_path):
    path = tmp_path / "empty.dmat"
    path.write_bytes(struct.pack("<4sIQQ", b"DMAT", 1, 0, 3))
    with pytest.raises(DataError, match="empty matrix"):
        load_matrix(path)


def test_binary_bad_magic(tmp_path):
    path = tmp_path / "bad.dmat"
    path.write_bytes(struct.pack("<4sIQQ", b"NOPE", 1, 1, 1) + b"\x00" * 8)
    with pytest.raises(DataError, match="magic"):
        load_matrix(path)


def test_binary_truncated_payload(tmp_path):
    path = tmp_path / "short.dmat"
    path.write_bytes(struct.pack("<4sIQQ", b"DMAT", 1, 2, 2) + b"\x00" * 16)
    with pytest.raises(DataError, match="short"):
        load_matrix(path)


def test_csv_ragged_rows_rejected(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("1,2\n3\n")
    with pytest.raises(DataError, match="expected 2 columns"):
        load_matrix(path)


def test_non_finite_rejected_with_location(tmp_path):
    path = tmp_path / "nan.csv"
    path.write_text("1,2\n3,nan\n")
    with pytest.raises(DataError, match="row 1, col 1"):
        load_matrix(path)


def test_missing_file():
    with pytest.raises(DataError, match="not found"):
        load_matrix("/nonexistent/m.dmat")
