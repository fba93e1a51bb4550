"""Dense-matrix file I/O.

Two interchange formats are supported:

* binary ``.dmat``: magic bytes ``DMAT``, u32 version (=1), u64 rows,
  u64 cols, then rows*cols little-endian IEEE-754 float64 values in
  row-major order.  Bit-exact across save/load; authoritative for
  benchmarks.
* CSV: one row per line, comma-separated decimal literals, no header.
  Intended for small fixtures.

All loaders reject non-finite values and report the offending location.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"DMAT"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


def check_finite(values, origin="matrix"):
    """Return ``values`` unchanged, raising DataError on any NaN/Inf."""
    if values.size and not np.isfinite(values).all():
        bad = np.argwhere(~np.isfinite(np.atleast_2d(values)))[0]
        raise DataError(
            f"{origin}: non-finite value at row {bad[0]}, col {bad[1]}"
        )
    return values


def as_matrix(values, origin="matrix"):
    """Coerce to a finite, 2-D, C-contiguous float64 array."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"{origin}: expected a 2-D array, got ndim={arr.ndim}")
    return check_finite(arr, origin)


def save_matrix(matrix, path, format=None):
    """Write a matrix to ``path`` in binary or CSV format.

    ``format`` is ``"binary"`` or ``"csv"``; when omitted it is inferred
    from the file suffix (``.csv`` -> csv, anything else -> binary).
    """
    path = Path(path)
    matrix = as_matrix(matrix, origin=str(path))
    fmt = format or ("csv" if path.suffix.lower() == ".csv" else "binary")
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, matrix.shape[0], matrix.shape[1]))
            fh.write(matrix.astype("<f8", copy=False).tobytes(order="C"))
    elif fmt == "csv":
        with open(path, "w") as fh:
            for row in matrix:
                fh.write(",".join(repr(float(v)) for v in row))
                fh.write("\n")
    else:
        raise ValueError(f"unknown matrix format {fmt!r}")
    return path


def load_matrix(path, format=None):
    """Read a matrix from ``path``; see ``save_matrix`` for formats."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"matrix file not found: {path}")
    fmt = format or ("csv" if path.suffix.lower() == ".csv" else "binary")
    if fmt == "binary":
        return _load_binary(path)
    if fmt == "csv":
        return _load_csv(path)
    raise ValueError(f"unknown matrix format {fmt!r}")


def _load_binary(path):
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise DataError(f"{path}: truncated header")
        magic, version, rows, cols = _HEADER.unpack(header)
        if magic != MAGIC:
            raise DataError(f"{path}: bad magic bytes {magic!r}")
        if version != VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        if rows == 0 or cols == 0:
            raise DataError(f"{path}: empty matrix ({rows}x{cols})")
        payload = fh.read(8 * rows * cols)
        if len(payload) != 8 * rows * cols:
            raise DataError(
                f"{path}: expected {rows * cols} values, file is short"
            )
        if fh.read(1):
            raise DataError(f"{path}: trailing bytes after {rows}x{cols} values")
    values = np.frombuffer(payload, dtype="<f8").reshape(rows, cols)
    return check_finite(np.ascontiguousarray(values, dtype=np.float64), str(path))


def _load_csv(path):
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise DataError(
                    f"{path}:{lineno}: expected {width} columns, got {len(fields)}"
                )
            try:
                rows.append([float(f) for f in fields])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: empty matrix")
    return as_matrix(np.array(rows), origin=str(path))
