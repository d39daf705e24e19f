"""Matrix file I/O shared across the CLI and dataset loaders.

Two formats:

* CSV — rectangular, no header, decimal floats.
* binary — magic bytes ``LVMM``, two little-endian uint64 dims
  (rows, cols), then row-major little-endian float64 payload.

Readers sniff the format from the leading magic bytes, so any path works
regardless of extension.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"LVMM"


class MatrixParseError(Exception):
    """Raised on malformed matrix files; message carries row/column location."""


def write_matrix_binary(path, A):
    A = np.ascontiguousarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-d array, got ndim={A.ndim}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<QQ", A.shape[0], A.shape[1]))
        fh.write(A.astype("<f8").tobytes(order="C"))


def write_matrix_csv(path, A):
    A = np.asarray(A, dtype=np.float64)
    np.savetxt(path, A, delimiter=",", fmt="%.17g")


def write_matrix(path, A):
    """Write binary when the suffix is not ``.csv``, else CSV."""
    if Path(path).suffix.lower() == ".csv":
        write_matrix_csv(path, A)
    else:
        write_matrix_binary(path, A)


def read_matrix_binary(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise MatrixParseError(f"{path}: bad magic bytes {magic!r}")
        header = fh.read(16)
        if len(header) != 16:
            raise MatrixParseError(f"{path}: truncated header")
        rows, cols = struct.unpack("<QQ", header)
        payload = fh.read()
    expected = rows * cols * 8
    if len(payload) != expected:
        raise MatrixParseError(
            f"{path}: expected {expected} payload bytes, got {len(payload)}"
        )
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).copy()


def read_matrix_csv(path, skip_header=0):
    """Parse a headerless numeric CSV, reporting the location of bad cells."""
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if lineno <= skip_header:
                continue
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise MatrixParseError(
                    f"{path}: ragged row {lineno}: expected {width} columns, "
                    f"got {len(cells)}"
                )
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                for col, c in enumerate(cells, start=1):
                    try:
                        float(c)
                    except ValueError:
                        raise MatrixParseError(
                            f"{path}: non-numeric cell at row {lineno}, "
                            f"column {col}: {c.strip()!r}"
                        ) from None
                raise
    if not rows:
        raise MatrixParseError(f"{path}: empty file")
    return np.asarray(rows, dtype=np.float64)


def read_matrix(path, skip_header=0):
    """Read either format, sniffing binary by its magic bytes."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == MAGIC:
        return read_matrix_binary(path)
    return read_matrix_csv(path, skip_header=skip_header)
