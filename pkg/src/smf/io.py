"""Matrix file formats.

Two interchange formats are supported: a small binary container (magic
``SMF1``, two little-endian uint32 dimensions, then row-major float64
payload) that round-trips bit for bit, and headerless comma-separated
text for interoperability.  Vectors are stored as single-column matrices.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

__all__ = [
    "read_smf1",
    "write_smf1",
    "read_csv_matrix",
    "write_csv_matrix",
    "load_matrix",
    "save_matrix",
]

_MAGIC = b"SMF1"
_HEADER = struct.Struct("<4sII")


def _as_matrix(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"expected a matrix or vector, got ndim={arr.ndim}")
    return arr


def write_smf1(path, arr: np.ndarray) -> None:
    arr = _as_matrix(arr)
    rows, cols = arr.shape
    if rows >= 2**32 or cols >= 2**32:
        raise ValueError("matrix too large for the header fields")
    payload = np.ascontiguousarray(arr, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, rows, cols))
        fh.write(payload)


def read_smf1(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, rows, cols = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        payload = fh.read()
    expected = rows * cols * 8
    if len(payload) != expected:
        raise ValueError(
            f"{path}: payload has {len(payload)} bytes, expected {expected}"
        )
    return np.frombuffer(payload, dtype="<f8").astype(float).reshape(rows, cols)


def write_csv_matrix(path, arr: np.ndarray) -> None:
    arr = _as_matrix(arr)
    # %.17g round-trips float64 exactly and is locale independent
    np.savetxt(path, arr, fmt="%.17g", delimiter=",")


def read_csv_matrix(path) -> np.ndarray:
    arr = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    return arr


def load_matrix(path) -> np.ndarray:
    """Read a matrix, dispatching on the file suffix."""
    suffix = Path(path).suffix.lower()
    if suffix == ".smf1":
        return read_smf1(path)
    if suffix == ".csv":
        return read_csv_matrix(path)
    raise ValueError(f"{path}: unsupported matrix format {suffix!r}")


def save_matrix(path, arr: np.ndarray) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".smf1":
        write_smf1(path, arr)
    elif suffix == ".csv":
        write_csv_matrix(path, arr)
    else:
        raise ValueError(f"{path}: unsupported matrix format {suffix!r}")
