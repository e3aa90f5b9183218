"""On-disk matrix format: 8-byte magic, dtype code, u64 dims, payload.

Layout (little-endian): magic "CLATTN01", one dtype byte (1 = float32),
rows and cols as unsigned 64-bit, then rows*cols*4 bytes of row-major
float32 data. Round-trips are bitwise exact.
"""

import struct

import numpy as np

from .core import as_matrix

MAGIC = b"CLATTN01"
DTYPE_FLOAT32 = 1
_HEADER = struct.Struct("<8sBQQ")


class TensorFileError(ValueError):
    """Malformed tensor file; `field` names the offending header field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def save_tensor(path, m) -> None:
    """Write a matrix to `path` in the CLATTN01 format."""
    m = as_matrix(m, "m")
    rows, cols = m.shape
    payload = np.ascontiguousarray(m, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, DTYPE_FLOAT32, rows, cols))
        f.write(payload)


def load_tensor(path) -> np.ndarray:
    """Read a CLATTN01 matrix; rejects bad magic, dtype, or payload size."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise TensorFileError("header", f"file is {len(raw)} bytes, need {_HEADER.size}")
    magic, dtype, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise TensorFileError("magic", f"expected {MAGIC!r}, found {magic!r}")
    if dtype != DTYPE_FLOAT32:
        raise TensorFileError("dtype", f"unsupported code {dtype}")
    if rows < 1 or cols < 1:
        raise TensorFileError("shape", f"{rows}x{cols} is not a valid matrix shape")
    payload = raw[_HEADER.size :]
    expected = rows * cols * 4
    if len(payload) != expected:
        raise TensorFileError(
            "payload length", f"expected {expected} bytes, found {len(payload)}"
        )
    m = np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()
    if not np.isfinite(m).all():
        raise TensorFileError("payload", "contains non-finite values")
    return m
