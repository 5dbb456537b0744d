"""Binary snapshot files for gridded fields.

Layout (little-endian throughout):

    bytes 0..3   magic  b"PCHL"
    bytes 4..7   u32    format version (currently 1)
    bytes 8..11  u32    dim  (number of axes)
    bytes 12..15 u32    n    (nodes per axis)
    bytes 16..   f8     n**dim node values, C (row-major) order

The payload is written exactly as produced, so a write/read round trip
is bit-identical and snapshot files are byte-reproducible across runs.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PCHL"
VERSION = 1
_HEADER = struct.Struct("<III")


def write_snapshot(path, values: np.ndarray) -> None:
    """Write a field to ``path`` in the PCHL format."""
    arr = np.ascontiguousarray(values, dtype="<f8")
    shape = arr.shape
    if len(shape) < 1 or any(s != shape[0] for s in shape):
        raise ValueError("snapshots hold fields with equal extent per axis")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(VERSION, arr.ndim, shape[0]))
        fh.write(arr.tobytes(order="C"))


def read_snapshot(path) -> np.ndarray:
    """Read a PCHL snapshot back into an array."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a PCHL snapshot (bad magic {raw[:4]!r})")
    version, dim, n = _HEADER.unpack_from(raw, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    count = n**dim
    payload = raw[4 + _HEADER.size:]
    if len(payload) != 8 * count:
        raise ValueError(
            f"{path}: payload holds {len(payload)} bytes, header promises {8 * count}"
        )
    return np.frombuffer(payload, dtype="<f8").reshape((n,) * dim).copy()
