"""Binary field snapshots.

Layout (little-endian): 16-byte magic ``b"KJBLAB-FIELD\\0\\0\\0\\0"``, u32 n,
u32 N, u8 kind (0 scalar, 1 Hermitian), then float64 values in row-major
grid order.  Hermitian fields store the n*n entries of each point row-major
as (re, im) pairs.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .field import GridSpec, HermitianField, ScalarField

MAGIC = b"KJBLAB-FIELD\0\0\0\0"
_HEADER = struct.Struct("<16sIIB")

SCALAR = 0
HERMITIAN = 1


def encode(f: ScalarField | HermitianField) -> bytes:
    g = f.grid
    if isinstance(f, ScalarField):
        kind, payload = SCALAR, np.ascontiguousarray(f.values, dtype="<f8")
    else:
        kind = HERMITIAN
        m = np.ascontiguousarray(f.matrices, dtype=np.complex128)
        payload = m.view(np.float64).astype("<f8", copy=False)
    return _HEADER.pack(MAGIC, g.n, g.N, kind) + payload.tobytes()


def decode(buf: bytes) -> ScalarField | HermitianField:
    if len(buf) < _HEADER.size:
        raise ValueError("truncated field header")
    magic, n, N, kind = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise ValueError(f"bad field magic {magic!r}")
    grid = GridSpec(n, N)
    data = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size)
    if kind == SCALAR:
        if data.size != grid.size:
            raise ValueError(f"expected {grid.size} values, found {data.size}")
        return ScalarField(grid, data.reshape(grid.shape).astype(float))
    if kind == HERMITIAN:
        want = grid.size * n * n * 2
        if data.size != want:
            raise ValueError(f"expected {want} values, found {data.size}")
        m = data.astype(float).view(np.complex128).reshape(grid.shape + (n, n))
        return HermitianField(grid, m)
    raise ValueError(f"unknown field kind {kind}")


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def save(path: str | os.PathLike, f: ScalarField | HermitianField) -> Path:
    return atomic_write_bytes(path, encode(f))


def load(path: str | os.PathLike) -> ScalarField | HermitianField:
    return decode(Path(path).read_bytes())
