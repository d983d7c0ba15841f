"""
Binary state snapshots.

Layout (little-endian throughout):

    magic   4 bytes  b"PKSN"
    version u32      currently 1
    nx      u32
    ny      u32
    ly      f64
    t       f64
    a       f64
    payload 2 * nx * ny f64: n then omega, row-major (x fastest-varying last)

Round trips are byte-exact; truncated files, bad magic and version
mismatches are rejected with explicit messages.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"PKSN"
VERSION = 1
_HEADER = struct.Struct("<4sIII3d")


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True)
class Snapshot:
    nx: int
    ny: int
    ly: float
    t: float
    a: float
    n: np.ndarray
    omega: np.ndarray


def write_snapshot(path, snap: Snapshot) -> None:
    n = np.ascontiguousarray(snap.n, dtype="<f8")
    w = np.ascontiguousarray(snap.omega, dtype="<f8")
    if n.shape != (snap.nx, snap.ny) or w.shape != (snap.nx, snap.ny):
        raise SnapshotError(
            f"payload shapes {n.shape}/{w.shape} do not match header "
            f"({snap.nx}, {snap.ny})"
        )
    header = _HEADER.pack(MAGIC, VERSION, snap.nx, snap.ny, snap.ly, snap.t, snap.a)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(n.tobytes())
        fh.write(w.tobytes())


def read_snapshot(path) -> Snapshot:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise SnapshotError(
            f"file too short for header: {len(raw)} bytes < {_HEADER.size}"
        )
    magic, version, nx, ny, ly, t, a = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise SnapshotError(f"snapshot version {version} unsupported (expected {VERSION})")
    expected = _HEADER.size + 2 * nx * ny * 8
    if len(raw) != expected:
        raise SnapshotError(
            f"payload truncated or oversized: {len(raw)} bytes, expected {expected}"
        )
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    n = body[: nx * ny].reshape(nx, ny).copy()
    w = body[nx * ny :].reshape(nx, ny).copy()
    return Snapshot(nx=nx, ny=ny, ly=ly, t=t, a=a, n=n, omega=w)
