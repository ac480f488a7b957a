"""Snapshot files and small tabular outputs.

Binary snapshot layout (little endian)::

    b"AXNS"            magic
    u32 version        currently 1
    u32 ncomp          1 for scalars, 3 for (v^r, v^theta, v^z)
    u32 nr, u32 nz
    f64 r_max, f64 z_len, f64 time
    u8 * ncomp         parity per component (0 even, 1 odd)
    f64 * ncomp*nr*nz  values, component-major then row-major (r slow, z fast)
"""
from __future__ import annotations

import csv
import io
import json
import math
import struct
from pathlib import Path

import numpy as np

from .grid import EVEN, ODD, Grid, ScalarField, Snapshot, Trajectory, VectorFieldCyl

MAGIC = b"AXNS"
VERSION = 1
_HEADER = struct.Struct("<4sIIII3d")
_PARITY_CODE = {EVEN: 0, ODD: 1}
_PARITY_NAME = {0: EVEN, 1: ODD}


class SnapshotFormatError(ValueError):
    pass


def _components(snap: Snapshot) -> list[ScalarField]:
    if isinstance(snap, VectorFieldCyl):
        return [snap.vr, snap.vtheta, snap.vz]
    return [snap]


def encode_snapshot(snap: Snapshot, time: float) -> bytes:
    comps = _components(snap)
    g = snap.grid
    head = _HEADER.pack(MAGIC, VERSION, len(comps), g.nr, g.nz, g.r_max, g.z_len, float(time))
    par = bytes(_PARITY_CODE[c.parity] for c in comps)
    data = np.stack([c.values for c in comps]).astype("<f8").tobytes(order="C")
    return head + par + data


def decode_snapshot(buf: bytes) -> tuple[Snapshot, float]:
    if len(buf) < _HEADER.size:
        raise SnapshotFormatError("file shorter than the header")
    magic, version, ncomp, nr, nz, r_max, z_len, time = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotFormatError(f"unsupported version {version}")
    if ncomp not in (1, 3):
        raise SnapshotFormatError(f"unsupported component count {ncomp}")
    off = _HEADER.size
    parities = [_PARITY_NAME[b] for b in buf[off:off + ncomp]]
    off += ncomp
    n = ncomp * nr * nz
    if len(buf) != off + 8 * n:
        raise SnapshotFormatError(f"expected {off + 8 * n} bytes, found {len(buf)}")
    vals = np.frombuffer(buf, dtype="<f8", count=n, offset=off).reshape(ncomp, nr, nz)
    grid = Grid(nr, nz, r_max, z_len)
    fields = [ScalarField(grid, vals[k].astype(float), parities[k]) for k in range(ncomp)]
    if ncomp == 1:
        return fields[0], time
    return VectorFieldCyl(*fields, wall="closed"), time


def write_snapshot(path, snap: Snapshot, time: float) -> Path:
    path = Path(path)
    path.write_bytes(encode_snapshot(snap, time))
    return path


def read_snapshot(path) -> tuple[Snapshot, float]:
    return decode_snapshot(Path(path).read_bytes())


def write_trajectory(directory, traj: Trajectory, prefix: str = "snap") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(traj))))
    return [write_snapshot(directory / f"{prefix}_{k:0{width}d}.axns", s, t)
            for k, (t, s) in enumerate(zip(traj.times, traj.snapshots))]


def read_trajectory(directory, prefix: str = "snap") -> Trajectory:
    files = sorted(Path(directory).glob(f"{prefix}_*.axns"))
    if not files:
        raise FileNotFoundError(f"no {prefix}_*.axns snapshots in {directory}")
    pairs = [read_snapshot(f) for f in files]
    return Trajectory(np.array([t for _, t in pairs]), tuple(s for s, _ in pairs))


def field_csv(f: ScalarField) -> str:
    """``r,z,value`` rows for every cell."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "z", "value"])
    R, Z = f.grid.mesh()
    for r, z, v in zip(R.ravel(), Z.ravel(), f.values.ravel()):
        w.writerow([repr(float(r)), repr(float(z)), repr(float(v))])
    return buf.getvalue()


def rows_csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def _clean(obj):
    """Make nested data JSON-safe: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps(obj) -> str:
    """Deterministic JSON (sorted keys, fixed separators, shortest float repr)."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"
