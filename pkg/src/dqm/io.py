"""Field serialization: CSV tables and a compact little-endian binary dump.

Binary layout::

    int64   rank
    int64   points[rank]
    float64 extents[rank]
    float64 samples...      # real: one per point; complex: (re, im) pairs

The sample kind is recovered from the payload length, so no flag is stored.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .grid import Grid


def write_field_csv(path, grid: Grid, values: np.ndarray) -> None:
    values = grid.check_field(values)
    cols = [f"i{a}" for a in range(grid.rank)] + ["real", "imag"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for idx in np.ndindex(*grid.shape):
            v = complex(values[idx])
            w.writerow([*idx, repr(v.real), repr(v.imag)])


def read_field_csv(path, grid: Grid) -> np.ndarray:
    out = np.zeros(grid.shape, dtype=complex)
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        for row in r:
            idx = tuple(int(i) for i in row[: grid.rank])
            out[idx] = float(row[grid.rank]) + 1j * float(row[grid.rank + 1])
    return out


def write_polar_csv(path, polar) -> None:
    grid = polar.grid
    cols = [f"i{a}" for a in range(grid.rank)] + ["rho", "S", "mask"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for idx in np.ndindex(*grid.shape):
            w.writerow([*idx, repr(float(polar.rho[idx])), repr(float(polar.phase[idx])),
                        int(polar.node_mask[idx])])


def dump_field(path, grid: Grid, values: np.ndarray) -> None:
    values = grid.check_field(values)
    header = struct.pack(f"<q{grid.rank}q{grid.rank}d", grid.rank, *grid.points, *grid.extents)
    if np.iscomplexobj(values):
        payload = np.ascontiguousarray(values, dtype="<c16").view("<f8")
    else:
        payload = np.ascontiguousarray(values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes(order="C"))


def load_field(path) -> tuple[tuple[float, ...], tuple[int, ...], np.ndarray]:
    """Return ``(extents, points, values)`` from a binary dump."""
    data = Path(path).read_bytes()
    (rank,) = struct.unpack_from("<q", data, 0)
    if not 1 <= rank <= 3:
        raise ValueError(f"{path}: bad rank {rank}")
    off = 8
    points = struct.unpack_from(f"<{rank}q", data, off)
    off += 8 * rank
    extents = struct.unpack_from(f"<{rank}d", data, off)
    off += 8 * rank
    n = int(np.prod(points))
    body = np.frombuffer(data, dtype="<f8", offset=off)
    if body.size == n:
        values = body.reshape(points).copy()
    elif body.size == 2 * n:
        values = body.view("<c16").reshape(points).copy()
    else:
        raise ValueError(f"{path}: payload has {body.size} floats, expected {n} or {2 * n}")
    return tuple(extents), tuple(points), values
