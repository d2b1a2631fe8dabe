"""Binary field files, CSV exports and run manifests."""

from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .grid import Axis, Grid, ScalarField

MAGIC = b"HJF1"
_AXIS = struct.Struct("<QddB")


class FieldFormatError(ValueError):
    pass


def save_field(path: str | Path, field: ScalarField) -> Path:
    """Write ``field`` as HJF1: header, per-axis records, row-major little-endian f64 values."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", field.grid.ndim))
        for a in field.grid.axes:
            fh.write(_AXIS.pack(a.count, a.min, a.max, 1 if a.periodic else 0))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C"))
    return path


def load_field(path: str | Path) -> ScalarField:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise FieldFormatError(f"{path}: bad magic {data[:4]!r}")
    (ndim,) = struct.unpack_from("<I", data, 4)
    if not 1 <= ndim <= 8:
        raise FieldFormatError(f"{path}: unsupported ndim {ndim}")
    off = 8
    axes = []
    for _ in range(ndim):
        if off + _AXIS.size > len(data):
            raise FieldFormatError(f"{path}: truncated header")
        count, lo, hi, per = _AXIS.unpack_from(data, off)
        off += _AXIS.size
        axes.append(Axis(float(lo), float(hi), int(count), bool(per)))
    grid = Grid(tuple(axes))
    n = int(np.prod(grid.shape))
    if len(data) - off != 8 * n:
        raise FieldFormatError(f"{path}: expected {n} values, found {(len(data) - off) / 8:g}")
    values = np.frombuffer(data, dtype="<f8", count=n, offset=off).astype(float).reshape(grid.shape)
    return ScalarField(grid, values)


def _writer(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh)


def _fmt(v) -> str:
    return repr(float(v))


def write_field_csv(path: str | Path, field: ScalarField) -> Path:
    """One row per node: coordinates then value."""
    path = Path(path)
    pts = field.grid.points()
    fh, w = _writer(path)
    with fh:
        w.writerow([f"x{k + 1}" for k in range(field.grid.ndim)] + ["value"])
        for p, v in zip(pts, field.values.ravel()):
            w.writerow([_fmt(c) for c in p] + [_fmt(v)])
    return path


def write_trajectory_csv(path: str | Path, traj) -> Path:
    path = Path(path)
    n = traj.states.shape[1]
    fh, w = _writer(path)
    with fh:
        w.writerow(["t"] + [f"x{k + 1}" for k in range(n)] + ["u", "d", "h", "lhs", "feasible"])
        for i in range(len(traj)):
            w.writerow([_fmt(traj.times[i])] + [_fmt(c) for c in traj.states[i]]
                       + [_fmt(traj.controls[i][0]), _fmt(traj.disturbances[i][0]),
                          _fmt(traj.h_values[i]), _fmt(traj.constraint_lhs[i]),
                          int(bool(traj.filter_feasible[i]))])
    return path


def write_contour_csv(path: str | Path, polylines: Sequence[np.ndarray]) -> Path:
    path = Path(path)
    fh, w = _writer(path)
    with fh:
        w.writerow(["line", "x1", "x2"])
        for i, line in enumerate(polylines):
            for p in line:
                w.writerow([i, _fmt(p[0]), _fmt(p[1])])
    return path


def write_profile_csv(path: str | Path, x: np.ndarray, columns: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    fh, w = _writer(path)
    with fh:
        w.writerow(["x"] + list(columns))
        for i, xi in enumerate(np.asarray(x).ravel()):
            w.writerow([_fmt(xi)] + [_fmt(np.asarray(c).ravel()[i]) for c in columns.values()])
    return path


def write_rows_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    fh, w = _writer(path)
    with fh:
        w.writerow(list(header))
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def write_manifest(path: str | Path, entries: Mapping[str, object]) -> Path:
    """``key=value`` lines in insertion order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for k, v in entries.items():
        if "=" in k or "\n" in k:
            raise ValueError(f"bad manifest key {k!r}")
        lines.append(f"{k}={v}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_manifest(path: str | Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            k, _, v = line.partition("=")
            out[k] = v
    return out
