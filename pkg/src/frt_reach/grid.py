"""Dense rectangular grids, sampled fields, interpolation and finite differences.

Values live in C-ordered arrays of shape ``grid.shape``; ``values.ravel()`` is the
row-major layout used by the file formats in :mod:`frt_reach.io`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np

MAX_NDIM = 4


@dataclass(frozen=True)
class Axis:
    min: float
    max: float
    count: int
    periodic: bool = False

    @property
    def spacing(self) -> float:
        span = self.max - self.min
        return span / self.count if self.periodic else span / (self.count - 1)


@dataclass(frozen=True)
class Grid:
    axes: tuple[Axis, ...]

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.count for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> np.ndarray:
        return np.array([a.spacing for a in self.axes])

    @property
    def lower(self) -> np.ndarray:
        return np.array([a.min for a in self.axes])

    @property
    def upper(self) -> np.ndarray:
        return np.array([a.max for a in self.axes])

    @property
    def periodic(self) -> tuple[bool, ...]:
        return tuple(a.periodic for a in self.axes)

    def coordinate_vectors(self) -> list[np.ndarray]:
        return [a.min + a.spacing * np.arange(a.count) for a in self.axes]

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.coordinate_vectors(), indexing="ij"))

    def points(self) -> np.ndarray:
        """All grid nodes as an ``(size, ndim)`` array in row-major order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=-1)

    def coordinate(self, index: Sequence[int]) -> np.ndarray:
        index = self._check_index(index)
        return self.lower + self.spacing * np.asarray(index, dtype=float)

    def index_of(self, point: Sequence[float]) -> tuple[int, ...]:
        """Nearest node of ``point``; inverse of :meth:`coordinate` on nodes."""
        frac = (np.asarray(point, dtype=float) - self.lower) / self.spacing
        idx = np.rint(frac).astype(int)
        out = []
        for i, a in zip(idx, self.axes):
            out.append(int(i % a.count) if a.periodic else int(np.clip(i, 0, a.count - 1)))
        return tuple(out)

    def _check_index(self, index: Sequence[int]) -> tuple[int, ...]:
        index = tuple(int(i) for i in index)
        if len(index) != self.ndim:
            raise IndexError(f"expected {self.ndim} indices, got {len(index)}")
        for i, n in zip(index, self.shape):
            if not 0 <= i < n:
                raise IndexError(f"index {index} outside grid shape {self.shape}")
        return index

    def same_as(self, other: "Grid") -> bool:
        return self.axes == other.axes


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.size != self.grid.size:
            raise ValueError(f"field has {values.size} values, grid has {self.grid.size} points")
        values = values.reshape(self.grid.shape)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, np.array(values, dtype=float))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return interpolate_many(self, points)


def make_grid(bounds: Sequence[dict | Axis]) -> Grid:
    """Build a grid from per-dimension ``{min, max, count, periodic}`` records."""
    axes = []
    for b in bounds:
        if isinstance(b, Axis):
            b = {"min": b.min, "max": b.max, "count": b.count, "periodic": b.periodic}
        lo, hi, n = float(b["min"]), float(b["max"]), int(b["count"])
        if not (np.isfinite(lo) and np.isfinite(hi)) or lo >= hi:
            raise ValueError(f"need min < max, got [{lo}, {hi}]")
        if n < 2:
            raise ValueError(f"need count >= 2, got {n}")
        axes.append(Axis(lo, hi, n, bool(b.get("periodic", False))))
    if not 1 <= len(axes) <= MAX_NDIM:
        raise ValueError(f"ndim must be in [1, {MAX_NDIM}], got {len(axes)}")
    return Grid(tuple(axes))


def sample(grid: Grid, fn) -> ScalarField:
    """Evaluate ``fn`` on an ``(N, ndim)`` array of nodes."""
    return ScalarField(grid, np.asarray(fn(grid.points()), dtype=float))


# --------------------------------------------------------------------------- #
# interpolation


def _locate(grid: Grid, points: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Lower node index and fractional weight per dimension (clamp / wrap applied)."""
    lo_idx, weights = [], []
    for k, a in enumerate(grid.axes):
        s = (points[:, k] - a.min) / a.spacing
        if a.periodic:
            s = np.mod(s, a.count)
            i0 = np.floor(s).astype(np.intp)
            w = s - i0
            i0 = np.mod(i0, a.count)
        else:
            s = np.clip(s, 0.0, a.count - 1)
            i0 = np.minimum(np.floor(s).astype(np.intp), a.count - 2)
            w = s - i0
        lo_idx.append(i0)
        weights.append(w)
    return lo_idx, weights


def interpolate_many(field: ScalarField, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation at an ``(N, ndim)`` array of points."""
    grid = field.grid
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[-1] != grid.ndim:
        raise ValueError(f"points need {grid.ndim} components")
    if not np.all(np.isfinite(points)):
        raise ValueError("non-finite query point")
    lo_idx, weights = _locate(grid, points)
    out = np.zeros(points.shape[0])
    for corner in product((0, 1), repeat=grid.ndim):
        idx = []
        w = np.ones(points.shape[0])
        for k, (c, a) in enumerate(zip(corner, grid.axes)):
            i = lo_idx[k] + c
            if a.periodic:
                i = np.mod(i, a.count)
            idx.append(i)
            w = w * (weights[k] if c else 1.0 - weights[k])
        out += w * field.values[tuple(idx)]
    return out


def interpolate(field: ScalarField, point: Sequence[float]) -> float:
    point = np.asarray(point, dtype=float).reshape(1, -1)
    return float(interpolate_many(field, point)[0])


# --------------------------------------------------------------------------- #
# finite differences


def upwind_derivative_arrays(field: ScalarField) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-dimension (left, right) one-sided first differences over the whole grid.

    At non-periodic ends the missing side copies the available one.
    """
    v = field.values
    out = []
    for k, a in enumerate(field.grid.axes):
        if a.periodic:
            fwd = (np.roll(v, -1, axis=k) - v) / a.spacing
            out.append((np.roll(fwd, 1, axis=k), fwd))
            continue
        d = np.diff(v, axis=k) / a.spacing
        first = np.take(d, [0], axis=k)
        last = np.take(d, [-1], axis=k)
        out.append((np.concatenate([first, d], axis=k), np.concatenate([d, last], axis=k)))
    return out


def gradient_arrays(field: ScalarField) -> list[np.ndarray]:
    """Central differences inside, first-order one-sided at non-periodic ends."""
    out = []
    for left, right in upwind_derivative_arrays(field):
        out.append(0.5 * (left + right))
    # at non-periodic ends left == right already, which is the one-sided difference
    return out


def gradient_central(field: ScalarField, index: Sequence[int]) -> np.ndarray:
    index = field.grid._check_index(index)
    v = field.values
    g = np.empty(field.grid.ndim)
    for k, a in enumerate(field.grid.axes):
        i = index[k]
        def at(j):
            idx = list(index)
            idx[k] = j % a.count if a.periodic else j
            return v[tuple(idx)]
        if a.periodic or 0 < i < a.count - 1:
            g[k] = (at(i + 1) - at(i - 1)) / (2 * a.spacing)
        elif i == 0:
            g[k] = (at(1) - at(0)) / a.spacing
        else:
            g[k] = (at(i) - at(i - 1)) / a.spacing
    return g


def upwind_derivs(field: ScalarField, index: Sequence[int]) -> list[tuple[float, float]]:
    index = field.grid._check_index(index)
    return [(float(l[index]), float(r[index])) for l, r in upwind_derivative_arrays(field)]


def gradient_at(field: ScalarField, points: np.ndarray) -> np.ndarray:
    """Central-difference gradient at off-grid points from the interpolated 2n stencil."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, dim = points.shape
    steps = np.diag(field.grid.spacing)
    stencil = np.concatenate([points[None] + steps[:, None], points[None] - steps[:, None]])
    vals = interpolate_many(field, stencil.reshape(-1, dim)).reshape(2, dim, n)
    return ((vals[0] - vals[1]) / (2 * field.grid.spacing[:, None])).T


# --------------------------------------------------------------------------- #
# contours and distances


def zero_contour_2d(field: ScalarField, level: float = 0.0) -> list[np.ndarray]:
    """Marching squares; returns polylines as ``(k, 2)`` arrays (closed ones repeat the start)."""
    grid = field.grid
    if grid.ndim != 2:
        raise ValueError("zero_contour_2d needs a 2D grid")
    x, y = grid.coordinate_vectors()
    f = field.values - level
    nx, ny = f.shape
    above = f > 0

    # edge keys: ("h", i, j) joins (i,j)-(i+1,j); ("v", i, j) joins (i,j)-(i,j+1)
    def edge_point(key):
        kind, i, j = key
        if kind == "h":
            a, b = f[i, j], f[i + 1, j]
            t = a / (a - b)
            return (x[i] + t * (x[i + 1] - x[i]), y[j])
        a, b = f[i, j], f[i, j + 1]
        t = a / (a - b)
        return (x[i], y[j] + t * (y[j + 1] - y[j]))

    segments = []
    for i in range(nx - 1):
        col = above[i:i + 2]
        # skip columns without a sign change quickly
        if col.all() or not col.any():
            continue
        for j in range(ny - 1):
            c0, c1, c2, c3 = above[i, j], above[i + 1, j], above[i + 1, j + 1], above[i, j + 1]
            case = c0 | (c1 << 1) | (c2 << 2) | (c3 << 3)
            if case == 0 or case == 15:
                continue
            bottom, right, top, left = ("h", i, j), ("v", i + 1, j), ("h", i, j + 1), ("v", i, j)
            crossed = [e for e, (a, b) in zip(
                (bottom, right, top, left), ((c0, c1), (c1, c2), (c3, c2), (c0, c3))) if a != b]
            if len(crossed) == 2:
                segments.append((crossed[0], crossed[1]))
                continue
            # saddle: decide connectivity from the cell-centre average
            centre_above = (f[i, j] + f[i + 1, j] + f[i + 1, j + 1] + f[i, j + 1]) / 4 > 0
            if centre_above == bool(c0):
                # corner 0 connects through the centre; isolate corners 1 and 3
                segments += [(bottom, right), (top, left)]
            else:
                segments += [(left, bottom), (right, top)]
    return _chain(segments, edge_point)


def _chain(segments, edge_point) -> list[np.ndarray]:
    adjacency: dict = {}
    for a, b in segments:
        adjacency.setdefault(a, []).append(b)
        adjacency.setdefault(b, []).append(a)
    seen = set()
    lines = []

    def walk(start):
        path = [start]
        prev, cur = None, start
        while True:
            nxt = [n for n in adjacency[cur] if n != prev and (cur, n) not in seen]
            if not nxt:
                break
            n = nxt[0]
            seen.add((cur, n))
            seen.add((n, cur))
            path.append(n)
            prev, cur = cur, n
            if cur == start:
                break
        return path

    # open chains start at edges of degree 1
    for key, nbrs in adjacency.items():
        if len(nbrs) == 1 and (key, nbrs[0]) not in seen:
            lines.append(walk(key))
    for key, nbrs in adjacency.items():
        for n in nbrs:
            if (key, n) not in seen:
                lines.append(walk(key))
    return [np.array([edge_point(k) for k in line]) for line in lines]


def point_segment_distance(points: np.ndarray, seg_a: np.ndarray, seg_b: np.ndarray,
                           chunk: int = 4096) -> np.ndarray:
    """Minimum Euclidean distance from each point to a set of segments (brute force)."""
    points = np.atleast_2d(points)
    d = seg_b - seg_a
    len2 = np.einsum("ij,ij->i", d, d)
    len2 = np.where(len2 > 0, len2, 1.0)
    out = np.empty(points.shape[0])
    for start in range(0, points.shape[0], chunk):
        p = points[start:start + chunk, None, :]
        t = np.clip(np.einsum("nsk,sk->ns", p - seg_a, d) / len2, 0.0, 1.0)
        proj = seg_a + t[..., None] * d
        out[start:start + chunk] = np.sqrt(((p - proj) ** 2).sum(-1).min(axis=1))
    return out


def polylines_to_segments(contour: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    a = [np.asarray(line)[:-1] for line in contour if len(line) >= 2]
    b = [np.asarray(line)[1:] for line in contour if len(line) >= 2]
    if not a:
        raise ValueError("empty contour")
    return np.concatenate(a), np.concatenate(b)


def signed_distance_from_contour(contour: Sequence[np.ndarray], grid: Grid,
                                 sign_source: ScalarField) -> ScalarField:
    if not contour or all(len(c) < 2 for c in contour):
        raise ValueError("empty contour")
    seg_a, seg_b = polylines_to_segments(contour)
    dist = point_segment_distance(grid.points(), seg_a, seg_b)
    sign = np.where(sign_source.values.ravel() >= 0, 1.0, -1.0)
    return ScalarField(grid, dist * sign)


def points_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd crossing test; ``polygon`` is a closed or open vertex ring."""
    poly = np.asarray(polygon, dtype=float)
    if np.allclose(poly[0], poly[-1]):
        poly = poly[:-1]
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(points.shape[0], dtype=bool)
    xj, yj = poly[-1]
    for xi, yi in poly:
        crosses = (yi > y) != (yj > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_at = (xj - xi) * (y - yi) / (yj - yi) + xi
        inside ^= crosses & (x < x_at)
        xj, yj = xi, yi
    return inside
