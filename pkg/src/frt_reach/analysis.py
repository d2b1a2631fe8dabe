"""Set- and function-level checks on computed value functions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .dynamics import ControlAffineSystem, hamiltonian_maxmin_many
from .grid import Grid, ScalarField, gradient_arrays, upwind_derivative_arrays
from .solver import BackupOperator, Formulation, SolveParams, levelset_solve_frt


@dataclass(frozen=True)
class SetIndicator:
    grid: Grid
    membership: np.ndarray
    eps: float

    def __post_init__(self):
        m = np.asarray(self.membership, dtype=bool).reshape(self.grid.shape)
        object.__setattr__(self, "membership", m)


@dataclass
class SetMetrics:
    jaccard: float
    a_minus_b_fraction: float
    b_minus_a_fraction: float
    grid_hausdorff: float


def superlevel(V: ScalarField, eps: float = 0.0) -> SetIndicator:
    if eps < 0:
        raise ValueError("eps must be non-negative")
    return SetIndicator(V.grid, V.values > eps, eps)


def _boundary_points(S: SetIndicator) -> np.ndarray:
    """Member nodes with at least one non-member axis neighbour."""
    m = S.membership
    edge = np.zeros_like(m)
    for k in range(m.ndim):
        for step in (1, -1):
            nb = np.roll(m, step, axis=k)
            if not S.grid.axes[k].periodic:
                sl = [slice(None)] * m.ndim
                sl[k] = 0 if step == 1 else -1
                nb[tuple(sl)] = m[tuple(sl)]
            edge |= m & ~nb
    return S.grid.points()[edge.ravel()]


def set_metrics(A: SetIndicator, B: SetIndicator) -> SetMetrics:
    if not A.grid.same_as(B.grid):
        raise ValueError("sets live on different grids")
    a, b = A.membership, B.membership
    union = int((a | b).sum())
    if union == 0:
        return SetMetrics(1.0, 0.0, 0.0, 0.0)
    jac = float((a & b).sum()) / union
    amb = float((a & ~b).sum()) / union
    bma = float((b & ~a).sum()) / union
    pts = A.grid.points()
    haus = 0.0
    for diff, other in (((a & ~b), B), ((b & ~a), A)):
        if diff.any():
            bnd = _boundary_points(other)
            if len(bnd):
                d, _ = cKDTree(bnd).query(pts[diff.ravel()])
                haus = max(haus, float(d.max()))
            else:
                haus = float("inf")
    return SetMetrics(jac, amb, bma, haus)


@dataclass
class FixedPointVerdict:
    metrics: SetMetrics
    verdict: str


def fixed_point_check(S: SetIndicator, V: ScalarField, eps: float) -> FixedPointVerdict:
    """Compare S with {V > eps}: fixed_point, strict_superset or other."""
    if not S.grid.same_as(V.grid):
        raise ValueError("grid mismatch")
    m = set_metrics(S, superlevel(V, eps))
    if m.jaccard >= 0.97 and m.a_minus_b_fraction <= 0.03 and m.b_minus_a_fraction <= 0.03:
        verdict = "fixed_point"
    elif m.a_minus_b_fraction <= 0.01 and m.b_minus_a_fraction > 0.05:
        verdict = "strict_superset"
    else:
        verdict = "other"
    return FixedPointVerdict(m, verdict)


def interior_band(grid: Grid, cells: int = 2) -> np.ndarray:
    """Mask excluding ``cells`` nodes next to every non-periodic edge."""
    mask = np.ones(grid.shape, dtype=bool)
    for k, a in enumerate(grid.axes):
        if a.periodic:
            continue
        sl = [slice(None)] * grid.ndim
        sl[k] = slice(0, cells)
        mask[tuple(sl)] = False
        sl[k] = slice(a.count - cells, a.count)
        mask[tuple(sl)] = False
    return mask


@dataclass
class BarrierResidual:
    residual: ScalarField        # zero where not evaluated
    evaluated: np.ndarray        # bool mask
    suspected_kinks: np.ndarray  # bool mask: one-sided residuals disagree strongly

    @property
    def min(self) -> float:
        vals = self.residual.values[self.evaluated]
        return float(vals.min()) if vals.size else float("nan")


def barrier_residual(V: ScalarField, system: ControlAffineSystem, gamma: float,
                     region: SetIndicator, tol: float | None = None) -> BarrierResidual:
    """max_u min_d ∇V·f + γV with central gradients on the interior part of ``region``."""
    grid = V.grid
    mask = region.membership & interior_band(grid, 2)
    pts = grid.points()[mask.ravel()]
    grads = np.stack([g[mask] for g in gradient_arrays(V)], axis=1)
    res = np.zeros(grid.shape)
    res[mask] = hamiltonian_maxmin_many(system, pts, grads).value + gamma * V.values[mask]
    # kink detector: residuals from purely left and purely right differences
    pairs = upwind_derivative_arrays(V)
    left = np.stack([l[mask] for l, _ in pairs], axis=1)
    right = np.stack([r[mask] for _, r in pairs], axis=1)
    r_left = hamiltonian_maxmin_many(system, pts, left).value
    r_right = hamiltonian_maxmin_many(system, pts, right).value
    scale = tol if tol is not None else 0.05 * gamma * float(np.ptp(V.values) or 1.0)
    kinks = np.zeros(grid.shape, dtype=bool)
    kinks[mask] = np.abs(r_left - r_right) > 10 * scale
    return BarrierResidual(ScalarField(grid, res), mask, kinks)


@dataclass
class CbfReport:
    valid: bool
    violations: np.ndarray
    min_residual: float


def cbf_validate(h, system: ControlAffineSystem, gamma: float, S: SetIndicator,
                 tol: float = 1e-6,
                 gradient: Callable[[np.ndarray], np.ndarray] | None = None) -> CbfReport:
    """Check max_u min_d ∇h·f + γh >= -tol on the interior part of S."""
    grid = S.grid
    mask = S.membership & interior_band(grid, 2)
    if not mask.any():
        raise ValueError("empty set")
    pts = grid.points()[mask.ravel()]
    if isinstance(h, ScalarField):
        hv = h.values[mask]
        grads = np.stack([g[mask] for g in gradient_arrays(h)], axis=1)
    else:
        if gradient is None:
            raise ValueError("analytic h needs a gradient")
        hv = h(pts)
        grads = gradient(pts)
    res = hamiltonian_maxmin_many(system, pts, grads).value + gamma * hv
    bad = res < -tol
    return CbfReport(not bad.any(), pts[bad], float(res.min()))


def inverse_optimality_check(h: Callable[[np.ndarray], np.ndarray], system: ControlAffineSystem,
                             gamma: float, grid: Grid,
                             params: SolveParams | None = None) -> dict:
    """‖V_γ - max{0, h}‖∞ for a valid robust CBF h used as the target."""
    params = params or SolveParams(gamma=gamma)
    if params.gamma != gamma:
        params = SolveParams(**{**params.__dict__, "gamma": gamma})
    target = ScalarField(grid, h(grid.points()))
    rep = levelset_solve_frt(system, target, params)
    err = np.abs(rep.value.values - np.maximum(0.0, target.values))
    return {"linf_error": float(err.max()), "report": rep}


def contraction_test(system: ControlAffineSystem, target: ScalarField, gamma: float,
                     dt: float, n_trials: int = 20, seed: int = 0,
                     clip: tuple[float, float] | None = None) -> dict:
    """Max over random field pairs of ‖B[V1]-B[V2]‖∞ / ‖V1-V2‖∞ for the forward backup."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if n_trials < 10:
        raise ValueError("n_trials must be >= 10")
    lo, hi = clip if clip is not None else (float(target.values.min()), float(target.values.max()))
    # the contraction bound does not depend on foot-point locality, so the guard is off here
    op = BackupOperator(Formulation.FRT, system, target, gamma, dt, enforce_locality=False)
    rng = np.random.default_rng(seed)
    grid = target.grid
    ratios = []
    for _ in range(n_trials):
        v1 = _smooth_once(rng.uniform(lo, hi, grid.shape))
        v2 = _smooth_once(rng.uniform(lo, hi, grid.shape))
        ratios.append(contraction_ratio(op, v1, v2))
    return {"max_ratio": float(max(ratios)), "bound": float(np.exp(-gamma * dt)), "ratios": ratios}


def contraction_ratio(op: BackupOperator, v1: np.ndarray, v2: np.ndarray) -> float:
    den = float(np.max(np.abs(v1 - v2)))
    if den == 0.0:
        return 0.0
    return float(np.max(np.abs(op(v1) - op(v2)))) / den


def _smooth_once(v: np.ndarray) -> np.ndarray:
    """One explicit diffusion pass (average with axis neighbours, edges replicated)."""
    out = v.copy()
    for k in range(v.ndim):
        pad = [(0, 0)] * v.ndim
        pad[k] = (1, 1)
        p = np.pad(v, pad, mode="edge")
        lo = [slice(None)] * v.ndim
        hi = [slice(None)] * v.ndim
        lo[k] = slice(0, -2)
        hi[k] = slice(2, None)
        out += 0.25 * (p[tuple(lo)] + p[tuple(hi)] - 2 * v)
    return out
