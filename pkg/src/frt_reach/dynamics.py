"""Control-affine systems with box input sets and their max-min Hamiltonians.

Everything is vectorized over a leading batch axis: states are ``(N, n)``,
costates ``(N, n)``, control columns ``(N, n, m_u)`` and disturbance columns
``(N, n, m_d)``.  Scalar convenience wrappers accept a single state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Sequence

import numpy as np

from .grid import Grid

BOX_TOL = 1e-12


@dataclass(frozen=True)
class BoxSet:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError("box bounds differ in length")
        if np.any(lo > hi):
            raise ValueError(f"box lower {lo} exceeds upper {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def half(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    @property
    def is_singleton(self) -> bool:
        return bool(np.all(self.lower == self.upper))

    def contains(self, v: np.ndarray, tol: float = BOX_TOL) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.all(v >= self.lower - tol) and np.all(v <= self.upper + tol))

    def vertices(self) -> np.ndarray:
        return np.array(list(product(*zip(self.lower, self.upper))))

    def samples(self, per_dim: int) -> np.ndarray:
        """Evenly spaced tensor samples including endpoints; singleton channels give one point."""
        axes = []
        for lo, hi in zip(self.lower, self.upper):
            axes.append(np.array([lo]) if lo == hi else np.linspace(lo, hi, per_dim))
        return np.array(list(product(*axes)))


def singleton(dim: int = 1) -> BoxSet:
    return BoxSet(np.zeros(dim), np.zeros(dim))


Array = np.ndarray


@dataclass(frozen=True)
class ControlAffineSystem:
    """f(x, u, d) = f0(x) + G_u(x) u + G_d(x) d with box sets U and D."""

    name: str
    state_dim: int
    drift: Callable[[Array], Array]
    control_cols: Callable[[Array], Array]
    disturbance_cols: Callable[[Array], Array]
    U: BoxSet
    D: BoxSet = field(default_factory=singleton)

    def with_boxes(self, U: BoxSet | None = None, D: BoxSet | None = None) -> "ControlAffineSystem":
        return ControlAffineSystem(self.name, self.state_dim, self.drift, self.control_cols,
                                   self.disturbance_cols, U or self.U, D or self.D)

    def flow_many(self, x: Array, u: Array, d: Array) -> Array:
        x = np.atleast_2d(x)
        u = np.broadcast_to(np.asarray(u, dtype=float), (x.shape[0], self.U.dim))
        d = np.broadcast_to(np.asarray(d, dtype=float), (x.shape[0], self.D.dim))
        return (self.drift(x)
                + np.einsum("nij,nj->ni", self.control_cols(x), u)
                + np.einsum("nij,nj->ni", self.disturbance_cols(x), d))

    def check_finite(self, grid: Grid) -> None:
        x = grid.points()
        for u in self.U.vertices():
            for d in self.D.vertices():
                if not np.all(np.isfinite(self.flow_many(x, u, d))):
                    raise ValueError(f"{self.name}: non-finite dynamics on grid")


def flow(system: ControlAffineSystem, x, u, d=None) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    d = system.D.mid if d is None else np.atleast_1d(np.asarray(d, dtype=float))
    if not system.U.contains(u):
        raise ValueError(f"control {u} outside U")
    if not system.D.contains(d):
        raise ValueError(f"disturbance {d} outside D")
    return system.flow_many(np.asarray(x, dtype=float).reshape(1, -1), u, d)[0]


def _sign(v: Array) -> Array:
    return np.where(v >= 0, 1.0, -1.0)


@dataclass
class HamiltonianResult:
    value: Array
    u_star: Array
    d_star: Array


def hamiltonian_maxmin_many(system: ControlAffineSystem, x: Array, p: Array) -> HamiltonianResult:
    """max_u min_d p·f(x,u,d) in closed form for box sets (separable in channels)."""
    x = np.atleast_2d(x)
    p = np.atleast_2d(p)
    pu = np.einsum("ni,nij->nj", p, system.control_cols(x))
    pd = np.einsum("ni,nij->nj", p, system.disturbance_cols(x))
    value = (np.einsum("ni,ni->n", p, system.drift(x))
             + pu @ system.U.mid + np.abs(pu) @ system.U.half
             + pd @ system.D.mid - np.abs(pd) @ system.D.half)
    u_star = system.U.mid + _sign(pu) * system.U.half
    d_star = system.D.mid - _sign(pd) * system.D.half
    return HamiltonianResult(value, u_star, d_star)


def hamiltonian_maxmin(system: ControlAffineSystem, x, p) -> HamiltonianResult:
    r = hamiltonian_maxmin_many(system, np.asarray(x, float).reshape(1, -1),
                                np.asarray(p, float).reshape(1, -1))
    return HamiltonianResult(float(r.value[0]), r.u_star[0], r.d_star[0])


def worst_case_disturbance(system: ControlAffineSystem, x, p) -> np.ndarray:
    """argmin over D of p·G_d(x) d, channel-wise."""
    x = np.asarray(x, float).reshape(1, -1)
    pd = np.asarray(p, float).reshape(1, -1) @ system.disturbance_cols(x)[0]
    return system.D.mid - _sign(pd[0]) * system.D.half


def lipschitz_estimate(system: ControlAffineSystem, grid: Grid, n_samples: int = 1000,
                       seed: int = 0) -> float:
    """Sampled max of ‖f(x)-f(x')‖/‖x-x'‖ over nearby state pairs and box vertices."""
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    rng = np.random.default_rng(seed)
    lo, hi = grid.lower, grid.upper
    x = lo + (hi - lo) * rng.random((n_samples, grid.ndim))
    step = 1e-4 * (hi - lo) * rng.standard_normal((n_samples, grid.ndim))
    xp = x + step
    best = 0.0
    for u in system.U.vertices():
        for d in system.D.vertices():
            df = system.flow_many(x, u, d) - system.flow_many(xp, u, d)
            ratio = np.linalg.norm(df, axis=1) / np.linalg.norm(step, axis=1)
            best = max(best, float(ratio.max()))
    return best


def lf_dissipation_bounds(system: ControlAffineSystem, grid: Grid) -> np.ndarray:
    """Per-dimension max |f_i| over grid nodes and input-box vertices."""
    x = grid.points()
    alpha = np.zeros(grid.ndim)
    for u in system.U.vertices():
        for d in system.D.vertices():
            alpha = np.maximum(alpha, np.abs(system.flow_many(x, u, d)).max(axis=0))
    return alpha


# --------------------------------------------------------------------------- #
# built-in systems


def _zeros_cols(n: int, m: int):
    return lambda x: np.zeros((x.shape[0], n, m))


def _const_cols(col: Sequence[float]):
    col = np.asarray(col, dtype=float).reshape(-1, 1)
    return lambda x: np.broadcast_to(col, (x.shape[0],) + col.shape)


def integrator1d() -> ControlAffineSystem:
    """ẋ = x + u."""
    return ControlAffineSystem("integrator1d", 1, lambda x: x.copy(), _const_cols([1.0]),
                               _zeros_cols(1, 1), BoxSet([-1.0], [1.0]))


def single_integrator1d() -> ControlAffineSystem:
    """ẋ = u."""
    return ControlAffineSystem("single_integrator1d", 1, lambda x: np.zeros_like(x),
                               _const_cols([1.0]), _zeros_cols(1, 1), BoxSet([-1.0], [1.0]))


def double_integrator() -> ControlAffineSystem:
    """ṗ = v, v̇ = u."""
    def drift(x):
        return np.stack([x[:, 1], np.zeros(x.shape[0])], axis=1)
    return ControlAffineSystem("double_integrator", 2, drift, _const_cols([0.0, 1.0]),
                               _zeros_cols(2, 1), BoxSet([-1.0], [1.0]))


PENDULUM_U_MAX = float(np.sin(np.pi / 3))
PENDULUM_D_MAX = 0.1


def pendulum() -> ControlAffineSystem:
    """ẋ1 = x2, ẋ2 = -sin x1 + u + cos(x1) d."""
    def drift(x):
        return np.stack([x[:, 1], -np.sin(x[:, 0])], axis=1)

    def dist_cols(x):
        cols = np.zeros((x.shape[0], 2, 1))
        cols[:, 1, 0] = np.cos(x[:, 0])
        return cols

    return ControlAffineSystem("pendulum", 2, drift, _const_cols([0.0, 1.0]), dist_cols,
                               BoxSet([-PENDULUM_U_MAX], [PENDULUM_U_MAX]),
                               BoxSet([-PENDULUM_D_MAX], [PENDULUM_D_MAX]))


SYSTEMS: dict[str, Callable[[], ControlAffineSystem]] = {
    "integrator1d": integrator1d,
    "double_integrator": double_integrator,
    "pendulum": pendulum,
    "single_integrator1d": single_integrator1d,
}


def get_system(name: str, u_min=None, u_max=None, d_min=None, d_max=None) -> ControlAffineSystem:
    if name not in SYSTEMS:
        raise KeyError(f"unknown system {name!r}; known: {sorted(SYSTEMS)}")
    sys = SYSTEMS[name]()
    U = D = None
    if u_min is not None or u_max is not None:
        U = BoxSet(sys.U.lower if u_min is None else u_min, sys.U.upper if u_max is None else u_max)
    if d_min is not None or d_max is not None:
        D = BoxSet(sys.D.lower if d_min is None else d_min, sys.D.upper if d_max is None else d_max)
    return sys.with_boxes(U, D)
