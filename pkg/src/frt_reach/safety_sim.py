"""Robust min-norm safety filter, reference controllers and closed-loop rollouts.

The filter solves, for a scalar control,
    min_u |u - u_ref|  s.t.  min_d ∇h·f(x,u,d) + γ h(x) >= 0,  u in U
in closed form: the constraint is affine in u, so the feasible set is an interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import PENDULUM_U_MAX, ControlAffineSystem, worst_case_disturbance
from .grid import Grid, ScalarField, gradient_at, interpolate_many


class BarrierFunction:
    """Value and gradient of h, from a sampled field or from closed-form callables."""

    def __init__(self, h, gradient: Callable[[np.ndarray], np.ndarray] | None = None):
        if isinstance(h, ScalarField):
            self.field = h
            self._value = lambda x: interpolate_many(h, x)
            self._grad = lambda x: gradient_at(h, x)
        else:
            if gradient is None:
                raise ValueError("analytic h needs a gradient callable")
            self.field = None
            self._value, self._grad = h, gradient

    def value(self, x: np.ndarray) -> float:
        return float(self._value(np.asarray(x, float).reshape(1, -1))[0])

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self._grad(np.asarray(x, float).reshape(1, -1)))[0]


@dataclass
class FilterSpec:
    h: BarrierFunction
    gamma: float
    system: ControlAffineSystem
    infeasibility_policy: str = "best_effort"

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not isinstance(self.h, BarrierFunction):
            self.h = BarrierFunction(self.h)


@dataclass
class FilterResult:
    u: np.ndarray
    feasible: bool
    constraint_lhs_at_u: float


def constraint_coefficients(spec: FilterSpec, x: np.ndarray) -> tuple[float, float]:
    """(a, b) with min_d ∇h·f(x,u,d) + γh(x) = a + b·u for a scalar control."""
    sys = spec.system
    x2 = np.asarray(x, float).reshape(1, -1)
    g = spec.h.gradient(x)
    gd = g @ sys.disturbance_cols(x2)[0]
    a = (float(g @ sys.drift(x2)[0]) + float(gd @ sys.D.mid) - float(np.abs(gd) @ sys.D.half)
         + spec.gamma * spec.h.value(x))
    b = float(g @ sys.control_cols(x2)[0][:, 0])
    return a, b


def project_interval(a: float, b: float, u_lo: float, u_hi: float,
                     u_ref: float) -> tuple[float, bool]:
    """Closest point to u_ref in {a + b u >= 0} ∩ [u_lo, u_hi]; best effort if empty."""
    lo, hi = u_lo, u_hi
    if b > 0:
        lo = max(lo, -a / b)
    elif b < 0:
        hi = min(hi, -a / b)
    elif a < 0:
        lo, hi = 1.0, 0.0  # empty
    if lo <= hi:
        return float(np.clip(u_ref, lo, hi)), True
    # best effort: endpoint with the larger constraint value, ties to u_lo
    return (u_hi if a + b * u_hi > a + b * u_lo else u_lo), False


def filter_control(spec: FilterSpec, x, u_ref) -> FilterResult:
    sys = spec.system
    if sys.U.dim != 1:
        raise ValueError("the closed-form filter handles a single control channel")
    with np.errstate(invalid="ignore"):
        a, b = constraint_coefficients(spec, x)
    if not (np.isfinite(a) and np.isfinite(b)):
        raise ValueError(f"non-finite barrier constraint at x={np.asarray(x).tolist()}")
    u, feasible = project_interval(a, b, float(sys.U.lower[0]), float(sys.U.upper[0]),
                                   float(np.atleast_1d(u_ref)[0]))
    return FilterResult(np.array([u]), feasible, a + b * u)


def pendulum_reference(x, target_angle: float, k1: float = 3.0, k2: float = 3.0,
                       u_max: float = PENDULUM_U_MAX) -> float:
    """Clipped feedback-linearizing tracking law for the pendulum angle."""
    u = np.sin(x[0]) - k1 * (x[0] - target_angle) - k2 * x[1]
    return float(np.clip(u, -u_max, u_max))


def pendulum_target_schedule(t: float) -> float:
    return -0.2 if t < 8.0 else np.pi - 0.6


# --------------------------------------------------------------------------- #
# rollouts


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    disturbances: np.ndarray
    h_values: np.ndarray
    constraint_lhs: np.ndarray
    filter_feasible: np.ndarray
    aborted: bool = False

    def __len__(self) -> int:
        return len(self.times)


@dataclass
class ReferencePolicy:
    law: Callable[[float, np.ndarray], float]


@dataclass
class FilteredPolicy:
    spec: FilterSpec
    reference: ReferencePolicy


@dataclass
class WorstCase:
    """Disturbance d* = argmin_d ∇h·G_d d recomputed at every control update."""
    h: BarrierFunction
    gamma: float = 0.0


def _rk4(fun, x, dt):
    k1 = fun(x)
    k2 = fun(x + 0.5 * dt * k1)
    k3 = fun(x + 0.5 * dt * k2)
    k4 = fun(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def simulate(system: ControlAffineSystem, policy, disturbance_mode, x0, T: float,
             dt_ctrl: float = 0.01, dt_integrator: float = 0.0025,
             bounds: Grid | None = None, monitor: BarrierFunction | None = None) -> Trajectory:
    """Zero-order-hold closed loop with RK4 sub-steps.

    ``monitor`` supplies the recorded h values (defaults to the filter's h, then the
    disturbance's h).  ``bounds`` aborts the run once the state leaves the box by more
    than 10% of its size.
    """
    if dt_integrator > dt_ctrl + 1e-15:
        raise ValueError("dt_integrator must not exceed dt_ctrl")
    n_steps = int(round(T / dt_ctrl))
    if abs(n_steps * dt_ctrl - T) > 1e-9:
        raise ValueError("dt_ctrl must divide T")
    n_sub = int(round(dt_ctrl / dt_integrator))
    h_sub = dt_ctrl / n_sub
    filt = policy.spec if isinstance(policy, FilteredPolicy) else None
    ref = policy.reference if isinstance(policy, FilteredPolicy) else policy
    if monitor is None:
        monitor = filt.h if filt else (disturbance_mode.h if disturbance_mode else None)
    lhs_spec = filt or (FilterSpec(disturbance_mode.h, disturbance_mode.gamma or 1.0, system)
                        if disturbance_mode is not None else None)
    if bounds is not None:
        size = bounds.upper - bounds.lower
        lo_abort, hi_abort = bounds.lower - 0.1 * size, bounds.upper + 0.1 * size
    x = np.asarray(x0, dtype=float).copy()
    rec = {k: [] for k in ("t", "x", "u", "d", "h", "lhs", "ok")}
    aborted = False
    for k in range(n_steps + 1):
        t = k * dt_ctrl
        u_ref = ref.law(t, x)
        if filt is not None:
            res = filter_control(filt, x, u_ref)
            u, ok, lhs = res.u, res.feasible, res.constraint_lhs_at_u
        else:
            u, ok = np.atleast_1d(np.asarray(u_ref, float)), True
        if disturbance_mode is not None:
            d = worst_case_disturbance(system, x, disturbance_mode.h.gradient(x))
        else:
            d = system.D.mid.copy()
        if filt is None and lhs_spec is not None:
            a, b = constraint_coefficients(lhs_spec, x)
            lhs = a + b * float(u[0])
        elif filt is None:
            lhs = float("nan")
        rec["t"].append(t)
        rec["x"].append(x.copy())
        rec["u"].append(np.array(u, float))
        rec["d"].append(np.array(d, float))
        rec["h"].append(monitor.value(x) if monitor is not None else float("nan"))
        rec["lhs"].append(lhs)
        rec["ok"].append(bool(ok))
        if k == n_steps:
            break
        u_vec, d_vec = np.asarray(u, float), np.asarray(d, float)

        def fun(z):
            z2 = z.reshape(1, -1)
            return (system.drift(z2)[0] + system.control_cols(z2)[0] @ u_vec
                    + system.disturbance_cols(z2)[0] @ d_vec)

        for _ in range(n_sub):
            x = _rk4(fun, x, h_sub)
        if bounds is not None and (np.any(x < lo_abort) or np.any(x > hi_abort)):
            aborted = True
            break
    return Trajectory(np.array(rec["t"]), np.array(rec["x"]), np.array(rec["u"]),
                      np.array(rec["d"]), np.array(rec["h"]), np.array(rec["lhs"]),
                      np.array(rec["ok"]), aborted)


@dataclass
class AuditReport:
    min_h: float
    exit_time: float | None
    feasible_fraction: float
    min_constraint_lhs: float
    extras: dict = field(default_factory=dict)


def safety_audit(traj: Trajectory, h_S: Callable[[np.ndarray], np.ndarray],
                 in_X: Callable[[np.ndarray], np.ndarray]) -> AuditReport:
    """Summary statistics; ``h_S`` and ``in_X`` act on (N, n) state arrays."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    hs = np.asarray(h_S(traj.states), float)
    inside = np.asarray(in_X(traj.states), bool)
    exit_time = float(traj.times[np.argmin(inside)]) if not inside.all() else None
    lhs = traj.constraint_lhs[np.isfinite(traj.constraint_lhs)]
    return AuditReport(float(hs.min()), exit_time, float(traj.filter_feasible.mean()),
                       float(lhs.min()) if lhs.size else float("nan"),
                       {"aborted": traj.aborted})
