"""Config-driven experiment stages and the canned runners with PASS/FAIL summaries."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .analysis import (barrier_residual, contraction_test, fixed_point_check,
                       inverse_optimality_check, set_metrics, superlevel)
from .config import ConfigError, ExperimentConfig, parse_config
from .dynamics import (PENDULUM_D_MAX, PENDULUM_U_MAX, BoxSet, ControlAffineSystem,
                       double_integrator, integrator1d, lf_dissipation_bounds, pendulum,
                       single_integrator1d)
from .grid import Grid, ScalarField, gradient_arrays, interpolate_many, make_grid, sample, zero_contour_2d
from .io import (save_field, write_contour_csv, write_field_csv, write_manifest,
                 write_profile_csv, write_rows_csv, write_trajectory_csv)
from .safety_sim import (BarrierFunction, FilteredPolicy, FilterSpec, ReferencePolicy,
                         Trajectory, WorstCase, pendulum_reference, pendulum_target_schedule,
                         safety_audit, simulate)
from .solver import Formulation, SolveParams, SolveReport, levelset_solve_frt, value_iterate
from .targets import (DI_DOMAIN, PENDULUM_X, TargetSpec, build_target, di_set,
                      ramp_1d_target, smooth_invariant_set)

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------- #
# results


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    runtime: float = 0.0
    budget: float | None = None

    def line(self) -> str:
        budget = f" (budget {self.budget:g} s)" if self.budget is not None else ""
        return (f"{'PASS' if self.passed else 'FAIL'} criterion {self.number} [{self.name}]: "
                f"{self.detail}; {self.runtime:.1f} s{budget}")


def _criterion(number, name, ok, detail, runtime, budget) -> CriterionResult:
    in_budget = budget is None or runtime < budget
    if not in_budget:
        detail += "; over time budget"
    return CriterionResult(number, name, bool(ok and in_budget), detail, runtime, budget)


@dataclass
class RunOutcome:
    criteria: list[CriterionResult] = field(default_factory=list)
    lines: list[str] = field(default_factory=list)
    manifest: dict = field(default_factory=dict)
    artifacts: list[Path] = field(default_factory=list)
    reports: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    failed: bool = False

    @property
    def ok(self) -> bool:
        return not self.failed and all(c.passed for c in self.criteria)

    def summary(self) -> list[str]:
        return self.lines + [c.line() for c in self.criteria]


def _g(v: float) -> str:
    return f"{float(v):.10g}"


def lipschitz_of_field(h: ScalarField) -> float:
    """Largest central-difference gradient norm over the grid."""
    g = np.stack(gradient_arrays(h), axis=0)
    return float(np.sqrt((g ** 2).sum(axis=0)).max())


def dt_from_cells(system: ControlAffineSystem, grid: Grid, cells: float,
                  alpha: np.ndarray | None = None) -> float:
    """Time step moving at most ``cells`` cells along any axis."""
    alpha = lf_dissipation_bounds(system, grid) if alpha is None else np.asarray(alpha, float)
    return cells * float(np.min(grid.spacing / np.maximum(alpha, 1e-12)))


def solve(system: ControlAffineSystem, target: ScalarField, formulation: Formulation,
          params: SolveParams, engine: str = "auto", V0: ScalarField | None = None) -> SolveReport:
    """Dispatch to the level-set engine (FRT only) or to value iteration."""
    if engine == "auto":
        engine = "levelset" if formulation is Formulation.FRT else "vi"
    if engine == "levelset":
        if formulation is not Formulation.FRT:
            raise ConfigError(f"the level-set engine solves only the frt formulation, not {formulation.value}")
        return levelset_solve_frt(system, target, params, V0=V0)
    return value_iterate(V0 if V0 is not None else target, formulation, system, target, params)


# --------------------------------------------------------------------------- #
# config-driven stages


def run_experiment(cfg: ExperimentConfig | str | Path, out_dir: str | Path | None = None,
                   seed: int | None = None) -> RunOutcome:
    """Run the solve / check / simulate stages named in ``cfg`` and write artifacts."""
    if not isinstance(cfg, ExperimentConfig):
        from .config import load_config
        cfg = load_config(cfg)
    out = Path(out_dir) if out_dir is not None else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    system, grid = cfg.system(), cfg.grid()
    params = cfg.solver.params
    if cfg.solver.dt_vi_cells is not None:
        params = SolveParams(**{**params.__dict__,
                                "dt_vi": dt_from_cells(system, grid, cfg.solver.dt_vi_cells)})
    res = RunOutcome()
    m = res.manifest
    m.update({"name": cfg.name, "system": cfg.system_name, "grid": "x".join(map(str, grid.shape)),
              "stages": ",".join(cfg.stages), "seed": seed if seed is not None else cfg.seed,
              "gamma": _g(params.gamma)})
    targets = cfg.target_fields()

    for name, h in targets:
        if "hjf" in cfg.formats:
            res.artifacts.append(save_field(out / f"{name}_target.hjf", h))
        for form in cfg.solver.formulations:
            V0 = None
            if cfg.solver.v0.startswith("constant:"):
                V0 = h.with_values(np.full(grid.shape, float(cfg.solver.v0.split(":", 1)[1])))
            t0 = time.perf_counter()
            rep = solve(system, h, form, params, cfg.solver.engine, V0)
            elapsed = time.perf_counter() - t0
            stem = f"{name}_{form.value}"
            res.reports[(name, form)] = rep
            res.timings[(name, form)] = elapsed
            m[f"{stem}.iterations"] = rep.iterations
            m[f"{stem}.converged"] = rep.converged
            m[f"{stem}.final_residual"] = _g(rep.residual_history[-1]) if rep.residual_history else "nan"
            m[f"{stem}.gamma_exceeds_lipschitz"] = rep.gamma_vs_lipschitz.get("satisfied")
            m[f"wall_time.{stem}"] = f"{elapsed:.3f}"
            if "hjf" in cfg.formats:
                res.artifacts.append(save_field(out / f"{stem}.hjf", rep.value))
            res.artifacts.append(write_rows_csv(out / f"{stem}_residuals.csv", ["iteration", "residual"],
                                                enumerate(map(float, rep.residual_history))))
            if "csv" in cfg.formats:
                if grid.ndim == 2:
                    res.artifacts.append(write_contour_csv(out / f"{stem}_contour.csv",
                                                           zero_contour_2d(rep.value, _eps(cfg, grid))))
                elif grid.ndim == 1:
                    res.artifacts.append(write_field_csv(out / f"{stem}.csv", rep.value))
        if "csv" in cfg.formats and grid.ndim == 2:
            res.artifacts.append(write_contour_csv(out / f"{name}_target_contour.csv", zero_contour_2d(h)))

    if cfg.profile and grid.ndim == 1:
        for name, h in targets:
            cols = {"target": h.values}
            cols.update({f.value: res.reports[(name, f)].value.values for f in cfg.solver.formulations})
            res.artifacts.append(write_profile_csv(out / f"{name}_profile.csv",
                                                   grid.coordinate_vectors()[0], cols))

    if "check" in cfg.stages:
        _check_stage(cfg, system, grid, params, targets, res)
    if "simulate" in cfg.stages:
        _simulate_stage(cfg, system, grid, params, targets, res, out)

    res.artifacts.append(write_manifest(out / "manifest.txt", m))
    return res


def _eps(cfg: ExperimentConfig, grid: Grid) -> float:
    return cfg.check.eps if cfg.check.eps is not None else cfg.check.eps_cells * float(grid.spacing.max())


def _check_stage(cfg, system, grid, params, targets, res: RunOutcome) -> None:
    eps = _eps(cfg, grid)
    res.manifest["check.eps"] = _g(eps)
    for name, h in targets:
        rep = res.reports.get((name, Formulation.FRT))
        if rep is None:
            continue
        fp = fixed_point_check(superlevel(h, eps), rep.value, eps)
        mt = fp.metrics
        br = barrier_residual(rep.value, system, params.gamma, superlevel(rep.value, eps))
        res.reports[(name, "verdict")] = fp
        for k, v in (("verdict", fp.verdict), ("jaccard", _g(mt.jaccard)),
                     ("a_minus_b", _g(mt.a_minus_b_fraction)), ("b_minus_a", _g(mt.b_minus_a_fraction)),
                     ("barrier_min", _g(br.min))):
            res.manifest[f"{name}.{k}"] = v
        line = (f"{name}: {fp.verdict} (jaccard {mt.jaccard:.4f}, a-b {mt.a_minus_b_fraction:.4f}, "
                f"b-a {mt.b_minus_a_fraction:.4f})")
        want = cfg.check.expect.get(name)
        if want is not None:
            ok = want == fp.verdict
            res.failed |= not ok
            line = f"{'PASS' if ok else 'FAIL'} {line}; expected {want}"
        res.lines.append(line)


def pendulum_in_X(states: np.ndarray) -> np.ndarray:
    s = np.atleast_2d(states)
    lo, hi = PENDULUM_X["lower"], PENDULUM_X["upper"]
    return np.all((s >= np.asarray(lo)) & (s <= np.asarray(hi)), axis=1)


def reference_policy(k1: float = 3.0, k2: float = 3.0) -> ReferencePolicy:
    return ReferencePolicy(lambda t, x: pendulum_reference(x, pendulum_target_schedule(t), k1, k2))


def _simulate_stage(cfg, system, grid, params, targets, res: RunOutcome, out: Path) -> None:
    if cfg.system_name != "pendulum":
        raise ConfigError("stage 'simulate' supports the pendulum system only")
    sim = cfg.simulation
    name, h = targets[0]
    frt = res.reports.get((name, Formulation.FRT))
    if sim.filter == "value" and frt is None:
        raise ConfigError("filter = value needs the frt formulation in [solver]")
    gamma = sim.gamma if sim.gamma is not None else params.gamma
    barrier = BarrierFunction(frt.value if sim.filter == "value" else h)
    policy = reference_policy(sim.k1, sim.k2)
    if sim.filter != "none":
        policy = FilteredPolicy(FilterSpec(barrier, gamma, system), policy)
    dist = WorstCase(barrier, gamma) if sim.disturbance == "worst_case" else None
    for i, x0 in enumerate(sim.x0):
        traj = simulate(system, policy, dist, x0, sim.T, sim.dt_ctrl, sim.dt_integrator, bounds=grid)
        audit = safety_audit(traj, h, pendulum_in_X)
        res.artifacts.append(write_trajectory_csv(out / f"trajectory_{i}.csv", traj))
        for k, v in (("min_h", _g(audit.min_h)), ("exit_time", audit.exit_time),
                     ("feasible_fraction", _g(audit.feasible_fraction))):
            res.manifest[f"trajectory_{i}.{k}"] = v
        res.lines.append(f"trajectory {i} from {tuple(x0)}: min_h {audit.min_h:.4f}, "
                         f"exit_time {audit.exit_time}, feasible {audit.feasible_fraction:.3f}")


# --------------------------------------------------------------------------- #
# one-dimensional comparison (criteria 1-3)

CONFIG_1D = """\
[experiment]
name = 1d_comparison
stages = solve

[system]
name = integrator1d

[grid]
min = 0
max = 6
count = 601

[target]
kind = analytic
function = ramp_1d

[solver]
engine = auto
formulation = frt, brt, brt-nodiscount, cbvf
gamma = 2
max_iters = 20000

[output]
directory = out/1d_comparison
formats = hjf, csv
profile = true
"""


def exact_1d_frt(x: np.ndarray) -> np.ndarray:
    """FRT value of max{2 - x, -2} under dx/dt = x + u, |u| <= 1, γ = 2 (optimal u ≡ -1)."""
    x = np.asarray(x, float)
    return np.where(x <= 5.0 / 3.0, 2.0 - x, 4.0 / (27.0 * np.maximum(x - 1.0, 1e-12) ** 2))


def criteria_1d(res: RunOutcome, name: str = "ramp_1d") -> list[CriterionResult]:
    rep = {f: res.reports[(name, f)] for f in Formulation}
    x = rep[Formulation.FRT].value.grid.coordinate_vectors()[0]
    dx = float(x[1] - x[0])
    t = {f: res.timings[(name, f)] for f in Formulation}

    err = float(np.abs(rep[Formulation.FRT].value.values - exact_1d_frt(x)).max())
    c1 = _criterion(1, "1d FRT value", err <= 3 * dx + 1e-12,
                    f"linf error {err:.4f} vs tolerance {3 * dx:.3f}", t[Formulation.FRT], 5.0)

    Vb = rep[Formulation.BRT].value.values
    zero = x[Vb >= -3 * dx]
    lo, hi = (float(zero.min()), float(zero.max())) if zero.size else (np.nan, np.nan)
    contiguous = zero.size > 0 and zero.size == int(round((hi - lo) / dx)) + 1
    ok2 = contiguous and abs(lo - 0.0) <= 2 * dx + 1e-12 and abs(hi - 1.0) <= 2 * dx + 1e-12
    c2 = _criterion(2, "1d viability kernel", ok2,
                    f"zero set [{lo:.3f}, {hi:.3f}] vs [0, 1] with endpoint tolerance {2 * dx:.3f}",
                    t[Formulation.BRT], 5.0)

    Vn = rep[Formulation.BRT_NODISCOUNT].value.values
    near = np.abs(x[:-1] - 1.0) <= 0.1
    jump = float(np.abs(np.diff(Vn))[near].max())
    cap = rep[Formulation.CBVF].extras.get("cap_hit")
    frac = float(np.asarray(cap)[x <= 0.9].mean()) if cap is not None else 0.0
    c3 = _criterion(3, "1d pathologies", jump >= 1.0 and frac >= 0.5,
                    f"no-discount jump {jump:.3f} (need >= 1.0); CBVF cap hit on {100 * frac:.0f}% "
                    f"of [0, 0.9] (need >= 50%)",
                    t[Formulation.BRT_NODISCOUNT] + t[Formulation.CBVF], 10.0)
    return [c1, c2, c3]


def run_1d_comparison(out_dir: str | Path = "out/1d_comparison") -> RunOutcome:
    res = run_experiment(parse_config(CONFIG_1D), out_dir)
    res.criteria += criteria_1d(res)
    return res


# --------------------------------------------------------------------------- #
# double integrator verdicts (criterion 4)

CONFIG_DI = """\
[experiment]
name = di_frt
stages = solve, check

[system]
name = double_integrator

[grid]
min = -4, -3
max = 4, 3
count = 401, 301

[target]
kind = clipped_sdf_shape
shape = Sa, Sb, Sc, Sd
params = p1:2, p2:3, r:2.5
clip_low = -1
clip_high = 1

[solver]
engine = vi
formulation = frt
gamma = 2
dt_vi_cells = 3

[check]
eps = 0.005
expect = Sa:strict_superset, Sb:strict_superset, Sc:fixed_point, Sd:fixed_point

[output]
directory = out/di_frt
formats = hjf, csv
"""


def criteria_di(res: RunOutcome) -> list[CriterionResult]:
    parts, ok = [], True
    for name in ("Sa", "Sb", "Sc", "Sd"):
        fp = res.reports[(name, "verdict")]
        want = "fixed_point" if name in ("Sc", "Sd") else "strict_superset"
        good = fp.verdict == want and (want != "fixed_point" or fp.metrics.jaccard >= 0.97)
        ok &= good
        parts.append(f"{name} {fp.verdict} (J={fp.metrics.jaccard:.3f}){'' if good else ' expected ' + want}")
    runtime = sum(v for k, v in res.timings.items())
    return [_criterion(4, "double-integrator verdicts", ok, ", ".join(parts), runtime, 180.0)]


def run_double_integrator(out_dir: str | Path = "out/di_frt") -> RunOutcome:
    res = run_experiment(parse_config(CONFIG_DI), out_dir)
    res.criteria += criteria_di(res)
    return res


# --------------------------------------------------------------------------- #
# pendulum pipeline (criteria 7-8)


@dataclass
class PendulumConfig:
    counts: tuple[int, int] = (301, 201)
    gamma: float = 5.0
    # kernel: undiscounted backward solve with a slightly weakened control box so that the
    # smoothed set keeps a strict margin against the full control authority
    kernel_formulation: Formulation = Formulation.BRT_NODISCOUNT
    kernel_control_scale: float = 0.95
    kernel_dt_cells: float = 3.0
    kernel_tol: float = 1e-3
    smoothing_margin_cells: float = 5.0
    smoothing_tol: float = 0.0
    smoothing_knots: int = 32
    batch_size: int = 16
    batch_threshold: float = 0.1
    x0_reference: tuple[float, float] = (4.0, 0.4)
    T: float = 16.0
    dt_ctrl: float = 0.01
    dt_integrator: float = 0.0025
    k1: float = 3.0
    k2: float = 3.0
    workers: int = 1

    def grid(self) -> Grid:
        return make_grid([{"min": 0.5 * np.pi - 0.3, "max": 2 * np.pi + 0.3, "count": self.counts[0]},
                          {"min": -1.3, "max": 1.3, "count": self.counts[1]}])


@dataclass
class PendulumRun:
    config: PendulumConfig
    h_X: ScalarField
    kernel: ScalarField | None
    h_S: ScalarField
    value: ScalarField
    solve_report: SolveReport
    smoothing: object | None
    initial_states: np.ndarray
    filtered: list[Trajectory]
    distance: list[Trajectory]
    reference: Trajectory
    timings: dict


def pendulum_speed_bounds(grid: Grid) -> np.ndarray:
    """Per-axis speed bounds over the box: |x2| and 1 + ū + d̄."""
    a = grid.axes[1]
    return np.array([max(abs(a.min), abs(a.max)), 1.0 + PENDULUM_U_MAX + PENDULUM_D_MAX])


def pendulum_kernel(cfg: PendulumConfig, h_X: ScalarField) -> SolveReport:
    sys_full = pendulum()
    k = cfg.kernel_control_scale
    sys_k = sys_full.with_boxes(U=BoxSet(k * sys_full.U.lower, k * sys_full.U.upper))
    grid = h_X.grid
    dt = dt_from_cells(sys_k, grid, cfg.kernel_dt_cells, pendulum_speed_bounds(grid))
    params = SolveParams(gamma=cfg.gamma, dt_vi=dt, tol_steady=cfg.kernel_tol)
    return value_iterate(h_X, cfg.kernel_formulation, sys_k, h_X, params)


def pendulum_initial_states(V: ScalarField, n: int = 16, threshold: float = 0.1) -> np.ndarray:
    """``n`` states spread over a lattice on X, keeping those with V > threshold."""
    cand = np.array([[a, b] for a in np.linspace(2.5, 5.8, 6) for b in np.linspace(-0.8, 0.8, 6)])
    cand = cand[interpolate_many(V, cand) > threshold]
    if len(cand) < n:
        raise RuntimeError(f"only {len(cand)} lattice states satisfy V > {threshold}")
    return cand[np.linspace(0, len(cand) - 1, n).astype(int)]


def _batch(fn: Callable[[np.ndarray], Trajectory], states: np.ndarray, workers: int) -> list[Trajectory]:
    if workers <= 1:
        return [fn(x) for x in states]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, states))


def pendulum_pipeline(cfg: PendulumConfig | None = None, h_S: ScalarField | None = None,
                      simulate_batches: bool = True) -> PendulumRun:
    """Kernel → smoothed invariant set → FRT value → closed-loop batches.

    A supplied ``h_S`` skips the kernel and smoothing stages.
    """
    cfg = cfg or PendulumConfig()
    grid = cfg.grid()
    system = pendulum()
    h_X = build_target(TargetSpec("clipped_sdf_shape", "pendulum_X"), grid)
    timings = {}
    kernel = smoothing = None
    t0 = time.perf_counter()
    if h_S is None:
        kernel = pendulum_kernel(cfg, h_X).value
        h_S, smoothing = smooth_invariant_set(
            kernel, cfg.smoothing_margin_cells * float(grid.spacing.min()), system, cfg.gamma,
            tol=cfg.smoothing_tol, min_knots=cfg.smoothing_knots)
    elif not h_S.grid.same_as(grid):
        raise ValueError("supplied h_S lives on a different grid")
    timings["kernel_and_smoothing"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    rep = levelset_solve_frt(system, h_S, SolveParams(gamma=cfg.gamma))
    timings["frt"] = time.perf_counter() - t0
    V = rep.value

    t0 = time.perf_counter()
    X0 = pendulum_initial_states(V, cfg.batch_size, cfg.batch_threshold)
    bV, bX = BarrierFunction(V), BarrierFunction(h_X)
    ref = reference_policy(cfg.k1, cfg.k2)
    run = lambda policy, dist: (lambda x0: simulate(system, policy, dist, x0, cfg.T, cfg.dt_ctrl,
                                                    cfg.dt_integrator, bounds=grid))
    filtered, distance = [], []
    if simulate_batches:
        filtered = _batch(run(FilteredPolicy(FilterSpec(bV, cfg.gamma, system), ref),
                              WorstCase(bV, cfg.gamma)), X0, cfg.workers)
        distance = _batch(run(FilteredPolicy(FilterSpec(bX, cfg.gamma, system), ref),
                              WorstCase(bX, cfg.gamma)), X0, cfg.workers)
    # the reference rollout is stressed with the disturbance that is worst for V
    reference = run(ref, WorstCase(bV, cfg.gamma))(np.array(cfg.x0_reference))
    timings["simulation"] = time.perf_counter() - t0
    return PendulumRun(cfg, h_X, kernel, h_S, V, rep, smoothing, X0, filtered, distance,
                       reference, timings)


def criteria_pendulum(run: PendulumRun) -> list[CriterionResult]:
    cfg, V, h_S = run.config, run.value, run.h_S
    grid = V.grid
    dx = float(grid.spacing.max())
    eps = 3 * dx
    br = barrier_residual(V, pendulum(), cfg.gamma, superlevel(V, eps))
    tol = -0.05 * cfg.gamma * 2.0
    c7 = _criterion(7, "pendulum barrier residual", br.min >= tol,
                    f"min residual {br.min:.4f} vs {tol:.2f} on {int(br.evaluated.sum())} points",
                    run.timings["kernel_and_smoothing"] + run.timings["frt"], 120.0)

    L_h = lipschitz_of_field(h_S)
    floor = -2 * dx * L_h
    audits = [safety_audit(tr, h_S, pendulum_in_X) for tr in run.filtered]
    min_h = min(a.min_h for a in audits)
    n_infeasible = sum(int((~tr.filter_feasible).sum()) for tr in run.filtered)
    ok_a = n_infeasible == 0 and min_h >= floor
    ref_exit = safety_audit(run.reference, h_S, pendulum_in_X).exit_time
    exits = sum(safety_audit(tr, h_S, pendulum_in_X).exit_time is not None for tr in run.distance)
    c8 = _criterion(
        8, "pendulum closed loop", ok_a and ref_exit is not None and exits >= 1,
        f"(a) V-filtered batch min h_S {min_h:.4f} vs {floor:.4f}, infeasible steps {n_infeasible}; "
        f"(b) reference exit time {ref_exit}; (c) distance-CBF exits {exits}/{len(run.distance)}",
        run.timings["simulation"], 60.0)
    return [c7, c8]


def run_pendulum(out_dir: str | Path = "out/pendulum", h_S: ScalarField | None = None,
                 cfg: PendulumConfig | None = None) -> RunOutcome:
    run = pendulum_pipeline(cfg, h_S)
    out = Path(out_dir)
    res = RunOutcome()
    res.reports["pendulum"] = run
    for name, fld in (("h_X", run.h_X), ("kernel", run.kernel), ("h_S", run.h_S), ("value", run.value)):
        if fld is not None:
            res.artifacts.append(save_field(out / f"{name}.hjf", fld))
            res.artifacts.append(write_contour_csv(out / f"{name}_contour.csv", zero_contour_2d(fld)))
    res.artifacts.append(write_trajectory_csv(out / "reference.csv", run.reference))
    for i, tr in enumerate(run.filtered):
        res.artifacts.append(write_trajectory_csv(out / f"filtered_value_{i:02d}.csv", tr))
    for i, tr in enumerate(run.distance):
        res.artifacts.append(write_trajectory_csv(out / f"filtered_distance_{i:02d}.csv", tr))
    res.criteria += criteria_pendulum(run)
    m = res.manifest
    m.update({"name": "pendulum", "gamma": _g(run.config.gamma),
              "grid": "x".join(map(str, run.value.grid.shape)),
              "kernel_skipped": run.kernel is None,
              "frt.iterations": run.solve_report.iterations,
              "frt.converged": run.solve_report.converged})
    if run.smoothing is not None:
        m["smoothing.margin"] = _g(run.smoothing.margin)
        m["smoothing.knots"] = run.smoothing.knots
        m["smoothing.min_boundary_residual"] = _g(run.smoothing.check.residuals.min())
    for c in res.criteria:
        m[f"criterion_{c.number}"] = "PASS" if c.passed else "FAIL"
    for k, v in run.timings.items():
        m[f"wall_time.{k}"] = f"{v:.3f}"
    res.artifacts.append(write_manifest(out / "manifest.txt", m))
    return res


# --------------------------------------------------------------------------- #
# property suite (criteria 5, 6, 9, 10)


def one_d_problem(count: int = 601) -> tuple[ControlAffineSystem, ScalarField]:
    g = make_grid([{"min": 0.0, "max": 6.0, "count": count}])
    return integrator1d(), sample(g, ramp_1d_target)


def inverse_optimality_problem(count: int) -> tuple[Grid, Callable]:
    g = make_grid([{"min": -2.0, "max": 2.0, "count": count}])
    return g, lambda x: np.maximum(1.0 - x[:, 0] ** 2, -1.0)


def criterion_contraction(gamma: float = 2.0, dt: float = 0.01, seed: int = 0) -> CriterionResult:
    t0 = time.perf_counter()
    sys1, h1 = one_d_problem()
    r1 = contraction_test(sys1, h1, gamma, dt, 20, seed)
    hd = di_set("Sc", make_grid(DI_DOMAIN))
    r2 = contraction_test(double_integrator(), hd, gamma, dt, 20, seed)
    bound = float(np.exp(-gamma * dt)) + 1e-3
    worst = max(r1["max_ratio"], r2["max_ratio"])
    return _criterion(5, "contraction", worst <= bound,
                      f"max ratio 1d {r1['max_ratio']:.4f}, double integrator {r2['max_ratio']:.4f} "
                      f"vs bound {bound:.4f}", time.perf_counter() - t0, 30.0)


def criterion_inverse_optimality(gammas=(4.0, 8.0), count: int = 801) -> CriterionResult:
    t0 = time.perf_counter()
    parts, ok = [], True
    for gamma in gammas:
        g, h = inverse_optimality_problem(count)
        g2, _ = inverse_optimality_problem(2 * count - 1)
        e = inverse_optimality_check(h, single_integrator1d(), gamma, g)["linf_error"]
        e2 = inverse_optimality_check(h, single_integrator1d(), gamma, g2)["linf_error"]
        tol = 3 * float(g.spacing[0])
        ratio = e / e2 if e2 > 0 else float("inf")
        ok &= e <= tol and 1.4 <= ratio <= 2.6
        parts.append(f"gamma {gamma:g}: error {e:.2e} (tol {tol:.3f}), refinement ratio {ratio:.2f}")
    return _criterion(6, "inverse optimality", ok,
                      "; ".join(parts) + " (ratio must lie in [1.4, 2.6])",
                      time.perf_counter() - t0, 10.0)


def criterion_gamma_invariance(gammas=(2.0, 5.0)) -> CriterionResult:
    t0 = time.perf_counter()
    system, h = one_d_problem()
    eps = 3 * float(h.grid.spacing[0])
    sets = [superlevel(levelset_solve_frt(system, h, SolveParams(gamma=g)).value, eps) for g in gammas]
    jac = set_metrics(*sets).jaccard
    return _criterion(9, "gamma invariance", jac >= 0.98,
                      f"jaccard {jac:.4f} between {{V > {eps:g}}} at gamma {gammas[0]:g} and {gammas[1]:g} "
                      f"(need >= 0.98)", time.perf_counter() - t0, 10.0)


def cross_engine_cases(pendulum_target: ScalarField | None = None) -> list[tuple]:
    """(name, system, target, gamma) for every built-in example."""
    cases = []
    sys1, h1 = one_d_problem()
    cases.append(("integrator1d", sys1, h1, 2.0))
    g, h = inverse_optimality_problem(801)
    cases.append(("single_integrator1d", single_integrator1d(), sample(g, h), 4.0))
    gd = make_grid([{"min": -6.0, "max": 6.0, "count": 161}, {"min": -4.0, "max": 4.0, "count": 121}])
    for name in ("Sa", "Sb", "Sc", "Sd"):
        cases.append((f"double_integrator_{name}", double_integrator(), di_set(name, gd), 2.0))
    if pendulum_target is None:
        gp = PendulumConfig(counts=(151, 101)).grid()
        pendulum_target = build_target(TargetSpec("clipped_sdf_shape", "pendulum_X"), gp)
    cases.append(("pendulum", pendulum(), pendulum_target, 5.0))
    return cases


def criterion_cross_engine(pendulum_target: ScalarField | None = None) -> CriterionResult:
    t0 = time.perf_counter()
    parts, ok = [], True
    for name, system, h, gamma in cross_engine_cases(pendulum_target):
        params = SolveParams(gamma=gamma)
        tol = 5 * float(h.grid.spacing.max()) * lipschitz_of_field(h)
        ls = levelset_solve_frt(system, h, params).value.values
        vi = value_iterate(h, Formulation.FRT, system, h, params).value.values
        hi = h.with_values(np.full(h.grid.shape, 10.0))
        vi10 = value_iterate(hi, Formulation.FRT, system, h, params).value.values
        d_eng, d_init = float(np.abs(ls - vi).max()), float(np.abs(vi10 - vi).max())
        ok &= d_eng <= tol and d_init <= tol
        parts.append(f"{name} {d_eng:.4f}/{d_init:.4f} (tol {tol:.3f})")
    return _criterion(10, "cross-engine equivalence", ok,
                      "engine/initialization gaps: " + ", ".join(parts), time.perf_counter() - t0, 180.0)


def run_property_suite(out_dir: str | Path = "out/properties", gamma: float = 2.0, dt: float = 0.01,
                       seed: int = 0, pendulum_target: ScalarField | None = None) -> RunOutcome:
    res = RunOutcome()
    res.criteria = [criterion_contraction(gamma, dt, seed), criterion_inverse_optimality(),
                    criterion_gamma_invariance(), criterion_cross_engine(pendulum_target)]
    m = res.manifest
    m.update({"name": "properties", "gamma": _g(gamma), "dt": _g(dt), "seed": seed})
    for c in res.criteria:
        m[f"criterion_{c.number}"] = "PASS" if c.passed else "FAIL"
        m[f"criterion_{c.number}.detail"] = c.detail
        m[f"wall_time.criterion_{c.number}"] = f"{c.runtime:.3f}"
    res.artifacts.append(write_manifest(Path(out_dir) / "manifest.txt", m))
    return res
