"""Command-line entry point ``frt-reach``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .analysis import barrier_residual, cbf_validate, fixed_point_check, superlevel
from .config import ConfigError, load_config
from .dynamics import SYSTEMS, get_system
from .io import FieldFormatError, load_field, save_field, write_manifest, write_rows_csv, write_trajectory_csv
from .safety_sim import (BarrierFunction, FilteredPolicy, FilterSpec, WorstCase, safety_audit,
                         simulate)
from .solver import Formulation, SolverDivergence
from .targets import TargetSpec, build_target

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_ACCEPTANCE = 0, 2, 3, 4


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="frt-reach", description="Discounted forward-reachability "
                                "value functions, invariance checks and safety-filter rollouts.")
    p.add_argument("--out-dir", type=Path, default=None, help="directory for artifacts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="workers for batch rollouts")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one formulation for the first target in a config")
    s.add_argument("--config", type=Path, required=True)
    s.add_argument("--formulation", choices=[f.value for f in Formulation], default=None)
    s.add_argument("--out", type=Path, required=True, help="output HJF1 field")

    c = sub.add_parser("check", help="fixed-point verdict and barrier residual of a value field")
    c.add_argument("--value", type=Path, required=True)
    c.add_argument("--set", type=Path, required=True, help="field whose positive part is S")
    c.add_argument("--system", choices=sorted(SYSTEMS), required=True)
    c.add_argument("--gamma", type=float, required=True)
    c.add_argument("--eps", type=float, default=None, help="default 3 x max grid spacing")

    pe = sub.add_parser("pendulum", help="filtered pendulum rollout, or the full pipeline")
    pe.add_argument("--value", type=Path, default=None,
                    help="filter with this field; without it the full pipeline runs")
    pe.add_argument("--set", type=Path, default=None, help="h_S field used for the audit")
    pe.add_argument("--skip-kernel", type=Path, default=None, metavar="H_S",
                    help="pipeline only: start from this smoothed h_S field")
    pe.add_argument("--gamma", type=float, default=5.0)
    pe.add_argument("--x0", type=_floats, default=(4.0, 0.4))
    pe.add_argument("--T", type=float, default=16.0)

    sub.add_parser("compare-1d", help="four formulations on the 1D example (criteria 1-3)")
    sub.add_parser("di-frt", help="double-integrator fixed-point verdicts (criterion 4)")
    pr = sub.add_parser("properties", help="contraction, inverse optimality, gamma invariance, "
                        "cross-engine agreement (criteria 5, 6, 9, 10)")
    pr.add_argument("--gamma", type=float, default=2.0)
    pr.add_argument("--dt", type=float, default=0.01)

    r = sub.add_parser("run", help="run the stages of a config file")
    r.add_argument("--config", type=Path, required=True)
    return p


def _out(args, default: str) -> Path:
    return args.out_dir if args.out_dir is not None else Path(default)


def _report(outcome: ex.RunOutcome) -> int:
    for line in outcome.summary():
        print(line)
    return EXIT_OK if outcome.ok else EXIT_ACCEPTANCE


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    system, grid = cfg.system(), cfg.grid()
    name, h = cfg.target_fields()[0]
    form = Formulation(args.formulation) if args.formulation else cfg.solver.formulations[0]
    params = cfg.solver.params
    if cfg.solver.dt_vi_cells is not None:
        params.dt_vi = ex.dt_from_cells(system, grid, cfg.solver.dt_vi_cells)
    rep = ex.solve(system, h, form, params, cfg.solver.engine)
    save_field(args.out, rep.value)
    res_path = args.out.with_name(args.out.stem + "_residuals.csv")
    write_rows_csv(res_path, ["iteration", "residual"], enumerate(map(float, rep.residual_history)))
    print(f"{name} {form.value}: iterations={rep.iterations} converged={rep.converged} "
          f"-> {args.out}, {res_path}")
    return EXIT_OK


def cmd_check(args) -> int:
    V, S_field = load_field(args.value), load_field(args.set)
    if not V.grid.same_as(S_field.grid):
        raise ConfigError("--value and --set live on different grids")
    system = get_system(args.system)
    eps = args.eps if args.eps is not None else 3 * float(V.grid.spacing.max())
    fp = fixed_point_check(superlevel(S_field, eps), V, eps)
    region = superlevel(V, eps)
    tol = 0.05 * args.gamma * float(np.ptp(S_field.values))
    br = barrier_residual(V, system, args.gamma, region)
    bad = br.evaluated & (br.residual.values < -tol)
    cbf = cbf_validate(V, system, args.gamma, region, tol=tol)
    report = {
        "verdict": fp.verdict, "jaccard": fp.metrics.jaccard,
        "a_minus_b_fraction": fp.metrics.a_minus_b_fraction,
        "b_minus_a_fraction": fp.metrics.b_minus_a_fraction,
        "grid_hausdorff": fp.metrics.grid_hausdorff, "eps": eps, "gamma": args.gamma,
        "barrier_min": br.min, "barrier_tol": -tol, "barrier_evaluated": int(br.evaluated.sum()),
        "barrier_violations": int(bad.sum()), "suspected_kinks": int(br.suspected_kinks.sum()),
        "cbf_valid": cbf.valid,
    }
    out = _out(args, "out/check")
    write_manifest(out / "check_report.txt", report)
    pts = V.grid.points()[bad.ravel()]
    rows = [list(p) + [float(r)] for p, r in zip(pts, br.residual.values[bad])]
    header = [f"x{k + 1}" for k in range(V.grid.ndim)] + ["residual"]
    write_rows_csv(out / "violations.csv", header, rows)
    for k, v in report.items():
        print(f"{k}={v}")
    return EXIT_OK


def cmd_pendulum(args) -> int:
    out = _out(args, "out/pendulum")
    if args.value is None:
        h_S = load_field(args.skip_kernel) if args.skip_kernel else None
        cfg = ex.PendulumConfig(gamma=args.gamma, x0_reference=tuple(args.x0), T=args.T,
                                workers=args.threads)
        return _report(ex.run_pendulum(out, h_S=h_S, cfg=cfg))
    if len(args.x0) != 2:
        raise ConfigError("--x0 needs two components")
    V = load_field(args.value)
    system = get_system("pendulum")
    if args.set is not None:
        h_S = load_field(args.set)
    else:
        h_S = build_target(TargetSpec("clipped_sdf_shape", "pendulum_X"), V.grid)
    bV = BarrierFunction(V)
    policy = FilteredPolicy(FilterSpec(bV, args.gamma, system), ex.reference_policy())
    traj = simulate(system, policy, WorstCase(bV, args.gamma), args.x0, args.T, bounds=V.grid)
    audit = safety_audit(traj, h_S, ex.pendulum_in_X)
    write_trajectory_csv(out / "trajectory.csv", traj)
    report = {"min_h": audit.min_h, "exit_time": audit.exit_time,
              "feasible_fraction": audit.feasible_fraction,
              "min_constraint_lhs": audit.min_constraint_lhs, "aborted": traj.aborted}
    write_manifest(out / "audit.txt", report)
    for k, v in report.items():
        print(f"{k}={v}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "check":
            return cmd_check(args)
        if args.command == "pendulum":
            return cmd_pendulum(args)
        if args.command == "compare-1d":
            return _report(ex.run_1d_comparison(_out(args, "out/1d_comparison")))
        if args.command == "di-frt":
            return _report(ex.run_double_integrator(_out(args, "out/di_frt")))
        if args.command == "properties":
            return _report(ex.run_property_suite(_out(args, "out/properties"), args.gamma,
                                                 args.dt, args.seed))
        if args.command == "run":
            return _report(ex.run_experiment(load_config(args.config), args.out_dir, args.seed))
    except (ConfigError, FieldFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverDivergence as exc:
        print(f"solver diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
