"""Declarative experiment configuration in bracketed ``key = value`` files."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import SYSTEMS, ControlAffineSystem, get_system
from .grid import Grid, ScalarField, make_grid
from .solver import Formulation, SolveParams
from .targets import TargetSpec, build_target, ramp_1d_target, shape_sdf


class ConfigError(ValueError):
    pass


SECTIONS: dict[str, set[str]] = {
    "experiment": {"name", "stages", "seed"},
    "system": {"name", "u_min", "u_max", "d_min", "d_max"},
    "grid": {"min", "max", "count", "periodic"},
    "target": {"kind", "shape", "params", "clip_low", "clip_high", "field", "function"},
    "solver": {"engine", "formulation", "gamma", "cfl", "tol_steady", "max_time", "dt_vi",
               "dt_vi_cells", "max_iters", "value_cap", "input_samples_per_dim", "v0"},
    "check": {"eps", "eps_cells", "expect"},
    "simulation": {"x0", "T", "dt_ctrl", "dt_integrator", "k1", "k2", "disturbance",
                   "filter", "gamma"},
    "output": {"directory", "formats", "profile"},
}
REQUIRED = ("system", "grid", "target")
STAGES = ("solve", "check", "simulate")
ENGINES = ("auto", "levelset", "vi")
FORMATS = ("hjf", "csv")

# closed-form targets selectable with ``function = <name>``
ANALYTIC_TARGETS = {
    "ramp_1d": ramp_1d_target,
    "one_minus_x2": lambda x: np.maximum(1.0 - x[:, 0] ** 2, -1.0),
}


@dataclass
class SolverConfig:
    engine: str = "auto"
    formulations: list[Formulation] = field(default_factory=lambda: [Formulation.FRT])
    params: SolveParams = field(default_factory=SolveParams)
    dt_vi_cells: float | None = None
    v0: str = "target"  # target | constant:<c>


@dataclass
class SimulationConfig:
    x0: list[tuple[float, ...]] = field(default_factory=list)
    T: float = 16.0
    dt_ctrl: float = 0.01
    dt_integrator: float = 0.0025
    k1: float = 3.0
    k2: float = 3.0
    disturbance: str = "worst_case"  # none | worst_case
    filter: str = "value"            # none | value | target
    gamma: float | None = None


@dataclass
class CheckConfig:
    eps: float | None = None
    eps_cells: float = 3.0
    expect: dict[str, str] = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    name: str
    stages: list[str]
    seed: int
    system_name: str
    box_overrides: dict[str, tuple[float, ...]]
    grid_bounds: list[dict]
    targets: list[TargetSpec]
    solver: SolverConfig
    check: CheckConfig
    simulation: SimulationConfig | None
    out_dir: Path
    formats: list[str]
    profile: bool
    source: Path | None = None

    def system(self) -> ControlAffineSystem:
        return get_system(self.system_name, **self.box_overrides)

    def grid(self) -> Grid:
        return make_grid(self.grid_bounds)

    def target_fields(self) -> list[tuple[str, ScalarField]]:
        g = self.grid()
        return [(t.shape or t.params.get("function", "target"), build_target(t, g))
                for t in self.targets]


# --------------------------------------------------------------------------- #
# value parsers


def _list(raw: str, sep: str = ",") -> list[str]:
    return [p.strip() for p in raw.split(sep) if p.strip()]


def _real(section: str, key: str, raw: str) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: {raw!r} is not a number") from None
    if not math.isfinite(v):
        raise ConfigError(f"[{section}] {key}: {raw!r} is not finite")
    return v


def _reals(section: str, key: str, raw: str) -> list[float]:
    return [_real(section, key, p) for p in _list(raw)]


def _int(section: str, key: str, raw: str) -> int:
    v = _real(section, key, raw)
    if v != int(v):
        raise ConfigError(f"[{section}] {key}: {raw!r} is not an integer")
    return int(v)


def _bool(section: str, key: str, raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"[{section}] {key}: {raw!r} is not a boolean")


def _choice(section: str, key: str, raw: str, allowed) -> str:
    v = raw.strip()
    if v not in allowed:
        raise ConfigError(f"[{section}] {key}: {v!r} not in {sorted(allowed)}")
    return v


def parse_params(raw: str) -> dict[str, float]:
    """``p1:2, p2:3, r:2.5`` → ``{"p1": 2.0, ...}``."""
    out = {}
    for item in _list(raw):
        k, sep, v = item.partition(":")
        if not sep or not k.strip():
            raise ConfigError(f"[target] params: expected name:value, got {item!r}")
        out[k.strip()] = _real("target", f"params.{k.strip()}", v)
    return out


def _broadcast(values: list, n: int, section: str, key: str) -> list:
    if len(values) == 1:
        return values * n
    if len(values) != n:
        raise ConfigError(f"[{section}] {key}: expected 1 or {n} entries, got {len(values)}")
    return values


# --------------------------------------------------------------------------- #
# loading


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"cannot read config {path}")
    return parse_config(path.read_text(), source=path)


def parse_config(text: str, source: Path | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive (T)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")
        for key in cp[sec]:
            if key not in SECTIONS[sec]:
                raise ConfigError(f"unknown key {key!r} in section [{sec}]")
    for sec in REQUIRED:
        if not cp.has_section(sec):
            raise ConfigError(f"missing section [{sec}]")

    exp = cp["experiment"] if cp.has_section("experiment") else {}
    stages = _list(exp.get("stages", "solve"))
    for s in stages:
        _choice("experiment", "stages", s, STAGES)
    seed = _int("experiment", "seed", exp.get("seed", "0"))

    sysec = cp["system"]
    if "name" not in sysec:
        raise ConfigError("[system] name is required")
    sys_name = _choice("system", "name", sysec["name"], SYSTEMS)
    boxes = {k: tuple(_reals("system", k, sysec[k]))
             for k in ("u_min", "u_max", "d_min", "d_max") if k in sysec}

    grid_bounds = _parse_grid(cp["grid"])
    ndim_sys = SYSTEMS[sys_name]().state_dim
    if len(grid_bounds) != ndim_sys:
        raise ConfigError(f"[grid] has {len(grid_bounds)} dims, system {sys_name} has {ndim_sys}")

    targets = _parse_targets(cp["target"], source)
    solver = _parse_solver(cp["solver"] if cp.has_section("solver") else {})
    check = _parse_check(cp["check"] if cp.has_section("check") else {})
    sim = _parse_simulation(cp["simulation"]) if cp.has_section("simulation") else None
    if "simulate" in stages and sim is None:
        raise ConfigError("stage 'simulate' needs a [simulation] section")

    out = cp["output"] if cp.has_section("output") else {}
    formats = [_choice("output", "formats", f, FORMATS) for f in _list(out.get("formats", "hjf,csv"))]
    return ExperimentConfig(
        name=exp.get("name", source.stem if source else "experiment"),
        stages=stages, seed=seed, system_name=sys_name, box_overrides=boxes,
        grid_bounds=grid_bounds, targets=targets, solver=solver, check=check,
        simulation=sim, out_dir=Path(out.get("directory", "out")), formats=formats,
        profile=_bool("output", "profile", out.get("profile", "false")), source=source)


def _parse_grid(sec) -> list[dict]:
    for key in ("min", "max", "count"):
        if key not in sec:
            raise ConfigError(f"[grid] {key} is required")
    lo = _reals("grid", "min", sec["min"])
    hi = _reals("grid", "max", sec["max"])
    counts = [_int("grid", "count", c) for c in _list(sec["count"])]
    n = max(len(lo), len(hi), len(counts))
    lo, hi, counts = (_broadcast(v, n, "grid", k) for v, k in ((lo, "min"), (hi, "max"), (counts, "count")))
    per = [_bool("grid", "periodic", p) for p in _list(sec.get("periodic", "false"))]
    per = _broadcast(per, n, "grid", "periodic")
    bounds = [{"min": a, "max": b, "count": c, "periodic": p} for a, b, c, p in zip(lo, hi, counts, per)]
    try:
        make_grid(bounds)
    except ValueError as exc:
        raise ConfigError(f"[grid] {exc}") from None
    return bounds


def _parse_targets(sec, source: Path | None) -> list[TargetSpec]:
    kind = _choice("target", "kind", sec.get("kind", "clipped_sdf_shape"),
                   ("clipped_sdf_shape", "clipped_sdf_field", "analytic"))
    clip_lo = _real("target", "clip_low", sec.get("clip_low", "-1"))
    clip_hi = _real("target", "clip_high", sec.get("clip_high", "1"))
    params = parse_params(sec.get("params", ""))
    if kind == "analytic":
        name = _choice("target", "function", sec.get("function", ""), ANALYTIC_TARGETS)
        return [TargetSpec("analytic", name, {"function": name}, clip_lo, clip_hi,
                           function=ANALYTIC_TARGETS[name])]
    if kind == "clipped_sdf_field":
        if "field" not in sec:
            raise ConfigError("[target] field is required for clipped_sdf_field")
        p = Path(sec["field"])
        if not p.is_absolute() and source is not None:
            p = source.parent / p
        from .io import load_field  # local import keeps config free of IO at import time
        try:
            fld = load_field(p)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"[target] field: {exc}") from None
        return [TargetSpec("clipped_sdf_field", p.stem, params, clip_lo, clip_hi, field=fld)]
    shapes = _list(sec.get("shape", ""))
    if not shapes:
        raise ConfigError("[target] shape is required for clipped_sdf_shape")
    out = []
    for s in shapes:
        try:
            shape_sdf(s, params)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"[target] shape {s!r}: {exc}") from None
        try:
            out.append(TargetSpec("clipped_sdf_shape", s, dict(params), clip_lo, clip_hi))
        except ValueError as exc:
            raise ConfigError(f"[target] {exc}") from None
    return out


def _parse_solver(sec) -> SolverConfig:
    engine = _choice("solver", "engine", sec.get("engine", "auto"), ENGINES)
    forms = []
    for f in _list(sec.get("formulation", "frt")):
        try:
            forms.append(Formulation(f))
        except ValueError:
            raise ConfigError(f"[solver] formulation: unknown {f!r}") from None
    kw = {}
    for key in ("gamma", "cfl", "tol_steady", "max_time", "dt_vi", "value_cap"):
        if key in sec:
            kw[key] = _real("solver", key, sec[key])
    for key in ("max_iters", "input_samples_per_dim"):
        if key in sec:
            kw[key] = _int("solver", key, sec[key])
    try:
        params = SolveParams(**kw)
    except ValueError as exc:
        raise ConfigError(f"[solver] {exc}") from None
    cells = _real("solver", "dt_vi_cells", sec["dt_vi_cells"]) if "dt_vi_cells" in sec else None
    if cells is not None and not 0 < cells <= 3:
        raise ConfigError("[solver] dt_vi_cells must lie in (0, 3]")
    v0 = sec.get("v0", "target").strip()
    if v0 != "target":
        kind, _, c = v0.partition(":")
        if kind != "constant":
            raise ConfigError(f"[solver] v0: expected target or constant:<c>, got {v0!r}")
        _real("solver", "v0", c)
    return SolverConfig(engine, forms, params, cells, v0)


def _parse_check(sec) -> CheckConfig:
    eps = _real("check", "eps", sec["eps"]) if "eps" in sec else None
    if eps is not None and eps < 0:
        raise ConfigError("[check] eps must be non-negative")
    cells = _real("check", "eps_cells", sec.get("eps_cells", "3"))
    expect = {}
    for item in _list(sec.get("expect", "")):
        k, sep, v = item.partition(":")
        if not sep:
            raise ConfigError(f"[check] expect: expected name:verdict, got {item!r}")
        expect[k.strip()] = _choice("check", "expect", v.strip(),
                                    ("fixed_point", "strict_superset", "other"))
    return CheckConfig(eps, cells, expect)


def _parse_simulation(sec) -> SimulationConfig:
    x0 = []
    for chunk in _list(sec.get("x0", ""), sep=";"):
        x0.append(tuple(_reals("simulation", "x0", chunk)))
    kw = {}
    for key in ("T", "dt_ctrl", "dt_integrator", "k1", "k2", "gamma"):
        if key in sec:
            kw[key] = _real("simulation", key, sec[key])
    if "disturbance" in sec:
        kw["disturbance"] = _choice("simulation", "disturbance", sec["disturbance"], ("none", "worst_case"))
    if "filter" in sec:
        kw["filter"] = _choice("simulation", "filter", sec["filter"], ("none", "value", "target"))
    return SimulationConfig(x0=x0, **kw)
