import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from frt_reach.dynamics import BoxSet, ControlAffineSystem, double_integrator, integrator1d, singleton
from frt_reach.experiments import exact_1d_frt
from frt_reach.grid import ScalarField, make_grid, sample
from frt_reach.solver import (BackupOperator, Formulation, SolveParams, SolverDivergence,
                              bellman_backup, interpolation_matrix, levelset_solve_frt,
                              value_iterate)
from frt_reach.targets import di_set, ramp_1d_target


def static_system(n=1):
    return ControlAffineSystem("static", n, lambda x: np.zeros_like(x),
                               lambda x: np.zeros((x.shape[0], n, 1)),
                               lambda x: np.zeros((x.shape[0], n, 1)), singleton(1))


def one_d(count=201):
    g = make_grid([{"min": 0, "max": 6, "count": count}])
    return g, sample(g, ramp_1d_target)


def test_params_validation():
    with pytest.raises(ValueError):
        SolveParams(gamma=0.0)
    with pytest.raises(ValueError):
        SolveParams(cfl=1.5)
    g, h = one_d()
    p = SolveParams()
    assert p.resolved_tol(h) == pytest.approx(4e-3)
    assert p.resolved_cap(h) == pytest.approx(20.0)
    # α = max|x + u| = 7 on [0, 6]
    assert p.resolved_dt_vi(integrator1d(), g) == pytest.approx(0.25 * 0.03 / 7)


def test_exact_1d_oracle_is_continuous_at_the_switch():
    x = np.array([5 / 3 - 1e-9, 5 / 3 + 1e-9])
    assert exact_1d_frt(x)[0] == pytest.approx(exact_1d_frt(x)[1], abs=1e-7)
    assert exact_1d_frt(np.array([5 / 3]))[0] == pytest.approx(1 / 3)


def test_levelset_1d_frt_matches_closed_form():
    g, h = one_d(301)
    rep = levelset_solve_frt(integrator1d(), h, SolveParams(gamma=2))
    x = g.coordinate_vectors()[0]
    assert rep.converged
    assert np.abs(rep.value.values - exact_1d_frt(x)).max() <= 3 * g.spacing[0]
    assert rep.residual_history[-1] <= rep.extras["tol"]


def test_value_iteration_1d_frt_matches_closed_form():
    g, h = one_d(301)
    rep = value_iterate(h, Formulation.FRT, integrator1d(), h, SolveParams(gamma=2))
    x = g.coordinate_vectors()[0]
    assert rep.converged and rep.extras["contraction_ok"]
    assert np.abs(rep.value.values - exact_1d_frt(x)).max() <= 3 * g.spacing[0]


def test_static_system_gives_positive_part():
    g = make_grid([{"min": -1, "max": 1, "count": 41}])
    h = sample(g, lambda x: x[:, 0])
    for rep in (levelset_solve_frt(static_system(), h, SolveParams(gamma=1, tol_steady=1e-8)),
                value_iterate(h, Formulation.FRT, static_system(), h,
                              SolveParams(gamma=1, dt_vi=0.1, tol_steady=1e-8))):
        np.testing.assert_allclose(rep.value.values, np.maximum(h.values, 0.0), atol=1e-7)


def test_frt_lower_bound():
    g, h = one_d(201)
    V = levelset_solve_frt(integrator1d(), h, SolveParams(gamma=2)).value.values
    assert np.all(V >= np.maximum(0.0, h.values) - 2 * g.spacing[0])


def test_gamma_lipschitz_flag():
    g, h = one_d(101)
    rep = levelset_solve_frt(integrator1d(), h, SolveParams(gamma=0.5, max_time=1.0))
    assert rep.gamma_vs_lipschitz["satisfied"] is False
    assert not rep.converged


@given(st.lists(st.tuples(st.floats(0, 6), st.floats(0, 6)), min_size=1, max_size=30))
def test_interpolation_matrix_rows_are_convex_weights(pts):
    g, _ = one_d(61)
    p = np.array(pts)[:, :1]
    M = interpolation_matrix(g, p)
    np.testing.assert_allclose(np.asarray(M.sum(axis=1)).ravel(), 1.0)
    assert M.min() >= 0


def test_locality_guard():
    g, h = one_d(61)
    with pytest.raises(ValueError, match="cells"):
        BackupOperator(Formulation.FRT, integrator1d(), h, 2.0, dt=0.1)
    BackupOperator(Formulation.FRT, integrator1d(), h, 2.0, dt=0.1, enforce_locality=False)


@pytest.fixture(scope="module")
def di_operator():
    g = make_grid([{"min": -3, "max": 3, "count": 41}, {"min": -2, "max": 2, "count": 31}])
    h = di_set("Sc", g)
    return {f: BackupOperator(f, double_integrator(), h, 2.0, 0.02) for f in Formulation}, h


fields = st.integers(0, 2**31 - 1)


@given(fields, st.sampled_from([Formulation.FRT, Formulation.BRT]))
def test_backup_contracts_at_the_discount_rate(di_operator, seed, form):
    ops, h = di_operator
    rng = np.random.default_rng(seed)
    v1, v2 = rng.uniform(-1, 1, (2,) + h.grid.shape)
    ratio = np.abs(ops[form](v1) - ops[form](v2)).max() / np.abs(v1 - v2).max()
    assert ratio <= np.exp(-2.0 * 0.02) + 1e-9 + 1e-6


@given(fields, st.sampled_from(list(Formulation)))
def test_backup_is_monotone(di_operator, seed, form):
    ops, h = di_operator
    rng = np.random.default_rng(seed)
    v1 = rng.uniform(-1, 1, h.grid.shape)
    v2 = v1 + rng.uniform(0, 0.5, h.grid.shape)
    assert np.all(ops[form](v1) <= ops[form](v2) + 1e-12)


def test_frt_backup_fixes_the_target_from_below():
    g, h = one_d(61)
    out = bellman_backup(h, Formulation.FRT, integrator1d(), h, 2.0, 0.005)
    assert np.all(out.values >= h.values)


def test_cbvf_is_capped():
    g, h = one_d(61)
    rep = value_iterate(h, Formulation.CBVF, integrator1d(), h,
                        SolveParams(gamma=2, max_iters=500, value_cap=3.0))
    assert np.abs(rep.value.values).max() <= 3.0 + 1e-12
    assert rep.extras["cap_hit"].shape == g.shape


def test_no_discount_runs_out_of_budget():
    g, h = one_d(61)
    rep = value_iterate(h, Formulation.BRT_NODISCOUNT, integrator1d(), h,
                        SolveParams(gamma=2, max_iters=50, tol_steady=1e-14))
    assert rep.iterations == 50 and not rep.converged


def test_initialization_independence():
    g, h = one_d(121)
    p = SolveParams(gamma=2)
    a = value_iterate(h, Formulation.FRT, integrator1d(), h, p).value.values
    b = value_iterate(h.with_values(np.full(g.shape, 10.0)), Formulation.FRT, integrator1d(), h, p).value.values
    assert np.abs(a - b).max() <= 5 * g.spacing[0]


def test_divergence_is_reported():
    g, h = one_d(61)
    with pytest.raises(SolverDivergence), np.errstate(invalid="ignore"):
        levelset_solve_frt(integrator1d(), h, SolveParams(gamma=2), V0=h.with_values(np.full(g.shape, np.inf)))


def test_domain_enlargement_barely_moves_the_value():
    g, h = one_d(301)
    big = make_grid([{"min": 0, "max": 12, "count": 601}])
    small = levelset_solve_frt(integrator1d(), h, SolveParams(gamma=2)).value.values
    wide = levelset_solve_frt(integrator1d(), sample(big, ramp_1d_target), SolveParams(gamma=2)).value.values
    assert np.abs(wide[:301] - small).max() < 2 * g.spacing[0]
