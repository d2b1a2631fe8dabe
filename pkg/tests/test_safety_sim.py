import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from frt_reach.dynamics import (PENDULUM_U_MAX, BoxSet, ControlAffineSystem, double_integrator,
                                pendulum, single_integrator1d, singleton)
from frt_reach.grid import make_grid, sample
from frt_reach.safety_sim import (BarrierFunction, FilteredPolicy, FilterSpec, ReferencePolicy,
                                  Trajectory, WorstCase, constraint_coefficients, filter_control,
                                  pendulum_reference, pendulum_target_schedule, project_interval,
                                  safety_audit, simulate)

U_MAX = PENDULUM_U_MAX


def test_projection_examples():
    assert project_interval(0.3, 0.0, -1, 1, 0.2) == (0.2, True)
    assert project_interval(-0.5, 1.0, -1, 1, 0.0) == (0.5, True)
    u, ok = project_interval(-0.1, 0.0, -1, 1, 0.4)
    assert not ok and u == -1  # tie between endpoints goes to u_lo
    u, ok = project_interval(-3.0, 1.0, -1, 1, 0.0)
    assert not ok and u == 1


# magnitudes below 1e-6 would underflow in the brute-force sweep used as oracle
coeff = st.one_of(st.just(0.0), st.floats(-5, 5).filter(lambda v: abs(v) >= 1e-6))


@given(coeff, coeff, st.floats(-1, 1))
def test_projection_properties(a, b, u_ref):
    u, ok = project_interval(a, b, -1.0, 1.0, u_ref)
    assert -1.0 <= u <= 1.0
    if ok:
        assert a + b * u >= -1e-9
        sweep = np.linspace(-1, 1, 101)
        feasible = sweep[a + b * sweep >= 0]
        assert np.all(abs(u - u_ref) <= np.abs(feasible - u_ref) + 1e-12)
    else:
        assert a + b * u >= max(a - b, a + b) - 1e-12


def test_pendulum_reference_examples():
    assert pendulum_reference(np.array([0.5, 0.0]), 0.5) == pytest.approx(np.sin(0.5))
    assert pendulum_reference(np.array([np.pi, 0.0]), np.pi) == pytest.approx(0.0, abs=1e-12)
    assert pendulum_reference(np.array([4.0, 0.4]), -0.2) == pytest.approx(-U_MAX)
    assert pendulum_target_schedule(7.99) == -0.2
    assert pendulum_target_schedule(8.0) == pytest.approx(np.pi - 0.6)


def analytic_disk(r=1.0):
    return BarrierFunction(lambda x: r - np.linalg.norm(x, axis=1),
                           lambda x: -x / np.linalg.norm(x, axis=1, keepdims=True))


def test_constraint_coefficients_double_integrator():
    spec = FilterSpec(analytic_disk(), 2.0, double_integrator())
    a, b = constraint_coefficients(spec, np.array([0.6, 0.8]))
    # ∇h = -(0.6, 0.8); f0 = (0.8, 0); G_u = (0, 1); h = 0
    assert a == pytest.approx(-0.48)
    assert b == pytest.approx(-0.8)


@given(st.floats(-0.99, 0.99), st.floats(-0.99, 0.99), st.floats(-1, 1))
def test_filter_returns_admissible_controls(p, v, u_ref):
    assume(np.hypot(p, v) > 1e-3)
    spec = FilterSpec(analytic_disk(), 2.0, double_integrator())
    res = filter_control(spec, np.array([p, v]), u_ref)
    assert -1.0 <= res.u[0] <= 1.0
    if res.feasible:
        assert res.constraint_lhs_at_u >= -1e-9


def test_filter_spec_validation():
    with pytest.raises(ValueError):
        FilterSpec(analytic_disk(), 0.0, double_integrator())
    two_inputs = double_integrator().with_boxes(U=BoxSet([-1, -1], [1, 1]))
    with pytest.raises(ValueError):
        filter_control(FilterSpec(analytic_disk(), 1.0, two_inputs), np.array([0.1, 0.1]), 0.0)
    with pytest.raises(ValueError):
        BarrierFunction(lambda x: x[:, 0])
    with pytest.raises(ValueError, match="non-finite"):
        filter_control(FilterSpec(analytic_disk(), 1.0, double_integrator()), np.zeros(2), 0.0)


def test_field_barrier_gradient():
    g = make_grid([{"min": -2, "max": 2, "count": 81}] * 2)
    b = BarrierFunction(sample(g, lambda x: 3 * x[:, 0] - x[:, 1]))
    np.testing.assert_allclose(b.gradient(np.array([0.31, -0.47])), [3.0, -1.0], atol=1e-10)
    assert b.value(np.array([0.5, 0.5])) == pytest.approx(1.0)


def static_system():
    return ControlAffineSystem("static", 2, lambda x: np.zeros_like(x),
                               lambda x: np.zeros((x.shape[0], 2, 1)),
                               lambda x: np.zeros((x.shape[0], 2, 1)), BoxSet([-1.0], [1.0]),
                               singleton(1))


def test_zero_dynamics_give_a_constant_trajectory():
    tr = simulate(static_system(), ReferencePolicy(lambda t, x: 0.3), None, [0.2, -0.1], 1.0)
    assert len(tr) == 101
    np.testing.assert_allclose(tr.states, np.tile([0.2, -0.1], (101, 1)))
    assert np.all(np.diff(tr.times) > 0)
    audit = safety_audit(tr, lambda s: 1 - np.linalg.norm(s, axis=1),
                         lambda s: np.ones(len(s), bool))
    assert audit.exit_time is None
    assert audit.min_h == pytest.approx(1 - np.hypot(0.2, 0.1))


def test_simulate_validates_steps():
    pol = ReferencePolicy(lambda t, x: 0.0)
    with pytest.raises(ValueError):
        simulate(static_system(), pol, None, [0, 0], 1.0, dt_ctrl=0.01, dt_integrator=0.02)
    with pytest.raises(ValueError):
        simulate(static_system(), pol, None, [0, 0], 1.0, dt_ctrl=0.03)


def test_rk4_matches_the_pendulum_energy():
    # undisturbed, uncontrolled pendulum conserves x2²/2 - cos x1
    s = pendulum()
    tr = simulate(s, ReferencePolicy(lambda t, x: 0.0), None, [1.0, 0.0], 5.0)
    energy = 0.5 * tr.states[:, 1] ** 2 - np.cos(tr.states[:, 0])
    assert np.ptp(energy) < 1e-9


def test_simulate_aborts_outside_the_box():
    g = make_grid([{"min": -1, "max": 1, "count": 11}] * 2)
    s = double_integrator()
    tr = simulate(s, ReferencePolicy(lambda t, x: 1.0), None, [0.0, 0.9], 5.0, bounds=g)
    assert tr.aborted and tr.times[-1] < 5.0


def test_filtered_single_integrator_approaches_the_boundary_safely():
    # ẋ = u, h = 1 - x²: the filter caps u at γ(1 - x²)/(2x), so x creeps towards 1
    s = single_integrator1d()
    b = BarrierFunction(lambda x: 1 - x[:, 0] ** 2, lambda x: -2 * x)
    tr = simulate(s, FilteredPolicy(FilterSpec(b, 2.0, s), ReferencePolicy(lambda t, x: 1.0)),
                  None, [0.0], 5.0)
    assert tr.filter_feasible.all()
    assert tr.h_values.min() >= -1e-6
    assert tr.states[-1, 0] > 0.99
    assert np.all(tr.constraint_lhs >= -1e-9)


def test_worst_case_disturbance_is_recorded():
    s = pendulum()
    g = make_grid([{"min": 0, "max": 7, "count": 141}, {"min": -2, "max": 2, "count": 81}])
    h = BarrierFunction(sample(g, lambda x: 1 - np.abs(x[:, 1])))
    tr = simulate(s, ReferencePolicy(lambda t, x: 0.0), WorstCase(h, 1.0), [3.0, 0.2], 0.5)
    assert np.all(np.abs(tr.disturbances) == pytest.approx(0.1))


def test_audit_reports_exit_time():
    tr = Trajectory(np.array([0.0, 1.0, 2.0]), np.array([[0.0], [2.0], [0.0]]), np.zeros((3, 1)),
                    np.zeros((3, 1)), np.zeros(3), np.array([0.1, -0.2, 0.3]), np.array([True, False, True]))
    a = safety_audit(tr, lambda s: 1 - s[:, 0], lambda s: s[:, 0] <= 1)
    assert a.exit_time == 1.0 and a.min_h == -1.0
    assert a.feasible_fraction == pytest.approx(2 / 3) and a.min_constraint_lhs == -0.2
