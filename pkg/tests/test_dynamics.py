import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from frt_reach.dynamics import (PENDULUM_D_MAX, PENDULUM_U_MAX, BoxSet, double_integrator, flow,
                                get_system, hamiltonian_maxmin, hamiltonian_maxmin_many,
                                integrator1d, lf_dissipation_bounds, lipschitz_estimate, pendulum,
                                singleton, worst_case_disturbance)
from frt_reach.grid import make_grid

finite = st.floats(-5, 5, allow_nan=False)


def test_box_validation_and_geometry():
    with pytest.raises(ValueError):
        BoxSet([1.0], [0.0])
    with pytest.raises(ValueError):
        BoxSet([0.0, 0.0], [1.0])
    b = BoxSet([-1.0, 0.0], [1.0, 2.0])
    np.testing.assert_allclose(b.mid, [0.0, 1.0])
    np.testing.assert_allclose(b.half, [1.0, 1.0])
    assert len(b.vertices()) == 4
    assert b.contains([1.0, 2.0]) and not b.contains([1.1, 0.0])
    assert singleton(2).is_singleton
    assert len(BoxSet([0.0, 1.0], [0.0, 2.0]).samples(5)) == 5


def test_pendulum_flow_and_input_bounds():
    s = pendulum()
    np.testing.assert_allclose(flow(s, [np.pi / 2, 0.3], [0.5], [0.1]), [0.3, -1.0 + 0.5])
    with pytest.raises(ValueError):
        flow(s, [0.0, 0.0], [1.0])
    with pytest.raises(ValueError):
        flow(s, [0.0, 0.0], [0.0], [0.2])
    assert PENDULUM_U_MAX == pytest.approx(np.sqrt(3) / 2)
    assert PENDULUM_D_MAX == 0.1


def _brute_force(system, x, p, n=41):
    best = -np.inf
    for u in system.U.samples(n):
        worst = min(float(p @ flow(system, x, u, d)) for d in system.D.samples(n))
        best = max(best, worst)
    return best


@given(finite, finite, finite, finite)
def test_hamiltonian_matches_vertex_enumeration(x1, x2, p1, p2):
    s = pendulum()
    x, p = np.array([x1, x2]), np.array([p1, p2])
    assert hamiltonian_maxmin(s, x, p).value == pytest.approx(_brute_force(s, x, p), abs=1e-9)


def test_hamiltonian_optimizers():
    r = hamiltonian_maxmin(pendulum(), [0.0, 0.0], [0.0, 1.0])
    # p·G_u = 1 > 0 → u at the upper bound; p·G_d = cos 0 = 1 > 0 → d at the lower bound
    assert r.u_star[0] == pytest.approx(PENDULUM_U_MAX)
    assert r.d_star[0] == pytest.approx(-PENDULUM_D_MAX)
    assert r.value == pytest.approx(PENDULUM_U_MAX - PENDULUM_D_MAX)


def test_hamiltonian_vectorized_agrees():
    rng = np.random.default_rng(0)
    x, p = rng.normal(size=(50, 2)), rng.normal(size=(50, 2))
    many = hamiltonian_maxmin_many(double_integrator(), x, p).value
    one = [hamiltonian_maxmin(double_integrator(), xi, pi).value for xi, pi in zip(x, p)]
    np.testing.assert_allclose(many, one)


def test_worst_case_disturbance_sign():
    s = pendulum()
    assert worst_case_disturbance(s, [np.pi, 0.0], [0.0, 1.0])[0] == pytest.approx(PENDULUM_D_MAX)
    assert worst_case_disturbance(s, [0.0, 0.0], [0.0, 1.0])[0] == pytest.approx(-PENDULUM_D_MAX)


def test_dissipation_bounds_double_integrator():
    g = make_grid([{"min": -4, "max": 4, "count": 9}, {"min": -3, "max": 3, "count": 7}])
    np.testing.assert_allclose(lf_dissipation_bounds(double_integrator(), g), [3.0, 1.0])


def test_lipschitz_estimate_linear_system():
    g = make_grid([{"min": 0, "max": 6, "count": 7}])
    assert lipschitz_estimate(integrator1d(), g) == pytest.approx(1.0, rel=1e-6)
    with pytest.raises(ValueError):
        lipschitz_estimate(integrator1d(), g, n_samples=10)


def test_get_system_overrides():
    s = get_system("double_integrator", u_min=[-0.5], u_max=[0.5])
    np.testing.assert_allclose(s.U.upper, [0.5])
    with pytest.raises(KeyError):
        get_system("unicycle")
