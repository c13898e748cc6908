import math
import warnings

import numpy as np
import pytest

from conftest import const_sigma, make_problem, zero_drift
from maxplus_hjb.grid import CFLError, Grid, ValueField
from maxplus_hjb.problem import canonical_problem, singleton_problem
from maxplus_hjb.risk_sensitive import (convergence_study, estimate_sandwich_M, psi_theta_constant_control_mc,
                                        psi_to_v, sandwich_check, solve_psi_theta, solve_v_theta, sup_distance)


def still(l, sigma=0.0):
    return make_problem(zero_drift, const_sigma(sigma), l, np.zeros((1, 1)))


def constant_l(c):
    return still(lambda x, u: np.full(np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1]), c))


@pytest.mark.parametrize("theta", [0.5, 2.0, 10.0, 50.0])
def test_closed_form_constant_cost(theta):
    c = 0.7
    p = constant_l(c)
    g = Grid.for_problem(p, 11, nt=100)
    V = solve_v_theta(p, g, theta)
    tau = g.T - g.times[:-1]
    exact = c + np.log(tau) / theta
    assert np.max(np.abs(V.values[:-1] - exact[:, None])) <= 1e-8
    assert np.all(V.values[-1] == -np.inf)


def test_terminal_blow_down_rate():
    p = constant_l(0.0)
    g = Grid.for_problem(p, 5, nt=1000)
    V = solve_v_theta(p, g, 3.0)
    assert V.values[-2, 0] == pytest.approx(math.log(g.delta) / 3.0)
    assert V.values[-2, 0] < V.values[-10, 0] < V.values[0, 0]


def test_psi_and_log_space_agree_where_both_are_exact():
    theta = 4.0
    p = still(lambda x, u: 0.25 * np.sin(x[..., 0]) + 0 * u[..., 0])
    g = Grid.for_problem(p, 41, nt=200)
    V = solve_v_theta(p, g, theta)
    W = psi_to_v(solve_psi_theta(p, g, theta), theta)
    assert np.max(np.abs(V.values[:-1] - W.values[:-1])) <= 1e-6


def test_cfl_violation():
    p = canonical_problem()
    with pytest.raises(CFLError):
        solve_v_theta(p, Grid.for_problem(p, 401, nt=50), 2.0)
    with pytest.raises(ValueError):
        solve_v_theta(p, Grid.for_problem(p, 21, nt=100), 0.0)


def test_mc_deterministic_and_constant():
    p = still(lambda x, u: x[..., 0] + 0 * u[..., 0])
    est, se = psi_theta_constant_control_mc(p, [0.0], 2.0, 0.0, [0.3], 1.0, n_samples=50, dt=1e-2)
    assert se == 0.0
    assert est == pytest.approx(math.exp(0.6), rel=1e-12)
    q = constant_l(0.4)
    est, se = psi_theta_constant_control_mc(q, [0.0], 3.0, 0.2, [0.0], 1.0, n_samples=200, dt=1e-2)
    assert est == pytest.approx(0.8 * math.exp(1.2), rel=1e-12)


def test_mc_agrees_with_pde_on_singleton_problem():
    theta = 5.0
    p = singleton_problem(canonical_problem(), [0.0])
    g = Grid.for_problem(p, 401, nt=4000)
    V = solve_v_theta(p, g, theta)
    for x in (0.0, 0.5):
        m, se = psi_theta_constant_control_mc(p, [0.0], theta, 0.0, [x], 1.0, 4000, 1e-3, seed=0)
        v_pde = float(V(0.0, np.array([[x]]))[0])
        # delta method: stderr of log(m)/theta is se / (theta m)
        assert abs(v_pde - math.log(m) / theta) <= 3 * se / (theta * m)


def test_distance_to_itself_is_zero():
    p = canonical_problem()
    g = Grid.for_problem(p, 41, nt=100)
    V = solve_v_theta(p, g, 2.0)
    assert sup_distance(V, V) == 0.0
    rep = convergence_study(p, g, [2.0], V)
    assert rep.distances == [0.0]


def test_convergence_small_sweep():
    p = canonical_problem()
    g = Grid.for_problem(p, 61, nt=300)
    from maxplus_hjb.solver import solve_qvi_semilagrangian
    ref = solve_qvi_semilagrangian(p, g)
    rep = convergence_study(p, g, [2.0, 5.0, 10.0], ref)
    assert rep.distances[0] > rep.distances[1] > rep.distances[2]


def test_sandwich_holds_for_constant_cost():
    c = 0.3
    p = constant_l(c)
    g = Grid.for_problem(p, 11, nt=100)
    assert estimate_sandwich_M(p, g) == 0.0
    rep = sandwich_check(p, solve_v_theta(p, g, 1e4))
    assert rep.passed


def test_clamp_rate_warning():
    # drift carries the state toward larger cost, so l - V_theta is of order -tau
    p = make_problem(lambda x, u: 1.0 + 0 * x, const_sigma(0.0), lambda x, u: x[..., 0] + 0 * u[..., 0],
                     np.zeros((1, 1)))
    g = Grid.for_problem(p, 21, nt=200)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        V = solve_v_theta(p, g, 1e4)
    assert V.info["clamp_rate"] > 0.01
    assert any(issubclass(w.category, RuntimeWarning) for w in rec)
