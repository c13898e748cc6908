import numpy as np
import pytest

from conftest import const_sigma, make_problem
from maxplus_hjb.grid import CFLError, DomainEscapeError, Grid
from maxplus_hjb.hamiltonian import HamiltonianQuery, hamiltonian_H
from maxplus_hjb.problem import affine_problem, canonical_problem, constant_cost_problem, singleton_problem
from maxplus_hjb.solver import (one_step_operator, residual_qvi, solve_pde_fd, solve_qvi_semilagrangian,
                                time_derivative)


@pytest.fixture(scope="module")
def canonical_sl():
    p = canonical_problem()
    return p, solve_qvi_semilagrangian(p, Grid.for_problem(p, 101, nt=100))


def test_constant_cost_gives_constant_field():
    p = constant_cost_problem(1.5)
    g = Grid.for_problem(p, 41, nt=80)
    for W in (solve_qvi_semilagrangian(p, g), solve_pde_fd(p, g, "qvi"), solve_pde_fd(p, g, "H")):
        assert np.all(W.values == 1.5)


def test_singleton_matches_single_control_scheme():
    # with one control the min over U is vacuous: compare against a hand-rolled loop
    base = canonical_problem()
    p = singleton_problem(base, [0.0])
    g = Grid.for_problem(p, 41, nt=20)
    W = solve_qvi_semilagrangian(p, g)
    ref = solve_qvi_semilagrangian(singleton_problem(base, [0.0]), g)
    assert np.array_equal(W.values, ref.values)
    # V >= V of the full problem, because the full problem minimizes over more controls
    full = solve_qvi_semilagrangian(base, g)
    assert np.all(W.values >= full.values - 1e-12)


def test_canonical_value_is_x_squared(canonical_sl):
    _, W = canonical_sl
    x = W.grid.points[:, 0]
    inner = W.grid.inner_mask()
    assert np.max(np.abs(W.values[:, inner] - x[inner] ** 2)) < 1e-10


def test_time_monotone_and_floor(canonical_sl):
    p, W = canonical_sl
    lmin = p.tabulate(W.grid.points)[2].min(axis=1)
    assert np.all(np.diff(W.values, axis=0) <= 1e-12)
    assert np.all(W.values >= lmin - 1e-12)


def test_monotone_in_data():
    lo = affine_problem(q=1.0)
    hi = affine_problem(q=1.5)
    g = Grid.for_problem(lo, 41, nt=80)
    assert np.all(solve_qvi_semilagrangian(hi, g).values >= solve_qvi_semilagrangian(lo, g).values - 1e-12)
    assert np.all(solve_pde_fd(hi, g).values >= solve_pde_fd(lo, g).values - 1e-12)


def test_residual_bound(canonical_sl):
    p, W = canonical_sl
    res = residual_qvi(p, W)
    inner = W.grid.inner_mask()
    h, delta = float(W.grid.h[0]), W.grid.delta
    assert np.max(np.abs(res[:-1, inner])) <= 5 * (h + delta)


def test_residual_zero_for_constant_fixed_point():
    p = constant_cost_problem(2.0)
    g = Grid.for_problem(p, 21, nt=10)
    W = solve_qvi_semilagrangian(p, g)
    assert np.all(residual_qvi(p, W) == 0.0)
    assert np.all(time_derivative(W) == 0.0)


def test_residual_of_frozen_terminal_is_nonpositive():
    p = affine_problem(ru=0.5)
    g = Grid.for_problem(p, 41, nt=10)
    W = solve_qvi_semilagrangian(p, g)
    frozen = type(W)(np.tile(W.values[-1], (W.times.size, 1)), g, W.times)
    assert np.all(residual_qvi(p, frozen) <= 1e-12)


def test_fd_forms_agree_with_sl():
    p = canonical_problem()
    g = Grid.for_problem(p, 81, nt=400)
    sl = solve_qvi_semilagrangian(p, g)
    inner = g.inner_mask()
    for form in ("qvi", "H"):
        fd = solve_pde_fd(p, g, form)
        assert np.max(np.abs(fd.values[0, inner] - sl.values[0, inner])) < 0.05


def test_fd_rejects_cfl_violation():
    p = canonical_problem()
    with pytest.raises(CFLError):
        solve_pde_fd(p, Grid.for_problem(p, 201, nt=10))
    with pytest.raises(ValueError):
        solve_pde_fd(p, Grid.for_problem(p, 21, nt=100), form="bogus")


def test_strict_boundary_names_offender():
    p = canonical_problem()
    with pytest.raises(DomainEscapeError, match=r"x=.*u=.*v="):
        solve_qvi_semilagrangian(p, Grid.for_problem(p, 21, nt=10, boundary="strict"))


def test_one_step_identity_at_zero_delta():
    p = canonical_problem()
    g = Grid.for_problem(p, 21, nt=10)
    phi = np.cos(g.points[:, 0])
    assert np.array_equal(one_step_operator(p, g, phi, 0.0, 0.0), phi)


def test_one_step_generator_limit():
    p = canonical_problem()
    g = Grid.for_problem(p, 21, nt=10)
    phi = lambda X: X[..., 0] ** 2 + 5.0  # noqa: E731  above every cost level
    x = np.array([[0.5]])
    target = hamiltonian_H(p, HamiltonianQuery(x=[0.5], r=10.0, p=[1.0])).value
    errs = []
    for delta in (1e-2, 1e-3, 1e-4):
        est = (one_step_operator(p, g, phi, 0.0, delta, points=x) - phi(x)) / delta
        errs.append(abs(float(est[0]) - target))
    assert errs[-1] < 10 * np.sqrt(1e-4)
    assert errs[-1] <= errs[0]


def test_one_step_blows_up_below_cost():
    p = canonical_problem()
    g = Grid.for_problem(p, 21, nt=10)
    phi = lambda X: np.full(X.shape[:-1], -1.0)  # noqa: E731
    x = np.array([[0.5]])
    rates = [float((one_step_operator(p, g, phi, 0.0, d, points=x) - phi(x))[0] / d) for d in (1e-2, 1e-3)]
    assert rates[1] > 5 * rates[0] > 0


def test_two_dimensional_constant_problem():
    p = constant_cost_problem(0.25, n=2)
    g = Grid.for_problem(p, (9, 9), nt=5)
    assert np.all(solve_qvi_semilagrangian(p, g).values == 0.25)


def test_custom_problem_escape_free_with_clamp():
    p = make_problem(lambda x, u: u + 0 * x, const_sigma(0.0), lambda x, u: x[..., 0] ** 2 + 0 * u[..., 0],
                     np.array([[-1.0], [1.0]]))
    W = solve_qvi_semilagrangian(p, Grid.for_problem(p, 41, nt=20))
    assert np.all(np.isfinite(W.values))
