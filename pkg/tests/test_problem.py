import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import const_sigma, make_problem, zero_drift
from maxplus_hjb.problem import (ControlSet, ProblemError, admissible_set, affine_problem, canonical_problem,
                                 diffusion_matrix, disturbance_objective, hamiltonian_u, singleton_problem,
                                 terminal_value, worst_disturbance)


def quad_cost(x, u):
    return x[..., 0] ** 2 + u[..., 0] ** 2


def u_squared(x, u):
    return np.broadcast_to(u[..., 0] ** 2, np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1]))


def one_d(sigma_value, drift=1.0, U=(0.0,), l=quad_cost):
    f = lambda x, u: np.full(np.broadcast_shapes(np.shape(x), np.shape(u)), drift)  # noqa: E731
    return make_problem(f, const_sigma(sigma_value), l, np.array(U))


def test_empty_control_set():
    with pytest.raises(ProblemError, match="empty"):
        ControlSet.from_points(np.zeros((0, 1)))
    with pytest.raises(ProblemError, match="empty"):
        ControlSet.box([-1.0], [1.0], 0)


def test_bad_domain():
    with pytest.raises(ProblemError):
        make_problem(zero_drift, const_sigma(1.0), quad_cost, np.zeros(1), lower=1.0, upper=-1.0)


def test_diffusion_matrix_examples():
    x, u = np.zeros(1), np.zeros(1)
    assert diffusion_matrix(one_d(0.0), x, u) == pytest.approx(np.zeros((1, 1)))
    assert diffusion_matrix(one_d(2.0), x, u) == pytest.approx(np.array([[4.0]]))
    p2 = make_problem(zero_drift, const_sigma([[1.0], [1.0]], 2, 1), lambda x, u: x[..., 0] * 0,
                      np.zeros(1), n=2, d=1)
    a = diffusion_matrix(p2, np.zeros(2), u)
    assert np.array_equal(a, np.ones((2, 2)))
    assert np.linalg.eigvalsh(a) == pytest.approx([0.0, 2.0], abs=1e-14)


def test_hamiltonian_u_examples():
    x, u = np.zeros(1), np.zeros(1)
    p = one_d(0.0, drift=3.0)
    assert float(hamiltonian_u(p, x, u, np.array([0.7]))) == pytest.approx(2.1)
    ident = make_problem(zero_drift, const_sigma(np.eye(2), 2, 2), lambda x, u: x[..., 0] * 0,
                         np.zeros(1), n=2, d=2)
    g = np.array([0.3, -1.2])
    assert float(hamiltonian_u(ident, np.zeros(2), u, g)) == pytest.approx(0.5 * g @ g)
    p = one_d(2.0, drift=1.0)
    assert float(hamiltonian_u(p, x, u, np.array([0.5]))) == pytest.approx(1.0)
    # grid search over v confirms the sup
    V = np.linspace(-4, 4, 8001)[:, None]
    assert disturbance_objective(p, x, u, np.array([0.5]), V).max() == pytest.approx(1.0, abs=1e-9)


def test_worst_disturbance_examples():
    x, u = np.zeros(1), np.zeros(1)
    p = one_d(2.0)
    assert worst_disturbance(p, x, u, np.zeros(1)) == pytest.approx([0.0])
    assert worst_disturbance(p, x, u, np.array([0.5])) == pytest.approx([1.0])
    ident = make_problem(zero_drift, const_sigma(np.eye(2), 2, 2), lambda x, u: x[..., 0] * 0,
                         np.zeros(1), n=2, d=2)
    g = np.array([0.3, -1.2])
    assert worst_disturbance(ident, np.zeros(2), u, g) == pytest.approx(g)


def test_terminal_value_examples():
    single = one_d(1.0, U=(0.5,))
    assert float(terminal_value(single, np.array([0.4]))) == pytest.approx(0.16 + 0.25)
    three = one_d(1.0, U=(-1.0, 0.0, 1.0))
    assert float(terminal_value(three, np.array([1.3]))) == pytest.approx(1.69)
    absdiff = one_d(1.0, U=(0.0, 1.0), l=lambda x, u: np.abs(x[..., 0] - u[..., 0]))
    assert float(terminal_value(absdiff, np.array([0.7]))) == pytest.approx(0.3)


def test_admissible_set_examples():
    p = one_d(1.0, U=(-1.0, 0.0, 1.0), l=u_squared)
    x = np.zeros(1)
    assert len(admissible_set(p, x, np.inf)) == 3
    assert len(admissible_set(p, x, -0.1)) == 0
    assert admissible_set(p, x, 0.5).ravel().tolist() == [0.0]
    assert len(admissible_set(p, x, 0.0, strict=True)) == 0


def test_singleton_problem():
    sp = singleton_problem(canonical_problem(), [0.5])
    assert len(sp.controls) == 1 and sp.U[0, 0] == 0.5


def test_tabulate_shapes():
    p = canonical_problem()
    F, S, L = p.tabulate(np.linspace(-1, 1, 7)[:, None])
    assert F.shape == (7, 21, 1) and S.shape == (7, 21, 1, 1) and L.shape == (7, 21)


@settings(max_examples=100, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-1, 4), st.floats(0, 3))
def test_admissible_set_monotone_in_r(x, y, r, dr):
    p = canonical_problem()
    X, Y = np.array([x]), np.array([y])
    A = {tuple(u) for u in admissible_set(p, X, r)}
    assert A <= {tuple(u) for u in admissible_set(p, X, r + dr)}
    # Lipschitz surrogate for lower semicontinuity of the set map
    lifted = {tuple(u) for u in admissible_set(p, X, r + p.lip_l_x * abs(x - y) + 1e-12)}
    assert {tuple(u) for u in admissible_set(p, Y, r)} <= lifted


@settings(max_examples=100, deadline=None)
@given(st.floats(-2, 2), st.floats(-1, 1), st.floats(-3, 3), st.floats(-2, 2), st.floats(-1, 1))
def test_hamiltonian_u_is_sup_over_v(x, u, g, s, a):
    p = affine_problem(a=a, sigma=s)
    X, Uc, G = np.array([x]), np.array([u]), np.array([g])
    h = float(hamiltonian_u(p, X, Uc, G))
    V = np.linspace(-6, 6, 241)[:, None]
    assert np.all(disturbance_objective(p, X, Uc, G, V) <= h + 1e-12)
    v = worst_disturbance(p, X, Uc, G)
    assert float(disturbance_objective(p, X, Uc, G, v)) == pytest.approx(h, abs=1e-12)
