"""Infinite-horizon tools: dissipation certificates, the augmented-state embedding of
mu [int l1 + G] <= W + 1/2 int |v|^2, the quadratic-storage example and the V_infinity sweep.

A certificate is a pair (W, policy) with max{H^u(y, DW(y)), l(y, u) - W(y)} <= 0 at
every checked point, u = policy(y).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import Grid, ValueField, grid_gradient
from .problem import ControlProblem, ControlSet, hamiltonian_u
from .solver import solve_pde_fd, solve_qvi_semilagrangian
from .trajectory import (ExpectationOptions, Policy, _nsteps, integrate,
                         maxplus_expectation_policy)


@dataclass
class Certificate:
    W: Callable
    grad: Callable
    policy: Policy
    points: np.ndarray
    margin: np.ndarray
    h_part: np.ndarray
    l_part: np.ndarray
    tol: float = 0.0
    K: float | None = None
    info: dict = field(default_factory=dict)

    @property
    def max_margin(self) -> float:
        return float(np.max(self.margin))

    @property
    def passed(self) -> bool:
        return self.max_margin <= self.tol

    def report(self) -> str:
        lines = [f"certificate: {'PASS' if self.passed else 'FAIL'}",
                 f"max margin: {self.max_margin:.6g} (tol {self.tol:g})",
                 f"points checked: {self.points.shape[0]}"]
        if self.K is not None:
            lines.append(f"K: {self.K:.6g}")
        for key, val in self.info.items():
            lines.append(f"{key}: {val}")
        return "\n".join(lines)

    def to_csv(self, path):
        cols = np.column_stack([self.points, self.h_part, self.l_part, self.margin])
        header = ",".join([f"x{i}" for i in range(self.points.shape[1])] + ["H", "l_minus_W", "margin"])
        np.savetxt(path, cols, delimiter=",", header=header, comments="", fmt="%.17g")
        return path


def _grid_function(values: np.ndarray, grid: Grid):
    vf = ValueField(np.asarray(values, float).reshape(1, -1), grid, np.array([grid.t0]))
    g = grid_gradient(vf.values[0], grid)
    return (lambda X: vf(grid.t0, X),
            lambda X: np.stack([ValueField(g[:, j][None], grid, np.array([grid.t0]))(grid.t0, X)
                                for j in range(grid.n)], -1))


def check_dissipation_certificate(problem: ControlProblem, W, pol: Policy, points, grad=None,
                                  tol: float = 0.0, grid: Grid | None = None) -> Certificate:
    """Margins max{H^{u(y)}(y, DW(y)), l(y,u(y)) - W(y)} at ``points``.

    ``W`` is a callable (then ``grad`` gives its gradient analytically, or centered
    differences are used) or an array of values on ``grid``.
    """
    if not callable(W):
        if grid is None:
            raise ValueError("grid values need the grid")
        W, grad = _grid_function(W, grid)
    if grad is None:
        Wf = W

        def grad(X, eps=1e-6):
            X = np.asarray(X, float)
            cols = []
            for j in range(X.shape[-1]):
                e = np.zeros(X.shape[-1])
                e[j] = eps
                cols.append((Wf(X + e) - Wf(X - e)) / (2 * eps))
            return np.stack(cols, -1)

    X = np.asarray(points, float).reshape(-1, problem.n)
    u = pol(0.0, X)
    h_part = hamiltonian_u(problem, X, u, grad(X))
    l_part = problem.l(X, u) - W(X)
    margin = np.maximum(h_part, l_part)
    return Certificate(W, grad, pol, X, margin, h_part, l_part, tol)


def augmented_embedding(p: ControlProblem, l1: Callable, G: Callable, mu: float,
                        x_extra: tuple = (-1.0, 3.0)) -> ControlProblem:
    """State (x, x_{n+1}) with dx_{n+1}/ds = l1(x,u) and cost mu (x_{n+1} + G(x))."""
    n, d = p.n, p.d

    def f(X, u):
        x = X[..., :n]
        fx = p.f(x, u)
        a = np.broadcast_to(np.asarray(l1(x, u), float), fx.shape[:-1])
        return np.concatenate([fx, a[..., None]], -1)

    def sigma(X, u):
        s = p.sigma(X[..., :n], u)
        return np.concatenate([s, np.zeros(s.shape[:-2] + (1, d))], -2)

    def l(X, u):
        shape = np.broadcast_shapes(X.shape[:-1], np.shape(u)[:-1])
        return np.broadcast_to(mu * (X[..., n] + np.asarray(G(X[..., :n]), float)), shape)

    return ControlProblem(
        n=n + 1, d=d, f=f, sigma=sigma, l=l, controls=p.controls,
        lower=np.append(p.lower, x_extra[0]), upper=np.append(p.upper, x_extra[1]),
        name=f"{p.name}+augmented", params=dict(p.params, mu=mu),
    )


# ---------------------------------------------------------------------------
# quadratic example


def example_inequalities(K: float, c: float, C1: float, C2: float, a_norm: float, mu: float) -> dict:
    """The four sufficient conditions for W = K|x|^2, as (name -> satisfied)."""
    return {
        "K*|a| < c": K * a_norm < c,
        "mu < 1": mu < 1,
        "mu*C2 < K": mu * C2 < K,
        "C1*mu + 2K^2|a|^2 - K*c <= 0": C1 * mu + 2 * K * K * a_norm ** 2 - K * c <= 0,
    }


def quadratic_example_problem(c: float, a_norm: float, lower=-2.0, upper=2.0) -> ControlProblem:
    """n = d = 1: f(x,u) = -c x + u, sigma = sqrt(|a|), U = 21 points of [-1, 1]; policy u = 0."""
    s = math.sqrt(a_norm)

    def f(x, u):
        return -c * x + u

    def sigma(x, u):
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1])
        return np.full(shape + (1, 1), s)

    def l(x, u):
        return np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1]))

    return ControlProblem(n=1, d=1, f=f, sigma=sigma, l=l, controls=ControlSet.box(-1.0, 1.0, 21),
                          lower=[lower], upper=[upper], name="quadratic-example",
                          params=dict(c=c, a_norm=a_norm))


@dataclass
class ExampleResult:
    feasible: bool
    K: float | None
    certificate: Certificate | None
    problem: ControlProblem | None
    violated: list
    best_K: float
    W_hat: Callable | None = None


def k_search_grid(num: int = 60, lo: float = 1e-3, hi: float = 1e3) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), num)


def quadratic_example_certificate(c: float = 1.0, C1: float = 1.0, C2: float = 1.0, a_norm: float = 0.1,
                                  mu: float = 0.05, K_grid=None, check_num: int = 81) -> ExampleResult:
    """Search K for W = K|x|^2 and certify the augmented instance on a grid.

    Instance: l1 = C1 |x|^2, G = C2 |x|^2, policy u = 0.  The storage function of the
    augmented state is mu x_{n+1} + K|x|^2, whose x_{n+1}-derivative mu makes the
    H-branch read H^u(y, DW) + mu l1 <= 0.
    """
    if c <= 0 or a_norm <= 0:
        raise ValueError("need c > 0 and a_norm > 0")
    Ks = k_search_grid() if K_grid is None else np.asarray(K_grid, float)
    best, best_count, best_viol = float(Ks[0]), -1, []
    found = None
    for K in Ks:
        checks = example_inequalities(float(K), c, C1, C2, a_norm, mu)
        count = sum(checks.values())
        if count > best_count:
            best, best_count = float(K), count
            best_viol = [k for k, ok in checks.items() if not ok]
        if all(checks.values()):
            found = float(K)
            break
    if found is None:
        return ExampleResult(False, None, None, None, best_viol, best)
    base = quadratic_example_problem(c, a_norm)
    aug = augmented_embedding(base, lambda x, u: C1 * x[..., 0] ** 2, lambda x: C2 * x[..., 0] ** 2, mu)
    K = found

    def W_hat(X):
        X = np.asarray(X, float)
        return mu * X[..., 1] + K * X[..., 0] ** 2

    def grad(X):
        X = np.asarray(X, float)
        return np.stack([2 * K * X[..., 0], np.full(X.shape[:-1], mu)], -1)

    g = Grid(tuple(aug.lower), tuple(aug.upper), (check_num, check_num))
    cert = check_dissipation_certificate(aug, W_hat, Policy.constant([0.0], name="u=0"), g.points, grad)
    cert.K = K
    cert.info.update(mu=mu, c=c, C1=C1, C2=C2, a_norm=a_norm)
    return ExampleResult(True, K, cert, aug, [], K, W_hat)


# ---------------------------------------------------------------------------
# adversarial simulation


@dataclass
class DissipationRecord:
    x0: np.ndarray
    payoff: float
    W0: float
    margin: float      # min over s of W(x0) + 1/2 int_0^s |v|^2 - l(x(s)); >= 0 means satisfied
    ok: bool
    path: object = None


@dataclass
class DissipationReport:
    records: list
    counterexamples: list
    tol: float

    @property
    def passed(self) -> bool:
        return not self.counterexamples

    @property
    def min_margin(self) -> float:
        return min(r.margin for r in self.records)


def simulate_dissipation(p_aug: ControlProblem, W_hat: Callable, pol: Policy, initial_states,
                         T: float = 5.0, opts: ExpectationOptions | None = None,
                         tol: float = 1e-8) -> DissipationReport:
    """Adversarial search per initial state, then the per-path check
    l(x(s), u(x(s))) <= W(x0) + 1/2 int_0^s |v|^2 at every sample time s."""
    opts = opts or ExpectationOptions(dt=0.05, coarsen=10, restarts=1, step_min=1e-3)
    records = []
    for x0 in np.asarray(initial_states, float).reshape(-1, p_aug.n):
        res = maxplus_expectation_policy(p_aug, pol, 0.0, x0, T, opts)
        traj = integrate(p_aug, pol, res.path, 0.0, x0, T, opts.dt)
        v = traj.disturbances
        cum = np.concatenate([[0.0], np.cumsum(0.5 * np.sum(v * v, -1) * opts.dt)])
        lvals = p_aug.l(traj.states, traj.controls)
        w0 = float(W_hat(x0))
        margin = float(np.min(w0 + cum - lvals))
        records.append(DissipationRecord(x0.copy(), res.value, w0, margin, margin >= -tol, res.path))
    return DissipationReport(records, [r for r in records if not r.ok], tol)


# ---------------------------------------------------------------------------
# horizon sweep


@dataclass
class HorizonSweep:
    horizons: list
    values: list          # V(0, x; T) on the grid, one array per horizon
    grid: Grid
    monotone: bool
    worst_decrease: float
    residuals: list       # sup-norm of the steady QVI residual on the inner box
    dominated: bool | None = None
    worst_excess: float | None = None


def steady_residual(problem: ControlProblem, values: np.ndarray, grid: Grid) -> np.ndarray:
    """min_u max{H^u(x, DV), l - V} on the grid."""
    F, S, L = problem.tabulate(grid.points)
    p = grid_gradient(values, grid)
    sp = np.einsum("nkid,ni->nkd", S, p)
    H = np.einsum("nki,ni->nk", F, p) + 0.5 * np.sum(sp * sp, -1)
    return np.maximum(H, L - values[:, None]).min(axis=1)


def v_infinity_sweep(problem: ControlProblem, grid: Grid, horizons: Sequence[float],
                     method: str = "sl", W=None, tol: float = 1e-12) -> HorizonSweep:
    """Solve on [0, T] for each horizon with the time step of ``grid``.

    ``W`` (callable on points) is checked to dominate every V(0, .; T).
    """
    horizons = [float(T) for T in horizons]
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ValueError("horizons must be increasing")
    solve = {"sl": solve_qvi_semilagrangian, "fd": solve_pde_fd}[method]
    vals, res = [], []
    inner = grid.inner_mask()
    for T in horizons:
        g = grid.with_horizon(T, 0.0)
        V = solve(problem, g)
        vals.append(V.values[0])
        res.append(float(np.max(np.abs(steady_residual(problem, V.values[0], g)[inner]))))
    dec = max((float(np.max(a - b)) for a, b in zip(vals, vals[1:])), default=0.0)
    sweep = HorizonSweep(horizons, vals, grid, dec <= tol, dec, res)
    if W is not None:
        w = np.asarray(W(grid.points), float)
        sweep.worst_excess = max(float(np.max(v - w)) for v in vals)
        sweep.dominated = sweep.worst_excess <= tol
    return sweep
