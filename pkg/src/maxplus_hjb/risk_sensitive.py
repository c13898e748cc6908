"""Risk-sensitive value V_theta = theta^{-1} log Psi_theta and its limit as theta -> infinity.

Psi_theta(t,x) = inf E[ int_t^T exp(theta l(X(s), u(s))) ds ] for
dX = f ds + theta^{-1/2} sigma dB, and V_theta solves

    V_t + min_u { tr(a D^2 V)/(2 theta) + H^u(x, DV) + theta^{-1} exp(theta (l - V)) } = 0

with V_theta -> -inf as t -> T.  The explicit scheme splits each step into a
transport/diffusion part (monotone finite differences) and the source part, which
is integrated exactly:  exp(theta V) grows by delta exp(theta l) over a step.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid import CFLError, Grid, ValueField
from .problem import ControlProblem
from .solver import _one_sided, lax_friedrichs_hamiltonians

EXP_CLAMP = (-700.0, 50.0)


def _laplacian_terms(vals: np.ndarray, grid: Grid) -> np.ndarray:
    """Second differences per axis, shape (N, n), edge-replicated."""
    pm, pp = _one_sided(vals, grid)
    return (pp - pm) / grid.h


def _diag_a(S):
    return np.einsum("nkid,nkid->nki", S, S)  # diagonal of sigma sigma^T, (N, K, n)


def cfl_ratio_theta(problem: ControlProblem, grid: Grid, theta: float, v_max: float = 4.0) -> float:
    """First-order CFL ratio plus delta * max_i a_ii / (theta h_i^2)."""
    _, S, _ = problem.tabulate(grid.points)
    second = float(grid.delta * np.max(np.sum(_diag_a(S) / (theta * grid.h ** 2), -1))) if S.size else 0.0
    return grid.cfl_ratio(problem, v_max) + second


def solve_v_theta(problem: ControlProblem, grid: Grid, theta: float, v_max: float = 4.0) -> ValueField:
    """Backward explicit solve in log space.

    The slice at T holds -inf (Psi_theta(T) = 0); the slice at T - delta is
    theta^{-1} log(delta) + min_u l (one-rectangle quadrature).  Cross terms of a
    are ignored, which is exact for diagonal a.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    start = time.perf_counter()
    ratio = cfl_ratio_theta(problem, grid, theta, v_max)
    if ratio > 1.0 + 1e-12:
        raise CFLError(ratio, grid.delta / ratio)
    F, S, L = problem.tabulate(grid.points)
    A = _diag_a(S)
    delta = grid.delta
    log_delta = math.log(delta)
    values = np.empty((grid.nt + 1, grid.size))
    values[-1] = -np.inf
    values[-2] = log_delta / theta + L.min(axis=1)
    clamp_events = 0
    for k in range(grid.nt - 2, -1, -1):
        nxt = values[k + 1]
        H, _ = lax_friedrichs_hamiltonians(F, S, nxt, grid)
        diff = np.einsum("nki,ni->nk", A, _laplacian_terms(nxt, grid)) / (2 * theta)
        transported = nxt[:, None] + delta * (H + diff)
        expo = theta * (L - transported)
        clamp_events += int(np.count_nonzero((expo < EXP_CLAMP[0]) | (expo > EXP_CLAMP[1])))
        # exact source step: exp(theta V) += delta exp(theta l)
        cand = np.logaddexp(theta * transported, log_delta + theta * L) / theta
        values[k] = cand.min(axis=1)
    updates = max(1, (grid.nt - 1) * L.size)
    clamp_rate = clamp_events / updates
    if clamp_rate > 0.01:
        warnings.warn(f"exponent outside {EXP_CLAMP} in {100 * clamp_rate:.2f}% of updates "
                      "(handled exactly in log space)", RuntimeWarning, stacklevel=2)
    return ValueField(values, grid, grid.times,
                      info=dict(scheme="risk-sensitive-log", theta=theta, cfl=ratio,
                                clamp_rate=clamp_rate, runtime=time.perf_counter() - start))


def solve_psi_theta(problem: ControlProblem, grid: Grid, theta: float) -> ValueField:
    """Direct solve of Psi_t + min_u {tr(a D^2 Psi)/(2 theta) + f.D Psi + exp(theta l)} = 0,
    Psi(T) = 0, with upwind transport.  Returned field holds Psi itself."""
    ratio = cfl_ratio_theta(problem, grid, theta, 0.0)
    if ratio > 1.0 + 1e-12:
        raise CFLError(ratio, grid.delta / ratio)
    F, S, L = problem.tabulate(grid.points)
    A = _diag_a(S)
    src = np.exp(theta * L)
    values = np.empty((grid.nt + 1, grid.size))
    values[-1] = 0.0
    for k in range(grid.nt - 1, -1, -1):
        nxt = values[k + 1]
        pm, pp = _one_sided(nxt, grid)
        # backward in time: information flows from x + f ds
        adv = np.where(F > 0, F * pp[:, None, :], F * pm[:, None, :]).sum(-1)
        diff = np.einsum("nki,ni->nk", A, _laplacian_terms(nxt, grid)) / (2 * theta)
        values[k] = (nxt[:, None] + grid.delta * (adv + diff + src)).min(axis=1)
    return ValueField(values, grid, grid.times, info=dict(scheme="risk-sensitive-psi", theta=theta))


def psi_to_v(psi: ValueField, theta: float) -> ValueField:
    with np.errstate(divide="ignore"):
        return ValueField(np.log(psi.values) / theta, psi.grid, psi.times, dict(psi.info))


def psi_theta_constant_control_mc(problem: ControlProblem, u0, theta: float, t0: float, x0,
                                  T: float, n_samples: int = 4000, dt: float = 1e-3,
                                  seed: int = 0) -> tuple[float, float]:
    """Monte Carlo estimate of E[int_t0^T exp(theta l(X, u0)) ds] under Euler-Maruyama.

    Returns (estimate, standard error).  The time integral uses the trapezoid rule.
    """
    u = np.atleast_1d(np.asarray(u0, float))
    x0 = np.atleast_1d(np.asarray(x0, float))
    J = int(round((T - t0) / dt))
    if J < 1:
        raise ValueError("need T > t0")
    h = (T - t0) / J
    rng = np.random.default_rng(seed)
    X = np.broadcast_to(x0, (n_samples, problem.n)).copy()
    scale = 1.0 / math.sqrt(theta)
    g = np.exp(theta * problem.l(X, u))
    acc = 0.5 * g
    for _ in range(J):
        dB = rng.normal(0.0, math.sqrt(h), (n_samples, problem.d))
        X = X + problem.f(X, u) * h + scale * np.einsum("bid,bd->bi", problem.sigma(X, u), dB)
        g = np.exp(theta * problem.l(X, u))
        acc += g
    acc -= 0.5 * g
    samples = acc * h
    return float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(n_samples))


# ---------------------------------------------------------------------------
# theta -> infinity


def inner_window(grid: Grid, frac_t: float = 0.1):
    """(time mask, space mask): inner half of the box and t in [t0 + 0.1 tau, T - 0.1 tau]."""
    tau = grid.T - grid.t0
    t = grid.times
    tmask = (t >= grid.t0 + frac_t * tau - 1e-12) & (t <= grid.T - frac_t * tau + 1e-12)
    return tmask, grid.inner_mask()


def sup_distance(A: ValueField, B: ValueField, frac_t: float = 0.1) -> float:
    tmask, xmask = inner_window(A.grid, frac_t)
    return float(np.max(np.abs(A.values[tmask][:, xmask] - B.values[tmask][:, xmask])))


@dataclass
class ThetaSweep:
    thetas: list
    fields: list
    reference: ValueField
    distances: list
    clamp_rates: list
    runtimes: list
    monotone: bool
    final_ok: bool
    target: float
    slack: float
    extras: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.monotone and self.final_ok

    def rows(self):
        return [dict(theta=t, sup_distance=d, clamp_rate=c, runtime=r)
                for t, d, c, r in zip(self.thetas, self.distances, self.clamp_rates, self.runtimes)]


def convergence_study(problem: ControlProblem, grid: Grid, thetas: Sequence[float],
                      reference: ValueField, target: float = 0.15, slack: float = 0.1,
                      v_max: float = 4.0) -> ThetaSweep:
    thetas = [float(t) for t in thetas]
    if any(t <= 0 for t in thetas) or any(b <= a for a, b in zip(thetas, thetas[1:])):
        raise ValueError("thetas must be positive and increasing")
    if reference.grid != grid:
        raise ValueError("reference must live on the sweep grid")
    fields, dists, rates, runtimes = [], [], [], []
    for th in thetas:
        V = solve_v_theta(problem, grid, th, v_max)
        fields.append(V)
        dists.append(sup_distance(V, reference))
        rates.append(V.info["clamp_rate"])
        runtimes.append(V.info["runtime"])
    monotone = all(b <= (1 + slack) * a for a, b in zip(dists, dists[1:]))
    return ThetaSweep(thetas, fields, reference, dists, rates, runtimes, monotone,
                      dists[-1] <= target, target, slack)


def estimate_sandwich_M(problem: ControlProblem, grid: Grid) -> float:
    """M = L_l max|f| + (L_l max|sigma|)^2 / 2 with L_l the grid Lipschitz bound of min_u l.

    Bounds the growth of the max-plus value above min_u l: drift moves the state at
    speed <= max|f|, and the disturbance gain L_l |sigma| |v| - |v|^2/2 is at most
    (L_l |sigma|)^2 / 2.
    """
    F, S, L = problem.tabulate(grid.points)
    lmin = L.min(axis=1).reshape(grid.shape)
    lip = 0.0
    for ax, hh in enumerate(grid.h):
        lip = max(lip, float(np.max(np.abs(np.diff(lmin, axis=ax))) / hh))
    fmax = float(np.max(np.linalg.norm(F, axis=-1)))
    smax = float(np.max(np.linalg.norm(S, ord=2, axis=(-2, -1)))) if S.size else 0.0
    return lip * fmax + 0.5 * (lip * smax) ** 2


@dataclass
class SandwichReport:
    theta: float
    eps: float
    M: float
    lower_violation: float   # max of (min l - eps) - V_theta, <= 0 when the bound holds
    upper_violation: float   # max of V_theta - (min l + M (T-t) + eps)
    passed: bool


def sandwich_check(problem: ControlProblem, V: ValueField, eps: float = 0.1, M: float | None = None,
                   t_margin: float = 0.1) -> SandwichReport:
    """min_u l - eps <= V_theta <= min_u l + M (T - t) + eps on the inner box, t <= T - t_margin."""
    grid = V.grid
    M = estimate_sandwich_M(problem, grid) if M is None else M
    _, _, L = problem.tabulate(grid.points)
    lmin = L.min(axis=1)
    tmask = V.times <= grid.T - t_margin + 1e-12
    xmask = grid.inner_mask()
    vals = V.values[tmask][:, xmask]
    low = lmin[xmask][None, :] - eps
    high = lmin[xmask][None, :] + M * (grid.T - V.times[tmask])[:, None] + eps
    lv = float(np.max(low - vals))
    uv = float(np.max(vals - high))
    return SandwichReport(float(V.info.get("theta", math.nan)), eps, M, lv, uv, lv <= 0 and uv <= 0)
