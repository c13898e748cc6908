"""Backward solvers for min_u max{V_t + H^u(x, DV), l(x,u) - V} = 0, V(T) = min_u l.

Two independent discretizations:

* a semi-Lagrangian scheme for the one-step dynamic programming principle
      V(t,x) = min_u max{ l(x,u), max_v [V(t+δ, x + δ(f + σ v)) - δ|v|^2/2] },
* an explicit finite-difference scheme with a local Lax-Friedrichs numerical
  Hamiltonian, either in QVI (projection) form or in the equivalent form
  V_t + min_{u : l(x,u) <= V} H^u(x, DV) = 0.
"""

from __future__ import annotations

import time
from typing import Callable

import numpy as np

from .grid import DomainEscapeError, Grid, ValueField, grid_gradient, interpolate
from .problem import ControlProblem

DEFAULT_V_SCALES = (0.5, 0.75, 1.0, 1.25, 1.5)


def _check_feet(X, U, V, foot, box):
    lo, hi = box
    bad = np.any((foot < lo - 1e-12) | (foot > hi + 1e-12), axis=-1)
    if bad.any():
        i, k, c = np.argwhere(bad)[0]
        raise DomainEscapeError(f"foot point {foot[i, k, c].tolist()} escapes the domain box "
                                f"(x={X[i].tolist()}, u={U[k].tolist()}, v={np.atleast_1d(V[i, k, c]).tolist()})")


def _sl_update(X, F, S, L, delta, phi_eval, grad, v_max, v_scales=DEFAULT_V_SCALES, strict=None):
    """One discrete DPP step at points X given continuation evaluator ``phi_eval``.

    v candidates: 0 plus a 5-point search along the ray through sigma^T grad.
    ``strict`` is (U, (lower, upper)) to reject foot points outside the box.
    """
    scales = np.concatenate([[0.0], np.asarray(v_scales, float)])
    if S.shape[-2:] == (1, 1):
        s = S[:, :, 0, 0]
        V = s * grad                                                 # (N, K)
        V = np.clip(V[:, :, None] * scales, -v_max, v_max)          # (N, K, C)
        foot = s[:, :, None] * V
        foot += F[:, :, :1]
        foot *= delta
        foot += X[:, None, :1]
        if strict is not None:
            _check_feet(X, strict[0], V, foot[..., None], strict[1])
        cont = phi_eval(foot[..., None])
        V *= V
        V *= 0.5 * delta
        cont -= V
        return np.maximum(L, cont.max(axis=2))
    vstar = np.einsum("nkid,ni->nkd", S, grad)                       # (N, K, d)
    V = np.clip(vstar[:, :, None, :] * scales[None, None, :, None], -v_max, v_max)
    drift = F[:, :, None, :] + np.einsum("nkid,nkcd->nkci", S, V)    # (N, K, C, n)
    foot = X[:, None, None, :] + delta * drift
    if strict is not None:
        _check_feet(X, strict[0], V, foot, strict[1])
    cont = phi_eval(foot) - 0.5 * delta * np.sum(V * V, axis=-1)
    best = cont.max(axis=2)                                          # (N, K)
    return np.maximum(L, best)


def _terminal(L, terminal, grid):
    if terminal is None:
        return L.min(axis=1)
    if callable(terminal):
        return np.asarray(terminal(grid.points), float)
    return np.asarray(terminal, float).ravel()


def solve_qvi_semilagrangian(problem: ControlProblem, grid: Grid, terminal=None,
                             v_max: float = 4.0) -> ValueField:
    start = time.perf_counter()
    X = grid.points
    F, S, L = problem.tabulate(X)
    values = np.empty((grid.nt + 1, grid.size))
    values[-1] = _terminal(L, terminal, grid)
    delta = grid.delta
    strict = (problem.U, (np.array(grid.lower), np.array(grid.upper))) if grid.boundary == "strict" else None
    for k in range(grid.nt - 1, -1, -1):
        nxt = values[k + 1]
        grad = grid_gradient(nxt, grid)
        upd = _sl_update(X, F, S, L, delta, lambda P: interpolate(nxt, grid, P), grad, v_max,
                         strict=strict)
        values[k] = upd.min(axis=1)
    return ValueField(values, grid, grid.times,
                      info=dict(scheme="semi-lagrangian", runtime=time.perf_counter() - start))


def _one_sided(vals: np.ndarray, grid: Grid):
    """Backward/forward differences per axis with edge replication, each (N, n)."""
    v = vals.reshape(grid.shape)
    dm, dp = [], []
    for ax, hh in enumerate(grid.h):
        pad = [(0, 0)] * grid.n
        pad[ax] = (1, 1)
        vp = np.pad(v, pad, mode="edge")
        sl_mid = [slice(None)] * grid.n
        sl_lo = [slice(None)] * grid.n
        sl_hi = [slice(None)] * grid.n
        sl_mid[ax] = slice(1, -1)
        sl_lo[ax] = slice(0, -2)
        sl_hi[ax] = slice(2, None)
        mid = vp[tuple(sl_mid)]
        dm.append(((mid - vp[tuple(sl_lo)]) / hh).ravel())
        dp.append(((vp[tuple(sl_hi)] - mid) / hh).ravel())
    return np.stack(dm, -1), np.stack(dp, -1)


def lax_friedrichs_hamiltonians(F, S, vals, grid):
    """Numerical H^u for each (point, control), shape (N, K), and the local alpha."""
    pm, pp = _one_sided(vals, grid)
    pbar = 0.5 * (pm + pp)
    sp = np.einsum("nkid,ni->nkd", S, pbar)
    H = np.einsum("nki,ni->nk", F, pbar) + 0.5 * np.sum(sp * sp, axis=-1)
    A = np.einsum("nkid,nkjd->nkij", S, S)
    pabs = np.maximum(np.abs(pm), np.abs(pp))                          # (N, n)
    dHdp = np.abs(F) + np.einsum("nkij,nj->nki", np.abs(A), pabs)      # (N, K, n)
    alpha = dHdp.max(axis=1)                                          # (N, n)
    # backward in time: dissipation enters with a plus sign
    H = H + 0.5 * np.sum(alpha * (pp - pm), axis=-1)[:, None]
    return H, alpha


def solve_pde_fd(problem: ControlProblem, grid: Grid, form: str = "qvi", terminal=None,
                 v_max: float = 4.0) -> ValueField:
    """Explicit monotone FD solve; ``form`` is 'qvi' or 'H'.

    In H-form the control set at x is filtered by l(x,u) <= V(t+δ, x); an empty
    set falls back to min_u l(x,u), and the update is floored at min_u l.
    """
    if form not in ("qvi", "H"):
        raise ValueError("form must be 'qvi' or 'H'")
    start = time.perf_counter()
    cfl = grid.check_cfl(problem, v_max)
    X = grid.points
    F, S, L = problem.tabulate(X)
    lmin = L.min(axis=1)
    values = np.empty((grid.nt + 1, grid.size))
    values[-1] = _terminal(L, terminal, grid)
    delta = grid.delta
    worst_dyn_cfl = 0.0
    for k in range(grid.nt - 1, -1, -1):
        nxt = values[k + 1]
        H, alpha = lax_friedrichs_hamiltonians(F, S, nxt, grid)
        worst_dyn_cfl = max(worst_dyn_cfl, float(np.max(delta * np.sum(alpha / grid.h, -1))))
        if form == "qvi":
            values[k] = np.maximum(nxt[:, None] + delta * H, L).min(axis=1)
        else:
            adm = L <= nxt[:, None]
            Hmin = np.where(adm, H, np.inf).min(axis=1)
            upd = np.where(np.isfinite(Hmin), nxt + delta * np.where(np.isfinite(Hmin), Hmin, 0.0), lmin)
            values[k] = np.maximum(upd, lmin)
    return ValueField(values, grid, grid.times,
                      info=dict(scheme=f"fd-{form}", cfl=cfl, dynamic_cfl=worst_dyn_cfl,
                                runtime=time.perf_counter() - start))


def _numeric_grad(phi: Callable, X: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    cols = []
    for j in range(X.shape[-1]):
        e = np.zeros(X.shape[-1])
        e[j] = eps
        cols.append((phi(X + e) - phi(X - e)) / (2 * eps))
    return np.stack(cols, -1)


def one_step_operator(problem: ControlProblem, grid: Grid, phi, t: float, delta: float,
                      points=None, v_max: float = 4.0) -> np.ndarray:
    """F_{t,t+δ} applied to ``phi`` (a callable x -> value, or values on ``grid``).

    ``phi`` is the function at time t+δ; ``t`` is carried for interface symmetry
    since the built-in problems are autonomous.
    """
    X = grid.points if points is None else np.asarray(points, float).reshape(-1, problem.n)
    if callable(phi):
        evaluate = phi
        grad = _numeric_grad(phi, X)
    else:
        vals = np.asarray(phi, float).ravel()
        evaluate = lambda P: interpolate(vals, grid, P)  # noqa: E731
        g = grid_gradient(vals, grid)
        grad = np.stack([interpolate(g[:, j], grid, X) for j in range(grid.n)], -1)
    if delta == 0:
        return np.asarray(evaluate(X), float)
    F, S, L = problem.tabulate(X)
    return _sl_update(X, F, S, L, delta, evaluate, grad, v_max).min(axis=1)


def time_derivative(W: ValueField) -> np.ndarray:
    if W.times.size < 2:
        raise ValueError("need at least 2 time slices")
    steps = np.diff(W.times)
    # a scalar spacing keeps the stencil weights exact (no cancellation residue)
    spacing = float(steps[0]) if np.allclose(steps, steps[0], rtol=1e-12, atol=0) else W.times
    return np.gradient(W.values, spacing, axis=0, edge_order=1)


def residual_qvi(problem: ControlProblem, W: ValueField) -> np.ndarray:
    """min_u max{W_t + H^u(x, DW), l - W} at every stored (t_k, x_i)."""
    Wt = time_derivative(W)
    F, S, L = problem.tabulate(W.grid.points)
    out = np.empty_like(W.values)
    for k in range(W.times.size):
        grad = grid_gradient(W.values[k], W.grid)
        sp = np.einsum("nkid,ni->nkd", S, grad)
        H = np.einsum("nki,ni->nk", F, grad) + 0.5 * np.sum(sp * sp, -1)
        out[k] = np.maximum(Wt[k][:, None] + H, L - W.values[k][:, None]).min(axis=1)
    return out
