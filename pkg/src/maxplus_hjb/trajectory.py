"""Trajectories of dx/ds = f(x,u) + sigma(x,u) v, policies, the max-plus additive cost,
the game payoff and the max-plus expectation of a policy.

J(t,x; policy) = sup_v { max_s l(x(s), u(s)) - 1/2 int |v|^2 ds } is approximated by
optimizing over piecewise-constant disturbances; the reported value is always a lower
bound on the true supremum.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .grid import ValueField, grid_gradient, interpolate
from .problem import ControlProblem
from .solver import time_derivative

POLICY_KINDS = ("constant", "open_loop", "markov")


class BlowUpError(RuntimeError):
    """The state left the domain box expanded by a factor of 2 (blow-up)."""


@dataclass(frozen=True)
class Policy:
    """A control law evaluated as ``policy(s, X)`` with X of shape (..., n)."""

    kind: str
    fn: Callable | None = None
    u0: np.ndarray | None = None
    lipschitz: float | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"policy kind must be one of {POLICY_KINDS}")

    @classmethod
    def constant(cls, u0, name: str = "") -> "Policy":
        return cls("constant", u0=np.atleast_1d(np.asarray(u0, float)), lipschitz=0.0,
                   name=name or f"constant{np.ravel(u0).tolist()}")

    @classmethod
    def open_loop(cls, fn: Callable[[float], np.ndarray], name: str = "open-loop") -> "Policy":
        return cls("open_loop", fn=fn, name=name)

    @classmethod
    def markov(cls, fn: Callable[[float, np.ndarray], np.ndarray], lipschitz: float | None = None,
               name: str = "markov") -> "Policy":
        return cls("markov", fn=fn, lipschitz=lipschitz, name=name)

    def __call__(self, s: float, X) -> np.ndarray:
        X = np.asarray(X, float)
        batch = X.shape[:-1]
        if self.kind == "constant":
            u = self.u0
        elif self.kind == "open_loop":
            u = np.atleast_1d(np.asarray(self.fn(s), float))
        else:
            return np.asarray(self.fn(s, X), float).reshape(batch + (-1,))
        return np.broadcast_to(u, batch + u.shape)


def argmin_policy(problem: ControlProblem, W: ValueField, tie_tol: float = 1e-9) -> Policy:
    """u(s,y) in argmin_u max{W_t + H^u(y, DW), l(y,u) - W}, ties broken by smallest H^u.

    The argmin is tabulated on every grid node and time slice; between nodes the
    control is interpolated multilinearly (so it stays in the hull of U), and on
    [t_k, t_{k+1}) the slice-k table is used.
    """
    grid = W.grid
    times = W.times
    Wt = time_derivative(W)
    F, S, L = problem.tabulate(grid.points)
    table = np.empty((times.size, grid.size, problem.m))
    for k in range(times.size):
        p = grid_gradient(W.values[k], grid)
        sp = np.einsum("nkid,ni->nkd", S, p)
        H = np.einsum("nki,ni->nk", F, p) + 0.5 * np.sum(sp * sp, -1)
        q = np.maximum(Wt[k][:, None] + H, L - W.values[k][:, None])
        near = q <= q.min(axis=1, keepdims=True) + tie_tol
        table[k] = problem.U[np.argmin(np.where(near, H, np.inf), axis=1)]

    def fn(s, X):
        X = np.asarray(X, float)
        k = int(np.clip(np.searchsorted(times, s + 1e-12, side="right") - 1, 0, times.size - 1))
        flat = X.reshape(-1, problem.n)
        u = np.stack([interpolate(table[k][:, j], grid, flat, "clamp") for j in range(problem.m)], -1)
        return u.reshape(X.shape[:-1] + (problem.m,))

    pol = Policy.markov(fn, name="argmin")
    object.__setattr__(pol, "table", table)
    return pol


@dataclass
class DisturbancePath:
    """Piecewise-constant v on ``partition``; ``values`` has shape (M, d)."""

    partition: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.partition = np.asarray(self.partition, float)
        self.values = np.asarray(self.values, float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.shape[0] != self.partition.size - 1:
            raise ValueError("need one value per partition interval")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("disturbance values must be finite")

    @classmethod
    def zero(cls, t0: float, T: float, M: int, d: int) -> "DisturbancePath":
        return cls(np.linspace(t0, T, M + 1), np.zeros((M, d)))

    @classmethod
    def constant(cls, t0: float, T: float, M: int, v) -> "DisturbancePath":
        v = np.atleast_1d(np.asarray(v, float))
        return cls(np.linspace(t0, T, M + 1), np.tile(v, (M, 1)))

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def energy(self) -> float:
        return float(0.5 * np.sum(np.sum(self.values ** 2, -1) * np.diff(self.partition)))

    def on_steps(self, t0: float, dt: float, nsteps: int) -> np.ndarray:
        """Values on each integrator step [t0 + j dt, t0 + (j+1) dt]; checks alignment."""
        edges = (self.partition - t0) / dt
        if not np.allclose(edges, np.round(edges), atol=1e-6):
            raise ValueError("dt must divide every partition interval")
        idx = np.searchsorted(self.partition, t0 + (np.arange(nsteps) + 0.5) * dt) - 1
        return self.values[np.clip(idx, 0, self.values.shape[0] - 1)]


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray        # (J+1, n)
    controls: np.ndarray      # (J+1, m), u(s_j) at every sample time
    disturbances: np.ndarray  # (J, d), per integrator step

    def __post_init__(self):
        J = self.times.size
        if self.states.shape[0] != J or self.controls.shape[0] != J or self.disturbances.shape[0] != J - 1:
            raise ValueError("trajectory arrays have inconsistent lengths")

    def to_csv(self, path) -> Path:
        path = Path(path)
        n, m, d = self.states.shape[1], self.controls.shape[1], self.disturbances.shape[1]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s"] + [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(m)]
                       + [f"v{i}" for i in range(d)])
            for j, s in enumerate(self.times):
                v = self.disturbances[min(j, len(self.disturbances) - 1)] if len(self.disturbances) else []
                w.writerow([f"{x:.17g}" for x in [s, *self.states[j], *self.controls[j], *v]])
        return path


# ---------------------------------------------------------------------------
# integration


def _escape_box(problem: ControlProblem):
    c = 0.5 * (problem.lower + problem.upper)
    half = problem.upper - problem.lower  # twice the half-width
    return c - half, c + half


def _sigma_v(problem, X, u, v):
    return np.einsum("...id,...d->...i", problem.sigma(X, u), v)


def _simulate(problem: ControlProblem, pol: Policy, t0: float, X0: np.ndarray, V: np.ndarray,
              dt: float):
    """Batched RK4.  X0 (B, n), V (B, J, d) per-step disturbances.

    Returns states (B, J+1, n), controls (B, J+1, m) and a mask of escaped paths.
    The control is re-evaluated at every RK stage (Markov feedback).
    """
    B, J = V.shape[0], V.shape[1]
    lo, hi = _escape_box(problem)
    X = np.array(X0, float)
    states = np.empty((B, J + 1, problem.n))
    controls = np.empty((B, J + 1, problem.m))
    states[:, 0] = X
    escaped = np.zeros(B, bool)

    def rhs(s, x, v):
        u = pol(s, x)
        return problem.f(x, u) + _sigma_v(problem, x, u, v)

    for j in range(J):
        s = t0 + j * dt
        v = V[:, j]
        controls[:, j] = pol(s, X)
        k1 = rhs(s, X, v)
        k2 = rhs(s + 0.5 * dt, X + 0.5 * dt * k1, v)
        k3 = rhs(s + 0.5 * dt, X + 0.5 * dt * k2, v)
        k4 = rhs(s + dt, X + dt * k3, v)
        X = X + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        bad = ~np.all((X >= lo) & (X <= hi), axis=-1) | ~np.all(np.isfinite(X), axis=-1)
        if bad.any():
            escaped |= bad
            X = np.where(bad[:, None], np.clip(np.nan_to_num(X), lo, hi), X)
        states[:, j + 1] = X
    controls[:, J] = pol(t0 + J * dt, X)
    return states, controls, escaped


def _nsteps(t0: float, T: float, dt: float) -> int:
    J = int(round((T - t0) / dt))
    if J < 1 or abs(J * dt - (T - t0)) > 1e-9 * max(1.0, T - t0):
        raise ValueError("dt must divide T - t0")
    return J


def integrate(problem: ControlProblem, pol: Policy, v: DisturbancePath | None, t0: float, x0,
              T: float, dt: float) -> Trajectory:
    x0 = np.atleast_1d(np.asarray(x0, float))
    if x0.shape != (problem.n,):
        raise ValueError("x0 has the wrong dimension")
    if np.any(x0 < problem.lower) or np.any(x0 > problem.upper):
        raise ValueError("x0 outside the domain box")
    J = _nsteps(t0, T, dt)
    V = np.zeros((J, problem.d)) if v is None else v.on_steps(t0, dt, J)
    states, controls, escaped = _simulate(problem, pol, t0, x0[None], V[None], dt)
    if escaped[0]:
        raise BlowUpError("blow-up: state escaped the 2x expanded domain box")
    return Trajectory(t0 + dt * np.arange(J + 1), states[0], controls[0], V)


def maxplus_cost(traj: Trajectory, problem: ControlProblem) -> float:
    if traj.times.size == 0:
        raise ValueError("empty trajectory")
    return float(np.max(problem.l(traj.states, traj.controls)))


def game_payoff(traj: Trajectory, v: DisturbancePath | None, problem: ControlProblem) -> float:
    return maxplus_cost(traj, problem) - (0.0 if v is None else v.energy())


# ---------------------------------------------------------------------------
# max-plus expectation of a policy


@dataclass
class ExpectationOptions:
    dt: float = 0.02
    coarsen: int = 5
    restarts: int = 3
    step0: float = 0.5
    step_min: float = 1e-4
    max_iter: int = 5000
    v_max: float = 8.0
    seed: int = 0


@dataclass
class ExpectationResult:
    value: float
    path: DisturbancePath
    trajectory: Trajectory
    starts: list = field(default_factory=list)   # (label, start payoff, final payoff)
    lower_bound: bool = True


def closed_system_worst_case(problem: ControlProblem, pol: Policy, W: ValueField, t0: float, x0,
                             T: float | None = None, dt: float = 0.02):
    """Integrate dx/ds = f + sigma sigma^T DW under ``pol``; v(s) = sigma^T DW(s, x(s))."""
    T = W.times[-1] if T is None else T
    if t0 < W.times[0] - 1e-12 or T > W.times[-1] + 1e-12:
        raise ValueError("W must cover [t0, T]")
    x0 = np.atleast_1d(np.asarray(x0, float))
    J = _nsteps(t0, T, dt)
    lo, hi = _escape_box(problem)

    def vhat(s, x):
        u = pol(s, x[None])[0]
        g = W.gradient_at(s, x[None])[0]
        return np.einsum("id,i->d", problem.sigma(x, u), g)

    def rhs(s, x):
        u = pol(s, x[None])[0]
        return problem.f(x, u) + _sigma_v(problem, x, u, vhat(s, x))

    X = x0.copy()
    states = [X]
    controls = []
    dist = []
    for j in range(J):
        s = t0 + j * dt
        controls.append(pol(s, X[None])[0])
        dist.append(vhat(s, X))
        k1 = rhs(s, X)
        k2 = rhs(s + 0.5 * dt, X + 0.5 * dt * k1)
        k3 = rhs(s + 0.5 * dt, X + 0.5 * dt * k2)
        k4 = rhs(s + dt, X + dt * k3)
        X = X + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if np.any(X < lo) or np.any(X > hi):
            raise BlowUpError("blow-up: state escaped the 2x expanded domain box")
        states.append(X)
    controls.append(pol(T, X[None])[0])
    times = t0 + dt * np.arange(J + 1)
    dist = np.array(dist).reshape(J, problem.d)
    traj = Trajectory(times, np.array(states), np.array(controls), dist)
    return traj, DisturbancePath(times, dist)


def _coarse(path: DisturbancePath, partition: np.ndarray) -> np.ndarray:
    """Average a fine piecewise-constant path over the coarse ``partition``."""
    out = np.empty((partition.size - 1, path.d))
    mids = 0.5 * (path.partition[1:] + path.partition[:-1])
    for i in range(out.shape[0]):
        sel = (mids >= partition[i]) & (mids < partition[i + 1])
        out[i] = path.values[sel].mean(axis=0) if sel.any() else 0.0
    return out


def maxplus_expectation_policy(problem: ControlProblem, pol: Policy, t0: float, x0, T: float,
                               opts: ExpectationOptions | None = None,
                               W: ValueField | None = None) -> ExpectationResult:
    """Multi-start Gauss-Southwell coordinate ascent over piecewise-constant v.

    Starts: v = 0, the closed-system candidate when ``W`` is given, and
    ``opts.restarts`` random paths.  Every start is refined in one batch.
    """
    opts = opts or ExpectationOptions()
    x0 = np.atleast_1d(np.asarray(x0, float))
    J = _nsteps(t0, T, opts.dt)
    if J % opts.coarsen:
        raise ValueError("coarsen must divide the number of integrator steps")
    M, d = J // opts.coarsen, problem.d
    partition = t0 + opts.dt * opts.coarsen * np.arange(M + 1)
    widths = np.diff(partition)

    starts = [("zero", np.zeros((M, d)))]
    if W is not None:
        try:
            _, vh = closed_system_worst_case(problem, pol, W, t0, x0, T, opts.dt)
            starts.append(("closed-system", np.clip(_coarse(vh, partition), -opts.v_max, opts.v_max)))
        except BlowUpError:
            pass
    rng = np.random.default_rng(opts.seed)
    for r in range(opts.restarts):
        starts.append((f"random{r}", np.clip(rng.normal(0.0, 0.5, (M, d)), -opts.v_max, opts.v_max)))

    def payoff(Vc):  # Vc (B, M, d)
        Vf = np.repeat(Vc, opts.coarsen, axis=1)
        X0 = np.broadcast_to(x0, (Vc.shape[0], problem.n))
        states, controls, escaped = _simulate(problem, pol, t0, X0, Vf, opts.dt)
        cost = np.max(problem.l(states, controls), axis=1)
        energy = 0.5 * np.sum(np.sum(Vc * Vc, -1) * widths, -1)
        return np.where(escaped, -np.inf, cost - energy)

    cur = np.stack([s for _, s in starts])            # (B, M, d)
    B = cur.shape[0]
    val = payoff(cur)
    first = val.copy()
    step = np.full(B, opts.step0)
    if problem.d and M:
        dirs = np.concatenate([np.eye(M * d), -np.eye(M * d)]).reshape(2 * M * d, M, d)
        for _ in range(opts.max_iter):
            active = np.flatnonzero(step >= opts.step_min)
            if active.size == 0:
                break
            cand = cur[active, None] + step[active, None, None, None] * dirs[None]
            cand = np.clip(cand, -opts.v_max, opts.v_max)
            cv = payoff(cand.reshape(-1, M, d)).reshape(active.size, -1)
            best = np.argmax(cv, axis=1)
            gain = cv[np.arange(active.size), best]
            up = gain > val[active] + 1e-15
            for a, b, g, ok in zip(active, best, gain, up):
                if ok:
                    cur[a] = cand[np.flatnonzero(active == a)[0], b]
                    val[a] = g
                else:
                    step[a] *= 0.5
    k = int(np.argmax(val))
    path = DisturbancePath(partition, cur[k])
    traj = integrate(problem, pol, path, t0, x0, T, opts.dt)
    report = [(label, float(a), float(b)) for (label, _), a, b in zip(starts, first, val)]
    return ExpectationResult(float(val[k]), path, traj, report)


# ---------------------------------------------------------------------------
# verification of W <= J(policy)


@dataclass
class VerificationRecord:
    x: np.ndarray
    J: float
    W: float
    ok: bool


@dataclass
class VerificationReport:
    records: list
    counterexamples: list
    passed: bool
    optimal: bool
    tol: float


def verify_lower_bound(problem: ControlProblem, pol: Policy, W: ValueField, samples, t0: float = 0.0,
                       T: float | None = None, tol: float = 1e-6, optimal: bool = False,
                       opts: ExpectationOptions | None = None, threads: int = 1) -> VerificationReport:
    """Check J(t0,x; pol) >= W(t0,x) - tol at every sample.

    With ``optimal`` the two-sided check |J - W| <= tol is applied instead.
    Violations are returned as counterexample records.
    """
    T = W.times[-1] if T is None else T
    samples = np.asarray(samples, float).reshape(-1, problem.n)

    def one(x):
        res = maxplus_expectation_policy(problem, pol, t0, x, T, opts, W=W)
        w = float(W(t0, x[None])[0])
        ok = abs(res.value - w) <= tol if optimal else res.value >= w - tol
        return VerificationRecord(x.copy(), res.value, w, bool(ok))

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            records = list(ex.map(one, samples))
    else:
        records = [one(x) for x in samples]
    bad = [r for r in records if not r.ok]
    return VerificationReport(records, bad, not bad, optimal, tol)
