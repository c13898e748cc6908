"""Control-problem model: dynamics, running cost, control set and per-control Hamiltonians.

All callables are vectorized: ``x`` has shape ``(..., n)``, ``u`` has shape
``(..., m)`` and the two broadcast against each other.  ``f`` returns
``(..., n)``, ``sigma`` returns ``(..., n, d)`` and ``l`` returns ``(...)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Array = np.ndarray
DriftFn = Callable[[Array, Array], Array]
SigmaFn = Callable[[Array, Array], Array]
CostFn = Callable[[Array, Array], Array]

MAX_POINTS_PER_AXIS = 41


class ProblemError(ValueError):
    """Raised for malformed problem definitions (empty U, bad dimensions)."""


@dataclass(frozen=True)
class ControlSet:
    """Finite control set; boxes are materialized on a uniform lattice."""

    points: Array

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.size == 0 or pts.shape[0] == 0:
            raise ProblemError("control set U is empty")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_points(cls, points: Sequence) -> "ControlSet":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        return cls(pts)

    @classmethod
    def box(cls, lower, upper, num) -> "ControlSet":
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        num = np.broadcast_to(np.atleast_1d(num), lower.shape)
        if np.any(num < 1):
            raise ProblemError("control set U is empty")
        if np.any(num > MAX_POINTS_PER_AXIS):
            raise ProblemError(f"at most {MAX_POINTS_PER_AXIS} control points per axis")
        axes = [np.linspace(lo, hi, int(k)) if k > 1 else np.array([lo])
                for lo, hi, k in zip(lower, upper, num)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return cls(np.stack([m.ravel() for m in mesh], axis=-1))

    @property
    def m(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class ControlProblem:
    """The tuple (f, sigma, l, U) on a truncated box domain."""

    n: int
    d: int
    f: DriftFn
    sigma: SigmaFn
    l: CostFn
    controls: ControlSet
    lower: Array
    upper: Array
    lip_l_x: float | None = None
    name: str = "problem"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != (self.n,) or hi.shape != (self.n,):
            raise ProblemError("domain bounds must have length n")
        if np.any(hi <= lo):
            raise ProblemError("domain box must have upper > lower")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def m(self) -> int:
        return self.controls.m

    @property
    def U(self) -> Array:
        return self.controls.points

    def tabulate(self, X: Array):
        """Evaluate f, sigma, l for every (point, control) pair.

        Returns arrays of shapes (N, K, n), (N, K, n, d) and (N, K).
        """
        X = np.asarray(X, dtype=float).reshape(-1, self.n)
        xs = X[:, None, :]
        us = self.U[None, :, :]
        N, K = X.shape[0], self.U.shape[0]
        return (_shaped(self.f(xs, us), (N, K, self.n)),
                _shaped(self.sigma(xs, us), (N, K, self.n, self.d)),
                _shaped(self.l(xs, us), (N, K)))


def _shaped(a, shape) -> Array:
    """Float array of exactly ``shape``; broadcast results come back read-only."""
    a = np.asarray(a, dtype=float)
    return a if a.shape == shape else np.broadcast_to(a, shape)


def diffusion_matrix(p: ControlProblem, x, u) -> Array:
    s = np.asarray(p.sigma(np.asarray(x, float), np.asarray(u, float)), float)
    return np.einsum("...ik,...jk->...ij", s, s)


def hamiltonian_u(p: ControlProblem, x, u, grad) -> Array:
    """H^u(x, p) = f.p + 1/2 |sigma^T p|^2 (the sup over v in closed form)."""
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    grad = np.asarray(grad, float)
    fx = p.f(x, u)
    s = p.sigma(x, u)
    sp = np.einsum("...ik,...i->...k", s, grad)
    return np.sum(fx * grad, axis=-1) + 0.5 * np.sum(sp * sp, axis=-1)


def worst_disturbance(p: ControlProblem, x, u, grad) -> Array:
    s = p.sigma(np.asarray(x, float), np.asarray(u, float))
    return np.einsum("...ik,...i->...k", s, np.asarray(grad, float))


def disturbance_objective(p: ControlProblem, x, u, grad, v) -> Array:
    """(f + sigma v).p - |v|^2/2, the quantity maximized in H^u."""
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    grad = np.asarray(grad, float)
    drift = p.f(x, u) + np.einsum("...ik,...k->...i", p.sigma(x, u), v)
    return np.sum(drift * grad, axis=-1) - 0.5 * np.sum(v * v, axis=-1)


def terminal_value(p: ControlProblem, x) -> Array:
    x = np.asarray(x, float)
    costs = p.l(x[..., None, :], p.U)
    return np.min(costs, axis=-1)


def admissible_set(p: ControlProblem, x, r: float, strict: bool = False) -> Array:
    """Controls with l(x,u) <= r (or < r when ``strict``); may be empty."""
    x = np.asarray(x, float)
    costs = np.broadcast_to(p.l(x[None, :], p.U), (len(p.controls),))
    mask = costs < r if strict else costs <= r
    return p.U[mask]


# ---------------------------------------------------------------------------
# built-in families


def _const_sigma(value, n, d):
    mat = np.broadcast_to(np.asarray(value, float), (n, d)).copy()

    def sigma(x, u):
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1])
        return np.broadcast_to(mat, shape + (n, d))

    return sigma


def affine_problem(a=-1.0, b=1.0, c=0.0, sigma=0.5, q=1.0, ru=0.0, clip=4.0,
                   u_lower=-1.0, u_upper=1.0, u_num=21, lower=-2.0, upper=2.0,
                   name="affine") -> ControlProblem:
    """1-D family dx = (a x + b u + c) ds + sigma v ds, l = min(q x^2, clip) + ru u^2."""

    def f(x, u):
        return a * x + b * u + c

    def l(x, u):
        xx = x[..., 0]
        uu = u[..., 0]
        return np.minimum(q * xx * xx, clip) + ru * uu * uu

    bound = max(abs(lower), abs(upper))
    lip = 2.0 * abs(q) * min(bound, np.sqrt(clip / q)) if q > 0 else 0.0
    return ControlProblem(
        n=1, d=1, f=f, sigma=_const_sigma(sigma, 1, 1), l=l,
        controls=ControlSet.box(u_lower, u_upper, u_num),
        lower=[lower], upper=[upper], lip_l_x=lip, name=name,
        params=dict(a=a, b=b, c=c, sigma=sigma, q=q, ru=ru, clip=clip),
    )


def canonical_problem() -> ControlProblem:
    """f = u - x, sigma = 0.5, l = x^2 clipped at 4, U = 21 points of [-1, 1], box [-2, 2]."""
    return affine_problem(name="canonical")


def constant_cost_problem(c: float = 1.0, n: int = 1, sigma: float = 0.5,
                          lower=-2.0, upper=2.0) -> ControlProblem:
    def f(x, u):
        return u - x

    def l(x, u):
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1])
        return np.full(shape, float(c))

    return ControlProblem(
        n=n, d=n, f=f, sigma=_const_sigma(sigma * np.eye(n), n, n), l=l,
        controls=ControlSet.box([-1.0] * n, [1.0] * n, 5),
        lower=[lower] * n, upper=[upper] * n, lip_l_x=0.0, name="constant",
        params=dict(c=c),
    )


def singleton_problem(p: ControlProblem, u0) -> ControlProblem:
    """The same problem with U restricted to the single control ``u0``."""
    return ControlProblem(
        n=p.n, d=p.d, f=p.f, sigma=p.sigma, l=p.l,
        controls=ControlSet.from_points(np.atleast_2d(np.asarray(u0, float))),
        lower=p.lower, upper=p.upper, lip_l_x=p.lip_l_x,
        name=f"{p.name}[u={np.ravel(u0).tolist()}]", params=dict(p.params),
    )


def tabular_problem(F, S, L, lower=-1.0, upper=1.0, name="tabular") -> ControlProblem:
    """State-independent data per control: u = k selects (F[k], S[k], L[k]).

    Shapes: F (K, n), S (K, n, d), L (K,).  Used for exhaustive Hamiltonian checks.
    """
    F = np.asarray(F, float)
    S = np.asarray(S, float)
    L = np.asarray(L, float)
    K, n = F.shape
    d = S.shape[-1]
    if S.shape != (K, n, d) or L.shape != (K,):
        raise ProblemError("tabular data shapes disagree")

    def idx(u):
        return np.rint(np.asarray(u)[..., 0]).astype(int)

    def f(x, u):
        out = F[idx(u)]
        return np.broadcast_to(out, np.broadcast_shapes(np.shape(x)[:-1], out.shape[:-1]) + (n,))

    def sigma(x, u):
        out = S[idx(u)]
        return np.broadcast_to(out, np.broadcast_shapes(np.shape(x)[:-1], out.shape[:-2]) + (n, d))

    def l(x, u):
        out = L[idx(u)]
        return np.broadcast_to(out, np.broadcast_shapes(np.shape(x)[:-1], out.shape))

    return ControlProblem(n=n, d=d, f=f, sigma=sigma, l=l,
                          controls=ControlSet.from_points(np.arange(K, dtype=float)),
                          lower=[lower] * n, upper=[upper] * n, lip_l_x=0.0, name=name)
