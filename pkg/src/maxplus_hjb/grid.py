"""Space-time grids, value fields and multilinear interpolation."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class CFLError(ValueError):
    def __init__(self, ratio: float, suggested_delta: float):
        self.ratio = ratio
        self.suggested_delta = suggested_delta
        super().__init__(f"CFL ratio {ratio:.3g} > 1; use delta <= {suggested_delta:.3g}")


class DomainEscapeError(ValueError):
    """A foot point left the box under the 'strict' boundary policy."""


BOUNDARY_POLICIES = ("clamp", "strict")


@dataclass(frozen=True)
class Grid:
    lower: tuple
    upper: tuple
    num: tuple
    t0: float = 0.0
    T: float = 1.0
    nt: int = 100
    boundary: str = "clamp"

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        num = tuple(int(v) for v in np.broadcast_to(np.atleast_1d(self.num), (len(lo),)))
        if len(hi) != len(lo):
            raise ValueError("lower/upper dimension mismatch")
        if len(lo) > 2:
            raise ValueError("grids support n <= 2")
        if any(k < 3 for k in num):
            raise ValueError("need at least 3 points per axis")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ValueError("grid box must have upper > lower")
        if self.nt < 1 or self.T <= self.t0:
            raise ValueError("need nt >= 1 and T > t0")
        if self.boundary not in BOUNDARY_POLICIES:
            raise ValueError(f"boundary policy must be one of {BOUNDARY_POLICIES}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "num", num)

    @classmethod
    def for_problem(cls, problem, num, t0=0.0, T=1.0, nt=100, boundary="clamp") -> "Grid":
        return cls(tuple(problem.lower), tuple(problem.upper), num, t0, T, nt, boundary)

    @property
    def n(self) -> int:
        return len(self.lower)

    @property
    def shape(self) -> tuple:
        return self.num

    @property
    def size(self) -> int:
        return int(np.prod(self.num))

    @property
    def h(self) -> np.ndarray:
        return (np.array(self.upper) - np.array(self.lower)) / (np.array(self.num) - 1)

    @property
    def delta(self) -> float:
        return (self.T - self.t0) / self.nt

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.T, self.nt + 1)

    @property
    def axes(self) -> list:
        return [np.linspace(a, b, k) for a, b, k in zip(self.lower, self.upper, self.num)]

    @property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def with_horizon(self, T: float, t0: float | None = None) -> "Grid":
        t0 = self.t0 if t0 is None else t0
        nt = max(1, int(round((T - t0) / self.delta)))
        return Grid(self.lower, self.upper, self.num, t0, T, nt, self.boundary)

    def refined(self, factor: int = 2) -> "Grid":
        num = tuple((k - 1) * factor + 1 for k in self.num)
        return Grid(self.lower, self.upper, num, self.t0, self.T, self.nt * factor, self.boundary)

    def inner_mask(self, fraction: float = 0.5) -> np.ndarray:
        """Points inside the central ``fraction`` of the box along every axis."""
        pts = self.points
        lo, hi = np.array(self.lower), np.array(self.upper)
        c, half = (lo + hi) / 2, fraction * (hi - lo) / 2
        return np.all(np.abs(pts - c) <= half + 1e-12, axis=-1)

    def cfl_ratio(self, problem, v_max: float = 4.0) -> float:
        F, S, _ = problem.tabulate(self.points)
        fmax = np.abs(F).max(axis=(0, 1))                         # per axis
        smax = float(np.max(np.linalg.norm(S, ord=2, axis=(-2, -1)))) if S.size else 0.0
        return float(self.delta * np.sum((fmax + smax * v_max) / self.h))

    def check_cfl(self, problem, v_max: float = 4.0) -> float:
        ratio = self.cfl_ratio(problem, v_max)
        if ratio > 1.0 + 1e-12:
            raise CFLError(ratio, self.delta / ratio)
        return ratio


def interpolate(values: np.ndarray, grid: Grid, X: np.ndarray, boundary: str | None = None) -> np.ndarray:
    """Multilinear interpolation of a grid function at points ``X`` (..., n)."""
    boundary = boundary or grid.boundary
    X = np.asarray(X, float)
    vals = np.asarray(values, float).reshape(grid.shape)
    lo = np.array(grid.lower)
    hi = np.array(grid.upper)
    if boundary == "strict":
        bad = np.any((X < lo - 1e-12) | (X > hi + 1e-12), axis=-1)
        if bad.any():
            where = np.argwhere(bad)[0]
            raise DomainEscapeError(f"foot point {X[tuple(where)]} escapes the domain box")
    if grid.n == 1:
        # np.interp holds edge values outside the box, i.e. the clamp policy
        return np.interp(X[..., 0], grid.axes[0], vals)
    s =(np.clip(X, lo, hi) - lo) / grid.h
    num = np.array(grid.num)
    i0 = np.clip(np.floor(s).astype(int), 0, num - 2)
    w = s - i0
    out = np.zeros(X.shape[:-1])
    for corner in itertools.product((0, 1), repeat=grid.n):
        weight = np.ones(X.shape[:-1])
        idx = []
        for ax, c in enumerate(corner):
            weight = weight * (w[..., ax] if c else 1.0 - w[..., ax])
            idx.append(i0[..., ax] + c)
        out = out + weight * vals[tuple(idx)]
    return out


def grid_gradient(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Centered differences inside, one-sided at the boundary; shape (N, n)."""
    vals = np.asarray(values, float).reshape(grid.shape)
    parts = [np.gradient(vals, hh, axis=ax, edge_order=1) if grid.n > 1
             else np.gradient(vals, hh, edge_order=1)
             for ax, hh in enumerate(grid.h)]
    return np.stack([p.ravel() for p in parts], axis=-1)


@dataclass
class ValueField:
    """Values V(t_k, x_i), stored as an array of shape (len(times), N)."""

    values: np.ndarray
    grid: Grid
    times: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        self.times = np.asarray(self.times, float)
        if self.values.shape != (self.times.size, self.grid.size):
            raise ValueError("values must have shape (len(times), grid.size)")

    def slice(self, k: int) -> np.ndarray:
        return self.values[k]

    def at_time(self, t: float) -> np.ndarray:
        """Grid function at time t, linear in time between stored slices."""
        ts = self.times
        t = float(np.clip(t, ts[0], ts[-1]))
        k = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, ts.size - 2)) if ts.size > 1 else 0
        if ts.size == 1:
            return self.values[0]
        a = (t - ts[k]) / (ts[k + 1] - ts[k])
        # exact slices avoid 0 * (-inf) for fields that are -inf at the horizon
        if a <= 0.0:
            return self.values[k]
        if a >= 1.0:
            return self.values[k + 1]
        return (1 - a) * self.values[k] + a * self.values[k + 1]

    def __call__(self, t: float, X) -> np.ndarray:
        return interpolate(self.at_time(t), self.grid, np.asarray(X, float), "clamp")

    def gradient_at(self, t: float, X) -> np.ndarray:
        g = grid_gradient(self.at_time(t), self.grid)
        X = np.asarray(X, float)
        return np.stack([interpolate(g[:, j], self.grid, X, "clamp") for j in range(self.grid.n)], -1)

    def to_csv(self, path) -> Path:
        path = Path(path)
        pts = self.grid.points
        header = ["t"] + [f"x{j}" for j in range(self.grid.n)] + ["V"]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k, t in enumerate(self.times):
                for i in range(pts.shape[0]):
                    w.writerow([f"{t:.17g}"] + [f"{x:.17g}" for x in pts[i]] + [f"{self.values[k, i]:.17g}"])
        return path

    def save(self, path) -> Path:
        """Compact binary dump (npz) that :meth:`load` restores exactly."""
        path = Path(path)
        g = self.grid
        np.savez(path, values=self.values, times=self.times, lower=g.lower, upper=g.upper,
                 num=g.num, tspan=[g.t0, g.T, g.nt], boundary=g.boundary)
        return path if path.suffix == ".npz" else path.with_suffix(path.suffix + ".npz")

    @classmethod
    def load(cls, path) -> "ValueField":
        with np.load(path) as z:
            t0, T, nt = z["tspan"]
            grid = Grid(tuple(z["lower"]), tuple(z["upper"]), tuple(z["num"]), float(t0), float(T),
                        int(nt), str(z["boundary"]))
            return cls(z["values"].copy(), grid, z["times"].copy())
