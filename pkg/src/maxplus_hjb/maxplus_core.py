"""Max-plus algebra and max-plus probability on discretized disturbance paths.

The sample space is the set of piecewise-constant paths on a time partition,
each step taking values in a finite box lattice.  The density is

    Q(v) = -1/2 sum_j |v_j|^2 (s_{j+1} - s_j),

and random variables are vectorized callables mapping an array of paths of
shape ``(P, m, d)`` to values of shape ``(P,)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

NEG_INF = -math.inf  # max-plus zero


def oplus(a: float, b: float) -> float:
    return a if a >= b else b


def otimes(a: float, b: float) -> float:
    # -inf absorbs, including against +inf
    if a == NEG_INF or b == NEG_INF:
        return NEG_INF
    return a + b


@dataclass(frozen=True, order=True)
class MaxPlusScalar:
    value: float = NEG_INF

    def __post_init__(self):
        if math.isnan(self.value):
            raise ValueError("NaN is not a max-plus scalar")

    @property
    def is_zero(self) -> bool:
        return self.value == NEG_INF

    def __add__(self, other):  # ⊕
        return MaxPlusScalar(oplus(self.value, _val(other)))

    __radd__ = __add__

    def __mul__(self, other):  # ⊗
        return MaxPlusScalar(otimes(self.value, _val(other)))

    __rmul__ = __mul__

    def __float__(self) -> float:
        return float(self.value)


ZERO = MaxPlusScalar(NEG_INF)
ONE = MaxPlusScalar(0.0)


def _val(x) -> float:
    return x.value if isinstance(x, MaxPlusScalar) else float(x)


def _otimes_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.asarray(a, float) + np.asarray(b, float)
    dead = (np.asarray(a) == NEG_INF) | (np.asarray(b) == NEG_INF)
    return np.where(dead, NEG_INF, out)


@dataclass(frozen=True)
class DiscretePathSpace:
    """Piecewise-constant disturbance paths on ``partition`` with lattice values.

    ``values`` lists the admissible values of each component per step (a
    1-D array); the per-step value set is its d-fold product.
    """

    partition: np.ndarray
    values: np.ndarray
    d: int = 1

    def __post_init__(self):
        part = np.asarray(self.partition, float)
        vals = np.asarray(self.values, float).ravel()
        if part.ndim != 1 or part.size < 2 or np.any(np.diff(part) <= 0):
            raise ValueError("partition must be strictly increasing with >= 2 points")
        if vals.size == 0:
            raise ValueError("empty sample space")
        if not np.any(vals == 0.0):
            # Q(0) = 0 makes sup Q = 0, i.e. a normalized max-plus probability
            raise ValueError("disturbance values must contain 0")
        object.__setattr__(self, "partition", part)
        object.__setattr__(self, "values", vals)

    @classmethod
    def uniform(cls, t0: float, T: float, m: int, v_max: float = 4.0,
                dv: float = 0.5, d: int = 1) -> "DiscretePathSpace":
        k = int(round(v_max / dv))
        return cls(np.linspace(t0, T, m + 1), dv * np.arange(-k, k + 1), d)

    @property
    def m(self) -> int:
        return self.partition.size - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.partition)

    def step_values(self) -> np.ndarray:
        """All per-step disturbance vectors, shape (|grid|^d, d)."""
        return np.array(list(itertools.product(self.values, repeat=self.d)), float)

    def size(self) -> int:
        return (self.values.size ** self.d) ** self.m

    def paths(self, steps: slice | None = None) -> np.ndarray:
        """Enumerate every path (restricted to ``steps``), shape (P, m', d)."""
        idx = range(self.m)[steps] if steps is not None else range(self.m)
        sv = self.step_values()
        k = len(idx)
        if k == 0:
            return np.zeros((1, 0, self.d))
        grids = np.meshgrid(*([np.arange(len(sv))] * k), indexing="ij")
        combos = np.stack([g.ravel() for g in grids], axis=-1)
        return sv[combos]

    def density(self, paths: np.ndarray, steps: slice | None = None) -> np.ndarray:
        dt = self.steps if steps is None else self.steps[steps]
        paths = np.asarray(paths, float)
        return -0.5 * np.sum(np.sum(paths * paths, axis=-1) * dt, axis=-1)

    def split_index(self, r: float) -> int:
        hits = np.nonzero(np.isclose(self.partition, r, rtol=0, atol=1e-12))[0]
        if hits.size == 0 or hits[0] in (0, self.m):
            raise ValueError(f"r={r} is not an interior partition point")
        return int(hits[0])


RandomVariable = Callable[[np.ndarray], np.ndarray]


def maxplus_expectation(Z: RandomVariable, space: DiscretePathSpace) -> float:
    """E+[Z] = max over paths of Z(v) ⊗ Q(v)."""
    if space.size() == 0:
        raise ValueError("empty sample space")
    paths = space.paths()
    z = np.asarray(Z(paths), float)
    return float(np.max(_otimes_array(z, space.density(paths))))


def maxplus_probability(A: Callable[[np.ndarray], np.ndarray], space: DiscretePathSpace) -> float:
    """P+(A) = sup of Q over A; the empty event has probability -inf."""
    paths = space.paths()
    mask = np.asarray(A(paths), bool)
    if not mask.any():
        return NEG_INF
    return float(np.max(space.density(paths[mask])))


def conditional_expectation(Z: RandomVariable, v1: np.ndarray, space: DiscretePathSpace,
                            r: float) -> float:
    """E+[Z | v1] for a prefix v1 on [t, r]: sup over suffixes of Z(v1, v2) ⊗ Q2(v2)."""
    j = space.split_index(r)
    v1 = np.asarray(v1, float).reshape(j, space.d)
    suffix = space.paths(slice(j, None))
    full = np.concatenate([np.broadcast_to(v1, (suffix.shape[0],) + v1.shape), suffix], axis=1)
    z = np.asarray(Z(full), float)
    return float(np.max(_otimes_array(z, space.density(suffix, slice(j, None)))))


def tower_sides(Z1: RandomVariable, Z2: RandomVariable, space: DiscretePathSpace,
                r: float) -> tuple[float, float]:
    """Both sides of E+[Z1 ⊕ Z2] = E+[Z1 ⊕ E+[Z2 | v1]] by enumeration.

    ``Z1`` reads only the prefix block; ``Z2`` reads whole paths.
    """
    j = space.split_index(r)

    def Z(paths):
        return np.maximum(Z1(paths[:, :j]), Z2(paths))

    lhs = maxplus_expectation(Z, space)
    prefixes = space.paths(slice(0, j))
    inner = np.array([conditional_expectation(Z2, v1, space, r) for v1 in prefixes])
    outer = np.maximum(np.asarray(Z1(prefixes), float), inner)
    rhs = float(np.max(_otimes_array(outer, space.density(prefixes, slice(0, j)))))
    return lhs, rhs
