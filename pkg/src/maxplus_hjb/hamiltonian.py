"""The discontinuous Hamiltonian min_{u in A(x,r)} H^u(x,p), its upper envelope, and the
max-min (Elliott-Kalton) Hamiltonian.

With a finite control set, r -> H(x, r, p) is a right-continuous step function, so the
semicontinuous envelopes in r are exact set operations: the lower envelope is H itself
and the upper envelope is the minimum over the strict set {l(x,u) < r}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .problem import ControlProblem

POS_INF = math.inf


@dataclass(frozen=True)
class HamiltonianQuery:
    x: np.ndarray
    r: float
    p: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, float))
        p = np.atleast_1d(np.asarray(self.p, float))
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p)) and math.isfinite(self.r)):
            raise ValueError("query components must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class HamiltonianValue:
    value: float
    control: np.ndarray | None = None

    @property
    def is_infinite(self) -> bool:
        return self.value == POS_INF


_last_tabulation: list = [None, None, None]  # [problem, x bytes, (F, S, L)]


def _tabulate_at(problem: ControlProblem, x: np.ndarray):
    # problems are immutable, so repeated queries at the same x reuse one tabulation
    key = x.tobytes()
    if _last_tabulation[0] is not problem or _last_tabulation[1] != key:
        F, S, L = problem.tabulate(x[None, :])
        _last_tabulation[:] = [problem, key, (F[0], S[0], L[0])]
    return _last_tabulation[2]


def _per_control(problem: ControlProblem, q: HamiltonianQuery):
    F, S, L = _tabulate_at(problem, q.x)
    sp = np.einsum("kid,i->kd", S, q.p)
    H = F @ q.p + 0.5 * np.sum(sp * sp, axis=-1)
    return F, S, L, H


def _min_over(mask, H, U) -> HamiltonianValue:
    if not mask.any():
        return HamiltonianValue(POS_INF, None)
    idx = np.flatnonzero(mask)
    best = idx[np.argmin(H[idx])]
    return HamiltonianValue(float(H[best]), U[best].copy())


def hamiltonian_H(problem: ControlProblem, q: HamiltonianQuery) -> HamiltonianValue:
    _, _, L, H = _per_control(problem, q)
    return _min_over(L <= q.r, H, problem.U)


def hamiltonian_H_upper(problem: ControlProblem, q: HamiltonianQuery) -> HamiltonianValue:
    _, _, L, H = _per_control(problem, q)
    return _min_over(L < q.r, H, problem.U)


def default_v_radius(problem: ControlProblem, q: HamiltonianQuery) -> float:
    _, S, _, _ = _per_control(problem, q)
    sp = np.einsum("kid,i->kd", S, q.p)
    return 2.0 * float(np.max(np.linalg.norm(sp, axis=-1))) + 1.0


def hamiltonian_K(problem: ControlProblem, q: HamiltonianQuery, v_radius: float | None = None,
                  v_step: float = 0.01) -> HamiltonianValue:
    """max over a v-lattice of min over A(x,r) of (f + sigma v).p - |v|^2/2.

    The reported control is the minimizer at the maximizing v.
    """
    F, S, L, _ = _per_control(problem, q)
    mask = L <= q.r
    if not mask.any():
        return HamiltonianValue(POS_INF, None)
    if v_radius is None:
        sp = np.einsum("kid,i->kd", S, q.p)
        v_radius = 2.0 * float(np.max(np.linalg.norm(sp, axis=-1))) + 1.0
    k = int(math.ceil(v_radius / v_step))
    axis = v_step * np.arange(-k, k + 1)
    V = np.stack(np.meshgrid(*([axis] * problem.d), indexing="ij"), -1).reshape(-1, problem.d)
    Fp = F[mask] @ q.p                                  # (K',)
    Sp = np.einsum("kid,i->kd", S[mask], q.p)           # (K', d)
    vals = Fp[None, :] + V @ Sp.T - 0.5 * np.sum(V * V, axis=-1)[:, None]
    inner = vals.min(axis=1)
    j = int(np.argmax(inner))
    u = problem.U[np.flatnonzero(mask)[np.argmin(vals[j])]]
    return HamiltonianValue(float(inner[j]), u.copy())


def level_gap(problem: ControlProblem, x, r: float) -> float:
    """min{l(x,u) - r : l(x,u) > r}; +inf when no cost level lies above r."""
    _, _, L = _tabulate_at(problem, np.atleast_1d(np.asarray(x, float)))
    above = L[L > r] - r
    return float(above.min()) if above.size else POS_INF
