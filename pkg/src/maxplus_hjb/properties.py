"""Randomized invariant suite for the Hamiltonian layer and the problem/max-plus layers.

Instances are built from dyadic rationals and the disturbance lattice uses a dyadic
step, so every comparison below is made in exact floating-point arithmetic.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .hamiltonian import (POS_INF, HamiltonianQuery, hamiltonian_H, hamiltonian_H_upper,
                          hamiltonian_K, level_gap)
from .maxplus_core import DiscretePathSpace, tower_sides
from .problem import admissible_set, hamiltonian_u, tabular_problem, worst_disturbance, disturbance_objective


def gap_instance():
    """Two controls sharing l = 0 with sigma = +1 and -1: max-min 0 against min-max 1/2."""
    prob = tabular_problem(F=[[0.0], [0.0]], S=[[[1.0]], [[-1.0]]], L=[0.0, 0.0])
    return prob, HamiltonianQuery(x=[0.0], r=1.0, p=[1.0])


def gap_instance_values(v_step: float = 0.01, v_radius: float = 2.0):
    prob, q = gap_instance()
    K = hamiltonian_K(prob, q, v_radius=v_radius, v_step=v_step).value
    H = hamiltonian_H(prob, q).value
    return K, H


def _dyadic(rng, size, lo=-1.0, hi=1.0, denom=4):
    return rng.integers(int(lo * denom), int(hi * denom) + 1, size=size) / denom


def random_hamiltonian_instance(rng):
    n = int(rng.integers(1, 3))
    d = int(rng.integers(1, 3))
    K = int(rng.integers(1, 7))
    F = _dyadic(rng, (K, n), -2, 2)
    S = _dyadic(rng, (K, n, d))
    L = _dyadic(rng, K, -2, 2, 2)
    prob = tabular_problem(F, S, L)
    p = _dyadic(rng, n)
    r = float(_dyadic(rng, 1, -2.5, 2.5, 4)[0])
    dr = float(rng.integers(1, 9) / 4)
    return prob, HamiltonianQuery(x=np.zeros(n), r=r, p=p), dr


@dataclass
class SuiteReport:
    counts: dict
    failures: list
    instances: int
    seed: int
    runtime: float
    extras: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures

    def as_dict(self) -> dict:
        return dict(passed=self.passed, instances=self.instances, seed=self.seed,
                    runtime=self.runtime, counts=self.counts, failures=self.failures[:20],
                    extras=self.extras)


def _serialize(prob, q, dr, prop):
    F, S, L = prob.tabulate(q.x[None])
    return dict(property=prop, F=F[0].tolist(), S=S[0].tolist(), L=L[0].tolist(),
                x=q.x.tolist(), r=q.r, p=q.p.tolist(), dr=dr)


def hamiltonian_suite(n_instances: int = 10_000, seed: int = 0, inject_fault: bool = False) -> SuiteReport:
    """Monotonicity in r, set inclusion, K <= H, H <= H_upper and the finite-U gap identities.

    ``inject_fault`` flips the K-versus-H comparison (negative control).
    """
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    names = ["monotone_r_H", "monotone_r_Hupper", "monotone_r_K", "set_inclusion", "H_le_Hupper",
             "K_le_H", "gap_identity_lower", "gap_identity_upper", "infinite_iff_empty", "attained"]
    counts = {k: 0 for k in names}
    failures = []

    def check(ok, prop, prob, q, dr):
        counts[prop] += 1
        if not ok:
            failures.append(_serialize(prob, q, dr, prop))

    for _ in range(n_instances):
        prob, q, dr = random_hamiltonian_instance(rng)
        q2 = HamiltonianQuery(q.x, q.r + dr, q.p)
        H, H2 = hamiltonian_H(prob, q), hamiltonian_H(prob, q2)
        Hu, Hu2 = hamiltonian_H_upper(prob, q), hamiltonian_H_upper(prob, q2)
        step = 1 / 32 if prob.d == 1 else 1 / 4
        Kv, Kv2 = hamiltonian_K(prob, q, v_step=step), hamiltonian_K(prob, q2, v_step=step)
        check(H.value >= H2.value, "monotone_r_H", prob, q, dr)
        check(Hu.value >= Hu2.value, "monotone_r_Hupper", prob, q, dr)
        check(Kv.value >= Kv2.value, "monotone_r_K", prob, q, dr)
        lev = prob.l(q.x[None], prob.U)
        A = {k for k in range(lev.size) if lev[k] <= q.r}
        A2 = {k for k in range(lev.size) if lev[k] <= q.r + dr}
        Astrict = {k for k in range(lev.size) if lev[k] < q.r}
        check(Astrict <= A <= A2, "set_inclusion", prob, q, dr)
        check(H.value <= Hu.value, "H_le_Hupper", prob, q, dr)
        ok = (Kv.value >= H.value) if inject_fault else (Kv.value <= H.value)
        if inject_fault and math.isinf(H.value):
            ok = True
        check(ok, "K_le_H", prob, q, dr)
        gap = level_gap(prob, q.x, q.r)
        eps = 1.0 if gap == POS_INF else gap / 2
        qe = HamiltonianQuery(q.x, q.r + eps, q.p)
        check(hamiltonian_H(prob, qe).value == H.value, "gap_identity_lower", prob, q, dr)
        check(hamiltonian_H_upper(prob, qe).value == H.value, "gap_identity_upper", prob, q, dr)
        check((H.value == POS_INF) == (len(A) == 0) and (Hu.value == POS_INF) == (len(Astrict) == 0),
              "infinite_iff_empty", prob, q, dr)
        if H.control is not None:
            hu = float(hamiltonian_u(prob, q.x, H.control, q.p))
            check(hu == H.value and int(H.control[0]) in A, "attained", prob, q, dr)
    Kg, Hg = gap_instance_values()
    return SuiteReport(counts, failures, n_instances, seed, time.perf_counter() - start,
                       extras=dict(gap_instance=dict(K=Kg, H=Hg, strict=Kg < Hg)))


def problem_suite(n_instances: int = 500, seed: int = 0) -> SuiteReport:
    """Set monotonicity, the Lipschitz set-inclusion surrogate and the sup property of H^u."""
    from .problem import affine_problem
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    counts = {"A_monotone": 0, "A_lipschitz": 0, "Hu_sup": 0, "Hu_equality": 0}
    failures = []
    for _ in range(n_instances):
        q, a, s = rng.uniform(0.1, 2), rng.uniform(-2, 1), rng.uniform(-1, 1)
        prob = affine_problem(a=a, sigma=s, q=q, ru=rng.uniform(0, 1), clip=4.0, u_num=9)
        x, y = rng.uniform(-2, 2, (2, 1))
        r = rng.uniform(-0.5, 4)
        Ax = {tuple(u) for u in admissible_set(prob, x, r)}
        Ax2 = {tuple(u) for u in admissible_set(prob, x, r + abs(rng.normal()))}
        counts["A_monotone"] += 1
        if not Ax <= Ax2:
            failures.append(dict(property="A_monotone", params=prob.params, x=x.tolist(), r=r))
        Ay = {tuple(u) for u in admissible_set(prob, y, r)}
        Ax_l = {tuple(u) for u in admissible_set(prob, x, r + prob.lip_l_x * float(abs(x - y)[0]) + 1e-12)}
        counts["A_lipschitz"] += 1
        if not Ay <= Ax_l:
            failures.append(dict(property="A_lipschitz", params=prob.params, x=x.tolist(), y=y.tolist(), r=r))
        u = prob.U[rng.integers(len(prob.controls))]
        p = rng.uniform(-3, 3, 1)
        hu = float(hamiltonian_u(prob, x, u, p))
        V = np.linspace(-5, 5, 201)[:, None]
        obj = disturbance_objective(prob, x, u, p, V)
        counts["Hu_sup"] += 1
        if np.any(obj > hu + 1e-12):
            failures.append(dict(property="Hu_sup", params=prob.params, x=x.tolist(), p=p.tolist()))
        vstar = worst_disturbance(prob, x, u, p)
        counts["Hu_equality"] += 1
        if abs(float(disturbance_objective(prob, x, u, p, vstar)) - hu) > 1e-12:
            failures.append(dict(property="Hu_equality", params=prob.params, x=x.tolist(), p=p.tolist()))
    return SuiteReport(counts, failures, n_instances, seed, time.perf_counter() - start)


def maxplus_suite(seed: int = 0) -> SuiteReport:
    """Tower identity by enumeration on small dyadic path spaces (exact arithmetic)."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    counts = {"tower": 0}
    failures = []
    for m in range(2, 7):
        for size in range(1, 6):
            if size ** m > 4000:
                continue
            lo = -int(rng.integers(0, size))
            vals = (lo + np.arange(size)) / 4  # contains 0
            space = DiscretePathSpace(np.arange(m + 1) / 4, vals)
            j = int(rng.integers(1, m))
            w1 = rng.integers(-4, 5, j) / 4
            w2 = rng.integers(-4, 5, m) / 4
            Z1 = lambda P, w=w1: P[:, :, 0] @ w  # noqa: E731
            Z2 = lambda P, w=w2: np.max(np.cumsum(P[:, :, 0] * w, axis=1), axis=1)  # noqa: E731
            lhs, rhs = tower_sides(Z1, Z2, space, space.partition[j])
            counts["tower"] += 1
            if lhs != rhs:
                failures.append(dict(property="tower", m=m, values=space.values.tolist(), lhs=lhs, rhs=rhs))
    return SuiteReport(counts, failures, counts["tower"], seed, time.perf_counter() - start)


def property_suite(seed: int = 0, n_instances: int = 10_000, inject_fault: bool = False) -> SuiteReport:
    parts = {"hamiltonian": hamiltonian_suite(n_instances, seed, inject_fault),
             "problem": problem_suite(max(1, n_instances // 20), seed),
             "maxplus": maxplus_suite(seed)}
    counts = {f"{k}.{p}": c for k, rep in parts.items() for p, c in rep.counts.items()}
    failures = [f for rep in parts.values() for f in rep.failures]
    extras = {k: rep.extras for k, rep in parts.items() if rep.extras}
    return SuiteReport(counts, failures, n_instances, seed, sum(r.runtime for r in parts.values()), extras)
