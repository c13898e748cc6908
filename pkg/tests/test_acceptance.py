"""Acceptance run: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` (or ``python tests/test_acceptance.py``).
"""

import sys
import time

import numpy as np
import pytest

from conftest import const_sigma, make_problem, record_acceptance, zero_drift
from maxplus_hjb.grid import Grid
from maxplus_hjb.hinfty import check_dissipation_certificate, quadratic_example_certificate, simulate_dissipation
from maxplus_hjb.maxplus_core import DiscretePathSpace, tower_sides
from maxplus_hjb.merton import MertonParams, modified_merton_problem, qvi_identity_check
from maxplus_hjb.problem import canonical_problem
from maxplus_hjb.properties import gap_instance_values, hamiltonian_suite
from maxplus_hjb.risk_sensitive import convergence_study, sandwich_check, solve_v_theta
from maxplus_hjb.solver import solve_pde_fd, solve_qvi_semilagrangian
from maxplus_hjb.trajectory import Policy, argmin_policy, maxplus_expectation_policy, verify_lower_bound
from maxplus_hjb.hinfty import v_infinity_sweep

pytestmark = pytest.mark.acceptance


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def finish(number, checks: dict, detail: str, clock: Clock, limit: float):
    checks = dict(checks, runtime=clock.elapsed < limit)
    failed = [k for k, ok in checks.items() if not ok]
    record_acceptance(number, not failed, detail + (f"  failed: {', '.join(failed)}" if failed else ""),
                      clock.elapsed, limit)
    assert not failed, f"criterion {number}: {failed} ({detail})"


def inner_sup(V, oracle, grid):
    m = grid.inner_mask()
    y = grid.points[:, 0]
    return max(float(np.max(np.abs(V.values[k] - oracle(t, y))[m])) for k, t in enumerate(grid.times))


def test_criterion_01_merton_identities():
    rng = np.random.default_rng(0)
    worst1 = worst2 = 0.0
    with Clock() as clk:
        for _ in range(100):
            r = rng.uniform(0.01, 0.1)
            params = MertonParams(r=r, mu=r + rng.uniform(0.0, 0.2), sigma_bar=rng.uniform(0.1, 0.5),
                                  T=rng.uniform(0.5, 3.0))
            r1, r2 = qvi_identity_check(params, rng.uniform(0.0, 0.99) * params.T)
            worst1, worst2 = max(worst1, abs(r1)), max(worst2, abs(r2))
    finish(1, {"log residual": worst1 <= 1e-12, "ode residual": worst2 <= 1e-10},
           f"max |res1| = {worst1:.2e}, max |res2| = {worst2:.2e}", clk, 1.0)


def test_criterion_02_flagship_oracle():
    params = MertonParams(r=0.05, mu=0.1, sigma_bar=0.2, T=1.0)
    with Clock() as clk:
        coarse = modified_merton_problem(params, C=1.0)
        g = Grid.for_problem(coarse.problem, 201, nt=200)
        e1 = inner_sup(solve_qvi_semilagrangian(coarse.problem, g), coarse.oracle, g)
        fine = modified_merton_problem(params, C=1.0, n_c=81)
        g2 = Grid.for_problem(fine.problem, 401, nt=400)
        e2 = inner_sup(solve_qvi_semilagrangian(fine.problem, g2), fine.oracle, g2)
    finish(2, {"coarse error": e1 <= 0.05, "refinement ratio": e2 <= 0.6 * e1},
           f"error 201x200 = {e1:.4g}, 401x400 = {e2:.4g}, ratio = {e2 / e1:.3f}", clk, 60.0)


def test_criterion_03_cross_scheme():
    p = canonical_problem()
    with Clock() as clk:
        g = Grid.for_problem(p, 201, nt=400)
        sl = solve_qvi_semilagrangian(p, g)
        fq = solve_pde_fd(p, g, "qvi")
        fh = solve_pde_fd(p, g, "H")
        m = g.inner_mask()
        d = {name: float(np.max(np.abs(V.values[:, m] - sl.values[:, m]))) for name, V in
             (("fd-qvi", fq), ("fd-H", fh))}
        d["qvi-vs-H"] = float(np.max(np.abs(fq.values[:, m] - fh.values[:, m])))
    finish(3, {k: v <= 0.05 for k, v in d.items()},
           ", ".join(f"{k} = {v:.3g}" for k, v in d.items()), clk, 60.0)


def test_criterion_04_risk_sensitive_limit():
    p = canonical_problem()
    with Clock() as clk:
        g = Grid.for_problem(p, 201, nt=1000)
        ref = solve_qvi_semilagrangian(p, g)
        sweep = convergence_study(p, g, [2.0, 5.0, 10.0, 20.0, 50.0], ref, target=0.15, slack=0.1)
        sand = {th: sandwich_check(p, V, eps=0.1) for th, V in zip(sweep.thetas, sweep.fields) if th >= 20}
    dist = ", ".join(f"{d:.3f}" for d in sweep.distances)
    viol = ", ".join(f"theta={th:g}: lower {r.lower_violation:.3g}, upper {r.upper_violation:.3g}"
                     for th, r in sand.items())
    checks = {"monotone distances": sweep.monotone, "final distance": sweep.final_ok}
    checks.update({f"sandwich theta={th:g}": r.passed for th, r in sand.items()})
    finish(4, checks, f"distances [{dist}]; sandwich {viol}", clk, 300.0)


def test_criterion_05_closed_form_risk_sensitive():
    c = 0.7
    p = make_problem(zero_drift, const_sigma(0.0),
                     lambda x, u: np.full(np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1]), c),
                     np.zeros((1, 1)))
    worst = 0.0
    with Clock() as clk:
        for theta in (0.5, 2.0, 10.0, 50.0):
            g = Grid.for_problem(p, 21, nt=200)
            V = solve_v_theta(p, g, theta)
            exact = c + np.log(g.T - g.times[:-1]) / theta
            worst = max(worst, float(np.max(np.abs(V.values[:-1] - exact[:, None]))))
    finish(5, {"closed form": worst <= 1e-8}, f"max error = {worst:.2e}", clk, 1.0)


def _tower_cases():
    rng = np.random.default_rng(0)
    for m in range(2, 7):
        for size in range(1, 6):
            for zero_at in range(size):
                vals = (np.arange(size) - zero_at) / 4
                part = np.concatenate([[0.0], np.cumsum(rng.integers(1, 3, m) / 4)])
                for j in range(1, m):
                    w1 = rng.integers(-4, 5, j) / 4
                    w2 = rng.integers(-4, 5, m) / 4
                    yield DiscretePathSpace(part, vals), j, w1, w2


def test_criterion_06_toy_expectation_and_tower():
    toy = make_problem(zero_drift, const_sigma(1.0), lambda x, u: x[..., 0] + 0 * u[..., 0],
                       np.zeros((1, 1)), lower=-3.0, upper=3.0)
    mismatches = cases = 0
    with Clock() as clk:
        res = maxplus_expectation_policy(toy, Policy.constant([0.0]), 0.0, [0.0], 1.0)
        for space, j, w1, w2 in _tower_cases():
            Z1 = lambda P, w=w1: P[:, :, 0] @ w  # noqa: E731
            Z2 = lambda P, w=w2: np.max(np.cumsum(P[:, :, 0] * w, axis=1), axis=1)  # noqa: E731
            lhs, rhs = tower_sides(Z1, Z2, space, space.partition[j])
            cases += 1
            mismatches += lhs != rhs
    finish(6, {"toy value": abs(res.value - 0.5) <= 1e-3, "tower exact": mismatches == 0},
           f"E+ = {res.value:.6f}; tower {cases - mismatches}/{cases} exact", clk, 30.0)


def test_criterion_07_verification():
    p = canonical_problem()
    with Clock() as clk:
        g = Grid.for_problem(p, 201, nt=200)
        W = solve_qvi_semilagrangian(p, g)
        inner = g.points[g.inner_mask()]
        samples = inner[np.linspace(0, inner.shape[0] - 1, 10).round().astype(int)]
        opt = verify_lower_bound(p, argmin_policy(p, W), W, samples, tol=0.05, optimal=True)
        farthest = Policy.markov(lambda s, X: np.where(X >= 0, 1.0, -1.0), name="farthest-from-argmin")
        bad = {"u=+1": Policy.constant([1.0]), "u=-0.5": Policy.constant([-0.5]), "farthest": farthest}
        reps = {k: verify_lower_bound(p, pol, W, samples, tol=1e-6) for k, pol in bad.items()}
    gap = max(abs(r.J - r.W) for r in opt.records)
    slack = min(r.J - r.W for rep in reps.values() for r in rep.records)
    checks = {"argmin |J - W|": opt.passed}
    checks.update({f"lower bound {k}": rep.passed for k, rep in reps.items()})
    finish(7, checks, f"argmin max |J - W| = {gap:.3g}; min (J - W) over bad policies = {slack:.3g}",
           clk, 120.0)


def test_criterion_08_hamiltonian_suite():
    with Clock() as clk:
        rep = hamiltonian_suite(10_000, seed=0)
        K, H = gap_instance_values(v_step=0.01, v_radius=2.0)
    finish(8, {"invariants": rep.passed, "gap instance": K == 0.0 and H == 0.5},
           f"{len(rep.failures)} failures over {rep.instances} instances; gap instance K = {K:g} < H = {H:g}",
           clk, 10.0)


def test_criterion_09_hinfty_example():
    with Clock() as clk:
        res = quadratic_example_certificate(c=1.0, C1=1.0, C2=1.0, a_norm=0.1, mu=0.05)
        rng = np.random.default_rng(0)
        x0 = np.column_stack([rng.uniform(-1, 1, 50), np.zeros(50)])
        sims = simulate_dissipation(res.problem, res.W_hat, Policy.constant([0.0]), x0, T=5.0, tol=1e-8)
        infeasible = [quadratic_example_certificate(mu=mu) for mu in (1.0, 1.5)]
    checks = {"feasible": res.feasible, "grid margins": res.certificate.max_margin <= 0.0,
              "adversarial paths": sims.passed and sims.min_margin >= -1e-8,
              "mu >= 1 infeasible": all(not r.feasible and "mu < 1" in r.violated for r in infeasible)}
    finish(9, checks, f"K = {res.K:.4g}, max grid margin = {res.certificate.max_margin:.3g}, "
           f"min path margin = {sims.min_margin:.3g} over {len(sims.records)} paths", clk, 120.0)


def test_criterion_10_horizon_monotonicity():
    p = canonical_problem()
    with Clock() as clk:
        g = Grid.for_problem(p, 201, nt=100, T=0.5)

        def W(X):
            return np.sum(np.asarray(X) ** 2, axis=-1)

        cert = check_dissipation_certificate(p, W, Policy.constant([0.0]), g.points, lambda X: 2 * np.asarray(X))
        sweep = v_infinity_sweep(p, g, [0.5, 1.0, 2.0, 4.0, 8.0], W=W)
    finish(10, {"certificate": cert.passed, "monotone": sweep.monotone, "dominated": bool(sweep.dominated)},
           f"worst decrease = {sweep.worst_decrease:.3g}, worst excess over W = {sweep.worst_excess:.3g}, "
           f"steady residuals {[round(r, 4) for r in sweep.residuals]}", clk, 300.0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
