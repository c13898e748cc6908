"""Command-line runner: ``maxplus-hjb <subcommand> [--config PATH] [--out DIR] ...``.

Exit codes: 0 pass, 1 invalid configuration, 2 solver failure, 3 property failure.
Each run writes its artifacts plus ``manifest.json`` (config echo, versions,
timings, artifact list) into the output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .export import svg_line_plot, write_csv
from .grid import CFLError, DomainEscapeError, Grid
from .hinfty import (check_dissipation_certificate, quadratic_example_certificate,
                     simulate_dissipation, v_infinity_sweep)
from .merton import (B, MertonParams, c_star, merton_limit_consistency, merton_value_finite,
                     modified_merton_problem, qvi_identity_check, sigma_schedule)
from .problem import ProblemError
from .properties import property_suite
from .risk_sensitive import convergence_study
from .solver import solve_pde_fd, solve_qvi_semilagrangian
from .trajectory import (BlowUpError, ExpectationOptions, Policy, argmin_policy,
                         maxplus_expectation_policy, verify_lower_bound)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_PROPERTY = 0, 1, 2, 3
THREADS_ENV = "MAXPLUS_HJB_THREADS"


class Run:
    """Collects artifacts and the summary of one subcommand."""

    def __init__(self, out: Path):
        self.out = out
        self.artifacts: list = []
        self.summary: dict = {}
        self.status = EXIT_OK

    def path(self, name: str) -> Path:
        p = self.out / name
        self.artifacts.append(name)
        return p

    def fail(self, code: int = EXIT_PROPERTY):
        self.status = max(self.status, code)


def _grid(cfg: ExperimentConfig, problem) -> Grid:
    g = cfg.grid
    return Grid.for_problem(problem, g.num, g.t0, g.T, g.nt, g.boundary)


def _field_csv(run: Run, V, name: str):
    pts = V.grid.points
    rows = ([t, *pts[i], V.values[k, i]] for k, t in enumerate(V.times) for i in range(pts.shape[0]))
    write_csv(run.path(name), ["t"] + [f"x{j}" for j in range(V.grid.n)] + ["V"], rows)


def cmd_solve_qvi(cfg, run):
    prob = cfg.build_problem()
    V = solve_qvi_semilagrangian(prob, _grid(cfg, prob), v_max=cfg.solver.v_max)
    _field_csv(run, V, "value_field.csv")
    run.summary.update(scheme=V.info["scheme"], V0_min=float(V.values[0].min()),
                       V0_max=float(V.values[0].max()))


def cmd_solve_pde(cfg, run):
    prob = cfg.build_problem()
    V = solve_pde_fd(prob, _grid(cfg, prob), form=cfg.solver.form, v_max=cfg.solver.v_max)
    _field_csv(run, V, "value_field.csv")
    run.summary.update(scheme=V.info["scheme"], cfl=V.info["cfl"],
                       V0_min=float(V.values[0].min()), V0_max=float(V.values[0].max()))


def _policy_opts(cfg):
    p = cfg.policy
    return ExpectationOptions(dt=p.dt, coarsen=p.coarsen, restarts=p.restarts, seed=cfg.run.seed)


def cmd_eval_policy(cfg, run):
    prob = cfg.build_problem()
    g = _grid(cfg, prob)
    W = solve_qvi_semilagrangian(prob, g, v_max=cfg.solver.v_max)
    optimal = cfg.policy.kind == "argmin"
    pol = argmin_policy(prob, W) if optimal else Policy.constant([cfg.policy.u0])
    inner = g.points[g.inner_mask()]
    idx = np.linspace(0, inner.shape[0] - 1, cfg.policy.samples).round().astype(int)
    tol = cfg.run.tol if optimal else 1e-6
    rep = verify_lower_bound(prob, pol, W, inner[idx], t0=g.t0, tol=tol, optimal=optimal,
                             opts=_policy_opts(cfg), threads=cfg.run.threads)
    write_csv(run.path("verification.csv"), ["x", "J_lower_bound", "W", "ok"],
              ([r.x[0], r.J, r.W, r.ok] for r in rep.records))
    run.summary.update(policy=pol.name, optimal_check=optimal, tol=tol, passed=rep.passed,
                       counterexamples=len(rep.counterexamples))
    if not rep.passed:
        run.fail()


def cmd_maxplus_expect(cfg, run):
    prob = cfg.build_problem()
    p = cfg.policy
    res = maxplus_expectation_policy(prob, Policy.constant([p.u0]), p.t0, [p.x0], p.T, _policy_opts(cfg))
    tr = res.trajectory
    write_csv(run.path("argmax_trajectory.csv"), ["s", "x", "u", "v"],
              ([s, tr.states[j, 0], tr.controls[j, 0], tr.disturbances[min(j, len(tr.disturbances) - 1), 0]]
               for j, s in enumerate(tr.times)))
    write_csv(run.path("starts.csv"), ["start", "initial_payoff", "final_payoff"], res.starts)
    run.summary.update(value=res.value, lower_bound=True)
    print(f"E+ (lower bound) = {res.value:.10g}")


def cmd_risk_limit(cfg, run):
    prob = cfg.build_problem()
    g = _grid(cfg, prob)
    g = Grid(g.lower, g.upper, g.num, g.t0, g.T, cfg.sweep.risk_nt, g.boundary)
    ref = solve_qvi_semilagrangian(prob, g, v_max=cfg.solver.v_max)
    sw = convergence_study(prob, g, cfg.thetas, ref, target=cfg.sweep.target)
    write_csv(run.path("theta_sweep.csv"), ["theta", "sup_distance", "clamp_rate", "runtime"],
              ([r["theta"], r["sup_distance"], r["clamp_rate"], r["runtime"]] for r in sw.rows()))
    svg_line_plot(run.path("theta_sweep.svg"), {"sup distance": (sw.thetas, sw.distances)},
                  title="distance of V_theta to V", xlabel="theta", ylabel="sup distance",
                  logx=True, logy=True)
    run.summary.update(distances=sw.distances, monotone=sw.monotone, final_ok=sw.final_ok)
    if not sw.passed:
        run.fail()


def _merton_params(cfg):
    m = cfg.merton
    return MertonParams(r=m.r, mu=m.mu, Sigma=m.sigma_bar, sigma_bar=m.sigma_bar, T=m.T)


def cmd_merton_oracle(cfg, run):
    params = _merton_params(cfg)
    ts = np.linspace(0.0, params.T, 21)[:-1]
    rows = []
    worst = 0.0
    for t in ts:
        r1, r2 = qvi_identity_check(params, t)
        worst = max(worst, abs(r1), abs(r2))
        rows.append([t, float(B(params, t)), float(c_star(params, t)), r1, r2])
    write_csv(run.path("merton_oracle.csv"), ["t", "B", "c_star", "residual_log", "residual_ode"], rows)
    thetas = [float(v) for v in cfg.merton.thetas.split(",")]
    rep = merton_limit_consistency(params, thetas, points=[(cfg.merton.t, cfg.merton.x)])
    sched = sigma_schedule(params.sigma_bar)
    write_csv(run.path("merton_limit.csv"), ["theta", "Sigma", "V_theta", "distance"],
              ([th, sched(th), merton_value_finite(replace(params, theta=th, Sigma=sched(th)),
                                                   cfg.merton.t, cfg.merton.x).v_theta, d]
               for th, d in zip(thetas, rep.distances)))
    run.summary.update(nu=params.nu, k_star=params.k_star, worst_identity_residual=worst,
                       limit_distances=rep.distances, limit_decreasing=rep.decreasing)
    if worst > 1e-10 or not rep.decreasing:
        run.fail()


def cmd_merton_check(cfg, run):
    params = _merton_params(cfg)
    mm = modified_merton_problem(params, C=cfg.merton.C, n_k=cfg.merton.n_k, n_c=cfg.merton.n_c)
    g = Grid.for_problem(mm.problem, cfg.grid.num, 0.0, params.T, cfg.grid.nt)
    V = solve_qvi_semilagrangian(mm.problem, g, v_max=cfg.solver.v_max)
    m = g.inner_mask()
    y = g.points[:, 0]
    errs = [float(np.max(np.abs(V.values[k] - mm.oracle(t, y))[m])) for k, t in enumerate(g.times)]
    err = max(errs)
    write_csv(run.path("merton_check.csv"), ["t", "inner_sup_error"], zip(g.times, errs))
    run.summary.update(sup_error=err, tol=cfg.run.tol, runtime=V.info["runtime"])
    print(f"oracle-vs-solver inner sup error = {err:.6g}")
    if err > cfg.run.tol:
        run.fail()


def cmd_hinfty_certify(cfg, run):
    h = cfg.hinfty
    res = quadratic_example_certificate(h.c, h.C1, h.C2, h.a_norm, h.mu)
    if not res.feasible:
        text = f"certificate: INFEASIBLE\nviolated at best K={res.best_K:.6g}: {', '.join(res.violated)}"
        run.path("certificate.txt").write_text(text + "\n")
        print(text)
        run.summary.update(feasible=False, violated=res.violated)
        run.fail()
        return
    cert = res.certificate
    cert.to_csv(run.path("margins.csv"))
    rng = np.random.default_rng(cfg.run.seed)
    x0 = np.column_stack([rng.uniform(-1, 1, h.n_sims), np.zeros(h.n_sims)])
    rep = simulate_dissipation(res.problem, res.W_hat, Policy.constant([0.0]), x0, T=h.T)
    text = cert.report() + f"\nadversarial paths: {len(rep.records)}, min margin {rep.min_margin:.3e}"
    run.path("certificate.txt").write_text(text + "\n")
    print(text)
    write_csv(run.path("dissipation.csv"), ["x0", "payoff", "W0", "margin", "ok"],
              ([r.x0[0], r.payoff, r.W0, r.margin, r.ok] for r in rep.records))
    run.summary.update(feasible=True, K=res.K, max_margin=cert.max_margin, min_path_margin=rep.min_margin)
    if not (cert.passed and rep.passed):
        run.fail()


def cmd_hinfty_sweep(cfg, run):
    prob = cfg.build_problem()
    g = _grid(cfg, prob)
    g = Grid(g.lower, g.upper, g.num, 0.0, cfg.horizons[0], max(1, int(round(cfg.horizons[0] / (g.delta)))),
             g.boundary)
    K = cfg.hinfty.K

    def W(X):
        return K * np.sum(np.asarray(X) ** 2, axis=-1)

    def gradW(X):
        return 2 * K * np.asarray(X)

    cert = check_dissipation_certificate(prob, W, Policy.constant([cfg.policy.u0]), _grid(cfg, prob).points, gradW)
    sw = v_infinity_sweep(prob, g, cfg.horizons, method=cfg.solver.method, W=W if cert.passed else None)
    x = g.points[:, 0]
    write_csv(run.path("horizon_sweep.csv"), ["x"] + [f"V_T{T:g}" for T in sw.horizons],
              ([x[i]] + [v[i] for v in sw.values] for i in range(x.size)))
    write_csv(run.path("steady_residual.csv"), ["T", "residual_sup"], zip(sw.horizons, sw.residuals))
    svg_line_plot(run.path("horizon_sweep.svg"),
                  {f"T={T:g}": (x, v) for T, v in zip(sw.horizons, sw.values)},
                  title="V(0,x;T)", xlabel="x", ylabel="V")
    run.summary.update(monotone=sw.monotone, worst_decrease=sw.worst_decrease, certificate=cert.passed,
                       dominated=sw.dominated, worst_excess=sw.worst_excess)
    if not sw.monotone or sw.dominated is False:
        run.fail()


def cmd_property_suite(cfg, run):
    rep = property_suite(seed=cfg.run.seed, n_instances=cfg.run.instances, inject_fault=cfg.run.inject_fault)
    d = rep.as_dict()
    d.pop("runtime")
    run.path("property_report.json").write_text(json.dumps(d, indent=2, sort_keys=True, default=float) + "\n")
    if rep.failures:
        run.path("failures.json").write_text(json.dumps(rep.failures, indent=2, default=float) + "\n")
        run.fail()
    run.summary.update(passed=rep.passed, failures=len(rep.failures))
    print(f"property suite: {'PASS' if rep.passed else 'FAIL'} ({len(rep.failures)} failing instances)")


COMMANDS = {
    "solve-qvi": cmd_solve_qvi,
    "solve-pde": cmd_solve_pde,
    "eval-policy": cmd_eval_policy,
    "maxplus-expect": cmd_maxplus_expect,
    "risk-limit": cmd_risk_limit,
    "merton-oracle": cmd_merton_oracle,
    "merton-check": cmd_merton_check,
    "hinfty-certify": cmd_hinfty_certify,
    "hinfty-sweep": cmd_hinfty_sweep,
    "property-suite": cmd_property_suite,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="maxplus-hjb", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="INI-style config file")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--tol", type=float)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.run.seed = args.seed
        if args.tol is not None:
            cfg.run.tol = args.tol
        threads = args.threads if args.threads is not None else os.environ.get(THREADS_ENV)
        if threads is not None:
            cfg.run.threads = int(threads)
        if args.out:
            cfg.run.out = args.out
        cfg.validate()
    except (ConfigError, ProblemError, ValueError) as exc:
        problems = getattr(exc, "problems", [str(exc)])
        for p in problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    run = Run(out)
    start = time.perf_counter()
    try:
        COMMANDS[args.command](cfg, run)
    except (CFLError, DomainEscapeError, BlowUpError, FloatingPointError) as exc:
        print(f"solver failure in {args.command}: {exc}", file=sys.stderr)
        run.summary["error"] = str(exc)
        run.fail(EXIT_SOLVER)
    manifest = dict(command=args.command, status=run.status, config=cfg.as_dict(),
                    versions=dict(package=__version__, python=platform.python_version(),
                                  numpy=np.__version__),
                    timings=dict(total_seconds=time.perf_counter() - start),
                    artifacts=run.artifacts + ["config.ini"], summary=run.summary)
    (out / "config.ini").write_text(cfg.echo())
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_jsonable) + "\n")
    return run.status


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


if __name__ == "__main__":
    sys.exit(main())
