#!/usr/bin/env python3
"""Grid-refinement tables for the flagship and canonical problems (CSV to stdout or --out)."""

import argparse
import sys

import numpy as np

from maxplus_hjb.export import write_csv
from maxplus_hjb.grid import Grid
from maxplus_hjb.merton import MertonParams, modified_merton_problem
from maxplus_hjb.problem import canonical_problem
from maxplus_hjb.solver import solve_pde_fd, solve_qvi_semilagrangian


def flagship_rows(levels):
    params = MertonParams()
    for num, nt, n_c in levels:
        mm = modified_merton_problem(params, C=1.0, n_c=n_c)
        g = Grid.for_problem(mm.problem, num, nt=nt)
        V = solve_qvi_semilagrangian(mm.problem, g)
        m = g.inner_mask()
        err = max(float(np.max(np.abs(V.values[k] - mm.oracle(t, g.points[:, 0]))[m]))
                  for k, t in enumerate(g.times))
        yield ["merton-sl", num, nt, err, V.info["runtime"]]


def canonical_rows(levels):
    p = canonical_problem()
    for num, nt in levels:
        g = Grid.for_problem(p, num, nt=nt)
        m = g.inner_mask()
        exact = g.points[:, 0] ** 2
        for name, V in (("canonical-sl", solve_qvi_semilagrangian(p, g)),
                        ("canonical-fd-qvi", solve_pde_fd(p, g, "qvi")),
                        ("canonical-fd-H", solve_pde_fd(p, g, "H"))):
            err = float(np.max(np.abs(V.values[:, m] - exact[m])))
            yield [name, num, nt, err, V.info["runtime"]]


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=None)
    ap.add_argument("--quick", action="store_true", help="skip the 401x400 flagship level")
    a = ap.parse_args()
    levels = [(101, 100, 21), (201, 200, 41)] + ([] if a.quick else [(401, 400, 81)])
    rows = list(flagship_rows(levels)) + list(canonical_rows([(51, 100), (101, 200), (201, 400)]))
    header = ["case", "num", "nt", "inner_sup_error", "runtime_s"]
    if a.out:
        write_csv(a.out, header, rows)
    else:
        print(",".join(header))
        for r in rows:
            print(",".join(str(v) for v in r))
    sys.exit(0)
