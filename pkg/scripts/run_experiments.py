#!/usr/bin/env python3
"""Run every experiment through the CLI and collect the exit codes.

    python scripts/run_experiments.py [--out runs] [--only risk-limit,merton-check] [--seed 0]
"""

import argparse
import json
import sys
import time
from pathlib import Path

from maxplus_hjb.cli import main

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"

EXPERIMENTS = [
    ("solve-qvi", "constant.ini"),
    ("solve-qvi", "canonical.ini"),
    ("solve-pde", "canonical.ini"),
    ("maxplus-expect", None),
    ("merton-oracle", "merton.ini"),
    ("merton-check", "merton.ini"),
    ("eval-policy", "policy.ini"),
    ("risk-limit", "risk_limit.ini"),
    ("hinfty-certify", "hinfty.ini"),
    ("hinfty-sweep", "hinfty.ini"),
    ("property-suite", None),
]


def run(out: Path, only: set, seed: int) -> int:
    summary = []
    for command, cfg in EXPERIMENTS:
        if only and command not in only:
            continue
        tag = command if cfg is None else f"{command}-{Path(cfg).stem}"
        argv = [command, "--out", str(out / tag), "--seed", str(seed)]
        if cfg is not None:
            argv += ["--config", str(CONFIGS / cfg)]
        start = time.perf_counter()
        code = main(argv)
        elapsed = time.perf_counter() - start
        summary.append(dict(run=tag, exit=code, seconds=round(elapsed, 2)))
        print(f"[{'ok' if code == 0 else f'exit {code}'}] {tag} ({elapsed:.1f}s)", flush=True)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return max((s["exit"] for s in summary), default=0)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(ROOT / "runs"))
    ap.add_argument("--only", default="")
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    sys.exit(run(Path(a.out), {s for s in a.only.split(",") if s}, a.seed))
