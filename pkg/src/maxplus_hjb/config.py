"""Experiment configuration: flat key/value sections read with configparser.

Every field has a default; :meth:`ExperimentConfig.echo` materializes all of them,
so the echoed file fully determines a run.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .problem import ControlProblem, ProblemError, affine_problem, canonical_problem, constant_cost_problem

FAMILIES = ("canonical", "affine", "constant", "merton", "quadratic-example")


class ConfigError(ValueError):
    def __init__(self, problems: list):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _floats(text: str) -> list:
    return [float(t) for t in str(text).replace(";", ",").split(",") if t.strip()]


@dataclass
class ProblemSection:
    family: str = "canonical"
    a: float = -1.0
    b: float = 1.0
    c: float = 0.0
    sigma: float = 0.5
    q: float = 1.0
    ru: float = 0.0
    clip: float = 4.0
    u_lower: float = -1.0
    u_upper: float = 1.0
    u_num: int = 21
    lower: float = -2.0
    upper: float = 2.0
    cost: float = 1.0          # constant family: l = cost


@dataclass
class GridSection:
    num: int = 201
    nt: int = 200
    t0: float = 0.0
    T: float = 1.0
    boundary: str = "clamp"


@dataclass
class SolverSection:
    method: str = "sl"         # sl | fd
    form: str = "qvi"          # qvi | H (fd only)
    v_max: float = 4.0


@dataclass
class SweepSection:
    thetas: str = "2,5,10,20,50"
    horizons: str = "0.5,1,2,4,8"
    risk_nt: int = 1000
    target: float = 0.15


@dataclass
class PolicySection:
    kind: str = "argmin"       # argmin | constant
    u0: float = 0.0
    samples: int = 10
    x0: float = 0.0
    t0: float = 0.0
    T: float = 1.0
    dt: float = 0.02
    coarsen: int = 5
    restarts: int = 3


@dataclass
class MertonSection:
    r: float = 0.05
    mu: float = 0.1
    sigma_bar: float = 0.2
    T: float = 1.0
    C: float = 1.0
    n_k: int = 11
    n_c: int = 41
    thetas: str = "1,10,100,1000"
    t: float = 0.0
    x: float = 1.0


@dataclass
class HinftySection:
    c: float = 1.0
    C1: float = 1.0
    C2: float = 1.0
    a_norm: float = 0.1
    mu: float = 0.05
    n_sims: int = 50
    T: float = 5.0
    K: float = 1.0             # storage W = K x^2 for hinfty-sweep


@dataclass
class RunSection:
    seed: int = 0
    tol: float = 0.05
    threads: int = 1
    out: str = "runs/out"
    inject_fault: bool = False
    instances: int = 10000


SECTIONS = {"problem": ProblemSection, "grid": GridSection, "solver": SolverSection,
            "sweep": SweepSection, "policy": PolicySection, "merton": MertonSection,
            "hinfty": HinftySection, "run": RunSection}


@dataclass
class ExperimentConfig:
    problem: ProblemSection = field(default_factory=ProblemSection)
    grid: GridSection = field(default_factory=GridSection)
    solver: SolverSection = field(default_factory=SolverSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    policy: PolicySection = field(default_factory=PolicySection)
    merton: MertonSection = field(default_factory=MertonSection)
    hinfty: HinftySection = field(default_factory=HinftySection)
    run: RunSection = field(default_factory=RunSection)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        parser = configparser.ConfigParser()
        parser.optionxform = str  # keep key case (T, C1, ...)
        if not parser.read(path):
            raise ConfigError([f"cannot read config file {path}"])
        return cls.from_parser(parser)

    @classmethod
    def from_string(cls, text: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser()
        parser.optionxform = str
        parser.read_string(text)
        return cls.from_parser(parser)

    @classmethod
    def from_parser(cls, parser: configparser.ConfigParser) -> "ExperimentConfig":
        cfg = cls()
        errors = []
        for name in parser.sections():
            if name not in SECTIONS:
                errors.append(f"[{name}]: unknown section")
                continue
            sec = getattr(cfg, name)
            types = {f.name: f.type for f in fields(sec)}
            for key, raw in parser.items(name):
                if key not in types:
                    errors.append(f"[{name}] {key}: unknown key")
                    continue
                try:
                    setattr(sec, key, _convert(raw, types[key]))
                except ValueError as exc:
                    errors.append(f"[{name}] {key}: {exc}")
        if errors:
            raise ConfigError(errors)
        return cfg

    def echo(self) -> str:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        for name in SECTIONS:
            parser[name] = {k: str(v) for k, v in asdict(getattr(self, name)).items()}
        lines = []
        for name in SECTIONS:
            lines.append(f"[{name}]")
            lines += [f"{k} = {v}" for k, v in parser[name].items()]
            lines.append("")
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in SECTIONS}

    def validate(self) -> None:
        """Field-level checks; raises ConfigError listing every problem found."""
        e = []
        p, g, s, r = self.problem, self.grid, self.solver, self.run
        if p.family not in FAMILIES:
            e.append(f"[problem] family: must be one of {FAMILIES}")
        if p.upper <= p.lower:
            e.append("[problem] upper: must exceed lower")
        if p.u_num < 1:
            e.append("[problem] u_num: control set U is empty")
        if g.num < 3:
            e.append("[grid] num: need at least 3 points")
        if g.nt < 1:
            e.append("[grid] nt: need at least 1 step")
        if g.T <= g.t0:
            e.append("[grid] T: must exceed t0")
        if g.boundary not in ("clamp", "strict"):
            e.append("[grid] boundary: clamp or strict")
        if s.method not in ("sl", "fd"):
            e.append("[solver] method: sl or fd")
        if s.form not in ("qvi", "H"):
            e.append("[solver] form: qvi or H")
        for key in ("thetas", "horizons"):
            try:
                vals = _floats(getattr(self.sweep, key))
                if not vals or any(v <= 0 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
                    e.append(f"[sweep] {key}: need positive increasing values")
            except ValueError:
                e.append(f"[sweep] {key}: not a comma-separated list of numbers")
        if self.policy.kind not in ("argmin", "constant"):
            e.append("[policy] kind: argmin or constant")
        if r.threads < 1:
            e.append("[run] threads: must be >= 1")
        if r.tol <= 0:
            e.append("[run] tol: must be positive")
        if not e and p.family in ("canonical", "affine", "constant"):
            try:
                self.build_problem()
            except ProblemError as exc:
                e.append(f"[problem] {exc}")
        if e:
            raise ConfigError(e)

    def build_problem(self) -> ControlProblem:
        p = self.problem
        if p.family == "canonical":
            return canonical_problem()
        if p.family == "affine":
            return affine_problem(a=p.a, b=p.b, c=p.c, sigma=p.sigma, q=p.q, ru=p.ru, clip=p.clip,
                                  u_lower=p.u_lower, u_upper=p.u_upper, u_num=p.u_num,
                                  lower=p.lower, upper=p.upper)
        if p.family == "constant":
            return constant_cost_problem(p.cost, sigma=p.sigma, lower=p.lower, upper=p.upper)
        raise ConfigError([f"[problem] family {p.family!r} has no generic builder"])

    @property
    def thetas(self) -> list:
        return _floats(self.sweep.thetas)

    @property
    def horizons(self) -> list:
        return _floats(self.sweep.horizons)


def _convert(raw: str, typ):
    name = typ if isinstance(typ, str) else getattr(typ, "__name__", str(typ))
    if name == "bool":
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if name == "int":
        return int(raw)
    if name == "float":
        return float(raw)
    return raw.strip()


def load_config(path=None) -> ExperimentConfig:
    return ExperimentConfig() if path is None else ExperimentConfig.from_file(Path(path))
