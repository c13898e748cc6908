"""Max-plus stochastic control: max-plus expectations, QVI solvers for the max-plus
additive cost, risk-sensitive limits, Merton oracles and H-infinity certificates."""

__version__ = "0.1.0"

from .grid import Grid, ValueField  # noqa: E402
from .hamiltonian import HamiltonianQuery, hamiltonian_H, hamiltonian_H_upper, hamiltonian_K  # noqa: E402
from .maxplus_core import DiscretePathSpace, MaxPlusScalar, maxplus_expectation  # noqa: E402
from .problem import ControlProblem, ControlSet, canonical_problem  # noqa: E402
from .solver import solve_pde_fd, solve_qvi_semilagrangian  # noqa: E402

__all__ = [
    "ControlProblem", "ControlSet", "DiscretePathSpace", "Grid", "HamiltonianQuery",
    "MaxPlusScalar", "ValueField", "canonical_problem", "hamiltonian_H", "hamiltonian_H_upper",
    "hamiltonian_K", "maxplus_expectation", "solve_pde_fd", "solve_qvi_semilagrangian",
]
