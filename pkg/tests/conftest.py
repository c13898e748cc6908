import numpy as np
import pytest

from maxplus_hjb.problem import ControlProblem, ControlSet


def make_problem(f, sigma, l, U, n=1, d=1, lower=-2.0, upper=2.0, lip=0.0, name="custom"):
    """Small helper: callables act on the trailing axis of (..., n) / (..., m) arrays."""
    return ControlProblem(n=n, d=d, f=f, sigma=sigma, l=l, controls=ControlSet.from_points(U),
                          lower=[lower] * n, upper=[upper] * n, lip_l_x=lip, name=name)


def const_sigma(value, n=1, d=1):
    mat = np.broadcast_to(np.asarray(value, float), (n, d))

    def sigma(x, u):
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1])
        return np.broadcast_to(mat, shape + (n, d))

    return sigma


def zero_drift(x, u):
    shape = np.broadcast_shapes(np.shape(x), np.shape(u)[:-1] + (np.shape(x)[-1],))
    return np.zeros(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list = []


def record_acceptance(number: int, passed: bool, detail: str, runtime: float, limit: float):
    line = (f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  "
            f"({runtime:.1f}s of {limit:g}s)  {detail}")
    ACCEPTANCE_LINES.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
