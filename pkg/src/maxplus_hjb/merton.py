"""Closed-form Merton investment-consumption oracle and its totally risk-averse limit.

Finite θ:   Ψ_θ(t,x) = h_θ(t)^{1+θ} x^{-θ},
            h_θ(t) = (1+θ)/(ν_θ θ) (1 - exp(-ν_θ θ (T-t)/(1+θ))),
            ν_θ = (μ-r)^2 / (2Σ^2(1+θ)) + r,
            k*_θ = (μ-r)/(Σ^2(1+θ)),  c*_θ(s) = 1/h_θ(s).
Limit:      V(t,x) = -log x + B(t),  B(t) = log[(1 - exp(-ν(T-t)))/ν],
            ν = (μ-r)^2/(2σ̄^2) + r,  k* = (μ-r)/σ̄^2,  c*(s) = exp(-B(s)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .problem import ControlProblem, ControlSet


class MertonDomainError(ValueError):
    pass


@dataclass(frozen=True)
class MertonParams:
    r: float = 0.05
    mu: float = 0.1
    Sigma: float = 0.2
    sigma_bar: float = 0.2
    T: float = 1.0
    theta: float = 1.0

    def __post_init__(self):
        if self.Sigma <= 0 or self.sigma_bar <= 0 or self.T <= 0 or self.theta <= 0:
            raise ValueError("Sigma, sigma_bar, T and theta must be positive")

    @property
    def nu(self) -> float:
        return (self.mu - self.r) ** 2 / (2 * self.sigma_bar ** 2) + self.r

    @property
    def nu_theta(self) -> float:
        return (self.mu - self.r) ** 2 / (2 * self.Sigma ** 2 * (1 + self.theta)) + self.r

    @property
    def k_star(self) -> float:
        return (self.mu - self.r) / self.sigma_bar ** 2

    @property
    def k_star_theta(self) -> float:
        return (self.mu - self.r) / (self.Sigma ** 2 * (1 + self.theta))


def _check_t(params: MertonParams, t) -> np.ndarray:
    t = np.asarray(t, float)
    if np.any(t >= params.T):
        raise MertonDomainError("B(T) = -inf: need t < T")
    return t


def h_theta(params: MertonParams, t) -> np.ndarray:
    t = np.asarray(t, float)
    a = params.nu_theta * params.theta / (1 + params.theta)
    return -np.expm1(-a * (params.T - t)) / a


@dataclass(frozen=True)
class FiniteThetaValue:
    h: float
    nu: float
    psi: float
    v_theta: float


def merton_value_finite(params: MertonParams, t: float, x: float) -> FiniteThetaValue:
    if x <= 0:
        raise MertonDomainError("wealth must be positive")
    _check_t(params, t)
    h = float(h_theta(params, t))
    th = params.theta
    log_psi = (1 + th) * math.log(h) - th * math.log(x)
    return FiniteThetaValue(h=h, nu=params.nu_theta, psi=math.exp(log_psi), v_theta=log_psi / th)


def merton_optimal_controls_finite(params: MertonParams, s: float) -> tuple[float, float]:
    _check_t(params, s)
    return params.k_star_theta, 1.0 / float(h_theta(params, s))


def B(params: MertonParams, t) -> np.ndarray:
    t = _check_t(params, t)
    nu = params.nu
    return np.log(-np.expm1(-nu * (params.T - t)) / nu)


def B_dot(params: MertonParams, t) -> np.ndarray:
    """dB/dt = -ν e^{-ν(T-t)} / (1 - e^{-ν(T-t)})."""
    t = _check_t(params, t)
    nu = params.nu
    e = np.exp(-nu * (params.T - t))
    return -nu * e / (-np.expm1(-nu * (params.T - t)))


def c_star(params: MertonParams, t) -> np.ndarray:
    return np.exp(-B(params, t))


def merton_limit_value(params: MertonParams, t: float, x: float) -> float:
    if x <= 0:
        raise MertonDomainError("wealth must be positive")
    return float(-math.log(x) + B(params, t))


@dataclass
class LimitConsistencyReport:
    thetas: list
    distances: list
    points: list
    passed: bool
    decreasing: bool


def sigma_schedule(sigma_bar: float) -> Callable[[float], float]:
    """Σ(θ) = σ̄/√θ, so that θ Σ(θ)^2 = σ̄^2 exactly."""
    return lambda theta: sigma_bar / math.sqrt(theta)


def merton_limit_consistency(params: MertonParams, thetas: Sequence[float],
                             schedule: Callable[[float], float] | None = None,
                             points: Sequence[tuple] = ((0.0, 1.0),), tol: float | None = None
                             ) -> LimitConsistencyReport:
    schedule = schedule or sigma_schedule(params.sigma_bar)
    dists = []
    for th in thetas:
        p = replace(params, theta=float(th), Sigma=float(schedule(th)))
        d = max(abs(merton_value_finite(p, t, x).v_theta - merton_limit_value(params, t, x))
                for t, x in points)
        dists.append(d)
    decreasing = all(b < a for a, b in zip(dists, dists[1:]))
    passed = decreasing and (tol is None or dists[-1] <= tol)
    return LimitConsistencyReport(list(thetas), dists, list(points), passed, decreasing)


def qvi_identity_check(params: MertonParams, t: float) -> tuple[float, float]:
    """Residuals of -log c*(t) - B(t) = 0 and dB/dt + c*(t) - ν = 0."""
    b = float(B(params, t))
    c = math.exp(-b)
    return -math.log(c) - b, float(B_dot(params, t)) + c - params.nu


def min_k_hamiltonian(params: MertonParams, c: float, k_grid=None) -> tuple[float, float]:
    """min over k of H^u(x, V_x) at V = -log x + B; returns (value, argmin k)."""
    if k_grid is None:
        k_grid = np.linspace(0.0, 2 * params.k_star, 2001)
    k = np.asarray(k_grid, float)
    # x V_x = -1
    H = -(params.r - c) - (params.mu - params.r) * k + 0.5 * params.sigma_bar ** 2 * k ** 2
    j = int(np.argmin(H))
    return float(H[j]), float(k[j])


# ---------------------------------------------------------------------------
# modified problem in log-wealth


def btilde_closed_form(params: MertonParams, C: float, t) -> np.ndarray:
    """exp(B̃) = 1/ν + (1/C - 1/ν) e^{-ν(T-t)} solves dB̃/dt = ν - e^{-B̃}, B̃(T) = -log C."""
    nu = params.nu
    t = np.asarray(t, float)
    return np.log(1 / nu + (1 / C - 1 / nu) * np.exp(-nu * (params.T - t)))


def btilde_rk4(params: MertonParams, C: float, t0: float = 0.0, steps: int = 10_000):
    """Integrate dB̃/dt = ν - c̃*, c̃* = min(C, e^{-B̃}), backward from B̃(T) = -log C.

    Returns (times, B̃ values) on a uniform grid from t0 to T.
    """
    nu = params.nu

    def rhs(b):
        return nu - min(C, math.exp(-b))

    ts = np.linspace(t0, params.T, steps + 1)
    bs = np.empty_like(ts)
    bs[-1] = -math.log(C)
    dt = -(params.T - t0) / steps
    b = bs[-1]
    for i in range(steps, 0, -1):
        k1 = rhs(b)
        k2 = rhs(b + 0.5 * dt * k1)
        k3 = rhs(b + 0.5 * dt * k2)
        k4 = rhs(b + dt * k3)
        b = b + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6
        bs[i - 1] = b
    return ts, bs


@dataclass
class ModifiedMerton:
    problem: ControlProblem
    oracle: Callable[[float, np.ndarray], np.ndarray]
    btilde: Callable[[float], float]
    ctilde: Callable[[float], float]
    params: MertonParams
    C: float
    extras: dict = field(default_factory=dict)


def modified_merton_problem(params: MertonParams, C: float = 1.0, n_k: int = 11, n_c: int = 41,
                            c_min: float = 0.05, y_lower: float = -2.0, y_upper: float = 2.0,
                            ito_correction: bool = False, rk4_steps: int = 10_000) -> ModifiedMerton:
    """State y = log x, controls (k, c) in [0, 2k*] x [c_min, C].

    Drift r + (μ-r)k - c (the limit ODE written in log coordinates; with
    ``ito_correction`` the extra -σ̄^2 k^2 / 2 is included), sigma = σ̄ k,
    l = -y - log c.
    """
    nu = params.nu
    if C <= nu:
        raise ValueError(f"consumption cap C={C} must exceed nu={nu:.6g}")
    r, mu, sb = params.r, params.mu, params.sigma_bar
    k_hi = 2 * params.k_star
    ks = np.linspace(0.0, k_hi, n_k)
    cs = np.linspace(c_min, C, n_c)
    K, Cc = np.meshgrid(ks, cs, indexing="ij")
    controls = ControlSet(np.stack([K.ravel(), Cc.ravel()], -1))
    corr = 0.5 * sb ** 2 if ito_correction else 0.0

    def f(y, u):
        k = u[..., 0]
        c = u[..., 1]
        out = r + (mu - r) * k - c - corr * k * k
        return np.broadcast_to(out, np.broadcast_shapes(np.shape(y)[:-1], np.shape(u)[:-1]))[..., None]

    def sigma(y, u):
        k = u[..., 0]
        out = sb * k
        return np.broadcast_to(out, np.broadcast_shapes(np.shape(y)[:-1], np.shape(u)[:-1]))[..., None, None]

    def l(y, u):
        return -y[..., 0] - np.log(u[..., 1])

    problem = ControlProblem(n=1, d=1, f=f, sigma=sigma, l=l, controls=controls,
                             lower=[y_lower], upper=[y_upper], lip_l_x=1.0, name="merton-modified",
                             params=dict(r=r, mu=mu, sigma_bar=sb, C=C, T=params.T))
    ts, bs = btilde_rk4(params, C, 0.0 if params.T > 0 else 0.0, rk4_steps)

    def btilde(t):
        return float(np.interp(t, ts, bs))

    def ctilde(t):
        return float(min(C, math.exp(-btilde(t))))

    def oracle(t, y):
        return -np.asarray(y, float) + btilde(t)

    return ModifiedMerton(problem, oracle, btilde, ctilde, params, C, dict(ks=ks, cs=cs))


# ---------------------------------------------------------------------------
# policy comparison along time-only controls


@dataclass
class PolicyComparison:
    B_t: float
    values: dict
    lower_bound_ok: dict
    c_delta_value: float | None
    c_delta_bound: float | None
    c_delta_ok: bool | None
    c_delta_tight_bound: float | None = None
    c_delta_tight_ok: bool | None = None

    @property
    def passed(self) -> bool:
        ok = all(self.lower_bound_ok.values())
        return ok and (self.c_delta_ok is not False)


def j_tilde(params: MertonParams, c: Callable, t0: float, t_end: float | None = None,
            n: int = 200_000, breakpoints: Sequence[float] = ()) -> float:
    """max over s of ∫_t^s (c - ν) dρ - log c(s), with k = k* substituted.

    Trapezoid quadrature on a uniform grid merged with a geometric cluster
    toward T (c* grows like 1/(T-s)); every breakpoint is a node.
    """
    t_end = params.T - 1e-6 if t_end is None else t_end
    uniform = np.linspace(t0, t_end, n // 2)
    tail = params.T - np.geomspace(params.T - t_end, params.T - t0, n // 2)
    extra = [b for b in breakpoints if t0 < b < t_end]
    s = np.unique(np.concatenate([uniform, tail[(tail >= t0) & (tail <= t_end)], extra, [t0, t_end]]))
    cv = np.asarray(c(s), float)
    # right-continuous: evaluate the integrand from the left on each cell
    left = np.asarray(c(s[:-1]), float)
    right = np.asarray(c(np.nextafter(s[1:], -np.inf)), float)
    cell = 0.5 * (left + right) * np.diff(s)
    integral = np.concatenate([[0.0], np.cumsum(cell)]) - params.nu * (s - t0)
    return float(np.max(integral - np.log(cv)))


def c_delta_policy(params: MertonParams, t0: float, delta: float) -> Callable:
    def c(s):
        s = np.asarray(s, float)
        shifted = np.clip(s - delta, None, params.T - 1e-300)
        out = np.where(s < t0 + delta, 1.0, 0.0)
        body = np.exp(-B(params, np.minimum(shifted, params.T - 1e-12)))
        return np.where(s < t0 + delta, out, body)
    return c


def policy_comparison_analysis(params: MertonParams, policies: dict, t0: float = 0.0,
                               delta: float | None = 0.01, tol: float = 1e-4) -> PolicyComparison:
    """Check J̃(t,k*,c) >= B(t) for each supplied c(·) and the c_δ upper bound.

    On [t, t+δ] the c_δ payoff is (1-ν)(s-t), so J̃(c_δ) = (1-ν)δ + max(B(t), 0).
    ``c_delta_bound`` is |1-ν|δ + max(B(t), 0); the tight |1-ν|δ + B(t) is
    reported separately and holds only when B(t) >= 0.
    """
    b = float(B(params, t0))
    values, ok = {}, {}
    for name, c in policies.items():
        values[name] = j_tilde(params, c, t0)
        ok[name] = values[name] >= b - tol
    cd_val = cd_bound = cd_ok = None
    if delta is not None:
        cd_val = j_tilde(params, c_delta_policy(params, t0, delta), t0, breakpoints=[t0 + delta])
        cd_bound = max(b, 0.0) + abs(1 - params.nu) * delta
        cd_ok = (b - tol <= cd_val <= cd_bound + tol)
        tight = b + abs(1 - params.nu) * delta
        return PolicyComparison(b, values, ok, cd_val, cd_bound, cd_ok, tight, cd_val <= tight + tol)
    return PolicyComparison(b, values, ok, cd_val, cd_bound, cd_ok)
