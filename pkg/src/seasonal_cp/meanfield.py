"""Seasonal logistic flows, equilibrium curves and the mean-field ODE.

The single-species logistic flow ``du/dt = beta*u*(1-u) - delta*u`` is a
Mobius map in ``u0``::

    rho(u0, t) = a*u0 / (1 + c*u0),   a = exp(r t),   c = beta*(exp(r t) - 1)/r

with ``r = beta - delta``.  Everything below is written in terms of ``a`` and
``c`` (in log space where they overflow), which covers the ``beta = 0`` and
``r = 0`` branches without special-casing the carrying capacity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .lattice import SeasonalParams

__all__ = [
    "LogisticFlow",
    "EquilibriumCurve",
    "MeanFieldTrajectory",
    "rho",
    "rho_integral",
    "season_fixed_point",
    "iterate_fixed_point",
    "equilibrium_curve",
    "equilibrium_curve_eval",
    "ode_solve",
    "single_species_survives",
]


def _check_domain(u0: float, t: float, beta: float, delta: float) -> None:
    if not 0.0 <= u0 <= 1.0:
        raise ValueError(f"density must lie in [0, 1], got {u0}")
    if not (t >= 0 and math.isfinite(t)):
        raise ValueError(f"time must be finite and nonnegative, got {t}")
    if not (beta >= 0 and math.isfinite(beta)):
        raise ValueError(f"birth rate must be finite and nonnegative, got {beta}")
    if not (delta > 0 and math.isfinite(delta)):
        raise ValueError(f"death rate must be finite and positive, got {delta}")


def _log_growth_weight(r: float, t: float) -> float:
    """log of (exp(r t) - 1) / r, which equals t at r = 0."""
    if t == 0:
        return -math.inf
    if r == 0:
        return math.log(t)
    if r > 0:
        return r * t + math.log(-math.expm1(-r * t)) - math.log(r)
    return math.log(-math.expm1(r * t)) - math.log(-r)


def rho(u0: float, t: float, beta: float, delta: float) -> float:
    """Density at time ``t`` of the logistic flow started from ``u0``."""
    _check_domain(u0, t, beta, delta)
    if u0 == 0 or t == 0:
        return float(u0)
    if beta == 0:
        return u0 * math.exp(-delta * t)
    r = beta - delta
    if r == 0:
        return u0 / (1.0 + beta * u0 * t)
    if r > 0:
        # divide through by exp(r t) so nothing overflows
        h = -math.expm1(-r * t) / r
        return u0 / (math.exp(-r * t) + beta * u0 * h)
    return u0 * math.exp(r * t) / (1.0 + beta * u0 * math.expm1(r * t) / r)


def rho_integral(u0: float, T: float, beta: float, delta: float) -> float:
    """Exact value of the integral of ``rho(u0, t)`` over ``t`` in ``[0, T]``."""
    _check_domain(u0, T, beta, delta)
    if u0 == 0 or T == 0:
        return 0.0
    if beta == 0:
        return u0 * (-math.expm1(-delta * T)) / delta
    log_x = math.log(beta * u0) + _log_growth_weight(beta - delta, T)
    if log_x > 30.0:
        return (log_x + math.log1p(math.exp(-log_x))) / beta
    return math.log1p(math.exp(log_x)) / beta


@dataclass(frozen=True)
class LogisticFlow:
    beta: float
    delta: float

    @property
    def r(self) -> float:
        return self.beta - self.delta

    @property
    def K(self) -> float:
        """Carrying capacity; -inf when beta = 0."""
        return 1.0 - self.delta / self.beta if self.beta > 0 else -math.inf

    def __call__(self, u0: float, t: float) -> float:
        return rho(u0, t, self.beta, self.delta)

    def integral(self, u0: float, T: float) -> float:
        return rho_integral(u0, T, self.beta, self.delta)

    def log_slope(self, t: float) -> float:
        return self.r * t

    def log_pole(self, t: float) -> float:
        """log of the Mobius coefficient c(t); -inf when beta = 0."""
        if self.beta == 0:
            return -math.inf
        return math.log(self.beta) + _log_growth_weight(self.r, t)

    def takeoff_time(self, u0: float) -> float | None:
        """Rough time at which a growing flow from small ``u0`` nears K."""
        if self.r > 0 and 0 < u0 < self.K:
            return math.log(self.K / u0) / self.r
        return None


def _closed_form_fixed_point(flow1: LogisticFlow, flow2: LogisticFlow, D: float) -> float:
    s = (flow1.r + flow2.r) * D
    if s <= 0:
        return 0.0
    # composed map u -> A u / (1 + C u) with A = exp(s), C = c2*a1 + c1
    log_num = s + math.log(-math.expm1(-s))
    log_c = np.logaddexp(flow2.log_pole(D) + flow1.log_slope(D), flow1.log_pole(D))
    return float(min(1.0, math.exp(log_num - log_c)))


def iterate_fixed_point(
    flow1: LogisticFlow, flow2: LogisticFlow, D: float, tol: float = 1e-12, max_iter: int = 10**6
) -> tuple[float, int]:
    """Iterate the two-season map from u = 1; returns (fixed point, iterations).

    The iterates decrease monotonically, and the error after a step is at
    most ``step * q / (1 - q)`` with ``q`` the observed contraction ratio, so
    we stop once that bound drops below ``tol``.
    """
    u = 1.0
    prev_step = math.inf
    for k in range(1, max_iter + 1):
        nxt = flow2(flow1(u, D), D)
        step = abs(u - nxt)
        u = nxt
        if step == 0.0:
            return u, k
        q = min(step / prev_step, 1.0 - 1e-15) if prev_step < math.inf else 0.5
        if step * q / (1.0 - q) < tol and step < tol:
            return u, k
        prev_step = step
    raise RuntimeError(f"season map iteration did not converge in {max_iter} steps")


def season_fixed_point(
    flow1: LogisticFlow, flow2: LogisticFlow, D: float, check: bool = True
) -> tuple[float, float]:
    """Season-start densities ``(p1, p2)`` of the periodic single-species orbit.

    ``p1`` is the density at the start of season 1 and ``p2 = rho(p1, D)`` under
    the season-1 flow.  Returns ``(0, 0)`` when the mean birth rate does not
    exceed the mean death rate.  With ``check`` the closed form is compared
    against monotone iteration and a disagreement above 1e-10 raises.
    """
    if not D > 0:
        raise ValueError(f"season length must be positive, got {D}")
    if flow1.r + flow2.r <= 0:
        return 0.0, 0.0
    if flow1 == flow2:
        return flow1.K, flow1.K
    p1 = _closed_form_fixed_point(flow1, flow2, D)
    if check:
        p_iter, _ = iterate_fixed_point(flow1, flow2, D)
        if abs(p_iter - p1) > 1e-10:
            raise RuntimeError(f"fixed point mismatch: closed form {p1!r}, iteration {p_iter!r}")
    return p1, flow1(p1, D)


def single_species_survives(params: SeasonalParams, i: int) -> bool:
    return params.mean_birth(i) > params.mean_death(i)


@dataclass(frozen=True)
class EquilibriumCurve:
    """Periodic single-species orbit anchored at its season-start densities."""

    species: int
    p1: float
    p2: float
    flow1: LogisticFlow
    flow2: LogisticFlow
    D: float

    @property
    def period(self) -> float:
        return 2.0 * self.D

    @property
    def is_zero(self) -> bool:
        return self.p1 == 0.0 and self.p2 == 0.0

    def __call__(self, t):
        if np.ndim(t) == 0:
            return equilibrium_curve_eval(self, float(t))
        return np.array([equilibrium_curve_eval(self, float(s)) for s in np.ravel(t)]).reshape(np.shape(t))

    def season_integral(self, j: int) -> float:
        """Integral of the curve over one whole season ``j``."""
        if j == 1:
            return self.flow1.integral(self.p1, self.D)
        if j == 2:
            return self.flow2.integral(self.p2, self.D)
        raise ValueError(f"season must be 1 or 2, got {j}")

    def breakpoints(self, j: int) -> list[float]:
        """Points inside season ``j`` where the curve turns sharply (quadrature hints)."""
        flow, p = (self.flow1, self.p1) if j == 1 else (self.flow2, self.p2)
        tk = flow.takeoff_time(p)
        if tk is None or not 0 < tk < self.D:
            return []
        return [tk]


def equilibrium_curve(params: SeasonalParams, i: int, check: bool = True) -> EquilibriumCurve:
    f1 = LogisticFlow(params.b(i, 1), params.d(i, 1))
    f2 = LogisticFlow(params.b(i, 2), params.d(i, 2))
    p1, p2 = season_fixed_point(f1, f2, params.D, check=check)
    return EquilibriumCurve(i, p1, p2, f1, f2, params.D)


def equilibrium_curve_eval(curve: EquilibriumCurve, t: float) -> float:
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    theta = math.fmod(t, curve.period)
    if theta < curve.D:
        return curve.flow1(curve.p1, theta)
    return curve.flow2(curve.p2, theta - curve.D)


@numba.njit(cache=True)
def _rhs(u, beta, delta):
    free = 1.0 - u.sum()
    return beta * u * free - delta * u


@numba.njit(cache=True)
def _rk4(u, beta, delta, h, n):
    for _ in range(n):
        k1 = _rhs(u, beta, delta)
        k2 = _rhs(u + 0.5 * h * k1, beta, delta)
        k3 = _rhs(u + 0.5 * h * k2, beta, delta)
        k4 = _rhs(u + h * k3, beta, delta)
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return u


@dataclass
class MeanFieldTrajectory:
    times: np.ndarray
    u: np.ndarray

    @property
    def S(self) -> int:
        return self.u.shape[1]

    def empty(self) -> np.ndarray:
        return 1.0 - self.u.sum(axis=1)


def max_step_for(params: SeasonalParams, season: int) -> float:
    """Largest RK4 step used inside ``season``: min(1e-2, 0.1/|r|, 0.4/(beta+delta))."""
    b = params.beta_array[:, season - 1]
    d = params.delta_array[:, season - 1]
    h = 1e-2
    r = float(np.max(np.abs(b - d)))
    if r > 0:
        h = min(h, 0.1 / r)
    lam = float(np.max(b + d))
    if lam > 0:
        h = min(h, 0.4 / lam)
    return h


def ode_solve(
    params: SeasonalParams,
    u0: Sequence[float],
    t_end: float,
    dt: float,
    max_step: float | None = None,
) -> MeanFieldTrajectory:
    """Integrate the S-species mean-field system with fixed-step RK4.

    Output is sampled at multiples of ``dt``; season boundaries are always
    landed on exactly.  The internal step inside each season is the smaller
    of ``max_step`` and the stiffness bound from :func:`max_step_for`.
    """
    u = np.array(u0, dtype=np.float64)
    if u.shape != (params.S,):
        raise ValueError(f"need {params.S} initial densities, got {u.shape}")
    if np.any(u < 0) or u.sum() > 1.0 + 1e-12:
        raise ValueError("initial densities must be nonnegative with sum <= 1")
    if not dt > 0:
        raise ValueError(f"output step must be positive, got {dt}")
    if not t_end >= 0:
        raise ValueError(f"t_end must be nonnegative, got {t_end}")
    D = params.D
    beta = params.beta_array
    delta = params.delta_array
    hmax = [max_step_for(params, 1), max_step_for(params, 2)]
    if max_step is not None:
        hmax = [min(h, max_step) for h in hmax]

    n_out = int(math.floor(t_end / dt + 1e-9))
    out_times = dt * np.arange(n_out + 1)
    n_bound = int(math.floor(t_end / D + 1e-9))
    bounds = D * np.arange(1, n_bound + 1)
    marks = np.union1d(out_times, bounds)
    marks = marks[marks <= t_end * (1 + 1e-12)]
    keep_out = np.isin(marks, out_times)

    traj = np.empty((n_out + 1, params.S))
    traj[0] = u
    k_out = 1
    for a, b, is_out in zip(marks[:-1], marks[1:], keep_out[1:]):
        span = b - a
        mid = 0.5 * (a + b)
        j = 0 if math.fmod(mid, 2 * D) < D else 1
        n = max(1, math.ceil(span / hmax[j] - 1e-9))
        u = _rk4(u, beta[:, j].copy(), delta[:, j].copy(), span / n, n)
        if np.any(u < -1e-8) or u.sum() > 1.0 + 1e-8:
            raise ArithmeticError(f"mean-field state left the invariant region at t={b}: {u}")
        if is_out:
            traj[k_out] = u
            k_out += 1
    return MeanFieldTrajectory(out_times, traj)
