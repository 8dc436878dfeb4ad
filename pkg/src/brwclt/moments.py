"""Closed-form two-point covariances of the branching random walk.

For a Poisson(theta) start

    Cov(xi_u(x), xi_v(y)) = theta a_{v-u}(x, y)
                            + int_0^u E[sigma(xi_s(0))] a_{u+v-2s}(x, y) ds,

and in the equilibrium started at intensity theta the second term becomes
``(sigma_eq / 2) int_{v-u}^inf a_r(x, y) dr``. For independent branching
``E[sigma(xi_s(0))] = rho theta`` at every time, so both cases reduce to
killed Green functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, MissingSigmaCurve
from .quadrature import integrate
from .rates import BranchingRate
from .walk import Estimate, WalkKernel, green_values, killed_green, transition_probability, transition_values


@dataclass(frozen=True)
class SigmaCurve:
    """Piecewise-linear ``r -> E[sigma(xi_r(0))]``, held constant past the ends."""

    times: tuple
    values: tuple

    def __post_init__(self):
        t = np.asarray(self.times, float)
        if t.size == 0 or t.size != len(self.values):
            raise ConfigError("sigma curve needs matching, nonempty times and values")
        if np.any(np.diff(t) <= 0):
            raise ConfigError("sigma curve times must be strictly increasing")

    @classmethod
    def constant(cls, value: float) -> "SigmaCurve":
        return cls((0.0,), (float(value),))

    def __call__(self, r):
        return np.interp(r, self.times, self.values)


def _sigma_mean(rate: BranchingRate | None, theta: float, sigma_eq: float | None):
    if sigma_eq is not None:
        return float(sigma_eq)
    if rate is not None and rate.kind == "independent":
        return rate.rho * theta
    return None


def moment_formula_cov(u: float, v: float, x=None, y=None, init: str = "poisson", *,
                       kernel: WalkKernel, theta: float, rate: BranchingRate | None = None,
                       sigma_eq: float | None = None, sigma_curve=None,
                       tol: float = 1e-9) -> Estimate:
    """``E[xi_u(x) xi_v(y)] - theta^2`` with an error bound.

    ``rate`` independent needs nothing else. Tabulated rates need
    ``sigma_curve`` (Poisson start) or ``sigma_eq`` (equilibrium).
    """
    if u < 0 or v < 0:
        raise DomainError("times must be nonnegative")
    if u > v:
        u, v, x, y = v, u, y, x
    d = kernel.dimension
    xv = np.zeros(d, int) if x is None else np.asarray(x, int).reshape(d)
    yv = np.zeros(d, int) if y is None else np.asarray(y, int).reshape(d)
    z = tuple(int(c) for c in yv - xv)
    lag = v - u
    a_lag = transition_probability(kernel, lag, z, tol=tol / 10)
    base = theta * a_lag
    base_err = theta * tol / 10

    if init == "poisson":
        if u == 0:
            return Estimate(base, base_err)
        if sigma_curve is None:
            sbar = _sigma_mean(rate, theta, None)
            if sbar is None:
                raise MissingSigmaCurve("tabulated branching from a Poisson start needs E[sigma] over time")
            hi = killed_green(kernel, z, u + v, tol=tol / 4)
            lo = killed_green(kernel, z, lag, tol=tol / 4)
            val = base + 0.5 * sbar * (hi.value - lo.value)
            return Estimate(val, base_err + 0.5 * sbar * (hi.error + lo.error))
        curve = sigma_curve if callable(sigma_curve) else SigmaCurve(*sigma_curve)
        integral, err = integrate(
            lambda s: curve(s) * transition_values(kernel, u + v - 2 * s, z, tol=1e-14),
            0.0, float(u), tol / 2)
        return Estimate(base + integral, base_err + err)

    if init == "equilibrium":
        if d <= 2:
            raise DomainError("equilibrium start needs d >= 3")
        seq = _sigma_mean(rate, theta, sigma_eq)
        if seq is None:
            raise MissingSigmaCurve("tabulated branching in equilibrium needs sigma_eq")
        g = green_values(kernel, z, tol=max(tol, 1e-6))
        ul = killed_green(kernel, z, lag, tol=tol / 4)
        val = base + 0.5 * seq * (g.value - ul.value)
        return Estimate(val, base_err + 0.5 * seq * (g.error + ul.error))

    raise ConfigError(f"unknown init {init!r}")
