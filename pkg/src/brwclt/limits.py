"""Gaussian limits of the renormalized occupation time and exact grid sampling.

d = 3 equilibrium: fractional Brownian motion of index 3/4,
``K [s^1.5 + t^1.5 - |t-s|^1.5]``. d = 3 Poisson start: sub-fractional
Brownian motion, ``K [s^1.5 + t^1.5 - |t-s|^1.5 / 2 - (s+t)^1.5 / 2]``.
d >= 4: Brownian motion ``D min(s, t)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, MissingSigmaCurve, NotPSD, UnsupportedDimension
from .rates import BranchingRate
from .walk import CovMatrix, Estimate, WalkKernel, walk_integrals

MAX_JITTER = 1e-10
VARIANTS = ("FBM34", "SubFBM34", "BM")


@dataclass(frozen=True)
class LimitCovariance:
    variant: str
    coefficient: float
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown limit variant {self.variant!r}")
        if not (self.coefficient > 0 and math.isfinite(self.coefficient)):
            raise DomainError("limit coefficient must be positive and finite")

    @property
    def exponent(self) -> float:
        return 1.0 if self.variant == "BM" else 1.5

    def cov(self, s, t):
        return cov(self, s, t)

    def gram(self, grid) -> np.ndarray:
        g = np.asarray(grid, dtype=float)
        return cov(self, g[:, None], g[None, :])

    def to_dict(self) -> dict:
        return {"variant": self.variant, "coefficient": self.coefficient, "provenance": self.provenance}

    @classmethod
    def from_dict(cls, d: dict) -> "LimitCovariance":
        return cls(d["variant"], float(d["coefficient"]), dict(d.get("provenance", {})))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _det(Q) -> float:
    if isinstance(Q, CovMatrix):
        return float(Q.det)
    return float(np.linalg.det(np.atleast_2d(np.asarray(Q, dtype=float))))


def _value(x) -> float:
    return float(x.value if isinstance(x, Estimate) else x)


def limit_coefficient(d: int, theta: float, rate: BranchingRate | None = None, Q=None, *,
                      init: str = "equilibrium", sigma_eq: float | None = None,
                      walk_ints=None, kernel: WalkKernel | None = None,
                      tol: float = 1e-4) -> LimitCovariance:
    """Limit covariance for dimension ``d``.

    The branching enters through ``sigma_eq`` (defaults to ``rho theta``
    for independent branching). For d >= 5 the pair
    ``(int a_u(0,0) du, int u a_u(0,0) du)`` comes from ``walk_ints`` or is
    computed from ``kernel``.
    """
    if d <= 2:
        raise UnsupportedDimension(f"no Gaussian occupation-time limit implemented for d={d}")
    if theta < 0:
        raise DomainError("theta must be nonnegative")
    if sigma_eq is None:
        if rate is None or rate.kind != "independent":
            raise MissingSigmaCurve("state-dependent branching needs an estimate of sigma_eq")
        sigma_eq = rate.rho * theta
    sigma_eq = float(sigma_eq)
    if Q is None:
        if kernel is None:
            raise ConfigError("need Q or kernel")
        Q = kernel.covariance
    det = _det(Q)
    prov = {"d": d, "theta": theta, "sigma_eq": sigma_eq, "det_q": det, "init": init}
    if rate is not None:
        prov["rate"] = rate.to_dict()
    if d == 3:
        base = math.sqrt(2) / (3 * math.pi ** 1.5) * det ** -0.5 * sigma_eq
        if init == "equilibrium":
            return LimitCovariance("FBM34", base, prov)
        if init == "poisson":
            return LimitCovariance("SubFBM34", 2 * base, prov)
        raise ConfigError(f"unknown init {init!r}")
    if d == 4:
        return LimitCovariance("BM", (2 * math.pi) ** -2 * det ** -0.5 * sigma_eq, prov)
    if walk_ints is None:
        if kernel is None:
            raise ConfigError("d >= 5 needs the walk integrals or the kernel")
        walk_ints = walk_integrals(kernel, tol)
    i0, i1 = _value(walk_ints[0]), _value(walk_ints[1])
    prov.update(int_a=i0, int_ua=i1)
    if isinstance(walk_ints[0], Estimate):
        prov.update(int_a_err=walk_ints[0].error, int_ua_err=walk_ints[1].error)
    return LimitCovariance("BM", 2 * theta * i0 + sigma_eq * i1, prov)


def cov(model: LimitCovariance, s, t):
    """Closed-form limit covariance; broadcasts over array inputs."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise DomainError("times must be nonnegative")
    K = model.coefficient
    if model.variant == "FBM34":
        out = K * (s ** 1.5 + t ** 1.5 - np.abs(t - s) ** 1.5)
    elif model.variant == "SubFBM34":
        out = K * (s ** 1.5 + t ** 1.5 - 0.5 * np.abs(t - s) ** 1.5 - 0.5 * (s + t) ** 1.5)
    else:
        out = K * np.minimum(s, t)
    return float(out) if out.ndim == 0 else out


@dataclass
class PathSample:
    grid: np.ndarray
    paths: np.ndarray
    jitter: float


def sample_paths(model: LimitCovariance, grid, n_paths: int, rng: np.random.Generator) -> PathSample:
    """Exact zero-mean Gaussian vectors on ``grid`` with the model covariance.

    Cholesky factorization; if it fails a diagonal jitter of at most 1e-10
    is added and reported.
    """
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0 or np.any(g <= 0) or np.any(np.diff(g) <= 0):
        raise DomainError("grid must be strictly increasing and positive")
    if n_paths < 1:
        raise ConfigError("n_paths must be positive")
    G = model.gram(g)
    jitter = 0.0
    while True:
        try:
            L = np.linalg.cholesky(G + jitter * np.eye(g.size))
            break
        except np.linalg.LinAlgError:
            jitter = 1e-16 if jitter == 0 else jitter * 10
            if jitter > MAX_JITTER:
                raise NotPSD(f"Gram matrix not PSD within jitter {MAX_JITTER:g}") from None
    Z = rng.standard_normal((n_paths, g.size))
    return PathSample(g, Z @ L.T, jitter)


def _two_sided_fbm(s, t, C, exponent):
    return C * (np.abs(s) ** exponent + np.abs(t) ** exponent - np.abs(t - s) ** exponent)


def subfbm_representation_check(grid, K: float = 1.0, exponent: float = 1.5) -> float:
    """Max |sub-fBM cov - cov of (B_t + B_{-t})/sqrt 2| over grid pairs.

    ``B`` is a two-sided fBM with covariance
    ``(K/2)(|s|^e + |t|^e - |t-s|^e)``, the FBM34 normalization that
    matches the sub-fBM coefficient. ``exponent`` other than 1.5 is a
    negative control.
    """
    g = np.asarray(grid, dtype=float)
    if np.any(g <= 0):
        raise DomainError("grid must be positive")
    s, t = g[:, None], g[None, :]
    lhs = cov(LimitCovariance("SubFBM34", K), s, t)
    C = K / 2
    rhs = 0.5 * (_two_sided_fbm(s, t, C, exponent) + _two_sided_fbm(-s, -t, C, exponent)
                 + _two_sided_fbm(s, -t, C, exponent) + _two_sided_fbm(-s, t, C, exponent))
    return float(np.max(np.abs(lhs - rhs)))
