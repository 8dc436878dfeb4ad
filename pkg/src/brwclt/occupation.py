"""Renormalized occupation times X^N and their ensembles.

``X^N_t = (int_0^{Nt} xi_s(0) ds - theta N t) / h_d(N)``. Exact finite-N
covariances come from integrating the two-point covariance over
``[0, Ns] x [0, Nt]``; with ``U_k(r) = int_0^r (r-s)^(k-1)/(k-1)! a_s(0,0) ds``
and ``S = Ns``, ``T = Nt`` the double integrals reduce to

    I_1 = theta [U_2(S) + U_2(T) - U_2(|T-S|)]
    I_2 = (sbar/2) [U_3(S+T) - 2U_3(S) - 2U_3(T) + U_3(|T-S|)]     (Poisson)
    I_2 = (s_eq/2) [g S T - U_3(S) - U_3(T) + U_3(|T-S|)]         (equilibrium)

and, for a time-dependent ``E sigma`` curve,
``I_2 = int_0^{S^T} Esig(w) [U_2(S+T-2w) - U_2(S-w) - U_2(T-w)] dw``.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import __version__
from .errors import ConfigError, DomainError, GridMismatch, MissingSigmaCurve
from .moments import SigmaCurve
from .quadrature import integrate
from .rates import BranchingRate
from .simulate import SimParams, default_torus_side, run_replicates
from .walk import Estimate, WalkKernel, green_values, iterated_return_integral, norming, return_probability

MAX_EXCLUDED_FRACTION = 0.01


@dataclass(frozen=True)
class OccupationPath:
    N: float
    grid: tuple
    values: tuple
    init_label: str
    dimension: int
    seed: int | None = None


def _check_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0 or np.any(g < 0) or np.any(np.diff(g) <= 0):
        raise GridMismatch("grid must be a nonempty, strictly increasing set of times >= 0")
    return g


def renormalize(raw, N: float, theta: float, d: int, grid, raw_times=None,
                init_label: str = "poisson", seed: int | None = None) -> OccupationPath:
    """Center and scale occupation integrals recorded at ``N * grid``."""
    g = _check_grid(grid)
    raw = np.asarray(raw, dtype=float)
    if raw.shape != g.shape:
        raise GridMismatch(f"{raw.size} raw values for a grid of {g.size} points")
    if raw_times is not None:
        rt = np.asarray(raw_times, dtype=float)
        if rt.shape != g.shape or not np.allclose(rt, N * g, rtol=1e-12, atol=0.0):
            raise GridMismatch("raw values were not recorded at N * grid")
    if np.any(g == 0) and np.any(raw[g == 0] != 0):
        raise GridMismatch("occupation integral at time 0 must be 0")
    vals = (raw - theta * N * g) / norming(d, N)
    if not np.all(np.isfinite(vals)):
        raise DomainError("non-finite renormalized values")
    return OccupationPath(float(N), tuple(g.tolist()), tuple(vals.tolist()), init_label, d, seed)


# ---------------------------------------------------------------------------
# ensemble summaries


def _jsonable(a):
    arr = np.asarray(a, dtype=float)
    return [None if not math.isfinite(v) else float(v) for v in arr.ravel()] if arr.ndim == 1 else \
        [_jsonable(row) for row in arr]


def _from_json(a):
    return np.array([[np.nan if v is None else v for v in row] for row in a], dtype=float) \
        if a and isinstance(a[0], list) else np.array([np.nan if v is None else v for v in a], dtype=float)


@dataclass
class EnsembleSummary:
    params_hash: str
    N: float
    init: str
    dimension: int
    seed: int
    torus_side: int
    grid: np.ndarray
    replicates: int
    n_ok: int
    mean: np.ndarray
    mean_se: np.ndarray
    cov: np.ndarray
    cov_se: np.ndarray
    kurtosis: np.ndarray
    failures: list
    version: str = __version__
    paths: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def excluded_fraction(self) -> float:
        return (self.replicates - self.n_ok) / self.replicates if self.replicates else 0.0

    @property
    def valid(self) -> bool:
        return self.excluded_fraction <= MAX_EXCLUDED_FRACTION

    def to_dict(self) -> dict:
        return {
            "params_hash": self.params_hash, "version": self.version, "N": self.N,
            "init": self.init, "dimension": self.dimension, "seed": self.seed,
            "torus_side": self.torus_side, "grid": _jsonable(self.grid),
            "replicates": self.replicates, "n_ok": self.n_ok,
            "excluded_fraction": self.excluded_fraction, "valid": self.valid,
            "mean": _jsonable(self.mean), "mean_se": _jsonable(self.mean_se),
            "cov": _jsonable(self.cov), "cov_se": _jsonable(self.cov_se),
            "kurtosis": _jsonable(self.kurtosis),
            "failures": [[int(r), str(m)] for r, m in self.failures],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleSummary":
        return cls(d["params_hash"], float(d["N"]), d["init"], int(d["dimension"]), int(d["seed"]),
                   int(d["torus_side"]), _from_json(d["grid"]), int(d["replicates"]), int(d["n_ok"]),
                   _from_json(d["mean"]), _from_json(d["mean_se"]), _from_json(d["cov"]),
                   _from_json(d["cov_se"]), _from_json(d["kurtosis"]),
                   [(int(r), m) for r, m in d["failures"]], d.get("version", __version__))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EnsembleSummary":
        return cls.from_dict(json.loads(text))


def covariance_jackknife(X) -> tuple[np.ndarray, np.ndarray]:
    """Sample covariance (ddof=1) and its delete-one jackknife standard errors.

    Two replicates fall back to the normal-theory error, since deleting one
    leaves a single point.
    """
    X = np.asarray(X, dtype=float)
    n, k = X.shape
    if n < 2:
        raise ConfigError("need at least 2 replicates")
    D = X - X.mean(axis=0)
    S = D.T @ D
    C = S / (n - 1)
    if n == 2:
        return C, np.sqrt((np.outer(np.diag(C), np.diag(C)) + C ** 2) / (n - 1))
    se = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            e = D[:, i] * D[:, j]
            ss = float(np.sum((e - e.mean()) ** 2))
            se[i, j] = se[j, i] = math.sqrt(n / ((n - 1) * (n - 2) ** 2) * ss)
    return C, se


def summarize_paths(X, *, params_hash: str, N: float, init: str, dimension: int, seed: int,
                    torus_side: int, grid, replicates: int | None = None, failures=(),
                    keep_paths: bool = False) -> EnsembleSummary:
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n < 2:
        raise ConfigError("need at least 2 successful replicates")
    C, se = covariance_jackknife(X)
    D = X - X.mean(axis=0)
    m2 = (D ** 2).mean(axis=0)
    m4 = (D ** 4).mean(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        kurt = np.where(m2 > 0, m4 / np.where(m2 > 0, m2, 1.0) ** 2, np.nan)
    return EnsembleSummary(params_hash, float(N), init, int(dimension), int(seed), int(torus_side),
                           np.asarray(grid, float), int(replicates if replicates is not None else n), n,
                           X.mean(axis=0), X.std(axis=0, ddof=1) / math.sqrt(n), C, se, kurt,
                           sorted(failures), paths=X if keep_paths else None)


def _n_tag(N: float) -> int:
    return int(round(float(N) * 1000))


def ensemble_params(template: SimParams, N: float, grid, torus_safety: float | None = 6.0) -> SimParams:
    """Copy of ``template`` with horizon ``N max(grid)``, records at ``N grid`` and a sized torus."""
    g = _check_grid(grid)
    horizon = float(N * g[-1])
    side = template.torus_side if torus_safety is None else default_torus_side(template.kernel, horizon, torus_safety)
    return dataclasses.replace(template, torus_side=side, horizon=horizon,
                               record_grid=tuple((N * g).tolist()))


def build_ensemble(template: SimParams, N_ladder, grid, replicates: int, seed: int | None = None, *,
                   params_hash: str = "", torus_safety: float | None = 6.0, workers: int = 1,
                   streams=None, keep_paths: bool = False) -> list[EnsembleSummary]:
    """Simulate ``replicates`` runs per N and summarize ``X^N`` on ``grid``.

    Replicate r of ladder point N uses the stream keyed by ``(seed, N, r)``
    (``streams`` overrides the replicate -> stream map). Replicates that hit
    the rate cap are excluded and recorded; an ensemble with more than 1%
    exclusions reports ``valid = False``.
    """
    if replicates < 2:
        raise ConfigError("replicates must be >= 2")
    g = _check_grid(grid)
    seed = template.seed if seed is None else int(seed)
    d = template.kernel.dimension
    out = []
    for N in N_ladder:
        if d == 4 and N <= 1:
            raise DomainError("d = 4 needs N > 1")
        params = dataclasses.replace(ensemble_params(template, N, g, torus_safety), seed=seed)
        batch = run_replicates(params, replicates, tag=_n_tag(N), workers=workers, streams=streams)
        ok = batch.ok
        X = (batch.occupation[ok] - template.theta * N * g) / norming(d, N)
        init = "equilibrium" if template.init == "burnin" else "poisson"
        out.append(summarize_paths(X, params_hash=params_hash, N=N, init=init, dimension=d, seed=seed,
                                   torus_side=params.torus_side, grid=g, replicates=replicates,
                                   failures=batch.failed, keep_paths=keep_paths))
    return out


def increment_moments(paths, grid, order: int = 2):
    """Empirical ``E[(X_t - X_s)^order]`` for every grid pair s < t.

    Returns ``(lags, values)`` sorted by lag.
    """
    X = np.asarray(paths, dtype=float)
    g = _check_grid(grid)
    lags, vals = [], []
    for i in range(g.size):
        for j in range(i + 1, g.size):
            lags.append(g[j] - g[i])
            vals.append(float(np.mean((X[:, j] - X[:, i]) ** order)))
    idx = np.argsort(lags, kind="stable")
    return np.asarray(lags)[idx], np.asarray(vals)[idx]


# ---------------------------------------------------------------------------
# exact finite-N covariance


@lru_cache(maxsize=4096)
def _U(kernel: WalkKernel, r: float, order: int, tol: float) -> Estimate:
    return iterated_return_integral(kernel, r, order, tol)


class _ReturnTable:
    """Fast ``U_1`` and ``U_2`` at arbitrary points.

    Cumulative integrals of ``a_s`` and ``s a_s`` are tabulated on cells of
    width ``h`` with Gauss-Legendre rules; a point inside a cell adds the
    partial-cell rule, so no interpolation error enters.
    """

    NODES = 12

    def __init__(self, kernel: WalkKernel, rmax: float, h: float = 0.5):
        self.kernel = kernel
        self.h = h
        n = max(1, int(math.ceil(rmax / h)))
        self.xg, self.wg = np.polynomial.legendre.leggauss(self.NODES)
        left = np.arange(n) * h
        s = left[:, None] + 0.5 * h * (1 + self.xg[None, :])
        a = return_probability(kernel, s.ravel(), tol=1e-15).reshape(s.shape)
        w = 0.5 * h * self.wg
        self.M0 = np.concatenate(([0.0], np.cumsum(a @ w)))
        self.M1 = np.concatenate(([0.0], np.cumsum((a * s) @ w)))
        self.rmax = n * h

    def moments(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if np.any(r < 0) or np.any(r > self.rmax + 1e-12):
            raise DomainError("argument outside the tabulated range")
        k = np.minimum((r // self.h).astype(int), len(self.M0) - 1)
        base = k * self.h
        part = r - base
        s = base[:, None] + 0.5 * part[:, None] * (1 + self.xg[None, :])
        a = return_probability(self.kernel, s.ravel(), tol=1e-15).reshape(s.shape)
        w = 0.5 * part[:, None] * self.wg[None, :]
        return self.M0[k] + (a * w).sum(axis=1), self.M1[k] + (a * s * w).sum(axis=1)

    def U2(self, r):
        m0, m1 = self.moments(r)
        return np.asarray(r, float) * m0 - m1


def _resolve_sigma(rate, theta, sigma_eq, sigma_curve, init):
    if init == "equilibrium":
        if sigma_eq is not None:
            return float(sigma_eq), None
        if rate is not None and rate.kind == "independent":
            return rate.rho * theta, None
        raise MissingSigmaCurve("equilibrium covariance with tabulated branching needs sigma_eq")
    if init == "poisson":
        if sigma_curve is not None:
            curve = sigma_curve if callable(sigma_curve) else SigmaCurve(*sigma_curve)
            return None, curve
        if rate is not None and rate.kind == "independent":
            return rate.rho * theta, None
        raise MissingSigmaCurve("Poisson-start covariance with tabulated branching needs an E[sigma] curve")
    raise ConfigError(f"unknown init {init!r}")


def exact_prelimit_cov(N: float, s: float, t: float, init: str = "poisson", *, kernel: WalkKernel,
                       theta: float, rate: BranchingRate | None = None, sigma_eq: float | None = None,
                       sigma_curve=None, tol: float = 1e-7) -> Estimate:
    """``Cov(X^N_s, X^N_t)`` with an error bound."""
    if s < 0 or t < 0:
        raise DomainError("times must be nonnegative")
    d = kernel.dimension
    if init == "equilibrium" and d <= 2:
        raise DomainError("equilibrium start needs d >= 3")
    sbar, curve = _resolve_sigma(rate, theta, sigma_eq, sigma_curve, init)
    if s == 0 or t == 0:
        return Estimate(0.0, 0.0)
    h2 = norming(d, N) ** 2
    S, T = float(N * s), float(N * t)
    lag = abs(T - S)
    q = tol * h2 / 16

    def U(r, order):
        return _U(kernel, r, order, q) if r > 0 else Estimate(0.0, 0.0)

    parts = [(theta, U(S, 2)), (theta, U(T, 2)), (-theta, U(lag, 2))]
    if init == "poisson" and curve is None:
        c = 0.5 * sbar
        parts += [(c, U(S + T, 3)), (-2 * c, U(S, 3)), (-2 * c, U(T, 3)), (c, U(lag, 3))]
    elif init == "equilibrium":
        c = 0.5 * sbar
        g = green_values(kernel, tol=max(q / max(S * T * c, 1e-300), 1e-6))
        parts += [(c * S * T, g), (-c, U(S, 3)), (-c, U(T, 3)), (c, U(lag, 3))]
    val = sum(w * e.value for w, e in parts)
    err = sum(abs(w) * e.error for w, e in parts)
    if curve is not None:
        i2, e2 = _curve_term(kernel, S, T, curve, q)
        val += i2
        err += e2
    return Estimate(val / h2, err / h2)


def _curve_term(kernel: WalkKernel, S: float, T: float, curve, tol: float):
    table = _return_table(kernel, S + T)
    lo = min(S, T)

    def f(w):
        w = np.asarray(w, dtype=float)
        shape = w.shape
        w = w.ravel()
        val = table.U2(S + T - 2 * w) - table.U2(S - w) - table.U2(T - w)
        return (np.asarray(curve(w), float) * val).reshape(shape)

    knots = [0.0] + [k for k in getattr(curve, "times", ()) if 0 < k < lo] + [lo]
    total, err = 0.0, 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        v, e = integrate(f, a, b, tol / len(knots))
        total += v
        err += e
    return total, err


@lru_cache(maxsize=8)
def _return_table_cached(kernel: WalkKernel, rmax: float) -> _ReturnTable:
    return _ReturnTable(kernel, rmax)


def _return_table(kernel: WalkKernel, rmax: float) -> _ReturnTable:
    return _return_table_cached(kernel, float(2.0 ** math.ceil(math.log2(max(rmax, 1.0)))))


def prelimit_cov_matrix(N: float, grid, init: str = "poisson", **model) -> tuple[np.ndarray, np.ndarray]:
    """Exact covariance matrix and entrywise error bounds on ``grid``."""
    g = _check_grid(grid)
    k = g.size
    C = np.zeros((k, k))
    E = np.zeros((k, k))
    for i in range(k):
        for j in range(i, k):
            est = exact_prelimit_cov(N, g[i], g[j], init, **model)
            C[i, j] = C[j, i] = est.value
            E[i, j] = E[j, i] = est.error
    return C, E
