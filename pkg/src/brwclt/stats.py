"""z-score comparisons, Gaussianity diagnostics, scaling fits and ladder trends."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, GridMismatch, NonpositiveInput, TooFewEffective, TooFewReplicates

GATE = 3.0
MIN_GAUSSIANITY_REPLICATES = 100


def _floats(a):
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        return float(arr)
    return [_floats(x) for x in arr]


@dataclass
class ComparisonReport:
    target: str
    grid: list
    estimate: list
    reference: list
    se: list
    z: list
    max_abs_z: float
    passed: bool
    threshold: float = GATE
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonReport":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ComparisonReport":
        return cls.from_dict(json.loads(text))

    def table(self) -> str:
        est = np.atleast_1d(np.asarray(self.estimate, float)).ravel()
        ref = np.atleast_1d(np.asarray(self.reference, float)).ravel()
        se = np.atleast_1d(np.asarray(self.se, float)).ravel()
        z = np.atleast_1d(np.asarray(self.z, float)).ravel()
        lines = [f"{self.target}: max|z| = {self.max_abs_z:.3f} -> {'PASS' if self.passed else 'FAIL'}",
                 f"{'estimate':>14} {'reference':>14} {'se':>12} {'z':>8}"]
        lines += [f"{e:14.6g} {r:14.6g} {s:12.4g} {q:8.3f}" for e, r, s, q in zip(est, ref, se, z)]
        return "\n".join(lines)


def compare(estimate, reference, se=None, *, target: str = "prelimit_exact", grid=None,
            reference_grid=None, threshold: float = GATE, metadata: dict | None = None) -> ComparisonReport:
    """Entrywise ``z = (estimate - reference) / se``.

    ``estimate`` may be an :class:`EnsembleSummary`, whose covariance and
    jackknife errors are used. A zero ``se`` is allowed only where the
    entries agree exactly.
    """
    meta = dict(metadata or {})
    if hasattr(estimate, "cov_se"):
        ens = estimate
        grid = ens.grid if grid is None else grid
        se = ens.cov_se if se is None else se
        meta.setdefault("N", ens.N)
        meta.setdefault("replicates", ens.n_ok)
        meta.setdefault("init", ens.init)
        meta.setdefault("d", ens.dimension)
        estimate = ens.cov
    est = np.asarray(estimate, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if se is None:
        raise DomainError("standard errors required")
    se = np.broadcast_to(np.asarray(se, dtype=float), est.shape)
    if est.shape != ref.shape:
        raise GridMismatch(f"estimate shape {est.shape} != reference shape {ref.shape}")
    if grid is not None and reference_grid is not None:
        if np.shape(grid) != np.shape(reference_grid) or not np.allclose(grid, reference_grid, rtol=1e-12, atol=0):
            raise GridMismatch("estimate and reference grids differ")
    diff = est - ref
    if np.any((se == 0) & (diff != 0)):
        raise DomainError("zero standard error with a nonzero discrepancy")
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), 0.0)
    if not np.all(np.isfinite(z)):
        raise DomainError("non-finite z-score")
    mz = float(np.max(np.abs(z))) if z.size else 0.0
    g = [] if grid is None else _floats(grid)
    return ComparisonReport(target, g, _floats(est), _floats(ref), _floats(se), _floats(z),
                            mz, bool(mz <= threshold), float(threshold), meta)


# ---------------------------------------------------------------------------
# Gaussianity


@dataclass
class MomentStat:
    skewness: float
    skewness_se: float
    excess_kurtosis: float
    excess_kurtosis_se: float


def _skew_kurt(m2, m3, m4):
    return m3 / m2 ** 1.5, m4 / m2 ** 2 - 3.0


def gaussianity(samples) -> list[MomentStat]:
    """Skewness and excess kurtosis per column with delete-one jackknife errors."""
    X = np.asarray(getattr(samples, "paths", samples), dtype=float)
    if X is None or X.ndim == 0:
        raise TooFewReplicates("no samples")
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if n < MIN_GAUSSIANITY_REPLICATES:
        raise TooFewReplicates(f"{n} replicates; need at least {MIN_GAUSSIANITY_REPLICATES}")
    out = []
    for col in X.T:
        c = col - col.mean()
        if not np.any(c != 0) or float(np.mean(c ** 2)) <= 0:
            raise TooFewEffective("zero variance: moment ratios undefined")
        p1, p2, p3, p4 = (np.sum(c ** k) for k in (1, 2, 3, 4))
        m = n - 1
        # leave-one-out raw sums about the fixed full-sample mean
        r1 = (p1 - c) / m
        r2 = (p2 - c ** 2) / m
        r3 = (p3 - c ** 3) / m
        r4 = (p4 - c ** 4) / m
        cm2 = r2 - r1 ** 2
        cm3 = r3 - 3 * r1 * r2 + 2 * r1 ** 3
        cm4 = r4 - 4 * r1 * r3 + 6 * r1 ** 2 * r2 - 3 * r1 ** 4
        sk_i, ku_i = _skew_kurt(cm2, cm3, cm4)
        sk, ku = _skew_kurt(p2 / n, p3 / n, p4 / n)
        se_sk = math.sqrt((n - 1) / n * float(np.sum((sk_i - sk_i.mean()) ** 2)))
        se_ku = math.sqrt((n - 1) / n * float(np.sum((ku_i - ku_i.mean()) ** 2)))
        out.append(MomentStat(float(sk), se_sk, float(ku), se_ku))
    return out


# ---------------------------------------------------------------------------
# scaling fits


@dataclass
class ScalingFit:
    slope: float
    intercept: float
    ci: tuple
    se: float
    max_residual: float

    def __iter__(self):
        yield self.slope
        yield self.ci


def _ols(x, y):
    xm, ym = x.mean(), y.mean()
    slope = float(np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2))
    return slope, float(ym - slope * xm)


def scaling_exponent(dts, values, z: float = 1.96) -> ScalingFit:
    """Log-log OLS slope of ``values`` against ``dts`` with a jackknife CI."""
    x = np.asarray(dts, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise GridMismatch("dts and values must be 1-D of equal length")
    if x.size < 3:
        raise NonpositiveInput("need at least 3 pairs")
    if np.any(x <= 0) or np.any(y <= 0):
        raise NonpositiveInput("log-log fit needs positive inputs")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise NonpositiveInput("all lags equal")
    slope, icpt = _ols(lx, ly)
    n = x.size
    loo = []
    for i in range(n):
        keep = np.arange(n) != i
        if np.ptp(lx[keep]) > 0:
            loo.append(_ols(lx[keep], ly[keep])[0])
    loo = np.asarray(loo)
    se = math.sqrt((len(loo) - 1) / len(loo) * float(np.sum((loo - loo.mean()) ** 2)))
    resid = float(np.max(np.abs(ly - (icpt + slope * lx))))
    return ScalingFit(slope, icpt, (slope - z * se, slope + z * se), se, resid)


# ---------------------------------------------------------------------------
# convergence along the N ladder


@dataclass
class TrendReport:
    N: list
    estimates: list
    limit: float
    gaps: list
    gap_se: list
    monotone: bool
    final_gap: float
    rate: float | None = None
    rate_ci: list | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrendReport":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TrendReport":
        return cls.from_dict(json.loads(text))

    def table(self) -> str:
        lines = [f"limit = {self.limit:.6g}; monotone = {self.monotone}; final gap = {self.final_gap:.4f}",
                 f"{'N':>8} {'estimate':>14} {'rel gap':>10} {'se':>10}"]
        lines += [f"{n:8g} {e:14.6g} {g:10.4f} {s:10.3g}"
                  for n, e, g, s in zip(self.N, self.estimates, self.gaps, self.gap_se)]
        return "\n".join(lines)


def convergence_trend(N, estimates, limit: float, ses=None, slack: float = 1.0) -> TrendReport:
    """Relative gaps ``|est_N - limit| / |limit|`` and a monotone-decrease flag.

    Consecutive gaps may rise by at most ``slack`` combined standard errors;
    with zero errors the decrease must be strict.
    """
    N = [float(n) for n in N]
    est = np.asarray(estimates, dtype=float)
    if len(N) != est.size:
        raise GridMismatch("one estimate per ladder point required")
    if limit == 0:
        raise DomainError("limit must be nonzero")
    se = np.zeros_like(est) if ses is None else np.asarray(ses, dtype=float)
    gaps = np.abs(est - limit) / abs(limit)
    gse = se / abs(limit)
    mono = True
    for i in range(len(gaps) - 1):
        allow = slack * math.hypot(gse[i], gse[i + 1])
        if allow == 0:
            mono &= bool(gaps[i + 1] < gaps[i])
        else:
            mono &= bool(gaps[i + 1] <= gaps[i] + allow)
    rate = rate_ci = None
    if len(N) >= 3 and np.all(gaps > 0):
        fit = scaling_exponent(N, gaps)
        rate, rate_ci = fit.slope, list(fit.ci)
    return TrendReport(N, _floats(est), float(limit), _floats(gaps), _floats(gse), bool(mono),
                       float(gaps[-1]), rate, rate_ci)
