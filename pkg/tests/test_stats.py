import math

import numpy as np
import pytest

from brwclt.errors import DomainError, GridMismatch, NonpositiveInput, TooFewEffective, TooFewReplicates
from brwclt.occupation import summarize_paths
from brwclt.stats import (ComparisonReport, TrendReport, compare, convergence_trend, gaussianity,
                          scaling_exponent)


def test_compare_example():
    r = compare([1.0, 2.0], [1.1, 2.0], [0.05, 0.1], target="t", grid=[0.5, 1.0], reference_grid=[0.5, 1.0])
    assert r.z == pytest.approx([-2.0, 0.0])
    assert r.max_abs_z == pytest.approx(2.0) and r.passed
    r = compare([1.0], [1.2], [0.05])
    assert r.max_abs_z == pytest.approx(4.0) and not r.passed


def test_compare_exact_zero_se():
    assert compare([1.0], [1.0], [0.0]).passed
    with pytest.raises(DomainError):
        compare([1.0], [1.1], [0.0])
    with pytest.raises(DomainError):
        compare([1.0], [1.1])


def test_compare_grid_and_shape_mismatch():
    with pytest.raises(GridMismatch):
        compare([1.0, 2.0], [1.0], [0.1, 0.1])
    with pytest.raises(GridMismatch):
        compare([1.0], [1.0], [0.1], grid=[1.0], reference_grid=[2.0])


def test_compare_summary_and_roundtrip():
    X = np.random.default_rng(0).standard_normal((50, 2))
    s = summarize_paths(X, params_hash="h", N=4, init="poisson", dimension=3, seed=0, torus_side=9, grid=[0.5, 1])
    r = compare(s, np.eye(2), reference_grid=[0.5, 1.0])
    assert r.metadata["N"] == 4 and r.metadata["replicates"] == 50
    back = ComparisonReport.from_json(r.to_json())
    assert back == r
    assert "PASS" in r.table() or "FAIL" in r.table()


def test_gaussianity_normal_sample():
    X = np.random.default_rng(1).standard_normal((20_000, 2))
    for m in gaussianity(X):
        assert abs(m.skewness) <= 3 * m.skewness_se
        assert abs(m.excess_kurtosis) <= 3 * m.excess_kurtosis_se
        assert m.skewness_se == pytest.approx(math.sqrt(6 / 20_000), rel=0.15)
        assert m.excess_kurtosis_se == pytest.approx(math.sqrt(24 / 20_000), rel=0.2)


def test_gaussianity_detects_exponential():
    x = np.random.default_rng(2).exponential(size=5000)
    m = gaussianity(x)[0]
    assert m.skewness == pytest.approx(2.0, abs=5 * m.skewness_se)
    assert m.skewness > 10 * m.skewness_se


def test_gaussianity_jackknife_matches_brute():
    x = np.random.default_rng(3).gamma(3.0, size=150)

    def sk(v):
        c = v - v.mean()
        return np.mean(c ** 3) / np.mean(c ** 2) ** 1.5
    loo = np.array([sk(np.delete(x, i)) for i in range(x.size)])
    brute = math.sqrt((x.size - 1) / x.size * np.sum((loo - loo.mean()) ** 2))
    assert gaussianity(x)[0].skewness_se == pytest.approx(brute, rel=1e-8)


def test_gaussianity_errors():
    with pytest.raises(TooFewReplicates):
        gaussianity(np.zeros(99))
    with pytest.raises(TooFewEffective):
        gaussianity(np.ones(200))


def test_scaling_exponent_exact_power_law():
    dts = np.array([0.1, 0.2, 0.4, 0.8])
    fit = scaling_exponent(dts, 3.0 * dts ** 1.5)
    slope, ci = fit
    assert slope == pytest.approx(1.5)
    assert ci[0] <= 1.5 <= ci[1]
    assert fit.max_residual < 1e-12
    assert math.exp(fit.intercept) == pytest.approx(3.0)


def test_scaling_exponent_errors():
    with pytest.raises(NonpositiveInput):
        scaling_exponent([0.1, 0.2, 0.0], [1, 2, 3])
    with pytest.raises(NonpositiveInput):
        scaling_exponent([0.1, 0.2, 0.3], [1, -2, 3])
    with pytest.raises(NonpositiveInput):
        scaling_exponent([0.1, 0.2], [1, 2])
    with pytest.raises(GridMismatch):
        scaling_exponent([0.1, 0.2, 0.3], [1, 2])


def test_convergence_trend_example():
    r = convergence_trend([8, 32, 128], [1.5, 1.2, 1.1], 1.0)
    assert r.gaps == pytest.approx([0.5, 0.2, 0.1])
    assert r.monotone and r.final_gap == pytest.approx(0.1)
    assert r.rate < 0
    assert not convergence_trend([8, 32], [1.2, 1.2], 1.0).monotone
    assert convergence_trend([8, 32], [1.2, 1.21], 1.0, ses=[0.02, 0.02]).monotone
    back = TrendReport.from_json(r.to_json())
    assert back == r
    with pytest.raises(DomainError):
        convergence_trend([8], [1.0], 0.0)
