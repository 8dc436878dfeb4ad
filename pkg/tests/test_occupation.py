import math

import numpy as np
import pytest

from brwclt.errors import ConfigError, DomainError, GridMismatch
from brwclt.occupation import (EnsembleSummary, build_ensemble, covariance_jackknife, ensemble_params,
                               exact_prelimit_cov, increment_moments, renormalize, summarize_paths)
from brwclt.rates import BranchingRate
from brwclt.simulate import SimParams
from brwclt.walk import simple_random_walk

SRW3 = simple_random_walk(3)
RHO1 = BranchingRate.independent(1.0)


def template(side=9, **kw):
    return SimParams(SRW3, RHO1, 1.0, side, 1.0, seed=17, **kw)


# ---------------------------------------------------------------------------
# renormalization


def test_renormalize_example():
    p = renormalize([24.0], 16, 1.0, 3, [1.0])
    assert p.values == (1.0,)
    p = renormalize([0.0, 20.0, 30.0], 16, 1.0, 3, [0.0, 1.0, 2.0], raw_times=[0.0, 16.0, 32.0])
    assert p.values == pytest.approx((0.0, 0.5, -0.25))


def test_renormalize_d5_and_d4():
    assert renormalize([13.0], 9, 1.0, 5, [1.0]).values == (pytest.approx(4 / 3),)
    e = math.e
    assert renormalize([e + math.sqrt(e)], e, 1.0, 4, [1.0]).values == (pytest.approx(1.0),)


def test_renormalize_grid_errors():
    with pytest.raises(GridMismatch):
        renormalize([1.0, 2.0], 4, 1.0, 3, [1.0])
    with pytest.raises(GridMismatch):
        renormalize([1.0], 4, 1.0, 3, [1.0], raw_times=[2.0])
    with pytest.raises(GridMismatch):
        renormalize([1.0, 2.0], 4, 1.0, 3, [1.0, 0.5])
    with pytest.raises(GridMismatch):
        renormalize([1.0, 2.0], 4, 1.0, 3, [0.0, 1.0])
    with pytest.raises(DomainError):
        renormalize([1.0], 1.0, 1.0, 4, [1.0])


# ---------------------------------------------------------------------------
# jackknife covariance


def test_jackknife_matches_brute_delete_one():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((12, 3)) @ np.array([[1, 0.5, 0], [0, 1, 0.2], [0, 0, 1.0]])
    C, se = covariance_jackknife(X)
    assert np.allclose(C, np.cov(X, rowvar=False))
    n = X.shape[0]
    loo = np.array([np.cov(np.delete(X, i, axis=0), rowvar=False) for i in range(n)])
    brute = np.sqrt((n - 1) / n * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    assert np.allclose(se, brute, rtol=1e-10)


def test_jackknife_two_replicates_normal_theory():
    C, se = covariance_jackknife(np.array([[0.0, 1.0], [2.0, 1.0]]))
    assert C[0, 0] == pytest.approx(2.0)
    assert se[0, 0] == pytest.approx(math.sqrt(2 * 4.0))
    with pytest.raises(ConfigError):
        covariance_jackknife(np.zeros((1, 2)))


def test_summary_roundtrip_with_nan():
    X = np.array([[0.0, 1.0], [0.0, 2.0], [0.0, 4.0]])
    s = summarize_paths(X, params_hash="abc", N=4, init="poisson", dimension=3, seed=1, torus_side=9,
                        grid=[0.5, 1.0], replicates=4, failures=[(3, "cap")])
    assert math.isnan(s.kurtosis[0])
    assert s.excluded_fraction == 0.25 and not s.valid
    back = EnsembleSummary.from_json(s.to_json())
    assert back.to_json() == s.to_json()
    assert np.isnan(back.kurtosis[0]) and back.failures == [(3, "cap")]


# ---------------------------------------------------------------------------
# ensembles


def test_ensemble_params_torus_and_grid():
    p = ensemble_params(template(), 4, [0.5, 1.0], torus_safety=3.0)
    assert p.horizon == 4.0 and p.record_grid == (2.0, 4.0)
    assert p.torus_side % 2 == 1 and p.torus_side >= 2 * 3 * math.sqrt(4.0 / 3)
    assert ensemble_params(template(), 4, [1.0], torus_safety=None).torus_side == 9


def test_identical_streams_give_zero_variance():
    s = build_ensemble(template(), [2], [0.5, 1.0], 6, torus_safety=None, streams=[5] * 6)[0]
    assert np.all(s.cov == 0) and np.all(s.cov_se == 0)


def test_ensemble_is_deterministic_and_worker_independent():
    a = build_ensemble(template(), [2], [0.5, 1.0], 30, torus_safety=None)[0]
    b = build_ensemble(template(), [2], [0.5, 1.0], 30, torus_safety=None, workers=2)[0]
    assert a.to_json() == b.to_json()


def test_small_ensemble_matches_exact_covariance():
    s = build_ensemble(template(side=11), [2], [0.5, 1.0], 4000, torus_safety=None, keep_paths=True)[0]
    assert s.valid and s.n_ok == 4000
    assert np.all(np.abs(s.mean) <= 4 * s.mean_se)
    for i, j in [(0, 0), (0, 1), (1, 1)]:
        ref = exact_prelimit_cov(2, s.grid[i], s.grid[j], kernel=SRW3, theta=1.0, rate=RHO1).value
        assert abs(s.cov[i, j] - ref) <= 4 * s.cov_se[i, j]
    assert s.paths.shape == (4000, 2)


def test_build_ensemble_rejects():
    with pytest.raises(ConfigError):
        build_ensemble(template(), [2], [1.0], 1)
    with pytest.raises(DomainError):
        build_ensemble(SimParams(simple_random_walk(4), RHO1, 1.0, 5, 1.0), [1.0], [1.0], 4)


def test_increment_moments_brute():
    X = np.array([[1.0, 2.0, 4.0], [0.0, -1.0, 1.0]])
    lags, vals = increment_moments(X, [1.0, 2.0, 4.0])
    assert np.allclose(lags, [1.0, 2.0, 3.0])
    # lag 1: (1, -1) -> 1 ; lag 2: (2, 2) -> 4 ; lag 3: (3, 1) -> 5
    assert np.allclose(vals, [1.0, 4.0, 5.0])
