import math

import numpy as np
import pytest

from brwclt.errors import ConfigError, DomainError, MissingSigmaCurve, NotPSD, UnsupportedDimension
from brwclt.limits import (LimitCovariance, cov, limit_coefficient, sample_paths,
                           subfbm_representation_check)
from brwclt.rates import BranchingRate
from brwclt.walk import Estimate, simple_random_walk, walk_integrals

RHO1 = BranchingRate.independent(1.0)
K3 = math.sqrt(2) / (3 * math.pi ** 1.5) * math.sqrt(27)


def test_d3_equilibrium_coefficient():
    m = limit_coefficient(3, 1.0, RHO1, kernel=simple_random_walk(3))
    assert m.variant == "FBM34"
    assert m.coefficient == pytest.approx(K3, rel=1e-12)
    assert m.coefficient == pytest.approx(0.43990, abs=1e-5)


def test_d3_poisson_doubles_coefficient():
    m = limit_coefficient(3, 1.0, RHO1, kernel=simple_random_walk(3), init="poisson")
    assert m.variant == "SubFBM34" and m.coefficient == pytest.approx(2 * K3)


def test_coefficient_scales_with_sigma_and_det():
    m1 = limit_coefficient(3, 2.0, BranchingRate.independent(0.5), Q=np.eye(3))
    m2 = limit_coefficient(3, 1.0, RHO1, Q=4 * np.eye(3))
    assert m1.coefficient == pytest.approx(math.sqrt(2) / (3 * math.pi ** 1.5))
    assert m2.coefficient == pytest.approx(m1.coefficient / 8)


def test_d4_coefficient():
    m = limit_coefficient(4, 1.0, RHO1, kernel=simple_random_walk(4))
    assert m.variant == "BM"
    assert m.coefficient == pytest.approx(16 / (4 * math.pi ** 2))


def test_d5_coefficient_from_integrals():
    m = limit_coefficient(5, 2.0, RHO1, Q=np.eye(5) / 5, walk_ints=(1.5, 0.7))
    assert m.coefficient == pytest.approx(2 * 2.0 * 1.5 + 2.0 * 0.7)
    a, b = walk_integrals(simple_random_walk(5), 1e-4)
    m2 = limit_coefficient(5, 1.0, RHO1, kernel=simple_random_walk(5), walk_ints=(a, b))
    assert m2.coefficient == pytest.approx(2 * a.value + b.value)
    assert m2.provenance["int_a_err"] == a.error


def test_coefficient_errors():
    with pytest.raises(UnsupportedDimension):
        limit_coefficient(2, 1.0, RHO1, Q=np.eye(2))
    with pytest.raises(MissingSigmaCurve):
        limit_coefficient(3, 1.0, BranchingRate.tabulated([0, 1, 2], slope=1.0), Q=np.eye(3))
    assert limit_coefficient(3, 1.0, BranchingRate.tabulated([0, 1, 2], slope=1.0), Q=np.eye(3),
                             sigma_eq=1.0).coefficient > 0
    with pytest.raises(ConfigError):
        limit_coefficient(3, 1.0, RHO1)
    with pytest.raises(DomainError):
        LimitCovariance("BM", 0.0)
    with pytest.raises(ConfigError):
        LimitCovariance("OU", 1.0)


def test_cov_examples():
    f = LimitCovariance("FBM34", 1.0)
    assert cov(f, 1.0, 1.0) == pytest.approx(2.0)
    assert cov(f, 1.0, 2.0) == pytest.approx(1 + 2 ** 1.5 - 1)
    sf = LimitCovariance("SubFBM34", 1.0)
    assert cov(sf, 1.0, 1.0) == pytest.approx(2 - math.sqrt(2))
    assert cov(sf, 2.0, 2.0) == pytest.approx((2 - math.sqrt(2)) * 2 ** 1.5)
    b = LimitCovariance("BM", 3.0)
    assert cov(b, 1.0, 2.0) == 3.0
    assert np.allclose(cov(b, np.array([1.0, 2.0]), 1.5), [3.0, 4.5])
    with pytest.raises(DomainError):
        cov(b, -1.0, 1.0)


def test_self_similarity():
    for v in ("FBM34", "SubFBM34"):
        m = LimitCovariance(v, 0.7)
        assert cov(m, 2 * 0.3, 2 * 0.8) == pytest.approx(2 ** 1.5 * cov(m, 0.3, 0.8))


def test_json_roundtrip():
    m = limit_coefficient(3, 1.0, RHO1, kernel=simple_random_walk(3))
    back = LimitCovariance.from_dict(m.to_dict())
    assert back == m and back.provenance == m.provenance


def test_sample_paths_covariance():
    m = LimitCovariance("SubFBM34", 1.0)
    grid = [0.25, 0.5, 1.0]
    s = sample_paths(m, grid, 40_000, np.random.default_rng(3))
    emp = np.cov(s.paths, rowvar=False)
    G = m.gram(grid)
    # var of a sample covariance entry: (G_ii G_jj + G_ij^2) / (n - 1)
    se = np.sqrt((np.outer(np.diag(G), np.diag(G)) + G ** 2) / (s.paths.shape[0] - 1))
    assert np.all(np.abs(emp - G) <= 4 * se)
    assert s.jitter == 0.0


def test_sample_paths_jitter_and_not_psd():
    # nearly identical times give a nearly singular Gram matrix
    s = sample_paths(LimitCovariance("BM", 1.0), [1.0, 1.0 + 1e-15, 2.0], 10, np.random.default_rng(0))
    assert 0 <= s.jitter <= 1e-10

    class Bad:
        variant, coefficient = "BM", 1.0

        def gram(self, g):
            return np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(NotPSD):
        sample_paths(Bad(), [1.0, 2.0], 5, np.random.default_rng(0))
    with pytest.raises(DomainError):
        sample_paths(LimitCovariance("BM", 1.0), [0.0, 1.0], 5, np.random.default_rng(0))


def test_subfbm_representation():
    grid = np.linspace(0.1, 3.0, 30)
    assert subfbm_representation_check(grid, K=1.7) < 1e-12
    assert subfbm_representation_check(grid, exponent=1.4) > 1e-3


def test_estimate_provenance_kept():
    m = limit_coefficient(5, 1.0, RHO1, Q=np.eye(5), walk_ints=(Estimate(1.0, 1e-5), Estimate(0.5, 1e-5)))
    assert m.provenance["int_ua_err"] == 1e-5
