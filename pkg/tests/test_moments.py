import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gamma, ive

from brwclt.errors import DomainError, MissingSigmaCurve
from brwclt.moments import SigmaCurve, moment_formula_cov
from brwclt.occupation import exact_prelimit_cov, prelimit_cov_matrix
from brwclt.rates import BranchingRate
from brwclt.walk import norming, simple_random_walk

SRW3 = simple_random_walk(3)
RHO1 = BranchingRate.independent(1.0)
TAB = BranchingRate.tabulated([0, 1, 2, 3], slope=1.0)
WATSON_G = math.sqrt(6) / (32 * math.pi ** 3) * gamma(1 / 24) * gamma(5 / 24) * gamma(7 / 24) * gamma(11 / 24)
MODEL = dict(kernel=SRW3, theta=1.0, rate=RHO1)


def a0(t):
    return ive(0, t / 3) ** 3


def U1(r):
    return quad(a0, 0, r, epsabs=1e-13, epsrel=1e-13)[0] if r > 0 else 0.0


def brute_point_cov(u, v, init, rho=1.0, theta=1.0, curve=None):
    """Origin-origin covariance from the return probability alone."""
    u, v = min(u, v), max(u, v)
    base = theta * a0(v - u)
    if init == "equilibrium":
        return base + 0.5 * rho * theta * (WATSON_G - U1(v - u))
    if curve is None:
        return base + rho * theta * quad(lambda s: a0(u + v - 2 * s), 0, u, epsabs=1e-13)[0]
    return base + quad(lambda s: curve(s) * a0(u + v - 2 * s), 0, u, epsabs=1e-12)[0]


# ---------------------------------------------------------------------------
# pointwise moment formula


def test_time_zero_is_theta():
    assert moment_formula_cov(0, 0, **MODEL).value == pytest.approx(1.0, abs=1e-12)
    assert moment_formula_cov(0, 0, **dict(MODEL, theta=2.5)).value == pytest.approx(2.5, abs=1e-12)


def test_equilibrium_diagonal_is_theta_plus_half_g():
    est = moment_formula_cov(1, 1, init="equilibrium", **MODEL)
    # u = v: theta a_0 + (rho theta / 2)(g - u_0) with a_0 = 1, u_0 = 0
    assert abs(est.value - (1 + 0.5 * WATSON_G)) <= est.error + 1e-9


@pytest.mark.parametrize("u,v", [(1.0, 2.0), (0.5, 0.5), (3.0, 1.0)])
@pytest.mark.parametrize("init", ["poisson", "equilibrium"])
def test_point_cov_matches_brute(u, v, init):
    est = moment_formula_cov(u, v, init=init, **MODEL)
    assert est.value == pytest.approx(brute_point_cov(u, v, init), abs=max(est.error, 1e-8))


def test_frozen_value_poisson():
    assert moment_formula_cov(1, 2, **MODEL).value == pytest.approx(0.60705028, abs=1e-7)


def test_symmetry_in_arguments():
    a = moment_formula_cov(1.0, 2.5, (0, 0, 0), (1, 0, 0), **MODEL).value
    b = moment_formula_cov(2.5, 1.0, (1, 0, 0), (0, 0, 0), **MODEL).value
    assert a == pytest.approx(b, abs=1e-12)


def test_constant_curve_equals_closed_form():
    c = moment_formula_cov(1.0, 2.0, **MODEL).value
    d = moment_formula_cov(1.0, 2.0, kernel=SRW3, theta=1.0, sigma_curve=SigmaCurve.constant(1.0)).value
    assert c == pytest.approx(d, abs=1e-8)


def test_nonconstant_curve_matches_brute():
    curve = SigmaCurve((0.0, 1.0, 2.0), (1.0, 1.6, 1.9))
    est = moment_formula_cov(1.5, 2.0, kernel=SRW3, theta=1.0, sigma_curve=curve)
    assert est.value == pytest.approx(brute_point_cov(1.5, 2.0, "poisson", curve=curve), abs=1e-7)


def test_missing_sigma_inputs():
    with pytest.raises(MissingSigmaCurve):
        moment_formula_cov(1, 2, kernel=SRW3, theta=1.0, rate=TAB)
    with pytest.raises(MissingSigmaCurve):
        moment_formula_cov(1, 2, init="equilibrium", kernel=SRW3, theta=1.0, rate=TAB)
    assert moment_formula_cov(1, 1, init="equilibrium", kernel=SRW3, theta=1.0, rate=TAB,
                              sigma_eq=1.0).value == pytest.approx(1 + 0.5 * WATSON_G, abs=1e-5)


def test_negative_time_rejected():
    with pytest.raises(DomainError):
        moment_formula_cov(-1, 1, **MODEL)


def test_sigma_curve_validation():
    from brwclt.errors import ConfigError
    with pytest.raises(ConfigError):
        SigmaCurve((1.0, 0.5), (1.0, 1.0))
    with pytest.raises(ConfigError):
        SigmaCurve((), ())


# ---------------------------------------------------------------------------
# exact covariance of the renormalized occupation time


_X, _W = np.polynomial.legendre.leggauss(48)
_X, _W = (_X + 1) / 2, _W / 2


def _vec_point_cov(u, v, init, curve=None):
    """Origin covariance for arrays with u <= v, by Gauss-Legendre in the inner time."""
    base = a0(v - u)
    if init == "equilibrium":
        lag = (v - u)[..., None]
        return base + 0.5 * (WATSON_G - np.sum(_W * lag * a0(lag * _X), axis=-1))
    s = u[..., None] * _X
    c = 1.0 if curve is None else curve(s)
    return base + np.sum(_W * u[..., None] * c * a0(u[..., None] + v[..., None] - 2 * s), axis=-1)


def brute_occ_cov(N, s, t, init, curve=None):
    """Integrate the point covariance over [0, S] x [0, T] on pieces where it is smooth."""
    S, T = N * min(s, t), N * max(s, t)
    x, y = np.meshgrid(_X, _X, indexing="ij")
    w = np.outer(_W, _W)
    # square [0, S]^2: twice the triangle u < v, with v = S y, u = v x
    v = S * y
    tri = np.sum(w * v * S * _vec_point_cov(v * x, v, init, curve))
    # strip u in [0, S], v in [S, T]
    u, v = S * x, S + (T - S) * y
    strip = np.sum(w * S * (T - S) * _vec_point_cov(u, v, init, curve)) if T > S else 0.0
    return (2 * tri + strip) / norming(3, N) ** 2


@pytest.mark.parametrize("init", ["poisson", "equilibrium"])
@pytest.mark.parametrize("N,s,t", [(1.0, 0.5, 1.0), (4.0, 1.0, 1.0), (2.0, 0.25, 1.0)])
def test_exact_prelimit_matches_double_integral(init, N, s, t):
    est = exact_prelimit_cov(N, s, t, init, **MODEL)
    assert est.value == pytest.approx(brute_occ_cov(N, s, t, init), abs=est.error + 1e-8)


def test_exact_prelimit_curve_matches_triple_integral():
    def curve(w):
        return 1.0 + 0.3 * (1.0 - np.exp(-np.asarray(w, float)))
    est = exact_prelimit_cov(1.0, 0.5, 1.0, kernel=SRW3, theta=1.0, sigma_curve=curve, tol=1e-9)
    assert est.value == pytest.approx(brute_occ_cov(1.0, 0.5, 1.0, "poisson", curve=curve), abs=1e-7)


def test_curve_path_equals_closed_form():
    a = exact_prelimit_cov(8, 0.5, 1.0, **MODEL).value
    b = exact_prelimit_cov(8, 0.5, 1.0, kernel=SRW3, theta=1.0, sigma_curve=SigmaCurve.constant(1.0)).value
    assert a == pytest.approx(b, rel=1e-8)


@pytest.mark.parametrize("N,init,expected", [(8, "equilibrium", 1.62986), (8, "poisson", 1.22973),
                                             (32, "equilibrium", 1.37546), (32, "poisson", 1.001746)])
def test_frozen_variances(N, init, expected):
    assert exact_prelimit_cov(N, 1, 1, init, **MODEL).value == pytest.approx(expected, rel=1e-5)


def test_zero_time_gives_zero():
    assert exact_prelimit_cov(8, 0.0, 1.0, **MODEL).value == 0.0


def test_matrix_symmetric_psd_and_ordered():
    grid = [0.25, 0.5, 0.75, 1.0]
    Cp, Ep = prelimit_cov_matrix(4, grid, "poisson", **MODEL)
    Ce, _ = prelimit_cov_matrix(4, grid, "equilibrium", **MODEL)
    for C in (Cp, Ce):
        assert np.allclose(C, C.T)
        assert np.linalg.eigvalsh(C).min() > -1e-9
    assert np.all(Ep >= 0)
    # equilibrium clumping dominates the Poisson start
    assert np.all(Ce >= Cp)


def test_prelimit_missing_sigma():
    with pytest.raises(MissingSigmaCurve):
        exact_prelimit_cov(4, 1, 1, kernel=SRW3, theta=1.0, rate=TAB)
    with pytest.raises(DomainError):
        exact_prelimit_cov(4, 1, 1, "equilibrium", kernel=simple_random_walk(2), theta=1.0, rate=RHO1)
