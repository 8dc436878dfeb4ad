import numpy as np
import pytest

from brwclt.errors import ConfigError
from brwclt.rates import BranchingRate


def test_independent_is_linear():
    r = BranchingRate.independent(1.5)
    assert r(0) == 0 and r(1) == 1.5 and r(10) == pytest.approx(15.0)
    assert r.rho == 1.5 and r.lipschitz_c == 1.5 and r.linear_bound_c2 == 1.5


def test_tabulated_extension_and_constants():
    r = BranchingRate.tabulated([0, 2, 3, 3.5], slope=0.25)
    assert np.allclose(r(np.arange(6)), [0, 2, 3, 3.5, 3.75, 4.0])
    assert r.lipschitz_c == 2.0
    assert r.linear_bound_c2 == 2.0
    assert BranchingRate.tabulated([0, 1, 3]).slope == 2.0
    with pytest.raises(AttributeError):
        r.rho


@pytest.mark.parametrize("values,slope", [([1, 2], None), ([0], None), ([0, -1, 1], None),
                                          ([0, 1], -1.0), ([0, 0, 0], 0.0)])
def test_tabulated_rejects(values, slope):
    with pytest.raises(ConfigError):
        BranchingRate.tabulated(values, slope)


def test_independent_rejects_nonpositive():
    with pytest.raises(ConfigError):
        BranchingRate.independent(0.0)


def test_dict_roundtrip():
    for r in (BranchingRate.independent(0.7), BranchingRate.tabulated([0, 1, 1.5], slope=0.0)):
        assert BranchingRate.from_dict(r.to_dict()) == r
    with pytest.raises(ConfigError):
        BranchingRate.from_dict({"kind": "quadratic"})
