import numpy as np
import pytest

from pxlap.domain import HypothesisError, build_grid
from pxlap.system import CoefficientError, SystemSpec
from pxlap.varlebesgue import luxemburg_norm

G = build_grid(1, 33)
X = G.coords[0]


def spec(**kw):
    base = dict(p=("2", "2.5"), q=("2", "3"), r=("1.5", "2"), alpha=("0.3", "0.1"),
                gamma=("0.2", "0"), A="1 + t", f=("u + v", "v*x"), g=("v^2", "1"))
    base.update(kw)
    return SystemSpec.from_expressions(G, **base)


def test_rhs_matches_hand_assembly():
    s = spec()
    u1, u2 = np.sin(np.pi * X), X * (1 - X)
    H1 = s.rhs(1, u1, u2)
    nq = luxemburg_norm(u2, s.q[0])
    nr = luxemburg_norm(u2, s.r[0])
    expected = ((u1 + u2) * nq**0.3 + u2**2 * nq**0.2) / (1 + nr)   # s defaults to q
    np.testing.assert_allclose(H1, expected, rtol=1e-13)
    H2 = s.rhs(2, u1, u2)
    mq = luxemburg_norm(u1, s.q[1])
    mr = luxemburg_norm(u1, s.r[1])
    np.testing.assert_allclose(H2, (u2 * X * mq**0.1 + 1.0) / (1 + mr), rtol=1e-13)


@pytest.mark.parametrize("field, value, needle", [
    ("p", ("1", "2"), "p1 has minimum 1"),
    ("q", ("2", "0.5"), "q2 has minimum 0.5"),
    ("r", ("0.9", "2"), "r1 has minimum 0.9"),
    ("alpha", ("-0.1", "0"), "alpha1 has minimum -0.1"),
])
def test_hypothesis_gates(field, value, needle):
    with pytest.raises(HypothesisError, match=r"\(H\)") as info:
        spec(**{field: value})
    assert needle in str(info.value)


def test_regime_tag_validated():
    with pytest.raises(ValueError):
        spec(regime="A3")


def test_y_rejected_on_interval():
    with pytest.raises(ValueError, match="'y'"):
        spec(A="1 + y")


def test_nonpositive_coefficient_is_hard_error():
    s = spec(A="t - 10")
    with pytest.raises(CoefficientError):
        s.rhs(1, np.ones(G.size), np.ones(G.size))


def test_coefficient_shapes_and_range():
    s = spec(A="1 + t*x")
    assert s.coefficient(2.0).shape == (G.size,)
    assert s.coefficient(np.array([[0.0], [1.0]])).shape == (2, G.size)
    lo, hi = s.coefficient_range(0.0, 3.0)
    np.testing.assert_allclose(lo, 1.0)
    np.testing.assert_allclose(hi, 1 + 3 * X)


def test_dimension_compliance_recorded_only():
    assert not spec().below_dimension()
