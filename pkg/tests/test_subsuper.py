import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pxlap.domain import ExponentField, boundary_distance, build_grid
from pxlap.pxsolver import apply_px_laplacian, solve_constant_rhs
from pxlap.subsuper import (BoundaryLayerParams, SubSuperPair, boundary_layer,
                            boundary_layer_profile, corner_ridge_mask, default_delta,
                            exponent_ratio_constant, layer_pair, lhopital_ratio,
                            negative_condition_margin, px_laplacian_boundary_layer,
                            select_sublinear_parameters, verify_subsupersolution)
from pxlap.system import SystemSpec

G = build_grid(1, 129)


def pconst(grid, v):
    return ExponentField.constant(grid, v, "laplacian")


def sublinear_spec(grid=G, A="1"):
    return SystemSpec.from_expressions(
        grid, p=("2", "2"), alpha=("0.3", "0.3"), gamma=("0.3", "0.3"), A=A,
        f=("u^(0.3)", "v^(0.3)"), g=("v^(0.3)", "u^(0.3)"), regime="A1", a0=1.0,
        monotone_in_other=True)


# ----------------------------------------------------------------- params
def test_params_invariants():
    bp = BoundaryLayerParams.from_k(8.0, 1 / 6, 0.5)
    assert math.exp(bp.k * bp.sigma) == pytest.approx(2.0, rel=1e-15)
    assert bp.mu == math.exp(-4.0)
    with pytest.raises(ValueError):
        BoundaryLayerParams.from_k(4.0, 0.1, 0.5)      # sigma = 0.173 > delta


def test_ratio_constant_formula():
    g = build_grid(1, 101)
    p1 = ExponentField.from_expr("2 + 0.5*x", g, "laplacian")
    p2 = pconst(g, 3)
    assert exponent_ratio_constant(p1, p2) == pytest.approx(1.0 / 1.5, rel=1e-12)


def test_default_delta():
    assert default_delta(build_grid(2, 5, ((0, 2), (0, 3)))) == pytest.approx(1 / 3)


# ---------------------------------------------------------------- profile
@pytest.mark.parametrize("k, delta, pinf, plateau", [
    # scipy quad of the defining integral, computed separately
    (8.0, 1 / 6, 2.0, 2.315679657404481),
    (16.0, 0.2, 2.5, 5.891588130948619),
])
def test_profile_values(k, delta, pinf, plateau):
    sigma = math.log(2) / k
    m = 2 / (pinf - 1)
    prof = boundary_layer_profile(np.array([0.0, sigma, 2 * delta, 0.45]), k, sigma, delta, m)
    assert prof[0] == 0.0
    assert prof[1] == pytest.approx(1.0, abs=1e-14)
    assert prof[2] == pytest.approx(plateau, rel=1e-10)
    assert prof[3] == prof[2]


@given(st.floats(4.5, 200), st.floats(1.05, 5))
def test_profile_monotone_and_continuous(k, pinf):
    delta = 1 / 6
    sigma = math.log(2) / k
    m = 2 / (pinf - 1)
    d = np.linspace(0, 0.5, 2001)
    prof = boundary_layer_profile(d, k, sigma, delta, m)
    assert np.all(np.diff(prof) >= -1e-12)
    for seam in (sigma, 2 * delta):
        below = boundary_layer_profile(np.nextafter(seam, 0), k, sigma, delta, m)
        at = boundary_layer_profile(seam, k, sigma, delta, m)
        assert abs(float(below) - float(at)) <= 1e-10 * max(1.0, float(at))


@given(st.sampled_from([(1, 65), (2, 33)]), st.floats(8, 64))
def test_layer_monotone_in_distance(shape, k):
    g = build_grid(*shape)
    bp = BoundaryLayerParams.from_k(k, default_delta(g), 0.5)
    phi = boundary_layer(bp, pconst(g, 2), g).values
    d = boundary_distance(g).values
    order = np.argsort(d, kind="stable")
    assert np.all(np.diff(phi[order]) >= -1e-12)
    assert np.all(phi[g.boundary_mask] == 0.0)


# ---------------------------------------------------------- analytic op
def test_analytic_operator_zero_on_plateau():
    bp = BoundaryLayerParams.from_k(16.0, 1 / 6, 0.5)
    out = px_laplacian_boundary_layer(bp, pconst(G, 2.5)).values
    d = boundary_distance(G).values
    assert np.all(out[d > 2 * bp.delta] == 0.0)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_analytic_operator_thin_layer_constant_p(p):
    bp = BoundaryLayerParams.from_k(16.0, 1 / 6, 0.5)
    out = px_laplacian_boundary_layer(bp, pconst(G, p)).values
    d = boundary_distance(G).values
    sel = d < bp.sigma
    k, mu = bp.k, bp.mu
    expected = -k * (k * mu * np.exp(k * d[sel])) ** (p - 1) * (p - 1)
    np.testing.assert_allclose(out[sel], expected, rtol=1e-13)
    assert np.all(out[sel] < 0)


def test_analytic_operator_matches_discrete_at_rate_h():
    gaps = []
    for n in (257, 513, 1025):
        g = build_grid(1, n)
        p = ExponentField.from_expr("2.2 + 0.3*x", g, "laplacian")
        bp = BoundaryLayerParams.from_k(8.0, 1 / 6, exponent_ratio_constant(p, p))
        analytic = px_laplacian_boundary_layer(bp, p).values
        discrete = apply_px_laplacian(bp.mu * boundary_layer(bp, p).values, p).values
        d = boundary_distance(g).values
        # smooth pieces only: away from the two seams and the boundary
        ok = ((d > 2 * g.h) & (np.abs(d - bp.sigma) > 2 * g.h) & (d < 2 * bp.delta - 2 * g.h))
        scale = np.abs(analytic[ok]).max()
        gaps.append(np.abs(analytic[ok] - discrete[ok]).max() / scale)
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.05
    assert gaps[1] / gaps[2] > 1.5


def test_negative_condition():
    g = build_grid(1, 257)
    p = ExponentField.from_expr("2 + 0.2*sin(pi*x)", g, "laplacian")
    a = exponent_ratio_constant(p, p)
    for k in (8.0, 16.0, 32.0):
        bp = BoundaryLayerParams.from_k(k, 1 / 6, a)
        assert negative_condition_margin(bp, p) > 0
    assert negative_condition_margin(BoundaryLayerParams.from_k(8.0, 1 / 6, a),
                                     pconst(g, 2)) == pytest.approx(1.0)


@pytest.mark.parametrize("pinf, s", [(2.0, 0.6), (3.0, 1.5), (2.5, 0.1)])
def test_lhopital_ratio_below_one(pinf, s):
    for k in (64.0, 128.0, 256.0):
        assert lhopital_ratio(k, pinf, s, 0.5) < 1


# ------------------------------------------------------------ ridge mask
def test_ridge_mask_counts():
    assert not corner_ridge_mask(G, 1 / 6).any()
    g = build_grid(2, 65)
    mask = corner_ridge_mask(g, default_delta(g))
    assert int(mask.sum()) == 252
    assert not np.any(mask & g.boundary_mask)


# ------------------------------------------------------------ verification
def test_selected_parameters_certify():
    spec = sublinear_spec()
    bp, lam = select_sublinear_parameters(spec)
    pair = layer_pair(spec, bp, lam)
    rep = verify_subsupersolution(pair, spec)
    assert rep.passed and rep.values["min_slack"] >= -1e-10
    assert pair.invariant_problems() == []
    assert pair.certify(rep).certified


def test_ordering_by_comparison():
    spec = sublinear_spec()
    bp, lam = select_sublinear_parameters(spec)
    for p in spec.p:
        low = bp.mu * boundary_layer(bp, p).values
        assert apply_px_laplacian(low, p).max() <= lam
        assert np.all(low <= solve_constant_rhs(lam, p).u.values + 1e-10)


def test_exact_solution_has_zero_slack():
    spec = SystemSpec.from_expressions(G, p=("2", "2"), f=("1", "1"), monotone_in_other=True)
    z = solve_constant_rhs(1.0, spec.p[0]).u
    pair = SubSuperPair(z, z, z, z)
    rep = verify_subsupersolution(pair, spec)
    assert rep.passed
    assert abs(rep.values["min_slack"]) <= 1e-9


def test_corrupted_pair_rejected():
    spec = sublinear_spec()
    bp, lam = select_sublinear_parameters(spec)
    pair = layer_pair(spec, bp, lam)
    bad = SubSuperPair(1e4 * pair.lower_1, 1e4 * pair.lower_2, pair.upper_1, pair.upper_2)
    rep = verify_subsupersolution(bad, spec)
    assert not rep.passed
    assert rep.values["min_slack"] < 0
    swapped = SubSuperPair(pair.upper_1, pair.upper_2, pair.lower_1, pair.lower_2)
    rep = verify_subsupersolution(swapped, spec)
    assert not rep.passed and any("exceeds" in n for n in rep.notes)


def test_small_multiples_of_a_sublinear_lower_stay_sub():
    # mu is about 1e-7 here, so 100 mu phi is still far below the sublinear threshold
    spec = sublinear_spec()
    bp, lam = select_sublinear_parameters(spec)
    pair = layer_pair(spec, bp, lam)
    scaled = SubSuperPair(100 * pair.lower_1, 100 * pair.lower_2, pair.upper_1, pair.upper_2)
    assert verify_subsupersolution(scaled, spec).passed


def test_report_fields():
    spec = sublinear_spec()
    bp, lam = select_sublinear_parameters(spec)
    rep = verify_subsupersolution(layer_pair(spec, bp, lam), spec, w_samples=3, seed=7)
    for key in ("sub_1", "super_2", "sub_interval_1", "min_slack", "corner_excluded",
                "reaction_sign_ok", "coefficient_positive_ok"):
        assert key in rep.values
    assert rep.values["w_samples"] == 3
    assert rep.to_dict()["passed"] is True
