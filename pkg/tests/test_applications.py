import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pxlap.applications import (ConcaveConvexParams, ConcaveConvexProblem, GateError,
                                LogisticParams, SublinearParams, ThresholdReport,
                                concave_convex_setup, logistic_setup, minimizer, psi,
                                sublinear_setup, theta_threshold)
from pxlap.applications.concave_convex import psi_at_minimizer
from pxlap.applications.logistic import (TruncatedReaction, lambda_tilde_scan,
                                         minimize_truncated_energy, seed_bump, truncated_energy)
from pxlap.domain import ExponentField, build_grid
from pxlap.fixedpoint import PicardOptions, solve_system, weak_residual
from pxlap.pxsolver import apply_px_laplacian

G = build_grid(1, 129)


# ---------------------------------------------------------------- sublinear
def test_sublinear_a1_certified():
    spec, pair = sublinear_setup(G)
    assert pair.certified and pair.margins["min_slack"] >= -1e-10
    assert spec.extra["layer"]["k"] == 16.0
    assert spec.extra["lambda"] == 2.0


def test_sublinear_a2_certified_with_positive_floor():
    spec, pair = sublinear_setup(G, SublinearParams(A="t/(1+t)", regime="A2", a0=1.0))
    assert pair.certified
    assert spec.extra["A_k"] > 0
    assert spec.extra["a1"] >= 1.0
    assert spec.extra["A_k"] <= spec.extra["a_inf"] / 2


def test_sublinear_gate_on_the_boundary_case():
    # alpha1+ + gamma1+ = 1 = p2- - 1
    params = SublinearParams(alpha=("0.5", "0.3"), gamma=("0.5", "0.3"))
    with pytest.raises(GateError, match=r"alpha1\+ \+ gamma1\+ < p"):
        sublinear_setup(G, params)


def test_sublinear_regime_mismatch():
    with pytest.raises(GateError, match=r"\(A1\)"):
        sublinear_setup(G, SublinearParams(A="0.5", a0=1.0))


def test_scan_index_monotone_in_a0():
    # doubling a constant coefficient halves the right-hand side
    idx = []
    for a0 in (1.0, 2.0, 4.0):
        spec, _ = concave_convex_setup(64.0, 1.0, G, ConcaveConvexProblem(A=repr(a0), a0=a0))
        idx.append(spec.extra["scan_index"])
    assert idx == sorted(idx, reverse=True)
    lams = [sublinear_setup(G, SublinearParams(A=repr(a), a0=a))[0].extra["lambda"]
            for a in (1.0, 2.0, 4.0)]
    assert lams == sorted(lams, reverse=True)


# ----------------------------------------------------------------------- Psi
def cc(lam=1.0, theta=1.0, rho=0.5, tau=1.5, K=1.0, A=0.5):
    return ConcaveConvexParams(lam, theta, rho, tau, K, A)


def test_params_validation():
    with pytest.raises(ValueError):
        cc(rho=1.0)
    with pytest.raises(ValueError):
        cc(tau=0.9)
    with pytest.raises(ValueError):
        cc(theta=0.0)
    with pytest.raises(ValueError):
        psi(0.0, cc())


def test_psi_blows_up_at_both_ends():
    p = cc()
    m = psi_at_minimizer(p)
    assert psi(1e-6, p) > 100 * m and psi(1e6, p) > 100 * m


def test_psi_closed_form_case():
    # rho = 1/2, tau = 3/2: c = 1, M = lam / theta, min Psi = 2 sqrt(lam theta) K / A
    p = cc(lam=2.0, theta=0.5)
    assert p.c == 1.0
    assert minimizer(p) == pytest.approx(4.0)
    assert psi_at_minimizer(p) == pytest.approx(4.0, rel=1e-14)


@settings(max_examples=20)
@given(st.floats(0.05, 0.95), st.floats(1.05, 4.0), st.floats(-3, 3), st.floats(-3, 3))
def test_psi_stationary_at_minimizer(rho, tau, log_lam, log_theta):
    p = cc(math.exp(log_lam), math.exp(log_theta), rho, tau)
    M = minimizer(p)
    h = 1e-5 * M
    d = (psi(M + h, p) - psi(M - h, p)) / (2 * h)
    assert abs(d) * M <= 1e-6 * psi(M, p)


def test_grid_search_agrees_with_closed_form():
    p = cc(lam=0.3, theta=2.0, rho=0.3, tau=2.2)
    grid = np.geomspace(1e-4, 1e4, 4001)
    j = int(np.argmin(psi(grid, p)))
    assert grid[j - 1] <= minimizer(p) <= grid[j + 1]


def test_theta_bisection_hits_unit_level():
    p = cc(lam=1.0, theta=10.0, K=1.0, A=0.5)
    t0 = theta_threshold(p)
    assert psi_at_minimizer(p.with_theta(t0)) == pytest.approx(1.0, abs=1e-6)
    assert psi_at_minimizer(p.with_theta(0.9 * t0)) < 1 < psi_at_minimizer(p.with_theta(1.1 * t0))


def test_minimizer_decreasing_in_theta():
    Ms = [minimizer(cc(theta=t)) for t in (0.1, 1.0, 10.0)]
    assert Ms[0] > Ms[1] > Ms[2]


# ----------------------------------------------------------- concave-convex
CC_A2 = ConcaveConvexProblem(regime="A2", A="2 - t/(1 + t)", a0=2.0, b0=1.0)


def test_concave_convex_a2_certified():
    spec, pair = concave_convex_setup(1.0, 0.01, G, CC_A2)
    assert pair.certified
    assert spec.extra["psi_min"] <= 1 and spec.extra["M"] >= 1


def test_concave_convex_a2_threshold_report():
    out = concave_convex_setup(1.0, 10.0, G, CC_A2)
    assert isinstance(out, ThresholdReport)
    assert out.psi_min > 1 and 0 < out.theta0 < 10.0
    spec, pair = concave_convex_setup(1.0, 0.5 * out.theta0, G, CC_A2)
    assert pair.certified


def test_concave_convex_a1_scan():
    spec, pair = concave_convex_setup(1.0, 1.0, G)
    assert pair.certified and spec.extra["lambda0"] <= 1.0


def test_concave_convex_gate_names_inequality():
    prob = ConcaveConvexProblem(eta=("0.5", "1.2"))
    with pytest.raises(GateError, match=r"p2\+ - 1 < eta1- \+ gamma1-"):
        concave_convex_setup(1.0, 1.0, G, prob)


# ---------------------------------------------------------------- logistic
def test_truncated_reaction():
    rc = TruncatedReaction("t*(1 - t)", 1.0)
    assert rc(np.array([-0.5, 0.5, 1.5])).tolist() == [0.0, 0.25, 0.0]
    # F(t) = t^2/2 - t^3/3
    assert rc.primitive(0.6) == pytest.approx(0.18 - 0.072, rel=1e-14)
    assert rc.primitive(3.0) == pytest.approx(1 / 6, rel=1e-14)
    assert rc.primitive(-1.0) == 0.0
    assert rc.lipschitz() == pytest.approx(1.0, rel=1e-3)


def test_small_lambda_keeps_seed_energy_positive():
    p = ExponentField.constant(G, 2.0, "laplacian")
    rc = TruncatedReaction("t*(1 - t)", 1.0)
    seed = seed_bump(G, 1.0)
    assert seed.max() == 0.5
    assert truncated_energy(seed, p, rc, 1.0) > 0
    assert lambda_tilde_scan(G, (p, p), (rc, rc), [1.0, 2.0, 4.0, 8.0, 16.0, 32.0]) == 32.0
    with pytest.raises(GateError):
        lambda_tilde_scan(G, (p, p), (rc, rc), [1.0, 2.0])


def test_minimizer_capped_and_descending():
    p = ExponentField.from_expr("2.2 + 0.3*x", G, "laplacian")
    rc = TruncatedReaction("t*(1 - t)", 1.0)
    m = minimize_truncated_energy(64.0, p, rc, seed_bump(G, 1.0))
    assert m.converged and m.residual <= 1e-8
    assert 0 < m.u.values[G.interior_idx].min() and m.u.max() <= 1.0 + 1e-8
    assert m.energy < 0
    assert all(b <= a + 1e-12 * abs(a) for a, b in zip(m.energies, m.energies[1:]))


@pytest.fixture(scope="module")
def logistic():
    return logistic_setup(None, G)


def test_logistic_pair(logistic):
    spec, pair = logistic
    assert pair.certified
    assert spec.extra["lambda"] == pytest.approx(2 * spec.extra["lambda0"], rel=1e-15)
    assert max(spec.extra["minimizer_residuals"]) <= 1e-8
    assert spec.extra["mu0"] == pytest.approx(spec.extra["A0"] / spec.extra["C"])
    for lo, th in zip(pair.lower, (1.0, 1.0)):
        assert 0 < lo.values[G.interior_idx].min() and lo.max() <= th + 1e-8


def test_logistic_constant_upper_has_vanishing_rhs(logistic):
    spec, pair = logistic
    for k, up in enumerate(pair.upper):
        assert np.all(apply_px_laplacian(up, spec.p[k]).values[G.interior_idx] == 0.0)
        assert np.all(spec.rhs(k + 1, pair.upper_1.values, pair.upper_2.values) == 0.0)


def test_logistic_picard_inside_sandwich(logistic):
    spec, pair = logistic
    u1, u2, trace = solve_system(spec, pair, PicardOptions(shift=spec.extra["picard_shift"]))
    assert trace.converged and trace.sandwich_ok and trace.positive_ok
    assert weak_residual(u1, u2, spec) <= 1e-8


def test_logistic_gate_on_reaction():
    with pytest.raises(GateError, match=r"\(f2\)"):
        logistic_setup(None, G, LogisticParams(f=("t*(2 - t)", "t*(1 - t)")))
