import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pxlap.applications import sublinear_setup
from pxlap.domain import GridFunction, build_grid
from pxlap.fixedpoint import (PicardOptions, a_priori_bound, continuum_sweep, fixed_point_map,
                              nonlocal_bound, nonlocal_rhs, solve_system, truncate, weak_residual)
from pxlap.pxsolver import comparison_check, discrete_poincare_constant, solve_constant_rhs
from pxlap.subsuper import SubSuperPair
from pxlap.system import CoefficientError, SystemSpec
from pxlap.varlebesgue import luxemburg_norm

G = build_grid(1, 129)
X = G.coords[0]


def linear_spec(grid=G, f=("1", "1")):
    return SystemSpec.from_expressions(grid, p=("2", "2"), f=f, monotone_in_other=True)


def box(spec, top=1.0):
    lo = GridFunction(spec.grid, 0.0)
    hi = GridFunction(spec.grid, np.where(spec.grid.boundary_mask, 0.0, top))
    return SubSuperPair(lo, lo, hi, hi)


@pytest.fixture(scope="module")
def sublinear():
    return sublinear_setup(G)


def random_in_box(pair, r):
    return [lo.values + r.uniform(0, 1, G.size) * (hi.values - lo.values)
            for lo, hi in zip(pair.lower, pair.upper)]


# -------------------------------------------------------------- truncate
def test_truncate_examples():
    lo = GridFunction(G, 0.1 * np.sin(np.pi * X))
    hi = GridFunction(G, 1.0)
    assert np.array_equal(truncate(GridFunction(G, -5.0), lo, hi).values, lo.values)
    assert np.array_equal(truncate(GridFunction(G, 1e300), lo, hi).values, hi.values)
    mid = GridFunction(G, 0.5 * np.sin(np.pi * X))
    assert np.array_equal(truncate(mid, lo, hi).values, mid.values)


def test_truncate_rejects_misordered_box():
    with pytest.raises(ValueError):
        truncate(GridFunction(G, 0.0), GridFunction(G, 1.0), GridFunction(G, 0.0))


@given(st.integers(0, 2**31), st.floats(-3, 3))
def test_truncate_idempotent(seed, shift):
    r = np.random.default_rng(seed)
    lo = GridFunction(G, r.normal(size=G.size))
    hi = GridFunction(G, lo.values + r.uniform(0, 2, G.size))
    z = GridFunction(G, shift + r.normal(size=G.size) * 2)
    once = truncate(z, lo, hi)
    assert np.array_equal(truncate(once, lo, hi).values, once.values)
    assert lo.leq(once) and once.leq(hi)


# ------------------------------------------------------------ nonlocal rhs
def test_rhs_zero_reactions():
    spec = linear_spec(f=("0", "0"))
    assert np.all(nonlocal_rhs(1, X, X, spec).values == 0.0)


def test_rhs_reduces_to_pointwise_sum():
    spec = SystemSpec.from_expressions(G, p=("2", "2"), f=("u + v", "x"), g=("u*v", "1"))
    u, v = np.sin(np.pi * X), X * (1 - X)
    np.testing.assert_allclose(nonlocal_rhs(1, u, v, spec).values, u + v + u * v, rtol=1e-15)
    np.testing.assert_allclose(nonlocal_rhs(2, u, v, spec).values, X + 1, rtol=1e-15)


def test_rhs_component_index():
    with pytest.raises(ValueError):
        nonlocal_rhs(3, X, X, linear_spec())


def test_rhs_nonpositive_coefficient():
    spec = SystemSpec.from_expressions(G, p=("2", "2"), f=("1", "1"), A="t - 5")
    with pytest.raises(CoefficientError):
        nonlocal_rhs(1, X, X, spec)


def test_rhs_bounded_on_box(sublinear):
    spec, pair = sublinear
    r = np.random.default_rng(3)
    for i in (1, 2):
        K = nonlocal_bound(i, spec, pair)
        for _ in range(20):
            z1, z2 = random_in_box(pair, r)
            assert np.abs(nonlocal_rhs(i, z1, z2, spec).values).max() <= K * (1 + 1e-12)


# ------------------------------------------------------------ the map
def test_map_at_zero_lambda(sublinear):
    spec, pair = sublinear
    u1, u2 = fixed_point_map(0.0, pair.upper_1, pair.upper_2, spec, pair)
    assert np.all(u1.values == 0.0) and np.all(u2.values == 0.0)


def test_map_constant_rhs_reduction():
    spec = linear_spec()
    pair = box(spec)
    u1, u2 = fixed_point_map(1.0, X, X, spec, pair)
    z = solve_constant_rhs(1.0, spec.p[0]).u.values
    np.testing.assert_allclose(u1.values, z, atol=1e-13)
    np.testing.assert_allclose(u2.values, z, atol=1e-13)


def test_map_lifts_the_lower_pair(sublinear):
    spec, pair = sublinear
    u1, u2 = fixed_point_map(1.0, pair.lower_1, pair.lower_2, spec, pair)
    for k, u in enumerate((u1, u2)):
        assert comparison_check(pair.lower[k], u, spec.p[k]).passed
        assert np.all(u.values >= pair.lower[k].values - 1e-10)


def test_map_order_preserving(sublinear):
    spec, pair = sublinear
    r = np.random.default_rng(5)
    for _ in range(5):
        a1, a2 = random_in_box(pair, r)
        b1 = np.maximum(a1, random_in_box(pair, r)[0])
        b2 = np.maximum(a2, random_in_box(pair, r)[1])
        lo = fixed_point_map(1.0, a1, a2, spec, pair)
        hi = fixed_point_map(1.0, b1, b2, spec, pair)
        for k in (0, 1):
            assert (hi[k].values - lo[k].values).min() >= -1e-10


def test_map_bounded_a_priori(sublinear):
    spec, pair = sublinear
    r = np.random.default_rng(11)
    cp = discrete_poincare_constant(G)
    K = [nonlocal_bound(i, spec, pair) for i in (1, 2)]
    for _ in range(50):
        z1, z2 = random_in_box(pair, r)
        u = fixed_point_map(1.0, z1, z2, spec, pair)
        for k in (0, 1):
            assert luxemburg_norm(u[k].values, spec.p[k]) <= a_priori_bound(1.0, K[k], G, cp)


def test_map_continuous(sublinear):
    spec, pair = sublinear
    r = np.random.default_rng(2)
    z1, z2 = random_in_box(pair, r)
    base = fixed_point_map(1.0, z1, z2, spec, pair)
    d = 1e-6 * r.normal(size=G.size)
    d[G.boundary_mask] = 0
    moved = fixed_point_map(1.0, z1 + d, z2 - d, spec, pair)
    for k in (0, 1):
        assert luxemburg_norm(moved[k].values - base[k].values, spec.p[k]) <= 1e-3


# ------------------------------------------------------------ residual
def test_residual_of_zero_pair():
    spec = linear_spec()
    assert weak_residual(np.zeros(G.size), np.zeros(G.size), spec) == pytest.approx(1.0)


def test_residual_of_exact_solution():
    spec = linear_spec()
    z = solve_constant_rhs(1.0, spec.p[0]).u
    assert weak_residual(z, z, spec) <= 1e-10


# ------------------------------------------------------------ Picard
def test_decoupled_linear_case_one_step():
    spec = linear_spec()
    pair = box(spec)
    u1, u2, trace = solve_system(spec, pair)
    z = solve_constant_rhs(1.0, spec.p[0]).u.values
    assert trace.converged
    # the first step already lands on the fixed point; the second confirms it
    assert trace.rows[0]["residual"] <= 1e-10
    assert trace.iterations <= 2
    np.testing.assert_allclose(u1.values, z, atol=1e-13)
    assert trace.sandwich_ok and trace.positive_ok


def test_sublinear_preset_end_to_end(sublinear):
    spec, pair = sublinear
    assert pair.certified
    u1, u2, trace = solve_system(spec, pair)
    assert trace.converged and trace.last_residual <= 1e-8
    assert trace.sandwich_ok and trace.positive_ok
    assert min(r["margin_min"] for r in trace.rows[-1:]) >= -1e-10
    assert weak_residual(u1, u2, spec) <= 1e-8
    json.dumps(trace.rows)


def test_trace_rows_have_declared_fields(sublinear):
    spec, pair = sublinear
    _, _, trace = solve_system(spec, pair, PicardOptions(max_iter=3))
    assert set(trace.rows[0]) == {"n", "step_norm_1", "step_norm_2", "residual", "margin_min"}
    assert set(trace.verdict()) == {"converged", "sandwich_ok", "positive_ok"}


def test_nonconvergence_is_reported():
    spec = SystemSpec.from_expressions(G, p=("2", "2"), f=("v", "u"), monotone_in_other=True)
    pair = box(spec, top=10.0)
    start = (pair.upper_1.values, pair.upper_2.values)
    _, _, trace = solve_system(spec, pair, PicardOptions(max_iter=2), start=start)
    assert not trace.converged and "no convergence" in trace.message


def test_picard_options_validation():
    with pytest.raises(ValueError):
        PicardOptions(relaxation=0)
    with pytest.raises(ValueError):
        PicardOptions(shift=-1)


# ------------------------------------------------------------ sweep
def test_sweep_linear_growth():
    spec = linear_spec()
    pair = box(spec, top=10.0)
    table = continuum_sweep(spec, pair, [0.0, 0.5, 1.0, 2.0, 4.0])
    assert table.passes_through_origin and table.nondecreasing
    n = {r["lambda"]: r["norm_1"] for r in table.rows}
    for lam in (0.5, 2.0, 4.0):
        assert n[lam] == pytest.approx(lam * n[1.0], rel=1e-10)


def test_sweep_sublinear_nondecreasing(sublinear):
    spec, pair = sublinear
    table = continuum_sweep(spec, pair, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert table.passes_through_origin
    assert all(r["converged"] for r in table.rows)
    assert table.nondecreasing


def test_sweep_rejects_decreasing_lambdas():
    spec = linear_spec()
    with pytest.raises(ValueError):
        continuum_sweep(spec, box(spec), [1.0, 0.5])
