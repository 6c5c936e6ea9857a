import numpy as np
import pytest
from hypothesis import given, strategies as st

from pxlap.domain import (ExponentField, GridFunction, GridMismatchError, HypothesisError,
                          boundary_distance, build_grid, eval_field)
from pxlap.expr import ExpressionError


def test_smallest_grid():
    g = build_grid(1, 3, (0, 1))
    assert g.h == 0.5
    assert g.interior_idx.tolist() == [1]
    assert g.coords[0][g.interior_idx[0]] == 0.5


def test_square_counts():
    g = build_grid(2, 5)
    assert g.size == 25
    assert g.interior_idx.size == 9
    assert g.h == 0.25


def test_hundred_cells():
    g = build_grid(1, 101)
    assert g.h == pytest.approx(0.01, rel=1e-15)
    assert g.interior_idx.size == 99


@pytest.mark.parametrize("args", [(1, 2), (1, 2.5), (3, 5), (1, 5, (1, 1)), (2, 5, ((0, 1), (2, 1)))])
def test_rejects_bad_grids(args):
    with pytest.raises(ValueError):
        build_grid(*args)


def test_rectangle_spacing():
    g = build_grid(2, 5, ((0, 2), (0, 1)))
    assert g.spacing == (0.5, 0.25)
    assert g.measure == 2.0
    assert g.integrate(np.ones(g.size)) == pytest.approx(2.0, rel=1e-14)


@given(st.integers(1, 2), st.integers(3, 30))
def test_index_sets_partition(dim, n):
    g = build_grid(dim, n)
    both = np.concatenate([g.interior_idx, g.boundary_idx])
    assert np.array_equal(np.sort(both), np.arange(g.size))
    on_edge = np.zeros(g.size, bool)
    for c in g.coords:
        on_edge |= (c == 0.0) | (c == 1.0)
    assert np.array_equal(on_edge, g.boundary_mask)


def test_distance_examples():
    g1 = build_grid(1, 5)
    assert boundary_distance(g1).values[2] == 0.5
    g2 = build_grid(2, 5)
    d = boundary_distance(g2).values
    k = np.flatnonzero((g2.coords[0] == 0.25) & (g2.coords[1] == 0.5))[0]
    assert d[k] == 0.25
    assert np.all(d[g2.boundary_idx] == 0.0)


@given(st.integers(1, 2), st.integers(3, 25))
def test_distance_properties(dim, n):
    g = build_grid(dim, n)
    d = boundary_distance(g)
    assert np.all(d.values >= 0)
    assert np.array_equal(d.values == 0, g.boundary_mask)
    nod = d.nodal()
    for ax in range(dim):
        assert np.all(np.abs(np.diff(nod, axis=ax)) <= g.h * (1 + 1e-12))


def test_eval_field_examples():
    g = build_grid(1, 5)
    assert np.all(eval_field("2", g).values == 2.0)
    assert eval_field("2 + 0.5*sin(pi*x)", g).values[2] == 2.5
    v = eval_field("x*(1-x)", g).values
    assert v[0] == 0.0 and v[-1] == 0.0


def test_eval_field_rejects_y_in_1d():
    with pytest.raises(ExpressionError, match="'y'"):
        eval_field("x + y", build_grid(1, 5))


@given(st.sampled_from(["x^2 + 1", "exp(-x)*cos(y)", "max2(x, y) - min2(x, 0.3)"]))
def test_eval_field_bit_identical(text):
    g = build_grid(2, 9)
    assert eval_field(text, g).values.tobytes() == eval_field(text, g).values.tobytes()


def test_grid_function_is_finite_and_immutable():
    g = build_grid(1, 5)
    with pytest.raises(ValueError):
        GridFunction(g, [0, 1, np.nan, 0, 0])
    u = GridFunction(g, np.zeros(5))
    with pytest.raises(ValueError):
        u.values[0] = 1.0
    with pytest.raises(AttributeError):
        u.values = np.ones(5)


def test_grid_function_mismatch():
    a = GridFunction(build_grid(1, 5), 1.0)
    b = GridFunction(build_grid(1, 7), 1.0)
    with pytest.raises(GridMismatchError):
        a + b
    with pytest.raises(GridMismatchError):
        GridFunction(build_grid(1, 5), np.zeros(4))


def test_nodewise_comparison():
    g = build_grid(1, 5)
    a, b = GridFunction(g, [0, 1, 2, 1, 0]), GridFunction(g, [0, 1, 3, 1, 0])
    assert a.leq(b) and not b.leq(a)
    assert b.leq(a, tol=1.0)


def test_exponent_field_extrema_and_gates():
    g = build_grid(1, 11)
    p = ExponentField.from_expr("2 + x", g, "laplacian")
    assert (p.inf, p.sup) == (2.0, 3.0)
    assert not p.below_dimension()
    with pytest.raises(HypothesisError, match=r"^\(H\)"):
        ExponentField.from_expr("1 + x", g, "laplacian")
    with pytest.raises(HypothesisError, match=r"^\(H\)"):
        ExponentField.constant(g, -0.1, "power")
    with pytest.raises(HypothesisError):
        ExponentField.constant(g, 0.9, "lebesgue")
    assert ExponentField.constant(g, 0.0, "power").inf == 0.0


@given(st.floats(1.0001, 5), st.floats(0, 3))
def test_laplacian_gate_accepts_above_one(lo, width):
    g = build_grid(1, 9)
    p = ExponentField(g, lo + width * g.coords[0], "laplacian")
    assert p.inf == pytest.approx(lo) and p.sup == pytest.approx(lo + width)
