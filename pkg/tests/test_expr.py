import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pxlap.expr import ExpressionError, compile_expression


def ev(text, **env):
    return float(compile_expression(text, tuple(env) or ("x", "y"))(**env))


@pytest.mark.parametrize("text, value", [
    ("1 + 2*3", 7.0),
    ("(1 + 2)*3", 9.0),
    ("2^3^2", 512.0),
    ("-2^2", -4.0),
    ("2^-1", 0.5),
    ("8/4/2", 1.0),
    ("1 - 2 - 3", -4.0),
    ("min2(3, 1 + 1)", 2.0),
    ("max2(-1, -2)", -1.0),
    ("abs(-3.5)", 3.5),
    ("exp(log(5))", 5.0),
    ("cos(pi)", -1.0),
    ("1.5e2 + .5", 150.5),
])
def test_constant_expressions(text, value):
    assert ev(text) == pytest.approx(value, rel=1e-15)


def test_variables_vectorize():
    x = np.linspace(0, 1, 5)
    out = compile_expression("x*(1 - x)")(x=x)
    np.testing.assert_allclose(out, x * (1 - x), rtol=0, atol=0)


def test_sin_half_pi():
    assert ev("2 + 0.5*sin(pi*x)", x=0.5) == 2.5


@pytest.mark.parametrize("text, column", [
    ("2 + ", 5),
    ("2 $ 3", 3),
    ("sin(x", 6),
    ("foo(1)", 1),
    ("z + 1", 1),
    ("(1 + 2))", 8),
    ("min2(1)", 1),
])
def test_errors_report_column(text, column):
    with pytest.raises(ExpressionError) as info:
        compile_expression(text)
    assert info.value.position + 1 == column
    assert f"column {column}" in str(info.value)


def test_empty_expression():
    with pytest.raises(ExpressionError, match="empty"):
        compile_expression("   ")


def test_non_finite_evaluation_rejected():
    with pytest.raises(ExpressionError, match="non-finite"):
        compile_expression("log(x)")(x=np.array([0.0, 1.0]))


def test_unbound_variable():
    with pytest.raises(ExpressionError, match="no value bound"):
        compile_expression("x + y").evaluate({"x": 1.0})


def test_constant_flag():
    assert compile_expression("pi*2").is_constant
    assert not compile_expression("x").is_constant


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0.1, 10))
def test_matches_python_arithmetic(a, b, c):
    text = f"({a!r}) + ({b!r})*({c!r}) - ({a!r})/({c!r})"
    assert ev(text) == pytest.approx(a + b * c - a / c, rel=1e-12, abs=1e-12)


@given(st.floats(0.1, 5), st.floats(-3, 3))
def test_power_matches_math(base, expo):
    assert ev(f"{base!r}^({expo!r})") == pytest.approx(math.pow(base, expo), rel=1e-14)


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=20))
def test_evaluation_is_deterministic(xs):
    x = np.array(xs)
    e = compile_expression("sin(3*x) + x^2 - max2(x, 0)")
    a, b = e(x=x), e(x=x)
    assert a.tobytes() == b.tobytes()
