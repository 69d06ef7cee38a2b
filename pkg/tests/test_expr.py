import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from narrownet.errors import DimensionError
from narrownet.expr import ExprEvalError, ExprSyntaxError, eval_expr, parse, tokenize


def value(src, x, d_in=None):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return eval_expr(parse(src, d_in or len(x)), x)


def test_sum_and_product():
    assert value("x1 + 2*x2", [1, 2])[0] == 5.0


def test_pythagorean_identity():
    for x in np.linspace(-5, 5, 41):
        assert value("sin(x1)^2 + cos(x1)^2", [x])[0] == pytest.approx(1.0, abs=1e-12)


def test_max_minus_min():
    assert value("max(x1,x2) - min(x1,x2)", [3, 1])[0] == 2.0


def test_division_by_zero():
    with pytest.raises(ExprEvalError):
        value("x1/x2", [1, 0])


def test_witness_center_and_corner():
    src = "(x1-0.5)^2 + (x2-0.5)^2"
    assert value(src, [0.5, 0.5])[0] == 0.0
    assert value(src, [1, 1])[0] == 0.5


# (source, x, hand-computed value)
PRECEDENCE = [
    ("1 + 2 * 3", [0], 7.0),
    ("(1 + 2) * 3", [0], 9.0),
    ("2 ^ 3 ^ 2", [0], 512.0),
    ("(2 ^ 3) ^ 2", [0], 64.0),
    ("-2 ^ 2", [0], -4.0),
    ("(-2) ^ 2", [0], 4.0),
    ("2 ^ -1", [0], 0.5),
    ("-x1 ^ 2", [3], -9.0),
    ("10 - 4 - 3", [0], 3.0),
    ("10 - (4 - 3)", [0], 9.0),
    ("100 / 10 / 5", [0], 2.0),
    ("100 / (10 / 5)", [0], 50.0),
    ("2 * 3 ^ 2", [0], 18.0),
    ("-3 * -2", [0], 6.0),
    ("--4", [0], 4.0),
    ("+5 - -5", [0], 10.0),
    ("1 - 2 * 3 + 4", [0], -1.0),
    ("x1 * x1 - x1", [4], 12.0),
    ("x1 / 2 * 4", [3], 6.0),
    ("2 ^ 0.5 ^ 2", [0], 2 ** 0.25),
    ("abs(-3) + sqrt(16)", [0], 7.0),
    ("max(1, 2) * min(3, 4)", [0], 6.0),
    ("exp(0) + log(1)", [0], 1.0),
    ("1.5e1 + .5", [0], 15.5),
    ("x1 ^ 2 ^ 0", [7], 7.0),
    ("-(x1 + 1) ^ 2", [1], -4.0),
    ("4 / 2 ^ 2", [0], 1.0),
    ("sqrt(x1 ^ 2 + x2 ^ 2)", [3, 4], 5.0),
    ("max(x1, x2) ^ 2 - min(x1, x2)", [3, -1], 10.0),
    ("cos(0) * (2 + 3) - -1", [0], 6.0),
]


@pytest.mark.parametrize("src,x,want", PRECEDENCE)
def test_precedence_table(src, x, want):
    assert value(src, x)[0] == pytest.approx(want, rel=1e-14)


def test_vector_output():
    e = parse("x1 + x2, x1 * x2, 3", 2)
    assert e.d_out == 3
    np.testing.assert_array_equal(e([2.0, 5.0]), [7.0, 10.0, 3.0])


def test_batch_evaluation():
    e = parse("x1 ^ 2 + x2", 2)
    pts = np.array([[1.0, 2.0], [3.0, -1.0]])
    np.testing.assert_array_equal(e(pts), [[3.0], [8.0]])


def test_integer_power_is_exact_multiplication():
    x = 0.1
    assert value("x1^2", [x])[0] == x * x
    assert value("x1^3", [x])[0] == x * x * x


def test_non_integer_power():
    assert value("x1^0.5", [2.0])[0] == pytest.approx(math.sqrt(2.0), rel=1e-15)
    with pytest.raises(ExprEvalError):
        value("x1^0.5", [-2.0])


@pytest.mark.parametrize("src,x", [("log(x1)", [0.0]), ("sqrt(x1)", [-1.0]), ("x1^-1", [0.0])])
def test_domain_errors(src, x):
    with pytest.raises(ExprEvalError) as info:
        value(src, x)
    assert info.value.offset >= 0


@pytest.mark.parametrize("src,offset", [
    ("x1 +", 4), ("x1 $ 2", 3), ("(x1", 3), ("foo(x1)", 0), ("sin(x1, x2)", 0), ("x3", 0), ("1 2", 2),
])
def test_syntax_errors(src, offset):
    with pytest.raises(ExprSyntaxError) as info:
        parse(src, 2)
    assert info.value.offset == offset


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        parse("x1", 2)([1.0, 2.0, 3.0])


def test_tokenize_offsets():
    toks = tokenize(" x1 + 22")
    assert [(t.kind, t.text, t.offset) for t in toks] == [
        ("name", "x1", 1), ("op", "+", 4), ("num", "22", 6), ("end", "", 8),
    ]


def test_deterministic():
    a, b = parse("sin(x1) * 2 + x2", 2), parse("sin(x1) * 2 + x2", 2)
    assert a == b


# random expression sources for the print/parse fixed point
_leaf = st.sampled_from(["x1", "x2", "1", "2.5", "0.5"])


def _combine(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        children.map(lambda c: f"-{c}"),
        children.map(lambda c: f"sin({c})"),
        st.tuples(children, children).map(lambda t: f"max({t[0]}, {t[1]})"),
        children.map(lambda c: f"({c})^2"),
    )


sources = st.recursive(_leaf, _combine, max_leaves=12)


@settings(max_examples=150, deadline=None)
@given(sources)
def test_print_parse_fixed_point(src):
    e1 = parse(src, 2)
    e2 = parse(e1.to_source(), 2)
    assert e2.to_source() == e1.to_source()
    pts = np.random.default_rng(0).normal(size=(8, 2))
    np.testing.assert_array_equal(e1(pts), e2(pts))
