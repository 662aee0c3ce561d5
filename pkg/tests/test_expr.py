import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from divweb.expr import (Add, Const, Cos, Div, EvalDomainError, Exp, Log, Mul,
                         ParseError, Pow, Sin, Sqrt, Sub, UnknownVariableError,
                         Var, ZeroVerdict, differentiate, evaluate,
                         is_identically_zero, parse_expr, simplify)


def test_parse_basic_shapes():
    e = parse_expr("1 + x*y", ("x", "y"))
    assert e == Add(Const(1), Mul(Var("x"), Var("y")))
    e2 = parse_expr("exp(x^2*y^2/4)", ("x", "y"))
    assert e2 == Exp(Div(Mul(Pow(Var("x"), Const(2)), Pow(Var("y"), Const(2))),
                         Const(4)))


def test_parse_rejects_unknown_variable():
    with pytest.raises(UnknownVariableError) as err:
        parse_expr("1 + z", ("x", "y"))
    assert err.value.name == "z"
    assert err.value.position == 4


def test_parse_errors_carry_position_and_expectation():
    with pytest.raises(ParseError) as err:
        parse_expr("x + ", ("x",))
    assert err.value.position == 4
    with pytest.raises(ParseError):
        parse_expr("x + * y", ("x", "y"))
    with pytest.raises(ParseError) as err:
        parse_expr("exp(x, y)", ("x", "y"))
    assert "one argument" in str(err.value)
    with pytest.raises(ParseError):
        parse_expr("foo(x)", ("x",))
    with pytest.raises(ParseError):
        parse_expr("(x + 1", ("x",))


def test_precedence_matches_convention():
    # ^ right-assoc, tighter than unary minus, tighter than * /
    e = parse_expr("-x^2", ("x",))
    assert evaluate(e, {"x": 3.0}) == -9.0
    e = parse_expr("2^3^2", ())
    assert evaluate(e, {}) == 512.0
    e = parse_expr("2^-2", ())
    assert evaluate(e, {}) == 0.25
    e = parse_expr("1 - 2 - 3", ())
    assert evaluate(e, {}) == -4.0
    e = parse_expr("12/3/2", ())
    assert evaluate(e, {}) == 2.0


def test_eval_examples():
    assert evaluate(parse_expr("1 + x*y", ("x", "y")),
                    {"x": 0.2, "y": 0.3}) == pytest.approx(1.06, abs=1e-15)
    assert evaluate(parse_expr("exp(x^2*y^2/4)", ("x", "y")),
                    {"x": 0.0, "y": 0.0}) == 1.0
    with pytest.raises(EvalDomainError):
        evaluate(parse_expr("log(x)", ("x",)), {"x": 0.0})
    with pytest.raises(EvalDomainError):
        evaluate(parse_expr("1/x", ("x",)), {"x": 0.0})
    with pytest.raises(EvalDomainError):
        evaluate(parse_expr("sqrt(x)", ("x",)), {"x": -1.0})
    with pytest.raises(EvalDomainError):
        evaluate(parse_expr("x^0.5", ("x",)), {"x": -2.0})


def test_eval_vectorised_over_arrays():
    e = parse_expr("exp(x)*y", ("x", "y"))
    xs = np.linspace(-1, 1, 11)
    ys = np.linspace(2, 3, 11)
    np.testing.assert_allclose(evaluate(e, {"x": xs, "y": ys}),
                               np.exp(xs) * ys)


def test_differentiate_examples():
    d = differentiate(parse_expr("1 + x*y", ("x", "y")), "x")
    xs = np.linspace(-1, 1, 17)
    np.testing.assert_allclose(evaluate(d, {"x": xs, "y": 0.7 * xs}),
                               0.7 * xs, atol=1e-15)

    dd = differentiate(differentiate(
        parse_expr("log(1 + x*y)", ("x", "y")), "x"), "y")
    vals = evaluate(dd, {"x": xs, "y": 0.5 * xs})
    np.testing.assert_allclose(vals, (1 + 0.5 * xs ** 2) ** -2, rtol=1e-13)

    dd2 = differentiate(differentiate(
        parse_expr("x^2*y^2/4", ("x", "y")), "x"), "y")
    vals2 = evaluate(dd2, {"x": xs, "y": 2 * xs})
    np.testing.assert_allclose(vals2, xs * 2 * xs, atol=1e-15)


def test_simplify_examples():
    x, y = Var("x"), Var("y")
    assert simplify(Mul(Const(1), x)) == x
    assert simplify(Add(Const(0), Mul(Const(0), y))) == Const(0)
    assert simplify(Sub(x, x)) == Const(0)
    assert simplify(Pow(x, Const(1))) == x
    assert simplify(Div(Const(0), x)) == Const(0)


def test_is_identically_zero_three_verdicts():
    x, y = Var("x"), Var("y")
    v = is_identically_zero(Sub(x, x), {"x": (-1, 1)})
    assert v.kind == ZeroVerdict.SYMBOLIC and v.is_zero

    # mixed second partial of a time-independent log density
    dens = parse_expr("r^2*sin(theta)", ("t", "r", "theta"))
    mixed = differentiate(differentiate(Log(dens), "r"), "t")
    v2 = is_identically_zero(mixed, {"t": (-1, 1), "r": (2, 5),
                                     "theta": (0.3, 2.8)})
    assert v2.kind == ZeroVerdict.SYMBOLIC

    e = parse_expr("(1 + x*y)^-2", ("x", "y"))
    v3 = is_identically_zero(e, {"x": (-0.5, 0.5), "y": (-0.5, 0.5)})
    assert v3.kind == ZeroVerdict.NONZERO and not v3.is_zero
    assert v3.max_abs == pytest.approx((1 - 0.25) ** -2, rel=1e-12)
    # witness sits at a corner where x*y is most negative
    assert abs(v3.witness["x"]) == pytest.approx(0.5)
    assert abs(v3.witness["y"]) == pytest.approx(0.5)
    assert v3.witness["x"] * v3.witness["y"] < 0


def test_is_identically_zero_numeric_tier():
    e = parse_expr("1e-12 * x", ("x",))
    v = is_identically_zero(e, {"x": (-1, 1)}, tol=1e-9)
    assert v.kind == ZeroVerdict.NUMERIC and v.is_zero


def test_is_identically_zero_validates_inputs():
    with pytest.raises(ValueError):
        is_identically_zero(Var("x"), {}, samples=0)
    with pytest.raises(ValueError):
        is_identically_zero(Var("x"), {"y": (0, 1)})


# ---------------------------------------------------------------------------
# randomised properties

_BINARY = ["add", "sub", "mul", "div", "pow"]
_UNARY = ["neg", "exp", "log", "sqrt", "sin", "cos"]


def _random_tree(rng: random.Random, depth: int, variables, *, smooth=False):
    """Random expression tree; ``smooth`` restricts to poly/exp/log shapes."""
    if depth == 0 or rng.random() < 0.3:
        if rng.random() < 0.5:
            return Const(round(rng.uniform(0.3, 2.5), 3))
        return Var(rng.choice(variables))
    unary = ["neg", "exp", "log"] if smooth else _UNARY
    if rng.random() < 0.35:
        op = rng.choice(unary)
        child = _random_tree(rng, depth - 1, variables, smooth=smooth)
        return {"neg": lambda u: -u, "exp": Exp, "log": Log, "sqrt": Sqrt,
                "sin": Sin, "cos": Cos}[op](child)
    op = rng.choice(_BINARY)
    left = _random_tree(rng, depth - 1, variables, smooth=smooth)
    right = _random_tree(rng, depth - 1, variables, smooth=smooth)
    if op == "pow":
        return Pow(left, Const(rng.choice([2.0, 3.0])))
    return {"add": Add, "sub": Sub, "mul": Mul, "div": Div}[op](left, right)


def test_derivative_matches_central_finite_differences():
    """500 random poly/exp/log trees, derivative vs FD at 1e-6 relative."""
    rng = random.Random(20240817)
    variables = ("x", "y")
    step = 1e-5
    checked = 0
    attempts = 0
    with np.errstate(all="ignore"):
        while checked < 500 and attempts < 8000:
            attempts += 1
            tree = _random_tree(rng, rng.randint(1, 4), variables, smooth=True)
            var = rng.choice(variables)
            point = {v: rng.uniform(0.4, 1.4) for v in variables}
            try:
                value = float(evaluate(tree, point))
                sym = float(evaluate(differentiate(tree, var), point))
                up = dict(point)
                up[var] += step
                down = dict(point)
                down[var] -= step
                fd = (float(evaluate(tree, up)) - float(evaluate(tree, down))) \
                    / (2 * step)
            except EvalDomainError:
                continue
            if not all(math.isfinite(v) for v in (value, sym, fd)):
                continue
            # central FD carries cancellation noise ~ eps*|f|/step and
            # truncation ~ |f'''| step^2; keep magnitudes where 1e-6
            # relative accuracy is actually attainable
            if abs(value) > 1e4 or max(abs(sym), abs(fd)) > 1e5:
                continue
            assert abs(sym - fd) <= 1e-6 * max(1.0, abs(sym)), str(tree)
            checked += 1
    assert checked == 500


def test_pretty_print_round_trip_random_trees():
    rng = random.Random(7)
    variables = ("x", "y", "z")
    for _ in range(400):
        tree = _random_tree(rng, rng.randint(1, 5), variables)
        text = str(tree)
        first = parse_expr(text, variables)
        again = parse_expr(str(first), variables)
        assert first == again, text


def test_pretty_print_round_trip_fixed_cases():
    cases = ["1 + x*y", "exp(x^2*y^2/4)", "-x^2 + 3/(x - 1)*2", "x^-2^x",
             "x - -y", "-(x + y)*z", "x*(y/z)", "(x^y)^z", "x^y^z",
             "1e-06*x", "2.5e3 - .0"]
    for text in cases:
        try:
            first = parse_expr(text, ("x", "y", "z"))
        except ParseError:
            continue
        assert parse_expr(str(first), ("x", "y", "z")) == first


@st.composite
def _exprs(draw):
    leaves = st.one_of(
        st.floats(min_value=0.1, max_value=3.0).map(lambda v: Const(round(v, 4))),
        st.sampled_from(["x", "y"]).map(Var),
    )

    def extend(children):
        return st.one_of(
            st.tuples(children, children).map(lambda ab: Add(*ab)),
            st.tuples(children, children).map(lambda ab: Sub(*ab)),
            st.tuples(children, children).map(lambda ab: Mul(*ab)),
            children.map(lambda u: -u),
            children.map(Exp),
        )

    return draw(st.recursive(leaves, extend, max_leaves=12))


@settings(max_examples=150, deadline=None)
@given(_exprs(), st.floats(0.1, 2.0), st.floats(0.1, 2.0))
def test_simplify_preserves_evaluation(tree, x, y):
    binding = {"x": x, "y": y}
    with np.errstate(all="ignore"):
        try:
            before = float(evaluate(tree, binding))
        except EvalDomainError:
            return
        if not math.isfinite(before):
            return
        after = float(evaluate(simplify(tree), binding))
    assert abs(before - after) <= 1e-12 * max(1.0, abs(before))


@settings(max_examples=150, deadline=None)
@given(_exprs())
def test_parse_of_pretty_print_is_fixed_point(tree):
    text = str(tree)
    first = parse_expr(text, ("x", "y"))
    assert parse_expr(str(first), ("x", "y")) == first
