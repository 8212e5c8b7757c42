import math

import pytest
from hypothesis import given, settings, strategies as st

from coneflow import exprlang as ex
from coneflow.errors import ExprSyntaxError, NumericError, UnknownIdentifier

PARAMS = {"k1", "k1r"}


def leaf():
    return st.one_of(
        st.floats(0.1, 5.0).map(lambda v: ex.Num(round(v, 3))),
        st.integers(1, 3).map(ex.Var),
        st.sampled_from(sorted(PARAMS)).map(ex.Param),
    )


def trees():
    return st.recursive(
        leaf(),
        lambda sub: st.one_of(
            sub.map(ex.Neg),
            st.tuples(st.sampled_from("+-*"), sub, sub).map(lambda t: ex.Bin(*t)),
            st.tuples(sub, sub).map(lambda t: ex.Bin("/", t[0], ex.Bin("+", ex.Num(1.0), ex.Call("sqrt", (ex.Bin("*", t[1], t[1]),))))),
            sub.map(lambda a: ex.Call("exp", (ex.Bin("/", a, ex.Num(10.0)),))),
            sub.map(lambda a: ex.Call("sin", (a,))),
            sub.map(lambda a: ex.Call("cos", (a,))),
        ),
        max_leaves=12,
    )


class TestParse:
    def test_conserved_quantity_shape(self):
        e = ex.parse("x1 + x2 + 2*x3", 3)
        assert e == ex.Bin("+", ex.Bin("+", ex.Var(1), ex.Var(2)),
                           ex.Bin("*", ex.Num(2.0), ex.Var(3)))

    def test_unary_minus_binds_looser_than_power(self):
        e = ex.parse("-x1^2", 1)
        assert e == ex.Neg(ex.Bin("^", ex.Var(1), ex.Num(2.0)))
        assert ex.evaluate(e, [3.0]) == -9.0

    def test_power_right_associative(self):
        assert ex.evaluate(ex.parse("2^3^2", 1), [0.0]) == 512.0

    def test_mass_action_with_params(self):
        e = ex.parse("k1*x1*x2 - k1r*x3", 3, PARAMS)
        assert ex.evaluate(e, [1.0, 2.0, 3.0], {"k1": 1.0, "k1r": 1.0}) == -1.0

    def test_syntax_error_carries_offset(self):
        with pytest.raises(ExprSyntaxError) as info:
            ex.parse("x1 + + x2", 2)
        assert info.value.offset == 5

    def test_unknown_identifier(self):
        with pytest.raises(UnknownIdentifier):
            ex.parse("x1 + bogus", 2)
        with pytest.raises(UnknownIdentifier):
            ex.parse("x9", 2)

    def test_unknown_function(self):
        with pytest.raises(UnknownIdentifier):
            ex.parse("tanh(x1)", 1)

    def test_empty_input(self):
        with pytest.raises(ExprSyntaxError):
            ex.parse("   ", 1)

    def test_function_arity(self):
        with pytest.raises(ExprSyntaxError):
            ex.parse("pow(x1)", 1)


class TestEval:
    def test_direct_substitution(self):
        e = ex.parse("x1 + x2 + 2*x3", 3)
        assert ex.evaluate(e, [1.0, 1.0, 1.0]) == 4.0

    def test_annihilator(self):
        assert ex.evaluate(ex.parse("x1*x2", 3), [0.0, 5.0, 7.0]) == 0.0

    def test_division_by_zero(self):
        with pytest.raises(NumericError):
            ex.evaluate(ex.parse("1/x1", 1), [0.0])

    def test_log_domain(self):
        with pytest.raises(NumericError):
            ex.evaluate(ex.parse("ln(x1)", 1), [-1.0])

    def test_functions(self):
        e = ex.parse("exp(x1) + sqrt(x2) + pow(x3, 2)", 3)
        assert math.isclose(ex.evaluate(e, [0.0, 4.0, 3.0]), 1.0 + 2.0 + 9.0)


class TestDiff:
    def test_linear_coefficient(self):
        d = ex.diff(ex.parse("x1 + x2 + 2*x3", 3), 3)
        assert d == ex.Num(2.0)

    def test_constant_rule(self):
        assert ex.diff(ex.Num(17.0), 1) == ex.Num(0.0)

    def test_product_rule_value(self):
        d = ex.diff(ex.parse("k1*x1*x2", 2, {"k1"}), 1)
        val = ex.evaluate(d, [5.0, 2.0], {"k1": 1.0})
        assert math.isclose(val, 2.0)

    def test_matches_finite_differences_on_chem_pieces(self, chem):
        rng_pts = [[0.7, 1.3, 0.4], [2.0, 0.1, 1.0], [1.0, 1.0, 1.0]]
        exprs = list(chem.field) + [chem.integral]
        for e in exprs:
            for i in (1, 2, 3):
                d = ex.diff(e, i)
                for x in rng_pts:
                    step = 1e-6 * (1.0 + abs(x[i - 1]))
                    xp = list(x)
                    xm = list(x)
                    xp[i - 1] += step
                    xm[i - 1] -= step
                    fd = (ex.evaluate(e, xp, chem.params)
                          - ex.evaluate(e, xm, chem.params)) / (2 * step)
                    sym = ex.evaluate(d, x, chem.params)
                    assert abs(sym - fd) <= 1e-6 * (1.0 + abs(sym))

    def test_quotient_and_power(self):
        e = ex.parse("x1^3 / (1 + x1)", 1)
        d = ex.diff(e, 1)
        x = 0.8
        fd = (ex.evaluate(e, [x + 1e-7]) - ex.evaluate(e, [x - 1e-7])) / 2e-7
        assert math.isclose(ex.evaluate(d, [x]), fd, rel_tol=1e-6)

    def test_general_power_rule(self):
        e = ex.parse("x1^x2", 2)
        d = ex.diff(e, 2)
        val = ex.evaluate(d, [2.0, 3.0])
        assert math.isclose(val, (2.0 ** 3.0) * math.log(2.0))


class TestRoundTripAndProperties:
    @given(trees())
    @settings(max_examples=120, deadline=None)
    def test_print_parse_round_trip(self, tree):
        params = {"k1": 0.7, "k1r": 1.9}
        points = [[0.37, 1.21, 2.05], [1.0, 1.0, 1.0], [0.01, 3.3, 0.5],
                  [2.7, 0.11, 1.9], [0.6, 0.6, 0.6]]
        src = ex.to_str(tree)
        reparsed = ex.parse(src, 3, PARAMS)
        for x in points:
            try:
                expected = ex.evaluate(tree, x, params)
            except NumericError:
                continue
            assert math.isclose(ex.evaluate(reparsed, x, params), expected,
                                rel_tol=1e-12, abs_tol=1e-12)

    @given(trees())
    @settings(max_examples=80, deadline=None)
    def test_compiled_matches_tree_walk(self, tree):
        params = {"k1": 0.7, "k1r": 1.9}
        x = [0.9, 0.31, 1.7]
        try:
            expected = ex.evaluate(tree, x, params)
        except NumericError:
            return
        fn = ex.compile_expr(tree, params)
        assert math.isclose(fn(x), expected, rel_tol=1e-12, abs_tol=1e-12)

    @given(trees(), trees(), st.integers(1, 3))
    @settings(max_examples=60, deadline=None)
    def test_diff_additivity(self, a, b, i):
        params = {"k1": 0.7, "k1r": 1.9}
        x = [1.11, 0.63, 0.22]
        try:
            lhs = ex.evaluate(ex.diff(ex.Bin("+", a, b), i), x, params)
            rhs = (ex.evaluate(ex.diff(a, i), x, params)
                   + ex.evaluate(ex.diff(b, i), x, params))
        except NumericError:
            return
        assert math.isclose(lhs, rhs, rel_tol=1e-9, abs_tol=1e-9)
