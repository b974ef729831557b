import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from fedosovkit.errors import DomainError, OpaqueDerivativeError, ParseError, UnknownVariableError
from fedosovkit.prefix import parse, to_prefix
from fedosovkit.symbolic import (HBAR, ComplexExpr, coordinates, differentiate, evaluate,
                                 expr_equal, opaque, sym, to_numpy)

q, p = coordinates("q p")
H, L, r = sym("H"), sym("L"), sym("r")

# small random expression trees in q and p
_leaves = st.sampled_from([q, p, sp.Integer(2), sp.Rational(1, 3), q * p])
_unary = st.sampled_from([sp.sin, sp.cos, sp.exp, lambda x: x ** 2])


def _trees():
    return st.recursive(
        _leaves,
        lambda kids: st.one_of(
            st.tuples(kids, kids).map(lambda t: t[0] + t[1]),
            st.tuples(kids, kids).map(lambda t: t[0] * t[1]),
            st.tuples(_unary, kids).map(lambda t: t[0](t[1])),
        ),
        max_leaves=5,
    )


class TestSymbols:
    def test_canonical_table(self):
        assert sym("H") is sym("H")
        assert sym("H").is_positive
        assert sym("q").is_real and sym("q").is_positive is None
        assert HBAR == sym("hbar")

    def test_complex_expr(self):
        z = ComplexExpr(q, p)
        assert not z.is_real()
        assert (z + ComplexExpr(1, -p)).is_real()
        assert sp.expand(z.expr - (q + sp.I * p)) == 0


class TestDifferentiate:
    def test_linear(self):
        assert differentiate(-2 * H, H) == -2

    def test_table_rule(self):
        assert differentiate(sp.sin(q), q) == sp.cos(q)

    def test_polar_coefficient(self):
        assert expr_equal(differentiate(2 * L / r ** 2, r), -4 * L / r ** 3)

    def test_by_index(self):
        assert differentiate(q * p ** 2, 1, (q, p)) == 2 * q * p
        with pytest.raises(UnknownVariableError):
            differentiate(q, 3, (q, p))

    def test_opaque_without_rule(self):
        F = opaque("Fnorule", 1)
        with pytest.raises(OpaqueDerivativeError):
            sp.diff(F(q), q)

    def test_opaque_rule(self):
        V = opaque("Vrule", 1, derivatives=[lambda x: 2 * x])
        assert sp.diff(V(q) ** 2, q) == 4 * q * V(q)

    @settings(max_examples=25, deadline=None)
    @given(_trees(), _trees())
    def test_linearity(self, a, b):
        assert expr_equal(differentiate(a + b, q), differentiate(a, q) + differentiate(b, q))

    @settings(max_examples=25, deadline=None)
    @given(_trees(), _trees())
    def test_leibniz(self, a, b):
        assert expr_equal(differentiate(a * b, p),
                          differentiate(a, p) * b + a * differentiate(b, p))

    @settings(max_examples=25, deadline=None)
    @given(_trees(), st.floats(0.2, 1.5), st.floats(-1.5, 1.5))
    def test_matches_finite_differences(self, e, x0, y0):
        d = differentiate(e, q)
        h = 1e-5
        fd = (evaluate(e, {q: x0 + h, p: y0}) - evaluate(e, {q: x0 - h, p: y0})) / (2 * h)
        exact = evaluate(d, {q: x0, p: y0})
        assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact))


class TestEvaluate:
    def test_values(self):
        assert evaluate(-2 * H, {H: 3}) == -6
        assert evaluate(HBAR * q, {"q": 2}, hbar=0.5) == 1.0

    def test_declared_singularity(self):
        with pytest.raises(DomainError):
            evaluate(-1 / (2 * H), {H: 0})

    def test_log_domain(self):
        with pytest.raises(DomainError):
            evaluate(sp.log(q), {q: -1.0})

    def test_missing_value(self):
        with pytest.raises(UnknownVariableError):
            evaluate(q + p, {q: 1})

    def test_opaque_numeric(self):
        V = opaque("Vnum", 1, numeric=lambda x: x ** 3)
        assert evaluate(V(q) + 1, {q: 2.0}) == 9.0
        np.testing.assert_allclose(to_numpy(V(q), (q,))(np.array([1.0, 2.0])), [1.0, 8.0])


class TestExprEqual:
    def test_exact(self):
        res = expr_equal(H + H, 2 * H)
        assert res and res.method == "exact"

    def test_trig_identity(self):
        res = expr_equal(sp.sin(q) ** 2 + sp.cos(q) ** 2, 1)
        assert res

    def test_different(self):
        assert not expr_equal(-2 * H, -1 / (2 * H))

    def test_distinct_derivatives_are_independent(self):
        W = sp.Function("W", real=True)(q, p)
        assert not expr_equal(sp.diff(W, q), sp.diff(W, p))
        assert expr_equal(sp.diff(W, q, p), sp.diff(W, p, q))

    def test_probabilistic_flag(self):
        res = expr_equal(sp.exp(q) * sp.exp(-q) * sp.sin(p), sp.sin(p) * sp.cos(0))
        assert res


class TestPrefix:
    @pytest.mark.parametrize("text", [
        "(* 2 L)",
        "(+ (* 1/2 (^ p 2)) (V q))",
        "(* (exp (* -2 H (/ hbar))) (- (* 4 H (/ hbar)) 1))",
        "(sin (+ q p))",
        "(atan2 p q)",
    ])
    def test_round_trip(self, text):
        e = parse(text)
        assert expr_equal(parse(to_prefix(e)), e)

    def test_decimal_is_exact(self):
        assert parse("0.1") == sp.Rational(1, 10)

    def test_derivative_head(self):
        F = parse("(d (W T H) T H)")
        assert isinstance(F, sp.Derivative)

    def test_unbalanced(self):
        with pytest.raises(ParseError) as info:
            parse("(+ q")
        assert info.value.position == 0

    def test_bad_arity(self):
        with pytest.raises(ParseError):
            parse("(sin q p)")

    @settings(max_examples=40, deadline=None)
    @given(_trees())
    def test_round_trip_random(self, e):
        assert expr_equal(parse(to_prefix(e)), e)
