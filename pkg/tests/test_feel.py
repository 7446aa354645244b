"""Expression engine tests: arithmetic exactness, null propagation, Kleene logic."""

from decimal import Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tabforge.feel import (
    FeelSyntaxError,
    FeelTypeError,
    eval_expression,
    eval_unary_test,
)
from tabforge.values import (
    NULL,
    Context,
    Kind,
    TriBool,
    boolean,
    number,
    text,
    tri_and,
    tri_or,
)


def ev(src, **vars):
    ctx = Context({k: v for k, v in vars.items()})
    return eval_expression(src, ctx)


def ut(src, value, **vars):
    ctx = Context({k: v for k, v in vars.items()})
    return eval_unary_test(src, value, ctx)


class TestArithmetic:
    def test_quote_pct(self):
        v = ev("quote / price * 100", quote=number(1200), price=number(10000))
        assert v == number(12)

    def test_exact_decimal(self):
        assert ev("0.1 + 0.2") == number(Decimal("0.3"))

    def test_precedence(self):
        assert ev("2 + 3 * 4") == number(14)
        assert ev("(2 + 3) * 4") == number(20)

    def test_unary_minus(self):
        assert ev("-5 + 3") == number(-2)
        assert ev("- -5") == number(5)

    def test_division_by_zero_is_null(self):
        # oracle: FEEL reference semantics map x/0 to null (DD-2 choice)
        assert ev("1 / 0") == NULL
        assert ev("0 / 0") == NULL

    def test_null_propagation(self):
        assert ev("a + 1") == NULL  # a absent -> Null
        assert ev("1 + a") == NULL
        assert ev("a * a") == NULL

    def test_text_concat(self):
        assert ev('"foo" + "bar"') == text("foobar")

    def test_number_plus_text_is_type_error(self):
        with pytest.raises(FeelTypeError):
            ev('1 + "x"')

    def test_negate_text_is_type_error(self):
        with pytest.raises(FeelTypeError):
            ev('-"x"')


class TestComparisons:
    def test_numeric(self):
        assert ev("3 < 4") == boolean(True)
        assert ev("4 <= 4") == boolean(True)
        assert ev("4 > 4") == boolean(False)
        assert ev("5 >= 4") == boolean(True)

    def test_equality(self):
        assert ev('"a" = "a"') == boolean(True)
        assert ev("1 != 2") == boolean(True)
        assert ev('1 = "1"') == boolean(False)  # kinds differ -> not equal

    def test_null_literal_tests(self):
        assert ev("a = null") == boolean(True)
        assert ev("a != null") == boolean(False)
        assert ev("a = null", a=number(5)) == boolean(False)
        assert ev("a != null", a=number(5)) == boolean(True)
        assert ev("null = null") == boolean(True)

    def test_null_operand_propagates(self):
        assert ev("a = 5") == NULL
        assert ev("a < 5") == NULL
        assert ev("5 != a") == NULL

    def test_mixed_kind_order_is_null(self):
        assert ev('1 < "x"') == NULL


class TestKleene:
    TRI = {"true": TriBool.TRUE, "false": TriBool.FALSE, "null": TriBool.UNKNOWN}

    @pytest.mark.parametrize("a", ["true", "false", "null"])
    @pytest.mark.parametrize("b", ["true", "false", "null"])
    def test_and_or_truth_tables(self, a, b):
        # oracle: Kleene logic computed independently over the 3x3 table
        ta, tb = self.TRI[a], self.TRI[b]
        got_and = ev(f"{a} and {b}")
        got_or = ev(f"{a} or {b}")
        expect = {TriBool.TRUE: boolean(True), TriBool.FALSE: boolean(False), TriBool.UNKNOWN: NULL}
        assert got_and == expect[tri_and(ta, tb)]
        assert got_or == expect[tri_or(ta, tb)]

    def test_not(self):
        assert ev("not(true)") == boolean(False)
        assert ev("not(false)") == boolean(True)
        assert ev("not(null)") == NULL

    def test_non_boolean_operand_counts_as_unknown(self):
        assert ev("false and 5") == boolean(False)
        assert ev("true or 5") == boolean(True)
        assert ev("true and 5") == NULL


class TestSyntax:
    @pytest.mark.parametrize(
        "src",
        ["1 +", "(1", '"unterminated', "1 2", "not 1", "= 5", "a ..b", "1..2"],
    )
    def test_rejects(self, src):
        with pytest.raises(FeelSyntaxError):
            ev(src)

    def test_string_escapes(self):
        assert ev('"a\\"b\\\\c\\n"') == text('a"b\\c\n')


class TestUnaryTests:
    def test_threshold_comparisons(self):
        assert ut("< 15", number(12)) is TriBool.TRUE
        assert ut("< 15", number(15)) is TriBool.FALSE
        assert ut("<= 15", number(15)) is TriBool.TRUE
        assert ut("> 15", number(Decimal("15.0001"))) is TriBool.TRUE

    def test_wildcard_always_true(self):
        for v in (number(1), text("x"), boolean(False), NULL):
            assert ut("-", v) is TriBool.TRUE

    def test_null_value_is_unknown(self):
        assert ut("< 15", NULL) is TriBool.UNKNOWN
        assert ut("= 3", NULL) is TriBool.UNKNOWN
        assert ut("[1..5]", NULL) is TriBool.UNKNOWN

    def test_bare_expression_means_equality(self):
        assert ut('"proceed"', text("proceed")) is TriBool.TRUE
        assert ut('"proceed"', text("abort")) is TriBool.FALSE
        assert ut("5", number(5)) is TriBool.TRUE
        assert ut("2 + 3", number(5)) is TriBool.TRUE

    def test_bare_null_tests_nullness(self):
        assert ut("null", NULL) is TriBool.TRUE
        assert ut("null", number(1)) is TriBool.FALSE

    def test_intervals(self):
        assert ut("[1..5]", number(1)) is TriBool.TRUE
        assert ut("[1..5]", number(5)) is TriBool.TRUE
        assert ut("(1..5)", number(1)) is TriBool.FALSE
        assert ut("(1..5)", number(5)) is TriBool.FALSE
        assert ut("]1..5[", number(1)) is TriBool.FALSE
        assert ut("]1..5[", number(3)) is TriBool.TRUE
        assert ut("[1..5)", number(5)) is TriBool.FALSE

    def test_disjunction(self):
        assert ut("1, 2, 3", number(2)) is TriBool.TRUE
        assert ut("1, 2, 3", number(4)) is TriBool.FALSE
        assert ut("< 0, > 10", number(20)) is TriBool.TRUE

    def test_not(self):
        assert ut("not(1, 2)", number(3)) is TriBool.TRUE
        assert ut("not(1, 2)", number(2)) is TriBool.FALSE
        assert ut("not(1)", NULL) is TriBool.UNKNOWN

    def test_mismatched_kind_is_false_not_unknown(self):
        assert ut("< 15", text("abc")) is TriBool.FALSE
        assert ut('"x"', number(3)) is TriBool.FALSE

    def test_context_variables_in_tests(self):
        assert ut("< limit", number(3), limit=number(10)) is TriBool.TRUE
        assert ut("< limit", number(3)) is TriBool.UNKNOWN  # limit absent -> Null


class TestProperties:
    num = st.decimals(allow_nan=False, allow_infinity=False, places=4, min_value=-10**9, max_value=10**9)

    @given(a=num, b=num)
    def test_addition_matches_decimal(self, a, b):
        got = ev(f"{a} + {b}")
        assert got.kind is Kind.NUMBER
        assert got.raw == a + b

    @given(a=num, b=num)
    def test_comparison_matches_decimal(self, a, b):
        assert ev(f"{a} <= {b}") == boolean(a <= b)

    @given(v=num)
    def test_interval_agrees_with_pair_of_comparisons(self, v):
        val = number(v)
        assert ut("[10..20]", val) is tri_and(
            ut(">= 10", val), ut("<= 20", val)
        )

    @given(v=num)
    def test_wildcard(self, v):
        assert ut("-", number(v)) is TriBool.TRUE
