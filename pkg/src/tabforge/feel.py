"""Expression-language subset used in decision tables and gateway guards.

The grammar lives in feel_grammar.ebnf at the repository root; that file is
the normative contract for this parser. Two entry points:

  eval_expression(text, ctx)        -> Value
  eval_unary_test(text, value, ctx) -> TriBool

Null handling: any Null operand propagates to Null, except equality against
the literal ``null`` (``x = null`` / ``x != null``), which is a definedness
test and yields a Boolean. In unary tests, Unknown arises exactly when the
tested value or a test operand is Null; mismatched kinds simply do not match.
"""

from __future__ import annotations

import decimal
from decimal import Decimal
from functools import lru_cache

from .values import (
    DECIMAL_CONTEXT,
    FALSE,
    NULL,
    TRUE,
    Context,
    Kind,
    TriBool,
    Value,
    boolean,
    number,
    text,
    tri_and,
    tri_or,
    tri_of_value,
    value_of_tri,
)


class FeelError(Exception):
    code = "EvalError"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class FeelSyntaxError(FeelError):
    code = "SyntaxError"


class FeelTypeError(FeelError):
    code = "TypeMismatch"


# ---------------------------------------------------------------------------
# Lexer

_KEYWORDS = {"and", "or", "not", "true", "false", "null"}
_TWO_CHAR = {"<=", ">=", "!=", ".."}
_ONE_CHAR = set("=<>+-*/()[],")


def _tokenize(src: str) -> list[tuple[str, object]]:
    tokens: list[tuple[str, object]] = []
    i, n = 0, len(src)
    while i < n:
        c = src[i]
        if c.isspace():
            i += 1
            continue
        if src[i : i + 2] in _TWO_CHAR:
            tokens.append((src[i : i + 2], None))
            i += 2
            continue
        if c.isdigit() or (c == "." and i + 1 < n and src[i + 1].isdigit()):
            j = i
            while j < n and src[j].isdigit():
                j += 1
            # a dot starts a fraction only when not the ".." range operator
            if j < n and src[j] == "." and not (j + 1 < n and src[j + 1] == "."):
                j += 1
                if j >= n or not src[j].isdigit():
                    raise FeelSyntaxError(f"malformed number at position {i}: {src!r}")
                while j < n and src[j].isdigit():
                    j += 1
            tokens.append(("NUMBER", Decimal(src[i:j])))
            i = j
            continue
        if c == '"':
            j = i + 1
            out = []
            while j < n and src[j] != '"':
                if src[j] == "\\":
                    j += 1
                    if j >= n:
                        break
                    esc = src[j]
                    out.append({"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\"}.get(esc))
                    if out[-1] is None:
                        raise FeelSyntaxError(f"unknown escape \\{esc} in string")
                else:
                    out.append(src[j])
                j += 1
            if j >= n:
                raise FeelSyntaxError(f"unterminated string in {src!r}")
            tokens.append(("STRING", "".join(out)))
            i = j + 1
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            word = src[i:j]
            tokens.append((word, None) if word in _KEYWORDS else ("NAME", word))
            i = j
            continue
        if c in _ONE_CHAR:
            tokens.append((c, None))
            i += 1
            continue
        raise FeelSyntaxError(f"unexpected character {c!r} at position {i}")
    tokens.append(("EOF", None))
    return tokens


# ---------------------------------------------------------------------------
# Parser (recursive descent; AST as tuples)

_CMP_OPS = ("=", "!=", "<", "<=", ">", ">=")


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = _tokenize(src)
        self.pos = 0

    def peek(self) -> str:
        return self.tokens[self.pos][0]

    def next(self) -> tuple[str, object]:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str):
        tok, val = self.next()
        if tok != kind:
            raise FeelSyntaxError(f"expected {kind!r}, got {tok!r} in {self.src!r}")
        return val

    def at_end(self) -> bool:
        return self.peek() == "EOF"

    # expression grammar ---------------------------------------------------

    def expression(self):
        node = self.conjunction()
        while self.peek() == "or":
            self.next()
            node = ("or", node, self.conjunction())
        return node

    def conjunction(self):
        node = self.comparison()
        while self.peek() == "and":
            self.next()
            node = ("and", node, self.comparison())
        return node

    def comparison(self):
        node = self.additive()
        if self.peek() in _CMP_OPS:
            op = self.next()[0]
            node = ("cmp", op, node, self.additive())
        return node

    def additive(self):
        node = self.multiplicative()
        while self.peek() in ("+", "-"):
            op = self.next()[0]
            node = ("bin", op, node, self.multiplicative())
        return node

    def multiplicative(self):
        node = self.unary()
        while self.peek() in ("*", "/"):
            op = self.next()[0]
            node = ("bin", op, node, self.unary())
        return node

    def unary(self):
        if self.peek() == "-":
            self.next()
            return ("neg", self.unary())
        return self.primary()

    def primary(self):
        tok, val = self.next()
        if tok == "NUMBER":
            return ("num", val)
        if tok == "STRING":
            return ("str", val)
        if tok == "true":
            return ("bool", True)
        if tok == "false":
            return ("bool", False)
        if tok == "null":
            return ("null",)
        if tok == "not":
            self.expect("(")
            inner = self.expression()
            self.expect(")")
            return ("not", inner)
        if tok == "NAME":
            return ("name", val)
        if tok == "(":
            inner = self.expression()
            self.expect(")")
            return inner
        raise FeelSyntaxError(f"unexpected token {tok!r} in {self.src!r}")

    # unary-test grammar ----------------------------------------------------

    def unary_tests(self):
        if self.peek() == "-" and self.tokens[self.pos + 1][0] == "EOF":
            self.next()
            return ("ut_any",)
        return ("ut_or", self.positive_tests())

    def positive_tests(self):
        tests = [self.single_test()]
        while self.peek() == ",":
            self.next()
            tests.append(self.single_test())
        return tests

    def single_test(self):
        tok = self.peek()
        if tok in _CMP_OPS:
            op = self.next()[0]
            return ("ut_cmp", op, self.additive())
        if tok in ("[", "(", "]"):
            return self.interval()
        if tok == "not":
            self.next()
            self.expect("(")
            tests = self.positive_tests()
            self.expect(")")
            return ("ut_not", tests)
        return ("ut_expr", self.expression())

    def interval(self):
        open_tok = self.next()[0]
        low_closed = open_tok == "["
        lo = self.additive()
        self.expect("..")
        hi = self.additive()
        close_tok = self.next()[0]
        if close_tok not in ("]", ")", "["):
            raise FeelSyntaxError(f"bad interval close {close_tok!r} in {self.src!r}")
        high_closed = close_tok == "]"
        return ("ut_interval", low_closed, lo, hi, high_closed)


@lru_cache(maxsize=4096)
def parse_expression(src: str):
    p = _Parser(src)
    node = p.expression()
    if not p.at_end():
        raise FeelSyntaxError(f"trailing input after expression: {src!r}")
    return node


@lru_cache(maxsize=4096)
def parse_unary_tests(src: str):
    p = _Parser(src)
    node = p.unary_tests()
    if not p.at_end():
        raise FeelSyntaxError(f"trailing input after unary tests: {src!r}")
    return node


# ---------------------------------------------------------------------------
# Evaluation

def _arith(op: str, a: Value, b: Value) -> Value:
    if a.is_null() or b.is_null():
        return NULL
    if op == "+" and a.kind is Kind.TEXT and b.kind is Kind.TEXT:
        return text(a.raw + b.raw)
    if a.kind is not Kind.NUMBER or b.kind is not Kind.NUMBER:
        raise FeelTypeError(f"cannot apply {op!r} to {a.kind.value} and {b.kind.value}")
    try:
        if op == "+":
            return number(DECIMAL_CONTEXT.add(a.raw, b.raw))
        if op == "-":
            return number(DECIMAL_CONTEXT.subtract(a.raw, b.raw))
        if op == "*":
            return number(DECIMAL_CONTEXT.multiply(a.raw, b.raw))
        return number(DECIMAL_CONTEXT.divide(a.raw, b.raw))
    except (decimal.DivisionByZero, decimal.InvalidOperation):
        return NULL


def _equal(a: Value, b: Value) -> bool:
    # only called with both operands non-null
    if a.kind is not b.kind:
        return False
    return a.raw == b.raw


def _order(op: str, a: Value, b: Value) -> Value:
    if a.kind is not b.kind or a.kind not in (Kind.NUMBER, Kind.TEXT):
        return NULL
    if op == "<":
        return boolean(a.raw < b.raw)
    if op == "<=":
        return boolean(a.raw <= b.raw)
    if op == ">":
        return boolean(a.raw > b.raw)
    return boolean(a.raw >= b.raw)


def _eval(node, ctx: Context) -> Value:
    tag = node[0]
    if tag == "num":
        return number(node[1])
    if tag == "str":
        return text(node[1])
    if tag == "bool":
        return boolean(node[1])
    if tag == "null":
        return NULL
    if tag == "name":
        return ctx.get(node[1])
    if tag == "neg":
        v = _eval(node[1], ctx)
        if v.is_null():
            return NULL
        if v.kind is not Kind.NUMBER:
            raise FeelTypeError(f"cannot negate {v.kind.value}")
        return number(DECIMAL_CONTEXT.minus(v.raw))
    if tag == "bin":
        return _arith(node[1], _eval(node[2], ctx), _eval(node[3], ctx))
    if tag == "cmp":
        op, left, right = node[1], node[2], node[3]
        a = _eval(left, ctx)
        b = _eval(right, ctx)
        if op in ("=", "!="):
            # x = null / x != null test for definedness rather than propagating
            if left == ("null",) or right == ("null",):
                eq = a.is_null() == b.is_null() and (a.is_null() or _equal(a, b))
                return boolean(eq if op == "=" else not eq)
            if a.is_null() or b.is_null():
                return NULL
            eq = _equal(a, b)
            return boolean(eq if op == "=" else not eq)
        if a.is_null() or b.is_null():
            return NULL
        return _order(op, a, b)
    if tag == "and":
        return value_of_tri(tri_and(tri_of_value(_eval(node[1], ctx)), tri_of_value(_eval(node[2], ctx))))
    if tag == "or":
        return value_of_tri(tri_or(tri_of_value(_eval(node[1], ctx)), tri_of_value(_eval(node[2], ctx))))
    if tag == "not":
        return value_of_tri(~tri_of_value(_eval(node[1], ctx)))
    raise FeelError(f"unknown node {tag!r}")


def eval_expression(src: str, ctx: Context) -> Value:
    return _eval(parse_expression(src), ctx)


def _compare_tri(op: str, value: Value, operand: Value) -> TriBool:
    """Three-valued comparison for unary tests.

    Null on either side -> Unknown; kind mismatch is a plain non-match.
    """
    if value.is_null() or operand.is_null():
        return TriBool.UNKNOWN
    if op in ("=", "!="):
        eq = _equal(value, operand)
        return TriBool.TRUE if (eq if op == "=" else not eq) else TriBool.FALSE
    if value.kind is not operand.kind or value.kind not in (Kind.NUMBER, Kind.TEXT):
        return TriBool.FALSE
    res = _order(op, value, operand)
    return TriBool.TRUE if res.raw else TriBool.FALSE


def _eval_test(node, value: Value, ctx: Context) -> TriBool:
    tag = node[0]
    if tag == "ut_cmp":
        return _compare_tri(node[1], value, _eval(node[2], ctx))
    if tag == "ut_interval":
        _, low_closed, lo_n, hi_n, high_closed = node
        lo = _eval(lo_n, ctx)
        hi = _eval(hi_n, ctx)
        lower = _compare_tri(">=" if low_closed else ">", value, lo)
        upper = _compare_tri("<=" if high_closed else "<", value, hi)
        return tri_and(lower, upper)
    if tag == "ut_not":
        return ~_disjunction(node[1], value, ctx)
    if tag == "ut_expr":
        expr = node[1]
        if expr == ("null",):
            return TriBool.TRUE if value.is_null() else TriBool.FALSE
        operand = _eval(expr, ctx)
        # a bare boolean entry like `true` matches boolean values by equality
        return _compare_tri("=", value, operand)
    raise FeelError(f"unknown test node {tag!r}")


def _disjunction(tests, value: Value, ctx: Context) -> TriBool:
    result = TriBool.FALSE
    for t in tests:
        result = tri_or(result, _eval_test(t, value, ctx))
        if result is TriBool.TRUE:
            return result
    return result


def eval_unary_test(src: str, value: Value, ctx: Context) -> TriBool:
    node = parse_unary_tests(src)
    if node[0] == "ut_any":
        return TriBool.TRUE
    return _disjunction(node[1], value, ctx)
