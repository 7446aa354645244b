"""Decision table tests: corpus table behavior, hit policies, random oracle."""

import random
from decimal import Decimal
from importlib import resources

import pytest

from tabforge.dmn import (
    FIRST,
    UNIQUE,
    DecisionTable,
    DmnParseError,
    InputClause,
    OutputClause,
    Rule,
    TableError,
    evaluate_table,
    parse_dmn,
)
from tabforge.feel import eval_expression, eval_unary_test
from tabforge.values import NULL, Context, TriBool, number, text
from tabforge import canon


def corpus_table() -> DecisionTable:
    data = resources.files("tabforge.corpus").joinpath("inscost.dmn").read_bytes()
    return parse_dmn(data)


def ctx(**vars) -> Context:
    return Context(vars)


class TestParse:
    def test_corpus_table(self):
        table = corpus_table()
        assert table.id == "InsCost"
        assert table.hit_policy == UNIQUE
        assert len(table.inputs) == 1
        assert "percentage" in table.inputs[0].label
        assert table.inputs[0].expression == "quote / price * 100"
        assert [o.name for o in table.outputs] == ["outcome"]
        assert len(table.rules) == 2
        assert table.rules[0].input_entries == ("<= 15",)
        assert table.rules[1].input_entries == ("> 15",)

    def test_collect_hit_policy_rejected(self):
        data = resources.files("tabforge.corpus").joinpath("inscost.dmn").read_bytes()
        with pytest.raises(DmnParseError) as err:
            parse_dmn(data.replace(b'hitPolicy="UNIQUE"', b'hitPolicy="COLLECT"'))
        assert err.value.code == "UnsupportedHitPolicy"

    def test_arity_mismatch(self):
        with pytest.raises(DmnParseError) as err:
            DecisionTable(
                id="t",
                hit_policy=UNIQUE,
                inputs=(InputClause("x", "x"),),
                outputs=(OutputClause("y"),),
                rules=(Rule(("< 1", "< 2"), ('"a"',)),),
            )
        assert err.value.code == "ArityMismatch"

    def test_empty_rules(self):
        with pytest.raises(DmnParseError) as err:
            DecisionTable(
                id="t", hit_policy=UNIQUE,
                inputs=(InputClause("x", "x"),), outputs=(OutputClause("y"),), rules=(),
            )
        assert err.value.code == "EmptyRules"

    def test_not_xml(self):
        with pytest.raises(DmnParseError) as err:
            parse_dmn(b"<<nope")
        assert err.value.code == "XmlError"

    def test_encode_decode(self):
        table = corpus_table()
        again = DecisionTable.decode(canon.decode(canon.encode(table.encode())))
        assert again == table


class TestEvaluate:
    def test_proceed_at_12_pct(self):
        out = evaluate_table(corpus_table(), ctx(quote=number(1200), price=number(10000)))
        assert out == {"outcome": text("proceed")}

    def test_abort_at_20_pct(self):
        out = evaluate_table(corpus_table(), ctx(quote=number(2000), price=number(10000)))
        assert out == {"outcome": text("abort")}

    def test_boundary_exactly_15_proceeds(self):
        out = evaluate_table(corpus_table(), ctx(quote=number(1500), price=number(10000)))
        assert out == {"outcome": text("proceed")}

    def test_just_over_15_aborts(self):
        out = evaluate_table(
            corpus_table(), ctx(quote=number(Decimal("1500.01")), price=number(10000))
        )
        assert out == {"outcome": text("abort")}

    def test_multiple_matches_on_unique(self):
        table = DecisionTable(
            id="t", hit_policy=UNIQUE,
            inputs=(InputClause("x", "x"),), outputs=(OutputClause("y"),),
            rules=(Rule(("< 20",), ('"a"',)), Rule(("< 30",), ('"b"',))),
        )
        with pytest.raises(TableError) as err:
            evaluate_table(table, ctx(x=number(10)))
        assert err.value.code == "MultipleMatches"

    def test_first_policy_takes_declaration_order(self):
        table = DecisionTable(
            id="t", hit_policy=FIRST,
            inputs=(InputClause("x", "x"),), outputs=(OutputClause("y"),),
            rules=(Rule(("< 20",), ('"a"',)), Rule(("< 30",), ('"b"',))),
        )
        assert evaluate_table(table, ctx(x=number(10))) == {"y": text("a")}

    def test_no_rule_matched(self):
        table = DecisionTable(
            id="t", hit_policy=UNIQUE,
            inputs=(InputClause("x", "x"),), outputs=(OutputClause("y"),),
            rules=(Rule(("< 0",), ('"a"',)),),
        )
        with pytest.raises(TableError) as err:
            evaluate_table(table, ctx(x=number(10)))
        assert err.value.code == "NoRuleMatched"

    def test_null_input_excludes_rules(self):
        # quote missing -> input expression Null -> Unknown never matches
        with pytest.raises(TableError) as err:
            evaluate_table(corpus_table(), ctx(price=number(10000)))
        assert err.value.code == "NoRuleMatched"

    def test_all_wildcard_rule_matches_everything(self):
        table = DecisionTable(
            id="t", hit_policy=FIRST,
            inputs=(InputClause("x", "x"), InputClause("y", "y")),
            outputs=(OutputClause("z"),),
            rules=(Rule(("-", "-"), ("42",)),),
        )
        for context in (ctx(), ctx(x=number(1)), ctx(x=text("q"), y=NULL)):
            assert evaluate_table(table, context) == {"z": number(42)}

    def test_determinism_via_canonical_bytes(self):
        from tabforge.values import encode_value

        table = corpus_table()
        context = ctx(quote=number(1200), price=number(10000))
        first = canon.encode({k: encode_value(v) for k, v in evaluate_table(table, context).items()})
        for _ in range(5):
            again = canon.encode({k: encode_value(v) for k, v in evaluate_table(table, context).items()})
            assert again == first


# ---------------------------------------------------------------------------
# Random-table oracle

ENTRY_POOL = ["-", "< {k}", "<= {k}", "> {k}", ">= {k}", "= {k}", "[{a}..{b}]", '"{s}"', "{k1}, {k2}"]
TEXTS = ["red", "green", "blue"]


def random_table(rng: random.Random) -> DecisionTable:
    n_inputs = rng.randint(1, 4)
    n_rules = rng.randint(1, 16)
    inputs = tuple(InputClause(f"v{i}", f"v{i}") for i in range(n_inputs))
    rules = []
    for _ in range(n_rules):
        entries = []
        for _ in range(n_inputs):
            tpl = rng.choice(ENTRY_POOL)
            a, b = sorted((rng.randint(-5, 5), rng.randint(-5, 5)))
            entries.append(
                tpl.format(k=rng.randint(-5, 5), a=a, b=b, s=rng.choice(TEXTS),
                           k1=rng.randint(-5, 5), k2=rng.randint(-5, 5))
            )
        rules.append(Rule(tuple(entries), (str(rng.randint(0, 99)),)))
    return DecisionTable(
        id="rt", hit_policy=rng.choice([UNIQUE, FIRST]),
        inputs=inputs, outputs=(OutputClause("out"),), rules=tuple(rules),
    )


def random_context(rng: random.Random, n_inputs: int) -> Context:
    vars = {}
    for i in range(n_inputs):
        roll = rng.random()
        if roll < 0.5:
            vars[f"v{i}"] = number(rng.randint(-6, 6))
        elif roll < 0.8:
            vars[f"v{i}"] = text(rng.choice(TEXTS))
        # else: leave absent -> Null
    return Context(vars)


def brute_force(table: DecisionTable, context: Context):
    """Independent literal scan: evaluate every cell, apply the policy by hand."""
    values = [eval_expression(c.expression, context) for c in table.inputs]
    matched = []
    for i, rule in enumerate(table.rules):
        verdicts = [eval_unary_test(e, values[j], context) for j, e in enumerate(rule.input_entries)]
        if all(v is TriBool.TRUE for v in verdicts):
            matched.append(i)
    if len(matched) == 0:
        return ("error", "NoRuleMatched")
    if table.hit_policy == UNIQUE and len(matched) > 1:
        return ("error", "MultipleMatches")
    winner = table.rules[matched[0]]
    return ("ok", {c.name: eval_expression(e, context) for c, e in zip(table.outputs, winner.output_entries)})


def engine_result(table, context):
    try:
        return ("ok", evaluate_table(table, context))
    except TableError as err:
        return ("error", err.code)


def test_random_tables_match_brute_force():
    rng = random.Random(73)
    for _ in range(300):
        table = random_table(rng)
        for _ in range(3):
            context = random_context(rng, len(table.inputs))
            assert engine_result(table, context) == brute_force(table, context)
