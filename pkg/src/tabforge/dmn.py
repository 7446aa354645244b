"""Decision tables: DMN XML parsing and rule evaluation.

Hit policies are limited to Unique (exactly one rule may match) and First
(first matching rule in declaration order). A rule matches when every input
entry evaluates True against the evaluated input expressions; entries that
come out Unknown exclude the rule.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass

from .feel import eval_expression, eval_unary_test
from .values import Context, TriBool, Value

UNIQUE = "Unique"
FIRST = "First"

_HIT_POLICIES = {"UNIQUE": UNIQUE, "FIRST": FIRST}


class DmnParseError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class TableError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


@dataclass(frozen=True)
class InputClause:
    label: str
    expression: str


@dataclass(frozen=True)
class OutputClause:
    name: str


@dataclass(frozen=True)
class Rule:
    input_entries: tuple[str, ...]
    output_entries: tuple[str, ...]


@dataclass(frozen=True)
class DecisionTable:
    id: str
    hit_policy: str
    inputs: tuple[InputClause, ...]
    outputs: tuple[OutputClause, ...]
    rules: tuple[Rule, ...]

    def __post_init__(self):
        if not self.rules:
            raise DmnParseError("EmptyRules", f"table {self.id!r} has no rules")
        for i, rule in enumerate(self.rules):
            if len(rule.input_entries) != len(self.inputs):
                raise DmnParseError(
                    "ArityMismatch",
                    f"rule {i + 1} of table {self.id!r} has {len(rule.input_entries)} input entries, expected {len(self.inputs)}",
                )
            if len(rule.output_entries) != len(self.outputs):
                raise DmnParseError(
                    "ArityMismatch",
                    f"rule {i + 1} of table {self.id!r} has {len(rule.output_entries)} output entries, expected {len(self.outputs)}",
                )

    def encode(self) -> dict:
        return {
            "id": self.id,
            "hit_policy": self.hit_policy,
            "inputs": [{"label": c.label, "expression": c.expression} for c in self.inputs],
            "outputs": [{"name": c.name} for c in self.outputs],
            "rules": [{"when": list(r.input_entries), "then": list(r.output_entries)} for r in self.rules],
        }

    @staticmethod
    def decode(obj: dict) -> "DecisionTable":
        return DecisionTable(
            id=obj["id"],
            hit_policy=obj["hit_policy"],
            inputs=tuple(InputClause(c["label"], c["expression"]) for c in obj["inputs"]),
            outputs=tuple(OutputClause(c["name"]) for c in obj["outputs"]),
            rules=tuple(Rule(tuple(r["when"]), tuple(r["then"])) for r in obj["rules"]),
        )


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _find(el: ET.Element, name: str) -> ET.Element | None:
    return next((c for c in el.iter() if _local(c.tag) == name), None)


def _children(el: ET.Element, name: str) -> list[ET.Element]:
    return [c for c in el if _local(c.tag) == name]


def _text_of(el: ET.Element | None) -> str:
    if el is None:
        return ""
    t = next((c for c in el if _local(c.tag) == "text"), None)
    return (t.text or "").strip() if t is not None else (el.text or "").strip()


def parse_dmn(xml_bytes: bytes) -> DecisionTable:
    try:
        root = ET.fromstring(xml_bytes)
    except ET.ParseError as exc:
        raise DmnParseError("XmlError", f"input is not well-formed XML: {exc}")

    decisions = [c for c in root.iter() if _local(c.tag) == "decision"]
    if not decisions:
        raise DmnParseError("XmlError", "no decision element found")
    if len(decisions) > 1:
        raise DmnParseError("XmlError", "multiple decisions are out of scope; provide one decision per file")
    decision = decisions[0]
    decision_id = decision.get("id") or "decision"

    table_el = next((c for c in decision if _local(c.tag) == "decisionTable"), None)
    if table_el is None:
        raise DmnParseError("XmlError", f"decision {decision_id!r} has no decisionTable")

    raw_policy = table_el.get("hitPolicy", "UNIQUE")
    if raw_policy not in _HIT_POLICIES:
        raise DmnParseError("UnsupportedHitPolicy", f"hit policy {raw_policy!r} is not supported (UNIQUE or FIRST only)")

    inputs = []
    for input_el in _children(table_el, "input"):
        expr_el = next((c for c in input_el if _local(c.tag) == "inputExpression"), None)
        expression = _text_of(expr_el)
        if not expression:
            raise DmnParseError("XmlError", f"input clause in {decision_id!r} has no expression")
        inputs.append(InputClause(label=input_el.get("label", ""), expression=expression))

    outputs = []
    for output_el in _children(table_el, "output"):
        outputs.append(OutputClause(name=output_el.get("name") or output_el.get("id") or "output"))
    if not outputs:
        raise DmnParseError("XmlError", f"table of {decision_id!r} declares no outputs")

    rules = []
    for rule_el in _children(table_el, "rule"):
        entries = tuple(_text_of(e) for e in _children(rule_el, "inputEntry"))
        results = tuple(_text_of(e) for e in _children(rule_el, "outputEntry"))
        rules.append(Rule(input_entries=entries, output_entries=results))

    return DecisionTable(
        id=decision_id,
        hit_policy=_HIT_POLICIES[raw_policy],
        inputs=tuple(inputs),
        outputs=tuple(outputs),
        rules=tuple(rules),
    )


def rule_matches(table: DecisionTable, rule: Rule, input_values: list[Value], ctx: Context) -> bool:
    return all(
        eval_unary_test(entry, input_values[i], ctx) is TriBool.TRUE
        for i, entry in enumerate(rule.input_entries)
    )


def evaluate_table(table: DecisionTable, ctx: Context) -> dict[str, Value]:
    """Evaluate the table over ctx; returns output name -> Value."""
    input_values = [eval_expression(clause.expression, ctx) for clause in table.inputs]
    matched = [i for i, rule in enumerate(table.rules) if rule_matches(table, rule, input_values, ctx)]

    if not matched:
        raise TableError("NoRuleMatched", f"no rule of table {table.id!r} matched")
    if table.hit_policy == UNIQUE and len(matched) > 1:
        raise TableError(
            "MultipleMatches", f"rules {[m + 1 for m in matched]} of Unique table {table.id!r} all matched"
        )

    chosen = table.rules[matched[0]]
    return {
        clause.name: eval_expression(entry, ctx)
        for clause, entry in zip(table.outputs, chosen.output_entries)
    }
