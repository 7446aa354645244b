"""BPMN 2.0 XML subset: parsing, validation and serialization.

Supported node kinds: start/end events (end events may carry an error
definition), user/service/business-rule tasks, parallel and exclusive
gateways. Data objects carry their annotation text via an associated
textAnnotation element. Anything else in the input is rejected by name.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

from .bindings import FILE, BindingError, DataBinding, parse_binding
from .feel import FeelSyntaxError, parse_expression

START_EVENT = "StartEvent"
END_EVENT = "EndEvent"
USER_TASK = "UserTask"
SERVICE_TASK = "ServiceTask"
BUSINESS_RULE_TASK = "BusinessRuleTask"
PARALLEL_GATEWAY = "ParallelGateway"
EXCLUSIVE_GATEWAY = "ExclusiveGateway"

TASK_KINDS = (USER_TASK, SERVICE_TASK, BUSINESS_RULE_TASK)
OPERATOR_TASK_KINDS = (USER_TASK, SERVICE_TASK)

ERROR = "Error"
WARNING = "Warning"


class ParseError(Exception):
    def __init__(self, code: str, message: str, subject: str | None = None):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.subject = subject


@dataclass(frozen=True)
class Violation:
    code: str
    severity: str
    subject_id: str
    message: str


@dataclass
class FlowNode:
    id: str
    kind: str
    name: str = ""
    is_error_end: bool = False
    decision_ref: str | None = None
    service_binding: DataBinding | None = None


@dataclass
class SequenceFlow:
    id: str
    source: str
    target: str
    condition: str | None = None
    is_default: bool = False


@dataclass
class DataObject:
    id: str
    name: str = ""
    annotation: str | None = None


@dataclass
class DataAssociation:
    from_id: str
    to_id: str


@dataclass
class ProcessModel:
    id: str
    nodes: list[FlowNode] = field(default_factory=list)
    flows: list[SequenceFlow] = field(default_factory=list)
    data_objects: list[DataObject] = field(default_factory=list)
    associations: list[DataAssociation] = field(default_factory=list)

    def node(self, node_id: str) -> FlowNode:
        return self._node_map[node_id]

    @property
    def _node_map(self) -> dict[str, FlowNode]:
        return {n.id: n for n in self.nodes}

    def data_object(self, do_id: str) -> DataObject:
        return {d.id: d for d in self.data_objects}[do_id]

    def incoming(self, node_id: str) -> list[SequenceFlow]:
        return [f for f in self.flows if f.target == node_id]

    def outgoing(self, node_id: str) -> list[SequenceFlow]:
        # declaration order; guard evaluation relies on it
        return [f for f in self.flows if f.source == node_id]

    def start_event(self) -> FlowNode:
        return next(n for n in self.nodes if n.kind == START_EVENT)

    def inputs_of(self, node_id: str) -> list[DataObject]:
        """Data objects feeding the node, in association order."""
        ids = [a.from_id for a in self.associations if a.to_id == node_id]
        by_id = {d.id: d for d in self.data_objects}
        return [by_id[i] for i in ids if i in by_id]

    def outputs_of(self, node_id: str) -> list[DataObject]:
        """Data objects produced by the node, in association order."""
        ids = [a.to_id for a in self.associations if a.from_id == node_id]
        by_id = {d.id: d for d in self.data_objects}
        return [by_id[i] for i in ids if i in by_id]

    def producer_of(self, do_id: str) -> str | None:
        for a in self.associations:
            if a.to_id == do_id:
                return a.from_id
        return None

    def structural_key(self):
        """Order-insensitive content key used for round-trip comparison."""
        return (
            self.id,
            tuple(sorted((n.id, n.kind, n.name, n.is_error_end, n.decision_ref or "") for n in self.nodes)),
            tuple(sorted((f.id, f.source, f.target, f.condition or "", f.is_default) for f in self.flows)),
            tuple(sorted((d.id, d.name or d.id, d.annotation or "") for d in self.data_objects)),
            tuple(sorted((a.from_id, a.to_id) for a in self.associations)),
        )


# ---------------------------------------------------------------------------
# Parsing

_NODE_TAGS = {
    "startEvent": START_EVENT,
    "endEvent": END_EVENT,
    "userTask": USER_TASK,
    "serviceTask": SERVICE_TASK,
    "businessRuleTask": BUSINESS_RULE_TASK,
    "parallelGateway": PARALLEL_GATEWAY,
    "exclusiveGateway": EXCLUSIVE_GATEWAY,
}

# structural helpers we walk through without treating as model content
_IGNORED_TAGS = {"documentation", "incoming", "outgoing", "extensionElements"}

PARSE_ERROR_CODES = {
    "DanglingReference",
    "DuplicateId",
    "NoStartEvent",
    "MultipleStartEvents",
    "NoEndEvent",
    "CyclicGraph",
    "ConditionNotAllowed",
    "MultipleDefaults",
    "MissingDecisionRef",
    "BadGatewayShape",
    "BadAssociation",
}


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _attr(el: ET.Element, name: str) -> str | None:
    """Attribute lookup ignoring namespace prefixes."""
    for k, v in el.attrib.items():
        if _local(k) == name:
            return v
    return None


def parse_bpmn(xml_bytes: bytes) -> ProcessModel:
    try:
        root = ET.fromstring(xml_bytes)
    except ET.ParseError as exc:
        raise ParseError("XmlError", f"input is not well-formed XML: {exc}")

    if _local(root.tag) != "definitions":
        raise ParseError("UnsupportedElement", f"expected definitions root, got {_local(root.tag)!r}")

    process = None
    for child in root:
        tag = _local(child.tag)
        if tag == "process":
            if process is not None:
                raise ParseError("UnsupportedElement", "more than one process element", _attr(child, "id"))
            process = child
        elif tag in ("BPMNDiagram", "documentation"):
            continue  # diagram interchange carries no semantics here
        else:
            raise ParseError("UnsupportedElement", f"element {tag!r} is outside the supported subset")
    if process is None:
        raise ParseError("UnsupportedElement", "definitions contains no process element")

    model = ProcessModel(id=_attr(process, "id") or "process")
    seen_ids: set[str] = set()
    annotations: dict[str, str] = {}   # textAnnotation id -> text
    raw_assocs: list[tuple[str, str, str]] = []  # (assoc id, source, target)
    defaults: dict[str, str] = {}      # gateway id -> default flow id

    def claim(el_id: str | None, tag: str) -> str:
        if not el_id:
            raise ParseError("XmlError", f"element {tag!r} has no id")
        if el_id in seen_ids:
            raise ParseError("DuplicateId", f"id {el_id!r} appears more than once", el_id)
        seen_ids.add(el_id)
        return el_id

    lanes_seen = 0
    for el in process:
        tag = _local(el.tag)
        if tag in _IGNORED_TAGS:
            continue
        if tag == "laneSet":
            lanes_seen += len([c for c in el if _local(c.tag) == "lane"])
            if lanes_seen > 1:
                raise ParseError("UnsupportedElement", "more than one lane (single swimlane only)")
            continue
        if tag in _NODE_TAGS:
            node_id = claim(_attr(el, "id"), tag)
            kind = _NODE_TAGS[tag]
            node = FlowNode(id=node_id, kind=kind, name=_attr(el, "name") or "")
            for sub in el:
                sub_tag = _local(sub.tag)
                if sub_tag in _IGNORED_TAGS:
                    continue
                if kind == END_EVENT and sub_tag == "errorEventDefinition":
                    node.is_error_end = True
                    continue
                raise ParseError(
                    "UnsupportedElement", f"element {sub_tag!r} inside {tag!r} is outside the supported subset", node_id
                )
            if kind == BUSINESS_RULE_TASK:
                node.decision_ref = _attr(el, "decisionRef")
            if kind == EXCLUSIVE_GATEWAY:
                default = _attr(el, "default")
                if default:
                    defaults[node_id] = default
            model.nodes.append(node)
            continue
        if tag == "sequenceFlow":
            flow_id = claim(_attr(el, "id"), tag)
            source = _attr(el, "sourceRef")
            target = _attr(el, "targetRef")
            condition = None
            for sub in el:
                sub_tag = _local(sub.tag)
                if sub_tag == "conditionExpression":
                    condition = (sub.text or "").strip()
                elif sub_tag not in _IGNORED_TAGS:
                    raise ParseError("UnsupportedElement", f"element {sub_tag!r} inside sequenceFlow", flow_id)
            if not source or not target:
                raise ParseError("DanglingReference", f"flow {flow_id!r} lacks sourceRef/targetRef", flow_id)
            model.flows.append(SequenceFlow(id=flow_id, source=source, target=target, condition=condition))
            continue
        if tag in ("dataObjectReference", "dataObject"):
            do_id = claim(_attr(el, "id"), tag)
            model.data_objects.append(DataObject(id=do_id, name=_attr(el, "name") or do_id))
            continue
        if tag == "textAnnotation":
            ta_id = claim(_attr(el, "id"), tag)
            text_el = next((c for c in el if _local(c.tag) == "text"), None)
            annotations[ta_id] = (text_el.text or "") if text_el is not None else ""
            continue
        if tag == "association":
            assoc_id = claim(_attr(el, "id"), tag)
            source = _attr(el, "sourceRef")
            target = _attr(el, "targetRef")
            if not source or not target:
                raise ParseError("DanglingReference", f"association {assoc_id!r} lacks endpoints", assoc_id)
            raw_assocs.append((assoc_id, source, target))
            continue
        raise ParseError("UnsupportedElement", f"element {tag!r} is outside the supported subset", _attr(el, "id"))

    node_ids = {n.id for n in model.nodes}
    do_ids = {d.id for d in model.data_objects}

    # wire default-flow markers
    for gw_id, flow_id in defaults.items():
        flow = next((f for f in model.flows if f.id == flow_id), None)
        if flow is None or flow.source != gw_id:
            raise ParseError("DanglingReference", f"default flow {flow_id!r} of gateway {gw_id!r} not found", gw_id)
        flow.is_default = True

    # route annotations onto data objects; keep only node<->data associations
    do_by_id = {d.id: d for d in model.data_objects}
    for assoc_id, source, target in raw_assocs:
        ends = {source, target}
        ta_end = next((e for e in ends if e in annotations), None)
        if ta_end is not None:
            other = (ends - {ta_end}).pop() if len(ends) == 2 else ta_end
            if other not in do_ids:
                raise ParseError("BadAssociation", f"annotation {ta_end!r} must attach to a data object", assoc_id)
            do_by_id[other].annotation = annotations[ta_end]
            continue
        if source in node_ids and target in do_ids:
            model.associations.append(DataAssociation(from_id=source, to_id=target))
        elif source in do_ids and target in node_ids:
            model.associations.append(DataAssociation(from_id=source, to_id=target))
        elif source not in node_ids | do_ids or target not in node_ids | do_ids:
            raise ParseError("DanglingReference", f"association endpoint missing: {source!r} -> {target!r}", assoc_id)
        else:
            raise ParseError("BadAssociation", f"association must link a node and a data object", assoc_id)

    # a service task picks up the http binding of the data object feeding it
    for n in model.nodes:
        if n.kind != SERVICE_TASK:
            continue
        for dobj in model.inputs_of(n.id):
            if not dobj.annotation:
                continue
            try:
                binding = parse_binding(dobj.annotation)
            except BindingError:
                continue
            if binding.source_kind != FILE:
                n.service_binding = binding
                break

    for violation in validate(model):
        if violation.severity == ERROR and violation.code in PARSE_ERROR_CODES:
            raise ParseError(violation.code, violation.message, violation.subject_id)
    return model


# ---------------------------------------------------------------------------
# Validation

def _cycle_exists(model: ProcessModel) -> bool:
    node_ids = {n.id for n in model.nodes}
    indeg = {nid: 0 for nid in node_ids}
    for f in model.flows:
        if f.source in node_ids and f.target in node_ids:
            indeg[f.target] += 1
    queue = [nid for nid, d in sorted(indeg.items()) if d == 0]
    seen = 0
    while queue:
        nid = queue.pop()
        seen += 1
        for f in model.flows:
            if f.source == nid and f.target in indeg:
                indeg[f.target] -= 1
                if indeg[f.target] == 0:
                    queue.append(f.target)
    return seen < len(node_ids)


def validate(model: ProcessModel) -> list[Violation]:
    """Executability diagnostics; empty list means the compiler will accept it."""
    out: list[Violation] = []
    add = lambda code, sev, subj, msg: out.append(Violation(code, sev, subj, msg))

    node_ids = [n.id for n in model.nodes]
    do_ids = [d.id for d in model.data_objects]
    all_ids = node_ids + do_ids + [f.id for f in model.flows]
    dupes = {i for i in all_ids if all_ids.count(i) > 1}
    for d in sorted(dupes):
        add("DuplicateId", ERROR, d, f"id {d!r} is not unique")

    known = set(node_ids)
    for f in model.flows:
        for end in (f.source, f.target):
            if end not in known:
                add("DanglingReference", ERROR, f.id, f"flow {f.id!r} references missing node {end!r}")
    known_all = known | set(do_ids)
    for a in model.associations:
        for end in (a.from_id, a.to_id):
            if end not in known_all:
                add("DanglingReference", ERROR, end, f"association references missing id {end!r}")

    starts = [n for n in model.nodes if n.kind == START_EVENT]
    ends = [n for n in model.nodes if n.kind == END_EVENT]
    if not starts:
        add("NoStartEvent", ERROR, model.id, "model has no StartEvent")
    elif len(starts) > 1:
        add("MultipleStartEvents", ERROR, starts[1].id, "model has more than one StartEvent")
    if not ends:
        add("NoEndEvent", ERROR, model.id, "model has no EndEvent")

    if _cycle_exists(model):
        add("CyclicGraph", ERROR, model.id, "flow graph contains a cycle")

    for n in model.nodes:
        ins = model.incoming(n.id)
        outs = model.outgoing(n.id)
        if n.kind == START_EVENT:
            if ins:
                add("BadEventShape", ERROR, n.id, "StartEvent must have no incoming flow")
            if not outs:
                add("BadEventShape", ERROR, n.id, "StartEvent must have an outgoing flow")
        elif n.kind == END_EVENT:
            if outs:
                add("BadEventShape", ERROR, n.id, "EndEvent must have no outgoing flow")
            if not ins:
                add("BadEventShape", ERROR, n.id, "EndEvent must have an incoming flow")
        elif n.kind in TASK_KINDS:
            if len(ins) != 1 or len(outs) != 1:
                add("BadTaskShape", ERROR, n.id, f"task {n.id!r} must have exactly one incoming and one outgoing flow")
            if n.kind == BUSINESS_RULE_TASK and not n.decision_ref:
                add("MissingDecisionRef", ERROR, n.id, f"business-rule task {n.id!r} names no decision")
        elif n.kind == PARALLEL_GATEWAY:
            split = len(ins) == 1 and len(outs) >= 2
            join = len(ins) >= 2 and len(outs) == 1
            if not (split or join):
                add("BadGatewayShape", ERROR, n.id, f"parallel gateway {n.id!r} must be a split (1 in, >=2 out) or a join (>=2 in, 1 out)")
        elif n.kind == EXCLUSIVE_GATEWAY:
            split = len(ins) == 1 and len(outs) >= 2
            merge = len(ins) >= 2 and len(outs) == 1
            if not (split or merge):
                add("BadGatewayShape", ERROR, n.id, f"exclusive gateway {n.id!r} must be a split (1 in, >=2 out) or a merge (>=2 in, 1 out)")

    # reachability from the start event
    if len(starts) == 1:
        reachable = {starts[0].id}
        frontier = [starts[0].id]
        while frontier:
            nid = frontier.pop()
            for f in model.flows:
                if f.source == nid and f.target not in reachable:
                    reachable.add(f.target)
                    frontier.append(f.target)
        for n in model.nodes:
            if n.id not in reachable:
                add("Unreachable", ERROR, n.id, f"node {n.id!r} is unreachable from the StartEvent")

    # condition / default discipline
    by_id = {n.id: n for n in model.nodes}
    for f in model.flows:
        src = by_id.get(f.source)
        leaving_xor_split = (
            src is not None and src.kind == EXCLUSIVE_GATEWAY and len(model.outgoing(src.id)) >= 2
        )
        if (f.condition is not None or f.is_default) and not leaving_xor_split:
            add("ConditionNotAllowed", ERROR, f.id, f"flow {f.id!r} carries a condition/default outside an exclusive split")
        if f.condition is not None:
            try:
                parse_expression(f.condition)
            except FeelSyntaxError as exc:
                add("BadCondition", ERROR, f.id, f"condition on flow {f.id!r} does not parse: {exc}")

    for n in model.nodes:
        if n.kind != EXCLUSIVE_GATEWAY:
            continue
        outs = model.outgoing(n.id)
        if len(outs) < 2:
            continue
        defaults = [f for f in outs if f.is_default]
        if len(defaults) > 1:
            add("MultipleDefaults", ERROR, n.id, f"gateway {n.id!r} declares more than one default flow")
        for f in outs:
            if not f.is_default and f.condition is None:
                add("MissingCondition", ERROR, f.id, f"flow {f.id!r} leaving gateway {n.id!r} has neither condition nor default")
        if not defaults:
            add("NonExhaustiveGateway", WARNING, n.id, f"gateway {n.id!r} has no default flow; conditions may not be exhaustive")

    # a data object feeding a task must carry a parseable binding
    for a in model.associations:
        if a.from_id in {d.id for d in model.data_objects} and a.to_id in by_id:
            dobj = model.data_object(a.from_id)
            if not dobj.annotation:
                add("UnparseableBinding", ERROR, dobj.id, f"data object {dobj.id!r} feeds {a.to_id!r} but has no annotation")
                continue
            try:
                parse_binding(dobj.annotation)
            except BindingError as exc:
                add("UnparseableBinding", ERROR, dobj.id, f"annotation on {dobj.id!r} does not parse: {exc}")

    return out


# ---------------------------------------------------------------------------
# Serialization (inverse of parse_bpmn up to structural equality)

_KIND_TAGS = {v: k for k, v in _NODE_TAGS.items()}


def serialize(model: ProcessModel) -> bytes:
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<definitions xmlns="http://www.omg.org/spec/BPMN/20100524/MODEL" '
        f'id="defs_{escape(model.id)}" targetNamespace="urn:tabforge">',
        f'  <process id="{escape(model.id)}" isExecutable="true">',
    ]
    for n in model.nodes:
        tag = _KIND_TAGS[n.kind]
        attrs = f'id="{escape(n.id)}"'
        if n.name:
            attrs += f' name="{escape(n.name)}"'
        if n.kind == BUSINESS_RULE_TASK and n.decision_ref:
            attrs += f' decisionRef="{escape(n.decision_ref)}"'
        if n.kind == EXCLUSIVE_GATEWAY:
            default = next((f.id for f in model.outgoing(n.id) if f.is_default), None)
            if default:
                attrs += f' default="{escape(default)}"'
        if n.kind == END_EVENT and n.is_error_end:
            lines.append(f"    <{tag} {attrs}><errorEventDefinition/></{tag}>")
        else:
            lines.append(f"    <{tag} {attrs}/>")
    for f in model.flows:
        attrs = f'id="{escape(f.id)}" sourceRef="{escape(f.source)}" targetRef="{escape(f.target)}"'
        if f.condition is not None:
            lines.append(f"    <sequenceFlow {attrs}>")
            lines.append(f"      <conditionExpression>{escape(f.condition)}</conditionExpression>")
            lines.append("    </sequenceFlow>")
        else:
            lines.append(f"    <sequenceFlow {attrs}/>")
    for d in model.data_objects:
        lines.append(f'    <dataObjectReference id="{escape(d.id)}" name="{escape(d.name)}"/>')
        if d.annotation is not None:
            ta_id = f"ta_{d.id}"
            lines.append(f'    <textAnnotation id="{escape(ta_id)}"><text>{escape(d.annotation)}</text></textAnnotation>')
            lines.append(f'    <association id="assoc_{escape(ta_id)}" sourceRef="{escape(d.id)}" targetRef="{escape(ta_id)}"/>')
    for i, a in enumerate(model.associations):
        lines.append(f'    <association id="da_{i}" sourceRef="{escape(a.from_id)}" targetRef="{escape(a.to_id)}"/>')
    lines.append("  </process>")
    lines.append("</definitions>")
    return "\n".join(lines).encode("utf-8")
