"""Flow-control compiler and the reference token-game interpreter.

compile() turns a validated process model plus its decision tables into a
self-contained, blockchain-agnostic package: flow/node tables, gateway
guards, embedded decision tables and a data-flow table. The canonical
encoding of that content is the wire format deployed on chain, and its
digest is the package id.

The interpreter in this module executes the *source model* directly and is
the correctness oracle for the on-chain executor: markings advance by
completing a task, then propagating through gateways, business-rule tasks
and end events until only operator tasks hold the frontier.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from . import canon
from .bindings import FILE, HTTP, BindingError, leaf_name, parse_binding
from .bpmn import (
    BUSINESS_RULE_TASK,
    END_EVENT,
    ERROR,
    EXCLUSIVE_GATEWAY,
    OPERATOR_TASK_KINDS,
    PARALLEL_GATEWAY,
    SERVICE_TASK,
    START_EVENT,
    ProcessModel,
    validate,
)
from .dmn import DecisionTable
from .feel import eval_expression, parse_expression
from .values import TRUE, Context, Value

RUNNING = "Running"
COMPLETED = "Completed"
ABORTED = "Aborted"


class CompileError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class StepError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


# ---------------------------------------------------------------------------
# Marking

class Marking:
    """Multiset of flow ids carrying tokens; operations return new markings."""

    __slots__ = ("_tokens",)

    def __init__(self, tokens: dict[str, int] | None = None):
        self._tokens = {k: v for k, v in (tokens or {}).items() if v > 0}

    def count(self, flow_id: str) -> int:
        return self._tokens.get(flow_id, 0)

    def has(self, flow_id: str) -> bool:
        return self.count(flow_id) > 0

    def add(self, *flow_ids: str) -> "Marking":
        tokens = dict(self._tokens)
        for f in flow_ids:
            tokens[f] = tokens.get(f, 0) + 1
        return Marking(tokens)

    def remove(self, *flow_ids: str) -> "Marking":
        tokens = dict(self._tokens)
        for f in flow_ids:
            if tokens.get(f, 0) < 1:
                raise StepError("NotEnabled", f"no token on flow {f!r}")
            tokens[f] -= 1
        return Marking(tokens)

    def is_empty(self) -> bool:
        return not self._tokens

    def encode(self) -> list:
        return [[f, c] for f, c in sorted(self._tokens.items())]

    @staticmethod
    def decode(obj) -> "Marking":
        return Marking({f: c for f, c in obj})

    def __eq__(self, other):
        return isinstance(other, Marking) and self._tokens == other._tokens

    def __hash__(self):
        return hash(tuple(sorted(self._tokens.items())))

    def __repr__(self):
        return f"Marking({self._tokens!r})"


# ---------------------------------------------------------------------------
# Compilation

def _free_names(expr: str) -> set[str]:
    names: set[str] = set()

    def walk(node):
        tag = node[0]
        if tag == "name":
            names.add(node[1])
        elif tag in ("neg", "not"):
            walk(node[1])
        elif tag == "bin" or tag == "cmp":
            walk(node[2])
            walk(node[3])
        elif tag in ("and", "or"):
            walk(node[1])
            walk(node[2])

    walk(parse_expression(expr))
    return names


@dataclass(frozen=True)
class DefsmPackage:
    content: dict

    @property
    def package_id(self) -> str:
        return canon.digest(self.canonical_bytes())

    def canonical_bytes(self) -> bytes:
        return canon.encode(self.content)

    @staticmethod
    def from_bytes(data: bytes) -> "DefsmPackage":
        return DefsmPackage(canon.decode(data))

    # lookup helpers used by executors -------------------------------------

    def node(self, node_id: str) -> dict:
        entry = next((n for n in self.content["node_table"] if n["node_id"] == node_id), None)
        if entry is None:
            raise KeyError(node_id)
        return entry

    def nodes(self) -> list[dict]:
        return self.content["node_table"]

    def flow(self, flow_id: str) -> dict:
        return next(f for f in self.content["flow_table"] if f["flow_id"] == flow_id)

    def incoming(self, node_id: str) -> list[str]:
        return [f["flow_id"] for f in self.content["flow_table"] if f["target"] == node_id]

    def outgoing(self, node_id: str) -> list[str]:
        return [f["flow_id"] for f in self.content["flow_table"] if f["source"] == node_id]

    def start_flows(self) -> list[str]:
        return self.content["start_flows"]

    def data_entries(self) -> list[dict]:
        return self.content.get("data_table", [])

    def required_params(self, node_id: str) -> list[str]:
        """Field names a completion of node_id must supply, from file bindings
        on the data objects feeding it and produced by it."""
        names: set[str] = set()
        for entry in self.data_entries():
            binding = entry.get("binding")
            if not binding or binding["source"] != FILE:
                continue
            if node_id in entry["consumers"] or entry["producer"] == node_id:
                names.update(leaf_name(f) for f in binding["fields"])
        return sorted(names)


def compile(model: ProcessModel, tables: list[DecisionTable]) -> DefsmPackage:
    violations = [v for v in validate(model) if v.severity == ERROR]
    if violations:
        first = violations[0]
        raise CompileError("ValidationFailed", f"model does not validate: {first.code} on {first.subject_id}")

    tables_by_id = {t.id: t for t in tables}
    declared_vars: set[str] = set()
    for t in tables:
        declared_vars.update(o.name for o in t.outputs)

    data_table = []
    for dobj in sorted(model.data_objects, key=lambda d: d.id):
        binding = None
        if dobj.annotation:
            try:
                binding = parse_binding(dobj.annotation).encode()
            except BindingError:
                binding = None
        if binding and binding["source"] == FILE:
            declared_vars.update(leaf_name(f) for f in binding["fields"])
        if binding and binding["source"] == HTTP:
            declared_vars.update(v for v, _ in binding["outputs"])
        data_table.append(
            {
                "data_object": dobj.id,
                "name": dobj.name or dobj.id,
                "producer": model.producer_of(dobj.id),
                "consumers": sorted(a.to_id for a in model.associations if a.from_id == dobj.id),
                "binding": binding,
            }
        )

    node_table = []
    for node in sorted(model.nodes, key=lambda n: n.id):
        entry: dict = {"node_id": node.id, "kind": node.kind, "name": node.name or node.id}
        if node.kind == END_EVENT:
            entry["end"] = "error" if node.is_error_end else "normal"
        if node.kind == BUSINESS_RULE_TASK:
            table = tables_by_id.get(node.decision_ref)
            if table is None:
                raise CompileError("UnresolvedDecision", f"task {node.id!r} names unknown decision {node.decision_ref!r}")
            entry["decision"] = table.encode()
        if node.kind == SERVICE_TASK:
            if node.service_binding is None:
                raise CompileError("UnboundServiceTask", f"service task {node.id!r} has no http binding")
            entry["binding"] = node.service_binding.encode()
            declared_vars.update(v for v, _ in node.service_binding.outputs)
        if node.kind == EXCLUSIVE_GATEWAY and len(model.outgoing(node.id)) >= 2:
            routes = []
            default_flow = None
            for flow in model.outgoing(node.id):  # declaration order
                if flow.is_default:
                    default_flow = flow.id
                else:
                    routes.append({"flow": flow.id, "condition": flow.condition})
            entry["guard"] = {"routes": routes, "default_flow": default_flow}
        node_table.append(entry)

    # self-containment: guard conditions may only mention variables the
    # package itself can produce (decision outputs, binding fields)
    for entry in node_table:
        guard = entry.get("guard")
        if not guard:
            continue
        for route in guard["routes"]:
            unknown = _free_names(route["condition"]) - declared_vars
            if unknown:
                raise CompileError(
                    "UnboundGuardVariable",
                    f"guard on {entry['node_id']!r} references {sorted(unknown)} produced nowhere in the package",
                )

    start = model.start_event()
    content = {
        "model": model.id,
        "flow_table": [
            {"flow_id": f.id, "source": f.source, "target": f.target}
            for f in sorted(model.flows, key=lambda f: f.id)
        ],
        "node_table": node_table,
        "start_flows": sorted(f.id for f in model.outgoing(start.id)),
        "end_nodes": sorted(
            [n.id, "error" if n.is_error_end else "normal"] for n in model.nodes if n.kind == END_EVENT
        ),
        "data_table": data_table,
    }
    return DefsmPackage(content)


# ---------------------------------------------------------------------------
# Reference interpreter (oracle)

@dataclass(frozen=True)
class CompleteTask:
    node_id: str
    params: dict[str, Value] = field(default_factory=dict)


@dataclass(frozen=True)
class ReferenceState:
    marking: Marking
    variables: Context
    status: str = RUNNING
    completed: tuple[str, ...] = ()

    def key(self) -> str:
        return canon.digest_of(
            {
                "marking": self.marking.encode(),
                "status": self.status,
                "vars": self.variables.encode(),
            }
        )


def _node_ready(model: ProcessModel, marking: Marking, node) -> bool:
    ins = [f.id for f in model.incoming(node.id)]
    if node.kind == PARALLEL_GATEWAY:
        if len(ins) == 1:
            return marking.has(ins[0])
        return all(marking.has(f) for f in ins)
    if node.kind == EXCLUSIVE_GATEWAY:
        return any(marking.has(f) for f in ins)
    if node.kind in (BUSINESS_RULE_TASK, END_EVENT):
        return bool(ins) and marking.has(ins[0])
    return False


def _route_exclusive(outgoing, variables: Context, gateway_id: str) -> str:
    """First condition true in declaration order, else default, else error."""
    default = None
    for flow in outgoing:
        if flow.is_default:
            default = flow.id
            continue
        if flow.condition is None:
            continue
        if eval_expression(flow.condition, variables) == TRUE:
            return flow.id
    if default is not None:
        return default
    raise StepError("GatewayNoPath", f"no outgoing condition of gateway {gateway_id!r} is true and no default exists")


def _propagate(
    model: ProcessModel,
    state: ReferenceState,
    scripted_outcomes: dict[str, dict[str, Value]] | None,
) -> ReferenceState:
    marking = state.marking
    variables = state.variables
    while True:
        ready = sorted(n.id for n in model.nodes if _node_ready(model, marking, n))
        if not ready:
            break
        node = model.node(ready[0])
        ins = model.incoming(node.id)
        outs = model.outgoing(node.id)
        if node.kind == PARALLEL_GATEWAY:
            if len(ins) == 1:  # split
                marking = marking.remove(ins[0].id).add(*[f.id for f in outs])
            else:  # join consumes one token per incoming branch
                marking = marking.remove(*[f.id for f in ins]).add(outs[0].id)
        elif node.kind == EXCLUSIVE_GATEWAY:
            if len(outs) == 1:  # merge passes the lex-smallest available token through
                source = sorted(f.id for f in ins if marking.has(f.id))[0]
                marking = marking.remove(source).add(outs[0].id)
            else:
                marking = marking.remove(ins[0].id)
                marking = marking.add(_route_exclusive(outs, variables, node.id))
        elif node.kind == BUSINESS_RULE_TASK:
            if scripted_outcomes is None or node.decision_ref not in scripted_outcomes:
                raise StepError("NoScriptedOutcome", f"no scripted outcome for decision {node.decision_ref!r}")
            variables = variables.with_values(scripted_outcomes[node.decision_ref])
            marking = marking.remove(ins[0].id).add(outs[0].id)
        elif node.kind == END_EVENT:
            if node.is_error_end:
                return replace(state, marking=Marking(), variables=variables, status=ABORTED)
            marking = marking.remove(ins[0].id)
        else:
            break
    status = state.status
    if marking.is_empty():
        status = COMPLETED
    return replace(state, marking=marking, variables=variables, status=status)


def start_reference(
    model: ProcessModel,
    scripted_outcomes: dict[str, dict[str, Value]] | None = None,
) -> ReferenceState:
    start = model.start_event()
    marking = Marking().add(*[f.id for f in model.outgoing(start.id)])
    return _propagate(model, ReferenceState(marking=marking, variables=Context()), scripted_outcomes)


def enabled_tasks_reference(model: ProcessModel, state: ReferenceState) -> list[str]:
    if state.status != RUNNING:
        return []
    out = []
    for node in model.nodes:
        if node.kind not in OPERATOR_TASK_KINDS:
            continue
        ins = model.incoming(node.id)
        if ins and state.marking.has(ins[0].id):
            out.append(node.id)
    return sorted(out)


def reference_step(
    model: ProcessModel,
    state: ReferenceState,
    action: CompleteTask,
    scripted_outcomes: dict[str, dict[str, Value]] | None = None,
) -> ReferenceState:
    if state.status != RUNNING:
        raise StepError("InstanceNotRunning", f"instance is {state.status}")
    try:
        node = model.node(action.node_id)
    except KeyError:
        node = None
    if node is None or node.kind not in OPERATOR_TASK_KINDS:
        raise StepError("NotEnabled", f"{action.node_id!r} is not a completable task")
    ins = model.incoming(node.id)
    if not ins or not state.marking.has(ins[0].id):
        raise StepError("NotEnabled", f"task {action.node_id!r} holds no token")
    marking = state.marking.remove(ins[0].id).add(*[f.id for f in model.outgoing(node.id)])
    state = replace(
        state,
        marking=marking,
        variables=state.variables.with_values(action.params),
        completed=state.completed + (node.id,),
    )
    return _propagate(model, state, scripted_outcomes)


# ---------------------------------------------------------------------------
# Reachability (bounded exhaustive graph)

@dataclass(frozen=True)
class MarkingGraph:
    initial: str
    nodes: dict[str, dict]          # key -> {"marking": ..., "status": ...}
    edges: tuple[tuple[str, str, str], ...]  # (key, task id, key')

    def encode(self) -> dict:
        return {
            "initial": self.initial,
            "nodes": {k: self.nodes[k] for k in sorted(self.nodes)},
            "edges": sorted(self.edges),
        }


MAX_GRAPH_NODES = 12  # tasks + gateways; start/end events are free
MAX_PARALLEL_SPLITS = 2


def reachable_graph(
    model: ProcessModel,
    scripted_outcomes: dict[str, dict[str, Value]],
) -> MarkingGraph:
    active = sum(1 for n in model.nodes if n.kind not in (START_EVENT, END_EVENT))
    if active > MAX_GRAPH_NODES:
        raise StepError("BoundsExceeded", f"model has {active} task/gateway nodes (max {MAX_GRAPH_NODES})")
    splits = sum(
        1
        for n in model.nodes
        if n.kind == PARALLEL_GATEWAY and len(model.outgoing(n.id)) >= 2
    )
    if splits > MAX_PARALLEL_SPLITS:
        raise StepError("BoundsExceeded", f"model has {splits} parallel splits (max {MAX_PARALLEL_SPLITS})")

    initial = start_reference(model, scripted_outcomes)
    nodes: dict[str, dict] = {}
    edges: set[tuple[str, str, str]] = set()
    states: dict[str, ReferenceState] = {initial.key(): initial}
    frontier = [initial.key()]
    while frontier:
        key = frontier.pop()
        if key in nodes:
            continue
        state = states[key]
        nodes[key] = {"marking": state.marking.encode(), "status": state.status}
        for task in enabled_tasks_reference(model, state):
            nxt = reference_step(model, state, CompleteTask(task), scripted_outcomes)
            nxt_key = nxt.key()
            states.setdefault(nxt_key, nxt)
            edges.add((key, task, nxt_key))
            if nxt_key not in nodes:
                frontier.append(nxt_key)
    return MarkingGraph(initial=initial.key(), nodes=nodes, edges=tuple(sorted(edges)))
