"""The run-time monitor contract.

Deployed packages live under their package id; process instances live under
the reserved contract id "monitor". All state transitions happen inside
chain transactions: deploy, start_instance and complete_task. complete_task
advances the marking exactly like the reference interpreter, but operating
on the compiled package tables: consume the task's token, then propagate
through gateways, business-rule tasks (decision tables evaluated on-chain)
and end events until only operator tasks hold the frontier.

Queries at the bottom are read-only views over committed state.
"""

from __future__ import annotations

from . import canon, keys
from .bpmn import (
    BUSINESS_RULE_TASK,
    END_EVENT,
    EXCLUSIVE_GATEWAY,
    OPERATOR_TASK_KINDS,
    PARALLEL_GATEWAY,
)
from .chain import Chain, DEPLOY_TARGET, ExecError, Transaction, TxContext
from .defsm import ABORTED, COMPLETED, RUNNING, DefsmPackage, Marking
from .dmn import DecisionTable, TableError, evaluate_table
from .feel import FeelError, eval_expression
from .values import TRUE, Context, decode_value, encode_value

MONITOR = "monitor"


def _check_package(content) -> DefsmPackage:
    if not isinstance(content, dict):
        raise ExecError("MalformedPackage", "package is not an object")
    for key in ("model", "flow_table", "node_table", "start_flows", "end_nodes", "data_table"):
        if key not in content:
            raise ExecError("MalformedPackage", f"package lacks {key!r}")
    pkg = DefsmPackage(content)
    node_ids = {n["node_id"] for n in content["node_table"]}
    flow_ids = {f["flow_id"] for f in content["flow_table"]}
    if len(node_ids) != len(content["node_table"]) or len(flow_ids) != len(content["flow_table"]):
        raise ExecError("MalformedPackage", "duplicate ids in package tables")
    for f in content["flow_table"]:
        if f["source"] not in node_ids or f["target"] not in node_ids:
            raise ExecError("MalformedPackage", f"flow {f['flow_id']!r} references a missing node")
    for fid in content["start_flows"]:
        if fid not in flow_ids:
            raise ExecError("MalformedPackage", f"start flow {fid!r} not in flow table")
    for node_id, _kind in content["end_nodes"]:
        if node_id not in node_ids:
            raise ExecError("MalformedPackage", f"end node {node_id!r} not in node table")
    for entry in content["node_table"]:
        guard = entry.get("guard")
        if guard is None:
            continue
        outgoing = set(pkg.outgoing(entry["node_id"]))
        for route in guard["routes"]:
            if route["flow"] not in outgoing:
                raise ExecError("MalformedPackage", f"guard of {entry['node_id']!r} references foreign flow {route['flow']!r}")
        if guard["default_flow"] is not None and guard["default_flow"] not in outgoing:
            raise ExecError("MalformedPackage", f"default of {entry['node_id']!r} references foreign flow")
        if entry["kind"] == BUSINESS_RULE_TASK and "decision" not in entry:
            raise ExecError("MalformedPackage", f"business-rule node {entry['node_id']!r} embeds no decision")
    return pkg


class MonitorExecutor:
    """Executes monitor methods inside a chain transaction context."""

    def execute(self, ctx: TxContext, tx: Transaction) -> None:
        if tx.contract == DEPLOY_TARGET:
            if tx.method != "deploy":
                raise ExecError("UnknownMethod", f"deploy target has no method {tx.method!r}")
            self._deploy(ctx, tx)
            return
        package_content = ctx.get(tx.contract, "package")
        if package_content is None:
            raise ExecError("UnknownContract", f"no contract deployed at {tx.contract!r}")
        pkg = DefsmPackage(package_content)
        if tx.method == "start_instance":
            self._start_instance(ctx, tx, pkg)
        elif tx.method == "complete_task":
            self._complete_task(ctx, tx, pkg)
        else:
            raise ExecError("UnknownMethod", f"contract has no method {tx.method!r}")

    # -- methods -------------------------------------------------------------

    def _deploy(self, ctx: TxContext, tx: Transaction) -> None:
        content = tx.args.get("package")
        pkg = _check_package(content)
        package_id = pkg.package_id
        if ctx.get(package_id, "package") is not None:
            raise ExecError("AlreadyDeployed", f"package {package_id} already deployed")
        ctx.put(package_id, "package", content)
        ctx.emit(package_id, "ContractDeployed", {"contract": package_id})

    def _start_instance(self, ctx: TxContext, tx: Transaction, pkg: DefsmPackage) -> None:
        seq = (ctx.get(MONITOR, "instance_seq") or 0) + 1
        ctx.put(MONITOR, "instance_seq", seq)
        instance_id = f"i{seq:06d}"
        instance = {
            "instance": instance_id,
            "contract": tx.contract,
            "marking": Marking().add(*pkg.start_flows()).encode(),
            "variables": {},
            "documents": [],
            "status": RUNNING,
            "completed_tasks": [],
        }
        ctx.emit(tx.contract, "InstanceStarted", {"instance": instance_id})
        instance = self._propagate(ctx, pkg, instance)
        ctx.put(MONITOR, f"instance/{instance_id}", instance)

    def _complete_task(self, ctx: TxContext, tx: Transaction, pkg: DefsmPackage) -> None:
        instance_id = tx.args.get("instance")
        task_id = tx.args.get("task")
        instance = ctx.get(MONITOR, f"instance/{instance_id}")
        if instance is None or instance["contract"] != tx.contract:
            raise ExecError("UnknownInstance", f"no instance {instance_id!r} on this contract")
        if instance["status"] != RUNNING:
            raise ExecError("InstanceNotRunning", f"instance {instance_id!r} is {instance['status']}")

        try:
            node = pkg.node(task_id)
        except KeyError:
            raise ExecError("NotEnabled", f"{task_id!r} is not a node of this contract")
        if node["kind"] not in OPERATOR_TASK_KINDS:
            raise ExecError("NotEnabled", f"{task_id!r} is not an operator task")
        marking = Marking.decode(instance["marking"])
        incoming = pkg.incoming(task_id)
        if not incoming or not marking.has(incoming[0]):
            raise ExecError("NotEnabled", f"task {task_id!r} holds no token")

        # documents: verify each signature against the signer's registered key
        docs = tx.args.get("docs", [])
        for doc in docs:
            public = ctx.identity_key(doc.get("signer", ""))
            if public is None or not keys.verify(public, doc["cid"].encode("utf-8"), doc["signature"]):
                raise ExecError("BadDocSignature", f"document {doc.get('cid')} signature does not verify")

        params = {name: decode_value(v) for name, v in tx.args.get("params", {}).items()}
        missing = [name for name in pkg.required_params(task_id) if name not in params]
        if missing:
            raise ExecError("FieldMissing", f"completion of {task_id!r} lacks binding fields {missing}")

        variables = Context.decode(instance["variables"]).with_values(params)
        instance["variables"] = variables.encode()
        for doc in docs:
            instance["documents"].append(
                {
                    "cid": doc["cid"],
                    "signer": doc["signer"],
                    "signature": doc["signature"],
                    "task": task_id,
                    "recorded_at": ctx.height,
                }
            )
        instance["completed_tasks"] = list(instance["completed_tasks"]) + [task_id]
        ctx.emit(tx.contract, "TaskCompleted", {"instance": instance_id, "task": task_id, "doc_cids": [d["cid"] for d in docs]})

        marking = marking.remove(incoming[0]).add(*pkg.outgoing(task_id))
        instance["marking"] = marking.encode()
        instance = self._propagate(ctx, pkg, instance)
        ctx.put(MONITOR, f"instance/{instance_id}", instance)

    # -- token game over the compiled tables ---------------------------------

    def _propagate(self, ctx: TxContext, pkg: DefsmPackage, instance: dict) -> dict:
        marking = Marking.decode(instance["marking"])
        variables = Context.decode(instance["variables"])
        contract = instance["contract"]
        instance_id = instance["instance"]

        def ready(entry) -> bool:
            ins = pkg.incoming(entry["node_id"])
            kind = entry["kind"]
            if kind == PARALLEL_GATEWAY:
                if len(ins) == 1:
                    return marking.has(ins[0])
                return all(marking.has(f) for f in ins)
            if kind == EXCLUSIVE_GATEWAY:
                return any(marking.has(f) for f in ins)
            if kind in (BUSINESS_RULE_TASK, END_EVENT):
                return bool(ins) and marking.has(ins[0])
            return False

        while True:
            ctx.charge()
            fireable = sorted(e["node_id"] for e in pkg.nodes() if ready(e))
            if not fireable:
                break
            entry = pkg.node(fireable[0])
            node_id = entry["node_id"]
            ins = pkg.incoming(node_id)
            outs = pkg.outgoing(node_id)
            kind = entry["kind"]

            if kind == PARALLEL_GATEWAY:
                if len(ins) == 1:
                    marking = marking.remove(ins[0]).add(*outs)
                else:
                    marking = marking.remove(*ins).add(outs[0])
            elif kind == EXCLUSIVE_GATEWAY:
                if len(outs) == 1:
                    source = sorted(f for f in ins if marking.has(f))[0]
                    marking = marking.remove(source).add(outs[0])
                else:
                    marking = marking.remove(ins[0])
                    marking = marking.add(self._route(entry, variables))
            elif kind == BUSINESS_RULE_TASK:
                table = DecisionTable.decode(entry["decision"])
                try:
                    outcome = evaluate_table(table, variables)
                except TableError as err:
                    raise ExecError(err.code, err.message)
                except FeelError as err:
                    raise ExecError(err.code, err.message)
                variables = variables.with_values(outcome)
                ctx.emit(
                    contract,
                    "DecisionEvaluated",
                    {
                        "instance": instance_id,
                        "decision": table.id,
                        "outcome": {k: encode_value(v) for k, v in outcome.items()},
                    },
                )
                marking = marking.remove(ins[0]).add(*outs)
            elif kind == END_EVENT:
                if entry.get("end") == "error":
                    instance["marking"] = Marking().encode()
                    instance["variables"] = variables.encode()
                    instance["status"] = ABORTED
                    ctx.emit(contract, "InstanceAborted", {"instance": instance_id, "reason": f"error-end:{node_id}"})
                    for task in reversed(instance["completed_tasks"]):
                        ctx.emit(contract, "CompensationRequired", {"instance": instance_id, "task": task})
                    return instance
                marking = marking.remove(ins[0])

        instance["marking"] = marking.encode()
        instance["variables"] = variables.encode()
        if marking.is_empty():
            instance["status"] = COMPLETED
            ctx.emit(contract, "InstanceCompleted", {"instance": instance_id})
        return instance

    def _route(self, entry: dict, variables: Context) -> str:
        guard = entry.get("guard")
        if guard is None:
            raise ExecError("GatewayNoPath", f"gateway {entry['node_id']!r} has no guard")
        for route in guard["routes"]:
            try:
                if eval_expression(route["condition"], variables) == TRUE:
                    return route["flow"]
            except FeelError as err:
                raise ExecError(err.code, err.message)
        if guard["default_flow"] is not None:
            return guard["default_flow"]
        raise ExecError("GatewayNoPath", f"no condition of gateway {entry['node_id']!r} is true and no default exists")


# ---------------------------------------------------------------------------
# Read-only queries

class QueryError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


def get_package(chain: Chain, contract: str) -> DefsmPackage:
    content = chain.get_state(contract, "package")
    if content is None:
        raise QueryError("UnknownContract", f"no contract {contract!r}")
    return DefsmPackage(content)


def deployed_contracts(chain: Chain) -> list[str]:
    return sorted(c for c in chain.contracts() if chain.get_state(c, "package") is not None)


def list_instances(chain: Chain) -> list[str]:
    return sorted(
        key.split("/", 1)[1] for key in chain.state_keys(MONITOR) if key.startswith("instance/")
    )


def instances_of(chain: Chain, contract: str) -> list[str]:
    out = []
    for instance_id in list_instances(chain):
        view = chain.get_state(MONITOR, f"instance/{instance_id}")
        if view["contract"] == contract:
            out.append(instance_id)
    return out


def get_instance(chain: Chain, instance_id: str) -> dict:
    view = chain.get_state(MONITOR, f"instance/{instance_id}")
    if view is None:
        raise QueryError("UnknownInstance", f"no instance {instance_id!r}")
    return view


def enabled_tasks(chain: Chain, instance_id: str) -> list[str]:
    instance = get_instance(chain, instance_id)
    if instance["status"] != RUNNING:
        return []
    pkg = get_package(chain, instance["contract"])
    marking = Marking.decode(instance["marking"])
    out = []
    for entry in pkg.nodes():
        if entry["kind"] not in OPERATOR_TASK_KINDS:
            continue
        ins = pkg.incoming(entry["node_id"])
        if ins and marking.has(ins[0]):
            out.append(entry["node_id"])
    return sorted(out)


def audit_documents(chain: Chain, cas) -> list[str]:
    """Full-chain audit: every committed DocRecord must re-hash to its cid and
    carry a signature verifying under the signer's registered key."""
    failures = []
    for instance_id in list_instances(chain):
        instance = get_instance(chain, instance_id)
        for doc in instance["documents"]:
            try:
                data = cas.get(doc["cid"])
            except Exception:
                failures.append(f"{instance_id}: {doc['cid']} not fetchable")
                continue
            if canon.digest(data) != doc["cid"]:
                failures.append(f"{instance_id}: bytes of {doc['cid']} re-hash differently")
            public = chain.genesis["identities"].get(doc["signer"])
            if public is None or not keys.verify(public, doc["cid"].encode("utf-8"), doc["signature"]):
                failures.append(f"{instance_id}: signature on {doc['cid']} does not verify")
    return failures
