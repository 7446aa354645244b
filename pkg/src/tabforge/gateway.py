"""Gateway between the operator and the chain: parameter marshalling,
document store, event relay and the REST API.

Every mutating endpoint builds, signs and submits exactly one transaction;
responses are views of committed chain state. Marshalling happens here, off
chain: file bindings are resolved against CAS documents (explicit cid, the
instance's document registry, or documents attached to the completion), and
http bindings invoke the service and map its outputs. The contract itself
re-checks that all binding-declared fields arrive as params.
"""

from __future__ import annotations

import json
import os
import threading
import time
import urllib.request
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from . import canon, monitor
from .bindings import FILE, HTTP, DataBinding, leaf_name, split_path
from .bpmn import SERVICE_TASK
from .cas import CasError, CasStore
from .chain import COMMITTED, Chain, Receipt, genesis_line, log_line, make_tx, parse_log, replay
from .defsm import DefsmPackage
from .keys import Identity, generate_identity, load_identity, save_identity
from .monitor import MonitorExecutor, QueryError
from .values import Context, Value, decode_value, encode_value, from_json_scalar, plain


class ResolveError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


@dataclass
class ParamList:
    params: list[tuple[str, Value]] = field(default_factory=list)
    docs: list[dict] = field(default_factory=list)

    def names(self) -> list[str]:
        return [n for n, _ in self.params]

    def as_dict(self) -> dict[str, Value]:
        return dict(self.params)


def _extract_fields(document: bytes, binding_fields, cid: str) -> list[tuple[str, Value]]:
    try:
        doc = json.loads(document.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ResolveError("NotJson", f"document {cid} is not UTF-8 JSON: {exc}")
    out: list[tuple[str, Value]] = []
    seen: set[str] = set()
    for path in binding_fields:
        node = doc
        for part in split_path(path):
            if not isinstance(node, dict) or part not in node:
                raise ResolveError("FieldMissing", f"field {path!r} missing from document {cid}")
            node = node[part]
        if isinstance(node, (dict, list)):
            raise ResolveError("NonScalarField", f"field {path!r} of {cid} is not a scalar")
        name = leaf_name(path)
        if name in seen:
            raise ResolveError("NameCollision", f"binding extracts {name!r} more than once")
        seen.add(name)
        out.append((name, from_json_scalar(node)))
    return out


def default_http_post(url: str, body: dict) -> tuple[int, dict]:
    request = urllib.request.Request(
        url,
        data=canon.encode(body),
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    try:
        with urllib.request.urlopen(request, timeout=10) as response:
            return response.status, json.loads(response.read().decode("utf-8"))
    except urllib.error.HTTPError as err:
        return err.code, {}


def resolve_binding(
    binding: DataBinding,
    ctx: Context,
    cas: CasStore,
    http_post=None,
) -> ParamList:
    """Resolve one binding into parameters. File bindings need binding.cid;
    registry-based cid lookup happens in build_completion."""
    if binding.source_kind == FILE:
        if binding.cid is None:
            raise ResolveError("NotFound", "file binding has no cid to resolve")
        try:
            data = cas.get(binding.cid)
        except CasError as err:
            raise ResolveError(err.code, err.message)
        return ParamList(params=_extract_fields(data, binding.fields, binding.cid))
    # http
    post = http_post or default_http_post
    request_body = {name: plain(ctx.get(var)) for name, var in binding.inputs}
    status, response = post(binding.url, request_body)
    if status != 200:
        raise ResolveError("HttpFailure", f"service {binding.url} returned status {status}")
    params: list[tuple[str, Value]] = []
    for var, path in binding.outputs:
        node = response
        for part in split_path(path):
            if not isinstance(node, dict) or part not in node:
                raise ResolveError("FieldMissing", f"result path {path!r} missing from response of {binding.url}")
            node = node[part]
        if isinstance(node, (dict, list)):
            raise ResolveError("NonScalarField", f"result path {path!r} is not a scalar")
        params.append((var, from_json_scalar(node)))
    return ParamList(params=params)


def _registry_cid(instance: dict, producer: str | None, data_object: str) -> str:
    if producer is None:
        raise ResolveError("NotFound", f"data object {data_object!r} has no producer and no cid")
    for doc in reversed(instance["documents"]):
        if doc["task"] == producer:
            return doc["cid"]
    raise ResolveError("NotFound", f"no document recorded yet for {data_object!r} (producer {producer!r})")


def _merge_params(into: dict[str, Value], new: list[tuple[str, Value]], origin: str) -> None:
    for name, value in new:
        if name in into and into[name] != value:
            raise ResolveError("NameCollision", f"{origin} assigns {name!r} a conflicting value")
        into[name] = value


def build_completion(
    chain: Chain,
    cas: CasStore,
    identity: Identity,
    instance_id: str,
    task_id: str,
    explicit_params: dict[str, Value] | None = None,
    doc_cids: list[str] | None = None,
    http_post=None,
) -> tuple[dict[str, Value], list[dict]]:
    """Marshal (params, doc records) for one task completion."""
    instance = monitor.get_instance(chain, instance_id)
    if task_id not in monitor.enabled_tasks(chain, instance_id):
        raise ResolveError("NotEnabled", f"task {task_id!r} is not enabled")
    pkg = monitor.get_package(chain, instance["contract"])
    doc_cids = list(doc_cids or [])
    params: dict[str, Value] = {}

    # output side: attached documents are matched, in order, to the data
    # objects this task produces (data_table is sorted by data object id).
    # A produced document may be omitted when explicit params cover its
    # fields; the contract enforces that every declared field arrives.
    produced = [
        e for e in pkg.data_entries()
        if e["producer"] == task_id and e.get("binding") and e["binding"]["source"] == FILE
    ]
    for entry, cid in zip(produced, doc_cids):
        try:
            data = cas.get(cid)
        except CasError as err:
            raise ResolveError(err.code, err.message)
        _merge_params(params, _extract_fields(data, entry["binding"]["fields"], cid), entry["data_object"])

    # input side: documents feeding this task, located by explicit cid or
    # through the on-chain registry (latest document of the producer task)
    for entry in pkg.data_entries():
        if task_id not in entry["consumers"]:
            continue
        binding = entry.get("binding")
        if not binding or binding["source"] != FILE:
            continue
        cid = binding.get("cid") or _registry_cid(instance, entry["producer"], entry["data_object"])
        try:
            data = cas.get(cid)
        except CasError as err:
            raise ResolveError(err.code, err.message)
        _merge_params(params, _extract_fields(data, binding["fields"], cid), entry["data_object"])

    # service tasks invoke their http binding; outputs become params
    node = pkg.node(task_id) if any(n["node_id"] == task_id for n in pkg.nodes()) else None
    if node is not None and node["kind"] == SERVICE_TASK and node.get("binding"):
        binding = DataBinding.decode(node["binding"])
        view = Context.decode(instance["variables"]).with_values(params)
        resolved = resolve_binding(binding, view, cas, http_post=http_post)
        _merge_params(params, resolved.params, f"service {task_id!r}")

    for name, value in (explicit_params or {}).items():
        params[name] = value  # explicit operator params win

    docs = [
        {"cid": cid, "signer": identity.actor, "signature": identity.sign(cid.encode("utf-8"))}
        for cid in doc_cids
    ]
    return params, docs


# ---------------------------------------------------------------------------
# Event relay

def relay_events(chain: Chain, instance_id: str, from_height: int = 0, follow: bool = False, poll: float = 0.2):
    """Yield (height, Event) for one instance from the given height upward.
    With follow=True the stream stays open and blocks for new blocks."""
    monitor.get_instance(chain, instance_id)  # raises UnknownInstance
    height = max(from_height, 0)
    while True:
        tip = chain.height()
        for h, event in chain.events_from(height):
            if event.payload.get("instance") == instance_id:
                yield h, event
        height = tip
        if not follow:
            return
        chain.wait_for_height(tip, timeout=poll)


# ---------------------------------------------------------------------------
# World: chain + cas + identity, persisted via the submission log

@dataclass
class GatewayWorld:
    chain: Chain
    cas: CasStore
    identity: Identity
    log_path: str | None = None
    http_post: object = None
    _log_lock: threading.Lock = field(default_factory=threading.Lock)

    def submit(self, contract: str, method: str, args: dict) -> Receipt:
        tx = make_tx(self.identity, self.chain.next_nonce(self.identity.actor), contract, method, args)
        receipt = self.chain.submit_tx(tx)
        if self.log_path:
            with self._log_lock, open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(log_line(tx, receipt) + "\n")
        return receipt


def open_world(
    chain_log: str | None = None,
    cas_dir: str | None = None,
    identity_path: str | None = None,
    http_post=None,
) -> GatewayWorld:
    if identity_path and os.path.exists(identity_path):
        identity = load_identity(identity_path)
    else:
        identity = generate_identity()
        if identity_path:
            save_identity(identity, identity_path)

    executor = MonitorExecutor()
    if chain_log and os.path.exists(chain_log):
        with open(chain_log, "r", encoding="utf-8") as fh:
            genesis, entries = parse_log(fh.read())
        chain = replay(genesis, entries, executor)
        if identity.actor not in genesis["identities"]:
            raise ValueError(f"identity {identity.actor!r} is not registered in the chain's genesis")
    else:
        genesis = {"identities": {identity.actor: identity.public_key}}
        chain = Chain(genesis, executor)
        if chain_log:
            with open(chain_log, "w", encoding="utf-8") as fh:
                fh.write(genesis_line(genesis) + "\n")

    return GatewayWorld(
        chain=chain,
        cas=CasStore(cas_dir),
        identity=identity,
        log_path=chain_log,
        http_post=http_post,
    )


# ---------------------------------------------------------------------------
# REST API

class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.status = status
        self.code = code
        self.message = message


_REJECTION_STATUS = {
    "NotEnabled": 409,
    "InstanceNotRunning": 409,
    "AlreadyDeployed": 409,
    "UnknownContract": 404,
    "UnknownInstance": 404,
    "NotFound": 404,
}


def _receipt_or_error(receipt: Receipt) -> Receipt:
    if receipt.status != COMMITTED:
        raise ApiError(_REJECTION_STATUS.get(receipt.reason, 400), receipt.reason, "transaction rejected")
    return receipt


def _instance_view(chain: Chain, instance_id: str) -> dict:
    instance = monitor.get_instance(chain, instance_id)
    return {
        "instance": instance["instance"],
        "contract": instance["contract"],
        "status": instance["status"],
        "marking": instance["marking"],
        "variables": {k: plain(decode_value(v)) for k, v in instance["variables"].items()},
        "documents": [
            {k: d[k] for k in ("cid", "signer", "task", "recorded_at")} for d in instance["documents"]
        ],
        "completed_tasks": instance["completed_tasks"],
        "enabled_tasks": monitor.enabled_tasks(chain, instance_id),
    }


def _binding_summary(pkg: DefsmPackage, task_id: str) -> dict:
    node = pkg.node(task_id)
    summary: dict = {
        "name": node.get("name", task_id),
        "required_params": pkg.required_params(task_id),
    }
    produced = [
        e["data_object"] for e in pkg.data_entries()
        if e["producer"] == task_id and e.get("binding") and e["binding"]["source"] == FILE
    ]
    summary["documents_expected"] = produced
    if node.get("binding") and node["binding"]["source"] == HTTP:
        summary["url"] = node["binding"]["url"]
    return summary


def build_app(world: GatewayWorld) -> FastAPI:
    app = FastAPI(title="tabforge gateway", docs_url=None, redoc_url=None)

    @app.exception_handler(ApiError)
    async def handle_api_error(request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"code": exc.code, "message": exc.message})

    def guard(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except QueryError as err:
            raise ApiError(_REJECTION_STATUS.get(err.code, 400), err.code, err.message)
        except ResolveError as err:
            raise ApiError(_REJECTION_STATUS.get(err.code, 400), err.code, err.message)
        except CasError as err:
            raise ApiError(_REJECTION_STATUS.get(err.code, 400), err.code, err.message)

    @app.get("/contracts")
    def get_contracts():
        return [
            {"contract": c, "instances": monitor.instances_of(world.chain, c)}
            for c in monitor.deployed_contracts(world.chain)
        ]

    @app.post("/contracts")
    def post_contract(package: dict):
        receipt = _receipt_or_error(world.submit("deploy", "deploy", {"package": package}))
        return {"contract": receipt.events[0].payload["contract"]}

    @app.post("/contracts/{contract}/instances")
    def post_instance(contract: str):
        guard(monitor.get_package, world.chain, contract)
        receipt = _receipt_or_error(world.submit(contract, "start_instance", {}))
        return {"instance": receipt.events[0].payload["instance"]}

    @app.get("/instances/{instance_id}")
    def get_instance_view(instance_id: str):
        return guard(_instance_view, world.chain, instance_id)

    @app.get("/instances/{instance_id}/tasks")
    def get_tasks(instance_id: str):
        return guard(monitor.enabled_tasks, world.chain, instance_id)

    @app.get("/instances/{instance_id}/tasks/{task_id}/binding")
    def get_binding_summary(instance_id: str, task_id: str):
        instance = guard(monitor.get_instance, world.chain, instance_id)
        pkg = monitor.get_package(world.chain, instance["contract"])
        try:
            return guard(_binding_summary, pkg, task_id)
        except KeyError:
            raise ApiError(404, "UnknownTask", f"no task {task_id!r}")

    @app.post("/instances/{instance_id}/tasks/{task_id}/complete")
    def post_complete(instance_id: str, task_id: str, body: dict):
        explicit = {k: from_json_scalar(v) for k, v in (body.get("params") or {}).items()}
        params, docs = guard(
            build_completion,
            world.chain, world.cas, world.identity,
            instance_id, task_id,
            explicit, body.get("doc_cids") or [],
            world.http_post,
        )
        instance = monitor.get_instance(world.chain, instance_id)
        receipt = _receipt_or_error(
            world.submit(
                instance["contract"],
                "complete_task",
                {
                    "instance": instance_id,
                    "task": task_id,
                    "params": {k: encode_value(v) for k, v in params.items()},
                    "docs": docs,
                },
            )
        )
        return {
            "status": receipt.status,
            "events": [{"name": e.name, "payload": e.payload} for e in receipt.events],
        }

    @app.get("/instances/{instance_id}/events")
    def get_events(instance_id: str, request: Request):
        from_height = int(request.query_params.get("from", 0))
        wait = min(float(request.query_params.get("wait", 10.0)), 25.0)
        guard(monitor.get_instance, world.chain, instance_id)
        deadline = time.monotonic() + wait
        while True:
            tip = world.chain.height()
            events = [
                {"height": h, "index": e.index, "name": e.name, "payload": e.payload}
                for h, e in world.chain.events_from(from_height)
                if e.payload.get("instance") == instance_id
            ]
            if events or time.monotonic() >= deadline:
                return {"events": events, "next": tip}
            world.chain.wait_for_height(tip, timeout=max(0.0, deadline - time.monotonic()))

    @app.post("/documents")
    async def post_document(request: Request):
        data = await request.body()
        return {"cid": world.cas.put(data)}

    @app.get("/documents/{cid}")
    def get_document(cid: str):
        data = guard(world.cas.get, cid)
        return Response(content=data, media_type="application/octet-stream")

    return app


def serve(world: GatewayWorld, port: int = 8471, host: str = "127.0.0.1"):
    import uvicorn

    uvicorn.run(build_app(world), host=host, port=port, log_level="warning")
