"""Command-line entry point tying the pipeline together.

Exit codes: 0 success, 1 domain error (code on stderr), 2 usage error.
Machine output (ids, JSON) goes to stdout, one item per line; diagnostics
go to stderr.
"""

from __future__ import annotations

import sys
from decimal import Decimal, InvalidOperation

import click

from . import canon, monitor
from .bpmn import ParseError, parse_bpmn
from .cas import CasError
from .chain import COMMITTED, Chain, DivergenceDetected, parse_log, replay as replay_chain
from .defsm import CompileError, compile as compile_model
from .dmn import DmnParseError, parse_dmn
from .gateway import ResolveError, build_completion, open_world, relay_events, serve as serve_gateway
from .monitor import MonitorExecutor, QueryError
from .values import NULL, Value, boolean, encode_value, number, text

_DOMAIN_ERRORS = (ParseError, DmnParseError, CompileError, QueryError, CasError, ResolveError, ValueError)


def _fail(message: str):
    click.echo(message, err=True)
    sys.exit(1)


def _world(chain_log: str, cas_dir: str, identity: str):
    try:
        return open_world(chain_log=chain_log, cas_dir=cas_dir, identity_path=identity)
    except _DOMAIN_ERRORS as err:
        _fail(str(err))


def _submit_or_fail(world, contract: str, method: str, args: dict):
    receipt = world.submit(contract, method, args)
    if receipt.status != COMMITTED:
        _fail(f"{receipt.reason}: transaction rejected")
    return receipt


def world_options(fn):
    fn = click.option("--chain-log", default="chain.log", show_default=True, help="submission log file")(fn)
    fn = click.option("--cas-dir", default="cas", show_default=True, help="document store directory")(fn)
    fn = click.option(
        "--identity", envvar="TABFORGE_IDENTITY", default="identity.json", show_default=True,
        help="identity key file (created if missing)",
    )(fn)
    return fn


def parse_param(raw: str) -> tuple[str, Value]:
    if "=" not in raw:
        raise click.UsageError(f"--param needs k=v, got {raw!r}")
    name, value = raw.split("=", 1)
    if value == "null":
        return name, NULL
    if value in ("true", "false"):
        return name, boolean(value == "true")
    try:
        return name, number(Decimal(value))
    except InvalidOperation:
        return name, text(value)


@click.group()
def main():
    """Compile process models to contract packages and drive them on the
    simulated chain."""


@main.command("compile")
@click.argument("bpmn_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--dmn", "dmn_files", multiple=True, type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "out", required=True, type=click.Path(dir_okay=False))
def compile_cmd(bpmn_file, dmn_files, out):
    """Compile BPMN_FILE (+ decision tables) into a contract package."""
    try:
        with open(bpmn_file, "rb") as fh:
            model = parse_bpmn(fh.read())
        tables = []
        for path in dmn_files:
            with open(path, "rb") as fh:
                tables.append(parse_dmn(fh.read()))
        pkg = compile_model(model, tables)
    except _DOMAIN_ERRORS as err:
        _fail(str(err))
    with open(out, "wb") as fh:
        fh.write(pkg.canonical_bytes())
        fh.write(b"\n")
    click.echo(pkg.package_id)


@main.command()
@click.argument("pkg_file", type=click.Path(exists=True, dir_okay=False))
@world_options
def deploy(pkg_file, chain_log, cas_dir, identity):
    """Deploy a compiled package; prints the contract id."""
    world = _world(chain_log, cas_dir, identity)
    with open(pkg_file, "rb") as fh:
        content = canon.decode(fh.read())
    receipt = _submit_or_fail(world, "deploy", "deploy", {"package": content})
    click.echo(receipt.events[0].payload["contract"])


@main.command()
@click.argument("contract")
@world_options
def start(contract, chain_log, cas_dir, identity):
    """Start a process instance; prints the instance id."""
    world = _world(chain_log, cas_dir, identity)
    receipt = _submit_or_fail(world, contract, "start_instance", {})
    click.echo(receipt.events[0].payload["instance"])


@main.command()
@click.argument("instance")
@world_options
def tasks(instance, chain_log, cas_dir, identity):
    """List enabled tasks, one per line."""
    world = _world(chain_log, cas_dir, identity)
    try:
        for task in monitor.enabled_tasks(world.chain, instance):
            click.echo(task)
    except QueryError as err:
        _fail(str(err))


@main.command()
@click.argument("instance")
@click.argument("task")
@click.option("--param", "params", multiple=True, help="explicit parameter k=v")
@click.option("--doc", "docs", multiple=True, type=click.Path(exists=True, dir_okay=False))
@world_options
def complete(instance, task, params, docs, chain_log, cas_dir, identity):
    """Complete TASK on INSTANCE, attaching documents and parameters."""
    world = _world(chain_log, cas_dir, identity)
    explicit = dict(parse_param(p) for p in params)
    doc_cids = []
    for path in docs:
        with open(path, "rb") as fh:
            doc_cids.append(world.cas.put(fh.read()))
    try:
        marshalled, doc_records = build_completion(
            world.chain, world.cas, world.identity, instance, task, explicit, doc_cids
        )
    except _DOMAIN_ERRORS as err:
        _fail(str(err))
    view = monitor.get_instance(world.chain, instance)
    receipt = _submit_or_fail(
        world,
        view["contract"],
        "complete_task",
        {
            "instance": instance,
            "task": task,
            "params": {k: encode_value(v) for k, v in marshalled.items()},
            "docs": doc_records,
        },
    )
    for event in receipt.events:
        click.echo(canon.encode({"name": event.name, "payload": event.payload}).decode("utf-8"))


@main.command()
@click.argument("instance")
@click.option("--from", "from_height", default=0, show_default=True)
@world_options
def events(instance, from_height, chain_log, cas_dir, identity):
    """Print the instance's committed events as JSON lines."""
    world = _world(chain_log, cas_dir, identity)
    try:
        for height, event in relay_events(world.chain, instance, from_height):
            click.echo(
                canon.encode(
                    {"height": height, "index": event.index, "name": event.name, "payload": event.payload}
                ).decode("utf-8")
            )
    except QueryError as err:
        _fail(str(err))


@main.command()
@click.option("--log", "log_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--verify", is_flag=True, help="fail on any receipt divergence")
def replay(log_file, verify):
    """Rebuild a chain from a submission log; prints the final state hash."""
    with open(log_file, "r", encoding="utf-8") as fh:
        try:
            genesis, entries = parse_log(fh.read())
        except ValueError as err:
            _fail(str(err))
    if verify:
        try:
            chain = replay_chain(genesis, entries, MonitorExecutor())
        except DivergenceDetected as err:
            _fail(f"DivergenceDetected: {err}")
    else:
        chain = Chain(genesis, MonitorExecutor())
        for tx, _ in entries:
            chain.submit_tx(tx)
    click.echo(chain.state_hash())


@main.command()
@click.option("--port", default=8471, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@world_options
def serve(port, host, chain_log, cas_dir, identity):
    """Run the operator REST gateway."""
    world = _world(chain_log, cas_dir, identity)
    click.echo(f"listening on http://{host}:{port}", err=True)
    serve_gateway(world, port=port, host=host)


if __name__ == "__main__":
    main()
