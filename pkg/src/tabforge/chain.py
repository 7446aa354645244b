"""Deterministic simulated blockchain.

One transaction per block, totally ordered by submission. Contract logic is
injected as an executor object so the chain layer stays policy-free; the
executor reads and writes staged state through a TxContext and either
returns (commit) or raises ExecError (reject). Rejected transactions leave
no trace in state, produce no events, consume no nonce and append no block.

Determinism: execution sees only (committed state, tx args, genesis
identities); there is no clock and no randomness, so replaying a submission
log reproduces every receipt and the final state hash byte for byte.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from . import canon, keys

COMMITTED = "Committed"
REJECTED = "Rejected"

DEPLOY_TARGET = "deploy"
GAS_LIMIT = 10**6


class ExecError(Exception):
    """Method-level rejection; code becomes the receipt's Rejected reason."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
        self.message = message


class DivergenceDetected(Exception):
    pass


@dataclass(frozen=True)
class Transaction:
    sender: str
    nonce: int
    contract: str
    method: str
    args: dict
    signature: str

    def signing_payload(self) -> bytes:
        return canon.encode(
            {
                "sender": self.sender,
                "nonce": self.nonce,
                "contract": self.contract,
                "method": self.method,
                "args": self.args,
            }
        )

    def digest(self) -> str:
        return canon.digest(canon.encode(self.encode()))

    def encode(self) -> dict:
        return {
            "sender": self.sender,
            "nonce": self.nonce,
            "contract": self.contract,
            "method": self.method,
            "args": self.args,
            "signature": self.signature,
        }

    @staticmethod
    def decode(obj: dict) -> "Transaction":
        return Transaction(
            sender=obj["sender"],
            nonce=obj["nonce"],
            contract=obj["contract"],
            method=obj["method"],
            args=obj["args"],
            signature=obj["signature"],
        )


def make_tx(identity: keys.Identity, nonce: int, contract: str, method: str, args: dict) -> Transaction:
    unsigned = Transaction(identity.actor, nonce, contract, method, args, signature="")
    return Transaction(
        identity.actor, nonce, contract, method, args,
        signature=identity.sign(unsigned.signing_payload()),
    )


@dataclass(frozen=True)
class Event:
    tx_digest: str
    contract: str
    name: str
    payload: dict
    index: int

    def encode(self) -> dict:
        return {
            "tx_digest": self.tx_digest,
            "contract": self.contract,
            "name": self.name,
            "payload": self.payload,
            "index": self.index,
        }


@dataclass(frozen=True)
class Receipt:
    status: str
    reason: str | None
    events: tuple[Event, ...]
    gas: int

    def encode(self) -> dict:
        return {
            "status": self.status,
            "reason": self.reason,
            "gas": self.gas,
            "events": [e.encode() for e in self.events],
        }

    @staticmethod
    def decode(obj: dict) -> "Receipt":
        return Receipt(
            status=obj["status"],
            reason=obj.get("reason"),
            events=tuple(
                Event(e["tx_digest"], e["contract"], e["name"], e["payload"], e["index"])
                for e in obj["events"]
            ),
            gas=obj["gas"],
        )


@dataclass(frozen=True)
class Block:
    height: int
    parent_digest: str
    tx: Transaction

    def encode(self) -> dict:
        return {"height": self.height, "parent_digest": self.parent_digest, "tx": self.tx.encode()}

    def digest(self) -> str:
        return canon.digest_of(self.encode())


class TxContext:
    """Staged read/write view handed to the executor; atomic by construction."""

    def __init__(self, chain: "Chain", tx: Transaction):
        self._chain = chain
        self.tx = tx
        self.height = len(chain.blocks)
        self._writes: dict[tuple[str, str], str] = {}
        self._events: list[Event] = []
        self._gas = 0

    def charge(self, steps: int = 1):
        self._gas += steps
        if self._gas > GAS_LIMIT:
            raise ExecError("GasExhausted", f"transaction exceeded {GAS_LIMIT} steps")

    def get(self, contract: str, key: str):
        raw = self._writes.get((contract, key))
        if raw is None:
            raw = self._chain.state.get((contract, key))
        return None if raw is None else canon.decode(raw.encode("utf-8"))

    def put(self, contract: str, key: str, obj) -> None:
        self.charge()
        self._writes[(contract, key)] = canon.encode(obj).decode("utf-8")

    def emit(self, contract: str, name: str, payload: dict) -> None:
        self.charge()
        self._events.append(
            Event(self.tx.digest(), contract, name, payload, index=len(self._events))
        )

    def identity_key(self, actor: str) -> str | None:
        return self._chain.genesis["identities"].get(actor)


class Chain:
    """Serializes submissions; queries observe only committed blocks."""

    def __init__(self, genesis: dict, executor):
        self.genesis = genesis
        self.executor = executor
        self.blocks: list[Block] = []
        self.receipts: list[Receipt] = []       # one per committed block
        self.events_by_height: list[list[Event]] = []
        self.state: dict[tuple[str, str], str] = {}
        self.nonces: dict[str, int] = {}
        self._lock = threading.RLock()
        self._new_block = threading.Condition(self._lock)

    # -- submission ---------------------------------------------------------

    def next_nonce(self, sender: str) -> int:
        with self._lock:
            return self.nonces.get(sender, 0) + 1

    def submit_tx(self, tx: Transaction) -> Receipt:
        with self._lock:
            public = self.genesis["identities"].get(tx.sender)
            if public is None or not keys.verify(public, tx.signing_payload(), tx.signature):
                return Receipt(REJECTED, "BadSignature", (), 0)
            if tx.nonce != self.nonces.get(tx.sender, 0) + 1:
                return Receipt(REJECTED, "BadNonce", (), 0)

            ctx = TxContext(self, tx)
            try:
                self.executor.execute(ctx, tx)
            except ExecError as err:
                return Receipt(REJECTED, err.code, (), ctx._gas)

            parent = self.blocks[-1].digest() if self.blocks else canon.digest_of(self.genesis)
            block = Block(height=len(self.blocks), parent_digest=parent, tx=tx)
            self.state.update(ctx._writes)
            self.nonces[tx.sender] = tx.nonce
            self.blocks.append(block)
            self.events_by_height.append(list(ctx._events))
            receipt = Receipt(COMMITTED, None, tuple(ctx._events), ctx._gas)
            self.receipts.append(receipt)
            self._new_block.notify_all()
            return receipt

    # -- queries ------------------------------------------------------------

    def get_state(self, contract: str, key: str):
        with self._lock:
            raw = self.state.get((contract, key))
        return None if raw is None else canon.decode(raw.encode("utf-8"))

    def state_keys(self, contract: str) -> list[str]:
        with self._lock:
            return sorted(k for c, k in self.state if c == contract)

    def contracts(self) -> list[str]:
        with self._lock:
            return sorted({c for c, _ in self.state})

    def height(self) -> int:
        with self._lock:
            return len(self.blocks)

    def events_from(self, from_height: int) -> list[tuple[int, Event]]:
        with self._lock:
            out = []
            for h in range(max(from_height, 0), len(self.events_by_height)):
                out.extend((h, e) for e in self.events_by_height[h])
            return out

    def wait_for_height(self, height: int, timeout: float) -> bool:
        """Block until the chain grows past `height` or the timeout elapses."""
        with self._new_block:
            if len(self.blocks) > height:
                return True
            return self._new_block.wait_for(lambda: len(self.blocks) > height, timeout)

    def state_hash(self) -> str:
        with self._lock:
            nested: dict[str, dict[str, str]] = {}
            for (contract, key), value in self.state.items():
                nested.setdefault(contract, {})[key] = value
        return canon.digest_of(nested)

    def verify_hash_chain(self) -> bool:
        parent = canon.digest_of(self.genesis)
        for i, block in enumerate(self.blocks):
            if block.height != i or block.parent_digest != parent:
                return False
            parent = block.digest()
        return True


# ---------------------------------------------------------------------------
# Log + replay

def log_line(tx: Transaction, receipt: Receipt) -> str:
    return canon.encode({"tx": tx.encode(), "receipt": receipt.encode()}).decode("utf-8")


def genesis_line(genesis: dict) -> str:
    return canon.encode({"genesis": genesis}).decode("utf-8")


def parse_log(text: str) -> tuple[dict, list[tuple[Transaction, Receipt]]]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty log: no genesis record")
    head = canon.decode(lines[0].encode("utf-8"))
    if "genesis" not in head:
        raise ValueError("first log line must be the genesis record")
    entries = []
    for ln in lines[1:]:
        obj = canon.decode(ln.encode("utf-8"))
        entries.append((Transaction.decode(obj["tx"]), Receipt.decode(obj["receipt"])))
    return head["genesis"], entries


def replay(genesis: dict, entries: list[tuple[Transaction, Receipt]], executor) -> Chain:
    """Re-execute a submission log; raises DivergenceDetected on any receipt drift."""
    chain = Chain(genesis, executor)
    for i, (tx, expected) in enumerate(entries):
        got = chain.submit_tx(tx)
        if got.encode() != expected.encode():
            raise DivergenceDetected(
                f"receipt of submission {i} diverged: expected {expected.encode()}, got {got.encode()}"
            )
    return chain
