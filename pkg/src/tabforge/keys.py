"""Actor identities: deterministic public-key signatures behind a small
sign/verify interface so another scheme can be slotted in.

The default scheme is Ed25519 (deterministic: same key + message always
produces the same signature, which replay verification relies on). Keys are
addressed by hex: 32-byte seeds for signing, 32-byte public keys for
verification.
"""

from __future__ import annotations

import json
import os
import secrets
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    PublicFormat,
)


def sign(seed_hex: str, message: bytes) -> str:
    key = Ed25519PrivateKey.from_private_bytes(bytes.fromhex(seed_hex))
    return key.sign(message).hex()


def verify(public_hex: str, message: bytes, signature_hex: str) -> bool:
    try:
        key = Ed25519PublicKey.from_public_bytes(bytes.fromhex(public_hex))
        key.verify(bytes.fromhex(signature_hex), message)
        return True
    except (InvalidSignature, ValueError):
        return False


def public_key_of(seed_hex: str) -> str:
    key = Ed25519PrivateKey.from_private_bytes(bytes.fromhex(seed_hex))
    return key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw).hex()


@dataclass(frozen=True)
class Identity:
    actor: str
    seed: str  # 32-byte hex

    @property
    def public_key(self) -> str:
        return public_key_of(self.seed)

    def sign(self, message: bytes) -> str:
        return sign(self.seed, message)


def generate_identity(actor: str = "operator") -> Identity:
    return Identity(actor=actor, seed=secrets.token_hex(32))


def load_identity(path: str) -> Identity:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return Identity(actor=data["actor"], seed=data["seed"])


def save_identity(identity: Identity, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"actor": identity.actor, "seed": identity.seed}, fh, indent=2)
        fh.write("\n")
    os.chmod(path, 0o600)
