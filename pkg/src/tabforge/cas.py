"""Content-addressed document store (simulated stand-in for IPFS).

Ids are "sha256:<64 hex>" over the stored bytes, so puts are idempotent and
any byte flip is detectable by re-hashing. Optionally persists each blob to
a directory, one file per cid, so separate CLI invocations share a store.
"""

from __future__ import annotations

import os

from . import canon


class CasError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class CasStore:
    def __init__(self, directory: str | None = None):
        self._blobs: dict[str, bytes] = {}
        self._dir = directory
        if directory:
            os.makedirs(directory, exist_ok=True)
            for name in os.listdir(directory):
                if name.startswith("sha256_"):
                    with open(os.path.join(directory, name), "rb") as fh:
                        self._blobs[name.replace("sha256_", "sha256:", 1)] = fh.read()

    def put(self, data: bytes) -> str:
        cid = canon.digest(data)
        if cid not in self._blobs:
            self._blobs[cid] = data
            if self._dir:
                path = os.path.join(self._dir, cid.replace(":", "_", 1))
                with open(path, "wb") as fh:
                    fh.write(data)
        return cid

    def get(self, cid: str) -> bytes:
        if not canon.is_cid(cid):
            raise CasError("MalformedCid", f"not a content id: {cid!r}")
        if cid not in self._blobs:
            raise CasError("NotFound", f"no document stored under {cid}")
        return self._blobs[cid]

    def has(self, cid: str) -> bool:
        return cid in self._blobs

    def __len__(self) -> int:
        return len(self._blobs)
