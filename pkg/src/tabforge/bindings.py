"""Data-flow annotations attached to data objects.

An annotation is a JSON array whose first element names the source:

  [{"source":"file"},{"cid":"sha256:..."},{"field":"productId"},...]
  [{"source":"http"},{"url":"https://..."},{"in":{"name":"p","var":"v"}},
   {"out":{"var":"v","path":"result.total"}},...]

The cid element is optional for file sources; when absent the document is
located at run time through the instance's document registry. Field paths
use dot notation for nesting; a bare name addresses a top-level key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import canon

FILE = "file"
HTTP = "http"


class BindingError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


@dataclass(frozen=True)
class DataBinding:
    source_kind: str  # FILE or HTTP
    cid: str | None = None
    fields: tuple[str, ...] = ()
    url: str = ""
    inputs: tuple[tuple[str, str], ...] = ()   # (param name, variable name)
    outputs: tuple[tuple[str, str], ...] = ()  # (variable name, result path)

    def encode(self) -> dict:
        out = {"source": self.source_kind}
        if self.source_kind == FILE:
            if self.cid is not None:
                out["cid"] = self.cid
            out["fields"] = list(self.fields)
        else:
            out["url"] = self.url
            out["inputs"] = [list(p) for p in self.inputs]
            out["outputs"] = [list(p) for p in self.outputs]
        return out

    @staticmethod
    def decode(obj: dict) -> "DataBinding":
        if obj["source"] == FILE:
            return DataBinding(FILE, cid=obj.get("cid"), fields=tuple(obj["fields"]))
        return DataBinding(
            HTTP,
            url=obj["url"],
            inputs=tuple((p[0], p[1]) for p in obj["inputs"]),
            outputs=tuple((p[0], p[1]) for p in obj["outputs"]),
        )


def parse_binding(annotation: str) -> DataBinding:
    try:
        arr = json.loads(annotation)
    except (ValueError, TypeError) as exc:
        raise BindingError("MalformedAnnotation", f"annotation is not valid JSON: {exc}")
    if not isinstance(arr, list) or not arr or not all(isinstance(e, dict) for e in arr):
        raise BindingError("MalformedAnnotation", "annotation must be a JSON array of objects")

    head = arr[0]
    if "source" not in head:
        raise BindingError("MissingSource", "first array element must carry a \"source\" key")
    source = head["source"]
    if source not in (FILE, HTTP):
        raise BindingError("UnknownSource", f"source must be \"file\" or \"http\", got {source!r}")

    if source == FILE:
        cid = None
        fields: list[str] = []
        for el in arr[1:]:
            if "cid" in el:
                if not canon.is_cid(el["cid"]):
                    raise BindingError("MalformedCid", f"bad content id {el['cid']!r}")
                cid = el["cid"]
            elif "field" in el:
                path = el["field"]
                if not isinstance(path, str) or not path:
                    raise BindingError("MalformedAnnotation", "field path must be a non-empty string")
                fields.append(path)
            else:
                raise BindingError("MalformedAnnotation", f"unexpected file element {el!r}")
        if not fields:
            raise BindingError("EmptyFields", "file binding declares no fields")
        return DataBinding(FILE, cid=cid, fields=tuple(fields))

    url = ""
    inputs: list[tuple[str, str]] = []
    outputs: list[tuple[str, str]] = []
    for el in arr[1:]:
        if "url" in el:
            url = el["url"]
        elif "in" in el:
            spec = el["in"]
            inputs.append((spec["name"], spec["var"]))
        elif "out" in el:
            spec = el["out"]
            outputs.append((spec["var"], spec["path"]))
        else:
            raise BindingError("MalformedAnnotation", f"unexpected http element {el!r}")
    if not url:
        raise BindingError("MissingUrl", "http binding has no url")
    return DataBinding(HTTP, url=url, inputs=tuple(inputs), outputs=tuple(outputs))


def render_binding(binding: DataBinding) -> str:
    """Inverse of parse_binding on the DataBinding domain."""
    arr: list[dict] = [{"source": binding.source_kind}]
    if binding.source_kind == FILE:
        if binding.cid is not None:
            arr.append({"cid": binding.cid})
        arr.extend({"field": f} for f in binding.fields)
    else:
        arr.append({"url": binding.url})
        arr.extend({"in": {"name": n, "var": v}} for n, v in binding.inputs)
        arr.extend({"out": {"var": v, "path": p}} for v, p in binding.outputs)
    return json.dumps(arr)


def split_path(path: str) -> list[str]:
    return path.split(".")


def leaf_name(path: str) -> str:
    return path.rsplit(".", 1)[-1]
