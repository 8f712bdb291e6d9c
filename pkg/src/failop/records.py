"""Line-delimited record codec.

One JSON object per line, UTF-8, with a `type` tag; this single schema is
shared by the run log, scenario files, incident files, the knowledge base
and the telemetry wire payloads. Encoding is canonical (sorted keys, compact
separators, exact float repr) so identical values always produce identical
bytes — the determinism checks compare log files literally.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator

_DECODERS: dict[str, Callable[[dict], Any]] = {}


class RecordError(ValueError):
    """Malformed record line or payload."""


def register(tag: str):
    """Class decorator: wires a domain type into the codec. The class must
    provide to_payload() and a from_payload() classmethod."""
    def wrap(cls):
        cls.record_type = tag
        _DECODERS[tag] = cls.from_payload
        return cls
    return wrap


def encode(obj: Any) -> str:
    tag = getattr(obj, "record_type", None)
    if tag is None:
        raise RecordError(f"object {obj!r} is not a registered record type")
    payload = obj.to_payload()
    payload["type"] = tag
    return canonical_json(payload)


def decode(line: str) -> Any:
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordError(f"invalid record line: {exc}") from None
    if not isinstance(payload, dict) or "type" not in payload:
        raise RecordError("record line is not an object with a 'type' field")
    tag = payload.pop("type")
    decoder = _DECODERS.get(tag)
    if decoder is None:
        raise RecordError(f"unknown record type {tag!r}")
    try:
        return decoder(payload)
    except RecordError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise RecordError(f"bad {tag!r} record: {exc!r}") from None


def canonical_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_records(path: str | Path, objs: Iterable[Any]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for obj in objs:
            fh.write(encode(obj))
            fh.write("\n")


def iter_records(path: str | Path, skip_unknown: bool = False) -> Iterator[Any]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield decode(line)
            except RecordError as exc:
                if skip_unknown and "unknown record type" in str(exc):
                    continue
                raise RecordError(f"{path}:{lineno}: {exc}") from None


def read_records(path: str | Path, skip_unknown: bool = False) -> list[Any]:
    return list(iter_records(path, skip_unknown))


def content_digest(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def require(cond: bool, message: str) -> None:
    if not cond:
        raise RecordError(message)
