"""Thin in-process bindings over the trajectory-quality engine.

Exposes parse/evaluate/filter to data pipelines through opaque handles.
All data crossing the boundary uses the engine's canonical JSON schemas
(episode documents in, evaluation-report mappings out), so this layer needs
no knowledge of engine internals and stays stable across engine versions.

Handles are valid until closed; closing twice is a no-op. Handles must not
be shared across threads; use one handle per thread.
"""

from __future__ import annotations

import itertools
import json
from typing import Any, Mapping, Sequence

from rtml_engine import analytics, evaluator, rtml
from rtml_engine.errors import EngineError
from rtml_engine.trajectory import load_episode

__all__ = [
    "BindingError",
    "SpecHandle",
    "bind_parse_spec",
    "bind_serialize_spec",
    "bind_evaluate",
    "bind_filter_ids",
    "close",
    "open_handle_count",
]


class BindingError(Exception):
    """Mirrors an engine error 1:1. ``code`` is the engine error code;
    ``path`` locates the offending field when the engine reported one."""

    def __init__(self, code: str, message: str, path: str | None = None):
        super().__init__(f"[{code}] {message}" + (f" at {path}" if path else ""))
        self.code = code
        self.path = path


def _wrap(exc: EngineError) -> BindingError:
    path = getattr(exc, "path", None) or getattr(exc, "field", None)
    return BindingError(exc.code, str(exc), path)


_documents: dict[int, rtml.RtmlDocument] = {}
_next_id = itertools.count(1)


class SpecHandle:
    """Opaque reference to a parsed constraint document owned by the engine."""

    __slots__ = ("_id",)

    def __init__(self, handle_id: int):
        self._id = handle_id

    @property
    def closed(self) -> bool:
        return self._id not in _documents

    @property
    def task_id(self) -> str:
        return _resolve(self).task_id

    def close(self) -> None:
        _documents.pop(self._id, None)

    def __enter__(self) -> "SpecHandle":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def _resolve(handle: SpecHandle) -> rtml.RtmlDocument:
    doc = _documents.get(handle._id)
    if doc is None:
        raise BindingError("HANDLE_CLOSED", "spec handle is closed or invalid")
    return doc


def open_handle_count() -> int:
    """Number of live spec handles (for resource-leak checks)."""
    return len(_documents)


def bind_parse_spec(text: str | bytes) -> SpecHandle:
    """Parse RTML text into an engine-owned document and return a handle."""
    try:
        doc = rtml.parse_rtml(text)
        findings = rtml.validate_spec(doc)
    except EngineError as exc:
        raise _wrap(exc) from exc
    if findings:
        first = findings[0]
        raise BindingError(first.code, first.message, first.path)
    handle_id = next(_next_id)
    _documents[handle_id] = doc
    return SpecHandle(handle_id)


def bind_serialize_spec(handle: SpecHandle) -> str:
    """Render the handle's document back to canonical RTML text."""
    return rtml.serialize_rtml(_resolve(handle))


def bind_evaluate(handle: SpecHandle, episode: Mapping[str, Any]) -> dict:
    """Evaluate one episode mapping; returns the evaluation-report mapping.

    The episode must match the canonical episode JSON schema; the returned
    mapping equals the engine's report JSON loaded as a dict.
    """
    doc = _resolve(handle)
    try:
        ep = load_episode(json.dumps(episode))
        report = evaluator.evaluate(doc, ep)
    except EngineError as exc:
        raise _wrap(exc) from exc
    return evaluator.report_to_dict(report)


def bind_filter_ids(handle: SpecHandle, episodes: Sequence[Mapping[str, Any]], level: str) -> list[str]:
    """Included episode ids at the given filter level, identical to the
    engine CLI's filter output on the same inputs."""
    doc = _resolve(handle)
    try:
        loaded = [load_episode(json.dumps(e)) for e in episodes]
        manifest = analytics.filter_dataset(loaded, doc, level)
    except EngineError as exc:
        raise _wrap(exc) from exc
    return list(manifest.included)


def close(handle: SpecHandle) -> None:
    """Release the handle's document; closing twice is a no-op."""
    handle.close()
