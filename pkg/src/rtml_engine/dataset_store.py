"""Atomic storage: partitions episode collections into minimal subsets
keyed by (embodiment, task_id, environment) and composes virtual datasets
with boolean tag queries. Episodes are referenced by id, never copied;
every episode lives in exactly one atomic subset of a manifest. Manifests
are immutable snapshots: edits produce a new version pointing at its
parent.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Sequence

from .analytics import FilterManifest
from .errors import DuplicateEpisodeError, QueryParseError, UnknownEpisodeError
from .trajectory import Episode


@dataclass(frozen=True)
class SubsetKey:
    embodiment: str
    task_id: str
    environment: str

    def as_tuple(self) -> tuple[str, str, str]:
        return (self.embodiment, self.task_id, self.environment)


@dataclass(frozen=True)
class AtomicSubset:
    subset_id: str
    key: SubsetKey
    episode_ids: tuple[str, ...]
    tags: frozenset[str]
    digest: str


@dataclass(frozen=True)
class DatasetManifest:
    subsets: tuple[AtomicSubset, ...]
    version: int
    parent: int | None = None

    def episode_ids(self) -> set[str]:
        return {eid for s in self.subsets for eid in s.episode_ids}


@dataclass(frozen=True)
class DatasetView:
    episode_ids: tuple[str, ...]
    subsets: tuple[AtomicSubset, ...]


def _digest(key: SubsetKey, episode_ids: Sequence[str]) -> str:
    payload = json.dumps({"key": list(key.as_tuple()), "episodes": sorted(episode_ids)}, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _make_subset(subset_id: str, key: SubsetKey, episode_ids: Sequence[str], tags: frozenset[str]) -> AtomicSubset:
    ids = tuple(sorted(episode_ids))
    return AtomicSubset(subset_id=subset_id, key=key, episode_ids=ids, tags=tags, digest=_digest(key, ids))


def partition(episodes: Sequence[Episode]) -> DatasetManifest:
    """Group episodes by their exact key triple into atomic subsets.

    Subsets are ordered lexicographically by key and auto-tagged with their
    three key values. Duplicate episode ids are rejected.
    """
    seen: set[str] = set()
    groups: dict[tuple[str, str, str], list[str]] = {}
    for ep in episodes:
        if ep.id in seen:
            raise DuplicateEpisodeError(f"duplicate episode id {ep.id!r}")
        seen.add(ep.id)
        groups.setdefault((ep.embodiment, ep.task_id, ep.environment), []).append(ep.id)

    subsets = []
    for triple in sorted(groups):
        key = SubsetKey(*triple)
        subset_id = "__".join(triple)
        subsets.append(_make_subset(subset_id, key, groups[triple], frozenset(triple)))
    return DatasetManifest(subsets=tuple(subsets), version=1, parent=None)


# ---------------------------------------------------------------------------
# tag query language
#
#   expr := term (('AND' | 'OR') term)*        (left-associative)
#   term := 'NOT'? (tag | '(' expr ')')
#   tag  := '"' characters '"'                 (backslash escapes " and \)


class TagExpr:
    def evaluate(self, tags: frozenset[str]) -> bool:
        raise NotImplementedError


@dataclass(frozen=True)
class TagLiteral(TagExpr):
    tag: str

    def evaluate(self, tags: frozenset[str]) -> bool:
        return self.tag in tags


@dataclass(frozen=True)
class NotExpr(TagExpr):
    operand: TagExpr

    def evaluate(self, tags: frozenset[str]) -> bool:
        return not self.operand.evaluate(tags)


@dataclass(frozen=True)
class AndExpr(TagExpr):
    left: TagExpr
    right: TagExpr

    def evaluate(self, tags: frozenset[str]) -> bool:
        return self.left.evaluate(tags) and self.right.evaluate(tags)


@dataclass(frozen=True)
class OrExpr(TagExpr):
    left: TagExpr
    right: TagExpr

    def evaluate(self, tags: frozenset[str]) -> bool:
        return self.left.evaluate(tags) or self.right.evaluate(tags)


class _QueryParser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def _skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _peek_word(self) -> str | None:
        self._skip_ws()
        for word in ("AND", "OR", "NOT"):
            end = self.pos + len(word)
            if self.text[self.pos : end] == word and (end >= len(self.text) or not self.text[end].isalnum()):
                return word
        return None

    def _consume_word(self, word: str):
        self._skip_ws()
        self.pos += len(word)

    def parse(self) -> TagExpr:
        expr = self._expr()
        self._skip_ws()
        if self.pos != len(self.text):
            raise QueryParseError(f"unexpected trailing input {self.text[self.pos:]!r}", self.pos)
        return expr

    def _expr(self) -> TagExpr:
        left = self._term()
        while True:
            word = self._peek_word()
            if word == "AND":
                self._consume_word(word)
                left = AndExpr(left, self._term())
            elif word == "OR":
                self._consume_word(word)
                left = OrExpr(left, self._term())
            else:
                return left

    def _term(self) -> TagExpr:
        if self._peek_word() == "NOT":
            self._consume_word("NOT")
            return NotExpr(self._term())
        self._skip_ws()
        if self.pos >= len(self.text):
            raise QueryParseError("unexpected end of query", self.pos)
        ch = self.text[self.pos]
        if ch == "(":
            self.pos += 1
            inner = self._expr()
            self._skip_ws()
            if self.pos >= len(self.text) or self.text[self.pos] != ")":
                raise QueryParseError("expected ')'", self.pos)
            self.pos += 1
            return inner
        if ch == '"':
            return TagLiteral(self._string())
        raise QueryParseError(f"expected quoted tag or '(', found {ch!r}", self.pos)

    def _string(self) -> str:
        start = self.pos
        self.pos += 1
        out: list[str] = []
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch == "\\" and self.pos + 1 < len(self.text):
                out.append(self.text[self.pos + 1])
                self.pos += 2
                continue
            if ch == '"':
                self.pos += 1
                if not out:
                    raise QueryParseError("tag literal must be non-empty", start)
                return "".join(out)
            out.append(ch)
            self.pos += 1
        raise QueryParseError("unterminated tag literal", start)


def parse_query(text: str) -> TagExpr:
    """Parse a tag query; raises QueryParseError with the failing offset."""
    return _QueryParser(text).parse()


def compose(manifest: DatasetManifest, query: str | TagExpr) -> DatasetView:
    """Select the subsets whose tag sets satisfy the query.

    Deterministic: subsets keep manifest order, episode ids are already
    sorted within each subset, and no episode can repeat because each lives
    in exactly one subset.
    """
    expr = parse_query(query) if isinstance(query, str) else query
    selected = tuple(s for s in manifest.subsets if expr.evaluate(s.tags))
    ids = tuple(eid for s in selected for eid in s.episode_ids)
    return DatasetView(episode_ids=ids, subsets=selected)


def attach_filter(manifest: DatasetManifest, fm: FilterManifest, as_tag: str) -> DatasetManifest:
    """Record a filter outcome as a tag, producing a new manifest version.

    Subsets fully inside the filter's included set gain the tag; subsets
    partially inside are split into tagged/untagged atomic subsets with the
    same key, preserving one-subset-per-episode.
    """
    known = manifest.episode_ids()
    filter_ids = set(fm.included) | {e.id for e in fm.excluded}
    unknown = filter_ids - known
    if unknown:
        raise UnknownEpisodeError(f"filter references unknown episode ids: {sorted(unknown)[:5]}")

    included = set(fm.included)
    new_subsets: list[AtomicSubset] = []
    for subset in manifest.subsets:
        inside = [eid for eid in subset.episode_ids if eid in included]
        outside = [eid for eid in subset.episode_ids if eid not in included]
        if not inside:
            new_subsets.append(subset)
        elif not outside:
            new_subsets.append(
                _make_subset(subset.subset_id, subset.key, subset.episode_ids, subset.tags | {as_tag})
            )
        else:
            new_subsets.append(
                _make_subset(f"{subset.subset_id}__{as_tag}", subset.key, inside, subset.tags | {as_tag})
            )
            new_subsets.append(
                _make_subset(f"{subset.subset_id}__not-{as_tag}", subset.key, outside, subset.tags)
            )
    return DatasetManifest(subsets=tuple(new_subsets), version=manifest.version + 1, parent=manifest.version)


# ---------------------------------------------------------------------------
# serialization


def manifest_to_dict(m: DatasetManifest) -> dict:
    return {
        "version": m.version,
        "parent": m.parent,
        "subsets": [
            {
                "subset_id": s.subset_id,
                "key": {
                    "embodiment": s.key.embodiment,
                    "task_id": s.key.task_id,
                    "environment": s.key.environment,
                },
                "tags": sorted(s.tags),
                "episodes": list(s.episode_ids),
                "digest": s.digest,
            }
            for s in m.subsets
        ],
    }


def manifest_from_dict(data: dict) -> DatasetManifest:
    subsets = tuple(
        AtomicSubset(
            subset_id=s["subset_id"],
            key=SubsetKey(s["key"]["embodiment"], s["key"]["task_id"], s["key"]["environment"]),
            episode_ids=tuple(s["episodes"]),
            tags=frozenset(s["tags"]),
            digest=s["digest"],
        )
        for s in data["subsets"]
    )
    return DatasetManifest(subsets=subsets, version=int(data["version"]), parent=data.get("parent"))
