"""Targets, queries and their JSONL loaders.

One JSON object per line. Target records carry ``target_id`` and
``descriptor``; query records carry ``query_id``, ``text`` and
``gt_targets``. Text fields are NFC-normalized on load.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence

from .artifacts import atomic_write_text
from .text import nfc


class Direction(str, Enum):
    TO_IMAGE = "to_image"
    TO_TEXT = "to_text"


class CorpusError(ValueError):
    """Base class for ingestion errors. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class EmptyCorpusError(CorpusError):
    pass


class DuplicateIdError(CorpusError):
    def __init__(self, item_id: str, line: int | None = None, path: str | None = None):
        self.item_id = item_id
        super().__init__(f"duplicate id {item_id!r}", line, path)


class EmptyDescriptorError(CorpusError):
    pass


class MalformedRecordError(CorpusError):
    pass


class UnknownTargetError(CorpusError):
    def __init__(self, query_id: str, target_id: str, line: int | None = None, path: str | None = None):
        self.query_id = query_id
        self.target_id = target_id
        super().__init__(f"query {query_id!r} references unknown target {target_id!r}", line, path)


@dataclass(frozen=True)
class Target:
    target_id: str
    descriptor: str
    direction: Direction = Direction.TO_IMAGE


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str
    gt_targets: tuple[str, ...]


@dataclass(frozen=True)
class Corpus:
    """Immutable, ordered target collection. Row ``i`` of any embedding
    matrix built from the corpus belongs to ``targets[i]``."""

    targets: tuple[Target, ...]
    direction: Direction = Direction.TO_IMAGE

    def __post_init__(self) -> None:
        if not self.targets:
            raise EmptyCorpusError("corpus has no targets")
        seen: set[str] = set()
        for i, t in enumerate(self.targets):
            if t.target_id in seen:
                raise DuplicateIdError(t.target_id, i + 1)
            if not t.descriptor.strip():
                raise EmptyDescriptorError(f"empty descriptor for {t.target_id!r}", i + 1)
            seen.add(t.target_id)
        object.__setattr__(self, "_index", {t.target_id: i for i, t in enumerate(self.targets)})

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[str, str]], direction: Direction = Direction.TO_IMAGE) -> Corpus:
        return cls(tuple(Target(tid, nfc(d), direction) for tid, d in pairs), direction)

    def __len__(self) -> int:
        return len(self.targets)

    def __iter__(self) -> Iterator[Target]:
        return iter(self.targets)

    def __contains__(self, target_id: object) -> bool:
        return target_id in self._index  # type: ignore[attr-defined]

    def index_of(self, target_id: str) -> int:
        return self._index[target_id]  # type: ignore[attr-defined]

    def get(self, target_id: str) -> Target:
        return self.targets[self.index_of(target_id)]

    @property
    def ids(self) -> list[str]:
        return [t.target_id for t in self.targets]

    @property
    def descriptors(self) -> list[str]:
        return [t.descriptor for t in self.targets]


def _iter_records(path: Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise MalformedRecordError(f"invalid JSON ({exc.msg})", lineno, str(path)) from None
            if not isinstance(record, dict):
                raise MalformedRecordError("record is not a JSON object", lineno, str(path))
            yield lineno, record


def _require_str(record: dict, key: str, lineno: int, path: Path) -> str:
    value = record.get(key)
    if not isinstance(value, str):
        raise MalformedRecordError(f"field {key!r} missing or not a string", lineno, str(path))
    return value


def load_corpus(path: str | Path, direction: Direction | str = Direction.TO_IMAGE) -> Corpus:
    path = Path(path)
    direction = Direction(direction)
    targets: list[Target] = []
    seen: set[str] = set()
    for lineno, record in _iter_records(path):
        tid = nfc(_require_str(record, "target_id", lineno, path))
        desc = nfc(_require_str(record, "descriptor", lineno, path))
        if tid in seen:
            raise DuplicateIdError(tid, lineno, str(path))
        if not desc.strip():
            raise EmptyDescriptorError(f"empty descriptor for {tid!r}", lineno, str(path))
        seen.add(tid)
        targets.append(Target(tid, desc, direction))
    if not targets:
        raise EmptyCorpusError("corpus file has no records", path=str(path))
    return Corpus(tuple(targets), direction)


def dump_corpus(corpus: Corpus) -> str:
    return "".join(
        json.dumps({"target_id": t.target_id, "descriptor": t.descriptor}, ensure_ascii=False) + "\n"
        for t in corpus
    )


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    atomic_write_text(path, dump_corpus(corpus))


def load_queries(path: str | Path, corpus: Corpus) -> list[Query]:
    path = Path(path)
    queries: list[Query] = []
    seen: set[str] = set()
    for lineno, record in _iter_records(path):
        qid = nfc(_require_str(record, "query_id", lineno, path))
        text = nfc(_require_str(record, "text", lineno, path))
        gts = record.get("gt_targets")
        if not isinstance(gts, list) or not gts or not all(isinstance(g, str) for g in gts):
            raise MalformedRecordError("gt_targets must be a nonempty list of strings", lineno, str(path))
        if qid in seen:
            raise DuplicateIdError(qid, lineno, str(path))
        if not text.strip():
            raise MalformedRecordError(f"empty text for query {qid!r}", lineno, str(path))
        gt = tuple(dict.fromkeys(nfc(g) for g in gts))
        for g in gt:
            if g not in corpus:
                raise UnknownTargetError(qid, g, lineno, str(path))
        seen.add(qid)
        queries.append(Query(qid, text, gt))
    return queries


def dump_queries(queries: Sequence[Query]) -> str:
    return "".join(
        json.dumps(
            {"query_id": q.query_id, "text": q.text, "gt_targets": list(q.gt_targets)},
            ensure_ascii=False,
        )
        + "\n"
        for q in queries
    )


def save_queries(queries: Sequence[Query], path: str | Path) -> None:
    atomic_write_text(path, dump_queries(queries))
