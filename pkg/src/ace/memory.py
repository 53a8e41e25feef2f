"""Episodic log (append-only, replayable) and the declarative document store."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import CorruptionError, ValidationError
from .messaging import dumps, thaw

EPISODIC_KINDS = ("event", "action", "observation", "decision")


@dataclass(frozen=True)
class EpisodicRecord:
    seq: int
    tick: int
    kind: str
    payload: Mapping[str, Any]
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EPISODIC_KINDS:
            raise ValidationError(f"unknown episodic kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "tick": self.tick,
            "kind": self.kind,
            "payload": thaw(self.payload),
            "metadata": thaw(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EpisodicRecord":
        return cls(d["seq"], d["tick"], d["kind"], thaw(d["payload"]), thaw(d.get("metadata", {})))


class EpisodicLog:
    """Chronological, append-only record of experiences."""

    def __init__(self, records: Iterable[EpisodicRecord] = ()):
        self.records: list[EpisodicRecord] = []
        for r in records:
            self.append(r)

    @property
    def last_seq(self) -> int:
        return self.records[-1].seq if self.records else 0

    def append(self, record: EpisodicRecord) -> None:
        if record.seq != self.last_seq + 1:
            raise CorruptionError(
                f"episodic seq {record.seq} does not follow {self.last_seq}", self.last_seq or None
            )
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def to_jsonl(self) -> str:
        return "".join(dumps(r.to_dict()) + "\n" for r in self.records)

    @classmethod
    def from_jsonl(cls, text: str) -> "EpisodicLog":
        log = cls()
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = EpisodicRecord.from_dict(json.loads(line))
            except (ValueError, KeyError) as exc:
                raise CorruptionError(f"episodic line {n} unreadable: {exc}", log.last_seq or None) from exc
            log.append(rec)
        return log


@dataclass(frozen=True)
class DeclarativeDoc:
    id: str
    title: str
    body: str
    tags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tags"] = list(self.tags)
        return d


def parse_doc(doc_id: str, text: str) -> DeclarativeDoc:
    """First non-blank line is the title; an optional ``tags:`` line lists comma-separated tags."""
    lines = text.splitlines()
    title, tags, body = "", (), []
    for line in lines:
        stripped = line.strip()
        if not title and stripped:
            title = stripped.lstrip("# ").strip()
            continue
        if stripped.lower().startswith("tags:") and not tags:
            tags = tuple(sorted({t.strip() for t in stripped[5:].split(",") if t.strip()}))
            continue
        body.append(line)
    return DeclarativeDoc(doc_id, title or doc_id, "\n".join(body).strip(), tags)


class DeclarativeStore:
    """Read-only knowledge documents queried by tag, persisted as JSON lines."""

    def __init__(self, docs: Iterable[DeclarativeDoc] = ()):
        self._docs: dict[str, DeclarativeDoc] = {}
        for d in docs:
            self._insert(d)

    def _insert(self, doc: DeclarativeDoc) -> None:
        if doc.id in self._docs:
            raise ValidationError(f"duplicate document id {doc.id!r}")
        self._docs[doc.id] = doc

    def __len__(self) -> int:
        return len(self._docs)

    def get(self, doc_id: str) -> DeclarativeDoc:
        return self._docs[doc_id]

    def query(self, tag: str) -> list[DeclarativeDoc]:
        return [d for _, d in sorted(self._docs.items()) if tag in d.tags]

    def ids(self) -> list[str]:
        return sorted(self._docs)

    @classmethod
    def load(cls, path: str | Path) -> "DeclarativeStore":
        path = Path(path)
        if not path.exists():
            return cls()
        docs = []
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                d = json.loads(line)
                docs.append(DeclarativeDoc(d["id"], d["title"], d["body"], tuple(d.get("tags", ()))))
        return cls(docs)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(dumps(self._docs[i].to_dict()) + "\n" for i in self.ids()), encoding="utf-8")


def ingest_directory(store_path: str | Path, directory: str | Path) -> list[str]:
    """Add every ``*.txt``/``*.md`` file in ``directory`` to the store; return the new ids."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory} is not a directory")
    store = DeclarativeStore.load(store_path)
    added = []
    for f in sorted(directory.iterdir()):
        if f.suffix not in (".txt", ".md") or not f.is_file():
            continue
        store._insert(parse_doc(f.stem, f.read_text(encoding="utf-8")))
        added.append(f.stem)
    store.save(store_path)
    return added
