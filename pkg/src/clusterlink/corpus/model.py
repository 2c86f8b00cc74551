"""Immutable in-memory data model: entities, knowledge bases, documents, mentions."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping

from ..errors import ConflictError, DocumentError

Span = tuple[int, int]


@dataclass(frozen=True)
class Entity:
    entity_id: str
    canonical_name: str
    types: frozenset[str] = frozenset()
    aliases: tuple[str, ...] = ()
    description: str = ""

    def __post_init__(self) -> None:
        if not self.entity_id:
            raise ValueError("entity_id must be non-empty")
        if not self.canonical_name:
            raise ValueError(f"entity {self.entity_id}: canonical_name must be non-empty")
        object.__setattr__(self, "types", frozenset(self.types))
        object.__setattr__(self, "aliases", tuple(self.aliases))

    @property
    def names(self) -> tuple[str, ...]:
        """Canonical name followed by the aliases, deduplicated in order."""
        seen = dict.fromkeys([self.canonical_name, *self.aliases])
        return tuple(seen)

    def description_fields(self) -> tuple[str, ...]:
        """Text fields retrieval vectorizes: name, sorted types, then aliases."""
        fields = [self.canonical_name, *sorted(self.types), *self.aliases]
        return tuple(f for f in fields if f)


class KnowledgeBase(Mapping[str, Entity]):
    """Id-indexed, read-only collection of entities."""

    def __init__(self, entities: Iterable[Entity] = (), name: str = "") -> None:
        self.name = name
        self._entities: dict[str, Entity] = {}
        for entity in entities:
            if entity.entity_id in self._entities:
                raise ConflictError(entity.entity_id)
            self._entities[entity.entity_id] = entity

    def __getitem__(self, entity_id: str) -> Entity:
        return self._entities[entity_id]

    def __iter__(self) -> Iterator[str]:
        return iter(self._entities)

    def __len__(self) -> int:
        return len(self._entities)

    def __repr__(self) -> str:
        return f"KnowledgeBase(name={self.name!r}, size={len(self)})"

    def sorted_ids(self) -> list[str]:
        return sorted(self._entities)


@dataclass(frozen=True)
class Mention:
    """A labelled span of a document.

    ``gold_ids`` holds every gold identifier; composite annotations carry
    more than one. ``unresolved`` lists gold ids absent from the knowledge
    base the corpus was loaded against.
    """

    mention_id: str
    doc_id: str
    span: Span
    surface: str
    gold_ids: tuple[str, ...] = ()
    gold_type: str | None = None
    context: str = ""
    unresolved: tuple[str, ...] = ()

    @property
    def gold_entity_id(self) -> str | None:
        return self.gold_ids[0] if self.gold_ids else None

    @property
    def start(self) -> int:
        return self.span[0]

    @property
    def end(self) -> int:
        return self.span[1]

    @property
    def is_resolvable(self) -> bool:
        return bool(self.gold_ids) and not self.unresolved


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    mentions: tuple[Mention, ...] = ()
    sentences: tuple[Span, ...] = ()
    title_end: int | None = None
    abbreviations_expanded: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "mentions", tuple(self.mentions))
        object.__setattr__(self, "sentences", tuple(tuple(s) for s in self.sentences))
        n = len(self.text)
        prev_end = 0
        for start, end in self.sentences:
            if not (prev_end <= start < end <= n):
                raise DocumentError(self.doc_id, f"invalid sentence range {(start, end)}")
            prev_end = end
        for m in self.mentions:
            if not (0 <= m.start < m.end <= n):
                raise DocumentError(self.doc_id, f"mention {m.mention_id} span {m.span} outside text of length {n}")
            if self.text[m.start:m.end] != m.surface:
                raise DocumentError(self.doc_id, f"mention {m.mention_id} surface does not match text")

    def with_mentions(self, mentions: Iterable[Mention]) -> "Document":
        return replace(self, mentions=tuple(mentions))

    def sentence_index(self, offset: int) -> int | None:
        """Index of the sentence containing ``offset``, or None."""
        for i, (start, end) in enumerate(self.sentences):
            if start <= offset < end:
                return i
            if start > offset:
                break
        return None


@dataclass(frozen=True)
class CorpusSplit:
    train: frozenset[str] = field(default_factory=frozenset)
    dev: frozenset[str] = field(default_factory=frozenset)
    test: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        for name in ("train", "dev", "test"):
            object.__setattr__(self, name, frozenset(getattr(self, name)))
        overlap = (self.train & self.dev) | (self.train & self.test) | (self.dev & self.test)
        if overlap:
            raise ConflictError(sorted(overlap)[0], f"documents assigned to more than one split: {sorted(overlap)[:5]}")

    def assign(self, doc_id: str) -> str | None:
        for name in ("train", "dev", "test"):
            if doc_id in getattr(self, name):
                return name
        return None

    def check_covers(self, docs: Iterable[Document]) -> None:
        missing = [d.doc_id for d in docs if self.assign(d.doc_id) is None]
        if missing:
            raise ValueError(f"{len(missing)} documents not assigned to any split, e.g. {missing[:5]}")

    def select(self, docs: Iterable[Document], name: str) -> list[Document]:
        ids = getattr(self, name)
        return [d for d in docs if d.doc_id in ids]


def all_mentions(docs: Iterable[Document]) -> list[Mention]:
    return [m for d in docs for m in d.mentions]


def context_window(text: str, span: Span, width: int = 100) -> str:
    start, end = span
    return text[max(0, start - width):end + width]
