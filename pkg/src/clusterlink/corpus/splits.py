"""Split loading and per-split corpus statistics."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .model import CorpusSplit, Document, KnowledgeBase, Mention


def read_id_list(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def load_split(train, dev, test) -> CorpusSplit:
    """Build a split from three files of document ids, one per line."""
    return CorpusSplit(frozenset(read_id_list(train)), frozenset(read_id_list(dev)), frozenset(read_id_list(test)))


def split_from_files(groups: dict[str, Sequence[Document]]) -> CorpusSplit:
    """Split implied by loading each partition from its own file."""
    return CorpusSplit(**{name: frozenset(d.doc_id for d in docs) for name, docs in groups.items()})


def gold_entities(mentions: Iterable[Mention]) -> set[str]:
    return {g for m in mentions for g in m.gold_ids}


@dataclass(frozen=True)
class SplitStats:
    split: str
    documents: int
    mentions: int
    entities: int
    unresolved_mentions: int
    pct_seen: float

    def as_dict(self) -> dict:
        return {
            "split": self.split,
            "documents": self.documents,
            "mentions": self.mentions,
            "entities": self.entities,
            "unresolved_mentions": self.unresolved_mentions,
            "pct_seen": round(self.pct_seen, 4),
        }


def split_stats(docs: Sequence[Document], split: CorpusSplit, kb: KnowledgeBase | None = None) -> dict[str, SplitStats]:
    """Mention/entity counts and %-seen for each split.

    A mention is seen when its gold entity is the gold entity of some
    training mention. Mentions without gold ids count towards the
    denominator as unseen. ``kb`` (optional) re-checks resolvability.
    """
    by_split = {name: split.select(docs, name) for name in ("train", "dev", "test")}
    train_gold = gold_entities(m for d in by_split["train"] for m in d.mentions)
    out = {}
    for name, sdocs in by_split.items():
        mentions = [m for d in sdocs for m in d.mentions]
        if kb is not None:
            unresolved = sum(1 for m in mentions if not m.gold_ids or any(g not in kb for g in m.gold_ids))
        else:
            unresolved = sum(1 for m in mentions if not m.is_resolvable)
        seen = sum(1 for m in mentions if m.gold_entity_id is not None and m.gold_entity_id in train_gold)
        pct = 100.0 * seen / len(mentions) if mentions else 0.0
        out[name] = SplitStats(name, len(sdocs), len(mentions), len(gold_entities(mentions)), unresolved, pct)
    return out
