"""JSONL serialization of processed documents (the ``corpus.jsonl`` artifact)."""

from __future__ import annotations

import json
from typing import Iterable

from .model import Document, Mention


def document_to_dict(doc: Document) -> dict:
    return {
        "doc_id": doc.doc_id,
        "text": doc.text,
        "title_end": doc.title_end,
        "abbreviations_expanded": doc.abbreviations_expanded,
        "sentences": [list(s) for s in doc.sentences],
        "mentions": [
            {
                "mention_id": m.mention_id,
                "span": list(m.span),
                "surface": m.surface,
                "gold_ids": list(m.gold_ids),
                "gold_type": m.gold_type,
                "context": m.context,
                "unresolved": list(m.unresolved),
            }
            for m in doc.mentions
        ],
    }


def document_from_dict(row: dict) -> Document:
    mentions = tuple(
        Mention(
            mention_id=m["mention_id"],
            doc_id=row["doc_id"],
            span=tuple(m["span"]),
            surface=m["surface"],
            gold_ids=tuple(m.get("gold_ids", ())),
            gold_type=m.get("gold_type"),
            context=m.get("context", ""),
            unresolved=tuple(m.get("unresolved", ())),
        )
        for m in row.get("mentions", ())
    )
    return Document(
        doc_id=row["doc_id"],
        text=row["text"],
        mentions=mentions,
        sentences=tuple(tuple(s) for s in row.get("sentences", ())),
        title_end=row.get("title_end"),
        abbreviations_expanded=row.get("abbreviations_expanded", False),
    )


def write_documents(docs: Iterable[Document], path, meta: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if meta:
            fh.write(json.dumps({"_meta": meta}, sort_keys=True) + "\n")
        for doc in docs:
            fh.write(json.dumps(document_to_dict(doc), ensure_ascii=False, sort_keys=True) + "\n")


def read_documents(path) -> list[Document]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                if "_meta" not in row:
                    docs.append(document_from_dict(row))
    return docs
