"""PubTator reader.

Records look like::

    <docid>|t|<title>
    <docid>|a|<abstract>
    <docid>\t<start>\t<end>\t<text>\t<type>\t<entity_id>
    ...

separated by blank lines. Offsets index into ``title + "\\n" + abstract``.
Lines with fewer than six tab-separated fields (e.g. BC5CDR relation rows)
are ignored. Multiple gold ids on one annotation are ``|``-separated.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterator, Sequence

from ..errors import DocumentError, ParseError
from .model import Document, KnowledgeBase, Mention, context_window
from .sentences import split_sentences

logger = logging.getLogger(__name__)

DEFAULT_ID_PREFIXES = ("UMLS:", "MESH:")


def _records(path: Path) -> Iterator[list[tuple[int, str]]]:
    block: list[tuple[int, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if line.strip():
                block.append((lineno, line))
            elif block:
                yield block
                block = []
    if block:
        yield block


def _header(path, lineno: int, line: str, tag: str) -> tuple[str, str]:
    parts = line.split("|", 2)
    if len(parts) != 3 or parts[1] != tag:
        kind = "title" if tag == "t" else "abstract"
        raise ParseError(path, lineno, f"expected '<docid>|{tag}|<{kind}>' line")
    return parts[0], parts[2]


def normalize_id(raw: str, prefixes: Sequence[str] = DEFAULT_ID_PREFIXES) -> str:
    raw = raw.strip()
    for p in prefixes:
        if raw.startswith(p):
            return raw[len(p):]
    return raw


def parse_pubtator(
    path,
    kb: KnowledgeBase | None = None,
    *,
    id_prefixes: Sequence[str] = DEFAULT_ID_PREFIXES,
    context_width: int = 100,
    abbreviations_expanded: bool = False,
) -> list[Document]:
    """Parse a PubTator file into documents with sentence ranges computed.

    Gold ids missing from ``kb`` are kept and flagged on the mention
    (``Mention.unresolved``); the total is logged.
    """
    path = Path(path)
    docs: list[Document] = []
    n_unresolved = 0
    n_mismatch = 0
    for block in _records(path):
        if len(block) < 2:
            raise ParseError(path, block[0][0], "record needs a title and an abstract line")
        doc_id, title = _header(path, *block[0], "t")
        abs_id, abstract = _header(path, *block[1], "a")
        if abs_id != doc_id:
            raise ParseError(path, block[1][0], f"abstract doc id {abs_id!r} != title doc id {doc_id!r}")
        text = f"{title}\n{abstract}"
        raw = []
        for lineno, line in block[2:]:
            cols = line.split("\t")
            if len(cols) < 6:
                continue
            if cols[0] != doc_id:
                raise ParseError(path, lineno, f"annotation doc id {cols[0]!r} != {doc_id!r}")
            try:
                start, end = int(cols[1]), int(cols[2])
            except ValueError:
                raise ParseError(path, lineno, "start/end offsets must be integers") from None
            if not (0 <= start < end <= len(text)):
                raise DocumentError(doc_id, f"line {lineno}: span {(start, end)} outside text of length {len(text)}")
            stated = cols[3]
            surface = text[start:end]
            if surface != stated:
                n_mismatch += 1
                logger.warning("%s:%d: annotation text %r != text slice %r; using slice", path, lineno, stated, surface)
            ids = tuple(normalize_id(i, id_prefixes) for i in cols[5].split("|") if i.strip())
            raw.append((start, end, surface, cols[4] or None, ids))
        raw.sort(key=lambda r: (r[0], r[1]))
        mentions = []
        for ordinal, (start, end, surface, gtype, ids) in enumerate(raw):
            unresolved = tuple(i for i in ids if kb is not None and i not in kb)
            n_unresolved += bool(unresolved)
            mentions.append(Mention(
                mention_id=f"{doc_id}-{ordinal}",
                doc_id=doc_id,
                span=(start, end),
                surface=surface,
                gold_ids=ids,
                gold_type=gtype,
                context=context_window(text, (start, end), context_width),
                unresolved=unresolved,
            ))
        docs.append(Document(
            doc_id=doc_id,
            text=text,
            mentions=tuple(mentions),
            sentences=tuple(split_sentences(text)),
            title_end=len(title),
            abbreviations_expanded=abbreviations_expanded,
        ))
    if n_unresolved:
        logger.warning("%s: %d mentions have gold ids not in the knowledge base", path, n_unresolved)
    logger.info("parsed %d documents from %s (%d surface mismatches)", len(docs), path, n_mismatch)
    return docs


def write_pubtator(docs: Sequence[Document], path) -> None:
    """Write documents back out in PubTator format (title/abstract split at ``title_end``)."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            cut = doc.title_end if doc.title_end is not None else len(doc.text)
            fh.write(f"{doc.doc_id}|t|{doc.text[:cut]}\n")
            fh.write(f"{doc.doc_id}|a|{doc.text[cut + 1:]}\n")
            for m in doc.mentions:
                fh.write("\t".join([doc.doc_id, str(m.start), str(m.end), m.surface,
                                    m.gold_type or "", "|".join(m.gold_ids)]) + "\n")
            fh.write("\n")
