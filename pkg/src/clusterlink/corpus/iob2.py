"""IOB2 export/import at token granularity.

Layout: a ``# doc_id = <id>`` line opens each document, sentences are
separated by blank lines, and each token line is
``token<TAB>tag<TAB>entity_id`` where tag is ``B-<type>``, ``I-<type>`` or
``O`` and entity_id is ``-`` outside mentions (composite ids ``|``-joined).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

from ..errors import OverlapError, ParseError
from .model import Document, Span
from .preprocess import has_overlaps

_TOKEN = re.compile(r"\w+|[^\w\s]")
_DOC_HEADER = "# doc_id = "
DEFAULT_TYPE = "MENTION"


class TokenSpan(NamedTuple):
    sentence: int
    start: int  # first token index within the sentence
    end: int  # one past the last token
    label: str
    entity_ids: str


@dataclass
class IOBDocument:
    doc_id: str
    sentences: list[list[tuple[str, str, str]]] = field(default_factory=list)


def label_of(gold_type: str | None) -> str:
    if not gold_type:
        return DEFAULT_TYPE
    return re.sub(r"\s+", "_", gold_type.strip())


def tokenize(text: str, start: int, end: int, cuts: Iterable[int] = ()) -> list[Span]:
    """Word/punctuation tokens of ``text[start:end]``, also split at every offset in ``cuts``."""
    cut_set = sorted(c for c in set(cuts) if start < c < end)
    tokens: list[Span] = []
    for m in _TOKEN.finditer(text, start, end):
        a, b = m.span()
        for c in cut_set:
            if a < c < b:
                tokens.append((a, c))
                a = c
        tokens.append((a, b))
    return tokens


def _doc_tokens(doc: Document) -> list[list[Span]]:
    cuts = [o for m in doc.mentions for o in m.span]
    sentences = doc.sentences or ((0, len(doc.text)),)
    return [tokenize(doc.text, s, e, cuts) for s, e in sentences]


def _tagged(doc: Document) -> list[list[tuple[str, str, str]]]:
    out = []
    by_start = sorted(doc.mentions, key=lambda m: m.start)
    for toks in _doc_tokens(doc):
        rows = []
        for a, b in toks:
            tag, eid = "O", "-"
            for m in by_start:
                if m.start <= a and b <= m.end:
                    tag = ("B-" if a == m.start else "I-") + label_of(m.gold_type)
                    eid = "|".join(m.gold_ids) or "-"
                    break
            rows.append((doc.text[a:b], tag, eid))
        out.append(rows)
    return out


def token_spans(doc: Document) -> list[TokenSpan]:
    """Token-level mention spans of ``doc`` computed directly from character offsets."""
    spans = []
    for si, toks in enumerate(_doc_tokens(doc)):
        for m in doc.mentions:
            idx = [i for i, (a, b) in enumerate(toks) if m.start <= a and b <= m.end]
            if idx:
                spans.append(TokenSpan(si, idx[0], idx[-1] + 1, label_of(m.gold_type), "|".join(m.gold_ids) or "-"))
    return sorted(spans)


def export_iob2(docs: Iterable[Document], path, meta: dict | None = None) -> None:
    docs = list(docs)
    for doc in docs:
        if has_overlaps(doc):
            raise OverlapError(
                f"document {doc.doc_id} has overlapping mentions; run resolve_overlaps before exporting IOB2"
            )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(meta or {}):
            fh.write(f"# {key} = {meta[key]}\n")
        for doc in docs:
            fh.write(f"{_DOC_HEADER}{doc.doc_id}\n")
            for rows in _tagged(doc):
                if not rows:
                    continue
                for token, tag, eid in rows:
                    fh.write(f"{token}\t{tag}\t{eid}\n")
                fh.write("\n")


def read_iob2(path) -> list[IOBDocument]:
    path = Path(path)
    docs: list[IOBDocument] = []
    sentence: list[tuple[str, str, str]] = []

    def flush():
        nonlocal sentence
        if sentence:
            if not docs:
                raise ParseError(path, None, "token lines before the first document header")
            docs[-1].sentences.append(sentence)
            sentence = []

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if line.startswith(_DOC_HEADER):
                flush()
                docs.append(IOBDocument(line[len(_DOC_HEADER):]))
            elif line.startswith("# "):
                continue  # metadata comment
            elif not line.strip():
                flush()
            else:
                cols = line.split("\t")
                if len(cols) != 3:
                    raise ParseError(path, lineno, f"expected 3 tab-separated columns, got {len(cols)}")
                tag = cols[1]
                if tag != "O" and not (tag.startswith("B-") or tag.startswith("I-")):
                    raise ParseError(path, lineno, f"invalid IOB2 tag {tag!r}")
                sentence.append((cols[0], tag, cols[2]))
    flush()
    return docs


def iob_spans(doc: IOBDocument) -> list[TokenSpan]:
    """Decode B-/I- runs back into token spans (an I- that does not continue a run opens one)."""
    spans = []
    for si, rows in enumerate(doc.sentences):
        cur: list | None = None
        for ti, (_, tag, eid) in enumerate(rows):
            if tag.startswith("I-") and cur is not None and cur[2] == tag[2:] and cur[3] == eid:
                cur[1] = ti + 1
                continue
            if cur is not None:
                spans.append(TokenSpan(si, cur[0], cur[1], cur[2], cur[3]))
                cur = None
            if tag != "O":
                cur = [ti, ti + 1, tag[2:], eid]
        if cur is not None:
            spans.append(TokenSpan(si, cur[0], cur[1], cur[2], cur[3]))
    return sorted(spans)
