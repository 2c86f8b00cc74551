"""Mention preprocessing: sentence truncation and overlap resolution."""

from __future__ import annotations

from dataclasses import replace
from typing import NamedTuple

from .model import Document, Mention


class OverlapResult(NamedTuple):
    document: Document
    dropped: int
    truncated: int


def _truncate(doc: Document, m: Mention) -> Mention | None:
    """Clip ``m`` to the sentence holding its first non-space character."""
    text = doc.text
    start, end = m.span
    while start < end and text[start].isspace():
        start += 1
    if start == end:
        return None
    if doc.sentences:
        idx = doc.sentence_index(start)
        if idx is None:
            return None
        end = min(end, doc.sentences[idx][1])
    while end > start and text[end - 1].isspace():
        end -= 1
    if (start, end) == m.span:
        return m
    return replace(m, span=(start, end), surface=text[start:end])


def overlaps(a: Mention, b: Mention) -> bool:
    return a.start < b.end and b.start < a.end


def has_overlaps(doc: Document) -> bool:
    ms = sorted(doc.mentions, key=lambda m: (m.start, m.end))
    return any(a.end > b.start for a, b in zip(ms, ms[1:]))


def resolve_overlaps(doc: Document, drop_overlaps: bool = True) -> OverlapResult:
    """Truncate mentions at sentence boundaries, then drop overlapping mentions.

    Among overlapping mentions the longer one wins; equal lengths go to the
    one that starts earlier. With ``drop_overlaps=False`` only truncation is
    applied.
    """
    truncated = 0
    dropped = 0
    clipped: list[Mention] = []
    for m in doc.mentions:
        t = _truncate(doc, m)
        if t is None:
            dropped += 1
            continue
        truncated += t is not m
        clipped.append(t)

    if drop_overlaps:
        kept: list[Mention] = []
        for m in sorted(clipped, key=lambda m: (-(m.end - m.start), m.start, m.mention_id)):
            if any(overlaps(m, k) for k in kept):
                dropped += 1
            else:
                kept.append(m)
    else:
        kept = clipped
    kept.sort(key=lambda m: (m.start, m.end, m.mention_id))
    return OverlapResult(doc.with_mentions(kept), dropped, truncated)
