"""Deterministic rule-based sentence splitter.

A boundary is placed after terminal punctuation (``.``, ``!``, ``?``,
optionally followed by closing quotes or brackets) when the next
non-space character starts a new sentence (uppercase letter, digit or
opening bracket) and the word before the period is not a known
abbreviation. Line breaks are always boundaries.
"""

from __future__ import annotations

import re

from .model import Span

ABBREVIATIONS = frozenset(
    """
    al approx ca cf dr e.g eg etc fig figs i.e ie inc jr ltd mr mrs ms no nos
    prof ref refs resp sp spp sr st viz vol vs wt
    """.split()
)

_BOUNDARY = re.compile(r"[.!?]+[\"')\]]*(?=\s+[\"'(\[]?[A-Z0-9])")
_WORD_BEFORE = re.compile(r"([A-Za-z][A-Za-z.]*)$")


def _is_abbreviation(text: str, dot_pos: int) -> bool:
    if text[dot_pos] != ".":
        return False
    m = _WORD_BEFORE.search(text, 0, dot_pos)
    if m is None:
        return False
    word = m.group(1).lower().rstrip(".")
    if word in ABBREVIATIONS:
        return True
    # single initials such as "J." in author lists
    return len(word) == 1 and text[m.start(1)].isupper()


def _trim(text: str, start: int, end: int) -> Span | None:
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    return (start, end) if start < end else None


def split_sentences(text: str) -> list[Span]:
    """Return sorted, disjoint half-open sentence ranges with whitespace trimmed."""
    cuts = [0]
    for m in re.finditer(r"\n", text):
        cuts.append(m.end())
    for m in _BOUNDARY.finditer(text):
        if not _is_abbreviation(text, m.start()):
            cuts.append(m.end())
    cuts.append(len(text))
    cuts = sorted(set(cuts))
    spans = []
    for a, b in zip(cuts, cuts[1:]):
        trimmed = _trim(text, a, b)
        if trimmed is not None:
            spans.append(trimmed)
    return spans
