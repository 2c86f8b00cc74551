"""Scorer implementations for mention-mention and mention-entity affinity.

Every scorer returns values in the open unit interval so both kinds of
edge can be ranked on one scale, and ``score_mm`` is symmetric.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable

import numpy as np

from ..candgen import Vocabulary, cosine, vectorize
from ..corpus.model import Entity, KnowledgeBase, Mention
from ..errors import MissingScoreError, ParseError, ScoreRangeError

logger = logging.getLogger(__name__)

EPS = 1e-6


def squash(x: float, eps: float = EPS) -> float:
    """Map [0, 1] affinely into [eps, 1 - eps]."""
    return eps + (1.0 - 2.0 * eps) * min(1.0, max(0.0, x))


def _mid(m: Mention | str) -> str:
    return m if isinstance(m, str) else m.mention_id


def _eid(e: Entity | str) -> str:
    return e if isinstance(e, str) else e.entity_id


class Scorer:
    """Base class; subclasses implement ``score_mm`` and/or ``score_me``."""

    has_mm: bool = True
    has_me: bool = True

    def score_mm(self, a: Mention, b: Mention) -> float:
        raise NotImplementedError

    def score_me(self, m: Mention, e: Entity | str) -> float:
        raise NotImplementedError


class LexicalScorer(Scorer):
    """Untrained baseline: squashed TF-IDF cosine of surfaces / entity descriptions."""

    def __init__(self, vocab: Vocabulary, kb: KnowledgeBase) -> None:
        self.vocab = vocab
        self.kb = kb
        self._cache: dict = {}

    def _vec(self, key, fields):
        v = self._cache.get(key)
        if v is None:
            v = self._cache[key] = vectorize(fields, self.vocab)
        return v

    def score_mm(self, a: Mention, b: Mention) -> float:
        if a.mention_id > b.mention_id:
            a, b = b, a
        return squash(cosine(self._vec(("m", a.mention_id), a.surface), self._vec(("m", b.mention_id), b.surface)))

    def score_me(self, m: Mention, e: Entity | str) -> float:
        eid = _eid(e)
        ent = self.kb[eid]
        return squash(cosine(self._vec(("m", m.mention_id), m.surface), self._vec(("e", eid), ent.description_fields())))


class PrecomputedScorer(Scorer):
    """Looks scores up by ``(src_id, dst_id)``; an absent pair is an error, never a default."""

    def __init__(self, mm: dict[tuple[str, str], float] | None = None,
                 me: dict[tuple[str, str], float] | None = None) -> None:
        self.mm: dict[tuple[str, str], float] = {}
        self.me: dict[tuple[str, str], float] = {}
        for (a, b), s in (mm or {}).items():
            self._add("mm", a, b, s)
        for (a, b), s in (me or {}).items():
            self._add("me", a, b, s)

    @property
    def has_mm(self) -> bool:  # type: ignore[override]
        return bool(self.mm)

    @property
    def has_me(self) -> bool:  # type: ignore[override]
        return bool(self.me)

    def _add(self, kind: str, src: str, dst: str, score: float, where: str = "") -> None:
        if not (0.0 < score < 1.0) or not np.isfinite(score):
            raise ScoreRangeError(f"{where}{kind} score {score!r} for ({src}, {dst}) outside (0, 1)")
        if kind == "mm":
            key = (src, dst) if src <= dst else (dst, src)
            table = self.mm
        else:
            key = (src, dst)
            table = self.me
        if key in table and table[key] != score:
            raise ScoreRangeError(f"{where}conflicting {kind} scores for {key}: {table[key]} vs {score}")
        table[key] = score

    def score_mm(self, a: Mention | str, b: Mention | str) -> float:
        x, y = _mid(a), _mid(b)
        key = (x, y) if x <= y else (y, x)
        try:
            return self.mm[key]
        except KeyError:
            raise MissingScoreError("mm", x, y) from None

    def score_me(self, m: Mention | str, e: Entity | str) -> float:
        key = (_mid(m), _eid(e))
        try:
            return self.me[key]
        except KeyError:
            raise MissingScoreError("me", *key) from None


def _read_score_file(path: Path) -> tuple[str, list[tuple[int, str, str, float]]]:
    rows = []
    kind = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if kind is None:
                if not line.startswith("#kind="):
                    raise ParseError(path, lineno, "score file must start with a '#kind=mm' or '#kind=me' header")
                kind = line[len("#kind="):].strip()
                if kind not in ("mm", "me"):
                    raise ParseError(path, lineno, f"unknown score kind {kind!r}")
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ParseError(path, lineno, f"expected 3 tab-separated columns, got {len(cols)}")
            try:
                score = float(cols[2])
            except ValueError:
                raise ParseError(path, lineno, f"invalid score {cols[2]!r}") from None
            rows.append((lineno, cols[0], cols[1], score))
    if kind is None:
        raise ParseError(path, None, "empty score file (missing '#kind=' header)")
    return kind, rows


def load_precomputed_scores(*paths) -> PrecomputedScorer:
    """Load one or more score files (``#kind=mm`` / ``#kind=me`` header, then ``src\\tdst\\tscore`` rows)."""
    scorer = PrecomputedScorer()
    for path in paths:
        path = Path(path)
        kind, rows = _read_score_file(path)
        for lineno, src, dst, score in rows:
            scorer._add(kind, src, dst, score, where=f"{path}:{lineno}: ")
        logger.info("loaded %d %s scores from %s", len(rows), kind, path)
    return scorer


def write_scores(kind: str, scores: Iterable[tuple[str, str, float]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#kind={kind}\n")
        for src, dst, s in scores:
            fh.write(f"{src}\t{dst}\t{s!r}\n")
