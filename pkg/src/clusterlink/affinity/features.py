"""Pair features for the linear affinity model.

All features lie in [0, 1]. Mention-mention features are symmetric in
their arguments.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np
from rapidfuzz.distance import Levenshtein

from ..candgen import CandidateSet, Vocabulary, cosine, normalize, vectorize, words
from ..corpus.model import Entity, KnowledgeBase, Mention

EXTRACTOR_ID = "lexical-pair-v1"

MM_FEATURES = ("surface_cosine", "surface_jaccard", "context_cosine", "edit_similarity", "exact_match")
ME_FEATURES = ("surface_cosine", "surface_jaccard", "context_cosine", "edit_similarity", "exact_match",
               "alias_match", "retrieval_rank")


def jaccard(a: str, b: str) -> float:
    sa, sb = set(words(a)), set(words(b))
    union = sa | sb
    return len(sa & sb) / len(union) if union else 0.0


def edit_similarity(a: str, b: str) -> float:
    return float(Levenshtein.normalized_similarity(normalize(a), normalize(b)))


class FeatureExtractor:
    """Computes and caches the vectors behind the pair features.

    ``candidates`` (optional) supplies retrieval ranks; the retrieval
    feature is the reciprocal rank of the entity in the mention's candidate
    list and 0 when absent.
    """

    extractor_id = EXTRACTOR_ID

    def __init__(self, vocab: Vocabulary, kb: KnowledgeBase,
                 candidates: Mapping[str, CandidateSet] | None = None) -> None:
        self.vocab = vocab
        self.kb = kb
        self.candidates = candidates or {}
        self._vectors: dict = {}
        self._pairs: dict = {}

    def _vec(self, key, fields):
        v = self._vectors.get(key)
        if v is None:
            v = self._vectors[key] = vectorize(fields, self.vocab)
        return v

    def mm(self, a: Mention, b: Mention) -> np.ndarray:
        if a.mention_id > b.mention_id:
            a, b = b, a
        key = ("mm", a.mention_id, b.mention_id)
        f = self._pairs.get(key)
        if f is None:
            f = np.array([
                cosine(self._vec(("s", a.mention_id), a.surface), self._vec(("s", b.mention_id), b.surface)),
                jaccard(a.surface, b.surface),
                cosine(self._vec(("c", a.mention_id), a.context), self._vec(("c", b.mention_id), b.context)),
                edit_similarity(a.surface, b.surface),
                float(normalize(a.surface) == normalize(b.surface)),
            ])
            self._pairs[key] = f
        return f

    def me(self, m: Mention, e: Entity | str) -> np.ndarray:
        eid = e if isinstance(e, str) else e.entity_id
        key = ("me", m.mention_id, eid)
        f = self._pairs.get(key)
        if f is None:
            ent = self.kb[eid]
            desc = self._vec(("e", eid), ent.description_fields())
            surface = normalize(m.surface)
            rank = None
            cs = self.candidates.get(m.mention_id)
            if cs is not None:
                rank = cs.rank_of(eid)
            f = np.array([
                cosine(self._vec(("s", m.mention_id), m.surface), desc),
                max(jaccard(m.surface, n) for n in ent.names),
                cosine(self._vec(("c", m.mention_id), m.context), desc),
                max(edit_similarity(m.surface, n) for n in ent.names),
                float(surface == normalize(ent.canonical_name)),
                float(any(surface == normalize(a) for a in ent.aliases)),
                1.0 / rank if rank else 0.0,
            ])
            self._pairs[key] = f
        return f
