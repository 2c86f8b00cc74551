"""Character n-gram + word TF-IDF candidate generation.

Features are character n-grams (n = 2..5) of each lowercased text field
and the words of the entity names. Both vocabularies are capped to their
most frequent items over the knowledge base, ties broken
lexicographically. Weights are raw term frequency times
``log((1 + N) / (1 + df)) + 1`` and vectors are L2-normalized, so
cosine similarity reduces to a dot product.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .corpus.model import Entity, KnowledgeBase, Mention

logger = logging.getLogger(__name__)

VOCAB_FORMAT_VERSION = 1
NGRAM_RANGE = (2, 5)
MAX_NGRAMS = 200_000
MAX_WORDS = 200_000

_WS = re.compile(r"\s+")
_WORD = re.compile(r"\w+")


def normalize(text: str) -> str:
    return _WS.sub(" ", text.lower()).strip()


def char_ngrams(text: str, ngram_range: tuple[int, int] = NGRAM_RANGE) -> Iterator[str]:
    text = normalize(text)
    lo, hi = ngram_range
    for n in range(lo, hi + 1):
        for i in range(len(text) - n + 1):
            yield text[i:i + n]


def words(text: str) -> list[str]:
    return _WORD.findall(text.lower())


def _as_fields(text: str | Sequence[str]) -> Sequence[str]:
    return (text,) if isinstance(text, str) else text


@dataclass(frozen=True)
class SparseVector:
    indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        idx = np.asarray(self.indices, dtype=np.int64)
        w = np.asarray(self.weights, dtype=np.float64)
        if idx.shape != w.shape:
            raise ValueError("indices and weights differ in length")
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise ValueError("indices must be strictly increasing")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return int(self.indices.size)

    def items(self) -> list[tuple[int, float]]:
        return list(zip(self.indices.tolist(), self.weights.tolist()))

    def dot(self, other: "SparseVector") -> float:
        common, ia, ib = np.intersect1d(self.indices, other.indices, assume_unique=True, return_indices=True)
        if common.size == 0:
            return 0.0
        return float(np.dot(self.weights[ia], other.weights[ib]))


def cosine(a: SparseVector, b: SparseVector) -> float:
    """Cosine of two L2-normalized vectors, clipped to [0, 1]."""
    return min(1.0, max(0.0, a.dot(b)))


@dataclass
class Vocabulary:
    ngrams: list[str]
    words: list[str]
    idf: np.ndarray
    ngram_range: tuple[int, int] = NGRAM_RANGE
    ngram_ids: dict[str, int] = field(init=False, repr=False)
    word_ids: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.idf = np.asarray(self.idf, dtype=np.float64)
        self.ngram_ids = {g: i for i, g in enumerate(self.ngrams)}
        offset = len(self.ngrams)
        self.word_ids = {w: offset + i for i, w in enumerate(self.words)}
        if self.idf.shape != (self.size,):
            raise ValueError(f"idf has {self.idf.size} weights for {self.size} features")

    @property
    def size(self) -> int:
        return len(self.ngrams) + len(self.words)

    def counts(self, text: str | Sequence[str]) -> Counter:
        """Raw in-vocabulary feature counts of one text or a sequence of fields."""
        tf: Counter = Counter()
        for f in _as_fields(text):
            tf.update(i for i in map(self.ngram_ids.get, char_ngrams(f, self.ngram_range)) if i is not None)
            tf.update(i for i in map(self.word_ids.get, words(f)) if i is not None)
        return tf

    def save(self, path, meta: Mapping | None = None) -> None:
        payload = {
            "format_version": VOCAB_FORMAT_VERSION,
            "meta": dict(meta or {}),
            "ngram_range": list(self.ngram_range),
            "ngrams": self.ngrams,
            "words": self.words,
            "idf": self.idf.tolist(),
        }
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, ensure_ascii=False)

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        version = payload.get("format_version")
        if version != VOCAB_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported vocabulary format version {version!r}")
        return cls(payload["ngrams"], payload["words"], np.asarray(payload["idf"]), tuple(payload["ngram_range"]))


def _top(counter: Counter, cap: int) -> list[str]:
    return [k for k, _ in sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))[:cap]]


def build_vocabulary(
    kb: KnowledgeBase,
    max_ngrams: int = MAX_NGRAMS,
    max_words: int = MAX_WORDS,
    ngram_range: tuple[int, int] = NGRAM_RANGE,
) -> Vocabulary:
    """Fit n-gram/word vocabularies and idf weights over the entity descriptions."""
    ngram_counts: Counter = Counter()
    word_counts: Counter = Counter()
    for eid in kb.sorted_ids():
        e = kb[eid]
        for f in e.description_fields():
            ngram_counts.update(char_ngrams(f, ngram_range))
        for name in e.names:
            word_counts.update(words(name))
    ngrams = _top(ngram_counts, max_ngrams)
    wordlist = _top(word_counts, max_words)
    vocab = Vocabulary(ngrams, wordlist, np.ones(len(ngrams) + len(wordlist)), ngram_range)

    df = np.zeros(vocab.size, dtype=np.int64)
    for eid in kb.sorted_ids():
        feats = list(vocab.counts(kb[eid].description_fields()))
        if feats:
            df[feats] += 1
    n = len(kb)
    vocab.idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
    logger.info("vocabulary: %d n-grams, %d words over %d entities", len(ngrams), len(wordlist), n)
    return vocab


def vectorize(text: str | Sequence[str], vocab: Vocabulary) -> SparseVector:
    tf = vocab.counts(text)
    if not tf:
        return SparseVector(np.zeros(0, np.int64), np.zeros(0))
    idx = np.fromiter(sorted(tf), dtype=np.int64, count=len(tf))
    w = np.array([tf[i] for i in idx.tolist()], dtype=np.float64) * vocab.idf[idx]
    norm = float(np.linalg.norm(w))
    if norm > 0:
        w = w / norm
    return SparseVector(idx, w)


def vectorize_many(texts: Iterable[str | Sequence[str]], vocab: Vocabulary) -> sp.csr_matrix:
    indptr = [0]
    indices: list[np.ndarray] = []
    data: list[np.ndarray] = []
    for t in texts:
        v = vectorize(t, vocab)
        indices.append(v.indices)
        data.append(v.weights)
        indptr.append(indptr[-1] + len(v))
    n_rows = len(indptr) - 1
    if n_rows == 0:
        return sp.csr_matrix((0, vocab.size))
    return sp.csr_matrix(
        (np.concatenate(data) if data else np.zeros(0), np.concatenate(indices) if indices else np.zeros(0, np.int64),
         np.asarray(indptr)),
        shape=(n_rows, vocab.size),
    )


@dataclass(frozen=True)
class CandidateSet:
    mention_id: str
    candidates: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "candidates", tuple((str(e), float(s)) for e, s in self.candidates))

    @property
    def entity_ids(self) -> list[str]:
        return [e for e, _ in self.candidates]

    def __contains__(self, entity_id: object) -> bool:
        return any(e == entity_id for e, _ in self.candidates)

    def __len__(self) -> int:
        return len(self.candidates)

    def top(self, k: int) -> "CandidateSet":
        return CandidateSet(self.mention_id, self.candidates[:k])

    def rank_of(self, entity_id: str) -> int | None:
        for r, (e, _) in enumerate(self.candidates, 1):
            if e == entity_id:
                return r
        return None


class CandidateGenerator:
    """Exhaustive top-K cosine retrieval over every entity of a knowledge base."""

    def __init__(self, kb: KnowledgeBase, vocab: Vocabulary | None = None) -> None:
        self.kb = kb
        self.vocab = vocab if vocab is not None else build_vocabulary(kb)
        self.entity_ids = kb.sorted_ids()
        self.entity_matrix = vectorize_many((kb[e].description_fields() for e in self.entity_ids), self.vocab)
        self._entity_matrix_t = self.entity_matrix.T.tocsr()

    def _rank_row(self, row_scores: sp.csr_matrix, k: int) -> tuple[tuple[str, float], ...]:
        cols = row_scores.indices
        vals = row_scores.data
        keep = vals > 0
        cols, vals = cols[keep], vals[keep]
        if cols.size == 0 or k == 0:
            return ()
        if cols.size > k:
            # rough prefilter, exact ordering below
            thresh = np.partition(vals, cols.size - k)[cols.size - k]
            sel = vals >= thresh
            cols, vals = cols[sel], vals[sel]
        order = np.lexsort((cols, -vals))[:k]
        return tuple((self.entity_ids[c], min(1.0, float(v))) for c, v in zip(cols[order], vals[order]))

    def generate(self, mention: Mention | str, k: int) -> CandidateSet:
        return self.generate_many([mention], k)[0]

    def generate_many(self, mentions: Sequence[Mention | str], k: int, batch_size: int = 512) -> list[CandidateSet]:
        if k < 0:
            raise ValueError("K must be non-negative")
        out: list[CandidateSet] = []
        for b in range(0, len(mentions), batch_size):
            batch = mentions[b:b + batch_size]
            surfaces = [m if isinstance(m, str) else m.surface for m in batch]
            q = vectorize_many(surfaces, self.vocab)
            scores = (q @ self._entity_matrix_t).tocsr()
            scores.sort_indices()
            for i, m in enumerate(batch):
                mid = m if isinstance(m, str) else m.mention_id
                out.append(CandidateSet(mid, self._rank_row(scores[i], k)))
        return out


def generate_candidates(m: Mention, kb: KnowledgeBase, vocab: Vocabulary, k: int) -> CandidateSet:
    """One-off retrieval; build a :class:`CandidateGenerator` to amortize entity vectors."""
    return CandidateGenerator(kb, vocab).generate(m, k)


def recall_at_k(
    candidate_sets: Mapping[str, CandidateSet],
    gold: Mapping[str, Sequence[str]],
    ks: Iterable[int] = (1, 2, 4, 8, 16, 32, 64),
) -> dict[int, float]:
    """Micro-averaged recall (percent) over mentions; a mention counts when any gold id is in its top-k.

    ``gold`` maps mention id to its gold ids; mentions without gold ids are skipped.
    """
    ks = sorted(set(ks))
    hits = dict.fromkeys(ks, 0)
    total = 0
    for mid, ids in gold.items():
        if not ids:
            continue
        total += 1
        cs = candidate_sets.get(mid)
        rank = None
        if cs is not None:
            ranks = [r for r in (cs.rank_of(g) for g in ids) if r is not None]
            rank = min(ranks) if ranks else None
        for k in ks:
            if rank is not None and rank <= k:
                hits[k] += 1
    return {k: (100.0 * hits[k] / total if total else 0.0) for k in ks}


CANDIDATE_HEADER = "mention_id\tentity_id\trank\tscore"


def meta_lines(meta: Mapping | None) -> str:
    """``# key=value`` comment lines carrying run metadata (readers skip them)."""
    return "".join(f"# {k}={meta[k]}\n" for k in sorted(meta)) if meta else ""


def write_candidates(candidate_sets: Iterable[CandidateSet], path, meta: Mapping | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(meta_lines(meta))
        fh.write(CANDIDATE_HEADER + "\n")
        for cs in candidate_sets:
            for rank, (eid, score) in enumerate(cs.candidates, 1):
                fh.write(f"{cs.mention_id}\t{eid}\t{rank}\t{score:.8f}\n")


def read_candidates(path, mention_ids: Iterable[str] = ()) -> dict[str, CandidateSet]:
    """Read a candidate file; ``mention_ids`` without rows get empty sets."""
    rows: dict[str, list[tuple[int, str, float]]] = {m: [] for m in mention_ids}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line == CANDIDATE_HEADER or line.startswith("# "):
                continue
            mid, eid, rank, score = line.split("\t")
            rows.setdefault(mid, []).append((int(rank), eid, float(score)))
    return {mid: CandidateSet(mid, tuple((e, s) for _, e, s in sorted(r))) for mid, r in rows.items()}
