"""Training-signal construction and the triplet max-margin training loop."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from ..candgen import CandidateSet
from ..corpus.model import Document, Mention
from ..errors import TrainingError
from .features import FeatureExtractor
from .linear import LinearAffinityModel, LinearScorer, batch_loss_and_grad
from .scorers import Scorer

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingConfig:
    margin: float = 0.5
    k: int = 4
    learning_rate: float = 0.1
    epochs: int = 50
    seed: int = 0
    batch_size: int = 16

    def __post_init__(self) -> None:
        if not self.margin > 0:
            raise ValueError("margin must be > 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def as_dict(self) -> dict:
        return asdict(self)


def _mm_fn(scorer) -> Callable[[Mention, Mention], float]:
    return scorer.score_mm if hasattr(scorer, "score_mm") else scorer


def mst_positive_pairs(cluster: Sequence[Mention], scorer) -> list[tuple[Mention, Mention]]:
    """Maximum-spanning-tree edges of the complete graph on ``cluster``.

    Prim's algorithm on the dense affinity matrix; ties go to the
    lower-indexed vertex. Pairs come back with the smaller mention id first.
    """
    n = len(cluster)
    if n < 2:
        return []
    score = _mm_fn(scorer)
    w = np.full((n, n), -np.inf)
    for i in range(n):
        for j in range(i + 1, n):
            w[i, j] = w[j, i] = score(cluster[i], cluster[j])
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = w[0].copy()
    parent = np.zeros(n, dtype=np.int64)
    pairs = []
    for _ in range(n - 1):
        cand = np.where(in_tree, -np.inf, best)
        v = int(np.argmax(cand))
        u = int(parent[v])
        a, b = cluster[u], cluster[v]
        pairs.append((a, b) if a.mention_id <= b.mention_id else (b, a))
        in_tree[v] = True
        better = (w[v] > best) & ~in_tree
        best[better] = w[v][better]
        parent[better] = v
    return sorted(pairs, key=lambda p: (p[0].mention_id, p[1].mention_id))


def _same_gold(a: Mention, b: Mention) -> bool:
    return bool(set(a.gold_ids) & set(b.gold_ids))


def hard_negatives_mm(anchor: Mention, doc: Document, scorer, k: int) -> list[Mention]:
    """The ``k`` highest-affinity same-document mentions with a different gold entity."""
    score = _mm_fn(scorer)
    pool = [m for m in doc.mentions
            if m.mention_id != anchor.mention_id and m.gold_ids and not _same_gold(anchor, m)]
    scored = sorted(((score(anchor, m), m) for m in pool), key=lambda t: (-t[0], t[1].mention_id))
    return [m for _, m in scored[:k]]


def hard_negatives_me(m: Mention, candidates: CandidateSet, scorer, k: int) -> list[str]:
    """The ``k`` highest-affinity candidates other than the gold entity (ids)."""
    score = scorer.score_me if hasattr(scorer, "score_me") else scorer
    gold = set(m.gold_ids)
    pool = [e for e in candidates.entity_ids if e not in gold]
    scored = sorted(((score(m, e), e) for e in pool), key=lambda t: (-t[0], t[1]))
    return [e for _, e in scored[:k]]


def gold_clusters(doc: Document) -> list[list[Mention]]:
    """Mentions of ``doc`` grouped by gold entity (mentions without gold are skipped)."""
    groups: dict[str, list[Mention]] = defaultdict(list)
    for m in doc.mentions:
        if m.gold_entity_id is not None:
            groups[m.gold_entity_id].append(m)
    return [groups[g] for g in sorted(groups)]


@dataclass
class TrainingCorpus:
    documents: Sequence[Document]
    extractor: FeatureExtractor
    candidates: Mapping[str, CandidateSet] = field(default_factory=dict)


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    active_fraction: float
    triplets: int
    batches: int

    def as_dict(self) -> dict:
        return asdict(self)


def sgd_step(model: LinearAffinityModel, pos: np.ndarray, neg: np.ndarray, mu: float, lr: float):
    """One subgradient step on a batch of triplets; returns (new model, objective at the old parameters)."""
    obj = batch_loss_and_grad(model, pos, neg, mu)
    if not np.isfinite(obj.loss):
        raise TrainingError(f"non-finite loss {obj.loss} (weights={model.weights.tolist()}, bias={model.bias})")
    new = model.copy()
    new.weights = model.weights - lr * obj.grad_w
    new.bias = model.bias - lr * obj.grad_b
    if not new.is_finite():
        raise TrainingError(f"non-finite parameters after step (grad_w={obj.grad_w.tolist()}, grad_b={obj.grad_b})")
    return new, obj


def _mm_batches(model, corpus: TrainingCorpus, config: TrainingConfig, rng):
    """(doc, anchor, positive) triples from MST positives, both edge orientations, in batches."""
    scorer = LinearScorer(corpus.extractor, mm_model=model)
    order = rng.permutation(len(corpus.documents))
    items = []
    for di in order:
        doc = corpus.documents[int(di)]
        for cluster in gold_clusters(doc):
            for a, b in mst_positive_pairs(cluster, scorer):
                items.append((doc, a, b))
                items.append((doc, b, a))
    return [items[i:i + config.batch_size] for i in range(0, len(items), config.batch_size)]


def _me_batches(corpus: TrainingCorpus, config: TrainingConfig, rng):
    items = []
    order = rng.permutation(len(corpus.documents))
    for di in order:
        for m in corpus.documents[int(di)].mentions:
            if m.is_resolvable and m.mention_id in corpus.candidates:
                items.append(m)
    return [items[i:i + config.batch_size] for i in range(0, len(items), config.batch_size)]


def train_epoch(model: LinearAffinityModel, corpus: TrainingCorpus, config: TrainingConfig,
                rng: np.random.Generator | None = None, epoch: int = 0) -> tuple[LinearAffinityModel, EpochStats]:
    """One pass of minibatch subgradient descent over all triplets.

    Hard negatives are re-mined with the current parameters before each
    batch; mention-mention positives (MST edges) are fixed for the epoch.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed + epoch)
    ex = corpus.extractor
    total_loss = 0.0
    total_active = 0
    total = 0
    batches = (_mm_batches(model, corpus, config, rng) if model.kind == "mm"
               else _me_batches(corpus, config, rng))
    n_batches = 0
    for batch in batches:
        pos_rows, neg_rows = [], []
        if model.kind == "mm":
            scorer = LinearScorer(ex, mm_model=model)
            for doc, a, p in batch:
                fp = ex.mm(a, p)
                for n in hard_negatives_mm(a, doc, scorer, config.k):
                    pos_rows.append(fp)
                    neg_rows.append(ex.mm(a, n))
        else:
            scorer = LinearScorer(ex, me_model=model)
            for m in batch:
                fp = ex.me(m, m.gold_entity_id)
                for e in hard_negatives_me(m, corpus.candidates[m.mention_id], scorer, config.k):
                    pos_rows.append(fp)
                    neg_rows.append(ex.me(m, e))
        if not pos_rows:
            continue
        model, obj = sgd_step(model, np.array(pos_rows), np.array(neg_rows), config.margin, config.learning_rate)
        n_batches += 1
        total_loss += obj.loss * obj.n
        total_active += obj.active
        total += obj.n
    stats = EpochStats(
        epoch=epoch,
        mean_loss=total_loss / total if total else 0.0,
        active_fraction=total_active / total if total else 0.0,
        triplets=total,
        batches=n_batches,
    )
    return model, stats


def train(model: LinearAffinityModel, corpus: TrainingCorpus, config: TrainingConfig,
          stop_at_zero: bool = True) -> tuple[LinearAffinityModel, list[EpochStats]]:
    rng = np.random.default_rng(config.seed)
    history = []
    for epoch in range(config.epochs):
        model, stats = train_epoch(model, corpus, config, rng, epoch)
        history.append(stats)
        logger.info("%s epoch %d: loss=%.6f active=%.3f triplets=%d", model.kind, epoch,
                    stats.mean_loss, stats.active_fraction, stats.triplets)
        if stop_at_zero and stats.active_fraction == 0.0:
            break
    return model, history
