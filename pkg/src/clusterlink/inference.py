"""Linking graph construction and inference.

Two procedures produce per-mention predictions:

* :func:`independent_link` takes the highest-scoring candidate per mention.
* :func:`cluster_link` runs greedy single-linkage agglomeration over the
  graph of mentions and entities, processing edges from strongest to
  weakest and refusing any merge that would put two entities in one
  cluster. Every mention inherits the entity of its final cluster (NIL if
  none).

Edges are totally ordered by ``(-weight, kind, u, v)`` with
mention-entity edges before mention-mention edges at equal weight, so
both procedures, and :func:`reference_cluster_link`, are deterministic.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .candgen import CandidateSet, meta_lines
from .corpus.model import Document, Mention
from .errors import InvariantError

logger = logging.getLogger(__name__)

MM = "mm"
ME = "me"
NIL = "NIL"
_KIND_RANK = {ME: 0, MM: 1}


@dataclass(frozen=True)
class Edge:
    """``u`` is always a mention id; ``v`` is a mention id (``u < v``) or an entity id."""

    u: str
    v: str
    weight: float
    kind: str

    @property
    def sort_key(self) -> tuple:
        return (-self.weight, _KIND_RANK[self.kind], self.u, self.v)


@dataclass
class LinkingGraph:
    mention_docs: dict[str, str] = field(default_factory=dict)
    entities: set[str] = field(default_factory=set)
    edges: list[Edge] = field(default_factory=list)
    cross_document: bool = False
    _keys: set = field(default_factory=set, repr=False)

    def add_mention(self, mention_id: str, doc_id: str) -> None:
        if self.mention_docs.get(mention_id, doc_id) != doc_id:
            raise ValueError(f"mention {mention_id} registered under two documents")
        self.mention_docs[mention_id] = doc_id

    def add_entity(self, entity_id: str) -> None:
        self.entities.add(entity_id)

    def add_edge(self, u: str, v: str, weight: float, kind: str) -> Edge:
        if u not in self.mention_docs:
            raise ValueError(f"unknown mention {u}")
        if not (0.0 < weight < 1.0):
            raise ValueError(f"edge weight {weight} for ({u}, {v}) outside (0, 1)")
        if kind == MM:
            if v not in self.mention_docs:
                raise ValueError(f"unknown mention {v}")
            if u == v:
                raise ValueError(f"self-loop on {u}")
            if not self.cross_document and self.mention_docs[u] != self.mention_docs[v]:
                raise ValueError(f"mention-mention edge ({u}, {v}) crosses documents")
            if u > v:
                u, v = v, u
        elif kind == ME:
            self.add_entity(v)
        else:
            raise ValueError(f"unknown edge kind {kind!r}")
        key = (kind, u, v)
        if key in self._keys:
            raise ValueError(f"duplicate edge {key}")
        self._keys.add(key)
        edge = Edge(u, v, float(weight), kind)
        self.edges.append(edge)
        return edge

    @property
    def n_nodes(self) -> int:
        return len(self.mention_docs) + len(self.entities)

    def documents(self) -> list[str]:
        return sorted(set(self.mention_docs.values()))

    def subgraph(self, doc_id: str) -> "LinkingGraph":
        """Mentions of one document with their edges and candidate entities."""
        g = LinkingGraph(cross_document=self.cross_document)
        for mid, d in self.mention_docs.items():
            if d == doc_id:
                g.add_mention(mid, d)
        for e in self.edges:
            if e.u in g.mention_docs and (e.kind == ME or e.v in g.mention_docs):
                g.add_edge(e.u, e.v, e.weight, e.kind)
        return g

    def without_mm(self) -> "LinkingGraph":
        g = LinkingGraph(dict(self.mention_docs), set(self.entities), cross_document=self.cross_document)
        for e in self.edges:
            if e.kind == ME:
                g.add_edge(e.u, e.v, e.weight, e.kind)
        return g


def build_graph(
    docs: Sequence[Document],
    candidate_sets: Mapping[str, CandidateSet],
    scorer,
    *,
    include_mm: bool = True,
    cross_document: bool = False,
) -> LinkingGraph:
    """Edges: every unordered same-document mention pair (via ``score_mm``) and every (mention, candidate) pair (via ``score_me``)."""
    g = LinkingGraph(cross_document=cross_document)
    for doc in docs:
        for m in doc.mentions:
            g.add_mention(m.mention_id, doc.doc_id)
    pools: list[Sequence[Mention]]
    if cross_document:
        pools = [[m for d in docs for m in d.mentions]]
    else:
        pools = [d.mentions for d in docs]
    for doc in docs:
        for m in doc.mentions:
            cs = candidate_sets.get(m.mention_id)
            for eid in (cs.entity_ids if cs is not None else ()):
                g.add_edge(m.mention_id, eid, scorer.score_me(m, eid), ME)
    if include_mm:
        for pool in pools:
            for i, a in enumerate(pool):
                for b in pool[i + 1:]:
                    g.add_edge(a.mention_id, b.mention_id, scorer.score_mm(a, b), MM)
    return g


@dataclass(frozen=True)
class Prediction:
    mention_id: str
    entity_id: str | None
    score: float
    cluster_id: str
    method: str


@dataclass(frozen=True)
class MergeRecord:
    step: int
    node_a: str
    node_b: str
    weight: float
    kind: str
    accepted: bool

    def as_dict(self) -> dict:
        return {"step": self.step, "node_a": self.node_a, "node_b": self.node_b,
                "weight": self.weight, "kind": self.kind, "accepted": self.accepted}


@dataclass(frozen=True)
class Cluster:
    entity_id: str | None
    mentions: tuple[str, ...]

    @property
    def cluster_id(self) -> str:
        return self.entity_id if self.entity_id is not None else self.mentions[0]


@dataclass
class ClusteringResult:
    partition: list[Cluster]
    predictions: dict[str, Prediction]
    merge_log: list[MergeRecord]

    def accepted_merges(self) -> list[tuple[str, str, float, str]]:
        return [(r.node_a, r.node_b, r.weight, r.kind) for r in self.merge_log if r.accepted]

    def assignments(self) -> dict[str, str | None]:
        return {m: p.entity_id for m, p in self.predictions.items()}


def _finalize(mentions: Iterable[str], entities: Iterable[str], members: dict, link_score: dict,
              method: str, log: list[MergeRecord]) -> ClusteringResult:
    """Build the canonical partition and predictions from (cluster -> (entity, mention ids)) groups."""
    partition = []
    preds = {}
    covered_entities = set()
    for ent, mids in members.values():
        mids = tuple(sorted(mids))
        if ent is not None:
            covered_entities.add(ent)
        if not mids and ent is None:
            continue
        c = Cluster(ent, mids)
        partition.append(c)
        for mid in mids:
            preds[mid] = Prediction(mid, ent, link_score.get(mid, 0.0) if ent is not None else 0.0,
                                    c.cluster_id, method)
    for ent in entities:
        if ent not in covered_entities:
            partition.append(Cluster(ent, ()))
    partition.sort(key=lambda c: (c.entity_id is None, c.entity_id or "", c.mentions))
    ordered = {mid: preds[mid] for mid in sorted(mentions)}
    return ClusteringResult(partition, ordered, log)


class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> int:
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        return a


def _cluster_single(graph: LinkingGraph, check: bool = False) -> ClusteringResult:
    mention_ids = sorted(graph.mention_docs)
    entity_ids = sorted(graph.entities)
    index = {("m", m): i for i, m in enumerate(mention_ids)}
    index.update({("e", e): len(mention_ids) + i for i, e in enumerate(entity_ids)})
    n = len(index)
    uf = _UnionFind(n)
    entity_of: list[str | None] = [None] * len(mention_ids) + list(entity_ids)
    free_members: list[list[str] | None] = [[m] for m in mention_ids] + [None] * len(entity_ids)
    link_score: dict[str, float] = {}
    log: list[MergeRecord] = []
    step = 0
    merges = 0
    for edge in sorted(graph.edges, key=lambda e: e.sort_key):
        a = uf.find(index[("m", edge.u)])
        b = uf.find(index[("m" if edge.kind == MM else "e", edge.v)])
        if a == b:
            continue
        ea, eb = entity_of[a], entity_of[b]
        accepted = ea is None or eb is None
        log.append(MergeRecord(step, edge.u, edge.v, edge.weight, edge.kind, accepted))
        step += 1
        if not accepted:
            continue
        if ea is None and eb is not None:
            for mid in free_members[a]:
                link_score[mid] = edge.weight
        elif eb is None and ea is not None:
            for mid in free_members[b]:
                link_score[mid] = edge.weight
        root = uf.union(a, b)
        merged_entity = ea if ea is not None else eb
        if merged_entity is None:
            fa, fb = free_members[a], free_members[b]
            big, small = (fa, fb) if len(fa) >= len(fb) else (fb, fa)
            big.extend(small)
            free_members[root] = big
        else:
            free_members[root] = None
        if root != a:
            free_members[a] = None
        if root != b:
            free_members[b] = None
        entity_of[root] = merged_entity
        merges += 1
        if check and merges > n - 1:
            raise InvariantError("more than |V| - 1 merges")
    groups: dict[int, list] = {}
    for mid in mention_ids:
        r = uf.find(index[("m", mid)])
        groups.setdefault(r, [entity_of[r], []])[1].append(mid)
    for eid in entity_ids:
        r = uf.find(index[("e", eid)])
        groups.setdefault(r, [entity_of[r], []])
    return _finalize(mention_ids, entity_ids, groups, link_score, "cluster", log)


def _cluster_doc(graph: LinkingGraph) -> ClusteringResult:
    return _cluster_single(graph)


def cluster_link(graph: LinkingGraph, *, per_document: bool = False, workers: int = 1) -> ClusteringResult:
    """Constrained single-linkage clustering of ``graph``.

    With ``per_document=True`` each document's subgraph (its mentions,
    their mention-mention edges and candidate entities) is clustered
    separately and the results merged; entity clusters from different
    documents are unioned in the reported partition. Requires
    ``cross_document=False``.
    """
    if not per_document:
        return _cluster_single(graph)
    if graph.cross_document:
        raise ValueError("per-document clustering requires within-document mention-mention edges")
    docs = graph.documents()
    subgraphs = [graph.subgraph(d) for d in docs]
    if workers > 1 and len(subgraphs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cluster_doc, subgraphs, chunksize=max(1, len(subgraphs) // (4 * workers))))
    else:
        results = [_cluster_single(g) for g in subgraphs]
    preds: dict[str, Prediction] = {}
    log: list[MergeRecord] = []
    ent_members: dict[str, list[str]] = {e: [] for e in graph.entities}
    free: list[Cluster] = []
    for res in results:
        preds.update(res.predictions)
        offset = len(log)
        log.extend(MergeRecord(offset + r.step, r.node_a, r.node_b, r.weight, r.kind, r.accepted)
                   for r in res.merge_log)
        for c in res.partition:
            if c.entity_id is None:
                free.append(c)
            else:
                ent_members[c.entity_id].extend(c.mentions)
    partition = [Cluster(e, tuple(sorted(ms))) for e, ms in ent_members.items()] + free
    partition.sort(key=lambda c: (c.entity_id is None, c.entity_id or "", c.mentions))
    return ClusteringResult(partition, {m: preds[m] for m in sorted(preds)}, log)


def reference_cluster_link(graph: LinkingGraph) -> ClusteringResult:
    """Literal O(n^3) agglomeration used as a test oracle.

    Each round computes the affinity of every pair of clusters as their
    strongest cross edge, discards pairs that both hold an entity, and
    merges the best remaining pair. Stops when no legal pair is connected.
    """
    clusters: list[dict] = [{"mentions": {m}, "entity": None} for m in sorted(graph.mention_docs)]
    clusters += [{"mentions": set(), "entity": e} for e in sorted(graph.entities)]
    link_score: dict[str, float] = {}
    log: list[MergeRecord] = []
    while True:
        where = {}
        for ci, c in enumerate(clusters):
            for m in c["mentions"]:
                where[("m", m)] = ci
            if c["entity"] is not None:
                where[("e", c["entity"])] = ci
        affinity: dict[tuple[int, int], Edge] = {}
        for e in graph.edges:
            ca = where[("m", e.u)]
            cb = where[("m" if e.kind == MM else "e", e.v)]
            if ca == cb:
                continue
            pair = (min(ca, cb), max(ca, cb))
            best = affinity.get(pair)
            if best is None or e.sort_key < best.sort_key:
                affinity[pair] = e
        legal = [(edge.sort_key, pair, edge) for pair, edge in affinity.items()
                 if clusters[pair[0]]["entity"] is None or clusters[pair[1]]["entity"] is None]
        if not legal:
            break
        _, (i, j), edge = min(legal, key=lambda t: t[0])
        ci, cj = clusters[i], clusters[j]
        if ci["entity"] is None and cj["entity"] is not None:
            link_score.update({m: edge.weight for m in ci["mentions"]})
        elif cj["entity"] is None and ci["entity"] is not None:
            link_score.update({m: edge.weight for m in cj["mentions"]})
        merged = {"mentions": ci["mentions"] | cj["mentions"], "entity": ci["entity"] or cj["entity"]}
        log.append(MergeRecord(len(log), edge.u, edge.v, edge.weight, edge.kind, True))
        clusters = [c for k, c in enumerate(clusters) if k not in (i, j)] + [merged]
    groups = {i: [c["entity"], sorted(c["mentions"])] for i, c in enumerate(clusters)}
    return _finalize(sorted(graph.mention_docs), (), groups, link_score, "cluster", log)


def independent_link(
    mentions: Iterable[Mention],
    candidate_sets: Mapping[str, CandidateSet],
    scorer,
) -> dict[str, Prediction]:
    """Per-mention argmax of ``score_me`` over the candidate set; ties go to the smaller entity id."""
    out = {}
    for m in mentions:
        cs = candidate_sets.get(m.mention_id)
        best: tuple[float, str] | None = None
        for eid in (cs.entity_ids if cs is not None else ()):
            s = scorer.score_me(m, eid)
            if best is None or s > best[0] or (s == best[0] and eid < best[1]):
                best = (s, eid)
        if best is None:
            out[m.mention_id] = Prediction(m.mention_id, None, 0.0, m.mention_id, "independent")
        else:
            out[m.mention_id] = Prediction(m.mention_id, best[1], best[0], best[1], "independent")
    return {k: out[k] for k in sorted(out)}


PREDICTION_HEADER = "mention_id\tentity_id\tscore\tcluster_id\tmethod"


def write_predictions(predictions: Mapping[str, Prediction] | Iterable[Prediction], path,
                      meta: Mapping | None = None) -> None:
    preds = predictions.values() if isinstance(predictions, Mapping) else predictions
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(meta_lines(meta))
        fh.write(PREDICTION_HEADER + "\n")
        for p in sorted(preds, key=lambda p: p.mention_id):
            fh.write(f"{p.mention_id}\t{p.entity_id or NIL}\t{p.score:.8f}\t{p.cluster_id}\t{p.method}\n")


def read_predictions(path) -> dict[str, Prediction]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line == PREDICTION_HEADER or line.startswith("# "):
                continue
            mid, eid, score, cid, method = line.split("\t")
            out[mid] = Prediction(mid, None if eid == NIL else eid, float(score), cid, method)
    return out


def write_merge_log(log: Iterable[MergeRecord], path, meta: Mapping | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if meta:
            fh.write(json.dumps({"_meta": dict(meta)}, sort_keys=True) + "\n")
        for r in log:
            fh.write(json.dumps(r.as_dict(), sort_keys=True) + "\n")
