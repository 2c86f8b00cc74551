"""Linking metrics: overall, seen/unseen, candidate hit/miss and ambiguous-surface accuracy.

Accuracy is micro-averaged over evaluation rows. A mention contributes
one row per gold id (composite annotations contribute several); a row is
correct when the prediction equals any of the mention's gold ids.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .candgen import CandidateSet, meta_lines
from .corpus.model import Mention
from .errors import InvariantError, MissingPredictionError
from .inference import Prediction


@dataclass(frozen=True)
class EvalRow:
    mention_id: str
    gold_id: str
    gold_ids: frozenset[str]


def evaluation_rows(mentions: Iterable[Mention], exclude_unresolved: bool = False) -> list[EvalRow]:
    rows = []
    for m in mentions:
        if not m.gold_ids:
            continue
        if exclude_unresolved and m.unresolved:
            continue
        ids = frozenset(m.gold_ids)
        rows.extend(EvalRow(m.mention_id, g, ids) for g in m.gold_ids)
    return rows


def _correct(row: EvalRow, predictions: Mapping[str, Prediction]) -> bool:
    try:
        p = predictions[row.mention_id]
    except KeyError:
        raise MissingPredictionError(f"no prediction for gold mention {row.mention_id}") from None
    return p.entity_id is not None and p.entity_id in row.gold_ids


def accuracy(predictions: Mapping[str, Prediction], rows: Sequence[EvalRow],
             partition: Iterable[int] | None = None) -> float:
    """Percent of rows (optionally restricted to the row indices in ``partition``) predicted correctly.

    Every row must have a prediction, filtered out or not. Returns 0.0 for
    an empty selection.
    """
    correct = [_correct(r, predictions) for r in rows]
    idx = range(len(rows)) if partition is None else sorted(set(partition))
    n = 0
    hit = 0
    for i in idx:
        n += 1
        hit += correct[i]
    return 100.0 * hit / n if n else 0.0


def seen_unseen_partition(rows: Sequence[EvalRow], train_mentions: Iterable[Mention]) -> tuple[list[int], list[int]]:
    """Row indices whose gold entity is / is not the gold entity of some training mention."""
    train_gold = {g for m in train_mentions for g in m.gold_ids}
    seen = [i for i, r in enumerate(rows) if r.gold_id in train_gold]
    unseen = [i for i, r in enumerate(rows) if r.gold_id not in train_gold]
    return seen, unseen


def candidate_failure_partition(rows: Sequence[EvalRow], candidate_sets: Mapping[str, CandidateSet]) -> tuple[list[int], list[int]]:
    """Row indices whose mention has / lacks some gold id among its candidates."""
    hit, miss = [], []
    for i, r in enumerate(rows):
        cs = candidate_sets.get(r.mention_id)
        ok = cs is not None and any(g in cs for g in r.gold_ids)
        (hit if ok else miss).append(i)
    return hit, miss


def normalize_surface(s: str) -> str:
    return re.sub(r"\s+", " ", s.lower()).strip()


def ambiguous_surfaces(train_mentions: Iterable[Mention], threshold: int = 10) -> set[str]:
    entities: dict[str, set[str]] = defaultdict(set)
    for m in train_mentions:
        entities[normalize_surface(m.surface)].update(m.gold_ids)
    return {s for s, es in entities.items() if len(es) >= threshold}


def ambiguous_subset(test_mentions: Iterable[Mention], train_mentions: Iterable[Mention],
                     threshold: int = 10) -> list[Mention]:
    """Test mentions whose normalized surface carries >= ``threshold`` distinct gold entities in training."""
    surfaces = ambiguous_surfaces(train_mentions, threshold)
    return [m for m in test_mentions if normalize_surface(m.surface) in surfaces]


@dataclass
class EvalReport:
    method: str
    overall: float
    seen: float
    unseen: float
    in_candidates: float
    not_in_candidates: float
    ambiguous: float
    counts: dict[str, int] = field(default_factory=dict)
    fingerprint: str = ""

    METRICS = ("overall", "seen", "unseen", "in_candidates", "not_in_candidates", "ambiguous")

    def as_dict(self) -> dict:
        return asdict(self)


def _check_partition(name: str, a: Sequence[int], b: Sequence[int], total: int) -> None:
    sa, sb = set(a), set(b)
    if sa & sb or len(sa | sb) != total:
        raise InvariantError(f"{name} partition is not a complete disjoint cover of {total} rows")


def fingerprint(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def evaluate(
    predictions: Mapping[str, Prediction],
    test_mentions: Sequence[Mention],
    train_mentions: Sequence[Mention],
    candidate_sets: Mapping[str, CandidateSet],
    *,
    method: str | None = None,
    ambiguity_threshold: int = 10,
    ambiguity_mentions: Sequence[Mention] | None = None,
    exclude_unresolved: bool = False,
    config_fingerprint: str = "",
) -> EvalReport:
    """Full metric suite for one prediction set.

    ``ambiguity_mentions`` overrides the mentions used to find ambiguous
    surfaces (default: ``train_mentions``).
    """
    rows = evaluation_rows(test_mentions, exclude_unresolved)
    total = len(rows)
    seen, unseen = seen_unseen_partition(rows, train_mentions)
    hit, miss = candidate_failure_partition(rows, candidate_sets)
    _check_partition("seen/unseen", seen, unseen, total)
    _check_partition("candidate hit/miss", hit, miss, total)
    amb_ids = {m.mention_id for m in ambiguous_subset(
        test_mentions, train_mentions if ambiguity_mentions is None else ambiguity_mentions, ambiguity_threshold)}
    amb = [i for i, r in enumerate(rows) if r.mention_id in amb_ids]

    if method is None:
        methods = {p.method for p in predictions.values()}
        method = methods.pop() if len(methods) == 1 else "mixed"
    report = EvalReport(
        method=method,
        overall=accuracy(predictions, rows),
        seen=accuracy(predictions, rows, seen),
        unseen=accuracy(predictions, rows, unseen),
        in_candidates=accuracy(predictions, rows, hit),
        not_in_candidates=accuracy(predictions, rows, miss),
        ambiguous=accuracy(predictions, rows, amb),
        counts={"total": total, "seen": len(seen), "unseen": len(unseen), "in_candidates": len(hit),
                "not_in_candidates": len(miss), "ambiguous": len(amb)},
        fingerprint=config_fingerprint,
    )
    for a, b in (("seen", "unseen"), ("in_candidates", "not_in_candidates")):
        if total:
            mean = (report.counts[a] * getattr(report, a) + report.counts[b] * getattr(report, b)) / total
            if abs(mean - report.overall) > 1e-9:
                raise InvariantError(f"{a}/{b} accuracies do not average to overall ({mean} vs {report.overall})")
    if method == "independent" and report.counts["not_in_candidates"] and report.not_in_candidates != 0.0:
        raise InvariantError("independent linking scored on mentions whose gold entity is not a candidate")
    return report


_LABELS = {
    "overall": "Overall Acc.",
    "seen": "Acc. Seen",
    "unseen": "Acc. Unseen",
    "in_candidates": "Acc. gold in candidates",
    "not_in_candidates": "Acc. gold not in candidates",
    "ambiguous": "Acc. ambiguous",
}


def _table(reports: Sequence[EvalReport]) -> tuple[list[str], list[list[str]]]:
    header = ["metric"] + [r.method for r in reports]
    diffs = len(reports) > 1
    if diffs:
        header += [f"{r.method} - {reports[0].method}" for r in reports[1:]]
    rows = []
    for key in EvalReport.METRICS:
        vals = [getattr(r, key) for r in reports]
        row = [_LABELS[key]] + [f"{v:.2f}" for v in vals]
        if diffs:
            row += [f"{v - vals[0]:+.2f}" for v in vals[1:]]
        rows.append(row)
    for key in reports[0].counts:
        row = [f"n {key}"] + [str(r.counts.get(key, 0)) for r in reports]
        if diffs:
            row += ["" for _ in reports[1:]]
        rows.append(row)
    return header, rows


def emit_report(reports: Sequence[EvalReport], path, format: str = "tsv", meta: Mapping | None = None) -> None:
    """Write a methods-by-metrics comparison (``tsv``, ``json`` or ``markdown``); a difference column vs the first report is added per extra report."""
    if not reports:
        raise ValueError("need at least one report")
    path = Path(path)
    if format == "json":
        text = json.dumps({"meta": dict(meta or {}), "reports": [r.as_dict() for r in reports]},
                          indent=2, sort_keys=True) + "\n"
    else:
        header, rows = _table(reports)
        if format == "tsv":
            text = meta_lines(meta) + "\n".join("\t".join(r) for r in [header, *rows]) + "\n"
        elif format in ("markdown", "md", "markdown-table"):
            lines = ["| " + " | ".join(header) + " |", "|" + "|".join(["---"] * len(header)) + "|"]
            lines += ["| " + " | ".join(r) + " |" for r in rows]
            text = "\n".join(lines) + "\n"
            if meta:
                text += "\n" + ", ".join(f"{k}: `{meta[k]}`" for k in sorted(meta)) + "\n"
        else:
            raise ValueError(f"unknown report format {format!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
