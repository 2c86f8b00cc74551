"""Knowledge-base readers and writers (JSONL and pipe-delimited TSV)."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable

from ..errors import ConflictError, ParseError
from .model import Entity, KnowledgeBase

logger = logging.getLogger(__name__)

KB_COLUMNS = ("entity_id", "canonical_name", "types", "aliases", "description")


def _split_pipes(value: str) -> list[str]:
    return [v for v in value.split("|") if v] if value else []


def _entity_from_record(record: dict, path, lineno: int) -> Entity:
    try:
        entity_id = record["entity_id"]
        name = record["canonical_name"]
    except KeyError as exc:
        raise ParseError(path, lineno, f"missing required key {exc.args[0]!r}") from None
    types = record.get("types") or []
    aliases = record.get("aliases") or []
    if not isinstance(types, list) or not isinstance(aliases, list):
        raise ParseError(path, lineno, "'types' and 'aliases' must be arrays")
    try:
        return Entity(
            entity_id=str(entity_id),
            canonical_name=str(name),
            types=frozenset(map(str, types)),
            aliases=tuple(map(str, aliases)),
            description=str(record.get("description") or ""),
        )
    except ValueError as exc:
        raise ParseError(path, lineno, str(exc)) from None


def _iter_jsonl(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, lineno, f"invalid JSON: {exc.msg}") from None
            if not isinstance(record, dict):
                raise ParseError(path, lineno, "expected a JSON object")
            yield _entity_from_record(record, path, lineno)


def _iter_tsv(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            cols = line.split("\t")
            if lineno == 1 and tuple(cols[:2]) == KB_COLUMNS[:2]:
                continue  # header
            if len(cols) < 2 or len(cols) > len(KB_COLUMNS):
                raise ParseError(path, lineno, f"expected 2-{len(KB_COLUMNS)} tab-separated columns, got {len(cols)}")
            cols += [""] * (len(KB_COLUMNS) - len(cols))
            record = {
                "entity_id": cols[0],
                "canonical_name": cols[1],
                "types": _split_pipes(cols[2]),
                "aliases": _split_pipes(cols[3]),
                "description": cols[4],
            }
            yield _entity_from_record(record, path, lineno)


def parse_kb(path, format: str | None = None, name: str | None = None) -> KnowledgeBase:
    """Load a knowledge base from ``path``.

    ``format`` is ``"jsonl"`` or ``"tsv"``; inferred from the suffix when
    omitted. Duplicate entity ids raise :class:`ConflictError`.
    """
    path = Path(path)
    if format is None:
        format = "tsv" if path.suffix.lower() in (".tsv", ".txt") else "jsonl"
    if format == "jsonl":
        rows = _iter_jsonl(path)
    elif format == "tsv":
        rows = _iter_tsv(path)
    else:
        raise ValueError(f"unknown KB format {format!r}")
    entities: dict[str, Entity] = {}
    for entity in rows:
        if entity.entity_id in entities:
            raise ConflictError(entity.entity_id, f"{path}: duplicate entity id {entity.entity_id!r}")
        entities[entity.entity_id] = entity
    logger.info("loaded %d entities from %s", len(entities), path)
    return KnowledgeBase(entities.values(), name=name if name is not None else path.stem)


def write_kb(entities: Iterable[Entity], path, format: str = "jsonl") -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for e in entities:
            if format == "jsonl":
                row = {
                    "entity_id": e.entity_id,
                    "canonical_name": e.canonical_name,
                    "types": sorted(e.types),
                    "aliases": list(e.aliases),
                    "description": e.description,
                }
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
            else:
                fh.write("\t".join([e.entity_id, e.canonical_name, "|".join(sorted(e.types)),
                                    "|".join(e.aliases), e.description]) + "\n")
