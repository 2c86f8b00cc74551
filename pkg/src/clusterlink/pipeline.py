"""Pipeline commands. Each reads its inputs from files and writes artifacts plus a manifest to the output directory."""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from . import __version__
from .affinity import (
    FeatureExtractor,
    LexicalScorer,
    LinearAffinityModel,
    LinearScorer,
    TrainingConfig,
    TrainingCorpus,
    load_precomputed_scores,
    train,
)
from .candgen import CandidateGenerator, CandidateSet, Vocabulary, build_vocabulary, read_candidates, recall_at_k, write_candidates
from .config import PipelineConfig
from .corpus import (
    CorpusSplit,
    Document,
    export_iob2,
    has_overlaps,
    parse_kb,
    parse_pubtator,
    read_documents,
    resolve_overlaps,
    split_stats,
    write_documents,
)
from .corpus.splits import load_split, split_from_files
from .errors import ConfigError, ConflictError
from .evaluation import EvalReport, emit_report, evaluate
from .inference import (
    build_graph,
    cluster_link,
    independent_link,
    read_predictions,
    write_merge_log,
    write_predictions,
)

logger = logging.getLogger(__name__)

CORPUS = "corpus.jsonl"
SPLIT = "split.json"
IOB2 = "corpus.iob2"
INGEST_STATS = "ingest_stats.json"
VOCAB = "vocabulary.json"
CANDIDATES = "candidates.tsv"
RECALL = "recall.json"
MODEL_MM = "model_mm.json"
MODEL_ME = "model_me.json"
TRAIN_LOG = "training_log.json"

_PRODUCER = {
    CORPUS: "ingest", SPLIT: "ingest", VOCAB: "candgen", CANDIDATES: "candgen",
    MODEL_MM: "train", MODEL_ME: "train",
}


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _meta(cfg: PipelineConfig) -> dict:
    return {"config_hash": cfg.hash(), "seed": cfg.seed}


def _write_json(obj, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(cfg: PipelineConfig, command: str, artifacts: list[Path], extra: dict | None = None,
                    name: str | None = None) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        **_meta(cfg),
        "config": cfg.to_dict() | {"output_dir": None, "threads": None},
        "artifacts": {p.name: sha256_file(p) for p in artifacts},
    }
    if extra:
        manifest.update(extra)
    path = cfg.out / f"manifest_{name or command}.json"
    _write_json(manifest, path)
    return path


def _artifact(cfg: PipelineConfig, name: str) -> Path:
    path = cfg.out / name
    if not path.exists():
        producer = _PRODUCER.get(name, "an earlier command")
        raise ConfigError(f"missing artifact {path}; produce it with `clusterlink {producer}`")
    return path


def _load_kb(cfg: PipelineConfig):
    path = cfg.path(cfg.kb.path)
    if path is None:
        raise ConfigError("kb.path is not set")
    if not path.exists():
        raise ConfigError(f"knowledge base {path} not found")
    return parse_kb(path, cfg.kb.format)


def _pubtator_files(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix in (".txt", ".pubtator") and p.is_file())
    elif path.exists():
        files = [path]
    else:
        raise ConfigError(f"corpus path {path} not found")
    return files


def _parse_all(cfg: PipelineConfig, files: list[Path], kb) -> list[Document]:
    docs: list[Document] = []
    for f in files:
        docs.extend(parse_pubtator(f, kb, id_prefixes=cfg.corpus.id_prefixes,
                                   context_width=cfg.corpus.context_width,
                                   abbreviations_expanded=cfg.corpus.abbreviations_expanded))
    return docs


def load_corpus(cfg: PipelineConfig) -> tuple[list[Document], CorpusSplit]:
    docs = read_documents(_artifact(cfg, CORPUS))
    with open(_artifact(cfg, SPLIT), encoding="utf-8") as fh:
        s = json.load(fh)
    return docs, CorpusSplit(frozenset(s["train"]), frozenset(s["dev"]), frozenset(s["test"]))


def cmd_ingest(cfg: PipelineConfig) -> dict:
    """Parse raw corpora, resolve overlaps, export IOB2 and report split statistics."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    kb = _load_kb(cfg) if cfg.kb.path else None
    c = cfg.corpus
    if c.pubtator_splits:
        groups = {}
        for name in ("train", "dev", "test"):
            p = c.pubtator_splits.get(name)
            groups[name] = _parse_all(cfg, _pubtator_files(cfg.path(p)), kb) if p else []
        docs = [d for name in ("train", "dev", "test") for d in groups[name]]
        split = split_from_files(groups)
    elif c.pubtator:
        files = _pubtator_files(cfg.path(c.pubtator))
        docs = _parse_all(cfg, files, kb)
        if c.split_ids:
            split = load_split(*(cfg.path(c.split_ids[n]) for n in ("train", "dev", "test")))
            split.check_covers(docs)
        else:
            logger.warning("no split configured; every document goes to the test split")
            split = CorpusSplit(test=frozenset(d.doc_id for d in docs))
    else:
        raise ConfigError("set corpus.pubtator or corpus.pubtator_splits")
    if not docs:
        raise ConfigError("no documents found in the configured corpus input")
    seen_ids = set()
    for d in docs:
        if d.doc_id in seen_ids:
            raise ConflictError(d.doc_id, f"document {d.doc_id} appears more than once")
        seen_ids.add(d.doc_id)

    total_before = sum(len(d.mentions) for d in docs)
    dropped = truncated = 0
    processed = []
    for d in docs:
        res = resolve_overlaps(d, drop_overlaps=c.drop_overlaps)
        processed.append(res.document)
        dropped += res.dropped
        truncated += res.truncated
    meta = _meta(cfg)
    artifacts = [cfg.out / CORPUS, cfg.out / SPLIT]
    write_documents(processed, cfg.out / CORPUS, meta=meta)
    _write_json({**meta, "train": sorted(split.train), "dev": sorted(split.dev), "test": sorted(split.test)},
                cfg.out / SPLIT)
    if any(has_overlaps(d) for d in processed):
        logger.warning("overlapping mentions remain (drop_overlaps=false); IOB2 export skipped")
    else:
        export_iob2(processed, cfg.out / IOB2, meta=meta)
        artifacts.append(cfg.out / IOB2)
    stats = split_stats(processed, split, kb)
    unresolved = sum(1 for d in processed for m in d.mentions if m.unresolved)
    summary = {
        **meta,
        "documents": len(processed),
        "mentions_before": total_before,
        "mentions": sum(len(d.mentions) for d in processed),
        "dropped_mentions": dropped,
        "truncated_mentions": truncated,
        "unresolved_mentions": unresolved,
        "abbreviations_expanded": c.abbreviations_expanded,
        "splits": {k: v.as_dict() for k, v in stats.items()},
    }
    _write_json(summary, cfg.out / INGEST_STATS)
    artifacts.append(cfg.out / INGEST_STATS)
    _write_manifest(cfg, "ingest", artifacts)
    logger.info("ingest: %d documents, %d mentions, %d dropped, %d truncated, %d unresolved",
                summary["documents"], summary["mentions"], dropped, truncated, unresolved)
    for s in stats.values():
        logger.info("  %-5s docs=%d mentions=%d entities=%d seen=%.1f%%", s.split, s.documents, s.mentions,
                    s.entities, s.pct_seen)
    return summary


def _link_k(cfg: PipelineConfig) -> int:
    return cfg.link.k or cfg.candgen.k


def load_candidates(cfg: PipelineConfig, docs, k: int | None = None) -> dict[str, CandidateSet]:
    ids = [m.mention_id for d in docs for m in d.mentions]
    cands = read_candidates(_artifact(cfg, CANDIDATES), ids)
    if k is not None:
        cands = {mid: cs.top(k) for mid, cs in cands.items()}
    return cands


def cmd_candgen(cfg: PipelineConfig) -> dict:
    """Fit the TF-IDF vocabulary, write top-K candidates for every mention and recall@k per split."""
    docs, split = load_corpus(cfg)
    kb = _load_kb(cfg)
    vocab = build_vocabulary(kb, cfg.candgen.max_ngrams, cfg.candgen.max_words)
    meta = _meta(cfg)
    vocab.save(cfg.out / VOCAB, meta=meta)
    gen = CandidateGenerator(kb, vocab)
    mentions = [m for d in docs for m in d.mentions]
    sets = gen.generate_many(mentions, cfg.candgen.k)
    write_candidates(sets, cfg.out / CANDIDATES, meta=meta)
    by_id = {cs.mention_id: cs for cs in sets}
    recall = {}
    for name in ("train", "dev", "test"):
        gold = {m.mention_id: m.gold_ids for d in split.select(docs, name) for m in d.mentions}
        if gold:
            recall[name] = {str(k): round(v, 4) for k, v in recall_at_k(by_id, gold, cfg.candgen.recall_ks).items()}
    _write_json({**meta, "recall": recall}, cfg.out / RECALL)
    _write_manifest(cfg, "candgen", [cfg.out / VOCAB, cfg.out / CANDIDATES, cfg.out / RECALL])
    for name, r in recall.items():
        logger.info("recall@k %s: %s", name, " ".join(f"@{k}={v:.1f}" for k, v in r.items()))
    return recall


def _training_config(cfg: PipelineConfig) -> TrainingConfig:
    t = cfg.training
    return TrainingConfig(margin=t.margin, k=t.k, learning_rate=t.learning_rate, epochs=t.epochs,
                          seed=cfg.seed, batch_size=t.batch_size)


def cmd_train(cfg: PipelineConfig) -> dict:
    """Train the linear mention-mention and mention-entity models (scorer.kind = linear)."""
    if cfg.scorer.kind != "linear":
        logger.info("scorer.kind=%s has no trainable parameters; nothing to do", cfg.scorer.kind)
        _write_manifest(cfg, "train", [], {"trained": False})
        return {"trained": False}
    docs, split = load_corpus(cfg)
    kb = _load_kb(cfg)
    vocab = Vocabulary.load(_artifact(cfg, VOCAB))
    train_docs = split.select(docs, "train")
    if not train_docs:
        raise ConfigError("the train split is empty")
    cands = load_candidates(cfg, train_docs, _link_k(cfg))
    extractor = FeatureExtractor(vocab, kb, cands)
    corpus = TrainingCorpus(train_docs, extractor, cands)
    tcfg = _training_config(cfg)
    rng = np.random.default_rng(cfg.seed)
    log = {}
    for kind, fname in (("mm", MODEL_MM), ("me", MODEL_ME)):
        model, history = train(LinearAffinityModel.init(kind, rng), corpus, tcfg)
        model.save(cfg.out / fname, config=tcfg.as_dict(), seed=cfg.seed)
        log[kind] = [h.as_dict() for h in history]
    _write_json({**_meta(cfg), "history": log}, cfg.out / TRAIN_LOG)
    _write_manifest(cfg, "train", [cfg.out / MODEL_MM, cfg.out / MODEL_ME, cfg.out / TRAIN_LOG], {"trained": True})
    return log


def build_scorer(cfg: PipelineConfig, kb, candidates):
    kind = cfg.scorer.kind
    if kind == "lexical":
        return LexicalScorer(Vocabulary.load(_artifact(cfg, VOCAB)), kb)
    if kind == "linear":
        vocab = Vocabulary.load(_artifact(cfg, VOCAB))
        extractor = FeatureExtractor(vocab, kb, candidates)
        return LinearScorer(extractor, LinearAffinityModel.load(_artifact(cfg, MODEL_MM)),
                            LinearAffinityModel.load(_artifact(cfg, MODEL_ME)))
    paths = [cfg.path(p) for p in (cfg.scorer.mm_scores, cfg.scorer.me_scores) if p]
    if not paths:
        raise ConfigError("scorer.kind=precomputed needs scorer.me_scores (and scorer.mm_scores for clustering)")
    for p in paths:
        if not p.exists():
            raise ConfigError(f"score file {p} not found")
    return load_precomputed_scores(*paths)


def cmd_link(cfg: PipelineConfig) -> Path:
    """Link the configured split independently or by constrained clustering."""
    docs, split = load_corpus(cfg)
    docs = split.select(docs, cfg.link.split)
    kb = _load_kb(cfg)
    cands = load_candidates(cfg, docs, _link_k(cfg))
    scorer = build_scorer(cfg, kb, cands)
    method = cfg.link.method
    meta = _meta(cfg)
    out = cfg.out / f"predictions_{method}.tsv"
    artifacts = [out]
    if method == "independent":
        preds = independent_link([m for d in docs for m in d.mentions], cands, scorer)
    else:
        include_mm = True
        if not scorer.has_mm:
            if not cfg.link.reduction_mode:
                raise ConfigError("link.method=cluster needs mention-mention scores (scorer.mm_scores); "
                                  "set link.reduction_mode=true to cluster with mention-entity edges only")
            include_mm = False
        graph = build_graph(docs, cands, scorer, include_mm=include_mm, cross_document=cfg.link.cross_document)
        result = cluster_link(graph, per_document=not cfg.link.cross_document, workers=cfg.threads)
        preds = result.predictions
        log_path = cfg.out / "merge_log_cluster.jsonl"
        write_merge_log(result.merge_log, log_path, meta=meta)
        artifacts.append(log_path)
    write_predictions(preds, out, meta=meta)
    _write_manifest(cfg, "link", artifacts, {"method": method, "split": cfg.link.split}, name=f"link_{method}")
    logger.info("link (%s): %d predictions -> %s", method, len(preds), out)
    return out


_METHOD_ORDER = {"independent": 0, "cluster": 1}


def cmd_evaluate(cfg: PipelineConfig) -> list[EvalReport]:
    """Score every prediction file and write comparison reports (tsv, json, markdown)."""
    docs, split = load_corpus(cfg)
    test_docs = split.select(docs, cfg.evaluate.split)
    train_mentions = [m for d in split.select(docs, "train") for m in d.mentions]
    amb_mentions = [m for s in cfg.evaluate.ambiguity_splits for d in split.select(docs, s) for m in d.mentions]
    test_mentions = [m for d in test_docs for m in d.mentions]
    cands = load_candidates(cfg, test_docs, _link_k(cfg))
    if cfg.evaluate.predictions:
        files = [cfg.path(p) for p in cfg.evaluate.predictions]
    else:
        files = sorted(cfg.out.glob("predictions_*.tsv"),
                       key=lambda p: (_METHOD_ORDER.get(p.stem.split("_", 1)[1], 9), p.name))
    if not files:
        raise ConfigError(f"no prediction files in {cfg.out}; produce them with `clusterlink link`")
    reports = []
    for f in files:
        preds = read_predictions(f)
        reports.append(evaluate(
            preds, test_mentions, train_mentions, cands,
            ambiguity_threshold=cfg.evaluate.ambiguity_threshold,
            ambiguity_mentions=amb_mentions,
            exclude_unresolved=cfg.evaluate.exclude_unresolved,
            config_fingerprint=cfg.hash(),
        ))
    meta = _meta(cfg)
    paths = []
    for fmt, name in (("tsv", "report.tsv"), ("json", "report.json"), ("markdown", "report.md")):
        emit_report(reports, cfg.out / name, fmt, meta=meta)
        paths.append(cfg.out / name)
    _write_manifest(cfg, "evaluate", paths, {"predictions": [f.name for f in files]})
    for r in reports:
        logger.info("%s: overall=%.2f seen=%.2f unseen=%.2f hit=%.2f miss=%.2f amb=%.2f", r.method, r.overall,
                    r.seen, r.unseen, r.in_candidates, r.not_in_candidates, r.ambiguous)
    return reports
