"""Pipeline configuration: a YAML key-value file mapped onto dataclasses."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError

SCHEMA = """\
# clusterlink pipeline configuration (YAML). Relative paths resolve against the config file.
seed: 0                      # recorded in every artifact; drives training shuffles and init
output_dir: out              # artifact directory shared by all subcommands (--out overrides)
threads: 1                   # worker processes for per-document clustering (--threads overrides)
corpus:
  pubtator: null             # PubTator file or directory of *.txt/*.pubtator files
  split_ids: null            # {train: ids.txt, dev: ids.txt, test: ids.txt}, one doc id per line
  pubtator_splits: null      # alternative: {train: file, dev: file, test: file}
  id_prefixes: ["UMLS:", "MESH:"]   # stripped from gold ids
  drop_overlaps: true        # false keeps overlapping mentions (IOB2 export is then skipped if any remain)
  abbreviations_expanded: false     # records that the input text was already abbreviation-expanded
  context_width: 100         # characters of context kept on each side of a mention
kb:
  path: null                 # knowledge base (.jsonl or .tsv)
  format: null               # jsonl | tsv; inferred from the suffix when null
candgen:
  k: 64                      # candidates written per mention
  max_ngrams: 200000
  max_words: 200000
  recall_ks: [1, 2, 4, 8, 16, 32, 64]
scorer:
  kind: lexical              # lexical | linear | precomputed
  mm_scores: null            # precomputed: '#kind=mm' score file
  me_scores: null            # precomputed: '#kind=me' score file
training:
  margin: 0.5
  k: 4                       # hard negatives per anchor
  learning_rate: 0.1
  epochs: 50
  batch_size: 16
link:
  method: cluster            # cluster | independent
  split: test
  k: null                    # candidates used for linking (<= candgen.k); null = candgen.k
  reduction_mode: false      # allow method=cluster without mention-mention scores
  cross_document: false      # add mention-mention edges across documents
evaluate:
  split: test
  ambiguity_threshold: 10
  ambiguity_splits: [train]  # splits whose labels define ambiguous surfaces
  exclude_unresolved: false  # drop mentions whose gold id is not in the KB
  predictions: null          # list of prediction files; null = every predictions_*.tsv in output_dir
"""


@dataclass
class CorpusConfig:
    pubtator: str | None = None
    split_ids: dict[str, str] | None = None
    pubtator_splits: dict[str, str] | None = None
    id_prefixes: list[str] = field(default_factory=lambda: ["UMLS:", "MESH:"])
    drop_overlaps: bool = True
    abbreviations_expanded: bool = False
    context_width: int = 100


@dataclass
class KBConfig:
    path: str | None = None
    format: str | None = None


@dataclass
class CandgenConfig:
    k: int = 64
    max_ngrams: int = 200_000
    max_words: int = 200_000
    recall_ks: list[int] = field(default_factory=lambda: [1, 2, 4, 8, 16, 32, 64])


@dataclass
class ScorerConfig:
    kind: str = "lexical"
    mm_scores: str | None = None
    me_scores: str | None = None


@dataclass
class TrainingSection:
    margin: float = 0.5
    k: int = 4
    learning_rate: float = 0.1
    epochs: int = 50
    batch_size: int = 16


@dataclass
class LinkConfig:
    method: str = "cluster"
    split: str = "test"
    k: int | None = None
    reduction_mode: bool = False
    cross_document: bool = False


@dataclass
class EvaluateConfig:
    split: str = "test"
    ambiguity_threshold: int = 10
    ambiguity_splits: list[str] = field(default_factory=lambda: ["train"])
    exclude_unresolved: bool = False
    predictions: list[str] | None = None


@dataclass
class PipelineConfig:
    seed: int = 0
    output_dir: str = "out"
    threads: int = 1
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    kb: KBConfig = field(default_factory=KBConfig)
    candgen: CandgenConfig = field(default_factory=CandgenConfig)
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    training: TrainingSection = field(default_factory=TrainingSection)
    link: LinkConfig = field(default_factory=LinkConfig)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)
    base_dir: str = field(default=".", metadata={"internal": True})

    def path(self, value: str | None) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def out(self) -> Path:
        return self.path(self.output_dir)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    def hash(self) -> str:
        """Digest of everything that can change artifact contents (not output_dir/threads)."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("threads")
        blob = json.dumps(d, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    def validate(self) -> None:
        if self.scorer.kind not in ("lexical", "linear", "precomputed"):
            raise ConfigError(f"scorer.kind must be lexical, linear or precomputed, not {self.scorer.kind!r}")
        if self.link.method not in ("cluster", "independent"):
            raise ConfigError(f"link.method must be cluster or independent, not {self.link.method!r}")
        if self.candgen.k < 1:
            raise ConfigError("candgen.k must be >= 1")
        if self.link.k is not None and not (1 <= self.link.k <= self.candgen.k):
            raise ConfigError("link.k must be between 1 and candgen.k")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        for split in (self.link.split, self.evaluate.split, *self.evaluate.ambiguity_splits):
            if split not in ("train", "dev", "test"):
                raise ConfigError(f"unknown split {split!r}")


def _build(cls, data: dict, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name: f for f in dataclasses.fields(cls) if not f.metadata.get("internal")}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown} (see --print-schema)")
    kwargs = {}
    for key, value in data.items():
        f = names[key]
        sub = _SECTIONS.get((cls, key))
        kwargs[key] = _build(sub, value, f"{where}.{key}") if sub is not None else value
    return cls(**kwargs)


_SECTIONS = {
    (PipelineConfig, "corpus"): CorpusConfig,
    (PipelineConfig, "kb"): KBConfig,
    (PipelineConfig, "candgen"): CandgenConfig,
    (PipelineConfig, "scorer"): ScorerConfig,
    (PipelineConfig, "training"): TrainingSection,
    (PipelineConfig, "link"): LinkConfig,
    (PipelineConfig, "evaluate"): EvaluateConfig,
}


def config_from_dict(data: dict[str, Any], base_dir=".") -> PipelineConfig:
    cfg = _build(PipelineConfig, data or {}, "config")
    cfg.base_dir = str(base_dir)
    cfg.validate()
    return cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    return config_from_dict(data, base_dir=path.parent)
