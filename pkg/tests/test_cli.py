import hashlib
import json
import logging
import subprocess
import sys

import yaml

from clusterlink.affinity import write_scores
from clusterlink.cli import main
from clusterlink.config import config_from_dict
from clusterlink.corpus import read_documents

from synth import pipeline_workspace


def _run(*argv):
    return main([str(a) for a in argv])


def _full_pipeline(config, out=None):
    extra = ["--out", out] if out else []
    for cmd in ("ingest", "candgen", "train"):
        assert _run(cmd, "--config", config, *extra) == 0, cmd
    assert _run("link", "--config", config, "--method", "independent", *extra) == 0
    assert _run("link", "--config", config, "--method", "cluster", *extra) == 0
    assert _run("evaluate", "--config", config, *extra) == 0


def _digests(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.iterdir())}


def test_lexical_pipeline_end_to_end(tmp_path):
    config, docs = pipeline_workspace(tmp_path)
    _full_pipeline(config)
    out = tmp_path / "out"
    stats = json.loads((out / "ingest_stats.json").read_text())
    assert stats["documents"] == len(docs)
    assert stats["dropped_mentions"] == 0
    assert len(read_documents(out / "corpus.jsonl")) == len(docs)
    assert (out / "corpus.iob2").exists()
    recall = json.loads((out / "recall.json").read_text())["recall"]
    assert set(recall) == {"train", "dev", "test"}
    header = [l for l in (out / "report.tsv").read_text().splitlines() if not l.startswith("# ")][0]
    assert header.split("\t") == ["metric", "independent", "cluster", "cluster - independent"]
    report = json.loads((out / "report.json").read_text())
    indep = report["reports"][0]
    assert indep["method"] == "independent"
    assert indep["counts"]["not_in_candidates"] == 0 or indep["not_in_candidates"] == 0.0
    manifest = json.loads((out / "manifest_link_cluster.json").read_text())
    assert manifest["artifacts"]["predictions_cluster.tsv"] == \
        hashlib.sha256((out / "predictions_cluster.tsv").read_bytes()).hexdigest()
    assert "config_hash" in manifest and manifest["seed"] == 0
    first = (out / "predictions_cluster.tsv").read_text().splitlines()[0]
    assert first.startswith("# config_hash=")


def test_linear_pipeline_trains_models(tmp_path):
    config, _ = pipeline_workspace(tmp_path, scorer="linear")
    _full_pipeline(config)
    out = tmp_path / "out"
    for name in ("model_mm.json", "model_me.json"):
        model = json.loads((out / name).read_text())
        assert model["feature_extractor"] == "lexical-pair-v1"
        assert model["seed"] == 0
    log = json.loads((out / "training_log.json").read_text())
    assert set(log["history"]) == {"mm", "me"}


def test_rerun_is_byte_identical(tmp_path):
    config, _ = pipeline_workspace(tmp_path, scorer="linear")
    _full_pipeline(config, tmp_path / "run1")
    _full_pipeline(config, tmp_path / "run2")
    a, b = _digests(tmp_path / "run1"), _digests(tmp_path / "run2")
    assert a == b
    assert len(a) >= 15


def test_threads_do_not_change_output(tmp_path):
    config, _ = pipeline_workspace(tmp_path)
    for cmd in ("ingest", "candgen"):
        assert _run(cmd, "--config", config) == 0
    assert _run("link", "--config", config, "--out", tmp_path / "out") == 0
    single = (tmp_path / "out" / "predictions_cluster.tsv").read_bytes()
    assert _run("link", "--config", config, "--threads", 2) == 0
    assert (tmp_path / "out" / "predictions_cluster.tsv").read_bytes() == single


def test_seed_override_recorded(tmp_path):
    config, _ = pipeline_workspace(tmp_path)
    assert _run("ingest", "--config", config, "--seed", 7) == 0
    assert json.loads((tmp_path / "out" / "split.json").read_text())["seed"] == 7


def test_empty_corpus_directory(tmp_path, caplog):
    config, _ = pipeline_workspace(tmp_path)
    empty = tmp_path / "empty"
    empty.mkdir()
    cfg = yaml.safe_load(config.read_text())
    cfg["corpus"] = {"pubtator": "empty"}
    config.write_text(yaml.safe_dump(cfg))
    with caplog.at_level(logging.ERROR):
        assert _run("ingest", "--config", config) == 1
    assert "no documents found" in caplog.text


def test_cluster_without_mention_scores_refuses(tmp_path, caplog):
    config, _ = pipeline_workspace(tmp_path, scorer="precomputed")
    assert _run("ingest", "--config", config) == 0
    assert _run("candgen", "--config", config) == 0
    out = tmp_path / "out"
    docs = read_documents(out / "corpus.jsonl")
    cand_rows = [l.split("\t") for l in (out / "candidates.tsv").read_text().splitlines()
                 if l and not l.startswith(("#", "mention_id"))]
    write_scores("me", [(r[0], r[1], 0.5 + 0.4 * float(r[3])) for r in cand_rows], tmp_path / "me.tsv")
    cfg = yaml.safe_load(config.read_text())
    cfg["scorer"]["me_scores"] = "me.tsv"
    config.write_text(yaml.safe_dump(cfg))
    with caplog.at_level(logging.ERROR):
        assert _run("link", "--config", config) == 1
    assert "mention-mention" in caplog.text
    assert _run("link", "--config", config, "--method", "independent") == 0

    cfg["link"] = {"reduction_mode": True}
    config.write_text(yaml.safe_dump(cfg))
    assert _run("link", "--config", config) == 0
    indep = [l.split("\t")[:3] for l in (out / "predictions_independent.tsv").read_text().splitlines()
             if not l.startswith("#")]
    clus = [l.split("\t")[:3] for l in (out / "predictions_cluster.tsv").read_text().splitlines()
            if not l.startswith("#")]
    assert indep == clus
    assert len(indep) == 1 + sum(len(d.mentions) for d in docs if d.doc_id in
                                 json.loads((out / "split.json").read_text())["test"])


def test_missing_artifact_names_producer(tmp_path, caplog):
    config, _ = pipeline_workspace(tmp_path)
    with caplog.at_level(logging.ERROR):
        assert _run("candgen", "--config", config) == 1
    assert "clusterlink ingest" in caplog.text


def test_unknown_config_key(tmp_path):
    config, _ = pipeline_workspace(tmp_path, extra={"link": {"methd": "cluster"}})
    assert _run("ingest", "--config", config) == 1


def test_print_schema_round_trips(capsys):
    assert main(["--print-schema"]) == 0
    schema = yaml.safe_load(capsys.readouterr().out)
    cfg = config_from_dict(schema)
    assert cfg.candgen.k == 64 and cfg.link.method == "cluster"


def test_no_command_is_usage_error():
    assert main([]) == 2


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "clusterlink.cli", "--print-schema"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "candgen:" in proc.stdout
