import json
from pathlib import Path

import pytest
import yaml

from cohortrag.errors import ConfigError, ValidationError
from cohortrag.pipeline import (
    build_artifacts,
    config_from_dict,
    load_config,
    run_eval,
    run_report,
    run_sweep,
)

from conftest import write_corpus


def cohort_fixture(tmp_path: Path, offline="copy_first_profile_tag") -> dict:
    """Six users in two cohorts; LaMP-2-style tagged docs; three queries.

    User a1 lacks its gold tag ("action"); neighbor a2 owns the closest
    doc to a1's query, tagged "action", so hybrid retrieval recovers it.
    """
    docs = [
        # cohort A, around e0
        {"doc_id": "a1_d1", "user_id": "a1", "text": "slow burn drama", "paired_output": "comedy", "timestamp": 10},
        {"doc_id": "a1_d2", "user_id": "a1", "text": "quiet family story", "paired_output": "comedy", "timestamp": 20},
        {"doc_id": "a2_d1", "user_id": "a2", "text": "fists and car chases", "paired_output": "action", "timestamp": 30},
        {"doc_id": "a2_d2", "user_id": "a2", "text": "harder faster louder", "paired_output": "action", "timestamp": 40},
        {"doc_id": "a3_d1", "user_id": "a3", "text": "punchlines galore", "paired_output": "comedy", "timestamp": 50},
        {"doc_id": "a3_d2", "user_id": "a3", "text": "stand up special", "paired_output": "comedy", "timestamp": 60},
        # cohort B, around e1
        {"doc_id": "b1_d1", "user_id": "b1", "text": "grim payback tale", "paired_output": "violence", "timestamp": 70},
        {"doc_id": "b1_d2", "user_id": "b1", "text": "mean streets story", "paired_output": "violence", "timestamp": 80},
        {"doc_id": "b2_d1", "user_id": "b2", "text": "haunted dreams story", "paired_output": "psychology", "timestamp": 90},
        {"doc_id": "b2_d2", "user_id": "b2", "text": "mind games abound", "paired_output": "psychology", "timestamp": 100},
        {"doc_id": "b3_d1", "user_id": "b3", "text": "spaceships and lasers", "paired_output": "sci-fi", "timestamp": 110},
        {"doc_id": "b3_d2", "user_id": "b3", "text": "galactic freight run", "paired_output": "sci-fi", "timestamp": 120},
    ]
    embeddings = {
        "a1_d1": [0.98, 0.05, 0.0, 0.0],
        "a1_d2": [0.97, -0.05, 0.0, 0.0],
        "a2_d1": [0.999, 0.01, 0.0, 0.0],  # hottest doc near the cohort-A center
        "a2_d2": [0.96, 0.08, 0.0, 0.0],
        # a3 tilted away so a2 is the nearest neighbor of both a1 and ghost
        "a3_d1": [0.95, -0.15, 0.0, 0.0],
        "a3_d2": [0.94, -0.15, 0.0, 0.0],
        "b1_d1": [0.0, 0.98, 0.04, 0.0],
        "b1_d2": [0.0, 0.97, -0.04, 0.0],
        "b2_d1": [0.0, 0.96, 0.08, 0.0],
        "b2_d2": [0.0, 0.95, -0.08, 0.0],
        "b3_d1": [0.0, 0.99, 0.01, 0.0],
        "b3_d2": [0.0, 0.94, 0.03, 0.0],
    }
    queries = [
        {"query_id": "q_a1", "user_id": "a1", "input_text": "loud brawls and explosions",
         "gold_output": "action", "task_id": "LAMP2"},
        {"query_id": "q_b1", "user_id": "b1", "input_text": "a story of revenge",
         "gold_output": "violence", "task_id": "LAMP2"},
        {"query_id": "q_ghost", "user_id": "ghost", "input_text": "nonstop fight scenes",
         "gold_output": "action", "task_id": "LAMP2"},
    ]
    query_embeddings = {
        "q_a1": [1.0, 0.0, 0.0, 0.0],
        "q_b1": [0.0, 1.0, 0.0, 0.0],
        "q_ghost": [1.0, 0.05, 0.0, 0.0],
    }
    write_corpus(tmp_path, docs, embeddings, queries, query_embeddings)
    config = {
        "corpus": {
            "documents": str(tmp_path / "documents.jsonl"),
            "embeddings": str(tmp_path / "embeddings.bin"),
            "queries": str(tmp_path / "queries.jsonl"),
            "query_embeddings": str(tmp_path / "query_embeddings.bin"),
        },
        "artifacts_dir": str(tmp_path / "artifacts"),
        "mode": "hybrid",
        "k": 1,
        "m": 2,
        "b": 3,
        "user_clustering": {"min_cluster_size": 3},
        "doc_clustering": {"min_cluster_size": 2},
        "generation": {"offline_responder": offline},
        "seed": 0,
    }
    config_path = tmp_path / "config.yaml"
    config_path.write_text(yaml.safe_dump(config))
    return {"config": config, "config_path": config_path, "tmp_path": tmp_path}


def test_build_summary_and_manifest(tmp_path):
    fixture = cohort_fixture(tmp_path)
    summary = build_artifacts(config_from_dict(fixture["config"]))
    assert summary.user_count == 6
    assert summary.cluster_count == 2
    assert summary.outlier_count == 0
    assert summary.silhouette is not None and summary.silhouette > 0.5
    assert set(summary.manifest) == {"clusters", "neighbors"}


def test_rebuild_byte_identical(tmp_path):
    fixture = cohort_fixture(tmp_path)
    config = config_from_dict(fixture["config"])
    build_artifacts(config)
    first = {
        name: (Path(config.artifacts_dir) / f"{name}.json").read_bytes()
        for name in ("clusters", "neighbors")
    }
    build_artifacts(config)
    second = {
        name: (Path(config.artifacts_dir) / f"{name}.json").read_bytes()
        for name in ("clusters", "neighbors")
    }
    assert first == second


def test_use_kmeans_requires_k(tmp_path):
    fixture = cohort_fixture(tmp_path)
    raw = dict(fixture["config"])
    raw["variants"] = {"use_kmeans": True}
    with pytest.raises(ConfigError, match="kmeans_k"):
        config_from_dict(raw)


def test_load_config_rejects_unknown_keys(tmp_path):
    fixture = cohort_fixture(tmp_path)
    raw = dict(fixture["config"])
    raw["typo_key"] = 1
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(raw))
    with pytest.raises(ConfigError, match="typo_key"):
        load_config(path)


def test_dry_run_emits_bundles_only(tmp_path):
    fixture = cohort_fixture(tmp_path, offline=None)
    raw = dict(fixture["config"])
    raw["generation"] = {}  # no endpoint, no responder: dry run must not need them
    config = config_from_dict(raw)
    build_artifacts(config)
    result = run_eval(config, dry_run=True)
    assert len(result.outcomes) == 3
    assert result.records == []
    assert result.results_path is None
    bundles = (Path(config.artifacts_dir) / "bundles.jsonl").read_text().strip().splitlines()
    assert len(bundles) == 3


def test_offline_run_scores_queries(tmp_path):
    fixture = cohort_fixture(tmp_path)
    config = config_from_dict(fixture["config"])
    build_artifacts(config)
    result = run_eval(config)
    assert len(result.records) == 3
    assert result.results_path and Path(result.results_path).exists()
    assert result.report_path and Path(result.report_path).exists()
    report = result.reports[0]
    assert report.task_id.value == "LAMP2"
    # hybrid retrieval finds a1's gold through neighbor a2, b1 self-serves,
    # and the cold-start user falls back to collaborative candidates
    assert report.metrics["accuracy"] == pytest.approx(1.0)


def test_cold_start_flagged_and_answered(tmp_path):
    fixture = cohort_fixture(tmp_path)
    config = config_from_dict(fixture["config"])
    build_artifacts(config)
    result = run_eval(config)
    ghost = next(o for o in result.outcomes if o.query.query_id == "q_ghost")
    # hybrid degrades naturally to the collaborative pool for an empty profile
    assert "cold_start" in ghost.trace.flags
    assert ghost.record is not None
    assert ghost.record.metrics["correct"] == 1.0
    assert all(d["owner"] != "ghost" for d in ghost.trace.results)


def test_cold_start_user_only_falls_back_to_collaborative(tmp_path):
    fixture = cohort_fixture(tmp_path)
    raw = dict(fixture["config"])
    raw["mode"] = "user_only"
    config = config_from_dict(raw)
    build_artifacts(config)
    result = run_eval(config)
    ghost = next(o for o in result.outcomes if o.query.query_id == "q_ghost")
    assert "cold_start" in ghost.trace.flags
    assert "cold_start_fallback_collaborative" in ghost.trace.flags
    assert ghost.record is not None
    assert ghost.record.metrics["correct"] == 1.0


def test_user_only_mode_misses_foreign_gold(tmp_path):
    fixture = cohort_fixture(tmp_path)
    raw = dict(fixture["config"])
    raw["mode"] = "user_only"
    config = config_from_dict(raw)
    build_artifacts(config)
    result = run_eval(config)
    by_id = {o.query.query_id: o for o in result.outcomes}
    assert by_id["q_a1"].record.metrics["correct"] == 0.0  # gold lives with a2
    assert by_id["q_b1"].record.metrics["correct"] == 1.0


def test_traces_record_work_counter(tmp_path):
    fixture = cohort_fixture(tmp_path)
    config = config_from_dict(fixture["config"])
    build_artifacts(config)
    run_eval(config)
    lines = (Path(config.artifacts_dir) / "traces.jsonl").read_text().strip().splitlines()
    for line in lines:
        trace = json.loads(line)
        assert trace["stage2_scored_count"] <= trace["candidate_count"]
        assert trace["m"] == 2


def test_report_csv_format(tmp_path):
    fixture = cohort_fixture(tmp_path)
    config = config_from_dict(fixture["config"])
    build_artifacts(config)
    result = run_eval(config)
    tables = run_report(result.results_path)
    lines = tables.csv.strip().splitlines()
    assert lines[0] == "task,metric,value"
    assert any(line.startswith("LAMP2,accuracy,") for line in lines)


def test_report_with_baseline_and_stars(tmp_path):
    fixture = cohort_fixture(tmp_path)
    config = config_from_dict(fixture["config"])
    build_artifacts(config)
    hybrid = run_eval(config)
    raw = dict(fixture["config"])
    raw["mode"] = "user_only"
    raw["artifacts_dir"] = str(tmp_path / "artifacts2")
    user_only_cfg = config_from_dict(raw)
    build_artifacts(user_only_cfg)
    user_only = run_eval(user_only_cfg)
    tables = run_report(hybrid.results_path, user_only.results_path)
    header = tables.csv.strip().splitlines()[0]
    assert header == "task,metric,value,baseline,delta,significance"
    assert "delta" in header


def test_report_missing_file_errors(tmp_path):
    with pytest.raises(ValidationError):
        run_report(tmp_path / "absent.jsonl")


def test_report_empty_file_errors(tmp_path):
    empty = tmp_path / "results.jsonl"
    empty.write_text("")
    with pytest.raises(ValidationError, match="empty"):
        run_report(empty)


def test_report_malformed_line_names_lineno(tmp_path):
    bad = tmp_path / "results.jsonl"
    bad.write_text('{"query_id": "q"}\n')
    with pytest.raises(ValidationError, match=":1"):
        run_report(bad)


def test_sweep_rows(tmp_path):
    fixture = cohort_fixture(tmp_path)
    raw = dict(fixture["config"])
    raw["sweep"] = {"k_list": [1, 2], "m_list": [1, 2, 3]}
    config = config_from_dict(raw)
    build_artifacts(config)
    rows = run_sweep(config)
    assert [(r["param"], r["value"]) for r in rows] == [
        ("k", 1), ("k", 2), ("m", 1), ("m", 2), ("m", 3),
    ]
    m_rows = [r for r in rows if r["param"] == "m"]
    counts = [r["mean_stage2_scored"] for r in m_rows]
    assert counts == sorted(counts)  # non-decreasing in m


def test_sweep_requires_lists(tmp_path):
    fixture = cohort_fixture(tmp_path)
    config = config_from_dict(fixture["config"])
    with pytest.raises(ConfigError):
        run_sweep(config)


def test_variant_flags_change_traces(tmp_path):
    fixture = cohort_fixture(tmp_path)
    base_cfg = config_from_dict(fixture["config"])
    build_artifacts(base_cfg)
    base = run_eval(base_cfg, dry_run=True, write_outputs=False)

    raw = dict(fixture["config"])
    raw["variants"] = {"no_doc_ranking": True}
    raw["artifacts_dir"] = str(tmp_path / "artifacts_nodoc")
    flag_cfg = config_from_dict(raw)
    build_artifacts(flag_cfg)
    flagged = run_eval(flag_cfg, dry_run=True, write_outputs=False)

    for b, f in zip(base.outcomes, flagged.outcomes):
        assert b.trace.ranker != f.trace.ranker
        assert f.trace.ranker == "ingestion_order"
        assert "no_doc_ranking" in f.trace.flags
