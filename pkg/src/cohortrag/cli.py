"""Thin command-line client for the engine service.

Every subcommand speaks the HTTP API: against a remote server when
``--server`` is given, otherwise against an in-process application
instance, so behavior is identical either way. Exit codes: 0 ok,
1 validation, 2 runtime, 3 generation endpoint.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import yaml


def _load_config_dict(path: str) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        click.echo(f"error: cannot read config {path}: {exc}", err=True)
        sys.exit(1)
    if not isinstance(data, dict):
        click.echo(f"error: config {path} must be a mapping", err=True)
        sys.exit(1)
    return data


def _parse_int_list(spec: str) -> list[int]:
    """Accepts '1,2,3' or range syntax '1..12'."""
    spec = spec.strip()
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in spec.split(",") if v.strip()]


class ApiClient:
    """POSTs to a live server or to the in-process app."""

    def __init__(self, server: str | None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            from fastapi.testclient import TestClient

            from .api import create_app

            self._client = TestClient(create_app())

    def call(self, method: str, path: str, payload: dict | None = None) -> dict:
        response = self._client.request(method, path, json=payload)
        try:
            body = response.json()
        except ValueError:
            click.echo(f"error: server returned non-JSON ({response.status_code})", err=True)
            sys.exit(2)
        if response.status_code != 200:
            error = body.get("error", {}) if isinstance(body, dict) else {}
            click.echo(
                f"error: {error.get('kind', 'HTTP')}: {error.get('message', response.text)}",
                err=True,
            )
            sys.exit(int(error.get("exit_code", 2)))
        return body


def _apply_overrides(config: dict, **overrides) -> dict:
    """Push CLI flag overrides into the config mapping."""
    simple = {k: v for k, v in overrides.items() if k in {"mode", "k", "m", "b"} and v is not None}
    config.update(simple)
    variants = config.setdefault("variants", {})
    for flag in (
        "no_user_clustering",
        "no_intra_cluster_sim",
        "no_doc_ranking",
        "centroids_only",
        "use_kmeans",
    ):
        if overrides.get(flag):
            variants[flag] = True
    if overrides.get("ranker") is not None:
        config.setdefault("ranker", {})["kind"] = overrides["ranker"]
    if overrides.get("offline_responder") is not None:
        config.setdefault("generation", {})["offline_responder"] = overrides["offline_responder"]
    return config


_VARIANT_OPTIONS = [
    click.option("--no-user-clustering", is_flag=True, help="Ablation: random global neighbors."),
    click.option(
        "--no-intra-cluster-sim", is_flag=True, help="Ablation: random same-cluster neighbors."
    ),
    click.option("--no-doc-ranking", is_flag=True, help="Ablation: ingestion-order documents."),
    click.option("--centroids-only", is_flag=True, help="Ablation: centroid-represented profiles."),
    click.option("--use-kmeans", is_flag=True, help="Ablation: k-means user clustering."),
]


def _with_variants(fn):
    for option in reversed(_VARIANT_OPTIONS):
        fn = option(fn)
    return fn


@click.group()
@click.option("--server", default=None, help="Engine service URL (default: run in-process).")
@click.pass_context
def main(ctx: click.Context, server: str | None):
    """Cohort-based collaborative retrieval engine.

    All subcommands read a YAML config file with these fields:

    \b
    corpus.documents          documents.jsonl path (required)
    corpus.embeddings         embeddings.bin path
    corpus.queries            queries.jsonl path
    corpus.query_embeddings   query embeddings.bin path
    artifacts_dir             where artifacts and results land
    mode                      user_only | collaborative | hybrid
    k / m / b                 similar users, docs per prompt, clusters probed
    k_max / m_max             sweep ceilings (neighbor table depth)
    scorer                    pooled_cosine | late_interaction_maxsim
    ranker.kind               dense_cosine | maxsim | bm25 | recency | random
    ranker.bm25_k1 / bm25_b   BM25 parameters (1.2 / 0.75)
    ranker.seed / now         random-ranker seed, recency reference time
    user_clustering.*         min_cluster_size, min_samples, kmeans_k,
                              kmeans_max_iter, seed
    doc_clustering.*          same knobs for per-query document clustering
    budget.l_max / gamma      prompt budget (512 / 0.55)
    budget.output_cap         generation length cap (128)
    budget.tokenizer          whitespace | subword (+ budget.vocab_path)
    generation.endpoint_url   text-generation endpoint
    generation.timeout / max_retries / max_output_tokens / beam_size
    generation.max_in_flight  concurrent request limit
    generation.offline_responder
                              echo_prompt_hash | copy_first_profile_tag
                              | fixed_text (answers engine-side, no network)
    variants.*                no_user_clustering, no_intra_cluster_sim,
                              no_doc_ranking, centroids_only, use_kmeans
    sweep.k_list / m_list     values for the sweep subcommand
    seed                      master seed for seeded components
    """
    ctx.obj = server


@main.command()
@click.option("-c", "--config", "config_path", required=True, type=click.Path(exists=True))
@_with_variants
@click.pass_obj
def build(server, config_path, **variants):
    """Ingest the corpus, cluster users, and persist artifacts."""
    config = _apply_overrides(_load_config_dict(config_path), **variants)
    body = ApiClient(server).call("POST", "/build", {"config": config})
    click.echo(
        f"users: {body['user_count']}  clusters: {body['cluster_count']}"
        f"  outliers: {body['outlier_count']}  silhouette: "
        + (f"{body['silhouette']:.4f}" if body["silhouette"] is not None else "n/a")
    )
    click.echo(f"artifacts: {', '.join(sorted(body['manifest']))}")


@main.command()
@click.option("-c", "--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--dry-run", is_flag=True, help="Stop after prompt rendering; no generation.")
@click.option("--mode", type=click.Choice(["user_only", "collaborative", "hybrid"]))
@click.option("--k", type=int, default=None, help="Similar users per query.")
@click.option("--m", type=int, default=None, help="Documents per prompt.")
@click.option("--b", type=int, default=None, help="Clusters probed in stage 1.")
@click.option("--ranker", type=click.Choice(["dense_cosine", "maxsim", "bm25", "recency", "random"]))
@click.option("--offline-responder", type=click.Choice(["echo_prompt_hash", "copy_first_profile_tag", "fixed_text"]))
@click.option("--baseline", type=click.Path(exists=True), help="Baseline results.jsonl for significance.")
@click.option("--output-dir", type=click.Path(), help="Where to write results/traces.")
@_with_variants
@click.pass_obj
def run(server, config_path, dry_run, baseline, output_dir, **overrides):
    """Retrieve, prompt, generate, and score every query."""
    config = _apply_overrides(_load_config_dict(config_path), **overrides)
    body = ApiClient(server).call(
        "POST",
        "/run",
        {
            "config": config,
            "dry_run": dry_run,
            "baseline_results": baseline,
            "output_dir": output_dir,
        },
    )
    click.echo(f"queries: {body['n_queries']}")
    for report in body["reports"]:
        metrics = "  ".join(f"{k}={v:.4f}" for k, v in report["metrics"].items())
        click.echo(f"{report['task_id']}: {metrics}  (n={report['n']})")
    for sig in body["significance"]:
        for metric, test in sig["tests"].items():
            click.echo(
                f"{sig['task_id']} {metric}: {test['test']} p={test['p_value']:.4g}"
            )
    if body["results_path"]:
        click.echo(f"results: {body['results_path']}")
    if body["traces_path"]:
        click.echo(f"traces: {body['traces_path']}")


@main.command()
@click.argument("results_path", type=click.Path(exists=True))
@click.option("--baseline", type=click.Path(exists=True), help="Second results.jsonl to compare.")
@click.option("--csv", "as_csv", is_flag=True, help="Emit CSV instead of the text table.")
@click.pass_obj
def report(server, results_path, baseline, as_csv):
    """Format metric tables from persisted results."""
    body = ApiClient(server).call(
        "POST", "/report", {"results_path": results_path, "baseline_path": baseline}
    )
    click.echo(body["csv"] if as_csv else body["text"], nl=False)


@main.command()
@click.option("-c", "--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--k-list", default=None, help="Override sweep k values, e.g. '1..5' or '1,3,5'.")
@click.option("--m-list", default=None, help="Override sweep m values, e.g. '1..12'.")
@click.option("--dry-run", is_flag=True)
@click.pass_obj
def sweep(server, config_path, k_list, m_list, dry_run):
    """Re-run the evaluation across k and m values."""
    config = _load_config_dict(config_path)
    sweep_cfg = config.setdefault("sweep", {})
    if k_list is not None:
        sweep_cfg["k_list"] = _parse_int_list(k_list)
    if m_list is not None:
        sweep_cfg["m_list"] = _parse_int_list(m_list)
    body = ApiClient(server).call("POST", "/sweep", {"config": config, "dry_run": dry_run})
    for row in body["rows"]:
        fixed = {k: v for k, v in row.items() if k not in ("param", "value")}
        rendered = "  ".join(
            f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in fixed.items()
        )
        click.echo(f"{row['param']}={row['value']}: {rendered}")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8321, type=int)
def serve(host, port):
    """Start the engine HTTP service."""
    import uvicorn

    from .api import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
