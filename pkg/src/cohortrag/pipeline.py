"""End-to-end orchestration: build artifacts, run evaluations, report.

A single YAML config drives everything; variant flags reproduce the
ablation pipelines (random neighbors, ranking-free neighbors, unranked
documents, centroids-only profiles, k-means user clustering), and sweep
lists re-run the evaluation across neighbor counts and profile sizes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .clustering import ClusterModel, ClusterParams, hdbscan, kmeans, silhouette
from .corpus import CorpusHandle, QueryInstance, TaskId, canonical_json_bytes, ingest_corpus, load_state, persist_state
from .errors import ConfigError, EmptyCandidates, ValidationError
from .evaluation import EvalRecord, MetricReport, SignificanceReport, make_record, score, significance
from .generation import OFFLINE_RESPONDERS, GenerationClient, GenerationConfig
from .neighbors import NeighborTable, ScorerKind, build_neighbor_table, sample_random_neighbors, score_pair
from .prompts import BudgetPolicy, PromptBundle, SubwordCounter, WhitespaceCounter, render_prompt
from .retrieval import (
    Mode,
    RankerConfig,
    RankerKind,
    RetrievalMode,
    RetrievalResult,
    RetrievalTrace,
    RetrievedDoc,
    Source,
    build_doc_index,
    gather_candidates,
    retrieve_centroids_only,
    two_stage_retrieve,
)
from .users import UserRecord, build_user_records, cold_start_record, unit, user_matrix


@dataclass
class VariantFlags:
    no_user_clustering: bool = False
    no_intra_cluster_sim: bool = False
    no_doc_ranking: bool = False
    centroids_only: bool = False
    use_kmeans: bool = False


@dataclass
class PipelineConfig:
    documents: str = ""
    embeddings: str | None = None
    queries: str | None = None
    query_embeddings: str | None = None
    artifacts_dir: str = "artifacts"
    mode: Mode = Mode.HYBRID
    k: int = 1
    m: int = 2
    b: int = 3
    k_max: int = 5
    m_max: int = 12
    scorer: ScorerKind = ScorerKind.POOLED_COSINE
    ranker: RankerConfig = field(default_factory=RankerConfig)
    user_clustering: ClusterParams = field(default_factory=ClusterParams)
    doc_clustering: ClusterParams = field(default_factory=ClusterParams)
    budget: BudgetPolicy = field(default_factory=BudgetPolicy)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    offline_responder: str | None = None
    variants: VariantFlags = field(default_factory=VariantFlags)
    sweep_k: list[int] = field(default_factory=list)
    sweep_m: list[int] = field(default_factory=list)
    seed: int = 0

    def validate(self) -> None:
        if not self.documents:
            raise ConfigError("corpus.documents path is required")
        if self.variants.centroids_only and self.variants.no_doc_ranking:
            raise ConfigError("centroids_only and no_doc_ranking are mutually exclusive")
        if self.variants.use_kmeans and self.user_clustering.kmeans_k is None:
            raise ConfigError("use_kmeans requires user_clustering.kmeans_k")
        if not 1 <= self.k <= self.k_max:
            raise ConfigError(f"k must lie in 1..k_max ({self.k_max}), got {self.k}")
        if not 1 <= self.m <= self.m_max:
            raise ConfigError(f"m must lie in 1..m_max ({self.m_max}), got {self.m}")
        for value in self.sweep_k:
            if not 1 <= value <= self.k_max:
                raise ConfigError(f"sweep k={value} outside 1..k_max ({self.k_max})")
        for value in self.sweep_m:
            if not 1 <= value <= self.m_max:
                raise ConfigError(f"sweep m={value} outside 1..m_max ({self.m_max})")
        if self.offline_responder is not None and self.offline_responder not in OFFLINE_RESPONDERS:
            raise ConfigError(
                f"unknown offline responder {self.offline_responder!r};"
                f" known: {sorted(OFFLINE_RESPONDERS)}"
            )

    def retrieval_mode(self, k: int | None = None, m: int | None = None) -> RetrievalMode:
        return RetrievalMode(mode=self.mode, k=k or self.k, m=m or self.m, b=self.b)


_CONFIG_SECTIONS = {
    "corpus",
    "artifacts_dir",
    "mode",
    "k",
    "m",
    "b",
    "k_max",
    "m_max",
    "scorer",
    "ranker",
    "user_clustering",
    "doc_clustering",
    "budget",
    "generation",
    "variants",
    "sweep",
    "seed",
}


def _build_cluster_params(raw: dict, seed: int) -> ClusterParams:
    allowed = {"min_cluster_size", "min_samples", "kmeans_k", "kmeans_max_iter", "seed"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown clustering keys: {sorted(unknown)}")
    raw = dict(raw)
    raw.setdefault("seed", seed)
    return ClusterParams(**raw)


def config_from_dict(data: dict) -> PipelineConfig:
    """Build and validate a PipelineConfig from parsed YAML/JSON."""
    unknown = set(data) - _CONFIG_SECTIONS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    seed = int(data.get("seed", 0))
    corpus_cfg = data.get("corpus", {})
    ranker_cfg = dict(data.get("ranker", {}))
    if "kind" in ranker_cfg:
        try:
            ranker_cfg["kind"] = RankerKind(ranker_cfg["kind"])
        except ValueError:
            raise ConfigError(f"unknown ranker kind {ranker_cfg['kind']!r}") from None
    ranker_cfg.setdefault("seed", seed)

    budget_cfg = dict(data.get("budget", {}))
    tokenizer = budget_cfg.pop("tokenizer", "whitespace")
    vocab_path = budget_cfg.pop("vocab_path", None)
    if tokenizer == "whitespace":
        counter = WhitespaceCounter()
    elif tokenizer == "subword":
        if not vocab_path:
            raise ConfigError("budget.tokenizer=subword requires budget.vocab_path")
        counter = SubwordCounter(vocab_path)
    else:
        raise ConfigError(f"unknown tokenizer {tokenizer!r}")

    generation_cfg = dict(data.get("generation", {}))
    offline = generation_cfg.pop("offline_responder", None)

    try:
        mode = Mode(data.get("mode", "hybrid"))
    except ValueError:
        raise ConfigError(f"unknown mode {data.get('mode')!r}") from None
    try:
        scorer = ScorerKind(data.get("scorer", "pooled_cosine"))
    except ValueError:
        raise ConfigError(f"unknown scorer {data.get('scorer')!r}") from None

    sweep = data.get("sweep", {})
    try:
        config = PipelineConfig(
            documents=corpus_cfg.get("documents", ""),
            embeddings=corpus_cfg.get("embeddings"),
            queries=corpus_cfg.get("queries"),
            query_embeddings=corpus_cfg.get("query_embeddings"),
            artifacts_dir=data.get("artifacts_dir", "artifacts"),
            mode=mode,
            k=int(data.get("k", 1)),
            m=int(data.get("m", 2)),
            b=int(data.get("b", 3)),
            k_max=int(data.get("k_max", 5)),
            m_max=int(data.get("m_max", 12)),
            scorer=scorer,
            ranker=RankerConfig(**ranker_cfg),
            user_clustering=_build_cluster_params(data.get("user_clustering", {}), seed),
            doc_clustering=_build_cluster_params(data.get("doc_clustering", {}), seed),
            budget=BudgetPolicy(counter=counter, **budget_cfg),
            generation=GenerationConfig(**generation_cfg),
            offline_responder=offline,
            variants=VariantFlags(**data.get("variants", {})),
            sweep_k=[int(v) for v in sweep.get("k_list", [])],
            sweep_m=[int(v) for v in sweep.get("m_list", [])],
            seed=seed,
        )
    except TypeError as exc:
        raise ConfigError(f"bad config field: {exc}") from exc
    config.validate()
    return config


def load_config(path: str | Path) -> PipelineConfig:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return config_from_dict(data)


# ── build ───────────────────────────────────────────────────────────

@dataclass
class BuildSummary:
    user_count: int
    cluster_count: int | None
    outlier_count: int | None
    silhouette: float | None
    manifest: dict

    def to_payload(self) -> dict:
        return {
            "user_count": self.user_count,
            "cluster_count": self.cluster_count,
            "outlier_count": self.outlier_count,
            "silhouette": self.silhouette,
            "manifest": self.manifest,
        }


def build_artifacts(config: PipelineConfig) -> BuildSummary:
    """Ingest, pool users, cluster, rank neighbors, persist."""
    config.validate()
    corpus = _ingest(config)
    records = build_user_records(corpus)
    if not records:
        raise ValidationError("no user has embedded profile documents; nothing to build")
    matrix = user_matrix(records)

    clusters: ClusterModel | None = None
    sil: float | None = None
    if config.variants.no_user_clustering:
        neighbors = sample_random_neighbors(sorted(records), config.k_max, config.seed)
    else:
        if config.variants.use_kmeans:
            clusters = kmeans(matrix, config.user_clustering)
        else:
            clusters = hdbscan(matrix, config.user_clustering)
        if config.variants.no_intra_cluster_sim:
            neighbors = sample_random_neighbors(
                sorted(records), config.k_max, config.seed, clusters=clusters
            )
        else:
            neighbors = build_neighbor_table(records, clusters, config.scorer, config.k_max)
        if len(clusters.regular_cluster_ids) >= 2:
            sil = silhouette(matrix, clusters)

    artifacts: dict[str, object] = {"neighbors": neighbors.to_payload()}
    if clusters is not None:
        artifacts["clusters"] = clusters.to_payload()
    manifest = persist_state(config.artifacts_dir, artifacts)

    outliers = None
    count = None
    if clusters is not None:
        count = len(clusters.regular_cluster_ids)
        outliers = len(clusters.members(clusters.outlier_cluster_id))
    return BuildSummary(
        user_count=len(records),
        cluster_count=count,
        outlier_count=outliers,
        silhouette=sil,
        manifest=manifest,
    )


def _ingest(config: PipelineConfig) -> CorpusHandle:
    return ingest_corpus(
        config.documents,
        config.embeddings,
        config.queries,
        config.query_embeddings,
    )


def load_artifacts(config: PipelineConfig) -> tuple[ClusterModel | None, NeighborTable]:
    names = ["neighbors"] if config.variants.no_user_clustering else ["neighbors", "clusters"]
    payloads = load_state(config.artifacts_dir, names)
    clusters = None
    if "clusters" in payloads:
        clusters = ClusterModel.from_payload(payloads["clusters"])
    neighbors = NeighborTable.from_payload(payloads["neighbors"])
    return clusters, neighbors


# ── run ─────────────────────────────────────────────────────────────

@dataclass
class QueryOutcome:
    query: QueryInstance
    bundle: PromptBundle
    trace: RetrievalTrace
    record: EvalRecord | None = None


@dataclass
class RunResult:
    outcomes: list[QueryOutcome]
    reports: list[MetricReport]
    significance: list[SignificanceReport]
    results_path: str | None
    report_path: str | None
    traces_path: str | None

    @property
    def records(self) -> list[EvalRecord]:
        return [o.record for o in self.outcomes if o.record is not None]


def _cold_start_user(
    query: QueryInstance,
    corpus: CorpusHandle,
    records: dict[str, UserRecord],
    clusters: ClusterModel | None,
    config: PipelineConfig,
) -> tuple[UserRecord, NeighborTable | None, list[str]]:
    """Resolve a user with no pooled record into a query-derived stand-in.

    The stand-in is assigned to the nearest user cluster by centroid
    similarity and given an ad-hoc neighbor list ranked by the configured
    scorer (all users when no clustering is available).
    """
    flags = ["cold_start"]
    q_emb = corpus.query_embedding(query.query_id)
    if q_emb is None:
        stub = UserRecord(
            user_id=query.user_id,
            doc_ids=[],
            pooled=np.zeros(max(corpus.embeddings.dim, 1), dtype=np.float32),
            bag=np.zeros((0, max(corpus.embeddings.dim, 1)), dtype=np.float32),
            n_u=0,
            cold_start=True,
        )
        return stub, None, flags + ["cold_start_no_embedding"]

    record = cold_start_record(query.user_id, unit(q_emb), dim=None)
    if clusters is not None and clusters.regular_cluster_ids:
        best = None
        for cid in clusters.regular_cluster_ids:
            centroid = clusters.centroids.get(cid)
            if centroid is None:
                continue
            sim = float(np.dot(unit(record.pooled), unit(centroid)))
            if best is None or sim > best[0]:
                best = (sim, cid)
        pool = clusters.members(best[1]) if best else []
    else:
        pool = sorted(records)
    scored = [
        (score_pair(record, records[other], config.scorer), other)
        for other in pool
        if other in records and other != query.user_id
    ]
    scored.sort(key=lambda t: (-t[0], t[1]))
    table = NeighborTable(
        scorer=config.scorer.value,
        k_max=config.k_max,
        table={query.user_id: [(name, s) for s, name in scored[: config.k_max]]},
    )
    return record, table, flags


def _ingestion_order_retrieve(
    candidates: list[str],
    corpus: CorpusHandle,
    target_user_id: str,
    mode: RetrievalMode,
) -> RetrievalResult:
    """The unranked ablation: candidates in ingestion order, cut to m."""
    ordered = sorted(candidates, key=corpus.ingest_index)
    docs = []
    for rank, doc_id in enumerate(ordered[: mode.m], start=1):
        owner = corpus.document(doc_id).user_id
        docs.append(
            RetrievedDoc(
                doc_id=doc_id,
                owner_user_id=owner,
                score=0.0,
                rank=rank,
                source=Source.SELF if owner == target_user_id else Source.NEIGHBOR,
            )
        )
    trace = RetrievalTrace(
        mode=mode.mode.value,
        k=mode.k,
        m=mode.m,
        b=mode.b,
        ranker="ingestion_order",
        candidate_count=len(candidates),
        cluster_count=0,
        stage1_selected=[],
        stage2_scored_count=0,
        results=[
            {
                "doc_id": d.doc_id,
                "owner": d.owner_user_id,
                "score": d.score,
                "rank": d.rank,
                "source": d.source.value,
            }
            for d in docs
        ],
        short=len(docs) < mode.m,
        flags=["no_doc_ranking"],
    )
    return RetrievalResult(docs=docs, trace=trace)


def run_query(
    query: QueryInstance,
    corpus: CorpusHandle,
    records: dict[str, UserRecord],
    clusters: ClusterModel | None,
    neighbors: NeighborTable,
    config: PipelineConfig,
    mode: RetrievalMode,
) -> tuple[PromptBundle, RetrievalTrace]:
    """Gather, index, retrieve, and render for a single query."""
    flags: list[str] = []
    if query.user_id in records:
        user = records[query.user_id]
        table: NeighborTable | None = neighbors
    else:
        user, override, flags_extra = _cold_start_user(query, corpus, records, clusters, config)
        flags.extend(flags_extra)
        table = override if override is not None else neighbors

    try:
        candidates = gather_candidates(user, mode, table, corpus)
    except EmptyCandidates:
        if mode.mode is not Mode.COLLABORATIVE and table is not None:
            fallback = RetrievalMode(mode=Mode.COLLABORATIVE, k=mode.k, m=mode.m, b=mode.b)
            try:
                candidates = gather_candidates(user, fallback, table, corpus)
                flags.append("cold_start_fallback_collaborative")
            except EmptyCandidates:
                candidates = []
        else:
            candidates = []

    q_emb = corpus.query_embedding(query.query_id)
    q_unit = unit(q_emb) if q_emb is not None else None
    if not candidates:
        flags.append("no_candidates")
        bundle = render_prompt(query.task_id, query, [], config.budget, corpus)
        trace = RetrievalTrace(
            mode=mode.mode.value,
            k=mode.k,
            m=mode.m,
            b=mode.b,
            ranker=config.ranker.kind.value,
            candidate_count=0,
            cluster_count=0,
            stage1_selected=[],
            stage2_scored_count=0,
            results=[],
            short=True,
            flags=flags,
        )
        return bundle, trace

    if config.variants.no_doc_ranking:
        result = _ingestion_order_retrieve(candidates, corpus, user.user_id, mode)
    else:
        index = build_doc_index(
            candidates, corpus, config.doc_clustering, config.ranker, target_user_id=user.user_id
        )
        if config.variants.centroids_only:
            result = retrieve_centroids_only(q_unit, index, mode.m)
        else:
            result = two_stage_retrieve(q_unit, query.input_text, index, mode)
    result.trace.flags = flags + result.trace.flags
    bundle = render_prompt(query.task_id, query, result.docs, config.budget, corpus)
    if bundle.degraded:
        result.trace.flags.append("degraded_prompt")
    return bundle, result.trace


def run_eval(
    config: PipelineConfig,
    dry_run: bool = False,
    baseline_results: str | None = None,
    mode: RetrievalMode | None = None,
    output_dir: str | Path | None = None,
    transport=None,
    write_outputs: bool = True,
) -> RunResult:
    """Evaluate every query under the configured pipeline.

    ``dry_run`` stops after prompt rendering; an offline responder
    answers engine-side without any network; otherwise prompts go to the
    configured endpoint. Outputs land in the artifacts directory unless
    ``output_dir`` overrides it.
    """
    config.validate()
    corpus = _ingest(config)
    if not corpus.queries:
        raise ValidationError("no queries to evaluate")
    records = build_user_records(corpus)
    clusters, neighbors = load_artifacts(config)
    mode = mode or config.retrieval_mode()

    outcomes: list[QueryOutcome] = []
    for query_id in sorted(corpus.queries):
        query = corpus.queries[query_id]
        bundle, trace = run_query(query, corpus, records, clusters, neighbors, config, mode)
        outcomes.append(QueryOutcome(query=query, bundle=bundle, trace=trace))

    if not dry_run:
        if config.offline_responder is not None:
            responder = OFFLINE_RESPONDERS[config.offline_responder]
            raws = [responder(o.bundle.prompt_text) for o in outcomes]
        else:
            client = GenerationClient(config.generation, transport=transport)
            try:
                raws = client.generate_many([o.bundle.prompt_text for o in outcomes])
            finally:
                client.close()
        for outcome, raw in zip(outcomes, raws):
            if outcome.query.gold_output is None:
                continue
            outcome.record = make_record(
                outcome.query.query_id,
                outcome.query.task_id,
                outcome.bundle.prompt_text,
                raw,
                outcome.query.gold_output,
                flags=list(outcome.trace.flags),
            )

    reports: list[MetricReport] = []
    by_task: dict[TaskId, list[EvalRecord]] = {}
    for outcome in outcomes:
        if outcome.record is not None:
            by_task.setdefault(outcome.query.task_id, []).append(outcome.record)
    for task_id in sorted(by_task, key=lambda t: t.value):
        reports.append(score(by_task[task_id], task_id))

    sig_reports: list[SignificanceReport] = []
    if baseline_results is not None and by_task:
        baseline_by_task = _load_results(baseline_results)
        for task_id, task_records in sorted(by_task.items(), key=lambda kv: kv[0].value):
            base = baseline_by_task.get(task_id)
            if base:
                sig_reports.append(significance(task_records, base, task_id))

    results_path = report_path = traces_path = None
    if write_outputs:
        out_dir = Path(output_dir) if output_dir is not None else Path(config.artifacts_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        traces_path = str(out_dir / "traces.jsonl")
        with open(traces_path, "w", encoding="utf-8") as fh:
            for outcome in outcomes:
                payload = outcome.trace.to_payload()
                payload["query_id"] = outcome.query.query_id
                fh.write(json.dumps(payload, sort_keys=True) + "\n")
        bundles_path = out_dir / "bundles.jsonl"
        with open(bundles_path, "w", encoding="utf-8") as fh:
            for outcome in outcomes:
                payload = outcome.bundle.to_payload()
                payload["query_id"] = outcome.query.query_id
                fh.write(json.dumps(payload, sort_keys=True) + "\n")
        if any(o.record for o in outcomes):
            results_path = str(out_dir / "results.jsonl")
            with open(results_path, "w", encoding="utf-8") as fh:
                for outcome in outcomes:
                    if outcome.record is not None:
                        fh.write(json.dumps(outcome.record.to_payload(), sort_keys=True) + "\n")
        if reports:
            report_path = str(out_dir / "report.json")
            payload = {
                "reports": [r.to_payload() for r in reports],
                "significance": [s.to_payload() for s in sig_reports],
            }
            Path(report_path).write_bytes(canonical_json_bytes(payload))

    return RunResult(
        outcomes=outcomes,
        reports=reports,
        significance=sig_reports,
        results_path=results_path,
        report_path=report_path,
        traces_path=traces_path,
    )


def _load_results(path: str | Path) -> dict[TaskId, list[EvalRecord]]:
    by_task: dict[TaskId, list[EvalRecord]] = {}
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"results file {path} does not exist")
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = EvalRecord.from_payload(json.loads(line))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValidationError(f"{path}:{lineno}: malformed result line ({exc})") from exc
            by_task.setdefault(record.task_id, []).append(record)
    if not by_task:
        raise ValidationError(f"results file {path} is empty")
    return by_task


# ── report ──────────────────────────────────────────────────────────

_STARS = ((0.001, "***"), (0.01, "**"), (0.05, "*"))


def _stars(p: float) -> str:
    for threshold, mark in _STARS:
        if p < threshold:
            return mark
    return ""


@dataclass
class ReportTables:
    rows: list[dict]
    csv: str
    text: str


def run_report(results_path: str | Path, baseline_path: str | Path | None = None) -> ReportTables:
    """Render metric tables (text and CSV) from persisted results."""
    by_task = _load_results(results_path)
    baseline = _load_results(baseline_path) if baseline_path is not None else None

    rows: list[dict] = []
    for task_id in sorted(by_task, key=lambda t: t.value):
        report = score(by_task[task_id], task_id)
        sig = None
        base_report = None
        if baseline and task_id in baseline:
            base_report = score(baseline[task_id], task_id)
            sig = significance(by_task[task_id], baseline[task_id], task_id)
        for metric, value in report.metrics.items():
            row = {"task": task_id.value, "metric": metric, "value": value}
            if base_report is not None:
                row["baseline"] = base_report.metrics.get(metric)
                row["delta"] = value - base_report.metrics[metric]
                row["stars"] = _significance_stars(sig, metric)
            rows.append(row)

    if baseline is None:
        header = "task,metric,value"
        lines = [header] + [f"{r['task']},{r['metric']},{r['value']:.6f}" for r in rows]
    else:
        header = "task,metric,value,baseline,delta,significance"
        lines = [header] + [
            f"{r['task']},{r['metric']},{r['value']:.6f},{r['baseline']:.6f},"
            f"{r['delta']:+.6f},{r['stars']}"
            for r in rows
        ]
    csv_text = "\n".join(lines) + "\n"

    widths = [10, 12, 12]
    text_lines = [
        f"{'task':<{widths[0]}} {'metric':<{widths[1]}} {'value':>{widths[2]}}"
        + ("  baseline      delta sig" if baseline else "")
    ]
    for r in rows:
        line = f"{r['task']:<{widths[0]}} {r['metric']:<{widths[1]}} {r['value']:>{widths[2]}.4f}"
        if baseline:
            line += f"  {r['baseline']:>8.4f} {r['delta']:>+10.4f} {r['stars']}"
        text_lines.append(line)
    return ReportTables(rows=rows, csv=csv_text, text="\n".join(text_lines) + "\n")


def _significance_stars(sig: SignificanceReport | None, metric: str) -> str:
    if sig is None:
        return ""
    key_map = {
        "accuracy": "accuracy",
        "f1": "accuracy",
        "mae": "abs_error",
        "rmse": "sq_error",
        "rouge1": "rouge1_f",
        "rougeL": "rougeL_f",
    }
    test = sig.tests.get(key_map.get(metric, metric))
    if test is None:
        return ""
    return _stars(test["p_value"])


# ── sweep ───────────────────────────────────────────────────────────

def run_sweep(config: PipelineConfig, dry_run: bool = False, transport=None) -> list[dict]:
    """Re-run the evaluation across the configured k and m lists."""
    if not config.sweep_k and not config.sweep_m:
        raise ConfigError("sweep requires sweep.k_list or sweep.m_list")
    rows: list[dict] = []
    for param, values in (("k", config.sweep_k), ("m", config.sweep_m)):
        for value in values:
            mode = config.retrieval_mode(
                k=value if param == "k" else None,
                m=value if param == "m" else None,
            )
            result = run_eval(config, dry_run=dry_run, mode=mode, transport=transport, write_outputs=False)
            scored_counts = [o.trace.stage2_scored_count for o in result.outcomes]
            row: dict = {
                "param": param,
                "value": value,
                "mean_stage2_scored": float(np.mean(scored_counts)) if scored_counts else 0.0,
            }
            for report in result.reports:
                for metric, metric_value in report.metrics.items():
                    row[f"{report.task_id.value}.{metric}"] = metric_value
            rows.append(row)
    return rows
