"""HTTP service wrapping the engine.

Request bodies carry the same configuration mapping the YAML config file
holds; the service validates it and runs the requested pipeline phase.
Errors come back as ``{"error": {"kind", "message", "exit_code"}}`` with
400 for validation problems, 502 for generation-endpoint problems, and
500 for everything else.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import __version__
from .corpus import ingest_corpus
from .errors import (
    EngineError,
    GenerationUnavailable,
    ProtocolError,
    ValidationError,
)
from .pipeline import (
    build_artifacts,
    build_user_records,
    config_from_dict,
    load_artifacts,
    run_eval,
    run_query,
    run_report,
    run_sweep,
)


class HealthResponse(BaseModel):
    status: str
    version: str


class BuildRequest(BaseModel):
    config: dict


class BuildResponse(BaseModel):
    user_count: int
    cluster_count: int | None
    outlier_count: int | None
    silhouette: float | None
    manifest: dict


class RunRequest(BaseModel):
    config: dict
    dry_run: bool = False
    baseline_results: str | None = None
    output_dir: str | None = None


class RunResponse(BaseModel):
    n_queries: int
    reports: list[dict]
    significance: list[dict]
    results_path: str | None
    report_path: str | None
    traces_path: str | None


class ReportRequest(BaseModel):
    results_path: str
    baseline_path: str | None = None


class ReportResponse(BaseModel):
    rows: list[dict]
    csv: str
    text: str


class SweepRequest(BaseModel):
    config: dict
    dry_run: bool = False


class SweepResponse(BaseModel):
    rows: list[dict]


class RetrieveRequest(BaseModel):
    config: dict
    query_id: str


class RetrieveResponse(BaseModel):
    query_id: str
    prompt: dict
    trace: dict


def create_app() -> FastAPI:
    app = FastAPI(title="cohortrag", version=__version__)

    @app.exception_handler(EngineError)
    async def engine_error_handler(_request: Request, exc: EngineError):
        if isinstance(exc, (GenerationUnavailable, ProtocolError)):
            status = 502
        elif exc.exit_code == 1:
            status = 400
        else:
            status = 500
        return JSONResponse(
            status_code=status,
            content={
                "error": {
                    "kind": type(exc).__name__,
                    "message": str(exc),
                    "exit_code": exc.exit_code,
                }
            },
        )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/build", response_model=BuildResponse)
    def build(request: BuildRequest) -> BuildResponse:
        summary = build_artifacts(config_from_dict(request.config))
        return BuildResponse(**summary.to_payload())

    @app.post("/run", response_model=RunResponse)
    def run(request: RunRequest) -> RunResponse:
        config = config_from_dict(request.config)
        result = run_eval(
            config,
            dry_run=request.dry_run,
            baseline_results=request.baseline_results,
            output_dir=request.output_dir,
        )
        return RunResponse(
            n_queries=len(result.outcomes),
            reports=[r.to_payload() for r in result.reports],
            significance=[s.to_payload() for s in result.significance],
            results_path=result.results_path,
            report_path=result.report_path,
            traces_path=result.traces_path,
        )

    @app.post("/report", response_model=ReportResponse)
    def report(request: ReportRequest) -> ReportResponse:
        tables = run_report(request.results_path, request.baseline_path)
        return ReportResponse(rows=tables.rows, csv=tables.csv, text=tables.text)

    @app.post("/sweep", response_model=SweepResponse)
    def sweep(request: SweepRequest) -> SweepResponse:
        config = config_from_dict(request.config)
        return SweepResponse(rows=run_sweep(config, dry_run=request.dry_run))

    @app.post("/retrieve", response_model=RetrieveResponse)
    def retrieve(request: RetrieveRequest) -> RetrieveResponse:
        config = config_from_dict(request.config)
        corpus = ingest_corpus(
            config.documents, config.embeddings, config.queries, config.query_embeddings
        )
        if request.query_id not in corpus.queries:
            raise ValidationError(f"unknown query_id {request.query_id!r}")
        records = build_user_records(corpus)
        clusters, neighbors = load_artifacts(config)
        bundle, trace = run_query(
            corpus.queries[request.query_id],
            corpus,
            records,
            clusters,
            neighbors,
            config,
            config.retrieval_mode(),
        )
        return RetrieveResponse(
            query_id=request.query_id,
            prompt=bundle.to_payload(),
            trace=trace.to_payload(),
        )

    return app


app = create_app()
