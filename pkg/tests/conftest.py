import json
from pathlib import Path

import numpy as np
import pytest

from cohortrag.corpus import EmbeddingMatrix, ingest_corpus, write_embeddings


def write_jsonl(path: Path, rows: list[dict]) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return path


def make_matrix(vectors: dict[str, list[float]]) -> EmbeddingMatrix:
    ids = list(vectors)
    data = np.array([vectors[i] for i in ids], dtype=np.float32)
    return EmbeddingMatrix(data, ids)


def write_corpus(
    tmp_path: Path,
    docs: list[dict],
    embeddings: dict[str, list[float]] | None = None,
    queries: list[dict] | None = None,
    query_embeddings: dict[str, list[float]] | None = None,
):
    """Write corpus files into tmp_path and return their paths."""
    docs_path = write_jsonl(tmp_path / "documents.jsonl", docs)
    emb_path = None
    if embeddings is not None:
        emb_path = tmp_path / "embeddings.bin"
        write_embeddings(emb_path, make_matrix(embeddings))
    queries_path = None
    if queries is not None:
        queries_path = write_jsonl(tmp_path / "queries.jsonl", queries)
    qemb_path = None
    if query_embeddings is not None:
        qemb_path = tmp_path / "query_embeddings.bin"
        write_embeddings(qemb_path, make_matrix(query_embeddings))
    return docs_path, emb_path, queries_path, qemb_path


@pytest.fixture
def toy_corpus(tmp_path):
    """3 documents for 2 users with a matching 3x4 embedding matrix."""
    docs = [
        {"doc_id": "d1", "user_id": "alice", "text": "first doc", "timestamp": 100},
        {"doc_id": "d2", "user_id": "alice", "text": "second doc", "timestamp": 200},
        {"doc_id": "d3", "user_id": "bob", "text": "third doc", "timestamp": 300},
    ]
    embeddings = {
        "d1": [1.0, 0.0, 0.0, 0.0],
        "d2": [0.0, 1.0, 0.0, 0.0],
        "d3": [0.0, 0.0, 1.0, 0.0],
    }
    paths = write_corpus(tmp_path, docs, embeddings)
    return ingest_corpus(paths[0], paths[1])


def make_handle(
    docs: list[dict],
    embeddings: dict[str, list[float]] | None = None,
    queries: list[dict] | None = None,
    query_embeddings: dict[str, list[float]] | None = None,
):
    """Build a CorpusHandle in memory (no files)."""
    from cohortrag.corpus import CorpusHandle, Document, QueryInstance, TaskId

    documents = {}
    profiles: dict[str, list[str]] = {}
    emb = make_matrix(embeddings) if embeddings else EmbeddingMatrix(
        np.empty((0, 1), dtype=np.float32), []
    )
    for d in docs:
        doc = Document(
            doc_id=d["doc_id"],
            user_id=d["user_id"],
            text=d.get("text", "text"),
            paired_output=d.get("paired_output"),
            timestamp=d.get("timestamp"),
            embedding_ref=emb.row_index(d["doc_id"]) if d["doc_id"] in emb else None,
        )
        documents[doc.doc_id] = doc
        profiles.setdefault(doc.user_id, []).append(doc.doc_id)
    query_map = {}
    for q in queries or []:
        query_map[q["query_id"]] = QueryInstance(
            query_id=q["query_id"],
            user_id=q["user_id"],
            input_text=q["input_text"],
            gold_output=q.get("gold_output"),
            task_id=TaskId(q.get("task_id", "LAMP7")),
        )
    return CorpusHandle(
        documents=documents,
        profiles=profiles,
        embeddings=emb,
        queries=query_map,
        query_embeddings=make_matrix(query_embeddings) if query_embeddings else None,
        ingest_order=[d["doc_id"] for d in docs],
    )


def two_blob_points(seed: int = 0, per_blob: int = 20, radius: float = 0.1):
    """Two planted blobs at (0,0) and (10,10); returns (points, truth)."""
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(per_blob, 2)) * radius
    b = rng.normal(size=(per_blob, 2)) * radius + 10.0
    points = np.vstack([a, b]).astype(np.float32)
    truth = np.array([0] * per_blob + [1] * per_blob)
    return points, truth
