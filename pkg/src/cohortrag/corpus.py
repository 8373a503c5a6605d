"""Corpus ingestion, the embedding container, and artifact persistence.

File formats:

* ``documents.jsonl`` — one JSON object per line with keys ``doc_id``,
  ``user_id``, ``text`` and optional ``paired_output``, ``timestamp``.
* ``queries.jsonl`` — keys ``query_id``, ``user_id``, ``input_text``,
  optional ``gold_output``, and ``task_id``.
* ``embeddings.bin`` — magic ``CRAGEMB1``, little-endian u32 count and
  dim, then per record: u32 id length, UTF-8 id bytes, dim f32 values.
* ``manifest.json`` — artifact name -> ``{path, sha256, version}``.

Artifacts are written with write-then-rename atomicity and verified by
SHA-256 on reload.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ArtifactIOError, CorruptArtifact, IngestError

EMBEDDINGS_MAGIC = b"CRAGEMB1"


class TaskId(str, Enum):
    """Personalization task families; each selects a template and metric set."""

    LAMP1 = "LAMP1"  # citation choice, binary classification
    LAMP2 = "LAMP2"  # movie tagging, 15-way classification
    LAMP3 = "LAMP3"  # product rating, ordinal 1..5
    LAMP4 = "LAMP4"  # news headline generation
    LAMP5 = "LAMP5"  # scholarly title generation
    LAMP7 = "LAMP7"  # tweet paraphrase
    SYNTH = "SYNTH"  # synthetic tag classification for benchmarks


CLASSIFICATION_TASKS = {TaskId.LAMP1, TaskId.LAMP2, TaskId.SYNTH}
ORDINAL_TASKS = {TaskId.LAMP3}
GENERATION_TASKS = {TaskId.LAMP4, TaskId.LAMP5, TaskId.LAMP7}

# the 15 movie tags, also reused by the synthetic tag task
TAG_CLASSES = [
    "sci-fi",
    "based on a book",
    "comedy",
    "action",
    "twist ending",
    "dystopia",
    "dark comedy",
    "classic",
    "psychology",
    "fantasy",
    "romance",
    "thought-provoking",
    "social commentary",
    "violence",
    "true story",
]


@dataclass(frozen=True)
class Document:
    """One profile entry owned by a user."""

    doc_id: str
    user_id: str
    text: str
    paired_output: str | None = None
    timestamp: int | None = None
    embedding_ref: int | None = None


@dataclass(frozen=True)
class QueryInstance:
    """One evaluation instance: a user-issued input and optional gold output."""

    query_id: str
    user_id: str
    input_text: str
    gold_output: str | None
    task_id: TaskId


class EmbeddingMatrix:
    """Row-major float32 matrix with an id per row.

    Rows are immutable after construction; ``dim`` is shared corpus-wide.
    """

    def __init__(self, data: np.ndarray, id_order: list[str]):
        data = np.ascontiguousarray(data, dtype=np.float32)
        if data.ndim != 2:
            raise IngestError(f"embedding data must be 2-D, got shape {data.shape}")
        if len(id_order) != data.shape[0]:
            raise IngestError(
                f"id count {len(id_order)} does not match row count {data.shape[0]}"
            )
        if data.shape[0] > 0 and not np.all(np.isfinite(data)):
            bad = [id_order[i] for i in np.nonzero(~np.isfinite(data).all(axis=1))[0][:3]]
            raise IngestError(f"non-finite embedding values for ids {bad}")
        if len(set(id_order)) != len(id_order):
            seen: set[str] = set()
            for i in id_order:
                if i in seen:
                    raise IngestError(f"duplicate embedding id {i!r}")
                seen.add(i)
        data.setflags(write=False)
        self.data = data
        self.id_order = list(id_order)
        self._row_of = {item_id: i for i, item_id in enumerate(id_order)}

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._row_of

    def row_index(self, item_id: str) -> int:
        return self._row_of[item_id]

    def row(self, item_id: str) -> np.ndarray:
        return self.data[self._row_of[item_id]]


def write_embeddings(path: str | Path, matrix: EmbeddingMatrix) -> None:
    """Write the bit-exact binary embedding format."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(EMBEDDINGS_MAGIC)
        fh.write(struct.pack("<II", matrix.count, matrix.dim))
        for i, item_id in enumerate(matrix.id_order):
            id_bytes = item_id.encode("utf-8")
            fh.write(struct.pack("<I", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(matrix.data[i].astype("<f4").tobytes())
    os.replace(tmp, path)


def read_embeddings(path: str | Path) -> EmbeddingMatrix:
    """Read the binary embedding format, validating structure."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:8] != EMBEDDINGS_MAGIC:
        raise IngestError(f"{path}: not an embeddings file (bad magic)")
    count, dim = struct.unpack_from("<II", raw, 8)
    if dim == 0:
        raise IngestError(f"{path}: embedding dim must be positive")
    offset = 16
    ids: list[str] = []
    rows = np.empty((count, dim), dtype=np.float32)
    for i in range(count):
        if offset + 4 > len(raw):
            raise IngestError(f"{path}: truncated record {i}")
        (id_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        if offset + id_len + 4 * dim > len(raw):
            raise IngestError(f"{path}: truncated record {i}")
        ids.append(raw[offset : offset + id_len].decode("utf-8"))
        offset += id_len
        rows[i] = np.frombuffer(raw, dtype="<f4", count=dim, offset=offset)
        offset += 4 * dim
    if offset != len(raw):
        raise IngestError(f"{path}: {len(raw) - offset} trailing bytes after last record")
    return EmbeddingMatrix(rows, ids)


class CorpusHandle:
    """Immutable view over ingested documents, queries, and embeddings."""

    def __init__(
        self,
        documents: dict[str, Document],
        profiles: dict[str, list[str]],
        embeddings: EmbeddingMatrix,
        queries: dict[str, QueryInstance],
        query_embeddings: EmbeddingMatrix | None = None,
        ingest_order: list[str] | None = None,
    ):
        self.documents = documents
        self.profiles = profiles
        self.embeddings = embeddings
        self.queries = queries
        self.query_embeddings = query_embeddings
        self.ingest_order = ingest_order or list(documents)
        self._ingest_index = {d: i for i, d in enumerate(self.ingest_order)}

    @property
    def dim(self) -> int:
        return self.embeddings.dim

    def document(self, doc_id: str) -> Document:
        return self.documents[doc_id]

    def ingest_index(self, doc_id: str) -> int:
        return self._ingest_index[doc_id]

    def profile(self, user_id: str) -> list[str]:
        return self.profiles.get(user_id, [])

    def doc_embedding(self, doc_id: str) -> np.ndarray | None:
        if doc_id in self.embeddings:
            return self.embeddings.row(doc_id)
        return None

    def query_embedding(self, query_id: str) -> np.ndarray | None:
        if self.query_embeddings is not None and query_id in self.query_embeddings:
            return self.query_embeddings.row(query_id)
        return None


def _read_jsonl(path: Path) -> list[tuple[int, dict]]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            if not isinstance(obj, dict):
                raise IngestError(f"{path}:{lineno}: expected a JSON object")
            records.append((lineno, obj))
    return records


def _parse_document(path: Path, lineno: int, obj: dict) -> Document:
    for key in ("doc_id", "user_id", "text"):
        if key not in obj or not isinstance(obj[key], str):
            raise IngestError(f"{path}:{lineno}: missing or non-string field {key!r}")
    if not obj["text"]:
        raise IngestError(f"{path}:{lineno}: document {obj['doc_id']!r} has empty text")
    timestamp = obj.get("timestamp")
    if timestamp is not None:
        if not isinstance(timestamp, int) or isinstance(timestamp, bool) or timestamp < 0:
            raise IngestError(
                f"{path}:{lineno}: timestamp must be a non-negative integer, got {timestamp!r}"
            )
    paired = obj.get("paired_output")
    if paired is not None and not isinstance(paired, str):
        raise IngestError(f"{path}:{lineno}: paired_output must be a string")
    return Document(
        doc_id=obj["doc_id"],
        user_id=obj["user_id"],
        text=obj["text"],
        paired_output=paired,
        timestamp=timestamp,
    )


def _parse_query(path: Path, lineno: int, obj: dict) -> QueryInstance:
    for key in ("query_id", "user_id", "input_text", "task_id"):
        if key not in obj or not isinstance(obj[key], str):
            raise IngestError(f"{path}:{lineno}: missing or non-string field {key!r}")
    try:
        task = TaskId(obj["task_id"])
    except ValueError:
        raise IngestError(
            f"{path}:{lineno}: unknown task_id {obj['task_id']!r}"
        ) from None
    gold = obj.get("gold_output")
    if gold is not None and not isinstance(gold, str):
        raise IngestError(f"{path}:{lineno}: gold_output must be a string")
    return QueryInstance(
        query_id=obj["query_id"],
        user_id=obj["user_id"],
        input_text=obj["input_text"],
        gold_output=gold,
        task_id=task,
    )


def ingest_corpus(
    documents_path: str | Path,
    embeddings_path: str | Path | None,
    queries_path: str | Path | None = None,
    query_embeddings_path: str | Path | None = None,
) -> CorpusHandle:
    """Load and cross-validate corpus files.

    Every embedding id must name an existing document; documents without
    embeddings stay usable for sparse retrieval. Query embeddings live in a
    second file of the same format keyed by query id.
    """
    documents_path = Path(documents_path)
    documents: dict[str, Document] = {}
    profiles: dict[str, list[str]] = {}
    for lineno, obj in _read_jsonl(documents_path):
        doc = _parse_document(documents_path, lineno, obj)
        if doc.doc_id in documents:
            raise IngestError(f"{documents_path}:{lineno}: duplicate doc_id {doc.doc_id!r}")
        documents[doc.doc_id] = doc
        profiles.setdefault(doc.user_id, []).append(doc.doc_id)

    if embeddings_path is not None:
        embeddings = read_embeddings(embeddings_path)
    else:
        embeddings = EmbeddingMatrix(np.empty((0, 1), dtype=np.float32), [])
    for item_id in embeddings.id_order:
        if item_id not in documents:
            raise IngestError(
                f"embedding id {item_id!r} has no matching document"
            )
    # attach row references
    for item_id in embeddings.id_order:
        doc = documents[item_id]
        documents[item_id] = Document(
            doc_id=doc.doc_id,
            user_id=doc.user_id,
            text=doc.text,
            paired_output=doc.paired_output,
            timestamp=doc.timestamp,
            embedding_ref=embeddings.row_index(item_id),
        )

    queries: dict[str, QueryInstance] = {}
    if queries_path is not None:
        queries_path = Path(queries_path)
        for lineno, obj in _read_jsonl(queries_path):
            query = _parse_query(queries_path, lineno, obj)
            if query.query_id in queries:
                raise IngestError(
                    f"{queries_path}:{lineno}: duplicate query_id {query.query_id!r}"
                )
            queries[query.query_id] = query

    query_embeddings = None
    if query_embeddings_path is not None:
        query_embeddings = read_embeddings(query_embeddings_path)
        if query_embeddings.count and embeddings.count and query_embeddings.dim != embeddings.dim:
            raise IngestError(
                f"query embedding dim {query_embeddings.dim} != document dim {embeddings.dim}"
            )
        for query_id in query_embeddings.id_order:
            if query_id not in queries:
                raise IngestError(f"query embedding id {query_id!r} has no matching query")

    return CorpusHandle(
        documents=documents,
        profiles=profiles,
        embeddings=embeddings,
        queries=queries,
        query_embeddings=query_embeddings,
        ingest_order=list(documents),
    )


# ── artifact persistence ────────────────────────────────────────────

def canonical_json_bytes(payload: object) -> bytes:
    """Deterministic JSON encoding used for artifacts and hashing."""
    return (json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def persist_state(directory: str | Path, artifacts: dict[str, object]) -> dict:
    """Write artifact payloads plus a manifest; returns the manifest.

    Each artifact is JSON-encoded canonically and written atomically
    (write temp file, then rename). The manifest records a SHA-256 per
    artifact so tampering is detected on reload.
    """
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ArtifactIOError(directory, exc) from exc
    manifest: dict[str, dict] = {}
    for name, payload in sorted(artifacts.items()):
        if payload is None:
            raise CorruptArtifact(f"artifact {name!r} has not been computed")
        data = canonical_json_bytes(payload)
        target = directory / f"{name}.json"
        tmp = directory / f"{name}.json.tmp"
        try:
            tmp.write_bytes(data)
            os.replace(tmp, target)
        except OSError as exc:
            raise ArtifactIOError(target, exc) from exc
        manifest[name] = {
            "path": target.name,
            "sha256": _sha256(data),
            "version": __version__,
        }
    manifest_bytes = canonical_json_bytes(manifest)
    tmp = directory / "manifest.json.tmp"
    try:
        tmp.write_bytes(manifest_bytes)
        os.replace(tmp, directory / "manifest.json")
    except OSError as exc:
        raise ArtifactIOError(directory / "manifest.json", exc) from exc
    return manifest


def load_state(directory: str | Path, names: list[str] | None = None) -> dict[str, object]:
    """Reload artifact payloads listed in the manifest, verifying hashes."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise CorruptArtifact(f"no manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    loaded: dict[str, object] = {}
    for name, meta in manifest.items():
        if names is not None and name not in names:
            continue
        path = directory / meta["path"]
        if not path.exists():
            raise CorruptArtifact(f"artifact {name!r} missing at {path}")
        data = path.read_bytes()
        if _sha256(data) != meta["sha256"]:
            raise CorruptArtifact(f"artifact {name!r} failed its hash check at {path}")
        loaded[name] = json.loads(data.decode("utf-8"))
    if names is not None:
        missing = [n for n in names if n not in loaded]
        if missing:
            raise CorruptArtifact(f"artifacts {missing} not present in manifest")
    return loaded
