"""Pooled user embeddings and the query-derived cold-start fallback.

A user vector is the arithmetic mean of that user's embedded profile
documents. Documents without embeddings are skipped; a user with none
raises :class:`ColdStartRequired` and must go through
:func:`cold_start_record` with a query embedding instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import CorpusHandle, EmbeddingMatrix
from .errors import ColdStartRequired, ValidationError


@dataclass
class UserRecord:
    """A user id, its embedded profile docs, and pooled/bag vectors."""

    user_id: str
    doc_ids: list[str]
    pooled: np.ndarray  # float32, raw arithmetic mean of bag rows
    bag: np.ndarray  # (n_u, dim) float32, profile order
    n_u: int
    cold_start: bool = False


def pool_user(user_id: str, profile_doc_ids: list[str], embeddings: EmbeddingMatrix) -> UserRecord:
    """Average the embedded documents of a profile into one user vector."""
    rows = [embeddings.row(d) for d in profile_doc_ids if d in embeddings]
    kept = [d for d in profile_doc_ids if d in embeddings]
    if not rows:
        raise ColdStartRequired(user_id)
    bag = np.stack(rows).astype(np.float32)
    pooled = bag.mean(axis=0, dtype=np.float64).astype(np.float32)
    return UserRecord(user_id=user_id, doc_ids=kept, pooled=pooled, bag=bag, n_u=len(rows))


def cold_start_record(user_id: str, query_embedding: np.ndarray, dim: int | None = None) -> UserRecord:
    """Stand-in user record whose vector is the current query embedding."""
    vec = np.asarray(query_embedding, dtype=np.float32).reshape(-1)
    if dim is not None and vec.shape[0] != dim:
        raise ValidationError(
            f"cold-start embedding dim {vec.shape[0]} does not match corpus dim {dim}"
        )
    return UserRecord(
        user_id=user_id,
        doc_ids=[],
        pooled=vec,
        bag=vec[np.newaxis, :].copy(),
        n_u=1,
        cold_start=True,
    )


def build_user_records(corpus: CorpusHandle) -> dict[str, UserRecord]:
    """Pool every user that has at least one embedded document."""
    records: dict[str, UserRecord] = {}
    for user_id in sorted(corpus.profiles):
        try:
            records[user_id] = pool_user(user_id, corpus.profile(user_id), corpus.embeddings)
        except ColdStartRequired:
            continue  # handled per query via cold_start_record
    return records


def unit(v: np.ndarray) -> np.ndarray:
    """L2-normalize; the zero vector maps to itself."""
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return v.astype(np.float32)
    return (v / norm).astype(np.float32)


def unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return (matrix / norms).astype(np.float32)


def user_matrix(records: dict[str, UserRecord]) -> EmbeddingMatrix:
    """Normalized pooled vectors as a matrix keyed by user id.

    Normalization happens here, once, so Euclidean clustering distances
    are monotone with cosine similarity downstream.
    """
    user_ids = sorted(records)
    if not user_ids:
        raise ValidationError("no users with embedded profiles to cluster")
    rows = np.stack([records[u].pooled for u in user_ids])
    return EmbeddingMatrix(unit_rows(rows), user_ids)
