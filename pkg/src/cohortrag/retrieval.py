"""Candidate gathering, topical doc indexing, and two-stage retrieval.

Retrieval runs in two stages over a per-candidate-set index: the query
embedding is compared against all cluster centroids (always cosine, no
matter which document ranker is configured) and the top ``B`` clusters
are kept; only documents inside those clusters are then scored by the
configured ranker and the top ``m`` survive. Every query leaves a trace
recording exactly how many documents stage 2 touched, which is the audit
surface for the O(K + B*N/K) work bound.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from math import inf, log

import numpy as np

from .clustering import ClusterModel, ClusterParams, hdbscan_labels
from .corpus import CorpusHandle, EmbeddingMatrix
from .errors import EmptyCandidates, ValidationError
from .neighbors import NeighborTable, cosine
from .textutils import normalize_tokens
from .users import UserRecord, unit_rows


class Mode(str, Enum):
    USER_ONLY = "user_only"
    COLLABORATIVE = "collaborative"
    HYBRID = "hybrid"


class RankerKind(str, Enum):
    DENSE_COSINE = "dense_cosine"
    MAXSIM = "maxsim"  # document-level late-interaction proxy
    BM25 = "bm25"
    RECENCY = "recency"
    RANDOM = "random"


@dataclass
class RetrievalMode:
    mode: Mode
    k: int = 1
    m: int = 2
    b: int = 3

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if self.m < 1:
            raise ValidationError("m must be >= 1")
        if self.b < 1:
            raise ValidationError("B must be >= 1")


@dataclass
class RankerConfig:
    kind: RankerKind = RankerKind.DENSE_COSINE
    bm25_k1: float = 1.2
    bm25_b: float = 0.75
    seed: int = 0
    now: int | None = None  # recency reference time; defaults to newest candidate

    def __post_init__(self):
        if self.bm25_k1 <= 0 or self.bm25_b <= 0:
            raise ValidationError("BM25 parameters must be positive")


class Source(str, Enum):
    SELF = "self"
    NEIGHBOR = "neighbor"


@dataclass
class RetrievedDoc:
    doc_id: str
    owner_user_id: str
    score: float
    rank: int
    source: Source


@dataclass
class RetrievalTrace:
    """Per-query audit record; serialized alongside results."""

    mode: str
    k: int
    m: int
    b: int
    ranker: str
    candidate_count: int
    cluster_count: int
    stage1_selected: list[tuple[int, float]]
    stage2_scored_count: int
    results: list[dict]
    short: bool = False
    flags: list[str] = field(default_factory=list)

    def to_payload(self) -> dict:
        return {
            "mode": self.mode,
            "k": self.k,
            "m": self.m,
            "b": self.b,
            "ranker": self.ranker,
            "candidate_count": self.candidate_count,
            "cluster_count": self.cluster_count,
            "stage1_selected": [[int(c), float(s)] for c, s in self.stage1_selected],
            "stage2_scored_count": self.stage2_scored_count,
            "results": self.results,
            "short": self.short,
            "flags": list(self.flags),
        }


@dataclass
class RetrievalResult:
    docs: list[RetrievedDoc]
    trace: RetrievalTrace


def gather_candidates(
    target_user: UserRecord,
    mode: RetrievalMode,
    neighbors: NeighborTable | None,
    corpus: CorpusHandle,
) -> list[str]:
    """Candidate doc ids for one query, ordered own-profile-first.

    user_only takes the target's profile, collaborative the top-k
    neighbors' profiles, hybrid the union. Ownership is unique, so the
    union never duplicates.
    """
    own = list(corpus.profile(target_user.user_id))
    collaborative: list[str] = []
    if mode.mode in (Mode.COLLABORATIVE, Mode.HYBRID):
        if neighbors is None:
            raise ValidationError(f"mode {mode.mode.value} requires a neighbor table")
        for neighbor_id, _ in neighbors.neighbors(target_user.user_id, mode.k):
            collaborative.extend(corpus.profile(neighbor_id))

    if mode.mode is Mode.USER_ONLY:
        candidates = own
    elif mode.mode is Mode.COLLABORATIVE:
        candidates = collaborative
    else:
        candidates = own + collaborative
    if not candidates:
        raise EmptyCandidates(target_user.user_id, mode.mode.value)
    return candidates


@dataclass
class Bm25Stats:
    doc_tf: dict[str, Counter]
    doc_len: dict[str, int]
    df: Counter
    avg_len: float
    n_docs: int


def _build_bm25_stats(candidates: list[str], corpus: CorpusHandle) -> Bm25Stats:
    doc_tf: dict[str, Counter] = {}
    doc_len: dict[str, int] = {}
    df: Counter = Counter()
    for doc_id in candidates:
        tokens = normalize_tokens(corpus.document(doc_id).text)
        tf = Counter(tokens)
        doc_tf[doc_id] = tf
        doc_len[doc_id] = len(tokens)
        df.update(tf.keys())
    total = sum(doc_len.values())
    avg = total / len(candidates) if candidates else 0.0
    return Bm25Stats(doc_tf=doc_tf, doc_len=doc_len, df=df, avg_len=avg, n_docs=len(candidates))


class DocIndex:
    """Cluster-pruned index over one candidate set."""

    def __init__(
        self,
        candidates: list[str],
        corpus: CorpusHandle,
        model: ClusterModel,
        matrix: EmbeddingMatrix | None,
        ranker: RankerConfig,
        target_user_id: str | None = None,
    ):
        self.candidates = candidates
        self.corpus = corpus
        self.model = model
        self.matrix = matrix  # normalized rows for embedded candidates
        self.ranker = ranker
        self.target_user_id = target_user_id
        self.bm25 = _build_bm25_stats(candidates, corpus) if ranker.kind is RankerKind.BM25 else None

    @property
    def cluster_count(self) -> int:
        return len(self.model.clusters)

    def posting_list(self, cluster_id: int) -> list[str]:
        return self.model.members(cluster_id)

    def doc_vector(self, doc_id: str) -> np.ndarray | None:
        if self.matrix is not None and doc_id in self.matrix:
            return self.matrix.row(doc_id)
        return None

    def to_payload(self) -> dict:
        return {
            "candidates": list(self.candidates),
            "ranker": self.ranker.kind.value,
            "clusters": self.model.to_payload(),
            "target_user_id": self.target_user_id,
        }


def build_doc_index(
    candidates: list[str],
    corpus: CorpusHandle,
    params: ClusterParams,
    ranker: RankerConfig,
    target_user_id: str | None = None,
) -> DocIndex:
    """Cluster the candidates topically and build posting lists.

    Candidates without embeddings land in the outlier cluster; they stay
    retrievable by the sparse rankers.
    """
    if not candidates:
        raise EmptyCandidates(target_user_id or "<unknown>", "index")
    embedded = [d for d in candidates if d in corpus.embeddings]
    missing = [d for d in candidates if d not in corpus.embeddings]
    if embedded:
        rows = unit_rows(np.stack([corpus.embeddings.row(d) for d in embedded]))
        matrix = EmbeddingMatrix(rows, embedded)
        labels = hdbscan_labels(
            matrix.data, params.min_cluster_size, params.effective_min_samples
        )
        model = ClusterModel.from_labels(matrix, labels, "hdbscan", params, extra_outliers=missing)
    else:
        matrix = None
        empty = EmbeddingMatrix(np.empty((0, 1), dtype=np.float32), [])
        model = ClusterModel.from_labels(empty, np.empty(0, dtype=np.int64), "hdbscan", params, extra_outliers=missing)
    return DocIndex(
        candidates=list(candidates),
        corpus=corpus,
        model=model,
        matrix=matrix,
        ranker=ranker,
        target_user_id=target_user_id,
    )


# ── per-document scoring ────────────────────────────────────────────

def score_bm25(query_text: str, doc_id: str, index: DocIndex) -> float:
    """Okapi BM25 with idf/length statistics from the candidate set."""
    stats = index.bm25
    if stats is None:
        raise ValidationError("index was not built with BM25 statistics")
    k1 = index.ranker.bm25_k1
    b = index.ranker.bm25_b
    tf = stats.doc_tf[doc_id]
    length = stats.doc_len[doc_id]
    score = 0.0
    for term in set(normalize_tokens(query_text)):
        t = tf.get(term, 0)
        if t == 0:
            continue
        df = stats.df[term]
        idf = log(1.0 + (stats.n_docs - df + 0.5) / (df + 0.5))
        denom = t + k1 * (1.0 - b + b * (length / stats.avg_len if stats.avg_len else 0.0))
        score += idf * (t * (k1 + 1.0)) / denom
    return score


def score_recency(doc_id: str, index: DocIndex, now: int) -> float:
    """Newer documents score higher; missing timestamps sink to -inf."""
    ts = index.corpus.document(doc_id).timestamp
    if ts is None:
        return -inf
    return float(-(now - ts))


def _hash_unit(seed: int, doc_id: str) -> float:
    digest = hashlib.blake2b(f"{seed}:{doc_id}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2.0**64


def _resolve_now(index: DocIndex) -> int:
    if index.ranker.now is not None:
        return index.ranker.now
    stamps = [
        index.corpus.document(d).timestamp
        for d in index.candidates
        if index.corpus.document(d).timestamp is not None
    ]
    return max(stamps) if stamps else 0


def _score_docs(
    doc_ids: list[str],
    index: DocIndex,
    query_embedding: np.ndarray | None,
    query_text: str,
) -> list[tuple[str, float]]:
    """Score docs with the configured ranker; dense rankers skip unembedded docs."""
    kind = index.ranker.kind
    scored: list[tuple[str, float]] = []
    if kind in (RankerKind.DENSE_COSINE, RankerKind.MAXSIM):
        if index.matrix is None:
            raise ValidationError(f"ranker {kind.value} needs embeddings but the index has none")
        if query_embedding is None:
            raise ValidationError(f"ranker {kind.value} requires a query embedding")
        for doc_id in doc_ids:
            vec = index.doc_vector(doc_id)
            if vec is None:
                continue
            scored.append((doc_id, cosine(query_embedding, vec)))
    elif kind is RankerKind.BM25:
        scored = [(d, score_bm25(query_text, d, index)) for d in doc_ids]
    elif kind is RankerKind.RECENCY:
        now = _resolve_now(index)
        scored = [(d, score_recency(d, index, now)) for d in doc_ids]
    else:
        scored = [(d, _hash_unit(index.ranker.seed, d)) for d in doc_ids]
    return scored


def _to_results(
    scored: list[tuple[str, float]], index: DocIndex, m: int
) -> list[RetrievedDoc]:
    ranked = sorted(scored, key=lambda t: (-t[1], t[0]))[:m]
    docs = []
    for rank, (doc_id, score) in enumerate(ranked, start=1):
        owner = index.corpus.document(doc_id).user_id
        source = Source.SELF if owner == index.target_user_id else Source.NEIGHBOR
        docs.append(
            RetrievedDoc(doc_id=doc_id, owner_user_id=owner, score=float(score), rank=rank, source=source)
        )
    return docs


def two_stage_retrieve(
    query_embedding: np.ndarray | None,
    query_text: str,
    index: DocIndex,
    mode: RetrievalMode,
) -> RetrievalResult:
    """Centroid pruning (stage 1) then in-cluster ranking (stage 2).

    With B >= K the pruning is a no-op and the result equals flat
    exhaustive ranking under the same tie rule (score desc, doc id asc).
    """
    cluster_ids = index.model.cluster_ids
    q = None
    if query_embedding is not None:
        q = np.asarray(query_embedding, dtype=np.float32).reshape(-1)

    if mode.b >= len(cluster_ids):
        stage1 = [(cid, 0.0 if q is None else _centroid_score(index, cid, q)) for cid in cluster_ids]
        stage1.sort(key=lambda t: (-t[1], t[0]))
        selected = stage1
    else:
        if q is None:
            raise ValidationError("stage-1 pruning requires a query embedding when B < K")
        stage1 = [(cid, _centroid_score(index, cid, q)) for cid in cluster_ids]
        stage1.sort(key=lambda t: (-t[1], t[0]))
        selected = stage1[: mode.b]

    pool: list[str] = []
    for cid, _ in selected:
        pool.extend(index.posting_list(cid))
    scored = _score_docs(pool, index, q, query_text)
    docs = _to_results(scored, index, mode.m)

    trace = RetrievalTrace(
        mode=mode.mode.value,
        k=mode.k,
        m=mode.m,
        b=mode.b,
        ranker=index.ranker.kind.value,
        candidate_count=len(index.candidates),
        cluster_count=len(cluster_ids),
        stage1_selected=[(cid, score) for cid, score in selected],
        stage2_scored_count=len(pool),
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
    )
    return RetrievalResult(docs=docs, trace=trace)


def _centroid_score(index: DocIndex, cluster_id: int, q: np.ndarray) -> float:
    centroid = index.model.centroids.get(cluster_id)
    if centroid is None:
        return -inf
    return cosine(q, centroid)


def retrieve_centroids_only(
    query_embedding: np.ndarray | None,
    index: DocIndex,
    m: int,
) -> RetrievalResult:
    """Ablation: profile represented by centroids, no per-doc query scoring.

    Each of the top-m clusters by centroid similarity contributes the
    document nearest its own centroid.
    """
    if query_embedding is None:
        raise ValidationError("centroids-only retrieval requires a query embedding")
    q = np.asarray(query_embedding, dtype=np.float32).reshape(-1)
    scored_clusters = sorted(
        ((cid, _centroid_score(index, cid, q)) for cid in index.model.cluster_ids),
        key=lambda t: (-t[1], t[0]),
    )
    docs: list[RetrievedDoc] = []
    for rank, (cid, cscore) in enumerate(scored_clusters[:m], start=1):
        centroid = index.model.centroids.get(cid)
        if centroid is None:
            continue
        best: tuple[float, str] | None = None
        for doc_id in index.posting_list(cid):
            vec = index.doc_vector(doc_id)
            if vec is None:
                continue
            sim = cosine(vec, centroid)
            if best is None or (-sim, doc_id) < (-best[0], best[1]):
                best = (sim, doc_id)
        if best is None:
            continue
        owner = index.corpus.document(best[1]).user_id
        source = Source.SELF if owner == index.target_user_id else Source.NEIGHBOR
        docs.append(
            RetrievedDoc(doc_id=best[1], owner_user_id=owner, score=float(cscore), rank=rank, source=source)
        )
    for new_rank, doc in enumerate(docs, start=1):
        doc.rank = new_rank
    trace = RetrievalTrace(
        mode="centroids_only",
        k=0,
        m=m,
        b=len(index.model.cluster_ids),
        ranker=index.ranker.kind.value,
        candidate_count=len(index.candidates),
        cluster_count=len(index.model.cluster_ids),
        stage1_selected=[(cid, s) for cid, s in scored_clusters[:m]],
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
        short=len(docs) < m,
    )
    return RetrievalResult(docs=docs, trace=trace)
