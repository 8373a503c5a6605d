"""Intra-cluster user similarity and per-user top-k neighbor lists.

Two scorers ship: cosine over pooled user vectors, and a late-interaction
score over per-document bags where each of u's vectors picks its best
match in v's bag and the sum is normalized by |bag(u)|. The bag score is
deliberately asymmetric; the neighbor table always scores u -> candidate.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .clustering import ClusterModel
from .errors import ValidationError
from .users import UserRecord, unit_rows


class ScorerKind(str, Enum):
    POOLED_COSINE = "pooled_cosine"
    LATE_INTERACTION_MAXSIM = "late_interaction_maxsim"


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; zero-norm vectors score 0 by convention."""
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a.astype(np.float64), b.astype(np.float64)) / (na * nb))


def maxsim(bag_u: np.ndarray, bag_v: np.ndarray) -> float:
    """Normalized late-interaction score from bag_u onto bag_v.

    Rows are unit-normalized first, so each term is a cosine; the mean
    over bag_u keeps scores comparable across profile sizes.
    """
    if bag_u.size == 0 or bag_v.size == 0:
        return 0.0
    a = unit_rows(bag_u.astype(np.float64))
    b = unit_rows(bag_v.astype(np.float64))
    sims = a @ b.T
    return float(sims.max(axis=1).mean())


def score_pair(u: UserRecord, v: UserRecord, scorer: ScorerKind) -> float:
    """Similarity of user u toward user v under the configured scorer."""
    if u.pooled.shape != v.pooled.shape:
        raise ValidationError(
            f"dim mismatch between users {u.user_id!r} and {v.user_id!r}"
        )
    if scorer is ScorerKind.POOLED_COSINE:
        return cosine(u.pooled, v.pooled)
    return maxsim(u.bag, v.bag)


@dataclass
class NeighborTable:
    """Per-user ordered neighbor lists, scoped to the user's cluster."""

    scorer: str
    k_max: int
    table: dict[str, list[tuple[str, float]]]

    def neighbors(self, user_id: str, k: int | None = None) -> list[tuple[str, float]]:
        entries = self.table.get(user_id, [])
        if k is None:
            return list(entries)
        return entries[:k]

    def to_payload(self) -> dict:
        return {
            "scorer": self.scorer,
            "k_max": self.k_max,
            "table": {
                user: [[neighbor, float(score)] for neighbor, score in entries]
                for user, entries in self.table.items()
            },
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "NeighborTable":
        return cls(
            scorer=payload["scorer"],
            k_max=int(payload["k_max"]),
            table={
                user: [(str(n), float(s)) for n, s in entries]
                for user, entries in payload["table"].items()
            },
        )


def build_neighbor_table(
    users: dict[str, UserRecord],
    clusters: ClusterModel,
    scorer: ScorerKind,
    k_max: int,
) -> NeighborTable:
    """Score all same-cluster pairs and keep each user's top k_max.

    Ordering is (score desc, user id asc); self pairs are discarded;
    singleton clusters yield empty lists.
    """
    if k_max < 1:
        raise ValidationError("k_max must be >= 1")
    for user_id in users:
        if user_id not in clusters.assignments:
            raise ValidationError(f"user {user_id!r} has no cluster assignment")

    table: dict[str, list[tuple[str, float]]] = {}
    for cid in clusters.cluster_ids:
        members = [m for m in clusters.members(cid) if m in users]
        if scorer is ScorerKind.POOLED_COSINE and len(members) > 1:
            pooled = unit_rows(
                np.stack([users[m].pooled for m in members]).astype(np.float64)
            )
            sims = pooled @ pooled.T
            for i, user_id in enumerate(members):
                scored = [
                    (float(sims[i, j]), members[j])
                    for j in range(len(members))
                    if j != i
                ]
                scored.sort(key=lambda t: (-t[0], t[1]))
                table[user_id] = [(name, score) for score, name in scored[:k_max]]
            continue
        for user_id in members:
            scored = [
                (score_pair(users[user_id], users[other], scorer), other)
                for other in members
                if other != user_id
            ]
            scored.sort(key=lambda t: (-t[0], t[1]))
            table[user_id] = [(name, score) for score, name in scored[:k_max]]
    return NeighborTable(scorer=scorer.value, k_max=k_max, table=table)


def sample_random_neighbors(
    user_ids: list[str],
    k: int,
    seed: int,
    clusters: ClusterModel | None = None,
) -> NeighborTable:
    """Seeded uniform neighbor sampling without replacement.

    With ``clusters`` given, candidates are restricted to the user's own
    cluster (the ranking-free ablation); otherwise any other user
    qualifies (the clustering-free ablation). Scores are all zero.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    rng = np.random.default_rng(seed)
    table: dict[str, list[tuple[str, float]]] = {}
    for user_id in sorted(user_ids):
        if clusters is not None:
            pool = [m for m in clusters.members(clusters.cluster_of(user_id)) if m != user_id]
        else:
            pool = [u for u in sorted(user_ids) if u != user_id]
        take = min(k, len(pool))
        if take == 0:
            table[user_id] = []
            continue
        if take == 1:
            picks = [int(rng.integers(len(pool)))]
        else:
            picks = rng.choice(len(pool), size=take, replace=False).tolist()
        table[user_id] = [(pool[int(i)], 0.0) for i in picks]
    return NeighborTable(scorer="random", k_max=k, table=table)
