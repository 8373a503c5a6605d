"""Density-based and centroid-based clustering over embedding matrices.

The density path follows the standard pipeline: core distances at
``min_samples``, mutual-reachability distances, an exact Prim's minimum
spanning tree (O(n^2), affordable at desk scale), a single-linkage
hierarchy, a condensed tree at ``min_cluster_size``, and excess-of-mass
cluster extraction. Points left unselected are noise and are collected
into a dedicated outlier cluster.

One deliberate deviation from the usual excess-of-mass behavior: when
extraction selects nothing at all (a single uniform mode, e.g. all points
identical) and the input is at least ``min_cluster_size`` points, the
whole input becomes one cluster instead of all-noise. Multi-mode inputs
never hit this path.

The centroid path is seeded k-means++ with Lloyd iterations to an
assignment fixpoint; it never produces outliers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import EmbeddingMatrix
from .errors import ValidationError

OUTLIER_CLUSTER_ID = -1

_CHUNK = 512


@dataclass
class ClusterParams:
    """Knobs for both clustering algorithms; seed controls k-means init."""

    min_cluster_size: int = 5
    min_samples: int | None = None  # defaults to min_cluster_size
    kmeans_k: int | None = None
    kmeans_max_iter: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.min_cluster_size < 2:
            raise ValidationError("min_cluster_size must be >= 2")
        if self.min_samples is not None and self.min_samples < 1:
            raise ValidationError("min_samples must be >= 1")

    @property
    def effective_min_samples(self) -> int:
        return self.min_samples if self.min_samples is not None else self.min_cluster_size

    def to_payload(self) -> dict:
        return {
            "min_cluster_size": self.min_cluster_size,
            "min_samples": self.min_samples,
            "kmeans_k": self.kmeans_k,
            "kmeans_max_iter": self.kmeans_max_iter,
            "seed": self.seed,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "ClusterParams":
        return cls(**payload)


@dataclass
class ClusterModel:
    """A partition of items plus per-cluster centroids.

    Every item belongs to exactly one cluster; noise lives under
    ``outlier_cluster_id``. Centroids are arithmetic means of member rows
    (``None`` for clusters whose members carry no vectors).
    """

    algo: str  # "hdbscan" | "kmeans"
    params: ClusterParams
    item_ids: list[str]
    assignments: dict[str, int]
    clusters: dict[int, list[str]]
    centroids: dict[int, np.ndarray | None]
    outlier_cluster_id: int = OUTLIER_CLUSTER_ID

    @classmethod
    def from_labels(
        cls,
        matrix: EmbeddingMatrix,
        labels: np.ndarray,
        algo: str,
        params: ClusterParams,
        extra_outliers: list[str] | None = None,
    ) -> "ClusterModel":
        """Assemble the model from per-row labels (-1 meaning noise).

        ``extra_outliers`` are items with no vector at all; they join the
        outlier cluster and leave its centroid untouched unless some of
        its members do have vectors.
        """
        assignments: dict[str, int] = {}
        clusters: dict[int, list[str]] = {}
        for item_id, label in zip(matrix.id_order, labels):
            label = int(label)
            assignments[item_id] = label
            clusters.setdefault(label, []).append(item_id)
        for item_id in extra_outliers or []:
            assignments[item_id] = OUTLIER_CLUSTER_ID
            clusters.setdefault(OUTLIER_CLUSTER_ID, []).append(item_id)
        for members in clusters.values():
            members.sort()
        centroids: dict[int, np.ndarray | None] = {}
        for cid, members in clusters.items():
            rows = [matrix.row(m) for m in members if m in matrix]
            if rows:
                centroids[cid] = np.mean(np.stack(rows), axis=0, dtype=np.float64).astype(
                    np.float32
                )
            else:
                centroids[cid] = None
        item_ids = list(matrix.id_order) + list(extra_outliers or [])
        return cls(
            algo=algo,
            params=params,
            item_ids=item_ids,
            assignments=assignments,
            clusters={cid: clusters[cid] for cid in sorted(clusters)},
            centroids=centroids,
        )

    @property
    def cluster_ids(self) -> list[int]:
        return sorted(self.clusters)

    @property
    def regular_cluster_ids(self) -> list[int]:
        return [c for c in self.cluster_ids if c != self.outlier_cluster_id]

    def members(self, cluster_id: int) -> list[str]:
        return self.clusters.get(cluster_id, [])

    def cluster_of(self, item_id: str) -> int:
        return self.assignments[item_id]

    def to_payload(self) -> dict:
        return {
            "algo": self.algo,
            "params": self.params.to_payload(),
            "assignments": self.assignments,
            "outlier_cluster_id": self.outlier_cluster_id,
            "centroids": {
                str(cid): (None if vec is None else [float(x) for x in vec])
                for cid, vec in self.centroids.items()
            },
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "ClusterModel":
        assignments = {k: int(v) for k, v in payload["assignments"].items()}
        clusters: dict[int, list[str]] = {}
        for item_id, cid in assignments.items():
            clusters.setdefault(cid, []).append(item_id)
        for members in clusters.values():
            members.sort()
        centroids = {
            int(cid): (None if vec is None else np.asarray(vec, dtype=np.float32))
            for cid, vec in payload["centroids"].items()
        }
        return cls(
            algo=payload["algo"],
            params=ClusterParams.from_payload(payload["params"]),
            item_ids=sorted(assignments),
            assignments=assignments,
            clusters={cid: clusters[cid] for cid in sorted(clusters)},
            centroids=centroids,
            outlier_cluster_id=int(payload["outlier_cluster_id"]),
        )


# ── density clustering internals ────────────────────────────────────

def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between rows of a and rows of b."""
    a2 = np.einsum("ij,ij->i", a, a)
    b2 = np.einsum("ij,ij->i", b, b)
    sq = a2[:, None] - 2.0 * (a @ b.T) + b2[None, :]
    np.maximum(sq, 0.0, out=sq)
    return sq


def _core_distances(x: np.ndarray, min_samples: int) -> np.ndarray:
    """Distance to the min_samples-th nearest neighbor, self included."""
    n = x.shape[0]
    k = min(min_samples, n) - 1  # 0-based index into the sorted row
    core = np.empty(n, dtype=np.float64)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        sq = _sq_dists(x[start:stop], x)
        core[start:stop] = np.sqrt(np.partition(sq, k, axis=1)[:, k])
    return core


def _mst_edges(x: np.ndarray, core: np.ndarray) -> np.ndarray:
    """Prim's MST over mutual-reachability distances, one row at a time.

    Returns an (n-1, 3) float array of (from, to, distance) edges. Memory
    stays O(n): the full distance matrix is never materialized.
    """
    n = x.shape[0]
    x2 = np.einsum("ij,ij->i", x, x)
    in_tree = np.zeros(n, dtype=bool)
    min_reach = np.full(n, np.inf)
    sources = np.zeros(n, dtype=np.int64)
    edges = np.empty((n - 1, 3), dtype=np.float64)
    current = 0
    for i in range(n - 1):
        in_tree[current] = True
        sq = x2[current] - 2.0 * (x @ x[current]) + x2
        np.maximum(sq, 0.0, out=sq)
        reach = np.sqrt(sq)
        np.maximum(reach, core, out=reach)
        reach = np.maximum(reach, core[current])
        better = reach < min_reach
        min_reach[better] = reach[better]
        sources[better] = current
        masked = np.where(in_tree, np.inf, min_reach)
        nxt = int(np.argmin(masked))
        edges[i] = (sources[nxt], nxt, masked[nxt])
        current = nxt
    return edges


def _single_linkage(edges: np.ndarray, n: int) -> np.ndarray:
    """Union-find conversion of sorted MST edges to a dendrogram.

    Row i merges two existing clusters into new node n+i; columns are
    (left, right, distance, size), scipy-style.
    """
    order = np.argsort(edges[:, 2], kind="stable")
    parent = np.full(2 * n - 1, -1, dtype=np.int64)
    size = np.ones(2 * n - 1, dtype=np.int64)
    out = np.empty((n - 1, 4), dtype=np.float64)

    def find(node: int) -> int:
        root = node
        while parent[root] != -1:
            root = parent[root]
        while parent[node] != -1:
            parent[node], node = root, parent[node]
        return root

    next_label = n
    for row, idx in enumerate(order):
        a = find(int(edges[idx, 0]))
        b = find(int(edges[idx, 1]))
        out[row] = (a, b, edges[idx, 2], size[a] + size[b])
        parent[a] = parent[b] = next_label
        size[next_label] = size[a] + size[b]
        next_label += 1
    return out


def _bfs_hierarchy(hierarchy: np.ndarray, start: int) -> list[int]:
    n = hierarchy.shape[0] + 1
    queue = [start]
    result = []
    while queue:
        result.extend(queue)
        queue = [
            child
            for node in queue
            if node >= n
            for child in (int(hierarchy[node - n, 0]), int(hierarchy[node - n, 1]))
        ]
    return result


def _condense_tree(hierarchy: np.ndarray, min_cluster_size: int) -> list[tuple[int, int, float, int]]:
    """Prune the dendrogram into (parent, child, lambda, size) rows.

    Children smaller than ``min_cluster_size`` dissolve into their parent
    as individual points; a node with two large children spawns two new
    cluster ids.
    """
    n = hierarchy.shape[0] + 1
    root = 2 * n - 2
    next_label = n + 1
    relabel = np.empty(root + 1, dtype=np.int64)
    relabel[root] = n
    ignore = np.zeros(root + 1, dtype=bool)
    rows: list[tuple[int, int, float, int]] = []

    for node in _bfs_hierarchy(hierarchy, root):
        if ignore[node] or node < n:
            continue
        left, right, dist, _ = hierarchy[node - n]
        left, right = int(left), int(right)
        lam = 1.0 / dist if dist > 0.0 else np.inf
        left_count = int(hierarchy[left - n, 3]) if left >= n else 1
        right_count = int(hierarchy[right - n, 3]) if right >= n else 1

        if left_count >= min_cluster_size and right_count >= min_cluster_size:
            relabel[left] = next_label
            rows.append((int(relabel[node]), next_label, lam, left_count))
            next_label += 1
            relabel[right] = next_label
            rows.append((int(relabel[node]), next_label, lam, right_count))
            next_label += 1
        elif left_count < min_cluster_size and right_count < min_cluster_size:
            for side in (left, right):
                for sub in _bfs_hierarchy(hierarchy, side):
                    if sub < n:
                        rows.append((int(relabel[node]), sub, lam, 1))
                    ignore[sub] = True
        else:
            keep, scatter = (right, left) if left_count < min_cluster_size else (left, right)
            relabel[keep] = relabel[node]
            for sub in _bfs_hierarchy(hierarchy, scatter):
                if sub < n:
                    rows.append((int(relabel[node]), sub, lam, 1))
                ignore[sub] = True
    return rows


def _eom_select(rows: list[tuple[int, int, float, int]], n: int) -> list[int]:
    """Excess-of-mass cluster selection over the condensed tree (root excluded)."""
    births: dict[int, float] = {child: lam for _, child, lam, _ in rows}
    births[n] = 0.0  # root
    stability: dict[int, float] = {}
    for parent, _, lam, size in rows:
        stability[parent] = stability.get(parent, 0.0) + (lam - births[parent]) * size
    cluster_children: dict[int, list[int]] = {}
    for parent, child, _, size in rows:
        if size > 1:
            cluster_children.setdefault(parent, []).append(child)
            stability.setdefault(child, 0.0)

    node_list = sorted(stability, reverse=True)[:-1]  # drop the root
    is_cluster = {node: True for node in node_list}
    for node in node_list:
        subtree = sum(stability[c] for c in cluster_children.get(node, []))
        if subtree > stability[node]:
            is_cluster[node] = False
            stability[node] = subtree
        else:
            queue = list(cluster_children.get(node, []))
            while queue:
                sub = queue.pop()
                if sub in is_cluster:
                    is_cluster[sub] = False
                queue.extend(cluster_children.get(sub, []))
    return sorted(node for node, keep in is_cluster.items() if keep)


def hdbscan_labels(points: np.ndarray, min_cluster_size: int, min_samples: int) -> np.ndarray:
    """Density-cluster raw points; returns labels with -1 for noise."""
    x = np.ascontiguousarray(points, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        raise ValidationError("cannot cluster zero points")
    if n == 1:
        return np.full(1, -1 if min_cluster_size > 1 else 0, dtype=np.int64)

    core = _core_distances(x, min_samples)
    edges = _mst_edges(x, core)
    hierarchy = _single_linkage(edges, n)
    rows = _condense_tree(hierarchy, min_cluster_size)
    selected = _eom_select(rows, n)

    labels = np.full(n, -1, dtype=np.int64)
    if selected:
        label_of = {cid: i for i, cid in enumerate(selected)}
        parent_of = {child: parent for parent, child, _, _ in rows}
        selected_set = set(selected)
        for point in range(n):
            node = parent_of.get(point)
            while node is not None:
                if node in selected_set:
                    labels[point] = label_of[node]
                    break
                node = parent_of.get(node)
    elif n >= min_cluster_size:
        # single uniform mode: treat the whole input as one cluster
        labels[:] = 0
    return labels


def hdbscan(points: EmbeddingMatrix, params: ClusterParams) -> ClusterModel:
    """Density clustering of an embedding matrix into a ClusterModel."""
    if points.count == 0:
        raise ValidationError("cannot cluster an empty matrix")
    labels = hdbscan_labels(
        points.data, params.min_cluster_size, params.effective_min_samples
    )
    return ClusterModel.from_labels(points, labels, "hdbscan", params)


# ── k-means ─────────────────────────────────────────────────────────

def kmeans_labels(
    points: np.ndarray, k: int, max_iter: int, seed: int
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Seeded k-means++ init plus Lloyd iterations to a fixpoint.

    Returns (labels, centers, inertia history). Empty clusters keep their
    previous center, which preserves the non-increasing inertia property.
    """
    x = np.ascontiguousarray(points, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"kmeans_k must be in 1..{n}, got {k}")
    rng = np.random.default_rng(seed)

    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    centers[0] = x[int(rng.integers(n))]
    closest = _sq_dists(x, centers[:1]).ravel()
    for i in range(1, k):
        total = float(closest.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers[i] = x[idx]
        np.minimum(closest, _sq_dists(x, centers[i : i + 1]).ravel(), out=closest)

    labels = np.full(n, -1, dtype=np.int64)
    history: list[float] = []
    for _ in range(max_iter):
        sq = _sq_dists(x, centers)
        new_labels = np.argmin(sq, axis=1)
        history.append(float(sq[np.arange(n), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = x[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    return labels, centers, history


def kmeans(points: EmbeddingMatrix, params: ClusterParams) -> ClusterModel:
    """Centroid clustering; requires ``params.kmeans_k``; no outliers."""
    if params.kmeans_k is None:
        raise ValidationError("kmeans requires kmeans_k to be set")
    labels, _, _ = kmeans_labels(
        points.data, params.kmeans_k, params.kmeans_max_iter, params.seed
    )
    return ClusterModel.from_labels(points, labels, "kmeans", params)


# ── silhouette ──────────────────────────────────────────────────────

def silhouette(points: EmbeddingMatrix, model: ClusterModel) -> float:
    """Mean of (b - a) / max(a, b) over points in non-outlier clusters.

    Singleton-cluster points contribute 0. Raises unless at least two
    eligible clusters exist.
    """
    eligible = [
        cid for cid in model.regular_cluster_ids if len(model.members(cid)) >= 1
    ]
    if len(eligible) < 2:
        raise ValidationError("silhouette requires at least two non-outlier clusters")

    member_rows = {
        cid: np.stack([points.row(m) for m in model.members(cid)]).astype(np.float64)
        for cid in eligible
    }
    scores: list[float] = []
    for cid in eligible:
        rows = member_rows[cid]
        if rows.shape[0] == 1:
            scores.append(0.0)
            continue
        within = np.sqrt(_sq_dists(rows, rows))
        a = within.sum(axis=1) / (rows.shape[0] - 1)
        b = np.full(rows.shape[0], np.inf)
        for other in eligible:
            if other == cid:
                continue
            cross = np.sqrt(_sq_dists(rows, member_rows[other]))
            np.minimum(b, cross.mean(axis=1), out=b)
        denom = np.maximum(a, b)
        s = np.where(denom > 0.0, (b - a) / np.where(denom == 0.0, 1.0, denom), 0.0)
        scores.extend(float(v) for v in s)
    return float(np.mean(scores))
