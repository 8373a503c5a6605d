"""Regenerate the density-clustering golden fixtures.

Runs scikit-learn's HDBSCAN (the independent reference implementation)
on three fixed planted-blob datasets and freezes points plus labels into
tests/golden/. Committed goldens should only change when the fixtures
change; the test suite never imports scikit-learn.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from sklearn.cluster import HDBSCAN

GOLDEN_DIR = Path(__file__).resolve().parent.parent / "tests" / "golden"

CASES = [
    {"name": "hdbscan_case1", "seed": 11, "blobs": 2, "dims": 4, "counts": [30, 25], "noise": 0},
    {"name": "hdbscan_case2", "seed": 22, "blobs": 4, "dims": 8, "counts": [20, 35, 15, 30], "noise": 8},
    {"name": "hdbscan_case3", "seed": 33, "blobs": 5, "dims": 3, "counts": [12, 18, 25, 9, 16], "noise": 5},
]


def make_points(case: dict) -> np.ndarray:
    rng = np.random.default_rng(case["seed"])
    centers = rng.normal(size=(case["blobs"], case["dims"]))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    centers *= 12.0
    parts = [
        centers[i] + rng.normal(size=(count, case["dims"])) * 0.4
        for i, count in enumerate(case["counts"])
    ]
    if case["noise"]:
        parts.append(rng.uniform(-15, 15, size=(case["noise"], case["dims"])))
    return np.vstack(parts).astype(np.float32)


def main() -> None:
    GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
    for case in CASES:
        points = make_points(case)
        labels = HDBSCAN(min_cluster_size=5, min_samples=5).fit(
            points.astype(np.float64)
        ).labels_
        payload = {
            "name": case["name"],
            "min_cluster_size": 5,
            "min_samples": 5,
            "points": [[float(v) for v in row] for row in points],
            "labels": [int(v) for v in labels],
        }
        out = GOLDEN_DIR / f"{case['name']}.json"
        out.write_text(json.dumps(payload) + "\n", encoding="utf-8")
        n_clusters = int(labels.max()) + 1
        noise = int((labels < 0).sum())
        print(f"{case['name']}: {len(labels)} points, {n_clusters} clusters, {noise} noise")


if __name__ == "__main__":
    main()
