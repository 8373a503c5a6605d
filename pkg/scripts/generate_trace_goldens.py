"""Freeze retrieval traces for every pipeline variant flag.

Each variant is run dry over the fixed six-user cohort fixture and its
per-query traces are committed as golden files; the acceptance suite
re-runs the variants and requires byte-equal trace payloads, proving
each flag changes exactly what it is documented to change.
"""

from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "tests"))

from test_pipeline import cohort_fixture  # noqa: E402

from cohortrag.pipeline import build_artifacts, config_from_dict, run_eval  # noqa: E402

GOLDEN_DIR = REPO / "tests" / "golden"

VARIANTS: dict[str, dict] = {
    "baseline": {},
    "no_user_clustering": {"no_user_clustering": True},
    "no_intra_cluster_sim": {"no_intra_cluster_sim": True},
    "no_doc_ranking": {"no_doc_ranking": True},
    "centroids_only": {"centroids_only": True},
    "use_kmeans": {"use_kmeans": True},
}


def collect_traces(tmp_path: Path) -> dict[str, list[dict]]:
    fixture = cohort_fixture(tmp_path)
    traces: dict[str, list[dict]] = {}
    for name, flags in VARIANTS.items():
        raw = dict(fixture["config"])
        raw["artifacts_dir"] = str(tmp_path / f"artifacts_{name}")
        if flags:
            raw["variants"] = dict(flags)
        if flags.get("use_kmeans"):
            raw["user_clustering"] = {"min_cluster_size": 3, "kmeans_k": 2}
        config = config_from_dict(raw)
        build_artifacts(config)
        result = run_eval(config, dry_run=True, write_outputs=False)
        traces[name] = [
            dict(outcome.trace.to_payload(), query_id=outcome.query.query_id)
            for outcome in result.outcomes
        ]
    return traces


def main() -> None:
    GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        traces = collect_traces(Path(tmp))
    for name, payload in traces.items():
        out = GOLDEN_DIR / f"traces_{name}.json"
        out.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
        print(f"{name}: {len(payload)} traces -> {out.name}")


if __name__ == "__main__":
    main()
