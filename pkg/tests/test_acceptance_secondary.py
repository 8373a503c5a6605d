"""Secondary acceptance: the exporter and mock server against the engine.

These tests drive the built embed-tools package (``npm run build`` first)
through its external surfaces only: the embeddings binary format and the
generation wire contract.
"""

import shutil
import socket
import subprocess
import time
from contextlib import closing
from pathlib import Path

import httpx
import pytest

from cohortrag.corpus import ingest_corpus
from cohortrag.pipeline import build_artifacts, config_from_dict, run_eval

from benchmarks import benchmark_config, build_benchmark
from conftest import write_jsonl

REPO = Path(__file__).resolve().parent.parent
CLI_JS = REPO / "embed-tools" / "dist" / "cli.js"

pytestmark = pytest.mark.skipif(
    shutil.which("node") is None or not CLI_JS.exists(),
    reason="embed-tools not built (cd embed-tools && npm install && npm run build)",
)


def run_export(docs_path: Path, out_path: Path, model="hash-64", extra=()):
    return subprocess.run(
        ["node", str(CLI_JS), "export", "--docs", str(docs_path), "--out", str(out_path),
         "--model", model, *extra],
        capture_output=True,
        text=True,
        check=True,
    )


def test_s1_export_ingests_cleanly_and_reexports_identically(tmp_path):
    docs = [
        {"doc_id": f"d{i}", "user_id": f"u{i % 3}", "text": f"document number {i} about topic {i % 4}"}
        for i in range(12)
    ]
    docs_path = write_jsonl(tmp_path / "documents.jsonl", docs)
    out1 = tmp_path / "e1.bin"
    out2 = tmp_path / "e2.bin"
    run_export(docs_path, out1)
    run_export(docs_path, out2)
    assert out1.read_bytes() == out2.read_bytes(), "re-export is not byte-identical"

    corpus = ingest_corpus(docs_path, out1)  # raises on any integrity error
    assert corpus.embeddings.count == 12
    assert corpus.embeddings.dim == 64
    for doc_id in corpus.documents:
        assert corpus.doc_embedding(doc_id) is not None
    print("[PASS] S1 exporter output ingests cleanly; re-export byte-identical")


def _free_port() -> int:
    with closing(socket.socket()) as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture
def mock_server():
    port = _free_port()
    proc = subprocess.Popen(
        ["node", str(CLI_JS), "serve", "--port", str(port), "--behavior", "copy_first_profile_tag"],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
    )
    url = f"http://127.0.0.1:{port}/"
    deadline = time.time() + 10
    while time.time() < deadline:
        try:
            response = httpx.post(url, json={"prompt": "ping"}, timeout=1.0)
            if response.status_code == 200:
                break
        except httpx.HTTPError:
            time.sleep(0.05)
    else:
        proc.kill()
        raise RuntimeError("mock server did not come up")
    yield url
    proc.terminate()
    proc.wait(timeout=5)


def test_s2_live_end_to_end_matches_offline_accuracies(tmp_path, mock_server):
    bench = build_benchmark(tmp_path)
    accuracies = {}
    for channel in ("offline", "live"):
        for name, overrides in (
            ("hybrid", {}),
            ("user_only", {"mode": "user_only"}),
            ("ablation", {"variants": {"no_user_clustering": True}}),
        ):
            raw = benchmark_config(bench, str(tmp_path / f"art_{channel}_{name}"), **overrides)
            if channel == "live":
                raw["generation"] = {
                    "endpoint_url": mock_server,
                    "max_retries": 3,
                    "max_in_flight": 8,
                }
            config = config_from_dict(raw)
            build_artifacts(config)
            result = run_eval(config, write_outputs=False)
            accuracies[(channel, name)] = result.reports[0].metrics["accuracy"]

    for name in ("hybrid", "user_only", "ablation"):
        assert accuracies[("live", name)] == accuracies[("offline", name)], (
            f"{name}: live {accuracies[('live', name)]} != offline {accuracies[('offline', name)]}"
        )
    print(
        "[PASS] S2 live mock-server run reproduces offline accuracies exactly: "
        + ", ".join(f"{n}={accuracies[('offline', n)]:.3f}" for n in ("hybrid", "user_only", "ablation"))
    )
