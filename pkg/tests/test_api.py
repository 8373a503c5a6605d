import pytest
from fastapi.testclient import TestClient

from cohortrag.api import create_app

from test_pipeline import cohort_fixture


@pytest.fixture
def client():
    return TestClient(create_app())


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"
    assert "version" in body


def test_build_run_report_flow(client, tmp_path):
    fixture = cohort_fixture(tmp_path)
    build = client.post("/build", json={"config": fixture["config"]})
    assert build.status_code == 200
    body = build.json()
    assert body["user_count"] == 6
    assert body["cluster_count"] == 2

    run = client.post("/run", json={"config": fixture["config"]})
    assert run.status_code == 200
    run_body = run.json()
    assert run_body["n_queries"] == 3
    assert run_body["reports"][0]["metrics"]["accuracy"] == pytest.approx(1.0)

    report = client.post("/report", json={"results_path": run_body["results_path"]})
    assert report.status_code == 200
    assert report.json()["csv"].startswith("task,metric,value")


def test_validation_error_maps_to_400(client):
    response = client.post("/build", json={"config": {"unknown_key": 1}})
    assert response.status_code == 400
    error = response.json()["error"]
    assert error["exit_code"] == 1
    assert "unknown" in error["message"]


def test_run_before_build_is_runtime_error(client, tmp_path):
    fixture = cohort_fixture(tmp_path)
    response = client.post("/run", json={"config": fixture["config"]})
    assert response.status_code == 500
    assert response.json()["error"]["exit_code"] == 2


def test_retrieve_endpoint(client, tmp_path):
    fixture = cohort_fixture(tmp_path)
    client.post("/build", json={"config": fixture["config"]})
    response = client.post(
        "/retrieve", json={"config": fixture["config"], "query_id": "q_a1"}
    )
    assert response.status_code == 200
    body = response.json()
    assert body["query_id"] == "q_a1"
    assert body["trace"]["results"][0]["doc_id"] == "a2_d1"
    assert "action" in body["prompt"]["prompt_text"]


def test_retrieve_unknown_query_400(client, tmp_path):
    fixture = cohort_fixture(tmp_path)
    client.post("/build", json={"config": fixture["config"]})
    response = client.post(
        "/retrieve", json={"config": fixture["config"], "query_id": "nope"}
    )
    assert response.status_code == 400


def test_sweep_endpoint(client, tmp_path):
    fixture = cohort_fixture(tmp_path)
    config = dict(fixture["config"])
    config["sweep"] = {"m_list": [1, 2]}
    client.post("/build", json={"config": config})
    response = client.post("/sweep", json={"config": config})
    assert response.status_code == 200
    rows = response.json()["rows"]
    assert [(r["param"], r["value"]) for r in rows] == [("m", 1), ("m", 2)]
