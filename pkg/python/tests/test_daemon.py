"""Tests for the HTTP experiment service"""

import pytest
from fastapi.testclient import TestClient

from src.config import Settings
from src.daemon import VERSION, create_app


@pytest.fixture
def client(tmp_path):
    return TestClient(create_app(Settings(runs_dir=tmp_path)))


def test_health(client):
    """Test health endpoint"""
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "healthy", "version": VERSION}


def test_root_lists_endpoints(client):
    assert "runs" in client.get("/").json()["endpoints"]


def test_validate(client, s1_doc):
    """Test scenario validation endpoint"""
    response = client.post("/validate", json={"scenario": s1_doc})
    assert response.json() == {"valid": True, "containers": 2, "machines": 1}

    s1_doc["parameters"]["dt"] = -1
    response = client.post("/validate", json={"scenario": s1_doc})
    assert response.status_code == 400
    assert "parameters.dt" in response.json()["detail"]


def test_runs_and_compare(client, s1_doc, tmp_path):
    """Test running both variants and comparing them over HTTP"""
    shaped = client.post("/runs", json={"scenario": s1_doc, "run_id": "shaped"})
    assert shaped.status_code == 200
    body = shaped.json()
    assert body["run_dir"] == str(tmp_path / "shaped")
    assert body["pipes"] == 2
    assert [row["T"] for row in body["timeline"]] == ["1.100000", "1.100000"]
    assert body["never_controlled"] == []
    assert (tmp_path / "shaped" / "throughput.csv").is_file()

    baseline = client.post(
        "/runs",
        json={
            "scenario": s1_doc,
            "run_id": "baseline",
            "overrides": {"shaping_enabled": "false"},
        },
    )
    assert baseline.json()["timeline"] == []

    report = client.post("/compare", json={"baseline": "baseline", "shaped": "shaped"})
    assert report.status_code == 200
    assert report.json()["passed"] is True


def test_generated_run_id(client, s1_doc):
    s1_doc["parameters"]["sim_duration"] = 25
    body = client.post("/runs", json={"scenario": s1_doc}).json()
    assert len(body["run_id"]) == 32


def test_bad_requests(client, s1_doc):
    """Test bad run ids, overrides and unknown runs"""
    escaped = client.post("/runs", json={"scenario": s1_doc, "run_id": "../x"})
    assert escaped.status_code == 400
    bad = client.post(
        "/runs", json={"scenario": s1_doc, "overrides": {"colour": "blue"}}
    )
    assert bad.status_code == 400
    missing = client.post("/compare", json={"baseline": "nope", "shaped": "nada"})
    assert missing.status_code == 404
