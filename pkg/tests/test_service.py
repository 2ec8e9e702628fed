import threading

import pytest
from fastapi.testclient import TestClient

from icdrr.config import load_config
from icdrr.retrieval import save_index
from icdrr.service import create_app


def _wait(client):
    assert client.app.state.icdrr.ready.wait(30)


@pytest.fixture
def app_client(fixture_table, fixture_index):
    cfg = load_config(env={})
    app = create_app(cfg, loader=lambda c: (fixture_index, fixture_table))
    with TestClient(app) as client:
        _wait(client)
        yield client


def test_health(app_client, fixture_table):
    resp = app_client.get("/health")
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok", "index_docs": len(fixture_table)}


def test_retrieve(app_client):
    resp = app_client.post("/v1/retrieve", json={"query": "Asthma", "k": 15})
    assert resp.status_code == 200
    body = resp.json()
    assert len(body["candidates"]) <= 15
    assert [c["rank"] for c in body["candidates"]] == list(range(1, len(body["candidates"]) + 1))


def test_retrieve_identical_across_app_instances(fixture_table, fixture_index, tmp_path):
    path = tmp_path / "f.idx"
    save_index(fixture_index, path)
    from icdrr.retrieval import load_index

    outs = []
    for _ in range(2):
        app = create_app(load_config(env={}), loader=lambda c: (load_index(path), fixture_table))
        with TestClient(app) as client:
            _wait(client)
            outs.append(client.post("/v1/retrieve", json={"query": "fracture of right acetabulum"}).content)
    assert outs[0] == outs[1]


def test_predict(app_client):
    query = "Poisoning by aspirin, accidental (unintentional), initial encounter"
    resp = app_client.post("/v1/predict", json={"query": query, "scorer": "maxsim"})
    assert resp.status_code == 200
    body = resp.json()
    assert body["chosen"] == "T39011A"
    assert body["candidates"][0]["scorer"] == "maxsim"


@pytest.mark.parametrize("path", ["/v1/predict", "/v1/retrieve"])
def test_empty_query_422(app_client, path):
    assert app_client.post(path, json={"query": ""}).status_code == 422
    assert app_client.post(path, json={"query": " ,, "}).status_code == 422


@pytest.mark.parametrize(
    "content",
    [b"not json", b"[1, 2]", b'{"k": 3}', b'{"query": 5}', b'{"query": "a", "k": 0}',
     b'{"query": "a", "k": true}', b'{"query": "a", "scorer": "dense"}', b'{"query": "a", "extra": 1}'],
)
def test_malformed_body_400(app_client, content):
    resp = app_client.post("/v1/retrieve", content=content, headers={"Content-Type": "application/json"})
    assert resp.status_code == 400


def test_llm_reranker_unconfigured_503(app_client):
    resp = app_client.post("/v1/predict", json={"query": "asthma", "reranker": "llm"})
    assert resp.status_code == 503


def test_llm_reranker_via_service(fixture_table, fixture_index, mock_chat, monkeypatch):
    monkeypatch.setenv("ICDRR_LLM_API_KEY", "k")
    cfg = load_config(env={"ICDRR_LLM_BASE_URL": mock_chat.url})
    mock_chat.script = lambda payload: "T39011A"
    app = create_app(cfg, loader=lambda c: (fixture_index, fixture_table))
    with TestClient(app) as client:
        _wait(client)
        resp = client.post("/v1/predict", json={"query": "aspirin poisoning accidental", "reranker": "llm"})
    assert resp.status_code == 200 and resp.json()["chosen"] == "T39011A"


def test_503_while_loading(fixture_table, fixture_index):
    gate = threading.Event()

    def slow_loader(cfg):
        gate.wait(10)
        return fixture_index, fixture_table

    app = create_app(load_config(env={}), loader=slow_loader)
    with TestClient(app) as client:
        assert client.get("/health").status_code == 503
        assert client.post("/v1/retrieve", json={"query": "asthma"}).status_code == 503
        gate.set()
        _wait(client)
        assert client.get("/health").status_code == 200


def test_failed_load_reported(fixture_table):
    failures = []

    def broken(cfg):
        raise FileNotFoundError("no index")

    app = create_app(load_config(env={}), loader=broken, on_load_failure=failures.append)
    with TestClient(app) as client:
        _wait(client)
        assert client.get("/health").status_code == 503
    assert isinstance(failures[0], FileNotFoundError)
