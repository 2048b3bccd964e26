"""HTTP surface."""
import pytest
from fastapi.testclient import TestClient

from app.api.routes import scenarios as scenario_routes
from app.core.config import settings
from app.core.errors import SessionAborted
from app.main import app

TINY = {
    "name": "tiny",
    "mu_signal": 4.0,
    "linewidth_hz": 0.0,
    "n_pulses": 4000,
    "sample_fraction": 0.25,
    "seed": 12,
}


@pytest.fixture
def client():
    with TestClient(app) as c:
        yield c


def test_health(client):
    body = client.get("/api/health").json()
    assert body["status"] == "healthy"
    assert body["version"] == settings.APP_VERSION
    assert body["sweep_workers"] >= 1


def test_list_scenarios(client):
    assert "delayed-11km" in client.get("/api/scenarios").json()


def test_run_inline_scenario(client):
    response = client.post("/api/scenarios/run", json=TINY)
    assert response.status_code == 200
    body = response.json()
    assert body["scenario"] == "tiny"
    assert body["n_pulses"] == 4000
    assert body["mu_eff"] == pytest.approx(4.0)
    assert [p["group"] for p in body["peaks"]] == ["coincidence-bit0", "coincidence-bit1", "anti-coincidence"]


def test_run_is_deterministic(client):
    first = client.post("/api/scenarios/run", json=TINY).json()
    second = client.post("/api/scenarios/run?transport=socket", json=TINY).json()
    assert first == second


@pytest.mark.parametrize("body", [
    {**TINY, "received_power_dbm": -47.0},
    {**TINY, "n_pulses": 0},
    {**TINY, "unknown": 1},
])
def test_invalid_scenario(client, body):
    assert client.post("/api/scenarios/run", json=body).status_code == 422


def test_unknown_transport(client):
    assert client.post("/api/scenarios/run?transport=smoke", json=TINY).status_code == 422


def test_aborted_session_is_a_conflict(client, monkeypatch):
    async def aborted(*args, **kwargs):
        raise SessionAborted("empty_sample: empty sifted key")
    monkeypatch.setattr(scenario_routes, "simulate_scenario", aborted)
    response = client.post("/api/scenarios/run", json=TINY)
    assert response.status_code == 409
    assert "empty_sample" in response.json()["detail"]


def test_theoretical_qber(client):
    body = client.get("/api/qber/theoretical", params={"mu_eff": 1.0}).json()
    assert body["qber"] == pytest.approx(0.02275, rel=1e-3)
    assert body["conclusive_fraction"] == 1.0


def test_theoretical_qber_with_threshold(client):
    body = client.get("/api/qber/theoretical", params={"mu_eff": 1.0, "q0": 1.0}).json()
    assert body["qber"] < 0.02275
    assert 0 < body["conclusive_fraction"] < 1


def test_theoretical_qber_rejects_negative_mu(client):
    assert client.get("/api/qber/theoretical", params={"mu_eff": -1.0}).status_code == 422
