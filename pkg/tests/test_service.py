import time

import pytest
from fastapi.testclient import TestClient

from stratrec.config import RunConfig, ExpertSettings, ServiceSettings, SessionSettings, UserSettings
from stratrec.policy import PolicyParams
from stratrec.service import create_app


def service_config(max_live=4) -> RunConfig:
    return RunConfig(
        session=SessionSettings(turn_cap=5, gamma=0.5, tau=0.8, reward_samples=1, seed=1),
        experts=ExpertSettings(kind="bandit", optimal_strategy="Similarity"),
        user=UserSettings(kind="live", reply_timeout_s=10.0),
        service=ServiceSettings(max_live_sessions=max_live, expose_strategy=True),
    )


@pytest.fixture
def client():
    app = create_app(service_config(), PolicyParams.zeros())
    with TestClient(app) as c:
        yield c


def wait_for_status(client, sid, status, timeout=5.0):
    deadline = time.time() + timeout
    messages = []
    while time.time() < deadline:
        body = client.get(f"/v1/sessions/{sid}", params={"wait_ms": 200}).json()
        messages.extend(body["new_messages"])
        if body["status"] == status:
            return body, messages
    raise AssertionError(f"session never reached {status}; last: {body}")


def test_healthz(client):
    assert client.get("/healthz").json() == {"ok": True}


def test_session_lifecycle_greeting_first(client):
    sid = client.post("/v1/sessions", json={}).json()["session_id"]
    body, messages = wait_for_status(client, sid, "AwaitingUser")
    assert any(m["speaker"] == "system" for m in messages)  # greeting arrived
    assert messages[0]["turn"] == 1

    resp = client.post(f"/v1/sessions/{sid}/messages", json={"text": "hi there"})
    assert resp.json() == {"accepted": True}
    body, _ = wait_for_status(client, sid, "AwaitingUser")

    client.delete(f"/v1/sessions/{sid}")
    body = client.get(f"/v1/sessions/{sid}").json()
    assert body["status"] == "Closed"


def test_post_while_awaiting_system_conflicts(monkeypatch):
    # slow the judge down so the session reliably sits in AwaitingSystem
    import stratrec.service as service_mod
    from stratrec.config import build_expert_suite

    def slow_suite(run_config):
        suite = build_expert_suite(run_config)
        inner = suite.rewarder.backend.complete

        def delayed(prompt):
            time.sleep(0.4)
            return inner(prompt)

        suite.rewarder.backend.complete = delayed
        return suite

    monkeypatch.setattr(service_mod, "build_expert_suite", slow_suite)
    app = create_app(service_config(), PolicyParams.zeros())
    with TestClient(app) as client:
        sid = client.post("/v1/sessions", json={}).json()["session_id"]
        wait_for_status(client, sid, "AwaitingUser")
        assert client.post(f"/v1/sessions/{sid}/messages", json={"text": "a"}).status_code == 200
        resp = client.post(f"/v1/sessions/{sid}/messages", json={"text": "b"})
        assert resp.status_code == 409
        client.delete(f"/v1/sessions/{sid}")


def test_post_to_closed_session_conflicts(client):
    sid = client.post("/v1/sessions", json={}).json()["session_id"]
    wait_for_status(client, sid, "AwaitingUser")
    client.delete(f"/v1/sessions/{sid}")
    resp = client.post(f"/v1/sessions/{sid}/messages", json={"text": "hello"})
    assert resp.status_code == 409


def test_unknown_session_404(client):
    assert client.get("/v1/sessions/nope").status_code == 404


def test_malformed_body_is_structured_422(client):
    sid = client.post("/v1/sessions", json={}).json()["session_id"]
    wait_for_status(client, sid, "AwaitingUser")
    resp = client.post(f"/v1/sessions/{sid}/messages", json={"wrong_field": 1})
    assert resp.status_code == 422
    assert "detail" in resp.json()
    resp = client.post(f"/v1/sessions/{sid}/messages", json={"text": "   "})
    assert resp.status_code == 422


def test_session_cap(client):
    sids = [client.post("/v1/sessions", json={}).json()["session_id"] for _ in range(4)]
    resp = client.post("/v1/sessions", json={})
    assert resp.status_code == 429
    for sid in sids:
        client.delete(f"/v1/sessions/{sid}")
    assert client.post("/v1/sessions", json={}).status_code == 200


def test_two_sessions_progress_independently(client):
    sid_a = client.post("/v1/sessions", json={}).json()["session_id"]
    sid_b = client.post("/v1/sessions", json={}).json()["session_id"]
    wait_for_status(client, sid_a, "AwaitingUser")
    wait_for_status(client, sid_b, "AwaitingUser")
    # interleave: reply in B, then A, then check both advanced
    client.post(f"/v1/sessions/{sid_b}/messages", json={"text": "b says hi"})
    wait_for_status(client, sid_b, "AwaitingUser")
    client.post(f"/v1/sessions/{sid_a}/messages", json={"text": "a says hi"})
    body_a, _ = wait_for_status(client, sid_a, "AwaitingUser")
    trace_a = client.get(f"/v1/sessions/{sid_a}/trace").json()["turns"]
    trace_b = client.get(f"/v1/sessions/{sid_b}/trace").json()["turns"]
    assert len(trace_a) >= 1 and len(trace_b) >= 1
    assert all(r["user_text"] != "b says hi" for r in trace_a)


def test_trace_rows_carry_strategy_and_reward(client):
    sid = client.post("/v1/sessions", json={}).json()["session_id"]
    wait_for_status(client, sid, "AwaitingUser")
    client.post(f"/v1/sessions/{sid}/messages", json={"text": "tell me more"})
    wait_for_status(client, sid, "AwaitingUser")
    rows = client.get(f"/v1/sessions/{sid}/trace").json()["turns"]
    assert len(rows) == 1
    row = rows[0]
    assert row["turn"] == 1
    assert isinstance(row["strategy_name"], str) and row["strategy_name"]
    assert 0.0 <= row["reward"] <= 1.0
    assert "facts" in row and "preference" in row
    client.delete(f"/v1/sessions/{sid}")


def test_strategy_name_hidden_without_debug_flag():
    config = service_config()
    config.service.expose_strategy = False
    app = create_app(config, PolicyParams.zeros())
    with TestClient(app) as client:
        sid = client.post("/v1/sessions", json={}).json()["session_id"]
        _, messages = wait_for_status(client, sid, "AwaitingUser")
        assert all("strategy_name" not in m for m in messages if m["speaker"] == "system")
        client.delete(f"/v1/sessions/{sid}")


def test_auth_token_enforced(monkeypatch):
    monkeypatch.setenv("STRATREC_TEST_TOKEN", "sesame")
    config = service_config()
    config.service.auth_env = "STRATREC_TEST_TOKEN"
    app = create_app(config, PolicyParams.zeros())
    with TestClient(app) as client:
        assert client.post("/v1/sessions", json={}).status_code == 401
        ok = client.post("/v1/sessions", json={}, headers={"Authorization": "Bearer sesame"})
        assert ok.status_code == 200
