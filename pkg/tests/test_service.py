"""HTTP session API: lifecycle, wire contract, eviction, interleaving."""

import pytest
from fastapi.testclient import TestClient

from consultnav.config import AppConfig
from consultnav.domain import CaseSequence, write_cases
from consultnav.engine import ScriptedCoreConfig, start_session
from consultnav.errors import SessionExpiredError, UnknownSessionError
from consultnav.service import SessionRegistry, create_app


def service_corpus(tmp_path, n=6):
    # Identical case content under distinct ids: scripted sessions behave the
    # same no matter which id the round-robin hands out.
    cases = [
        CaseSequence(f"svc-{i}", (10, 11, 12, 13), gold_critical={10, 11},
                     gold_all={10, 11, 12, 13})
        for i in range(n)
    ]
    path = tmp_path / "eval.jsonl"
    write_cases(cases, path)
    return path


@pytest.fixture()
def client(tmp_path):
    config = AppConfig(
        corpus_eval=service_corpus(tmp_path),
        checkpoint_path=tmp_path / "no-checkpoint.ckpt",
    )
    return TestClient(create_app(config))


@pytest.fixture()
def stubborn_client(tmp_path):
    # Off-script from turn 1 on: the asked set never grows, so the core never
    # concludes and every session runs into the hard turn limit.
    config = AppConfig(
        corpus_eval=service_corpus(tmp_path),
        checkpoint_path=tmp_path / "no-checkpoint.ckpt",
        scripted=ScriptedCoreConfig(offscript_period=1),
    )
    return TestClient(create_app(config))


class TestSessionLifecycle:
    def test_health(self, client):
        body = client.get("/api/v1/health").json()
        assert body == {"status": "ok", "vocab_size": 83}

    def test_create_returns_first_question(self, client):
        response = client.post("/api/v1/sessions", json={"mode": "interactive"})
        assert response.status_code == 201
        body = response.json()
        assert set(body) == {"session_id", "question", "turn", "status"}
        assert body["turn"] == 0
        assert body["status"] == "active"
        assert body["question"]

    def test_answer_flow_until_conclusion(self, client):
        session_id = client.post("/api/v1/sessions", json={}).json()["session_id"]
        turns_seen = [0]
        while True:
            response = client.post(f"/api/v1/sessions/{session_id}/answer", json={"answer": "yes"})
            assert response.status_code == 200
            body = response.json()
            if body["status"] != "active":
                assert body["status"] in ("concluded", "turn-limit")
                assert "conclusion" in body
                assert "question" not in body
                break
            turns_seen.append(body["turn"])
            assert body["question"]
            assert 1 <= len(body["candidates"]) <= 6
            assert all(set(c) == {"text", "source"} for c in body["candidates"])
        assert turns_seen == sorted(turns_seen)

    def test_thirty_answers_hit_turn_limit(self, stubborn_client):
        session_id = stubborn_client.post("/api/v1/sessions", json={}).json()["session_id"]
        last = None
        for _ in range(30):
            response = stubborn_client.post(
                f"/api/v1/sessions/{session_id}/answer", json={"answer": "no"}
            )
            assert response.status_code == 200
            last = response.json()
            if last["status"] != "active":
                break
        assert last["status"] == "turn-limit"
        assert last["conclusion"]
        transcript = stubborn_client.get(f"/api/v1/sessions/{session_id}").json()
        assert len(transcript["turns"]) == 30

    def test_transcript_schema(self, client):
        session_id = client.post("/api/v1/sessions", json={}).json()["session_id"]
        client.post(f"/api/v1/sessions/{session_id}/answer", json={"answer": "yes"})
        transcript = client.get(f"/api/v1/sessions/{session_id}").json()
        assert set(transcript) == {"session_id", "status", "turns", "conclusion"}
        assert transcript["session_id"] == session_id
        assert transcript["turns"][0]["answer"] == "yes"

    def test_delete_then_unknown(self, client):
        session_id = client.post("/api/v1/sessions", json={}).json()["session_id"]
        assert client.delete(f"/api/v1/sessions/{session_id}").status_code == 204
        assert client.get(f"/api/v1/sessions/{session_id}").status_code == 404

    def test_unknown_session_error_body(self, client):
        response = client.post("/api/v1/sessions/nope/answer", json={"answer": "x"})
        assert response.status_code == 404
        assert response.json()["error"] == "unknown_session"

    def test_unknown_request_fields_rejected(self, client):
        assert client.post("/api/v1/sessions", json={"mode": "interactive", "x": 1}).status_code == 422
        session_id = client.post("/api/v1/sessions", json={}).json()["session_id"]
        response = client.post(
            f"/api/v1/sessions/{session_id}/answer", json={"answer": "y", "bogus": True}
        )
        assert response.status_code == 422

    def test_answer_after_close_conflicts(self, client):
        session_id = client.post("/api/v1/sessions", json={}).json()["session_id"]
        while True:
            body = client.post(f"/api/v1/sessions/{session_id}/answer", json={"answer": "yes"}).json()
            if body["status"] != "active":
                break
        response = client.post(f"/api/v1/sessions/{session_id}/answer", json={"answer": "yes"})
        assert response.status_code == 409
        assert response.json()["error"] == "session_closed"


class TestInterleaving:
    def test_interleaved_sessions_match_serial_execution(self, client):
        def run_serial():
            sid = client.post("/api/v1/sessions", json={}).json()["session_id"]
            while True:
                body = client.post(f"/api/v1/sessions/{sid}/answer", json={"answer": "yes"}).json()
                if body["status"] != "active":
                    return client.get(f"/api/v1/sessions/{sid}").json()

        def strip(transcript):
            return [(t["inquiry"], t["answer"], t["source"]) for t in transcript["turns"]]

        serial = strip(run_serial())

        ids = [client.post("/api/v1/sessions", json={}).json()["session_id"] for _ in range(2)]
        done = {sid: None for sid in ids}
        while any(v is None for v in done.values()):
            for sid in ids:
                if done[sid] is None:
                    body = client.post(f"/api/v1/sessions/{sid}/answer", json={"answer": "yes"}).json()
                    if body["status"] != "active":
                        done[sid] = client.get(f"/api/v1/sessions/{sid}").json()
        for transcript in done.values():
            assert strip(transcript) == serial


class TestRegistry:
    def test_idle_eviction_gives_distinct_error(self, default_vocab):
        clock = {"now": 0.0}
        registry = SessionRegistry(idle_seconds=60.0, clock=lambda: clock["now"])

        class NullCore:
            def propose_inquiry(self, transcript):
                return "Heartburn?"

            def select_inquiry(self, transcript, candidates):
                return 0

            def should_terminate(self, transcript):
                return False

            def final_conclusion(self, transcript):
                return "done"

        session = start_session(NullCore(), default_vocab, session_id="s1")
        registry.add(session)
        assert registry.access("s1").session is session

        clock["now"] = 61.0
        with pytest.raises(SessionExpiredError):
            registry.access("s1")
        with pytest.raises(UnknownSessionError):
            registry.access("never-existed")

    def test_access_refreshes_idle_timer(self, default_vocab):
        clock = {"now": 0.0}
        registry = SessionRegistry(idle_seconds=60.0, clock=lambda: clock["now"])

        class NullCore:
            def propose_inquiry(self, transcript):
                return "Heartburn?"

            def select_inquiry(self, transcript, candidates):
                return 0

            def should_terminate(self, transcript):
                return False

            def final_conclusion(self, transcript):
                return "done"

        registry.add(start_session(NullCore(), default_vocab, session_id="s1"))
        for t in (50.0, 100.0, 150.0):
            clock["now"] = t
            registry.access("s1")
        clock["now"] = 211.0
        with pytest.raises(SessionExpiredError):
            registry.access("s1")
