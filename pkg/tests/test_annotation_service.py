"""Annotation service: ordering, idempotency, aggregation, HTTP layer,
append-only log."""

import hashlib
import threading

import pytest
from fastapi.testclient import TestClient

from emphtts.annotation_service import (
    AnnotationService,
    ConflictError,
    OrderingError,
    StructuralError,
    UnknownConversationError,
    create_app,
)
from emphtts.corpus import load_annotations
from emphtts.toy import make_toy_corpus

TOKENS = {"tok-ann1": "ann1", "tok-ann2": "ann2"}


@pytest.fixture()
def service(tmp_path):
    convs = make_toy_corpus(3, turns_range=(3, 3), seed=1)
    return AnnotationService(
        conversations=convs,
        log_path=tmp_path / "annotations.jsonl",
        quorum=2,
        registered_annotators={"ann1", "ann2"},
    )


def labels_for(service, cid, turn, symbol="O"):
    conv = service.get_conversation(cid)
    return [symbol] * len(conv.turns[turn - 1].words)


class TestServiceLayer:
    def test_fresh_annotator_all_not_started(self, service):
        listing = service.list_conversations("ann1")
        assert len(listing["conversations"]) == 3
        assert all(c["status"] == "not started" for c in listing["conversations"])

    def test_unknown_annotator_hint(self, service):
        listing = service.list_conversations("stranger")
        assert listing["conversations"] == []
        assert "registered" in listing["hint"]

    def test_progress_after_submissions(self, service):
        cid = service.conversations[0].conversation_id
        service.submit_annotation("ann1", cid, 1, labels_for(service, cid, 1))
        listing = service.list_conversations("ann1")
        entry = next(c for c in listing["conversations"] if c["conversation_id"] == cid)
        assert entry["annotated_turns"] == 1
        assert entry["status"] == "in-progress"

    def test_turns_in_order(self, service):
        payload = service.conversation_payload(service.conversations[0].conversation_id)
        assert [t["turn_index"] for t in payload["turns"]] == [1, 2, 3]
        assert payload["turns"][0]["audio_url"].startswith("/audio/")

    def test_missing_conversation(self, service):
        with pytest.raises(UnknownConversationError):
            service.get_conversation("nope")

    def test_submission_advances_frontier(self, service):
        cid = service.conversations[0].conversation_id
        assert service.task("ann1", cid).next_unannotated_turn == 1
        service.submit_annotation("ann1", cid, 1, labels_for(service, cid, 1))
        assert service.task("ann1", cid).next_unannotated_turn == 2

    def test_out_of_order_rejected(self, service):
        cid = service.conversations[0].conversation_id
        with pytest.raises(OrderingError):
            service.submit_annotation("ann1", cid, 2, labels_for(service, cid, 2))

    def test_wrong_length_rejected(self, service):
        cid = service.conversations[0].conversation_id
        with pytest.raises(StructuralError):
            service.submit_annotation("ann1", cid, 1, ["O"])

    def test_bad_symbol_rejected(self, service):
        cid = service.conversations[0].conversation_id
        bad = labels_for(service, cid, 1)
        bad[0] = "X"
        with pytest.raises(StructuralError):
            service.submit_annotation("ann1", cid, 1, bad)

    def test_duplicate_is_idempotent(self, service):
        cid = service.conversations[0].conversation_id
        labels = labels_for(service, cid, 1)
        first = service.submit_annotation("ann1", cid, 1, labels)
        assert first["status"] == "accepted"
        assert len(load_annotations(service.log_path)) == 1
        again = service.submit_annotation("ann1", cid, 1, labels)
        assert again["status"] == "duplicate"
        assert len(load_annotations(service.log_path)) == 1

    def test_conflicting_resubmission_rejected(self, service):
        cid = service.conversations[0].conversation_id
        service.submit_annotation("ann1", cid, 1, labels_for(service, cid, 1, "O"))
        with pytest.raises(ConflictError):
            service.submit_annotation("ann1", cid, 1, labels_for(service, cid, 1, "I"))

    def test_aggregation_requires_quorum(self, service):
        cid = service.conversations[0].conversation_id
        status = service.aggregation_status(cid)
        assert all(t["annotator_count"] == 0 for t in status["turns"])
        assert all("intensity" not in t for t in status["turns"])
        service.submit_annotation("ann1", cid, 1, labels_for(service, cid, 1, "I"))
        status = service.aggregation_status(cid)
        assert status["turns"][0]["annotator_count"] == 1
        assert "intensity" not in status["turns"][0]  # quorum is 2
        service.submit_annotation("ann2", cid, 1, labels_for(service, cid, 1, "O"))
        status = service.aggregation_status(cid)
        assert status["turns"][0]["intensity"] == [0.5] * len(
            labels_for(service, cid, 1)
        )

    def test_quorum_one_immediate(self, tmp_path):
        convs = make_toy_corpus(1, turns_range=(2, 2), seed=2)
        service = AnnotationService(
            conversations=convs, log_path=tmp_path / "log.jsonl", quorum=1
        )
        cid = convs[0].conversation_id
        labels = ["I"] + ["O"] * (len(convs[0].turns[0].words) - 1)
        service.submit_annotation("solo", cid, 1, labels)
        status = service.aggregation_status(cid)
        assert status["turns"][0]["intensity"][0] == 1.0

    def test_six_annotator_aggregation_matches_table(self, tmp_path):
        convs = make_toy_corpus(1, turns_range=(2, 2), seed=3)
        cid = convs[0].conversation_id
        n_words = len(convs[0].turns[0].words)
        assert n_words >= 2
        service = AnnotationService(
            conversations=convs, log_path=tmp_path / "log.jsonl", quorum=6
        )
        # word 0: five I votes; word 1: one I vote; rest O
        for i in range(6):
            labels = ["O"] * n_words
            if i < 5:
                labels[0] = "I"
            if i == 4:
                labels[1] = "I"
            service.submit_annotation(f"a{i}", cid, 1, labels)
        status = service.aggregation_status(cid)
        intensity = status["turns"][0]["intensity"]
        assert intensity[0] == pytest.approx(5 / 6)
        assert intensity[1] == pytest.approx(1 / 6)

    def test_concurrent_distinct_annotators_both_persist(self, service):
        cid = service.conversations[0].conversation_id
        labels = labels_for(service, cid, 1)
        threads = [
            threading.Thread(
                target=service.submit_annotation, args=(ann, cid, 1, labels)
            )
            for ann in ("ann1", "ann2")
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        recs = load_annotations(service.log_path)
        assert {r.annotator_id for r in recs} == {"ann1", "ann2"}


class TestAppendOnly:
    def test_log_prefix_preserved_across_calls(self, service):
        cid = service.conversations[0].conversation_id
        service.submit_annotation("ann1", cid, 1, labels_for(service, cid, 1))
        before = service.log_path.read_bytes()
        digest = hashlib.sha256(before).hexdigest()
        service.list_conversations("ann1")
        service.aggregation_status(cid)
        service.submit_annotation("ann2", cid, 1, labels_for(service, cid, 1, "I"))
        after = service.log_path.read_bytes()
        assert after[: len(before)] == before
        assert hashlib.sha256(after[: len(before)]).hexdigest() == digest


class TestHttpApi:
    @pytest.fixture()
    def client(self, service):
        return TestClient(create_app(service, TOKENS))

    def _auth(self, token="tok-ann1"):
        return {"Authorization": f"Bearer {token}"}

    def test_requires_token(self, client):
        assert client.get("/conversations").status_code == 401
        assert (
            client.get("/conversations", headers=self._auth("bad")).status_code == 401
        )

    def test_list_and_get(self, client, service):
        resp = client.get("/conversations", headers=self._auth())
        assert resp.status_code == 200
        cid = resp.json()["conversations"][0]["conversation_id"]
        conv = client.get(f"/conversations/{cid}", headers=self._auth())
        assert conv.status_code == 200
        assert [t["turn_index"] for t in conv.json()["turns"]] == [1, 2, 3]

    def test_missing_conversation_404(self, client):
        assert client.get("/conversations/zzz", headers=self._auth()).status_code == 404

    def test_audio_roundtrip(self, client, service):
        cid = service.conversations[0].conversation_id
        resp = client.get(f"/audio/{cid}/1", headers=self._auth())
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "audio/wav"
        assert resp.content[:4] == b"RIFF"

    def test_submit_flow(self, client, service):
        cid = service.conversations[0].conversation_id
        labels = labels_for(service, cid, 1)
        ok = client.post(
            "/annotations",
            headers=self._auth(),
            json={"conversation_id": cid, "turn_index": 1, "labels": labels},
        )
        assert ok.status_code == 200
        assert ok.json()["status"] == "accepted"
        out_of_order = client.post(
            "/annotations",
            headers=self._auth(),
            json={
                "conversation_id": cid,
                "turn_index": 3,
                "labels": labels_for(service, cid, 3),
            },
        )
        assert out_of_order.status_code == 409
        bad_length = client.post(
            "/annotations",
            headers=self._auth(),
            json={"conversation_id": cid, "turn_index": 2, "labels": ["I"]},
        )
        assert bad_length.status_code == 422

    def test_status_endpoint(self, client, service):
        cid = service.conversations[0].conversation_id
        resp = client.get(f"/conversations/{cid}/status", headers=self._auth())
        assert resp.status_code == 200
        assert resp.json()["quorum"] == 2
