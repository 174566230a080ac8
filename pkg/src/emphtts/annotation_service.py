"""Annotation workflow server: serves conversations and audio to the
annotation UI and persists annotator submissions.

Turns must be annotated strictly in conversation order per annotator. The
raw annotation log is append-only: duplicates of an already-logged payload
are acknowledged without a second log line, and conflicting resubmissions
are rejected. Aggregated intensities appear once a turn reaches the
configured annotator quorum.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Request, Response
from pydantic import BaseModel

from .audio import wav_bytes
from .corpus import (
    AnnotationRecord,
    Conversation,
    CorpusError,
    VALID_LABELS,
    aggregate_intensity,
    append_annotation,
    load_annotations,
)

DEFAULT_QUORUM = 6


class AnnotationError(Exception):
    """Base class for annotation workflow violations."""


class UnknownConversationError(AnnotationError):
    pass


class OrderingError(AnnotationError):
    """Submission out of the strict per-annotator conversation order."""


class StructuralError(AnnotationError):
    """Labels do not match the utterance (length or symbols)."""


class ConflictError(AnnotationError):
    """Resubmission of an already-annotated turn with different labels."""


@dataclass
class AnnotationTask:
    annotator_id: str
    conversation_id: str
    next_unannotated_turn: int  # one past the last annotated turn; > turns when done
    status: str  # "not started" | "in-progress" | "complete"


@dataclass
class AnnotationService:
    conversations: list[Conversation]
    log_path: Path
    quorum: int = DEFAULT_QUORUM
    corpus_root: Path | None = None
    registered_annotators: set[str] = field(default_factory=set)

    def __post_init__(self) -> None:
        self.log_path = Path(self.log_path)
        self._by_id = {c.conversation_id: c for c in self.conversations}
        self._write_lock = threading.Lock()
        # (annotator, conversation) -> set of annotated turn indices
        self._annotated: dict[tuple[str, str], dict[int, tuple[str, ...]]] = {}
        for rec in load_annotations(self.log_path):
            self._annotated.setdefault(
                (rec.annotator_id, rec.conversation_id), {}
            )[rec.turn_index] = rec.labels

    # -- queries ------------------------------------------------------------

    def get_conversation(self, conversation_id: str) -> Conversation:
        try:
            return self._by_id[conversation_id]
        except KeyError:
            raise UnknownConversationError(
                f"no conversation {conversation_id!r}"
            ) from None

    def task(self, annotator_id: str, conversation_id: str) -> AnnotationTask:
        conv = self.get_conversation(conversation_id)
        done = self._annotated.get((annotator_id, conversation_id), {})
        next_turn = 1
        while next_turn in done:
            next_turn += 1
        if next_turn > len(conv.turns):
            status = "complete"
        elif done:
            status = "in-progress"
        else:
            status = "not started"
        return AnnotationTask(
            annotator_id=annotator_id,
            conversation_id=conversation_id,
            next_unannotated_turn=next_turn,
            status=status,
        )

    def list_conversations(self, annotator_id: str) -> dict:
        """Conversation summaries with this annotator's progress. Unknown
        annotators get an empty task list and a registration hint."""
        if self.registered_annotators and annotator_id not in self.registered_annotators:
            return {
                "annotator_id": annotator_id,
                "conversations": [],
                "hint": "annotator is not registered; ask the operator to add a token",
            }
        summaries = []
        for conv in self.conversations:
            task = self.task(annotator_id, conv.conversation_id)
            summaries.append(
                {
                    "conversation_id": conv.conversation_id,
                    "turns": len(conv.turns),
                    "annotated_turns": task.next_unannotated_turn - 1,
                    "status": task.status,
                }
            )
        return {"annotator_id": annotator_id, "conversations": summaries}

    def conversation_payload(self, conversation_id: str) -> dict:
        conv = self.get_conversation(conversation_id)
        return {
            "conversation_id": conv.conversation_id,
            "turns": [
                {
                    "turn_index": utt.index,
                    "speaker_id": utt.speaker_id,
                    "text": utt.text,
                    "words": list(utt.words),
                    "audio_url": f"/audio/{conv.conversation_id}/{utt.index}",
                }
                for utt in conv.turns
            ],
        }

    def audio_bytes(self, conversation_id: str, turn_index: int) -> bytes:
        conv = self.get_conversation(conversation_id)
        if not 1 <= turn_index <= len(conv.turns):
            raise UnknownConversationError(
                f"{conversation_id!r} has no turn {turn_index}"
            )
        utt = conv.turns[turn_index - 1]
        if utt.waveform is not None:
            return wav_bytes(utt.waveform)
        if utt.audio_path is not None:
            base = self.corpus_root if self.corpus_root is not None else Path(".")
            return (base / utt.audio_path).read_bytes()
        raise UnknownConversationError(
            f"{conversation_id!r} turn {turn_index} has no audio"
        )

    def aggregation_status(self, conversation_id: str) -> dict:
        """Per-turn annotator counts, with intensities where quorum is met."""
        conv = self.get_conversation(conversation_id)
        by_turn: dict[int, list[AnnotationRecord]] = {}
        for rec in load_annotations(self.log_path):
            if rec.conversation_id == conversation_id:
                by_turn.setdefault(rec.turn_index, []).append(rec)
        turns = []
        for utt in conv.turns:
            recs = by_turn.get(utt.index, [])
            entry: dict = {"turn_index": utt.index, "annotator_count": len(recs)}
            if len(recs) >= self.quorum:
                iv = aggregate_intensity(recs)
                entry["intensity"] = iv.as_floats()
                entry["intensity_counts"] = list(iv.counts)
                entry["intensity_annotators"] = iv.annotator_count
            turns.append(entry)
        return {
            "conversation_id": conversation_id,
            "quorum": self.quorum,
            "turns": turns,
        }

    # -- submission ---------------------------------------------------------

    def submit_annotation(
        self,
        annotator_id: str,
        conversation_id: str,
        turn_index: int,
        labels: list[str] | tuple[str, ...],
    ) -> dict:
        conv = self.get_conversation(conversation_id)
        if not 1 <= turn_index <= len(conv.turns):
            raise StructuralError(f"turn {turn_index} out of range 1..{len(conv.turns)}")
        utt = conv.turns[turn_index - 1]
        labels = tuple(labels)
        if len(labels) != len(utt.words):
            raise StructuralError(
                f"{len(labels)} labels for {len(utt.words)} words in turn {turn_index}"
            )
        bad = set(labels) - VALID_LABELS
        if bad:
            raise StructuralError(f"invalid labels {sorted(bad)}; use I or O")

        with self._write_lock:
            done = self._annotated.setdefault((annotator_id, conversation_id), {})
            if turn_index in done:
                if done[turn_index] == labels:
                    return {"status": "duplicate", "turn_index": turn_index}
                raise ConflictError(
                    f"turn {turn_index} already annotated; raw annotations are immutable"
                )
            expected = 1
            while expected in done:
                expected += 1
            if turn_index != expected:
                raise OrderingError(
                    f"turns must be annotated in order: next is {expected}, got {turn_index}"
                )
            record = AnnotationRecord(
                conversation_id=conversation_id,
                turn_index=turn_index,
                annotator_id=annotator_id,
                labels=labels,
                submitted_at=datetime.now(timezone.utc).isoformat(),
            )
            append_annotation(self.log_path, record)
            done[turn_index] = labels
        return {"status": "accepted", "turn_index": turn_index}


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------


class SubmissionBody(BaseModel):
    conversation_id: str
    turn_index: int
    labels: list[str]


def create_app(service: AnnotationService, tokens: dict[str, str]) -> FastAPI:
    """FastAPI app over the service; bearer tokens map to annotator ids."""
    if not service.registered_annotators:
        service.registered_annotators = set(tokens.values())

    app = FastAPI(title="emphasis annotation service")

    def annotator_from_auth(request: Request) -> str:
        header = request.headers.get("authorization", "")
        if not header.lower().startswith("bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        token = header.split(" ", 1)[1].strip()
        if token not in tokens:
            raise HTTPException(status_code=401, detail="unknown token")
        return tokens[token]

    @app.get("/conversations")
    def list_conversations(annotator: str = Depends(annotator_from_auth)):
        return service.list_conversations(annotator)

    @app.get("/conversations/{conversation_id}")
    def get_conversation(
        conversation_id: str, annotator: str = Depends(annotator_from_auth)
    ):
        try:
            return service.conversation_payload(conversation_id)
        except UnknownConversationError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.get("/conversations/{conversation_id}/status")
    def conversation_status(
        conversation_id: str, annotator: str = Depends(annotator_from_auth)
    ):
        try:
            return service.aggregation_status(conversation_id)
        except UnknownConversationError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.get("/audio/{conversation_id}/{turn_index}")
    def audio(
        conversation_id: str,
        turn_index: int,
        annotator: str = Depends(annotator_from_auth),
    ):
        try:
            data = service.audio_bytes(conversation_id, turn_index)
        except UnknownConversationError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return Response(content=data, media_type="audio/wav")

    @app.post("/annotations")
    def submit(body: SubmissionBody, annotator: str = Depends(annotator_from_auth)):
        try:
            return service.submit_annotation(
                annotator, body.conversation_id, body.turn_index, body.labels
            )
        except UnknownConversationError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except OrderingError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except ConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except StructuralError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    return app
