"""Data model, file formats, annotation aggregation, and splits for
emphasis-annotated conversational speech.

A corpus file is line-delimited JSON (UTF-8): a header object on the first
line, then one conversation object per line. Annotations live in a separate
append-only log of one record per line, keyed by
(conversation_id, turn_index, annotator_id). Word emphasis intensities are
stored as exact rationals (vote count / annotator count) and rendered as
decimals only at the boundary.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import SAMPLE_RATE

CORPUS_FORMAT = "emphasis-dialogue-corpus"
CORPUS_VERSION = 1

EMPHASIS_LABEL = "I"
NO_EMPHASIS_LABEL = "O"
VALID_LABELS = frozenset({EMPHASIS_LABEL, NO_EMPHASIS_LABEL})


class CorpusError(ValueError):
    """Schema or invariant violation in corpus data."""


@dataclass(frozen=True)
class IntensityVector:
    """Per-word emphasis intensity as exact rationals count/annotator_count."""

    counts: tuple[int, ...]
    annotator_count: int

    def __post_init__(self) -> None:
        if self.annotator_count < 1:
            raise CorpusError("annotator_count must be >= 1")
        for i, c in enumerate(self.counts):
            if not 0 <= c <= self.annotator_count:
                raise CorpusError(
                    f"intensity count {c} at word {i} outside [0, {self.annotator_count}]"
                )

    def __len__(self) -> int:
        return len(self.counts)

    @property
    def values(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(c, self.annotator_count) for c in self.counts)

    def as_floats(self) -> list[float]:
        return [c / self.annotator_count for c in self.counts]

    def rendered(self, decimals: int = 2) -> list[str]:
        """Decimal rendering for display; exact values stay rational."""
        return [f"{c / self.annotator_count:.{decimals}f}" for c in self.counts]


@dataclass
class Utterance:
    """One dialogue turn.

    ``waveform`` is a runtime-only cache (mono float array at 22,050 Hz);
    it is never serialized and is ignored by equality checks on purpose so
    that a round-tripped corpus compares equal to its in-memory source.
    """

    index: int
    speaker_id: str
    text: str
    words: tuple[str, ...]
    phonemes: tuple[str, ...]
    word_phoneme_spans: tuple[tuple[int, int], ...]
    phoneme_durations: tuple[int, ...] | None = None
    audio_path: str | None = None
    emphasis_intensity: IntensityVector | None = None
    waveform: np.ndarray | None = field(default=None, compare=False, repr=False)


@dataclass
class Conversation:
    conversation_id: str
    turns: list[Utterance]

    def __len__(self) -> int:
        return len(self.turns)


@dataclass(frozen=True)
class AnnotationRecord:
    conversation_id: str
    turn_index: int
    annotator_id: str
    labels: tuple[str, ...]
    submitted_at: str


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]
    seed: int

    def all_ids(self) -> tuple[str, ...]:
        return self.train + self.validation + self.test


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _utt_error(conversation_id: str, turn_index: int, fieldname: str, msg: str) -> CorpusError:
    return CorpusError(
        f"conversation {conversation_id!r} turn {turn_index}: field {fieldname!r}: {msg}"
    )


def validate_utterance(utt: Utterance, conversation_id: str) -> None:
    if utt.index < 1:
        raise _utt_error(conversation_id, utt.index, "index", "must be >= 1")
    if not utt.text.strip():
        raise _utt_error(conversation_id, utt.index, "text", "must be non-empty")
    if tuple(utt.text.split()) != tuple(utt.words):
        raise _utt_error(
            conversation_id, utt.index, "words",
            "must equal the whitespace split of text",
        )
    if len(utt.word_phoneme_spans) != len(utt.words):
        raise _utt_error(
            conversation_id, utt.index, "word_phoneme_spans",
            f"{len(utt.word_phoneme_spans)} spans for {len(utt.words)} words",
        )
    cursor = 0
    for w, (start, end) in enumerate(utt.word_phoneme_spans):
        if start != cursor:
            raise _utt_error(
                conversation_id, utt.index, "word_phoneme_spans",
                f"span {w} starts at {start}, expected {cursor} (gap or overlap)",
            )
        if end < start:
            raise _utt_error(
                conversation_id, utt.index, "word_phoneme_spans",
                f"span {w} ends at {end} before start {start}",
            )
        cursor = end
    if cursor != len(utt.phonemes):
        raise _utt_error(
            conversation_id, utt.index, "word_phoneme_spans",
            f"spans cover [0, {cursor}) but there are {len(utt.phonemes)} phonemes",
        )
    if utt.phoneme_durations is not None:
        if len(utt.phoneme_durations) != len(utt.phonemes):
            raise _utt_error(
                conversation_id, utt.index, "phoneme_durations",
                f"{len(utt.phoneme_durations)} durations for {len(utt.phonemes)} phonemes",
            )
        for p, d in enumerate(utt.phoneme_durations):
            if d < 1:
                raise _utt_error(
                    conversation_id, utt.index, "phoneme_durations",
                    f"duration {d} at phoneme {p} must be >= 1",
                )
    if utt.emphasis_intensity is not None:
        if len(utt.emphasis_intensity) != len(utt.words):
            raise _utt_error(
                conversation_id, utt.index, "emphasis_intensity",
                f"{len(utt.emphasis_intensity)} values for {len(utt.words)} words",
            )


def validate_conversation(conv: Conversation) -> None:
    if not conv.conversation_id:
        raise CorpusError("conversation_id must be non-empty")
    for pos, utt in enumerate(conv.turns, start=1):
        if utt.index != pos:
            raise CorpusError(
                f"conversation {conv.conversation_id!r}: field 'turns': "
                f"turn at position {pos} carries index {utt.index}; indices must be 1..N"
            )
        validate_utterance(utt, conv.conversation_id)


# ---------------------------------------------------------------------------
# Annotation aggregation
# ---------------------------------------------------------------------------


def aggregate_intensity(records: Sequence[AnnotationRecord]) -> IntensityVector:
    """Aggregate one utterance's IO annotations into per-word intensities.

    values[w] = (# records labeling word w as I) / (# records), kept exact.
    """
    if not records:
        raise CorpusError("cannot aggregate an empty set of annotation records")
    first = records[0]
    n_words = len(first.labels)
    for rec in records[1:]:
        if (rec.conversation_id, rec.turn_index) != (first.conversation_id, first.turn_index):
            raise CorpusError(
                f"annotator {rec.annotator_id!r}: record targets "
                f"({rec.conversation_id!r}, turn {rec.turn_index}), expected "
                f"({first.conversation_id!r}, turn {first.turn_index})"
            )
        if len(rec.labels) != n_words:
            raise CorpusError(
                f"annotator {rec.annotator_id!r}: {len(rec.labels)} labels, "
                f"expected {n_words}"
            )
    for rec in records:
        bad = set(rec.labels) - VALID_LABELS
        if bad:
            raise CorpusError(
                f"annotator {rec.annotator_id!r}: invalid labels {sorted(bad)}"
            )
    counts = tuple(
        sum(1 for rec in records if rec.labels[w] == EMPHASIS_LABEL)
        for w in range(n_words)
    )
    return IntensityVector(counts=counts, annotator_count=len(records))


def binarize_intensity(intensity: IntensityVector, threshold: float = 0.5) -> list[bool]:
    """A word is emphasized iff its intensity is strictly above the threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    return [v > threshold for v in intensity.values]


def emphasized_word_fraction(
    conversations: Iterable[Conversation], threshold: float = 0.5
) -> float:
    """Corpus-wide fraction of words whose intensity exceeds the threshold."""
    emphasized = 0
    total = 0
    for conv in conversations:
        for utt in conv.turns:
            if utt.emphasis_intensity is None:
                continue
            flags = binarize_intensity(utt.emphasis_intensity, threshold)
            emphasized += sum(flags)
            total += len(flags)
    if total == 0:
        raise CorpusError("no annotated words in corpus")
    return emphasized / total


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


def split_corpus(
    conversations: Sequence[Conversation],
    ratios: tuple[float, float, float] = (0.7, 0.2, 0.1),
    seed: int = 0,
) -> CorpusSplit:
    """Deterministic whole-conversation split with largest-remainder rounding.

    Counts match the ratios to within one conversation per split.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    ids = [c.conversation_id for c in conversations]
    if len(set(ids)) != len(ids):
        raise CorpusError("duplicate conversation_id in corpus")
    if len(ids) < len(ratios):
        raise CorpusError(
            f"need at least {len(ratios)} conversations to split, got {len(ids)}"
        )
    rng = random.Random(seed)
    shuffled = list(ids)
    rng.shuffle(shuffled)

    n = len(shuffled)
    exact = [r * n for r in ratios]
    sizes = [int(e) for e in exact]
    remainders = sorted(
        range(len(ratios)), key=lambda i: (exact[i] - sizes[i], -i), reverse=True
    )
    for i in range(n - sum(sizes)):
        sizes[remainders[i]] += 1

    train = tuple(shuffled[: sizes[0]])
    validation = tuple(shuffled[sizes[0] : sizes[0] + sizes[1]])
    test = tuple(shuffled[sizes[0] + sizes[1] :])
    return CorpusSplit(train=train, validation=validation, test=test, seed=seed)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _utterance_to_obj(utt: Utterance) -> dict:
    obj: dict = {
        "index": utt.index,
        "speaker_id": utt.speaker_id,
        "text": utt.text,
        "words": list(utt.words),
        "phonemes": list(utt.phonemes),
        "word_phoneme_spans": [[s, e] for s, e in utt.word_phoneme_spans],
    }
    if utt.phoneme_durations is not None:
        obj["phoneme_durations"] = list(utt.phoneme_durations)
    if utt.audio_path is not None:
        obj["audio_path"] = utt.audio_path
    if utt.emphasis_intensity is not None:
        obj["emphasis_intensity"] = {
            "counts": list(utt.emphasis_intensity.counts),
            "annotator_count": utt.emphasis_intensity.annotator_count,
        }
    return obj


def _utterance_from_obj(obj: dict, conversation_id: str) -> Utterance:
    try:
        intensity = None
        if "emphasis_intensity" in obj:
            intensity = IntensityVector(
                counts=tuple(obj["emphasis_intensity"]["counts"]),
                annotator_count=obj["emphasis_intensity"]["annotator_count"],
            )
        return Utterance(
            index=obj["index"],
            speaker_id=obj["speaker_id"],
            text=obj["text"],
            words=tuple(obj["words"]),
            phonemes=tuple(obj["phonemes"]),
            word_phoneme_spans=tuple((s, e) for s, e in obj["word_phoneme_spans"]),
            phoneme_durations=(
                tuple(obj["phoneme_durations"]) if "phoneme_durations" in obj else None
            ),
            audio_path=obj.get("audio_path"),
            emphasis_intensity=intensity,
        )
    except (KeyError, TypeError) as exc:
        raise CorpusError(
            f"conversation {conversation_id!r} turn {obj.get('index', '?')}: "
            f"malformed utterance object ({exc})"
        ) from exc


def _dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def save_corpus(conversations: Sequence[Conversation], path: str | Path) -> None:
    """Write a corpus file; byte-stable for identical input."""
    path = Path(path)
    for conv in conversations:
        validate_conversation(conv)
    header = {
        "format": CORPUS_FORMAT,
        "sample_rate": SAMPLE_RATE,
        "version": CORPUS_VERSION,
    }
    lines = [_dumps(header)]
    for conv in conversations:
        lines.append(
            _dumps(
                {
                    "conversation_id": conv.conversation_id,
                    "turns": [_utterance_to_obj(u) for u in conv.turns],
                }
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_corpus(path: str | Path) -> list[Conversation]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise CorpusError(f"{path}: empty file, expected a corpus header line")
    header = json.loads(lines[0])
    if header.get("format") != CORPUS_FORMAT:
        raise CorpusError(f"{path}: not a corpus file (bad header format)")
    conversations = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        obj = json.loads(line)
        cid = obj.get("conversation_id")
        if not cid:
            raise CorpusError(f"{path}:{lineno}: missing conversation_id")
        conv = Conversation(
            conversation_id=cid,
            turns=[_utterance_from_obj(t, cid) for t in obj.get("turns", [])],
        )
        validate_conversation(conv)
        conversations.append(conv)
    return conversations


# ---------------------------------------------------------------------------
# Annotation log
# ---------------------------------------------------------------------------


def record_to_obj(rec: AnnotationRecord) -> dict:
    return {
        "conversation_id": rec.conversation_id,
        "turn_index": rec.turn_index,
        "annotator_id": rec.annotator_id,
        "labels": list(rec.labels),
        "submitted_at": rec.submitted_at,
    }


def record_from_obj(obj: dict) -> AnnotationRecord:
    return AnnotationRecord(
        conversation_id=obj["conversation_id"],
        turn_index=obj["turn_index"],
        annotator_id=obj["annotator_id"],
        labels=tuple(obj["labels"]),
        submitted_at=obj["submitted_at"],
    )


def append_annotation(path: str | Path, rec: AnnotationRecord) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(_dumps(record_to_obj(rec)) + "\n")


def load_annotations(path: str | Path) -> list[AnnotationRecord]:
    path = Path(path)
    if not path.exists():
        return []
    records = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(record_from_obj(json.loads(line)))
    return records


def apply_annotations(
    conversations: Sequence[Conversation],
    records: Sequence[AnnotationRecord],
    quorum: int = 1,
) -> list[Conversation]:
    """Aggregate log records onto conversations; turns below quorum keep
    their existing intensity (if any)."""
    by_turn: dict[tuple[str, int], list[AnnotationRecord]] = {}
    for rec in records:
        by_turn.setdefault((rec.conversation_id, rec.turn_index), []).append(rec)
    out = []
    for conv in conversations:
        turns = []
        for utt in conv.turns:
            recs = by_turn.get((conv.conversation_id, utt.index), [])
            if len(recs) >= quorum:
                utt = replace(utt, emphasis_intensity=aggregate_intensity(recs))
            turns.append(utt)
        out.append(Conversation(conversation_id=conv.conversation_id, turns=turns))
    return out
