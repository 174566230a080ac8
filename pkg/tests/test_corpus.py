"""Corpus data model: aggregation, binarization, splits, serialization."""

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emphtts.corpus import (
    AnnotationRecord,
    Conversation,
    CorpusError,
    IntensityVector,
    Utterance,
    aggregate_intensity,
    binarize_intensity,
    load_corpus,
    save_corpus,
    split_corpus,
    validate_conversation,
)
from emphtts.toy import make_toy_corpus


def _rec(annotator, labels, cid="c1", turn=1):
    return AnnotationRecord(
        conversation_id=cid,
        turn_index=turn,
        annotator_id=annotator,
        labels=tuple(labels),
        submitted_at="2026-01-01T00:00:00",
    )


def table_example_records():
    """Five-word utterance annotated by six volunteers: per-word counts of
    the emphasis label are (0, 0, 0, 5, 1)."""
    per_annotator = [
        "OOOIO",
        "OOOOO",
        "OOOIO",
        "OOOIO",
        "OOOII",
        "OOOIO",
    ]
    return [_rec(f"a{i+1}", labels) for i, labels in enumerate(per_annotator)]


class TestAggregate:
    def test_six_annotator_example(self):
        iv = aggregate_intensity(table_example_records())
        assert iv.annotator_count == 6
        assert iv.values == (
            Fraction(0),
            Fraction(0),
            Fraction(0),
            Fraction(5, 6),
            Fraction(1, 6),
        )
        assert iv.rendered(2) == ["0.00", "0.00", "0.00", "0.83", "0.17"]

    def test_unanimous_absence(self):
        iv = aggregate_intensity([_rec("a1", "OOO")])
        assert iv.values == (Fraction(0), Fraction(0), Fraction(0))

    def test_half_vote_exact(self):
        recs = [_rec(f"a{i}", labels) for i, labels in enumerate(["IO", "IO", "OO", "OO"])]
        iv = aggregate_intensity(recs)
        assert iv.values[0] == Fraction(1, 2)

    def test_empty_input(self):
        with pytest.raises(CorpusError, match="empty"):
            aggregate_intensity([])

    def test_mismatched_word_count_names_annotator(self):
        recs = [_rec("a1", "OOO"), _rec("a2", "OO")]
        with pytest.raises(CorpusError, match="a2"):
            aggregate_intensity(recs)

    @given(st.permutations(range(6)))
    def test_permutation_invariant(self, order):
        recs = table_example_records()
        base = aggregate_intensity(recs)
        shuffled = aggregate_intensity([recs[i] for i in order])
        assert shuffled == base


class TestBinarize:
    def test_strict_threshold(self):
        iv = IntensityVector(counts=(5, 1, 3), annotator_count=6)
        assert binarize_intensity(iv, 0.5) == [True, False, False]

    def test_exact_half_is_not_emphasized(self):
        iv = IntensityVector(counts=(3,), annotator_count=6)
        assert binarize_intensity(iv, 0.5) == [False]

    def test_all_zero(self):
        iv = IntensityVector(counts=(0, 0), annotator_count=3)
        assert binarize_intensity(iv, 0.5) == [False, False]

    def test_threshold_precondition(self):
        iv = IntensityVector(counts=(1,), annotator_count=2)
        with pytest.raises(ValueError):
            binarize_intensity(iv, 0.0)
        with pytest.raises(ValueError):
            binarize_intensity(iv, 1.0)

    @given(
        st.lists(st.sampled_from("IO"), min_size=1, max_size=8),
        st.integers(min_value=1, max_value=7),
        st.floats(min_value=0.01, max_value=0.99),
    )
    def test_unanimous_roundtrip(self, labels, n_annotators, threshold):
        recs = [_rec(f"a{i}", labels) for i in range(n_annotators)]
        iv = aggregate_intensity(recs)
        flags = binarize_intensity(iv, threshold)
        assert flags == [lab == "I" for lab in labels]


class TestSplit:
    def _convs(self, n):
        return make_toy_corpus(n, turns_range=(2, 2), seed=7)

    def test_exact_ratio(self):
        split = split_corpus(self._convs(10), seed=0)
        assert (len(split.train), len(split.validation), len(split.test)) == (7, 2, 1)

    def test_deterministic(self):
        convs = self._convs(9)
        assert split_corpus(convs, seed=3) == split_corpus(convs, seed=3)

    def test_rounding_within_one(self):
        convs = self._convs(23)
        split = split_corpus(convs, seed=1)
        sizes = (len(split.train), len(split.validation), len(split.test))
        assert sum(sizes) == 23
        for size, ratio in zip(sizes, (0.7, 0.2, 0.1)):
            assert abs(size - ratio * 23) <= 1

    def test_disjoint_and_covering(self):
        convs = self._convs(11)
        split = split_corpus(convs, seed=5)
        ids = split.all_ids()
        assert len(ids) == len(set(ids)) == 11
        assert set(ids) == {c.conversation_id for c in convs}

    def test_too_few_conversations(self):
        with pytest.raises(CorpusError, match="at least 3"):
            split_corpus(self._convs(2))

    def test_bad_ratios(self):
        with pytest.raises(ValueError):
            split_corpus(self._convs(5), ratios=(0.5, 0.2, 0.2))


class TestSerialization:
    def test_empty_corpus(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        save_corpus([], path)
        assert path.read_text().strip()  # header present
        assert load_corpus(path) == []

    def test_round_trip_identity(self, tmp_path):
        convs = make_toy_corpus(2, seed=4, audio_dir=tmp_path / "audio")
        path = tmp_path / "corpus.jsonl"
        save_corpus(convs, path)
        assert load_corpus(path) == convs

    def test_byte_stable_resave(self, tmp_path):
        convs = make_toy_corpus(1, turns_range=(2, 2), seed=0)
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_corpus(convs, p1)
        save_corpus(load_corpus(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_optional_field_absence(self, tmp_path):
        utt = Utterance(
            index=1,
            speaker_id="s",
            text="hi there",
            words=("hi", "there"),
            phonemes=tuple("hithere"),
            word_phoneme_spans=((0, 2), (2, 7)),
        )
        conv = Conversation(conversation_id="c", turns=[utt])
        path = tmp_path / "c.jsonl"
        save_corpus([conv], path)
        loaded = load_corpus(path)[0].turns[0]
        assert loaded.phoneme_durations is None
        assert loaded.audio_path is None
        assert loaded.emphasis_intensity is None

    def test_span_gap_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        good = Utterance(
            index=1,
            speaker_id="s",
            text="ab cd",
            words=("ab", "cd"),
            phonemes=tuple("abcd"),
            word_phoneme_spans=((0, 2), (2, 4)),
        )
        save_corpus([Conversation("c", [good])], path)
        text = path.read_text().replace("[[0,2],[2,4]]", "[[0,1],[2,4]]")
        path.write_text(text)
        with pytest.raises(CorpusError, match="word_phoneme_spans"):
            load_corpus(path)

    def test_error_names_turn_and_field(self):
        utt = Utterance(
            index=1,
            speaker_id="s",
            text="one two",
            words=("one", "two"),
            phonemes=tuple("onetwo"),
            word_phoneme_spans=((0, 3), (3, 6)),
            phoneme_durations=(1, 1, 0, 1, 1, 1),
        )
        with pytest.raises(CorpusError) as err:
            validate_conversation(Conversation("badconv", [utt]))
        assert "badconv" in str(err.value)
        assert "phoneme_durations" in str(err.value)


class TestToyCorpus:
    def test_deterministic(self):
        a = make_toy_corpus(3, seed=0)
        b = make_toy_corpus(3, seed=0)
        assert a == b

    def test_turns_range(self):
        convs = make_toy_corpus(4, turns_range=(2, 2), seed=1)
        assert all(len(c) == 2 for c in convs)

    def test_planted_rule_string_matcher(self):
        """Independent oracle: predict 1.0 exactly for words present in the
        previous turn. Top-1 agreement with the planted labels must be 1.0."""
        convs = make_toy_corpus(6, seed=2)
        hits = 0
        total = 0
        for conv in convs:
            for prev, cur in zip(conv.turns, conv.turns[1:]):
                pred = [1.0 if w in prev.words else 0.0 for w in cur.words]
                gt = cur.emphasis_intensity.as_floats()
                total += 1
                if max(range(len(gt)), key=lambda i: (gt[i], -i)) == max(
                    range(len(pred)), key=lambda i: (pred[i], -i)
                ):
                    hits += 1
        assert total > 0
        assert hits / total == 1.0

    def test_valid_per_schema(self):
        for conv in make_toy_corpus(3, seed=5):
            validate_conversation(conv)

    def test_emphasis_audio_energy_boost(self):
        convs = make_toy_corpus(2, seed=3)
        utt = convs[0].turns[0]
        gt = utt.emphasis_intensity.as_floats()
        emph_word = gt.index(max(gt))
        from emphtts.audio import energy_track

        energy = energy_track(utt.waveform)
        start = sum(utt.phoneme_durations[: utt.word_phoneme_spans[emph_word][0]])
        end = sum(utt.phoneme_durations[: utt.word_phoneme_spans[emph_word][1]])
        inside = energy[start:end].mean()
        outside_mask = [i for i in range(len(energy)) if not start <= i < end]
        outside = energy[outside_mask].mean()
        assert inside > 1.5 * outside
