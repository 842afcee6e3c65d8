"""Symptom vocabulary, free-text mapping, and pair extraction."""

import json

import pytest

from consultnav.domain import (
    CaseSequence,
    SymptomVocabulary,
    extract_pairs,
    load_cases,
    load_vocabulary,
    map_inquiry,
    normalize_inquiry,
    write_cases,
)
from consultnav.errors import ParseError, ValidationError

from conftest import toy_vocabulary


def write_vocab(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


class TestLoadVocabulary:
    def test_shipped_default_has_83_entries(self, default_vocab):
        assert default_vocab.size == 83
        assert default_vocab.pad_index == 83

    def test_minimal_two_entry_file(self, tmp_path):
        path = tmp_path / "v.jsonl"
        write_vocab(path, [
            {"index": 0, "name": "a", "aliases": []},
            {"index": 1, "name": "b", "aliases": []},
        ])
        vocab = load_vocabulary(path)
        assert vocab.size == 2
        assert vocab.pad_index == 2

    def test_duplicate_index_rejected(self, tmp_path):
        path = tmp_path / "v.jsonl"
        write_vocab(path, [
            {"index": 0, "name": "a", "aliases": []},
            {"index": 0, "name": "b", "aliases": []},
        ])
        with pytest.raises(ValidationError):
            load_vocabulary(path)

    def test_duplicate_name_rejected(self, tmp_path):
        path = tmp_path / "v.jsonl"
        write_vocab(path, [
            {"index": 0, "name": "Same Name", "aliases": []},
            {"index": 1, "name": "same  name!", "aliases": []},
        ])
        with pytest.raises(ValidationError):
            load_vocabulary(path)

    def test_single_entry_rejected(self, tmp_path):
        path = tmp_path / "v.jsonl"
        write_vocab(path, [{"index": 0, "name": "a", "aliases": []}])
        with pytest.raises(ValidationError):
            load_vocabulary(path)

    def test_gap_in_indices_rejected(self, tmp_path):
        path = tmp_path / "v.jsonl"
        write_vocab(path, [
            {"index": 0, "name": "a", "aliases": []},
            {"index": 2, "name": "b", "aliases": []},
        ])
        with pytest.raises(ValidationError):
            load_vocabulary(path)

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "v.jsonl"
        path.write_text('{"index": 0, "name": "a", "aliases": []}\nnot json\n')
        with pytest.raises(ParseError) as excinfo:
            load_vocabulary(path)
        assert excinfo.value.line == 2

    def test_alias_clash_across_entries_rejected(self, tmp_path):
        path = tmp_path / "v.jsonl"
        write_vocab(path, [
            {"index": 0, "name": "a", "aliases": ["shared"]},
            {"index": 1, "name": "b", "aliases": ["shared"]},
        ])
        with pytest.raises(ValidationError):
            load_vocabulary(path)

    def test_every_canonical_name_is_its_own_alias(self, default_vocab):
        for index, name in enumerate(default_vocab.names):
            assert default_vocab.aliases[normalize_inquiry(name)] == index


class TestMapInquiry:
    def test_exact_alias_after_normalization(self, default_vocab):
        assert map_inquiry("Epigastric pain?", default_vocab) == 0

    def test_unmatched_text_is_none(self, default_vocab):
        assert map_inquiry("do you dream in color", default_vocab) is None

    def test_messy_spacing_and_punctuation(self):
        vocab = SymptomVocabulary.from_entries(
            [(i, f"symptom {i}", []) for i in range(12)] + [(12, "abdominal bloating", [])]
        )
        assert map_inquiry("  ABDOMINAL   Bloating. ", vocab) == 12

    def test_idempotent_under_normalization(self, default_vocab):
        for alias, index in default_vocab.aliases.items():
            assert map_inquiry(normalize_inquiry(alias), default_vocab) == index


class TestExtractPairs:
    def test_window_two(self):
        case = CaseSequence("c", (3, 7, 2))
        pairs = extract_pairs(case, 2)
        assert [(p.state, p.action) for p in pairs] == [((3,), 7), ((3, 7), 2)]
        assert [p.position for p in pairs] == [0, 1]

    def test_single_symptom_case_yields_nothing(self):
        assert extract_pairs(CaseSequence("c", (5,)), 4) == []

    def test_repeated_symptoms_are_legal(self):
        pairs = extract_pairs(CaseSequence("c", (1, 1, 1)), 1)
        assert [(p.state, p.action) for p in pairs] == [((1,), 1), ((1,), 1)]

    def test_zero_window_rejected(self):
        with pytest.raises(ValueError):
            extract_pairs(CaseSequence("c", (1, 2)), 0)

    def test_pair_count_is_length_minus_one(self):
        import numpy as np

        rng = np.random.default_rng(0)
        for _ in range(50):
            length = int(rng.integers(1, 12))
            window = int(rng.integers(1, 6))
            seq = tuple(int(s) for s in rng.integers(0, 5, size=length))
            pairs = extract_pairs(CaseSequence("c", seq), window)
            assert len(pairs) == max(length - 1, 0)
            # consecutive pairs reconstruct the sequence from position 1
            assert [p.action for p in pairs] == list(seq[1:])
            for t, pair in enumerate(pairs):
                assert pair.state == seq[max(0, t + 1 - window) : t + 1]


class TestCaseSequence:
    def test_gold_critical_must_be_subset(self):
        with pytest.raises(ValidationError):
            CaseSequence("c", (0, 1), gold_critical={2}, gold_all={0, 1})

    def test_empty_sequence_rejected(self):
        with pytest.raises(ValidationError):
            CaseSequence("c", ())

    def test_corpus_roundtrip(self, tmp_path):
        vocab = toy_vocabulary(6)
        cases = [
            CaseSequence("a", (0, 1, 2), gold_critical={1}, gold_all={0, 1, 2}, metadata={"k": "v"}),
            CaseSequence("b", (5,), gold_all={5}),
        ]
        path = tmp_path / "corpus.jsonl"
        write_cases(cases, path)
        loaded = load_cases(path, vocab)
        assert loaded == cases

    def test_out_of_range_index_rejected_on_load(self, tmp_path):
        vocab = toy_vocabulary(3)
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"case_id": "x", "symptoms": [0, 9], "gold_critical": [], "gold_all": []}\n')
        with pytest.raises(ValidationError):
            load_cases(path, vocab)
