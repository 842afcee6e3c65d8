"""Transition counts, smoothed probabilities, entropy, and the shaped reward."""

import json
import math

import mpmath
import numpy as np
import pytest

from consultnav.domain import CaseSequence
from consultnav.errors import ValidationError
from consultnav.transitions import (
    RewardConfig,
    TransitionModel,
    fit_transitions,
    immediate_reward,
    info_gain,
    load_transition_model,
    normalized_entropy,
    repetition_factor,
    save_transition_model,
    transition_distribution,
    transition_prob,
)


def brute_force_prob(cases, n, alpha, i, j):
    """Independent reimplementation: dict-based counting, scalar arithmetic."""
    pair_counts = {}
    row_counts = {}
    for case in cases:
        seq = case.symptoms
        for a, b in zip(seq[:-1], seq[1:]):
            pair_counts[(a, b)] = pair_counts.get((a, b), 0) + 1
            row_counts[a] = row_counts.get(a, 0) + 1
    return (pair_counts.get((i, j), 0) + alpha) / (row_counts.get(i, 0) + alpha * n)


def brute_force_entropy(cases, n, alpha, i):
    total = 0.0
    for j in range(n):
        p = brute_force_prob(cases, n, alpha, i, j)
        total += p * math.log(p)
    return -total / math.log(n)


def random_corpus(rng, n):
    cases = []
    for c in range(int(rng.integers(1, 6))):
        length = int(rng.integers(1, 10))
        cases.append(CaseSequence(f"c{c}", tuple(int(s) for s in rng.integers(0, n, size=length))))
    return cases


class TestFitTransitions:
    def test_hand_counted_example(self):
        model = fit_transitions([CaseSequence("c", (0, 1, 0, 2))], 3)
        expected = np.zeros((3, 3), dtype=np.int64)
        expected[0, 1] = 1
        expected[0, 2] = 1
        expected[1, 0] = 1
        assert np.array_equal(model.pair_counts, expected)
        assert np.array_equal(model.row_totals, [2, 1, 0])

    def test_empty_corpus_all_zero(self):
        model = fit_transitions([], 4)
        assert model.pair_counts.sum() == 0

    def test_self_transition_counted(self):
        model = fit_transitions([CaseSequence("c", (1, 1))], 2)
        assert model.pair_counts[1, 1] == 1

    def test_out_of_range_index_rejected(self):
        with pytest.raises(ValidationError):
            fit_transitions([CaseSequence("c", (0, 5))], 3)

    def test_nonpositive_alpha_rejected(self):
        with pytest.raises(ValueError):
            fit_transitions([], 3, alpha=0.0)


class TestTransitionProb:
    def test_hand_value(self):
        model = fit_transitions([CaseSequence("c", (0, 1, 0, 2))], 3, alpha=1.0)
        assert transition_prob(model, 0, 1) == pytest.approx(0.4, abs=1e-15)

    def test_zero_count_row_is_uniform(self):
        model = fit_transitions([], 7, alpha=0.5)
        for j in range(7):
            assert transition_prob(model, 3, j) == pytest.approx(1 / 7, abs=1e-15)

    def test_rows_sum_to_one(self):
        model = fit_transitions([CaseSequence("c", (0, 1, 0, 2))], 3, alpha=1.0)
        for i in range(3):
            assert sum(transition_prob(model, i, j) for j in range(3)) == pytest.approx(1.0, abs=1e-9)

    def test_out_of_range_rejected(self):
        model = fit_transitions([], 3)
        with pytest.raises(ValueError):
            transition_prob(model, 3, 0)
        with pytest.raises(ValueError):
            transition_prob(model, 0, -1)

    def test_matches_brute_force_on_random_corpora(self):
        rng = np.random.default_rng(42)
        for _ in range(60):
            n = int(rng.integers(2, 7))
            alpha = float(rng.uniform(0.05, 3.0))
            cases = random_corpus(rng, n)
            model = fit_transitions(cases, n, alpha=alpha)
            for i in range(n):
                for j in range(n):
                    assert transition_prob(model, i, j) == pytest.approx(
                        brute_force_prob(cases, n, alpha, i, j), abs=1e-12
                    )


class TestNormalizedEntropy:
    def test_zero_count_row_is_exactly_one(self):
        model = fit_transitions([], 5, alpha=1.0)
        assert normalized_entropy(model, 2) == 1.0

    def test_near_deterministic_row_high_precision_oracle(self):
        model = fit_transitions([CaseSequence("c", (0, 1) * 1000)], 2, alpha=0.001)
        # only transitions 0->1 (x1000) and 1->0 (x999)
        with mpmath.workdps(50):
            alpha = mpmath.mpf("0.001")
            p1 = (1000 + alpha) / (1000 + 2 * alpha)
            p0 = alpha / (1000 + 2 * alpha)
            expected = float(-(p0 * mpmath.log(p0) + p1 * mpmath.log(p1)) / mpmath.log(2))
        assert normalized_entropy(model, 0) == pytest.approx(expected, abs=1e-12)
        assert normalized_entropy(model, 0) < 0.01

    def test_hand_evaluated_three_symbol_row(self):
        model = fit_transitions([CaseSequence("c", (0, 1, 0, 2))], 3, alpha=1.0)
        expected = -(0.2 * math.log(0.2) + 2 * 0.4 * math.log(0.4)) / math.log(3)
        assert normalized_entropy(model, 0) == pytest.approx(expected, abs=1e-12)

    def test_bounds_and_oracle_on_random_corpora(self):
        rng = np.random.default_rng(7)
        for _ in range(60):
            n = int(rng.integers(2, 7))
            alpha = float(rng.uniform(0.05, 3.0))
            cases = random_corpus(rng, n)
            model = fit_transitions(cases, n, alpha=alpha)
            for i in range(n):
                h = normalized_entropy(model, i)
                assert 0.0 < h <= 1.0
                assert h == pytest.approx(brute_force_entropy(cases, n, alpha, i), abs=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        counts = rng.integers(0, 20, size=(5, 5))
        model = TransitionModel(n=5, alpha=0.7, pair_counts=counts, row_totals=counts.sum(1))
        permuted = counts.copy()
        permuted[2] = counts[2][rng.permutation(5)]
        model_p = TransitionModel(n=5, alpha=0.7, pair_counts=permuted, row_totals=permuted.sum(1))
        assert normalized_entropy(model, 2) == pytest.approx(normalized_entropy(model_p, 2), abs=1e-15)

    def test_n_below_two_rejected(self):
        counts = np.zeros((1, 1), dtype=np.int64)
        model = TransitionModel(n=1, alpha=1.0, pair_counts=counts, row_totals=counts.sum(1))
        with pytest.raises(ValueError):
            normalized_entropy(model, 0)


class TestInfoGain:
    def test_uniform_row_gains_nothing(self):
        model = fit_transitions([], 4)
        assert info_gain(model, 1) == pytest.approx(0.0, abs=1e-15)

    def test_complement_of_entropy(self):
        model = fit_transitions([CaseSequence("c", (0, 1, 0, 2))], 3)
        assert info_gain(model, 0) == pytest.approx(1.0 - normalized_entropy(model, 0), abs=1e-15)


class TestRepetitionFactor:
    def test_immediate_repeat(self):
        assert repetition_factor(7, [2, 7]) == 0.3

    def test_revisit(self):
        assert repetition_factor(2, [2, 7]) == 1.5

    def test_fresh_symptom(self):
        assert repetition_factor(9, [2, 7]) == 1.0

    def test_empty_history(self):
        assert repetition_factor(0, []) == 1.0

    def test_exhaustive_against_rule(self):
        from itertools import product

        n = 5
        for length in range(0, 5):
            for history in product(range(n), repeat=length):
                for a in range(n):
                    if history and a == history[-1]:
                        expected = 0.3
                    elif a in history:
                        expected = 1.5
                    else:
                        expected = 1.0
                    assert repetition_factor(a, list(history)) == expected

    def test_custom_factors(self):
        cfg = RewardConfig(k=1.0, lambda_repeat_last=0.1, lambda_revisit=2.0, lambda_default=0.9)
        assert repetition_factor(1, [1], cfg) == 0.1
        assert repetition_factor(1, [1, 2], cfg) == 2.0
        assert repetition_factor(3, [1, 2], cfg) == 0.9

    def test_nonpositive_factor_rejected(self):
        with pytest.raises(ValueError):
            RewardConfig(lambda_repeat_last=0.0)


class TestImmediateReward:
    def test_product_identity(self):
        model = fit_transitions([CaseSequence("c", (0, 1, 0, 2, 1, 0))], 3)
        cfg = RewardConfig(k=2.0)
        for a in range(3):
            for history in ([], [a], [a, 1], [1, 2]):
                expected = info_gain(model, a) * repetition_factor(a, history, cfg) * 2.0
                assert immediate_reward(model, a, history, cfg) == pytest.approx(expected, abs=1e-15)

    def test_uniform_row_rewards_zero_regardless_of_history(self):
        model = fit_transitions([], 4)
        for history in ([], [1], [2, 1]):
            assert immediate_reward(model, 1, history) == pytest.approx(0.0, abs=1e-15)

    def test_monotone_in_k(self):
        model = fit_transitions([CaseSequence("c", (0, 1, 0, 1))], 3)
        r1 = immediate_reward(model, 0, [], RewardConfig(k=1.0))
        r2 = immediate_reward(model, 0, [], RewardConfig(k=2.5))
        assert r2 == pytest.approx(2.5 * r1, abs=1e-12)
        assert r2 > r1 > 0


class TestPersistence:
    def test_roundtrip_identical_probabilities(self, tmp_path):
        model = fit_transitions([CaseSequence("c", (0, 1, 0, 2, 2, 1))], 3, alpha=0.25)
        path = tmp_path / "model.json"
        save_transition_model(model, path)
        loaded = load_transition_model(path)
        assert loaded.alpha == model.alpha
        assert np.array_equal(loaded.pair_counts, model.pair_counts)
        assert np.array_equal(loaded.row_totals, model.row_totals)
        for i in range(3):
            np.testing.assert_array_equal(
                transition_distribution(loaded, i), transition_distribution(model, i)
            )

    def test_document_schema(self, tmp_path):
        model = fit_transitions([CaseSequence("c", (0, 1))], 2)
        path = tmp_path / "model.json"
        save_transition_model(model, path)
        doc = json.loads(path.read_text())
        assert set(doc) == {"n", "alpha", "pair_counts"}
