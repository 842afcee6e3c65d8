"""Smoothed symptom-transition statistics and the information-gain reward.

Transition counts are first-order: C(i, j) counts how often symptom j
immediately follows symptom i across the corpus. Smoothed conditional
probabilities give each symptom a successor distribution whose normalized
entropy measures how predictable the follow-up inquiry is; the reward for
inquiring about a symptom is one minus that entropy, shaped by a repetition
factor and a global scale.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .domain import CaseSequence
from .errors import ParseError, ValidationError


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class TransitionModel:
    """Pairwise transition counts with a Laplace smoothing factor.

    ``row_totals[i]`` always equals ``pair_counts[i].sum()``; probabilities
    are ``(C(i,j) + alpha) / (C(i) + alpha * n)`` so every row has full
    support whenever ``alpha > 0``.
    """

    n: int
    alpha: float
    pair_counts: np.ndarray
    row_totals: np.ndarray

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"smoothing factor must be > 0, got {self.alpha}")
        counts = np.asarray(self.pair_counts, dtype=np.int64)
        if counts.shape != (self.n, self.n):
            raise ValidationError(
                f"pair_counts shape {counts.shape} does not match n={self.n}"
            )
        if np.any(counts < 0):
            raise ValidationError("pair_counts must be nonnegative")
        totals = counts.sum(axis=1)
        object.__setattr__(self, "pair_counts", _frozen(counts))
        object.__setattr__(self, "row_totals", _frozen(totals))

    def _check_index(self, index: int, label: str) -> None:
        if not 0 <= index < self.n:
            raise ValueError(f"{label} index {index} out of range [0, {self.n})")


def fit_transitions(cases: Iterable[CaseSequence], n: int, alpha: float = 1.0) -> TransitionModel:
    """Count adjacent symptom transitions over a corpus.

    Self-transitions are counted; an empty corpus yields all-zero counts.
    """
    if alpha <= 0:
        raise ValueError(f"smoothing factor must be > 0, got {alpha}")
    counts = np.zeros((n, n), dtype=np.int64)
    for case in cases:
        case.validate_indices(n)
        seq = np.asarray(case.symptoms, dtype=np.int64)
        if len(seq) >= 2:
            np.add.at(counts, (seq[:-1], seq[1:]), 1)
    return TransitionModel(n=n, alpha=alpha, pair_counts=counts, row_totals=counts.sum(axis=1))


def transition_distribution(model: TransitionModel, i: int) -> np.ndarray:
    """The full smoothed successor distribution of symptom i (length-n, sums to 1)."""
    model._check_index(i, "source")
    row = model.pair_counts[i].astype(np.float64)
    return (row + model.alpha) / (model.row_totals[i] + model.alpha * model.n)


def transition_prob(model: TransitionModel, i: int, j: int) -> float:
    """Smoothed probability that symptom j follows symptom i; always in (0, 1)."""
    model._check_index(i, "source")
    model._check_index(j, "target")
    return (model.pair_counts[i, j] + model.alpha) / (model.row_totals[i] + model.alpha * model.n)


def normalized_entropy(model: TransitionModel, i: int) -> float:
    """Entropy of symptom i's successor distribution, scaled into [0, 1].

    Natural logarithms in both the entropy sum and the log-n normalizer (the
    base cancels). Rows with no observed transitions are uniform under the
    smoothing prior and return exactly 1.0.
    """
    if model.n < 2:
        raise ValueError(f"normalized entropy needs n >= 2, got {model.n}")
    model._check_index(i, "symptom")
    if model.row_totals[i] == 0:
        # Uniform prior row; avoids returning 1 +/- rounding noise.
        return 1.0
    p = transition_distribution(model, i)
    mask = p > 0.0
    entropy = -float(np.sum(p[mask] * np.log(p[mask])))
    return entropy / math.log(model.n)


def info_gain(model: TransitionModel, a: int) -> float:
    """Reward base: how much asking about symptom a focuses the next inquiry."""
    return 1.0 - normalized_entropy(model, a)


@dataclass(frozen=True)
class RewardConfig:
    """Scaling coefficient and the three repetition-factor cases."""

    k: float = 1.0
    lambda_repeat_last: float = 0.3
    lambda_revisit: float = 1.5
    lambda_default: float = 1.0

    def __post_init__(self):
        for label in ("k", "lambda_repeat_last", "lambda_revisit", "lambda_default"):
            if getattr(self, label) <= 0:
                raise ValueError(f"{label} must be > 0, got {getattr(self, label)}")


def repetition_factor(a: int, history: Sequence[int], cfg: RewardConfig = RewardConfig()) -> float:
    """Repetition shaping: 0.3 for an immediate repeat, 1.5 for a revisit, else 1.0.

    "Immediate repeat" means equality with the most recent history element;
    a revisit is any earlier (non-final) occurrence.
    """
    if history and a == history[-1]:
        return cfg.lambda_repeat_last
    if a in history:
        return cfg.lambda_revisit
    return cfg.lambda_default


def immediate_reward(
    model: TransitionModel,
    a: int,
    history: Sequence[int],
    cfg: RewardConfig = RewardConfig(),
) -> float:
    """Information gain times the repetition factor, scaled by k."""
    return info_gain(model, a) * repetition_factor(a, history, cfg) * cfg.k


def save_transition_model(model: TransitionModel, path: str | Path) -> None:
    """Persist the model as JSON; row totals are recomputed on load."""
    doc = {
        "n": model.n,
        "alpha": model.alpha,
        "pair_counts": model.pair_counts.tolist(),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(doc, handle)
        handle.write("\n")


def load_transition_model(path: str | Path) -> TransitionModel:
    with open(path, encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid transition-model JSON: {exc.msg}") from exc
    try:
        n = int(doc["n"])
        alpha = float(doc["alpha"])
        counts = np.asarray(doc["pair_counts"], dtype=np.int64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed transition-model document: {exc}") from exc
    if alpha <= 0:
        raise ValidationError(f"smoothing factor must be > 0, got {alpha}")
    return TransitionModel(n=n, alpha=alpha, pair_counts=counts, row_totals=counts.sum(axis=1))
