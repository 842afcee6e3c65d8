"""Closed-form consultation and benchmark metrics.

Consultation metrics pool numerators and denominators globally across test
instances (a single exact ratio, not a per-case macro average): critical
recall counts how many expert-marked critical symptoms were elicited, and
dialogue efficiency counts distinct gold symptoms acquired per inquiry turn.
Benchmark scoring covers multiple-choice option sets, triple-run single-choice
consistency, and judge-reliability statistics over externally produced score
files (no model is invoked here).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import AbstractSet, Mapping, Sequence

import numpy as np

from .domain import CaseSequence
from .errors import ParseError, UndefinedMetricError, ValidationError


@dataclass(frozen=True)
class Ratio:
    """An exact integer ratio carried alongside its float value."""

    numerator: int
    denominator: int

    @property
    def value(self) -> float:
        if self.denominator == 0:
            raise UndefinedMetricError("ratio with zero denominator has no value")
        return self.numerator / self.denominator

    def to_dict(self) -> dict:
        return {"numerator": self.numerator, "denominator": self.denominator, "value": self.value}


def _elicited_symptoms(transcript: dict) -> set[int]:
    return {
        turn["mapped_symptom"]
        for turn in transcript["turns"]
        if turn["mapped_symptom"] is not None
    }


def _match_cases(transcripts: Sequence[dict], cases: Sequence[CaseSequence]) -> list[tuple[dict, CaseSequence]]:
    by_id = {case.case_id: case for case in cases}
    matched = []
    for transcript in transcripts:
        session_id = transcript["session_id"]
        if session_id not in by_id:
            raise ValidationError(f"transcript {session_id!r} has no matching case record")
        matched.append((transcript, by_id[session_id]))
    return matched


def recall_crit(transcripts: Sequence[dict], cases: Sequence[CaseSequence]) -> Ratio:
    """Pooled fraction of critical symptoms elicited across all instances."""
    hits = 0
    total = 0
    for transcript, case in _match_cases(transcripts, cases):
        elicited = _elicited_symptoms(transcript)
        hits += len(elicited & case.gold_critical)
        total += len(case.gold_critical)
    if total == 0:
        raise UndefinedMetricError("no critical symptoms in any matched case")
    return Ratio(hits, total)


def dialogue_efficiency(transcripts: Sequence[dict], cases: Sequence[CaseSequence]) -> Ratio:
    """Distinct gold symptoms acquired per inquiry turn, pooled globally.

    A gold symptom asked twice within a case counts once; unmapped inquiries
    count toward the turn total but never toward the numerator.
    """
    valid = 0
    turns = 0
    for transcript, case in _match_cases(transcripts, cases):
        elicited = _elicited_symptoms(transcript)
        valid += len(elicited & case.gold_all)
        turns += len(transcript["turns"])
    if turns == 0:
        raise UndefinedMetricError("no dialogue turns to evaluate")
    return Ratio(valid, turns)


@dataclass
class ConsultationMetrics:
    recall: Ratio
    efficiency: Ratio
    per_case: list[dict]

    def to_dict(self) -> dict:
        return {
            "recall_crit": self.recall.to_dict(),
            "eff_dia": self.efficiency.to_dict(),
            "per_case": self.per_case,
        }


def consultation_metrics(transcripts: Sequence[dict], cases: Sequence[CaseSequence]) -> ConsultationMetrics:
    """Both consultation metrics plus a per-case breakdown."""
    per_case = []
    for transcript, case in _match_cases(transcripts, cases):
        elicited = _elicited_symptoms(transcript)
        per_case.append(
            {
                "case_id": case.case_id,
                "turns": len(transcript["turns"]),
                "status": transcript["status"],
                "critical_hits": len(elicited & case.gold_critical),
                "critical_total": len(case.gold_critical),
                "gold_hits": len(elicited & case.gold_all),
            }
        )
    return ConsultationMetrics(
        recall=recall_crit(transcripts, cases),
        efficiency=dialogue_efficiency(transcripts, cases),
        per_case=per_case,
    )


def multi_choice_score(
    gold: AbstractSet[str],
    predicted: AbstractSet[str],
    options: AbstractSet[str],
) -> float:
    """Correct picks over correct count plus wrong picks: |A∩B| / (|A| + |Ā∩B|)."""
    gold = frozenset(gold)
    predicted = frozenset(predicted)
    options = frozenset(options)
    if not gold:
        raise ValueError("gold option set must be non-empty")
    if not gold <= options:
        raise ValidationError(f"gold options {sorted(gold - options)} not in the option universe")
    if not predicted <= options:
        raise ValidationError(f"predicted options {sorted(predicted - options)} not in the option universe")
    wrong_picks = (options - gold) & predicted
    return len(gold & predicted) / (len(gold) + len(wrong_picks))


def single_choice_verdict(runs: Sequence[str], gold: str) -> bool:
    """Correct only if all three independent runs agree and match the gold option."""
    if len(runs) != 3:
        raise ValueError(f"exactly 3 runs required, got {len(runs)}")
    return runs[0] == runs[1] == runs[2] == gold


def sensitivity_drop(s_clean: float, s_perturbed: float) -> float:
    """Relative score drop between clean and perturbed responses."""
    if s_clean <= 0:
        raise UndefinedMetricError(f"sensitivity drop undefined for clean score {s_clean}")
    return (s_clean - s_perturbed) / s_clean


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties assigned the average of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Rank correlation with average ranks for ties.

    Identical and exactly reversed rankings short-circuit to +/-1, so the
    extremes are exact rather than within rounding of the product-moment
    formula.
    """
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("inputs must be equal-length 1-d sequences")
    if len(xs) < 2:
        raise ValueError(f"need at least 2 ratings, got {len(xs)}")
    rx = _average_ranks(xs)
    ry = _average_ranks(ys)
    if np.all(rx == rx[0]) or np.all(ry == ry[0]):
        raise UndefinedMetricError("rank variance is zero; correlation undefined")
    if np.array_equal(rx, ry):
        return 1.0
    if np.array_equal(rx, len(rx) + 1.0 - ry):
        return -1.0
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    return float((dx * dy).sum() / math.sqrt((dx * dx).sum() * (dy * dy).sum()))


@dataclass
class RobustnessSummary:
    per_group: dict[str, float | None]
    mean_cv: float | None


def robustness_cv(groups: Mapping[str, Sequence[float]]) -> RobustnessSummary:
    """Per-group coefficient of variation (sample stdev / mean) over rewrites.

    Groups with mean zero are reported as undefined (None) rather than raising;
    single-score groups are rejected outright.
    """
    per_group: dict[str, float | None] = {}
    defined: list[float] = []
    for group_id, scores in groups.items():
        values = np.asarray(scores, dtype=np.float64)
        if len(values) < 2:
            raise ValidationError(f"group {group_id!r} needs >= 2 scores, got {len(values)}")
        mean = values.mean()
        if mean == 0.0:
            per_group[group_id] = None
            continue
        if np.all(values == values[0]):
            # Identical scores have zero spread by definition; the formula
            # would return mean-rounding noise (~1e-16) instead of 0.
            per_group[group_id] = 0.0
            defined.append(0.0)
            continue
        stdev = float(values.std(ddof=1))
        cv = stdev / mean
        per_group[group_id] = cv
        defined.append(cv)
    mean_cv = float(np.mean(defined)) if defined else None
    return RobustnessSummary(per_group=per_group, mean_cv=mean_cv)


@dataclass(frozen=True)
class JudgeScore:
    item_id: str
    group_id: str
    variant: str  # "clean" | "perturbed"
    dimension: str
    score: float
    expert_score: float | None = None


def load_judge_scores(path: str | Path) -> list[JudgeScore]:
    """Read externally produced judge scores (JSON Lines)."""
    records: list[JudgeScore] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON in judge-score file: {exc.msg}", line=lineno) from exc
            try:
                record = JudgeScore(
                    item_id=str(obj["item_id"]),
                    group_id=str(obj["group_id"]),
                    variant=str(obj["variant"]),
                    dimension=str(obj.get("dimension", "overall")),
                    score=float(obj["score"]),
                    expert_score=(
                        float(obj["expert_score"]) if obj.get("expert_score") is not None else None
                    ),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"malformed judge-score record: {exc}", line=lineno) from exc
            if record.variant not in ("clean", "perturbed"):
                raise ValidationError(
                    f"line {lineno}: variant must be 'clean' or 'perturbed', got {record.variant!r}"
                )
            records.append(record)
    return records


@dataclass
class JudgeReliability:
    s_clean: float
    s_perturbed: float
    s_drop: float
    robustness: RobustnessSummary
    spearman: float | None
    per_dimension_drop: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "s_clean": self.s_clean,
            "s_perturbed": self.s_perturbed,
            "s_drop": self.s_drop,
            "robustness_cv": self.robustness.mean_cv,
            "robustness_per_group": self.robustness.per_group,
            "spearman_rho": self.spearman,
            "per_dimension_drop": self.per_dimension_drop,
        }


def summarize_judge(records: Sequence[JudgeScore]) -> JudgeReliability:
    """Sensitivity, robustness, and expert alignment of an external judge."""
    clean = [r.score for r in records if r.variant == "clean"]
    perturbed = [r.score for r in records if r.variant == "perturbed"]
    if not clean or not perturbed:
        raise UndefinedMetricError("need both clean and perturbed scores to summarize the judge")
    s_clean = float(np.mean(clean))
    s_perturbed = float(np.mean(perturbed))

    groups: dict[str, list[float]] = {}
    for record in records:
        if record.variant == "clean":
            groups.setdefault(record.group_id, []).append(record.score)
    robustness = robustness_cv({g: s for g, s in groups.items() if len(s) >= 2})

    expert_pairs = [(r.score, r.expert_score) for r in records if r.expert_score is not None]
    spearman: float | None = None
    if len(expert_pairs) >= 2:
        try:
            spearman = spearman_rho([p[0] for p in expert_pairs], [p[1] for p in expert_pairs])
        except UndefinedMetricError:
            spearman = None

    per_dimension: dict[str, float] = {}
    dimensions = sorted({r.dimension for r in records})
    for dimension in dimensions:
        dim_clean = [r.score for r in records if r.variant == "clean" and r.dimension == dimension]
        dim_pert = [r.score for r in records if r.variant == "perturbed" and r.dimension == dimension]
        if dim_clean and dim_pert and np.mean(dim_clean) > 0:
            per_dimension[dimension] = sensitivity_drop(float(np.mean(dim_clean)), float(np.mean(dim_pert)))

    return JudgeReliability(
        s_clean=s_clean,
        s_perturbed=s_perturbed,
        s_drop=sensitivity_drop(s_clean, s_perturbed),
        robustness=robustness,
        spearman=spearman,
        per_dimension_drop=per_dimension,
    )
