"""Standardized symptom space, case records, and state-action extraction.

The symptom vocabulary is a flat list of N canonical symptom names plus an
alias map used to resolve free-text inquiries. Recorded consultations are
ordered index sequences; training examples are sliding-window suffixes of
those sequences paired with the next inquired symptom.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

from .errors import ParseError, ValidationError

_PUNCT_RE = re.compile(r"[^\w\s]")
_SPACE_RE = re.compile(r"\s+")


def normalize_inquiry(text: str) -> str:
    """Normalize free text for alias matching.

    Lowercases, replaces punctuation with spaces, collapses whitespace runs
    and trims. Matching against the alias map is exact after this; there is
    no fuzzy matching.
    """
    lowered = _PUNCT_RE.sub(" ", text.lower())
    return _SPACE_RE.sub(" ", lowered).strip()


@dataclass(frozen=True)
class SymptomVocabulary:
    """The standardized symptom list: index -> canonical name, plus aliases.

    Indices run 0..N-1 with no gaps; ``pad_index`` (= N) is reserved for the
    model layer and never appears in data. Every canonical name is an alias
    of itself after normalization.
    """

    names: tuple[str, ...]
    aliases: Mapping[str, int]

    @property
    def size(self) -> int:
        return len(self.names)

    @property
    def pad_index(self) -> int:
        return len(self.names)

    def name_of(self, index: int) -> str:
        return self.names[index]

    @staticmethod
    def from_entries(entries: Iterable[tuple[int, str, Sequence[str]]]) -> "SymptomVocabulary":
        """Build and validate a vocabulary from (index, name, aliases) rows."""
        rows = sorted(entries, key=lambda row: row[0])
        if len(rows) < 2:
            raise ValidationError(f"vocabulary needs at least 2 entries, got {len(rows)}")
        names: list[str] = []
        alias_map: dict[str, int] = {}
        seen_names: set[str] = set()
        for expected, (index, name, extra) in enumerate(rows):
            if index != expected:
                raise ValidationError(
                    f"symptom indices must be exactly 0..N-1: expected {expected}, got {index}"
                )
            canonical = normalize_inquiry(name)
            if not canonical:
                raise ValidationError(f"symptom {index} has an empty name after normalization")
            if canonical in seen_names:
                raise ValidationError(f"duplicate symptom name {name!r} (index {index})")
            seen_names.add(canonical)
            names.append(name)
            for alias in [name, *extra]:
                key = normalize_inquiry(alias)
                if not key:
                    raise ValidationError(f"symptom {index} has an empty alias {alias!r}")
                if key in alias_map and alias_map[key] != index:
                    raise ValidationError(
                        f"alias {alias!r} maps to both {alias_map[key]} and {index}"
                    )
                alias_map[key] = index
        return SymptomVocabulary(names=tuple(names), aliases=MappingProxyType(alias_map))


def load_vocabulary(path: str | Path) -> SymptomVocabulary:
    """Load a JSON Lines vocabulary file.

    Each line is ``{"index": int, "name": str, "aliases": [str, ...]}``.
    """
    entries: list[tuple[int, str, Sequence[str]]] = []
    seen_indices: set[int] = set()
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON in vocabulary file: {exc.msg}", line=lineno) from exc
            if not isinstance(obj, dict):
                raise ParseError("vocabulary line must be a JSON object", line=lineno)
            try:
                index = obj["index"]
                name = obj["name"]
            except KeyError as exc:
                raise ParseError(f"vocabulary line missing key {exc.args[0]!r}", line=lineno) from exc
            aliases = obj.get("aliases", [])
            if not isinstance(index, int) or isinstance(index, bool):
                raise ParseError("'index' must be an integer", line=lineno)
            if not isinstance(name, str):
                raise ParseError("'name' must be a string", line=lineno)
            if not isinstance(aliases, list) or any(not isinstance(a, str) for a in aliases):
                raise ParseError("'aliases' must be a list of strings", line=lineno)
            if index in seen_indices:
                raise ValidationError(f"duplicate symptom index {index} (line {lineno})")
            seen_indices.add(index)
            entries.append((index, name, aliases))
    return SymptomVocabulary.from_entries(entries)


def map_inquiry(text: str, vocab: SymptomVocabulary) -> int | None:
    """Resolve a free-text inquiry to a symptom index, or None if unmapped."""
    return vocab.aliases.get(normalize_inquiry(text))


@dataclass(frozen=True)
class CaseSequence:
    """One recorded consultation: the inquiry order plus gold symptom sets."""

    case_id: str
    symptoms: tuple[int, ...]
    gold_critical: frozenset[int] = frozenset()
    gold_all: frozenset[int] = frozenset()
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "symptoms", tuple(self.symptoms))
        object.__setattr__(self, "gold_critical", frozenset(self.gold_critical))
        object.__setattr__(self, "gold_all", frozenset(self.gold_all))
        if len(self.symptoms) < 1:
            raise ValidationError(f"case {self.case_id!r}: symptom sequence is empty")
        if not self.gold_critical <= self.gold_all:
            raise ValidationError(f"case {self.case_id!r}: gold_critical is not a subset of gold_all")

    def validate_indices(self, n_symbols: int) -> None:
        """Check every index (sequence and gold sets) lies in [0, n_symbols)."""
        for index in (*self.symptoms, *self.gold_all):
            if not 0 <= index < n_symbols:
                raise ValidationError(
                    f"case {self.case_id!r}: symptom index {index} out of range [0, {n_symbols})"
                )


def load_cases(path: str | Path, vocab: SymptomVocabulary | None = None) -> list[CaseSequence]:
    """Load a JSON Lines case corpus; validates indices when a vocabulary is given."""
    cases: list[CaseSequence] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON in case file: {exc.msg}", line=lineno) from exc
            try:
                case = CaseSequence(
                    case_id=str(obj["case_id"]),
                    symptoms=tuple(obj["symptoms"]),
                    gold_critical=frozenset(obj.get("gold_critical", [])),
                    gold_all=frozenset(obj.get("gold_all", [])),
                    metadata={str(k): str(v) for k, v in obj.get("metadata", {}).items()},
                )
            except (KeyError, TypeError) as exc:
                raise ParseError(f"malformed case record: {exc}", line=lineno) from exc
            except ValidationError as exc:
                raise ValidationError(f"line {lineno}: {exc}") from exc
            if vocab is not None:
                try:
                    case.validate_indices(vocab.size)
                except ValidationError as exc:
                    raise ValidationError(f"line {lineno}: {exc}") from exc
            cases.append(case)
    return cases


def write_cases(cases: Sequence[CaseSequence], path: str | Path) -> None:
    """Write a case corpus as JSON Lines (UTF-8, LF)."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for case in cases:
            record = {
                "case_id": case.case_id,
                "symptoms": list(case.symptoms),
                "gold_critical": sorted(case.gold_critical),
                "gold_all": sorted(case.gold_all),
                "metadata": dict(case.metadata),
            }
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class StateActionPair:
    """A sliding-window suffix of a case prefix and the next inquired symptom."""

    state: tuple[int, ...]
    action: int
    case_id: str
    position: int


def extract_pairs(case: CaseSequence, window: int) -> list[StateActionPair]:
    """Extract one (state, action) pair per transition in the case.

    The state at position t is the last ``min(window, t+1)`` symptoms of the
    prefix ending at t; the action is the symptom at t+1. Prefix windows
    shorter than ``window`` are kept as-is; padding is a model-layer concern.
    """
    if window < 1:
        raise ValueError(f"window length must be >= 1, got {window}")
    pairs: list[StateActionPair] = []
    symptoms = case.symptoms
    for t in range(len(symptoms) - 1):
        start = max(0, t + 1 - window)
        pairs.append(
            StateActionPair(
                state=symptoms[start : t + 1],
                action=symptoms[t + 1],
                case_id=case.case_id,
                position=t,
            )
        )
    return pairs


def extract_corpus_pairs(cases: Iterable[CaseSequence], window: int) -> list[StateActionPair]:
    """Extract pairs from every case, preserving corpus order."""
    pairs: list[StateActionPair] = []
    for case in cases:
        pairs.extend(extract_pairs(case, window))
    return pairs
