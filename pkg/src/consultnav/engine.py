"""Multi-turn consultation engine: queue, navigator candidates, core selection.

A session alternates between the core dialogue model (which proposes, selects
and concludes) and an optional navigator policy. Each turn runs three steps:

1. queue update — if the previous inquiry mapped to a standard symptom, it is
   appended to a fixed-length FIFO queue of recent symptoms;
2. navigator activation — only when the previous inquiry mapped and the queue
   is non-empty, the policy scores the queue and its top-5 symptoms are
   rendered as standardized candidate questions;
3. selection — the core model picks the next inquiry from the candidates plus
   its own proposal.

The core model also decides termination; a hard cap of 30 turns closes any
session that runs long.
"""

from __future__ import annotations

import logging
import os
import re
import zlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

import httpx
import numpy as np

from .domain import CaseSequence, SymptomVocabulary, map_inquiry, normalize_inquiry
from .errors import ConfigError, TransportError, ValidationError
from .policy import PolicyParameters, forward, top_actions

logger = logging.getLogger(__name__)

CANDIDATE_TEMPLATE = "Do you experience {name}?"
_CANDIDATE_PREFIX = "do you experience "
HARD_TURN_LIMIT = 30
NAVIGATOR_TOP_K = 5


class CoreModel(Protocol):
    """The dialogue-level decision maker: proposes, selects, concludes."""

    def propose_inquiry(self, transcript: Sequence["TurnRecord"]) -> str: ...

    def select_inquiry(self, transcript: Sequence["TurnRecord"], candidates: Sequence[str]) -> int: ...

    def should_terminate(self, transcript: Sequence["TurnRecord"]) -> bool: ...

    def final_conclusion(self, transcript: Sequence["TurnRecord"]) -> str: ...


class PatientResponder(Protocol):
    def answer(self, inquiry: str, mapped_symptom: int | None) -> str: ...


@dataclass(frozen=True)
class InquiryCandidate:
    text: str
    source: str  # "navigator" | "core"
    symptom: int | None


@dataclass
class TurnRecord:
    t: int
    inquiry: str
    mapped_symptom: int | None
    answer: str | None
    source: str  # "core" | "navigator-candidate"
    candidates: tuple[InquiryCandidate, ...]


@dataclass
class ConsultationSession:
    """Live dialogue state; mutated only through start_session/advance/step."""

    session_id: str
    core: CoreModel
    vocab: SymptomVocabulary
    navigator: PolicyParameters | None
    window: int
    turn_limit: int
    seed: int
    queue: list[int] = field(default_factory=list)
    transcript: list[TurnRecord] = field(default_factory=list)
    status: str = "active"  # "active" | "concluded" | "turn-limit"
    conclusion: str | None = None

    @property
    def turn(self) -> int:
        return len(self.transcript)


def resolve_inquiry_symptom(text: str, vocab: SymptomVocabulary) -> int | None:
    """Map an inquiry to a symptom, understanding the candidate template too."""
    mapped = map_inquiry(text, vocab)
    if mapped is not None:
        return mapped
    normalized = normalize_inquiry(text)
    if normalized.startswith(_CANDIDATE_PREFIX):
        return vocab.aliases.get(normalized[len(_CANDIDATE_PREFIX):])
    return None


def start_session(
    core: CoreModel,
    vocab: SymptomVocabulary,
    navigator: PolicyParameters | None = None,
    window: int = 8,
    seed: int = 0,
    turn_limit: int = HARD_TURN_LIMIT,
    session_id: str = "session-0",
) -> ConsultationSession:
    """Open a session; the first inquiry comes from the core alone."""
    if window < 1:
        raise ConfigError(f"queue window must be >= 1, got {window}")
    if not 1 <= turn_limit <= HARD_TURN_LIMIT:
        raise ConfigError(f"turn limit must be in [1, {HARD_TURN_LIMIT}], got {turn_limit}")
    if navigator is not None and window > navigator.config.max_window:
        raise ConfigError(
            f"queue window {window} exceeds navigator max_window {navigator.config.max_window}"
        )
    session = ConsultationSession(
        session_id=session_id,
        core=core,
        vocab=vocab,
        navigator=navigator,
        window=window,
        turn_limit=turn_limit,
        seed=seed,
    )
    opening = core.propose_inquiry(session.transcript)
    session.transcript.append(
        TurnRecord(
            t=0,
            inquiry=opening,
            mapped_symptom=map_inquiry(opening, vocab),
            answer=None,
            source="core",
            candidates=(InquiryCandidate(opening, "core", map_inquiry(opening, vocab)),),
        )
    )
    return session


def _navigator_candidates(session: ConsultationSession) -> list[InquiryCandidate]:
    try:
        probs = forward(session.navigator, list(session.queue))
        top = top_actions(probs, NAVIGATOR_TOP_K)
    except Exception:
        logger.warning(
            "navigator forward failed for session %s; skipping this turn", session.session_id,
            exc_info=True,
        )
        return []
    return [
        InquiryCandidate(
            text=CANDIDATE_TEMPLATE.format(name=session.vocab.name_of(s)),
            source="navigator",
            symptom=s,
        )
        for s in top
    ]


def advance(session: ConsultationSession, answer: str) -> ConsultationSession:
    """Record the answer to the pending inquiry and produce the next turn.

    On a remote-core transport failure the turn is rolled back: the session
    stays active with the inquiry still pending, and the error propagates.
    """
    if session.status != "active":
        raise ValueError(f"session {session.session_id} is not active (status {session.status!r})")
    pending = session.transcript[-1]
    if pending.answer is not None:
        raise ValueError("no pending inquiry awaits an answer")

    pending.answer = answer
    queue_before = list(session.queue)
    try:
        if session.core.should_terminate(session.transcript):
            session.conclusion = session.core.final_conclusion(session.transcript)
            session.status = "concluded"
            return session
        if len(session.transcript) >= session.turn_limit:
            session.conclusion = session.core.final_conclusion(session.transcript)
            session.status = "turn-limit"
            return session

        if pending.mapped_symptom is not None:
            session.queue.append(pending.mapped_symptom)
            if len(session.queue) > session.window:
                session.queue.pop(0)

        nav_candidates: list[InquiryCandidate] = []
        if session.navigator is not None and pending.mapped_symptom is not None and session.queue:
            nav_candidates = _navigator_candidates(session)

        proposal = session.core.propose_inquiry(session.transcript)
        proposal_symptom = map_inquiry(proposal, session.vocab)
        if proposal_symptom is not None:
            nav_candidates = [c for c in nav_candidates if c.symptom != proposal_symptom]
        candidates = (*nav_candidates, InquiryCandidate(proposal, "core", proposal_symptom))

        if nav_candidates:
            index = session.core.select_inquiry(session.transcript, [c.text for c in candidates])
            if not 0 <= index < len(candidates):
                raise ValidationError(
                    f"core selected candidate index {index}, valid range is [0, {len(candidates)})"
                )
            chosen = candidates[index]
        else:
            chosen = candidates[-1]
    except TransportError:
        pending.answer = None
        session.queue[:] = queue_before
        session.status = "active"
        session.conclusion = None
        raise

    session.transcript.append(
        TurnRecord(
            t=len(session.transcript),
            inquiry=chosen.text,
            mapped_symptom=chosen.symptom,
            answer=None,
            source="navigator-candidate" if chosen.source == "navigator" else "core",
            candidates=candidates,
        )
    )
    return session


def step(session: ConsultationSession, patient: PatientResponder) -> ConsultationSession:
    """Let the patient answer the pending inquiry, then advance one turn."""
    if session.status != "active":
        raise ValueError(f"session {session.session_id} is not active (status {session.status!r})")
    pending = session.transcript[-1]
    return advance(session, patient.answer(pending.inquiry, pending.mapped_symptom))


class ReplayPatient:
    """Deterministic responder: confirms exactly the case's gold symptoms."""

    def __init__(self, case: CaseSequence):
        self.case = case

    def answer(self, inquiry: str, mapped_symptom: int | None) -> str:
        if mapped_symptom is not None and mapped_symptom in self.case.gold_all:
            return "yes"
        return "no"


def session_to_dict(session: ConsultationSession) -> dict:
    """Transcript export schema used by files, the HTTP API, and metrics."""
    return {
        "session_id": session.session_id,
        "status": session.status,
        "turns": [
            {
                "t": turn.t,
                "inquiry": turn.inquiry,
                "mapped_symptom": turn.mapped_symptom,
                "answer": turn.answer,
                "source": turn.source,
                "candidates": [{"text": c.text, "source": c.source} for c in turn.candidates],
            }
            for turn in session.transcript
        ],
        "conclusion": session.conclusion,
    }


def run_batch(
    cases: Sequence[CaseSequence],
    core_provider: CoreModel | Callable[[CaseSequence], CoreModel],
    vocab: SymptomVocabulary,
    navigator: PolicyParameters | None = None,
    window: int = 8,
    seed: int = 0,
    turn_limit: int = HARD_TURN_LIMIT,
) -> list[dict]:
    """One replay session per case, run to completion; deterministic per seed."""
    transcripts: list[dict] = []
    for case in cases:
        if not case.gold_all:
            logger.warning("case %s skipped: empty gold_all set", case.case_id)
            continue
        core = core_provider(case) if callable(core_provider) else core_provider
        session = start_session(
            core,
            vocab,
            navigator=navigator,
            window=window,
            seed=seed,
            turn_limit=turn_limit,
            session_id=case.case_id,
        )
        patient = ReplayPatient(case)
        while session.status == "active":
            step(session, patient)
        transcripts.append(session_to_dict(session))
    return transcripts


def corpus_symptom_frequency(cases: Iterable[CaseSequence], n_symbols: int) -> np.ndarray:
    """How often each symptom appears across all recorded sequences."""
    counts = np.zeros(n_symbols, dtype=np.int64)
    for case in cases:
        for s in case.symptoms:
            counts[s] += 1
    return counts


@dataclass(frozen=True)
class ScriptedCoreConfig:
    """Knobs for the deterministic core-model stand-in.

    Defaults give an omniscient core: it knows the whole gold set and only
    proposes unasked gold symptoms. Lower ``known_fraction`` to model a core
    with partial case knowledge, set ``divergence_period`` k so every k-th
    proposal is a generic corpus-frequent symptom instead of a known gold one,
    and ``offscript_period`` k so every k-th proposal is free text that does
    not map into the standard symptom space at all.
    """

    known_fraction: float = 1.0
    divergence_period: int = 0
    offscript_period: int = 0
    selection: str = "prefer-gold"  # or "own"
    coverage_threshold: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.known_fraction <= 1.0:
            raise ConfigError(f"known_fraction must be in (0, 1], got {self.known_fraction}")
        if self.selection not in ("prefer-gold", "own"):
            raise ConfigError(f"selection must be 'prefer-gold' or 'own', got {self.selection!r}")
        if not 0.0 < self.coverage_threshold <= 1.0:
            raise ConfigError(f"coverage_threshold must be in (0, 1], got {self.coverage_threshold}")
        if self.divergence_period < 0 or self.offscript_period < 0:
            raise ConfigError("periods must be >= 0 (0 disables)")


class ScriptedCore:
    """Deterministic stand-in for the dialogue LLM, scripted against one case.

    Proposes the unasked known-gold symptom with the highest corpus frequency;
    selects the first candidate that maps to any unasked gold symptom (it can
    recognize good questions it could not generate); terminates once every
    known critical symptom has been asked and known-gold coverage reaches the
    configured threshold.
    """

    def __init__(
        self,
        case: CaseSequence,
        vocab: SymptomVocabulary,
        symptom_frequency: np.ndarray,
        config: ScriptedCoreConfig = ScriptedCoreConfig(),
    ):
        self.case = case
        self.vocab = vocab
        self.frequency = np.asarray(symptom_frequency)
        self.config = config
        self._last_proposal: str | None = None

        gold = sorted(case.gold_all)
        rng = np.random.default_rng([config.seed, zlib.crc32(case.case_id.encode("utf-8"))])
        k = max(1, round(config.known_fraction * len(gold)))
        known = rng.choice(gold, size=min(k, len(gold)), replace=False) if gold else []
        self.known_gold = frozenset(int(s) for s in known)
        self.known_critical = self.known_gold & case.gold_critical

    def _asked(self, transcript: Sequence[TurnRecord]) -> set[int]:
        return {t.mapped_symptom for t in transcript if t.mapped_symptom is not None}

    def _by_frequency(self, symptoms: Iterable[int]) -> list[int]:
        return sorted(symptoms, key=lambda s: (-self.frequency[s], s))

    def _question_for(self, symptom: int) -> str:
        return f"{self.vocab.name_of(symptom).capitalize()}?"

    def propose_inquiry(self, transcript: Sequence[TurnRecord]) -> str:
        turn_no = len(transcript)
        asked = self._asked(transcript)
        cfg = self.config

        proposal: str | None = None
        if cfg.offscript_period and turn_no > 0 and turn_no % cfg.offscript_period == 0:
            proposal = f"Anything else worth mentioning about episode {turn_no}?"
        elif cfg.divergence_period and turn_no > 0 and turn_no % cfg.divergence_period == 0:
            fresh = self._by_frequency(s for s in range(self.vocab.size) if s not in asked)
            if fresh:
                proposal = self._question_for(fresh[0])
        if proposal is None:
            fresh_gold = self._by_frequency(s for s in self.known_gold if s not in asked)
            if fresh_gold:
                proposal = self._question_for(fresh_gold[0])
            else:
                fresh = self._by_frequency(s for s in range(self.vocab.size) if s not in asked)
                proposal = (
                    self._question_for(fresh[0])
                    if fresh
                    else "Is there anything else you would like to mention?"
                )
        self._last_proposal = proposal
        return proposal

    def select_inquiry(self, transcript: Sequence[TurnRecord], candidates: Sequence[str]) -> int:
        own = len(candidates) - 1
        if self._last_proposal in candidates:
            own = list(candidates).index(self._last_proposal)
        if self.config.selection == "own":
            return own
        asked = self._asked(transcript)
        for i, text in enumerate(candidates):
            symptom = resolve_inquiry_symptom(text, self.vocab)
            if symptom is not None and symptom not in asked and symptom in self.case.gold_all:
                return i
        return own

    def should_terminate(self, transcript: Sequence[TurnRecord]) -> bool:
        asked = self._asked(transcript)
        if not self.known_critical <= asked:
            return False
        covered = len(asked & self.known_gold)
        return covered >= self.config.coverage_threshold * len(self.known_gold)

    def final_conclusion(self, transcript: Sequence[TurnRecord]) -> str:
        confirmed = [
            self.vocab.name_of(t.mapped_symptom)
            for t in transcript
            if t.mapped_symptom is not None and t.answer == "yes"
        ]
        seen: list[str] = []
        for name in confirmed:
            if name not in seen:
                seen.append(name)
        listing = "; ".join(seen) if seen else "no standardized symptoms confirmed"
        return f"Consultation summary after {len(transcript)} turns. Confirmed: {listing}."


def scripted_core_provider(
    corpus: Sequence[CaseSequence],
    vocab: SymptomVocabulary,
    config: ScriptedCoreConfig = ScriptedCoreConfig(),
) -> Callable[[CaseSequence], ScriptedCore]:
    """Factory binding corpus frequencies once; run_batch calls it per case."""
    frequency = corpus_symptom_frequency(corpus, vocab.size)

    def provider(case: CaseSequence) -> ScriptedCore:
        return ScriptedCore(case, vocab, frequency, config)

    return provider


@dataclass(frozen=True)
class RemoteCoreConfig:
    """Connection settings for a chat-completion-style core endpoint."""

    base_url: str
    model: str = "core-model"
    timeout_seconds: float = 30.0
    api_key_env: str = "CORE_API_KEY"


_SYSTEM_PROMPT = (
    "You are the lead physician in a structured digestive-health consultation. "
    "Ask one focused question at a time, keep questions short, and conclude "
    "with a structured summary when enough information has been collected."
)

_INT_RE = re.compile(r"-?\d+")


class RemoteCore:
    """Core model backed by an HTTP chat-completion endpoint.

    HTTP-level failures raise TransportError; a selection reply that cannot be
    parsed as a valid candidate number falls back to the core's own proposal.
    """

    def __init__(self, config: RemoteCoreConfig, client: httpx.Client | None = None):
        self.config = config
        self._client = client or httpx.Client(timeout=config.timeout_seconds)
        self._last_proposal: str | None = None

    def _chat(self, content: str, transcript: Sequence[TurnRecord]) -> str:
        messages = [{"role": "system", "content": _SYSTEM_PROMPT}]
        for turn in transcript:
            messages.append({"role": "assistant", "content": turn.inquiry})
            if turn.answer is not None:
                messages.append({"role": "user", "content": turn.answer})
        messages.append({"role": "user", "content": content})
        headers = {}
        api_key = os.environ.get(self.config.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        try:
            response = self._client.post(
                self.config.base_url.rstrip("/") + "/chat/completions",
                json={"model": self.config.model, "messages": messages, "temperature": 0},
                headers=headers,
            )
            response.raise_for_status()
            payload = response.json()
        except httpx.HTTPError as exc:
            raise TransportError(f"core endpoint request failed: {exc}") from exc
        except ValueError as exc:
            raise TransportError(f"core endpoint returned non-JSON payload: {exc}") from exc
        try:
            return str(payload["choices"][0]["message"]["content"]).strip()
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"core endpoint payload missing completion text: {exc}") from exc

    def propose_inquiry(self, transcript: Sequence[TurnRecord]) -> str:
        text = self._chat("Ask the single most useful next question for this patient.", transcript)
        self._last_proposal = text
        return text

    def select_inquiry(self, transcript: Sequence[TurnRecord], candidates: Sequence[str]) -> int:
        menu = "\n".join(f"{i}: {text}" for i, text in enumerate(candidates))
        reply = self._chat(
            "Choose the most clinically useful next question from this list. "
            f"Reply with only its number.\n{menu}",
            transcript,
        )
        match = _INT_RE.search(reply)
        if match is not None:
            index = int(match.group())
            if 0 <= index < len(candidates):
                return index
        logger.warning("unparseable selection reply %r; falling back to own proposal", reply)
        if self._last_proposal in candidates:
            return list(candidates).index(self._last_proposal)
        return len(candidates) - 1

    def should_terminate(self, transcript: Sequence[TurnRecord]) -> bool:
        reply = self._chat(
            "Is enough information collected to conclude? Reply with exactly CONTINUE or CONCLUDE.",
            transcript,
        )
        return "conclude" in reply.lower()

    def final_conclusion(self, transcript: Sequence[TurnRecord]) -> str:
        return self._chat(
            "Provide the final structured conclusion for this consultation.", transcript
        )
