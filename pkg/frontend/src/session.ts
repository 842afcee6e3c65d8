// Session state machine behind the UI. All service calls are sequential per
// session; state changes only happen in response handlers, and the in-flight
// flag makes a second concurrent answer (or a double-started session)
// structurally impossible.

import { ApiError, SessionApi } from './api.js';

export type Phase =
  | 'idle'
  | 'starting'
  | 'active'
  | 'concluded'
  | 'turn-limit'
  | 'expired'
  | 'error';

export interface TranscriptEntry {
  turn: number;
  question: string;
  answer: string | null;
  source: string; // badge: "core" | "navigator-candidate" (service annotation)
}

export interface PanelCandidate {
  text: string;
  source: 'navigator' | 'core';
  selected: boolean;
}

export interface UiSessionState {
  sessionId: string | null;
  phase: Phase;
  question: string | null;
  turn: number;
  controlsEnabled: boolean;
  inFlight: boolean;
  pendingAnswer: string | null; // kept across a transport failure for retry
  transcript: TranscriptEntry[];
  candidates: PanelCandidate[];
  banner: string | null;
  conclusion: string | null;
}

export type Listener = (state: UiSessionState) => void;

function initialState(): UiSessionState {
  return {
    sessionId: null,
    phase: 'idle',
    question: null,
    turn: -1,
    controlsEnabled: false,
    inFlight: false,
    pendingAnswer: null,
    transcript: [],
    candidates: [],
    banner: null,
    conclusion: null,
  };
}

export class SessionController {
  readonly state: UiSessionState;
  private api: SessionApi;
  private listeners: Listener[] = [];

  constructor(api: SessionApi) {
    this.api = api;
    this.state = initialState();
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  /** Create a session and render the first question. Re-entrant calls while a
   *  start is pending (double click) are ignored: exactly one session. */
  async start(): Promise<void> {
    const s = this.state;
    if (s.phase === 'starting' || s.sessionId !== null) return;
    s.phase = 'starting';
    s.banner = null;
    this.emit();
    try {
      const created = await this.api.createSession();
      s.sessionId = created.session_id;
      s.question = created.question;
      s.turn = created.turn;
      s.phase = 'active';
      s.controlsEnabled = true;
      s.candidates = [{ text: created.question, source: 'core', selected: true }];
      this.emit();
    } catch (err) {
      // no phantom session: sessionId stays null, start can be retried
      s.phase = 'error';
      s.banner = err instanceof ApiError ? `service unavailable: ${err.message}` : String(err);
      this.emit();
    }
  }

  /** Submit the answer to the current question. While a request is in flight
   *  further submissions are ignored (double-submit guard). */
  async submitAnswer(answer: string): Promise<void> {
    const s = this.state;
    if (s.phase !== 'active' || s.inFlight || s.sessionId === null || s.question === null) {
      return;
    }
    s.inFlight = true;
    s.controlsEnabled = false;
    s.pendingAnswer = answer;
    s.banner = null;
    this.emit();

    const answeredTurn = s.turn;
    const answeredQuestion = s.question;
    const answeredSource = this.currentSource();
    let result;
    try {
      result = await this.api.postAnswer(s.sessionId, answer);
    } catch (err) {
      s.inFlight = false;
      if (err instanceof ApiError && (err.kind === 'session_expired' || err.kind === 'unknown_session')) {
        s.phase = 'expired';
        s.banner = 'This session has expired. Start a new consultation.';
        s.pendingAnswer = null;
      } else {
        // transport trouble: the turn was rolled back server-side; keep the
        // answer so a retry resubmits it verbatim
        s.controlsEnabled = true;
        s.banner = 'Could not reach the service. Your answer was kept - retry.';
      }
      this.emit();
      return;
    }

    s.transcript.push({
      turn: answeredTurn,
      question: answeredQuestion,
      answer,
      source: answeredSource,
    });
    s.inFlight = false;
    s.pendingAnswer = null;
    s.turn = result.turn;

    if (result.status === 'active' && result.question) {
      s.question = result.question;
      s.candidates = (result.candidates ?? []).map((c) => ({
        text: c.text,
        source: c.source,
        selected: c.text === result.question,
      }));
      s.controlsEnabled = true;
    } else {
      s.phase = result.status === 'turn-limit' ? 'turn-limit' : 'concluded';
      s.question = null;
      s.candidates = [];
      s.conclusion = result.conclusion ?? null;
      s.controlsEnabled = false;
    }
    this.emit();
  }

  /** Resubmit the answer preserved across a transport failure. */
  async retryPending(): Promise<void> {
    const pending = this.state.pendingAnswer;
    if (pending !== null && this.state.phase === 'active' && !this.state.inFlight) {
      await this.submitAnswer(pending);
    }
  }

  /** Replace the local transcript with the service's (reconnect path). */
  async reconcile(): Promise<void> {
    const s = this.state;
    if (s.sessionId === null) return;
    let remote;
    try {
      remote = await this.api.getTranscript(s.sessionId);
    } catch (err) {
      if (err instanceof ApiError && (err.kind === 'session_expired' || err.kind === 'unknown_session')) {
        s.phase = 'expired';
        s.banner = 'This session has expired. Start a new consultation.';
        this.emit();
      }
      return;
    }
    s.transcript = remote.turns
      .filter((t) => t.answer !== null)
      .map((t) => ({ turn: t.t, question: t.inquiry, answer: t.answer, source: t.source }));
    if (remote.status !== 'active') {
      s.phase = remote.status === 'turn-limit' ? 'turn-limit' : 'concluded';
      s.conclusion = remote.conclusion;
      s.question = null;
      s.candidates = [];
      s.controlsEnabled = false;
    }
    this.emit();
  }

  /** Drop local state so a fresh consultation can start (after expiry). */
  reset(): void {
    const fresh = initialState();
    Object.assign(this.state, fresh);
    this.emit();
  }

  private currentSource(): string {
    const selected = this.state.candidates.find((c) => c.selected);
    if (selected === undefined) return 'core';
    return selected.source === 'navigator' ? 'navigator-candidate' : 'core';
  }
}
