// Typed client for the consultnav session API. This is the only backend
// surface the UI touches.

export interface SessionCreated {
  session_id: string;
  question: string;
  turn: number;
  status: string;
}

export interface CandidateWire {
  text: string;
  source: 'navigator' | 'core';
}

export interface AnswerResult {
  question?: string;
  candidates?: CandidateWire[];
  turn: number;
  status: string;
  conclusion?: string;
}

export interface TranscriptTurn {
  t: number;
  inquiry: string;
  mapped_symptom: number | null;
  answer: string | null;
  source: string;
  candidates: CandidateWire[];
}

export interface Transcript {
  session_id: string;
  status: string;
  turns: TranscriptTurn[];
  conclusion: string | null;
}

export type ApiErrorKind =
  | 'transport'
  | 'unknown_session'
  | 'session_expired'
  | 'session_closed'
  | 'http';

export class ApiError extends Error {
  kind: ApiErrorKind;
  status?: number;

  constructor(kind: ApiErrorKind, message: string, status?: number) {
    super(message);
    this.kind = kind;
    this.status = status;
  }
}

export type FetchFn = typeof fetch;

export class SessionApi {
  private base: string;
  private fetchFn: FetchFn;

  constructor(baseUrl: string, fetchFn: FetchFn = fetch) {
    this.base = baseUrl.replace(/\/+$/, '') + '/api/v1';
    this.fetchFn = fetchFn;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.base + path, {
        headers: { 'Content-Type': 'application/json' },
        ...init,
      });
    } catch (err) {
      throw new ApiError('transport', `service unreachable: ${String(err)}`);
    }
    if (response.status === 204) {
      return undefined as T;
    }
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      if (response.ok) {
        throw new ApiError('http', 'malformed response body', response.status);
      }
    }
    if (!response.ok) {
      const error = (body ?? {}) as { error?: string; detail?: string };
      const detail = error.detail ?? `HTTP ${response.status}`;
      if (error.error === 'unknown_session') throw new ApiError('unknown_session', detail, 404);
      if (error.error === 'session_expired') throw new ApiError('session_expired', detail, 410);
      if (error.error === 'session_closed') throw new ApiError('session_closed', detail, 409);
      throw new ApiError('http', detail, response.status);
    }
    return body as T;
  }

  createSession(): Promise<SessionCreated> {
    return this.request<SessionCreated>('/sessions', {
      method: 'POST',
      body: JSON.stringify({ mode: 'interactive' }),
    });
  }

  postAnswer(sessionId: string, answer: string): Promise<AnswerResult> {
    return this.request<AnswerResult>(`/sessions/${sessionId}/answer`, {
      method: 'POST',
      body: JSON.stringify({ answer }),
    });
  }

  getTranscript(sessionId: string): Promise<Transcript> {
    return this.request<Transcript>(`/sessions/${sessionId}`, { method: 'GET' });
  }

  deleteSession(sessionId: string): Promise<void> {
    return this.request<void>(`/sessions/${sessionId}`, { method: 'DELETE' });
  }

  health(): Promise<{ status: string; vocab_size: number }> {
    return this.request('/health', { method: 'GET' });
  }
}
