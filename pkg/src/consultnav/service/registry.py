"""In-memory session registry with idle eviction and per-session locking."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

from ..engine import ConsultationSession
from ..errors import SessionExpiredError, UnknownSessionError


@dataclass
class _Entry:
    session: ConsultationSession
    last_access: float
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionRegistry:
    """Maps session ids to live sessions.

    Ids evicted for idleness stay tombstoned so callers get an explicit
    "expired" error instead of the same not-found error a bogus id gets.
    Per-session locks serialize concurrent requests to one session; distinct
    sessions never contend.
    """

    def __init__(self, idle_seconds: float = 1800.0, clock=time.monotonic):
        self._entries: dict[str, _Entry] = {}
        self._evicted: set[str] = set()
        self._idle_seconds = idle_seconds
        self._clock = clock
        self._lock = threading.Lock()

    def _sweep(self, now: float) -> None:
        stale = [sid for sid, e in self._entries.items() if now - e.last_access > self._idle_seconds]
        for sid in stale:
            del self._entries[sid]
            self._evicted.add(sid)

    def add(self, session: ConsultationSession) -> None:
        with self._lock:
            self._entries[session.session_id] = _Entry(session, self._clock())

    def access(self, session_id: str) -> _Entry:
        """Look up a session, refreshing its idle timer."""
        with self._lock:
            now = self._clock()
            self._sweep(now)
            if session_id in self._evicted:
                raise SessionExpiredError(f"session {session_id} expired after idling")
            entry = self._entries.get(session_id)
            if entry is None:
                raise UnknownSessionError(f"no session with id {session_id}")
            entry.last_access = now
            return entry

    def remove(self, session_id: str) -> None:
        with self._lock:
            self._sweep(self._clock())
            if session_id in self._evicted:
                raise SessionExpiredError(f"session {session_id} expired after idling")
            if session_id not in self._entries:
                raise UnknownSessionError(f"no session with id {session_id}")
            del self._entries[session_id]

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)
