"""Live session registry: bearer tokens bound to pseudonymous handles.

Sessions are intentionally never persisted; a server restart logs everyone
out, which keeps durable state down to handles, profiles, and messages.
"""

from __future__ import annotations

import secrets
import threading
from dataclasses import dataclass
from typing import Callable

from .errors import BadToken, SessionExpired


@dataclass
class Session:
    token: str
    handle: str
    last_seen_ms: int


class SessionRegistry:
    """Token -> session map with idle expiry.

    Expired tokens are remembered (in memory only) so that clients holding
    them get a definitive 410 rather than a generic 401.
    """

    def __init__(self, session_timeout_ms: int, clock: Callable[[], int]):
        self._timeout_ms = session_timeout_ms
        self._clock = clock
        self._lock = threading.Lock()
        self._live: dict[str, Session] = {}
        self._expired: set[str] = set()

    def create(self, handle: str) -> Session:
        with self._lock:
            token = secrets.token_hex(16)
            while token in self._live or token in self._expired:
                token = secrets.token_hex(16)
            session = Session(token=token, handle=handle, last_seen_ms=self._clock())
            self._live[token] = session
            return session

    def authenticate(self, token) -> Session:
        """Look up a live session and refresh its last-seen time."""
        if not isinstance(token, str) or not token:
            raise BadToken("missing token")
        with self._lock:
            if token in self._expired:
                raise SessionExpired("session expired; join again")
            session = self._live.get(token)
            if session is None:
                raise BadToken("unknown token")
            now = self._clock()
            if now - session.last_seen_ms > self._timeout_ms:
                del self._live[token]
                self._expired.add(token)
                raise SessionExpired("session expired; join again")
            session.last_seen_ms = now
            return session

    def touch(self, token: str) -> None:
        with self._lock:
            session = self._live.get(token)
            if session is not None:
                session.last_seen_ms = self._clock()

    def sweep(self, now_ms: int | None = None) -> int:
        """Drop sessions idle past the timeout; returns how many."""
        with self._lock:
            now = self._clock() if now_ms is None else now_ms
            stale = [
                token
                for token, session in self._live.items()
                if now - session.last_seen_ms > self._timeout_ms
            ]
            for token in stale:
                del self._live[token]
                self._expired.add(token)
            return len(stale)

    def last_seen_by_handle(self) -> dict[str, int]:
        with self._lock:
            return {s.handle: s.last_seen_ms for s in self._live.values()}

    def live_count(self) -> int:
        with self._lock:
            return len(self._live)
