"""Player sessions: identity binding, ordered outboxes, liveness.

Each session owns a FIFO outbox of protocol messages. Delivery is a
cursor-based long poll: the client sends the last sequence number it has
seen and either gets everything newer (in enqueue order) or an empty list
once the server-side linger expires. Advancing the cursor acknowledges
delivery, which gives exactly-once semantics per connected epoch. An
invalid cursor replays from the earliest retained message.

A session goes stale when nothing has been heard from it for the liveness
window; the platform reaper then treats it as a disconnect.
"""

from __future__ import annotations

import secrets
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from playlab.protocol import Message
from playlab.users import Identity


class UnknownSessionError(Exception):
    pass


@dataclass
class ClientSession:
    session_id: str
    identity: Identity
    game_id: str
    created_at: float
    last_seen: float
    instance_ref: Optional[tuple[str, str]] = None  # (instance_id, client_id)
    queued: bool = False
    session_score: float = 0.0  # guest-visible score, never persisted
    closed: bool = False
    outbox: list[tuple[int, Message]] = field(default_factory=list, repr=False)
    next_seq: int = 1
    cond: threading.Condition = field(default_factory=threading.Condition, repr=False)

    @property
    def is_guest(self) -> bool:
        return self.identity.is_guest


class SessionManager:
    def __init__(
        self,
        clock: Callable[[], float] = time.time,
        max_outbox: int = 1000,
        poll_linger_s: float = 25.0,
    ):
        self._clock = clock
        self._max_outbox = max_outbox
        self._linger = poll_linger_s
        self._sessions: dict[str, ClientSession] = {}
        self._lock = threading.RLock()

    def open(self, identity: Identity, game_id: str) -> ClientSession:
        now = self._clock()
        session = ClientSession(
            session_id="s" + secrets.token_urlsafe(18),
            identity=identity,
            game_id=game_id,
            created_at=now,
            last_seen=now,
        )
        with self._lock:
            self._sessions[session.session_id] = session
        return session

    def get(self, session_id: str, touch: bool = False) -> ClientSession:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None or session.closed:
            raise UnknownSessionError("unknown or expired session")
        if touch:
            with session.cond:
                session.last_seen = self._clock()
        return session

    def enqueue(self, session_id: str, message: Message) -> bool:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            return False
        with session.cond:
            if session.closed:
                return False
            session.outbox.append((session.next_seq, message))
            session.next_seq += 1
            if len(session.outbox) > self._max_outbox:
                session.outbox = session.outbox[-self._max_outbox :]
            session.cond.notify_all()
        return True

    def deliver_pending(
        self, session_id: str, cursor, max_wait_s: Optional[float] = None
    ) -> tuple[list[Message], int]:
        """Return (messages newer than cursor, new cursor), long-polling."""
        session = self.get(session_id, touch=True)
        linger = self._linger if max_wait_s is None else max_wait_s
        deadline = time.monotonic() + max(linger, 0.0)
        with session.cond:
            cursor = self._normalize_cursor(session, cursor)
            while True:
                pending = [(seq, m) for seq, m in session.outbox if seq > cursor]
                if pending or session.closed:
                    break
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                session.cond.wait(remaining)
            # A long-parked poll is still a live connection.
            session.last_seen = self._clock()
            if not pending:
                return [], cursor
            return [m for _, m in pending], pending[-1][0]

    @staticmethod
    def _normalize_cursor(session: ClientSession, cursor) -> int:
        try:
            value = int(cursor)
        except (TypeError, ValueError):
            return 0  # replay from the earliest retained message
        if value < 0 or value >= session.next_seq:
            return 0
        return value

    def credit_guest(self, session_id: str, amount: float) -> None:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            return
        with session.cond:
            session.session_score += amount

    def bind_instance(self, session_id: str, instance_id: str, client_id: str) -> None:
        session = self.get(session_id)
        with session.cond:
            session.instance_ref = (instance_id, client_id)
            session.queued = False

    def release_instance(self, session_id: str) -> None:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            return
        with session.cond:
            session.instance_ref = None

    def set_queued(self, session_id: str, queued: bool) -> None:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            return
        with session.cond:
            session.queued = queued

    def expire(self, now: float, window_s: float) -> list[ClientSession]:
        """Close and return sessions silent for longer than the window."""
        with self._lock:
            stale = [
                s
                for s in self._sessions.values()
                if not s.closed and now - s.last_seen > window_s
            ]
            for session in stale:
                del self._sessions[session.session_id]
        for session in stale:
            with session.cond:
                session.closed = True
                session.cond.notify_all()
        return stale

    def close(self, session_id: str) -> Optional[ClientSession]:
        with self._lock:
            session = self._sessions.pop(session_id, None)
        if session is not None:
            with session.cond:
                session.closed = True
                session.cond.notify_all()
        return session

    def all_sessions(self) -> list[ClientSession]:
        with self._lock:
            return list(self._sessions.values())

    def wake_all(self) -> None:
        for session in self.all_sessions():
            with session.cond:
                session.cond.notify_all()

    def count(self) -> int:
        with self._lock:
            return len(self._sessions)
