"""Structured platform event log.

Every externally observable state change is appended here so that flows
can be audited and asserted after the fact (who joined, which instance
formed, what was relayed, how a match ended). The log is an in-memory
append-only list with an optional JSONL mirror on disk.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

# Lifecycle kinds, in the vocabulary used across the platform.
JOIN = "join"  # a session entered a waiting room
QUEUED = "queued"  # the session is waiting for more players
DEQUEUE = "dequeue"  # the session left a waiting room without playing
INSTANCE = "instance"  # an instance formed and the GM was notified
LOAD = "load"  # members were instructed to load the game UI
READY = "ready"  # one member finished loading; GM notified
RELAY = "relay"  # a client action was dispatched to the GM
DELIVER = "deliver"  # a GM message was delivered to one member
BROADCAST = "broadcast"  # a GM message was delivered to every member
PUSH = "push"  # the GM pushed messages in on its own initiative
OVER = "over"  # the GM declared the instance finished
CLOSED = "closed"  # the instance was sealed after over
DROP = "drop"  # a member disconnected mid-instance
ABORTED = "aborted"  # the instance died before finishing
ERROR = "error"  # an error notice was delivered to sessions
GM_FAULT = "gm_fault"  # the GM was unreachable or answered garbage
SCORE = "score"  # leaderboard credit was applied
AUDIT = "audit"  # a message was dropped or ignored, with a reason
SESSION = "session"  # session opened / expired / closed


@dataclass(frozen=True)
class Event:
    seq: int
    ts: float
    kind: str
    game_id: Optional[str] = None
    instance_id: Optional[str] = None
    session_id: Optional[str] = None
    client_id: Optional[str] = None
    detail: dict = field(default_factory=dict)


class EventLog:
    def __init__(self, clock: Callable[[], float] = time.time, path: Optional[str] = None):
        self._clock = clock
        self._events: list[Event] = []
        self._cond = threading.Condition()
        self._file = open(path, "a", encoding="utf-8") if path else None

    def emit(
        self,
        kind: str,
        game_id: Optional[str] = None,
        instance_id: Optional[str] = None,
        session_id: Optional[str] = None,
        client_id: Optional[str] = None,
        **detail,
    ) -> Event:
        with self._cond:
            event = Event(
                seq=len(self._events) + 1,
                ts=self._clock(),
                kind=kind,
                game_id=game_id,
                instance_id=instance_id,
                session_id=session_id,
                client_id=client_id,
                detail=detail,
            )
            self._events.append(event)
            if self._file is not None:
                record = {
                    "seq": event.seq,
                    "ts": event.ts,
                    "kind": event.kind,
                    "gameId": event.game_id,
                    "instanceId": event.instance_id,
                    "sessionId": event.session_id,
                    "clientId": event.client_id,
                    "detail": event.detail,
                }
                self._file.write(json.dumps(record, default=str) + "\n")
                self._file.flush()
            self._cond.notify_all()
        return event

    def snapshot(
        self,
        kinds: Optional[Iterable[str]] = None,
        game_id: Optional[str] = None,
        instance_id: Optional[str] = None,
    ) -> list[Event]:
        wanted = set(kinds) if kinds is not None else None
        with self._cond:
            events = list(self._events)
        out = []
        for e in events:
            if wanted is not None and e.kind not in wanted:
                continue
            if game_id is not None and e.game_id != game_id:
                continue
            if instance_id is not None and e.instance_id != instance_id:
                continue
            out.append(e)
        return out

    def kinds(self, **filters) -> list[str]:
        return [e.kind for e in self.snapshot(**filters)]

    def wait_for(
        self, predicate: Callable[[Event], bool], timeout: float = 5.0
    ) -> Optional[Event]:
        """Block until an event matching the predicate exists (or time out)."""
        deadline = time.monotonic() + timeout
        seen = 0
        with self._cond:
            while True:
                for e in self._events[seen:]:
                    if predicate(e):
                        return e
                seen = len(self._events)
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return None
                self._cond.wait(remaining)

    def close(self):
        if self._file is not None:
            self._file.close()
            self._file = None
