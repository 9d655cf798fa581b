"""Waiting rooms, instance formation, and the instance state machine.

Matching policy: the queue is strictly FIFO. When a player joins, size-k
subsets of the queue are scanned in seniority order (combinations of queue
positions in lexicographic order, so the oldest waiter is anchored first)
and the first subset satisfying the grouping predicate forms an instance.
With no predicate this degenerates to "the k oldest waiters".

State machine: Loading -> Running (all members ready), Loading/Running ->
Aborted (disconnect, GM fault, timeout, shutdown), Running -> Over (GM sent
`over`). No other transitions exist.

Methods mutate instance/room state and return an ordered list of effects
(messages to dispatch to the GM, notices to deliver to sessions, score
credits, log notes). The caller executes them; this keeps the lifecycle
logic synchronous and independently testable.
"""

from __future__ import annotations

import itertools
import secrets
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping, Optional, Sequence

from playlab import events as ev
from playlab.protocol import Message, SystemTopic, system_to_client, system_to_gm


class MatchmakingError(Exception):
    pass


class InstanceState(Enum):
    LOADING = "loading"
    RUNNING = "running"
    OVER = "over"
    ABORTED = "aborted"


_LIVE = (InstanceState.LOADING, InstanceState.RUNNING)


# -- effects ------------------------------------------------------------------


@dataclass(frozen=True)
class GmNotify:
    """Dispatch a platform event to the instance's GM (responses get routed)."""

    instance: "GameInstance"
    message: Message


@dataclass(frozen=True)
class Deliver:
    session_id: str
    message: Message


@dataclass(frozen=True)
class Credit:
    game_id: str
    instance_id: str
    scores: Mapping


@dataclass(frozen=True)
class Release:
    """Unbind a session from its finished instance."""

    session_id: str


@dataclass(frozen=True)
class Dequeued:
    session_id: str
    game_id: str


@dataclass(frozen=True)
class Note:
    """An event-log entry."""

    kind: str
    fields: dict


def note(kind: str, **fields) -> Note:
    return Note(kind, fields)


Effect = Any


# -- grouping -----------------------------------------------------------------


@dataclass(frozen=True)
class GroupingConstraint:
    required_players: int
    predicate: Optional[Callable[[Sequence[Mapping]], bool]] = None

    def __post_init__(self):
        if self.required_players < 1:
            raise MatchmakingError("required_players must be >= 1")

    def admits(self, snapshots: Sequence[Mapping]) -> bool:
        assert len(snapshots) == self.required_players
        if self.predicate is None:
            return True
        return bool(self.predicate(snapshots))


def same_field(name: str) -> Callable[[Sequence[Mapping]], bool]:
    """All candidates share one non-missing value for `name`."""

    def check(snapshots):
        values = [s.get(name) for s in snapshots]
        return values[0] is not None and all(v == values[0] for v in values)

    return check


def distinct_field(name: str) -> Callable[[Sequence[Mapping]], bool]:
    """All candidates have pairwise distinct non-missing values for `name`."""

    def check(snapshots):
        values = [s.get(name) for s in snapshots]
        if any(v is None for v in values):
            return False
        return len(set(values)) == len(values)

    return check


def score_band(width: float, name: str = "score") -> Callable[[Sequence[Mapping]], bool]:
    """Candidate scores all fit inside a band of the given width."""

    def check(snapshots):
        values = []
        for s in snapshots:
            v = s.get(name)
            if not isinstance(v, (int, float)):
                return False
            values.append(v)
        return max(values) - min(values) <= width

    return check


def build_predicate(spec: Mapping) -> Optional[Callable[[Sequence[Mapping]], bool]]:
    """Build a grouping predicate from a declarative game-manifest spec."""
    rule = (spec or {}).get("rule", "none")
    if rule in ("none", "", None):
        return None
    if rule == "same":
        return same_field(spec["field"])
    if rule == "distinct":
        return distinct_field(spec["field"])
    if rule == "score_band":
        return score_band(float(spec["band"]), spec.get("field", "score"))
    raise MatchmakingError(f"unknown grouping rule: {rule!r}")


# -- domain objects -------------------------------------------------------------


@dataclass
class QueueEntry:
    session_id: str
    joined_at: float
    snapshot: dict


class WaitingRoom:
    def __init__(self, game_id: str, constraint: GroupingConstraint):
        self.game_id = game_id
        self.constraint = constraint
        self.entries: list[QueueEntry] = []
        self.lock = threading.RLock()

    def positions(self) -> list[str]:
        with self.lock:
            return [e.session_id for e in self.entries]


@dataclass(frozen=True)
class InstanceMember:
    client_id: str
    session_id: str


class GameInstance:
    def __init__(self, instance_id: str, game_id: str, members: Sequence[InstanceMember], created_at: float):
        self.instance_id = instance_id
        self.game_id = game_id
        self.members = tuple(members)
        self.state = InstanceState.LOADING
        self.ready: set[str] = set()
        self.created_at = created_at
        self.closed_at: Optional[float] = None
        self.state_lock = threading.RLock()
        # Serializes every GM exchange for this instance (outbound dispatch
        # and inbound push), so the GM never sees interleaved requests.
        self.dispatch_lock = threading.RLock()
        self._by_client = {m.client_id: m for m in self.members}

    def member(self, client_id: str) -> Optional[InstanceMember]:
        return self._by_client.get(client_id)

    def client_ids(self) -> list[str]:
        return [m.client_id for m in self.members]

    def session_ids(self) -> list[str]:
        return [m.session_id for m in self.members]

    @property
    def is_live(self) -> bool:
        return self.state in _LIVE

    def snapshot(self) -> dict:
        with self.state_lock:
            return {
                "instanceId": self.instance_id,
                "gameId": self.game_id,
                "state": self.state.value,
                "members": self.client_ids(),
                "ready": sorted(self.ready),
            }


# -- the manager -----------------------------------------------------------------


def _default_instance_id() -> str:
    return "i" + secrets.token_hex(8)


def _default_client_id() -> str:
    return "c" + secrets.token_hex(8)


class InstanceManager:
    def __init__(
        self,
        clock: Callable[[], float] = time.time,
        instance_id_factory: Callable[[], str] = _default_instance_id,
        client_id_factory: Callable[[], str] = _default_client_id,
    ):
        self._clock = clock
        self._new_instance_id = instance_id_factory
        self._new_client_id = client_id_factory
        self._rooms: dict[str, WaitingRoom] = {}
        self._instances: dict[str, GameInstance] = {}
        self._lock = threading.RLock()

    # -- rooms -----------------------------------------------------------------

    def room(self, game_id: str, constraint: Optional[GroupingConstraint] = None) -> WaitingRoom:
        with self._lock:
            existing = self._rooms.get(game_id)
            if existing is None:
                if constraint is None:
                    raise MatchmakingError(f"no waiting room for game {game_id}")
                existing = WaitingRoom(game_id, constraint)
                self._rooms[game_id] = existing
            elif constraint is not None:
                existing.constraint = constraint
            return existing

    def instance(self, instance_id: str) -> Optional[GameInstance]:
        with self._lock:
            return self._instances.get(instance_id)

    def live_instances(self) -> list[GameInstance]:
        with self._lock:
            return [i for i in self._instances.values() if i.is_live]

    # -- joining ------------------------------------------------------------------

    def enqueue_player(
        self,
        game_id: str,
        session_id: str,
        snapshot: Mapping,
        constraint: Optional[GroupingConstraint] = None,
    ) -> tuple[Optional[GameInstance], list[Effect]]:
        """Append the session to the room, then try to form an instance.

        Returns (instance_or_None, effects). On formation the members are
        already removed from the queue, atomically with selection.
        """
        room = self.room(game_id, constraint)
        with room.lock:
            if any(e.session_id == session_id for e in room.entries):
                raise MatchmakingError("session is already waiting in this room")
            room.entries.append(QueueEntry(session_id, self._clock(), dict(snapshot)))
            formed, effects = self._try_form_locked(room)
        if formed is None:
            effects = effects + [
                note(ev.QUEUED, game_id=game_id, session_id=session_id),
                Deliver(
                    session_id,
                    system_to_client(
                        "queued",
                        params={
                            "gameId": game_id,
                            "waiting": len(room.positions()),
                            "requiredPlayers": room.constraint.required_players,
                        },
                    ),
                ),
            ]
        return formed, effects

    def try_form_instance(self, room: WaitingRoom) -> tuple[Optional[GameInstance], list[Effect]]:
        with room.lock:
            return self._try_form_locked(room)

    def _try_form_locked(self, room: WaitingRoom) -> tuple[Optional[GameInstance], list[Effect]]:
        k = room.constraint.required_players
        if len(room.entries) < k:
            return None, []
        chosen: Optional[tuple[int, ...]] = None
        for combo in itertools.combinations(range(len(room.entries)), k):
            snapshots = [room.entries[i].snapshot for i in combo]
            if room.constraint.admits(snapshots):
                chosen = combo
                break
        if chosen is None:
            return None, []

        picked = [room.entries[i] for i in chosen]
        room.entries = [e for i, e in enumerate(room.entries) if i not in set(chosen)]

        instance_id = self._new_instance_id()
        client_ids: list[str] = []
        while len(client_ids) < k:
            cid = self._new_client_id()
            if cid not in client_ids:
                client_ids.append(cid)
        members = [InstanceMember(cid, e.session_id) for cid, e in zip(client_ids, picked)]
        instance = GameInstance(instance_id, room.game_id, members, self._clock())
        with self._lock:
            self._instances[instance_id] = instance

        effects: list[Effect] = [
            note(
                ev.INSTANCE,
                game_id=room.game_id,
                instance_id=instance_id,
                members=instance.client_ids(),
            ),
            GmNotify(instance, system_to_gm(SystemTopic.INSTANCE.value, instance_id)),
            note(ev.LOAD, game_id=room.game_id, instance_id=instance_id),
        ]
        for member in members:
            effects.append(Dequeued(member.session_id, room.game_id))
            effects.append(
                Deliver(
                    member.session_id,
                    system_to_client(
                        SystemTopic.INSTANCE.value,
                        instance_id=instance_id,
                        client_id=member.client_id,
                        params={
                            "gameId": room.game_id,
                            "players": k,
                        },
                    ),
                )
            )
        return instance, effects

    def dequeue(self, game_id: str, session_id: str, notice: Optional[Message] = None) -> list[Effect]:
        with self._lock:
            room = self._rooms.get(game_id)
        if room is None:
            return []
        with room.lock:
            before = len(room.entries)
            room.entries = [e for e in room.entries if e.session_id != session_id]
            removed = len(room.entries) < before
        if not removed:
            return []
        effects: list[Effect] = [
            Dequeued(session_id, game_id),
            note(ev.DEQUEUE, game_id=game_id, session_id=session_id),
        ]
        if notice is not None:
            effects.append(Deliver(session_id, notice))
        return effects

    # -- lifecycle -------------------------------------------------------------------

    def mark_client_ready(self, instance_id: str, client_id: str) -> list[Effect]:
        instance = self.instance(instance_id)
        if instance is None:
            raise MatchmakingError(f"unknown instance {instance_id}")
        with instance.state_lock:
            if not instance.is_live:
                raise MatchmakingError(f"instance is {instance.state.value}")
            if instance.member(client_id) is None:
                raise MatchmakingError("client is not a member of this instance")
            if client_id in instance.ready:
                return []  # duplicate ready: no second GM notification
            instance.ready.add(client_id)
            became_running = (
                instance.state is InstanceState.LOADING
                and instance.ready == set(instance.client_ids())
            )
            if became_running:
                instance.state = InstanceState.RUNNING
        return [
            note(
                ev.READY,
                game_id=instance.game_id,
                instance_id=instance_id,
                client_id=client_id,
                running=became_running,
            ),
            GmNotify(
                instance,
                system_to_gm(SystemTopic.READY.value, instance_id, client_id=client_id),
            ),
        ]

    def handle_disconnect(self, instance_id: str, client_id: str, reason: str = "disconnect") -> list[Effect]:
        instance = self.instance(instance_id)
        if instance is None:
            return []
        with instance.state_lock:
            if not instance.is_live:
                return []  # drop after over/abort is a no-op
            if instance.member(client_id) is None:
                raise MatchmakingError("client is not a member of this instance")
            instance.state = InstanceState.ABORTED
            instance.closed_at = self._clock()

        effects: list[Effect] = [
            note(
                ev.DROP,
                game_id=instance.game_id,
                instance_id=instance_id,
                client_id=client_id,
                reason=reason,
            )
        ]
        dropped_notice = system_to_client(
            SystemTopic.DROP.value,
            instance_id=instance_id,
            broadcast=True,
            params={"clientId": client_id, "reason": reason},
        )
        for member in instance.members:
            if member.client_id == client_id:
                continue
            effects.append(Deliver(member.session_id, dropped_notice))
        effects.append(
            GmNotify(
                instance,
                system_to_gm(SystemTopic.DROP.value, instance_id, client_id=client_id),
            )
        )
        effects.append(
            note(ev.ABORTED, game_id=instance.game_id, instance_id=instance_id, reason=reason)
        )
        for member in instance.members:
            effects.append(Release(member.session_id))
        return effects

    def close_instance(self, instance_id: str, scores: Optional[Mapping] = None) -> list[Effect]:
        instance = self.instance(instance_id)
        if instance is None:
            return [note(ev.AUDIT, instance_id=instance_id, reason="over for unknown instance")]
        with instance.state_lock:
            if instance.state is not InstanceState.RUNNING:
                return [
                    note(
                        ev.AUDIT,
                        game_id=instance.game_id,
                        instance_id=instance_id,
                        reason=f"over ignored in state {instance.state.value}",
                    )
                ]
            instance.state = InstanceState.OVER
            instance.closed_at = self._clock()

        effects: list[Effect] = [
            note(ev.OVER, game_id=instance.game_id, instance_id=instance_id)
        ]
        if scores is not None:
            effects.append(Credit(instance.game_id, instance_id, dict(scores)))
        finished = system_to_client(
            SystemTopic.OVER.value,
            instance_id=instance_id,
            broadcast=True,
            params={"scores": dict(scores)} if scores is not None else None,
        )
        for member in instance.members:
            effects.append(Deliver(member.session_id, finished))
        for member in instance.members:
            effects.append(Release(member.session_id))
        effects.append(note(ev.CLOSED, game_id=instance.game_id, instance_id=instance_id))
        return effects

    def abort_for_fault(self, instance_id: str, reason: str) -> list[Effect]:
        """Kill a live instance after a GM fault or shutdown; GM not notified."""
        instance = self.instance(instance_id)
        if instance is None:
            return []
        with instance.state_lock:
            if not instance.is_live:
                return []
            instance.state = InstanceState.ABORTED
            instance.closed_at = self._clock()
        failure = system_to_client(
            SystemTopic.ERROR.value,
            instance_id=instance_id,
            broadcast=True,
            params={"reason": reason},
        )
        effects: list[Effect] = [
            note(ev.ABORTED, game_id=instance.game_id, instance_id=instance_id, reason=reason)
        ]
        for member in instance.members:
            effects.append(Deliver(member.session_id, failure))
        effects.append(
            note(ev.ERROR, game_id=instance.game_id, instance_id=instance_id, reason=reason)
        )
        for member in instance.members:
            effects.append(Release(member.session_id))
        return effects

    # -- timers ----------------------------------------------------------------------

    def scan_timeouts(self, now: float, waiting_timeout_s: float, loading_timeout_s: float) -> list[Effect]:
        effects: list[Effect] = []
        with self._lock:
            rooms = list(self._rooms.values())
            instances = list(self._instances.values())

        for room in rooms:
            expired: list[QueueEntry] = []
            with room.lock:
                keep = []
                for entry in room.entries:
                    if now - entry.joined_at > waiting_timeout_s:
                        expired.append(entry)
                    else:
                        keep.append(entry)
                room.entries = keep
            for entry in expired:
                effects.append(Dequeued(entry.session_id, room.game_id))
                effects.append(
                    note(
                        ev.DEQUEUE,
                        game_id=room.game_id,
                        session_id=entry.session_id,
                        reason="waiting_timeout",
                    )
                )
                effects.append(
                    Deliver(
                        entry.session_id,
                        system_to_client(
                            SystemTopic.ERROR.value,
                            params={"reason": "waiting_timeout", "gameId": room.game_id},
                        ),
                    )
                )

        for instance in instances:
            with instance.state_lock:
                stalled = (
                    instance.state is InstanceState.LOADING
                    and now - instance.created_at > loading_timeout_s
                )
                missing = [c for c in instance.client_ids() if c not in instance.ready] if stalled else []
            for client_id in missing:
                # The first one aborts the instance; the rest are no-ops.
                effects.extend(self.handle_disconnect(instance.instance_id, client_id, reason="loading_timeout"))
        return effects

    def queue_depth(self, game_id: str) -> int:
        with self._lock:
            room = self._rooms.get(game_id)
        return 0 if room is None else len(room.positions())
