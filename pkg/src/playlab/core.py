"""Platform core: composes the registries, rooms, sessions, and GM gateway.

The HTTP layer is a thin shell over this object; everything here is also
callable in-process, which is how most of the test suite drives full
match flows.

Concurrency model: all GM traffic for one instance (outbound dispatch and
inbound push) is serialized on that instance's dispatch lock, so a GM can
keep per-instance state without its own locking and every player observes
GM-generated messages in one total order. Distinct instances proceed in
parallel. Session outboxes serialize their own producers and have a single
consumer (the session's poll loop).
"""

from __future__ import annotations

import logging
import time
from pathlib import Path
from typing import Any, Optional

from playlab import events as ev
from playlab.config import PlatformConfig
from playlab.events import EventLog
from playlab.games import (
    SUSPENDED,
    AssetStore,
    GameRegistry,
    UnknownGameError,
)
from playlab.gm_gateway import GmFault, GmGateway, GmUnreachable
from playlab.gm_gateway import (
    RoutedAudit,
    RoutedBroadcast,
    RoutedDelivery,
    RoutedOver,
)
from playlab.matchmaking import (
    Credit,
    Deliver,
    Dequeued,
    GameInstance,
    GmNotify,
    InstanceManager,
    MatchmakingError,
    Note,
    Release,
)
from playlab.protocol import (
    Message,
    ProtocolError,
    SystemTopic,
    decode_gm_response,
    message_to_dict,
    system_to_gm,
)
from playlab.sessions import ClientSession, SessionManager, UnknownSessionError
from playlab.storage import Store, open_store
from playlab.users import GUEST, UnknownInstanceError, UserRegistry

log = logging.getLogger(__name__)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class PlatformCore:
    def __init__(self, config: PlatformConfig, store: Store, clock=time.time):
        self.config = config
        self.clock = clock
        self.events = EventLog(clock=clock)
        self.assets = AssetStore(Path(config.data_dir) / "assets")
        self.users = UserRegistry(store, clock=clock)
        self.games = GameRegistry(store, self.assets, clock=clock)
        self.sessions = SessionManager(
            clock=clock,
            max_outbox=config.max_outbox_messages,
            poll_linger_s=config.poll_linger_s,
        )
        self.instances = InstanceManager(clock=clock)
        self.gateway = GmGateway()
        self._stopped = False

    # -- session lifecycle ---------------------------------------------------

    def open_session(self, game_id: str, username: Optional[str] = None, password: Optional[str] = None) -> dict:
        identity = GUEST
        if username is not None:
            identity = self.users.authenticate(username, password or "")
            if identity is None:
                raise ApiError(401, "auth_failed", "bad username or password")
        descriptor = self._playable_game(game_id, identity)
        deny = self.users.check_access(descriptor.access_filter, identity)
        if deny is not None:
            raise ApiError(403, "access_denied", deny)
        session = self.sessions.open(identity, game_id)
        self.events.emit(
            ev.SESSION,
            game_id=game_id,
            session_id=session.session_id,
            what="opened",
            guest=identity.is_guest,
        )
        return {
            "sessionId": session.session_id,
            "identity": {
                "kind": "guest" if identity.is_guest else "account",
                "displayName": identity.display_name,
            },
            "game": descriptor.public_view(),
            "heartbeatIntervalS": self.config.heartbeat_interval_s,
        }

    def _playable_game(self, game_id: str, identity):
        try:
            descriptor = self.games.visible_to(game_id, identity)
        except UnknownGameError:
            raise ApiError(404, "unknown_game", f"no such game: {game_id}")
        if descriptor.status == SUSPENDED:
            raise ApiError(409, "game_suspended", "this game is suspended")
        return descriptor

    def heartbeat(self, session_id: str) -> dict:
        self._session(session_id, touch=True)
        return {"status": "ok"}

    def catalog(self, session_id: Optional[str] = None) -> list[dict]:
        identity = None
        if session_id:
            identity = self._session(session_id, touch=True).identity
        return self.games.list_catalog(identity)

    def _session(self, session_id: str, touch: bool = False) -> ClientSession:
        try:
            return self.sessions.get(session_id, touch=touch)
        except UnknownSessionError:
            raise ApiError(401, "unknown_session", "unknown or expired session")

    # -- joining ---------------------------------------------------------------

    def join_game(self, session_id: str, game_id: Optional[str] = None) -> dict:
        session = self._session(session_id, touch=True)
        if game_id is not None and game_id != session.game_id:
            raise ApiError(409, "wrong_game", "session was opened for a different game")
        descriptor = self._playable_game(session.game_id, session.identity)
        if session.queued:
            raise ApiError(409, "already_queued", "session is already in the waiting room")
        if session.instance_ref is not None:
            raise ApiError(409, "already_playing", "session is already in a live instance")

        self.events.emit(ev.JOIN, game_id=session.game_id, session_id=session_id)
        try:
            instance, effects = self.instances.enqueue_player(
                session.game_id,
                session_id,
                self._match_snapshot(session),
                descriptor.constraint(),
            )
        except MatchmakingError as exc:
            raise ApiError(409, "join_rejected", str(exc))
        self.sessions.set_queued(session_id, True)

        if instance is not None:
            self._bind_members(instance)
        self._run_effects(effects)

        if instance is None:
            return {"status": "queued"}
        member = next(m for m in instance.members if m.session_id == session_id)
        return {
            "status": "matched",
            "instanceId": instance.instance_id,
            "clientId": member.client_id,
        }

    def _match_snapshot(self, session: ClientSession) -> dict:
        profile = session.identity.profile
        snapshot = profile.as_dict() if profile is not None else {}
        if session.identity.is_guest:
            snapshot["score"] = session.session_score
        else:
            snapshot["score"] = self.users.game_score(session.identity.account_id, session.game_id)
        snapshot["registered"] = not session.identity.is_guest
        return snapshot

    def _bind_members(self, instance: GameInstance) -> None:
        pairs = []
        for member in instance.members:
            self.sessions.bind_instance(member.session_id, instance.instance_id, member.client_id)
            identity = self.sessions.get(member.session_id).identity
            pairs.append((member.client_id, identity.account_id))
        self.users.record_instance_members(instance.game_id, instance.instance_id, pairs)

    # -- in-match traffic ----------------------------------------------------------

    def client_send(self, session_id: str, recipient: str, topic: str, params: Any = None) -> dict:
        session = self._session(session_id, touch=True)
        if recipient != "manager":
            raise ApiError(400, "bad_recipient", "players may only send to 'manager'")
        if not isinstance(topic, str) or topic == "":
            raise ApiError(400, "bad_topic", "topic must be a non-empty string")
        if session.instance_ref is None:
            raise ApiError(409, "no_instance", "session has no live instance")
        instance_id, client_id = session.instance_ref
        instance = self.instances.instance(instance_id)
        if instance is None:
            raise ApiError(409, "no_instance", "session has no live instance")

        message = Message(
            topic=topic,
            sender="client",
            recipient="manager",
            params=params,
            instance_id=instance_id,
            client_id=client_id,
        )
        with instance.dispatch_lock:
            if not instance.is_live:
                raise ApiError(
                    409, "instance_closed", f"instance is {instance.state.value}"
                )
            self.events.emit(
                ev.RELAY,
                game_id=instance.game_id,
                instance_id=instance_id,
                client_id=client_id,
                topic=topic,
            )
            delivered = self._dispatch_and_route(instance, message)
        if delivered is None:
            raise ApiError(502, "gm_fault", "the game manager failed; instance aborted")
        return {"status": "ok", "delivered": delivered}

    def mark_ready(self, session_id: str) -> dict:
        session = self._session(session_id, touch=True)
        if session.instance_ref is None:
            raise ApiError(409, "no_instance", "session has no live instance")
        instance_id, client_id = session.instance_ref
        try:
            effects = self.instances.mark_client_ready(instance_id, client_id)
        except MatchmakingError as exc:
            raise ApiError(409, "bad_state", str(exc))
        self._run_effects(effects)
        return {"status": "ok"}

    def poll(self, session_id: str, cursor) -> dict:
        try:
            messages, next_cursor = self.sessions.deliver_pending(session_id, cursor)
        except UnknownSessionError:
            raise ApiError(401, "unknown_session", "unknown or expired session")
        return {
            "messages": [message_to_dict(m) for m in messages],
            "cursor": next_cursor,
        }

    # -- GM inbound push --------------------------------------------------------------

    def gm_push(self, token: Optional[str], message_text) -> dict:
        descriptor = self.games.by_token(token or "")
        if descriptor is None:
            raise ApiError(401, "bad_token", "unknown GM token")
        try:
            messages = decode_gm_response(message_text)
        except ProtocolError as exc:
            raise ApiError(400, "bad_message", str(exc))
        if not messages:
            return {"status": "ok", "delivered": 0}
        instance_ids = {m.instance_id for m in messages}
        if len(instance_ids) != 1 or None in instance_ids:
            raise ApiError(400, "bad_message", "push must target exactly one instance")
        instance_id = instance_ids.pop()
        instance = self.instances.instance(instance_id)
        if instance is None:
            self.events.emit(
                ev.AUDIT,
                game_id=descriptor.game_id,
                instance_id=instance_id,
                reason="push for unknown instance dropped",
            )
            return {"status": "ignored", "delivered": 0}
        if instance.game_id != descriptor.game_id:
            raise ApiError(403, "forbidden", "instance belongs to a different game")

        with instance.dispatch_lock:
            plan = self.gateway.route_gm_messages(instance, messages)
            delivered = self._execute_plan(instance, plan)
        self.events.emit(
            ev.PUSH,
            game_id=descriptor.game_id,
            instance_id=instance_id,
            count=len(messages),
        )
        return {"status": "ok", "delivered": delivered}

    # -- timers --------------------------------------------------------------------------

    def tick(self, now: Optional[float] = None) -> None:
        now = self.clock() if now is None else now
        for session in self.sessions.expire(now, self.config.liveness_window_s):
            self.events.emit(
                ev.SESSION,
                game_id=session.game_id,
                session_id=session.session_id,
                what="expired",
            )
            if session.instance_ref is not None:
                instance_id, client_id = session.instance_ref
                self._run_effects(
                    self.instances.handle_disconnect(instance_id, client_id, reason="disconnect")
                )
            elif session.queued:
                self._run_effects(self.instances.dequeue(session.game_id, session.session_id))
        self._run_effects(
            self.instances.scan_timeouts(
                now, self.config.waiting_room_timeout_s, self.config.loading_timeout_s
            )
        )

    # -- shutdown ---------------------------------------------------------------------------

    def stop(self) -> None:
        if self._stopped:
            return
        self._stopped = True
        members_notified: set[str] = set()
        for instance in self.instances.live_instances():
            members_notified.update(instance.session_ids())
            self._run_effects(self.instances.abort_for_fault(instance.instance_id, "shutdown"))
        farewell = Message(
            topic=SystemTopic.ERROR.value, sender="system", params={"reason": "shutdown"}
        )
        for session in self.sessions.all_sessions():
            if session.session_id not in members_notified:
                self.sessions.enqueue(session.session_id, farewell)
        self.sessions.wake_all()
        self.events.emit(ev.SESSION, what="platform_shutdown")

    def health(self) -> dict:
        return {
            "status": "ok",
            "sessions": self.sessions.count(),
            "liveInstances": len(self.instances.live_instances()),
        }

    # -- GM probe (used when publishing a game) ------------------------------------------------

    def gm_probe(self, endpoint) -> None:
        # Any decodable response passes; GMs are free to ignore the topic.
        self.gateway.dispatch_to_gm(endpoint, system_to_gm("ping"))

    # -- effect execution ------------------------------------------------------------------------

    def _run_effects(self, effects) -> None:
        for effect in effects:
            if isinstance(effect, Note):
                self.events.emit(effect.kind, **effect.fields)
            elif isinstance(effect, Deliver):
                if not self.sessions.enqueue(effect.session_id, effect.message):
                    self.events.emit(
                        ev.AUDIT,
                        session_id=effect.session_id,
                        reason="delivery to closed session dropped",
                        topic=effect.message.topic,
                    )
            elif isinstance(effect, Dequeued):
                self.sessions.set_queued(effect.session_id, False)
            elif isinstance(effect, Release):
                self.sessions.release_instance(effect.session_id)
            elif isinstance(effect, Credit):
                self._apply_credit(effect)
            elif isinstance(effect, GmNotify):
                self._dispatch_and_route(effect.instance, effect.message)
            else:  # pragma: no cover
                raise TypeError(f"unknown effect {effect!r}")

    def _dispatch_and_route(self, instance: GameInstance, message: Message) -> Optional[int]:
        """Send one message to the GM and route its replies.

        Returns the number of deliveries, or None if the GM faulted (the
        instance is then aborted; dead instances just log the fault).
        """
        try:
            descriptor = self.games.get(instance.game_id)
        except UnknownGameError:
            self.events.emit(ev.AUDIT, instance_id=instance.instance_id, reason="game vanished")
            return None
        with instance.dispatch_lock:
            try:
                replies = self.gateway.dispatch_to_gm(descriptor.endpoint(), message)
                plan = self.gateway.route_gm_messages(instance, replies)
            except GmFault as exc:
                fault = "gm_unreachable" if isinstance(exc, GmUnreachable) else "gm_protocol_fault"
                self.events.emit(
                    ev.GM_FAULT,
                    game_id=instance.game_id,
                    instance_id=instance.instance_id,
                    fault=fault,
                    detail=str(exc),
                )
                self._run_effects(self.instances.abort_for_fault(instance.instance_id, fault))
                return None
            return self._execute_plan(instance, plan)

    def _execute_plan(self, instance: GameInstance, plan) -> int:
        delivered = 0
        for item in plan:
            if isinstance(item, RoutedDelivery):
                if instance.is_live and self.sessions.enqueue(item.session_id, item.message):
                    delivered += 1
                    self.events.emit(
                        ev.DELIVER,
                        game_id=instance.game_id,
                        instance_id=instance.instance_id,
                        client_id=item.client_id,
                        topic=item.message.topic,
                    )
                else:
                    self._audit_dropped(instance, item.message, "instance not accepting deliveries")
            elif isinstance(item, RoutedBroadcast):
                if instance.is_live:
                    for member in instance.members:
                        if self.sessions.enqueue(member.session_id, item.message):
                            delivered += 1
                    self.events.emit(
                        ev.BROADCAST,
                        game_id=instance.game_id,
                        instance_id=instance.instance_id,
                        topic=item.message.topic,
                    )
                else:
                    self._audit_dropped(instance, item.message, "instance not accepting deliveries")
            elif isinstance(item, RoutedOver):
                self._run_effects(self.instances.close_instance(instance.instance_id, item.scores))
            elif isinstance(item, RoutedAudit):
                self._audit_dropped(instance, item.message, item.reason)
        return delivered

    def _audit_dropped(self, instance: GameInstance, message: Message, reason: str) -> None:
        self.events.emit(
            ev.AUDIT,
            game_id=instance.game_id,
            instance_id=instance.instance_id,
            reason=reason,
            topic=message.topic,
        )

    def _apply_credit(self, credit: Credit) -> None:
        try:
            report = self.users.update_scores(credit.game_id, credit.instance_id, credit.scores)
        except UnknownInstanceError as exc:
            self.events.emit(
                ev.AUDIT, game_id=credit.game_id, instance_id=credit.instance_id, reason=str(exc)
            )
            return
        for client_id, why in report.skipped:
            self.events.emit(
                ev.AUDIT,
                game_id=credit.game_id,
                instance_id=credit.instance_id,
                client_id=client_id,
                reason=f"score entry skipped: {why}",
            )
        if report.replay:
            self.events.emit(
                ev.AUDIT,
                game_id=credit.game_id,
                instance_id=credit.instance_id,
                reason="score replay ignored",
            )
            return
        instance = self.instances.instance(credit.instance_id)
        for client_id, account_id, amount in report.applied:
            if account_id is None and amount and instance is not None:
                member = instance.member(client_id)
                if member is not None:
                    self.sessions.credit_guest(member.session_id, amount)
        self.events.emit(
            ev.SCORE,
            game_id=credit.game_id,
            instance_id=credit.instance_id,
            applied={cid: amount for cid, _, amount in report.applied},
        )


def build_core(config: PlatformConfig, clock=time.time) -> PlatformCore:
    """Open the store inside config.data_dir and assemble a core."""
    store = open_store(config.data_dir)
    return PlatformCore(config, store, clock=clock)
