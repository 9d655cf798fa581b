"""HTTP dispatch to researcher-hosted game managers and response routing.

A GM is a plain HTTP server. The platform POSTs one form-encoded variable
named ``message`` carrying one JSON-encoded envelope, and the GM answers
with nothing, one message object, or an array of message objects. Dispatch
failures surface as GmUnreachable (network/timeout/non-2xx) or
GmProtocolFault (undecodable or oversize body), both tagged with the
instance so the caller can abort it. There are no automatic retries on a
live instance: a retry could double-apply a game move.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence
from urllib.parse import urlsplit

import requests

from playlab.matchmaking import GameInstance
from playlab.protocol import (
    Message,
    ProtocolError,
    SystemTopic,
    decode_gm_response,
    encode_message,
)

DEFAULT_TIMEOUT_S = 10.0
DEFAULT_MAX_RESPONSE_BYTES = 1024 * 1024


class GmFault(Exception):
    def __init__(self, detail: str, instance_id: Optional[str] = None):
        super().__init__(detail)
        self.detail = detail
        self.instance_id = instance_id


class GmUnreachable(GmFault):
    """Network failure, timeout, or a non-2xx status from the GM."""


class GmProtocolFault(GmFault):
    """The GM answered, but with an undecodable or oversize body."""


@dataclass(frozen=True)
class GmEndpoint:
    game_id: str
    url: str
    timeout_s: float = DEFAULT_TIMEOUT_S
    max_response_bytes: int = DEFAULT_MAX_RESPONSE_BYTES

    def __post_init__(self):
        parts = urlsplit(self.url or "")
        if parts.scheme not in ("http", "https") or not parts.netloc:
            raise ValueError(f"GM url must be absolute http(s): {self.url!r}")
        if self.timeout_s <= 0:
            raise ValueError("GM timeout must be positive")


# Routing plan items, executed in order by the caller.


@dataclass(frozen=True)
class RoutedDelivery:
    session_id: str
    client_id: str
    message: Message


@dataclass(frozen=True)
class RoutedBroadcast:
    message: Message


@dataclass(frozen=True)
class RoutedOver:
    scores: Optional[Mapping]


@dataclass(frozen=True)
class RoutedAudit:
    reason: str
    message: Message


class GmGateway:
    def __init__(self):
        self._http = requests.Session()

    def dispatch_to_gm(self, endpoint: GmEndpoint, message: Message) -> list[Message]:
        """POST one platform/client message to the GM; return its replies."""
        body = {"message": encode_message(message)}
        instance_id = message.instance_id
        try:
            response = self._http.post(
                endpoint.url, data=body, timeout=endpoint.timeout_s, stream=True
            )
        except requests.RequestException as exc:
            raise GmUnreachable(f"GM POST failed: {exc}", instance_id)
        with response:
            if not 200 <= response.status_code < 300:
                raise GmUnreachable(f"GM answered HTTP {response.status_code}", instance_id)
            raw = b""
            try:
                for chunk in response.iter_content(chunk_size=65536):
                    raw += chunk
                    if len(raw) > endpoint.max_response_bytes:
                        raise GmProtocolFault(
                            f"GM response exceeds {endpoint.max_response_bytes} bytes",
                            instance_id,
                        )
            except requests.RequestException as exc:
                raise GmUnreachable(f"GM response read failed: {exc}", instance_id)
        try:
            return decode_gm_response(raw)
        except ProtocolError as exc:
            raise GmProtocolFault(f"GM response undecodable: {exc}", instance_id)

    # Platform-initiated events (ready, drop, timed pings) use the same
    # contract as request/response dispatch.
    push_to_gm_unsolicited = dispatch_to_gm

    @staticmethod
    def route_gm_messages(instance: GameInstance, messages: Sequence[Message]) -> list:
        """Classify GM messages into an ordered routing plan.

        Any message whose instanceId does not match rejects the whole batch
        (GM responses must never cross instances).
        """
        for m in messages:
            if m.instance_id != instance.instance_id:
                raise GmProtocolFault(
                    f"GM message instanceId {m.instance_id!r} does not match"
                    f" {instance.instance_id!r}",
                    instance.instance_id,
                )
        plan: list = []
        for m in messages:
            if m.recipient == "client":
                out = m if m.sender is not None else replace(m, sender="manager")
                if out.broadcast:
                    plan.append(RoutedBroadcast(out))
                    continue
                member = instance.member(out.client_id)
                if member is None:
                    plan.append(RoutedAudit(f"unknown clientId {out.client_id!r}", m))
                    continue
                plan.append(RoutedDelivery(member.session_id, member.client_id, out))
            elif m.recipient == "system":
                if m.topic == SystemTopic.OVER.value:
                    scores = m.params if isinstance(m.params, dict) else None
                    if m.params is not None and scores is None:
                        plan.append(RoutedAudit("over params is not a scores map", m))
                    plan.append(RoutedOver(scores))
                else:
                    plan.append(RoutedAudit(f"system message {m.topic!r} ignored", m))
            else:
                plan.append(RoutedAudit(f"unroutable recipient {m.recipient!r}", m))
        return plan

    def close(self):
        self._http.close()
