"""Message envelope and JSON wire codec shared by every channel.

Everything that moves between a game UI, the platform, and a game manager
(GM) is a single JSON object with a fixed vocabulary of field names:

    {"sender": "client", "recipient": "manager", "topic": "mgUChoice",
     "params": 5, "instanceId": "i41c2...", "clientId": "c9a07..."}

Rules of the wire format:

- ``topic`` is mandatory and never empty; everything else is optional.
- ``sender`` / ``recipient`` are one of ``system``, ``client``, ``manager``.
- Optional fields are omitted when absent, never emitted as null.
- ``broadcast: true`` and a present ``clientId`` are mutually exclusive;
  a message addressed to ``client`` must carry one of the two.
- Unknown extra fields survive a decode/encode round trip untouched, so
  GM authors may extend the envelope.

A GM answers an HTTP dispatch with an empty body (no reply), a single
message object, or a JSON array of message objects; ``decode_gm_response``
normalizes all three to a list.

``instanceId`` and ``clientId`` are opaque strings minted by the platform
and compared only for equality.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Optional

ENDPOINTS = ("system", "client", "manager")

# Canonical field names in emit order; anything else is an extension field.
WIRE_FIELDS = (
    "sender",
    "recipient",
    "topic",
    "params",
    "instanceId",
    "clientId",
    "broadcast",
)


class SystemTopic(str, Enum):
    """Topics reserved for platform-generated traffic."""

    INSTANCE = "instance"
    READY = "ready"
    OVER = "over"
    DROP = "drop"
    ERROR = "error"


class ProtocolError(Exception):
    """Base class for every codec failure."""


class MessageInvariantError(ProtocolError):
    """An outgoing message violates an envelope invariant."""

    def __init__(self, rule: str):
        super().__init__(f"message violates invariant: {rule}")
        self.rule = rule


class MessageDecodeError(ProtocolError):
    """Incoming wire text cannot be decoded into a valid message."""

    def __init__(self, bad_field: str, detail: str):
        super().__init__(f"bad message field {bad_field!r}: {detail}")
        self.field = bad_field
        self.detail = detail


class GmResponseError(ProtocolError):
    """A GM response body is not an empty/object/array message payload."""

    def __init__(self, detail: str, index: Optional[int] = None):
        at = "" if index is None else f" (element {index})"
        super().__init__(f"bad GM response{at}: {detail}")
        self.index = index
        self.detail = detail


@dataclass(frozen=True)
class Message:
    """One protocol envelope. Immutable; construct a new one to change it."""

    topic: str
    sender: Optional[str] = None
    recipient: Optional[str] = None
    params: Any = None
    instance_id: Optional[str] = None
    client_id: Optional[str] = None
    broadcast: bool = False
    extra: dict = field(default_factory=dict)

    def violated_rule(self) -> Optional[str]:
        """Return the name of the first violated invariant, if any."""
        if not isinstance(self.topic, str) or self.topic == "":
            return "topic must be a non-empty string"
        for name, value in (("sender", self.sender), ("recipient", self.recipient)):
            if value is not None and value not in ENDPOINTS:
                return f"{name} must be one of {ENDPOINTS}"
        for name, value in (("instanceId", self.instance_id), ("clientId", self.client_id)):
            if value is not None and not isinstance(value, str):
                return f"{name} must be a string"
        if not isinstance(self.broadcast, bool):
            return "broadcast must be a boolean"
        if self.broadcast and self.client_id is not None:
            return "broadcast and clientId are mutually exclusive"
        if self.recipient == "client" and not self.broadcast and self.client_id is None:
            return "a client-addressed message needs clientId or broadcast"
        for key in self.extra:
            if key in WIRE_FIELDS:
                return f"extension field shadows canonical field {key!r}"
        return None

    def with_sender(self, sender: str) -> "Message":
        return replace(self, sender=sender)


def message_to_dict(m: Message) -> dict:
    """Canonical wire dict for a message; raises on invariant violations."""
    rule = m.violated_rule()
    if rule is not None:
        raise MessageInvariantError(rule)
    wire: dict = {}
    if m.sender is not None:
        wire["sender"] = m.sender
    if m.recipient is not None:
        wire["recipient"] = m.recipient
    wire["topic"] = m.topic
    if m.params is not None:
        wire["params"] = m.params
    if m.instance_id is not None:
        wire["instanceId"] = m.instance_id
    if m.client_id is not None:
        wire["clientId"] = m.client_id
    if m.broadcast:
        wire["broadcast"] = True
    wire.update(m.extra)
    return wire


def message_from_dict(obj: Any) -> Message:
    """Build a Message from a parsed wire object, validating every field."""
    if not isinstance(obj, dict):
        raise MessageDecodeError("body", "message must be a JSON object")

    topic = obj.get("topic")
    if "topic" not in obj or topic is None:
        raise MessageDecodeError("topic", "missing")
    if not isinstance(topic, str):
        raise MessageDecodeError("topic", "must be a string")
    if topic == "":
        raise MessageDecodeError("topic", "must not be empty")

    def endpoint(name: str) -> Optional[str]:
        value = obj.get(name)
        if value is None:
            return None
        if not isinstance(value, str) or value not in ENDPOINTS:
            raise MessageDecodeError(name, f"unknown endpoint {value!r}")
        return value

    def opaque_id(name: str) -> Optional[str]:
        value = obj.get(name)
        if value is None:
            return None
        if not isinstance(value, str):
            raise MessageDecodeError(name, "identifiers are opaque strings")
        return value

    broadcast = obj.get("broadcast")
    if broadcast is None:
        broadcast = False
    if not isinstance(broadcast, bool):
        raise MessageDecodeError("broadcast", "must be a boolean")

    m = Message(
        topic=topic,
        sender=endpoint("sender"),
        recipient=endpoint("recipient"),
        params=obj.get("params"),
        instance_id=opaque_id("instanceId"),
        client_id=opaque_id("clientId"),
        broadcast=broadcast,
        extra={k: v for k, v in obj.items() if k not in WIRE_FIELDS},
    )
    rule = m.violated_rule()
    if rule is not None:
        # Map the cross-field rules onto the field a sender must fix.
        bad = "broadcast" if "broadcast" in rule else "recipient"
        raise MessageDecodeError(bad, rule)
    return m


def encode_message(m: Message) -> str:
    """Serialize a valid message to compact JSON text."""
    try:
        return json.dumps(message_to_dict(m), separators=(",", ":"))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, MessageInvariantError):
            raise
        raise MessageInvariantError(f"params not JSON-serializable: {exc}")


def decode_message(text) -> Message:
    """Parse wire text (str or bytes) into a Message.

    Never raises anything but MessageDecodeError, whatever the input bytes.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MessageDecodeError("body", f"not UTF-8: {exc}")
    if not isinstance(text, str):
        raise MessageDecodeError("body", "expected text")
    try:
        obj = json.loads(text)
    except (json.JSONDecodeError, RecursionError) as exc:
        raise MessageDecodeError("body", f"not JSON: {exc}")
    return message_from_dict(obj)


def decode_gm_response(body) -> list[Message]:
    """Decode a GM HTTP response body into an ordered message list.

    Empty body -> []. Single object -> one message. Array -> element-wise,
    order preserved. Any bad element fails the whole response (atomic).
    """
    if isinstance(body, (bytes, bytearray)):
        try:
            body = body.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise GmResponseError(f"not UTF-8: {exc}")
    if body is None:
        return []
    if not isinstance(body, str):
        raise GmResponseError("expected text")
    stripped = body.strip()
    if stripped == "":
        return []
    try:
        payload = json.loads(stripped)
    except (json.JSONDecodeError, RecursionError) as exc:
        raise GmResponseError(f"not JSON: {exc}")
    if isinstance(payload, dict):
        payload = [payload]
    if not isinstance(payload, list):
        raise GmResponseError("expected an object or an array of objects")
    messages = []
    for i, element in enumerate(payload):
        try:
            messages.append(message_from_dict(element))
        except MessageDecodeError as exc:
            raise GmResponseError(str(exc), index=i)
    return messages


def system_to_gm(
    topic: str,
    instance_id: Optional[str] = None,
    client_id: Optional[str] = None,
    params: Any = None,
) -> Message:
    """Platform-generated event bound for a GM (instance, ready, drop, ping)."""
    return Message(
        topic=topic,
        sender="system",
        params=params,
        instance_id=instance_id,
        client_id=client_id,
    )


def system_to_client(
    topic: str,
    instance_id: Optional[str] = None,
    client_id: Optional[str] = None,
    broadcast: bool = False,
    params: Any = None,
) -> Message:
    """Platform-generated notice bound for player sessions."""
    recipient = "client" if (client_id is not None or broadcast) else None
    return Message(
        topic=topic,
        sender="system",
        recipient=recipient,
        params=params,
        instance_id=instance_id,
        client_id=client_id,
        broadcast=broadcast,
    )
