"""HTTP harness that turns a message handler into a standalone GM server.

A GM is any HTTP server that accepts ``POST /`` with one form variable
named ``message`` (a JSON envelope) and replies with an empty body, one
JSON message object, or a JSON array of message objects. This harness
provides that contract for a plain ``handler(Message) -> list[Message]``
function, which is all a GM author needs to write.
"""

from __future__ import annotations

import json
import logging
from typing import Callable, Optional

from playlab.protocol import (
    Message,
    MessageDecodeError,
    message_to_dict,
    decode_message,
)
from playlab.webio import HttpService, Request, Response, Router

log = logging.getLogger(__name__)


def encode_gm_reply(messages: list[Message]) -> tuple[bytes, str]:
    """Encode a handler result the way GMs answer: empty, object, or array."""
    if not messages:
        return b"", "application/json"
    if len(messages) == 1:
        payload = message_to_dict(messages[0])
    else:
        payload = [message_to_dict(m) for m in messages]
    return json.dumps(payload, separators=(",", ":")).encode("utf-8"), "application/json"


class GmServer:
    """Serve one handler function as a GM endpoint.

    `raw_observer`, when given, sees every request as (headers_dict,
    raw_body_bytes) before decoding; useful for GM-side audit logs.
    """

    def __init__(
        self,
        handler: Callable[[Message], list[Message]],
        host: str = "127.0.0.1",
        port: int = 0,
        name: str = "gm/0.1",
        raw_observer: Optional[Callable[[dict, bytes], None]] = None,
    ):
        self._handler = handler
        self._observer = raw_observer
        router = Router()
        router.add("POST", "/{rest*}", self._on_post)
        router.add("POST", "/", self._on_post)
        self._service = HttpService(router, host=host, port=port, name=name)

    def _on_post(self, request: Request) -> Response:
        if self._observer is not None:
            self._observer(dict(request.headers.items()), request.body)
        form = request.form()
        if "message" not in form:
            return Response({"error": "missing message variable"}, status=400)
        try:
            message = decode_message(form["message"])
        except MessageDecodeError as exc:
            return Response({"error": str(exc)}, status=400)
        replies = self._handler(message)
        body, content_type = encode_gm_reply(list(replies))
        return Response(body=body, content_type=content_type)

    @property
    def url(self) -> str:
        return self._service.url

    @property
    def port(self) -> int:
        return self._service.port

    def start(self) -> "GmServer":
        self._service.start()
        log.info("GM listening on %s", self.url)
        return self

    def stop(self):
        self._service.stop()

    def serve_forever(self):
        log.info("GM listening on %s", self.url)
        self._service.serve_forever()
