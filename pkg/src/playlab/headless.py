"""Headless protocol client for scripting matches without a browser.

Speaks the platform HTTP API directly: open a session, join, signal ready,
send actions to the manager, and poll the ordered delivery stream. Used by
the test suite and handy for researchers smoke-testing a GM from a script.
"""

from __future__ import annotations

import time
from collections import deque
from typing import Any, Callable, Optional

import requests

from playlab.protocol import Message, message_from_dict


class ClientError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.status = status
        self.code = code


class HeadlessClient:
    def __init__(self, base_url: str, poll_timeout_s: float = 30.0):
        self.base = base_url.rstrip("/")
        self._http = requests.Session()
        self._poll_timeout = poll_timeout_s
        self.session_id: Optional[str] = None
        self.game_id: Optional[str] = None
        self.cursor = 0
        self.instance_id: Optional[str] = None
        self.client_id: Optional[str] = None
        self.history: list[Message] = []
        self._unclaimed: deque[Message] = deque()

    # -- raw HTTP ------------------------------------------------------------

    def _request(self, method: str, path: str, **kwargs) -> dict:
        kwargs.setdefault("timeout", self._poll_timeout)
        response = self._http.request(method, self.base + path, **kwargs)
        try:
            payload = response.json()
        except ValueError:
            payload = {}
        if response.status_code >= 400:
            error = payload.get("error", {})
            raise ClientError(
                response.status_code,
                error.get("code", "http_error"),
                error.get("message", response.text[:200]),
            )
        return payload

    # -- session flow ------------------------------------------------------------

    def open(self, game_id: str, username: Optional[str] = None, password: Optional[str] = None) -> dict:
        body: dict = {"gameId": game_id}
        if username is not None:
            body["username"] = username
            body["password"] = password
        info = self._request("POST", "/api/session", json=body)
        self.session_id = info["sessionId"]
        self.game_id = game_id
        return info

    def join(self) -> dict:
        out = self._request(
            "POST", f"/api/game/{self.game_id}/join", json={"sessionId": self.session_id}
        )
        if out.get("status") == "matched":
            self.instance_id = out["instanceId"]
            self.client_id = out["clientId"]
        return out

    def ready(self) -> dict:
        return self._request("POST", "/api/ready", json={"sessionId": self.session_id})

    def send(self, topic: str, params: Any = None, recipient: str = "manager") -> dict:
        return self._request(
            "POST",
            "/api/send",
            json={
                "sessionId": self.session_id,
                "recipient": recipient,
                "topic": topic,
                "params": params,
            },
        )

    def heartbeat(self) -> dict:
        return self._request("POST", "/api/heartbeat", json={"sessionId": self.session_id})

    # -- delivery ---------------------------------------------------------------------

    def poll(self) -> list[Message]:
        payload = self._request(
            "GET", f"/api/poll?session={self.session_id}&cursor={self.cursor}"
        )
        self.cursor = payload["cursor"]
        fresh = [message_from_dict(obj) for obj in payload["messages"]]
        for m in fresh:
            self.history.append(m)
            self._unclaimed.append(m)
            if m.topic == "instance" and m.sender == "system" and m.client_id:
                self.instance_id = m.instance_id
                self.client_id = m.client_id
        return fresh

    def wait_for(
        self,
        topic: Optional[str] = None,
        predicate: Optional[Callable[[Message], bool]] = None,
        timeout: float = 10.0,
    ) -> Message:
        """Pop the first matching message, polling until the deadline."""
        deadline = time.monotonic() + timeout
        while True:
            for _ in range(len(self._unclaimed)):
                m = self._unclaimed.popleft()
                if (topic is None or m.topic == topic) and (predicate is None or predicate(m)):
                    return m
                self._unclaimed.append(m)
            if time.monotonic() > deadline:
                raise TimeoutError(f"no message with topic={topic!r} within {timeout}s")
            self.poll()

    def drain(self) -> list[Message]:
        """Claim everything already delivered, without waiting for more."""
        out = list(self._unclaimed)
        self._unclaimed.clear()
        return out

    def close(self):
        self._http.close()
