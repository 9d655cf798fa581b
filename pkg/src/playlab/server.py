"""HTTP shell around the platform core, plus the reaper thread.

Endpoints (JSON unless noted):

    POST /api/session            open a session (guest or credentials)
    POST /api/game/{id}/join     enter the waiting room
    POST /api/send               relay a client action to the GM
    POST /api/ready              signal that the UI finished loading
    GET  /api/poll?session=&cursor=   long-poll ordered deliveries
    POST /api/heartbeat          keep the session alive
    GET  /api/catalog            public game catalog
    POST /gm/push                GM-initiated messages (form var `message`,
                                 header X-Gm-Token)
    GET  /games/{id}/...         game UI assets (entry page at /games/{id}/)
    GET  /assets/{digest}        immutable content-addressed asset bytes
    GET  /healthz                liveness probe
    GET  /, /shell/...           optional static catalog frontend (shell_dir)
"""

from __future__ import annotations

import logging
import threading
import time
from pathlib import Path
from typing import Optional

from playlab.config import PlatformConfig
from playlab.core import ApiError, PlatformCore, build_core
from playlab.games import guess_content_type
from playlab.webio import HttpError, HttpService, Request, Response, Router

log = logging.getLogger(__name__)

GM_TOKEN_HEADER = "X-Gm-Token"


class StartupError(Exception):
    pass


def _api(fn):
    def wrapped(request: Request) -> Response:
        try:
            return fn(request)
        except ApiError as exc:
            raise HttpError(exc.status, exc.code, exc.message)

    return wrapped


def build_router(core: PlatformCore) -> Router:
    router = Router()

    @_api
    def open_session(request):
        body = request.json()
        game_id = body.get("gameId")
        if not game_id:
            raise HttpError(400, "bad_request", "gameId is required")
        return Response(
            core.open_session(game_id, body.get("username"), body.get("password"))
        )

    @_api
    def join_game(request):
        body = request.json()
        session_id = body.get("sessionId")
        if not session_id:
            raise HttpError(400, "bad_request", "sessionId is required")
        return Response(core.join_game(session_id, game_id=request.params["game_id"]))

    @_api
    def send(request):
        body = request.json()
        return Response(
            core.client_send(
                body.get("sessionId", ""),
                body.get("recipient", "manager"),
                body.get("topic", ""),
                body.get("params"),
            )
        )

    @_api
    def ready(request):
        return Response(core.mark_ready(request.json().get("sessionId", "")))

    @_api
    def poll(request):
        session_id = request.query.get("session", "")
        cursor = request.query.get("cursor", "0")
        return Response(core.poll(session_id, cursor))

    @_api
    def heartbeat(request):
        return Response(core.heartbeat(request.json().get("sessionId", "")))

    @_api
    def catalog(request):
        return Response({"games": core.catalog(request.query.get("session"))})

    @_api
    def gm_push(request):
        token = request.headers.get(GM_TOKEN_HEADER)
        form = request.form()
        if "message" not in form:
            raise HttpError(400, "bad_request", "missing `message` form variable")
        return Response(core.gm_push(token, form["message"]))

    def game_asset(request):
        game_id = request.params["game_id"]
        path = request.params.get("path", "") or ""
        found = core.games.asset_for(game_id, path)
        if found is None:
            raise HttpError(404, "not_found", "no such asset")
        blob, content_type = found
        return Response(body=blob.read_bytes(), content_type=content_type)

    def raw_asset(request):
        blob = core.games.raw_asset(request.params["digest"])
        if blob is None:
            raise HttpError(404, "not_found", "no such asset")
        return Response(
            body=blob.read_bytes(),
            content_type="application/octet-stream",
            headers={"Cache-Control": "public, max-age=31536000, immutable"},
        )

    def healthz(request):
        return Response(core.health())

    def shell_page(request):
        shell_dir = core.config.shell_dir
        if not shell_dir:
            raise HttpError(404, "not_found", "no shell frontend configured")
        rel = request.params.get("path", "") or "index.html"
        root = Path(shell_dir).resolve()
        target = (root / rel).resolve()
        if root not in target.parents and target != root:
            raise HttpError(404, "not_found", "no such page")
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            raise HttpError(404, "not_found", "no such page")
        return Response(body=target.read_bytes(), content_type=guess_content_type(target.name))

    router.add("POST", "/api/session", open_session)
    router.add("POST", "/api/game/{game_id}/join", join_game)
    router.add("POST", "/api/send", send)
    router.add("POST", "/api/ready", ready)
    router.add("GET", "/api/poll", poll)
    router.add("POST", "/api/heartbeat", heartbeat)
    router.add("GET", "/api/catalog", catalog)
    router.add("POST", "/gm/push", gm_push)
    router.add("GET", "/games/{game_id}/", game_asset)
    router.add("GET", "/games/{game_id}/{path*}", game_asset)
    router.add("GET", "/assets/{digest}", raw_asset)
    router.add("GET", "/healthz", healthz)
    router.add("GET", "/", shell_page)
    router.add("GET", "/shell/{path*}", shell_page)
    return router


class PlatformServer:
    """Bind the core to a socket and keep the liveness reaper running."""

    def __init__(self, config: PlatformConfig, core: Optional[PlatformCore] = None):
        self.config = config
        self.core = core if core is not None else build_core(config)
        try:
            self._service = HttpService(
                build_router(self.core),
                host=config.listen_host,
                port=config.listen_port,
                name="playlab/0.1",
            )
        except HttpError as exc:
            raise StartupError(exc.message)
        self._stop_reaper = threading.Event()
        self._reaper = threading.Thread(target=self._reap, name="reaper", daemon=True)
        self._started = False

    @property
    def host(self) -> str:
        return self._service.host

    @property
    def port(self) -> int:
        return self._service.port

    @property
    def url(self) -> str:
        return self._service.url

    def start(self) -> "PlatformServer":
        self._service.start()
        self._reaper.start()
        self._started = True
        log.info("platform listening on %s", self.url)
        return self

    def _reap(self):
        while not self._stop_reaper.wait(self.config.reaper_interval_s):
            try:
                self.core.tick()
            except Exception:  # the reaper must never die
                log.exception("tick failed")

    def stop(self, grace_s: float = 0.5):
        """Graceful stop: abort live matches, flush error notices, then close."""
        self._stop_reaper.set()
        self.core.stop()
        if self._started:
            time.sleep(grace_s)  # let woken long-polls write their responses
        self._service.stop()
        if self._reaper.is_alive():
            self._reaper.join(timeout=5)

    def serve_until_interrupt(self):
        try:
            while True:
                time.sleep(3600)
        except KeyboardInterrupt:
            log.info("shutting down")
            self.stop()
