"""Shared harness: boots a real platform server plus GM servers over HTTP."""

from __future__ import annotations

import pytest

from playlab.config import PlatformConfig
from playlab.core import PlatformCore
from playlab.gms.harness import GmServer
from playlab.headless import HeadlessClient
from playlab.server import PlatformServer
from playlab.storage import Store


class Harness:
    """One running platform with helpers to register games and clients."""

    def __init__(self, tmp_path, **config_overrides):
        overrides = {
            "listen_port": 0,
            "data_dir": str(tmp_path),
            "poll_linger_s": 1.0,
            "liveness_window_s": 8.0,
            "reaper_interval_s": 0.2,
            "gm_timeout_s": 5.0,
            "waiting_room_timeout_s": 120.0,
            "loading_timeout_s": 30.0,
        }
        overrides.update(config_overrides)
        self.config = PlatformConfig(**overrides).validate()
        self.store = Store(tmp_path / "playlab.sqlite3")
        self.core = PlatformCore(self.config, self.store)
        self.server = PlatformServer(self.config, core=self.core)
        self.server.start()
        self.url = self.server.url
        self._gms: list[GmServer] = []
        self._clients: list[HeadlessClient] = []

    # -- pieces ----------------------------------------------------------------

    def gm(self, handler, raw_observer=None) -> GmServer:
        server = GmServer(handler, raw_observer=raw_observer).start()
        self._gms.append(server)
        return server

    def add_game(self, gm_url, players=2, name="Test Game", publish=True, **manifest_extra):
        manifest = {
            "name": name,
            "description": "test game",
            "required_players": players,
            "gm": {"url": gm_url, "timeout_s": self.config.gm_timeout_s,
                   "max_response_bytes": self.config.gm_max_response_bytes},
            **manifest_extra,
        }
        bundle = self._bundle_dir()
        descriptor = self.core.games.register_game(manifest, bundle)
        if publish:
            descriptor = self.core.games.publish_game(descriptor.game_id, self.core.gm_probe)
        return descriptor

    def _bundle_dir(self):
        import tempfile
        from pathlib import Path

        root = Path(tempfile.mkdtemp(prefix="bundle-"))
        (root / "index.html").write_text("<html><body>game</body></html>")
        return root

    def client(self, poll_timeout_s=30.0) -> HeadlessClient:
        c = HeadlessClient(self.url, poll_timeout_s=poll_timeout_s)
        self._clients.append(c)
        return c

    def players(self, game_id, n, register=False):
        """Open + join n clients; returns them once the match has formed."""
        out = []
        for i in range(n):
            c = self.client()
            if register:
                username = f"player{i}_{game_id[-4:]}"
                try:
                    self.core.users.register_user(username, "password1")
                except Exception:
                    pass  # reuse across rounds
                c.open(game_id, username=username, password="password1")
            else:
                c.open(game_id)
            c.join()
            out.append(c)
        for c in out:
            c.wait_for(topic="instance", timeout=10.0)
        return out

    def stop(self):
        for c in self._clients:
            c.close()
        self.server.stop(grace_s=0.1)
        for gm in self._gms:
            gm.stop()
        self.store.close()


@pytest.fixture
def harness(tmp_path):
    h = Harness(tmp_path)
    yield h
    h.stop()
