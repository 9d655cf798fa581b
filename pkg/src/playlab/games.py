"""Experiment deployment: game metadata, UI asset hosting, GM binding.

A game is registered from a manifest (name, player count, GM URL, access
filter, grouping rule) plus a directory of UI files. The files are stored
content-addressed, so an asset URL like ``/assets/<sha256>`` always serves
identical bytes; per-game paths (``/games/<id>/...``) resolve through the
game's current bundle manifest. Publishing requires a successful `ping`
probe of the GM endpoint; an empty response is a pass, GMs may ignore the
topic entirely.
"""

from __future__ import annotations

import hashlib
import mimetypes
import secrets
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from playlab.gm_gateway import GmEndpoint
from playlab.matchmaking import GroupingConstraint, build_predicate
from playlab.storage import Store
from playlab.users import AccessFilter, Identity

DRAFT = "draft"
PUBLISHED = "published"
SUSPENDED = "suspended"

_MAX_BUNDLE_FILES = 512
_MAX_ASSET_BYTES = 32 * 1024 * 1024


class GameRegistryError(Exception):
    pass


class UnknownGameError(GameRegistryError):
    pass


@dataclass
class GameDescriptor:
    game_id: str
    name: str
    owner: Optional[str]
    description: str
    icon: Optional[str]
    screenshots: list
    required_players: int
    gm_url: str
    gm_timeout_s: float
    gm_max_response_bytes: int
    gm_auth_token: str
    entry: str
    bundle: dict  # relative path -> content digest
    access_filter: AccessFilter
    grouping: dict
    status: str
    created_at: float

    def endpoint(self) -> GmEndpoint:
        return GmEndpoint(
            game_id=self.game_id,
            url=self.gm_url,
            timeout_s=self.gm_timeout_s,
            max_response_bytes=self.gm_max_response_bytes,
        )

    def constraint(self) -> GroupingConstraint:
        return GroupingConstraint(
            required_players=self.required_players,
            predicate=build_predicate(self.grouping),
        )

    def public_view(self) -> dict:
        """Catalog fields safe to show players: no GM URL, no auth token."""
        return {
            "gameId": self.game_id,
            "name": self.name,
            "description": self.description,
            "icon": self.icon,
            "screenshots": list(self.screenshots),
            "requiredPlayers": self.required_players,
            "status": self.status,
            "entryUrl": f"/games/{self.game_id}/",
        }


class AssetStore:
    """Content-addressed blob store on the local filesystem."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def put_bytes(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        target = self._path(digest)
        if not target.exists():
            target.parent.mkdir(parents=True, exist_ok=True)
            tmp = target.with_suffix(".tmp-" + secrets.token_hex(4))
            tmp.write_bytes(data)
            tmp.replace(target)
        return digest

    def path_for(self, digest: str) -> Optional[Path]:
        if not digest or any(c not in "0123456789abcdef" for c in digest):
            return None
        target = self._path(digest)
        return target if target.exists() else None

    def _path(self, digest: str) -> Path:
        return self.root / digest[:2] / digest


def guess_content_type(path: str) -> str:
    guessed, _ = mimetypes.guess_type(path)
    return guessed or "application/octet-stream"


class GameRegistry:
    def __init__(self, store: Store, assets: AssetStore, clock: Callable[[], float] = time.time):
        self._store = store
        self._assets = assets
        self._clock = clock

    # -- deployment -------------------------------------------------------------

    def register_game(self, manifest: dict, bundle_dir) -> GameDescriptor:
        name = manifest.get("name")
        if not name or not isinstance(name, str):
            raise GameRegistryError("manifest needs a non-empty game name")
        required = manifest.get("required_players")
        if not isinstance(required, int) or required < 1:
            raise GameRegistryError("required_players must be a positive integer")
        gm = manifest.get("gm") or {}
        entry = manifest.get("entry", "index.html")
        game_id = "g" + secrets.token_hex(5)
        descriptor = GameDescriptor(
            game_id=game_id,
            name=name,
            owner=manifest.get("owner"),
            description=manifest.get("description", ""),
            icon=manifest.get("icon"),
            screenshots=list(manifest.get("screenshots", [])),
            required_players=required,
            gm_url=gm.get("url", ""),
            gm_timeout_s=float(gm.get("timeout_s", 10.0)),
            gm_max_response_bytes=int(gm.get("max_response_bytes", 1024 * 1024)),
            gm_auth_token="t" + secrets.token_urlsafe(24),
            entry=entry,
            bundle={},
            access_filter=AccessFilter.from_dict(manifest.get("access", {})),
            grouping=dict(manifest.get("grouping", {})),
            status=DRAFT,
            created_at=self._clock(),
        )
        descriptor.endpoint()  # validates the GM URL
        descriptor.constraint()  # validates the grouping rule
        descriptor.bundle = self._ingest_bundle(bundle_dir, entry)
        self._store.upsert_game(self._to_row(descriptor))
        return descriptor

    def _ingest_bundle(self, bundle_dir, entry: str) -> dict:
        root = Path(bundle_dir)
        if not root.is_dir():
            raise GameRegistryError(f"bundle directory does not exist: {root}")
        files = [p for p in sorted(root.rglob("*")) if p.is_file()]
        if len(files) > _MAX_BUNDLE_FILES:
            raise GameRegistryError("bundle has too many files")
        bundle = {}
        for path in files:
            data = path.read_bytes()
            if len(data) > _MAX_ASSET_BYTES:
                raise GameRegistryError(f"asset too large: {path.name}")
            bundle[path.relative_to(root).as_posix()] = self._assets.put_bytes(data)
        if entry not in bundle:
            raise GameRegistryError(f"bundle has no entry page {entry!r}")
        return bundle

    def reupload_bundle(self, game_id: str, bundle_dir) -> GameDescriptor:
        descriptor = self.get(game_id)
        if descriptor.status != DRAFT:
            raise GameRegistryError("bundles can be replaced only on draft games")
        descriptor.bundle = self._ingest_bundle(bundle_dir, descriptor.entry)
        self._store.set_game_bundle(game_id, descriptor.bundle, descriptor.entry)
        return descriptor

    def publish_game(self, game_id: str, probe: Callable[[GmEndpoint], None]) -> GameDescriptor:
        descriptor = self.get(game_id)
        if descriptor.status == PUBLISHED:
            return descriptor  # republish is idempotent
        if not descriptor.bundle:
            raise GameRegistryError("cannot publish a game without a UI bundle")
        try:
            probe(descriptor.endpoint())
        except Exception as exc:
            raise GameRegistryError(f"GM health probe failed, game stays draft: {exc}")
        self._store.set_game_status(game_id, PUBLISHED)
        descriptor.status = PUBLISHED
        return descriptor

    def suspend_game(self, game_id: str) -> GameDescriptor:
        descriptor = self.get(game_id)
        self._store.set_game_status(game_id, SUSPENDED)
        descriptor.status = SUSPENDED
        return descriptor

    # -- lookups ------------------------------------------------------------------

    def get(self, game_id: str) -> GameDescriptor:
        row = self._store.game_row(game_id)
        if row is None:
            raise UnknownGameError(f"unknown game {game_id}")
        return self._from_row(row)

    def by_token(self, token: str) -> Optional[GameDescriptor]:
        if not token:
            return None
        row = self._store.game_by_token(token)
        return None if row is None else self._from_row(row)

    def visible_to(self, game_id: str, identity: Optional[Identity]) -> GameDescriptor:
        """The game as a player may see it; drafts only for their owner."""
        descriptor = self.get(game_id)
        if descriptor.status == PUBLISHED:
            return descriptor
        owner = identity is not None and identity.display_name == descriptor.owner
        if not owner:
            raise UnknownGameError(f"unknown game {game_id}")
        return descriptor

    def list_catalog(self, identity: Optional[Identity]) -> list[dict]:
        out = []
        for row in self._store.list_games():
            descriptor = self._from_row(row)
            if descriptor.status != PUBLISHED:
                owns = identity is not None and identity.display_name == descriptor.owner
                if not owns:
                    continue
            entry = descriptor.public_view()
            viewer = identity if identity is not None else Identity(None, "guest")
            entry["playable"] = (
                descriptor.status != SUSPENDED
                and descriptor.access_filter.evaluate(viewer) is None
            )
            out.append(entry)
        return out

    def asset_for(self, game_id: str, path: str) -> Optional[tuple[Path, str]]:
        try:
            descriptor = self.get(game_id)
        except UnknownGameError:
            return None
        rel = path or descriptor.entry
        digest = descriptor.bundle.get(rel)
        if digest is None:
            return None
        blob = self._assets.path_for(digest)
        if blob is None:
            return None
        return blob, guess_content_type(rel)

    def raw_asset(self, digest: str) -> Optional[Path]:
        return self._assets.path_for(digest)

    # -- row mapping -----------------------------------------------------------------

    @staticmethod
    def _to_row(d: GameDescriptor) -> dict:
        return {
            "game_id": d.game_id,
            "owner": d.owner,
            "name": d.name,
            "description": d.description,
            "icon": d.icon,
            "screenshots": d.screenshots,
            "required_players": d.required_players,
            "gm_url": d.gm_url,
            "gm_timeout_s": d.gm_timeout_s,
            "gm_max_response_bytes": d.gm_max_response_bytes,
            "gm_auth_token": d.gm_auth_token,
            "entry": d.entry,
            "bundle": d.bundle,
            "access_filter": d.access_filter.as_dict(),
            "grouping": d.grouping,
            "status": d.status,
            "created_at": d.created_at,
        }

    @staticmethod
    def _from_row(row: dict) -> GameDescriptor:
        return GameDescriptor(
            game_id=row["game_id"],
            name=row["name"],
            owner=row["owner"],
            description=row["description"],
            icon=row["icon"],
            screenshots=row["screenshots"],
            required_players=row["required_players"],
            gm_url=row["gm_url"],
            gm_timeout_s=row["gm_timeout_s"],
            gm_max_response_bytes=row["gm_max_response_bytes"],
            gm_auth_token=row["gm_auth_token"],
            entry=row["entry"],
            bundle=row["bundle"],
            access_filter=AccessFilter.from_dict(row["access_filter"]),
            grouping=row["grouping"],
            status=row["status"],
            created_at=row["created_at"],
        )
