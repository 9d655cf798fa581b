"""Embedded durable store (SQLite) for accounts, games, and score history.

Schema
------
accounts       one row per registered player.
                 account_id TEXT PK, username TEXT UNIQUE, verifier TEXT
                 (salted password verifier, never plaintext), age_band,
                 gender, language, location, created_at REAL
games          one row per deployed experiment (public metadata plus the
                 GM endpoint and its secret inbound-push token).
client_map     the private (instance_id, client_id) -> account_id mapping
                 recorded when an instance forms; account_id is NULL for
                 guests. This table never leaves the process.
credit_ledger  append-only score credits. One row per instance member per
                 settled instance; replays are detected by instance_id.
game_stats     per (account, game) totals derived from the ledger:
                 total_score, matches_played, first_credit_id (ledger rowid
                 of the first credit, used as the leaderboard tiebreak).

Live state (sessions, waiting rooms, running instances) is intentionally
not persisted: messages addressed to a dead instance are dropped across
restarts.
"""

from __future__ import annotations

import json
import sqlite3
import threading
import time
from pathlib import Path
from typing import Callable, Optional

_SCHEMA = """
CREATE TABLE IF NOT EXISTS accounts (
    account_id TEXT PRIMARY KEY,
    username   TEXT NOT NULL UNIQUE,
    verifier   TEXT NOT NULL,
    age_band   TEXT,
    gender     TEXT,
    language   TEXT,
    location   TEXT,
    created_at REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS games (
    game_id       TEXT PRIMARY KEY,
    owner         TEXT,
    name          TEXT NOT NULL,
    description   TEXT NOT NULL DEFAULT '',
    icon          TEXT,
    screenshots   TEXT NOT NULL DEFAULT '[]',
    required_players INTEGER NOT NULL,
    gm_url        TEXT NOT NULL,
    gm_timeout_s  REAL NOT NULL,
    gm_max_response_bytes INTEGER NOT NULL,
    gm_auth_token TEXT NOT NULL,
    entry         TEXT NOT NULL,
    bundle        TEXT NOT NULL DEFAULT '{}',
    access_filter TEXT NOT NULL DEFAULT '{}',
    grouping      TEXT NOT NULL DEFAULT '{}',
    status        TEXT NOT NULL DEFAULT 'draft',
    created_at    REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS client_map (
    instance_id TEXT NOT NULL,
    client_id   TEXT NOT NULL,
    game_id     TEXT NOT NULL,
    account_id  TEXT,
    member_pos  INTEGER NOT NULL,
    created_at  REAL NOT NULL,
    PRIMARY KEY (instance_id, client_id)
);
CREATE TABLE IF NOT EXISTS credit_ledger (
    credit_id   INTEGER PRIMARY KEY AUTOINCREMENT,
    game_id     TEXT NOT NULL,
    instance_id TEXT NOT NULL,
    client_id   TEXT NOT NULL,
    account_id  TEXT,
    amount      REAL NOT NULL,
    credited_at REAL NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_ledger_instance ON credit_ledger (instance_id);
CREATE INDEX IF NOT EXISTS idx_ledger_game ON credit_ledger (game_id);
CREATE TABLE IF NOT EXISTS game_stats (
    account_id      TEXT NOT NULL,
    game_id         TEXT NOT NULL,
    total_score     REAL NOT NULL DEFAULT 0,
    matches_played  INTEGER NOT NULL DEFAULT 0,
    first_credit_id INTEGER NOT NULL,
    first_credit_at REAL NOT NULL,
    PRIMARY KEY (account_id, game_id)
);
"""


class StoreError(Exception):
    """The store is unreadable, corrupt, or an operation failed."""


class Store:
    """Thread-safe wrapper over one SQLite database file."""

    def __init__(self, path, clock: Callable[[], float] = time.time):
        self.path = str(path)
        self._clock = clock
        self._lock = threading.RLock()
        try:
            self._db = sqlite3.connect(self.path, check_same_thread=False)
            self._db.execute("PRAGMA journal_mode=WAL")
            self._db.execute("PRAGMA foreign_keys=ON")
            self._db.executescript(_SCHEMA)
            self._db.commit()
        except sqlite3.Error as exc:
            raise StoreError(f"cannot open store at {self.path}: {exc}")

    def close(self):
        with self._lock:
            self._db.close()

    # -- accounts -----------------------------------------------------------

    def create_account(self, account_id, username, verifier, profile: dict) -> None:
        with self._lock:
            try:
                self._db.execute(
                    "INSERT INTO accounts (account_id, username, verifier, age_band,"
                    " gender, language, location, created_at) VALUES (?,?,?,?,?,?,?,?)",
                    (
                        account_id,
                        username,
                        verifier,
                        profile.get("age_band"),
                        profile.get("gender"),
                        profile.get("language"),
                        profile.get("location"),
                        self._clock(),
                    ),
                )
                self._db.commit()
            except sqlite3.IntegrityError:
                raise StoreError(f"username already taken: {username}")

    def account_by_username(self, username) -> Optional[dict]:
        return self._account("username = ?", username)

    def account_by_id(self, account_id) -> Optional[dict]:
        return self._account("account_id = ?", account_id)

    def _account(self, where, value) -> Optional[dict]:
        with self._lock:
            row = self._db.execute(
                "SELECT account_id, username, verifier, age_band, gender, language,"
                f" location, created_at FROM accounts WHERE {where}",
                (value,),
            ).fetchone()
        if row is None:
            return None
        keys = (
            "account_id",
            "username",
            "verifier",
            "age_band",
            "gender",
            "language",
            "location",
            "created_at",
        )
        return dict(zip(keys, row))

    def list_accounts(self) -> list[dict]:
        with self._lock:
            rows = self._db.execute(
                "SELECT account_id, username, age_band, gender, language, location,"
                " created_at FROM accounts ORDER BY created_at"
            ).fetchall()
        keys = ("account_id", "username", "age_band", "gender", "language", "location", "created_at")
        return [dict(zip(keys, r)) for r in rows]

    # -- client map ---------------------------------------------------------

    def record_members(self, game_id, instance_id, members) -> None:
        """members: ordered [(client_id, account_id_or_None)]."""
        now = self._clock()
        with self._lock:
            self._db.executemany(
                "INSERT INTO client_map (instance_id, client_id, game_id, account_id,"
                " member_pos, created_at) VALUES (?,?,?,?,?,?)",
                [
                    (instance_id, cid, game_id, acct, pos, now)
                    for pos, (cid, acct) in enumerate(members)
                ],
            )
            self._db.commit()

    def members_of(self, instance_id) -> list[tuple[str, Optional[str]]]:
        with self._lock:
            rows = self._db.execute(
                "SELECT client_id, account_id FROM client_map WHERE instance_id = ?"
                " ORDER BY member_pos",
                (instance_id,),
            ).fetchall()
        return [(cid, acct) for cid, acct in rows]

    def resolve_client(self, instance_id, client_id) -> Optional[str]:
        with self._lock:
            row = self._db.execute(
                "SELECT account_id FROM client_map WHERE instance_id = ? AND client_id = ?",
                (instance_id, client_id),
            ).fetchone()
        return row[0] if row else None

    # -- credits and stats ---------------------------------------------------

    def credits_exist(self, instance_id) -> bool:
        with self._lock:
            row = self._db.execute(
                "SELECT 1 FROM credit_ledger WHERE instance_id = ? LIMIT 1",
                (instance_id,),
            ).fetchone()
        return row is not None

    def apply_credits(self, game_id, instance_id, rows) -> None:
        """rows: ordered [(client_id, account_id_or_None, amount)].

        Inserts the ledger rows and folds registered members into
        game_stats, all in one transaction.
        """
        now = self._clock()
        with self._lock:
            cur = self._db.cursor()
            try:
                for client_id, account_id, amount in rows:
                    cur.execute(
                        "INSERT INTO credit_ledger (game_id, instance_id, client_id,"
                        " account_id, amount, credited_at) VALUES (?,?,?,?,?,?)",
                        (game_id, instance_id, client_id, account_id, amount, now),
                    )
                    if account_id is None:
                        continue
                    credit_id = cur.lastrowid
                    cur.execute(
                        "INSERT INTO game_stats (account_id, game_id, total_score,"
                        " matches_played, first_credit_id, first_credit_at)"
                        " VALUES (?,?,?,1,?,?)"
                        " ON CONFLICT (account_id, game_id) DO UPDATE SET"
                        " total_score = total_score + excluded.total_score,"
                        " matches_played = matches_played + 1",
                        (account_id, game_id, amount, credit_id, now),
                    )
                self._db.commit()
            except sqlite3.Error as exc:
                self._db.rollback()
                raise StoreError(f"credit failed: {exc}")

    def stats_rows(self, game_id) -> list[dict]:
        with self._lock:
            rows = self._db.execute(
                "SELECT s.account_id, a.username, s.total_score, s.matches_played,"
                " s.first_credit_id, s.first_credit_at"
                " FROM game_stats s JOIN accounts a ON a.account_id = s.account_id"
                " WHERE s.game_id = ?"
                " ORDER BY s.total_score DESC, s.first_credit_id ASC, s.account_id ASC",
                (game_id,),
            ).fetchall()
        keys = ("account_id", "username", "total_score", "matches_played", "first_credit_id", "first_credit_at")
        return [dict(zip(keys, r)) for r in rows]

    def stats_for(self, account_id, game_id) -> Optional[dict]:
        with self._lock:
            row = self._db.execute(
                "SELECT total_score, matches_played, first_credit_at FROM game_stats"
                " WHERE account_id = ? AND game_id = ?",
                (account_id, game_id),
            ).fetchone()
        if row is None:
            return None
        return {"total_score": row[0], "matches_played": row[1], "first_credit_at": row[2]}

    def ledger_rows(self, game_id) -> list[dict]:
        with self._lock:
            rows = self._db.execute(
                "SELECT credit_id, instance_id, client_id, account_id, amount, credited_at"
                " FROM credit_ledger WHERE game_id = ? ORDER BY credit_id",
                (game_id,),
            ).fetchall()
        keys = ("credit_id", "instance_id", "client_id", "account_id", "amount", "credited_at")
        return [dict(zip(keys, r)) for r in rows]

    def ledger_total(self, account_id, game_id) -> float:
        with self._lock:
            row = self._db.execute(
                "SELECT COALESCE(SUM(amount), 0) FROM credit_ledger"
                " WHERE account_id = ? AND game_id = ?",
                (account_id, game_id),
            ).fetchone()
        return row[0]

    # -- games ----------------------------------------------------------------

    def upsert_game(self, record: dict) -> None:
        cols = (
            "game_id",
            "owner",
            "name",
            "description",
            "icon",
            "screenshots",
            "required_players",
            "gm_url",
            "gm_timeout_s",
            "gm_max_response_bytes",
            "gm_auth_token",
            "entry",
            "bundle",
            "access_filter",
            "grouping",
            "status",
            "created_at",
        )
        row = {**record}
        for key in ("screenshots", "bundle", "access_filter", "grouping"):
            if not isinstance(row.get(key), str):
                row[key] = json.dumps(row.get(key) or ({} if key != "screenshots" else []))
        with self._lock:
            self._db.execute(
                f"INSERT OR REPLACE INTO games ({', '.join(cols)})"
                f" VALUES ({', '.join('?' for _ in cols)})",
                tuple(row[c] for c in cols),
            )
            self._db.commit()

    def game_row(self, game_id) -> Optional[dict]:
        return self._game("game_id = ?", game_id)

    def game_by_token(self, token) -> Optional[dict]:
        return self._game("gm_auth_token = ?", token)

    def _game(self, where, value) -> Optional[dict]:
        with self._lock:
            cur = self._db.execute(f"SELECT * FROM games WHERE {where}", (value,))
            row = cur.fetchone()
            if row is None:
                return None
            keys = [c[0] for c in cur.description]
        return self._inflate_game(dict(zip(keys, row)))

    def list_games(self) -> list[dict]:
        with self._lock:
            cur = self._db.execute("SELECT * FROM games ORDER BY created_at")
            keys = [c[0] for c in cur.description]
            rows = cur.fetchall()
        return [self._inflate_game(dict(zip(keys, r))) for r in rows]

    @staticmethod
    def _inflate_game(row: dict) -> dict:
        for key in ("screenshots", "bundle", "access_filter", "grouping"):
            row[key] = json.loads(row[key])
        return row

    def set_game_status(self, game_id, status) -> None:
        with self._lock:
            self._db.execute("UPDATE games SET status = ? WHERE game_id = ?", (status, game_id))
            self._db.commit()

    def set_game_bundle(self, game_id, bundle: dict, entry: str) -> None:
        with self._lock:
            self._db.execute(
                "UPDATE games SET bundle = ?, entry = ? WHERE game_id = ?",
                (json.dumps(bundle), entry, game_id),
            )
            self._db.commit()


def open_store(data_dir, filename="playlab.sqlite3") -> Store:
    """Open (or create) the store inside an existing data directory."""
    root = Path(data_dir)
    if not root.is_dir():
        raise StoreError(f"data directory does not exist: {root}")
    return Store(root / filename)
