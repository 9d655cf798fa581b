"""Game manager for the three-player minority game.

Players are shown two amounts and each picks one. If all three agree,
nobody wins. On a 2-1 split the lone player wins the amount they chose;
the majority gets nothing. The GM picks the two amounts when an instance
is created, deals them to each player as they become ready, collects the
three choices, then broadcasts the result and closes the instance with a
per-player scores map.

Per-instance state lives in an embedded SQLite store keyed by instanceId,
so a GM restart does not corrupt running games; stale rows expire after a
TTL. Raw choice records are appended to a JSONL log for later analysis.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sqlite3
import threading
import time
from dataclasses import dataclass
from typing import Optional

from playlab.gms.harness import GmServer
from playlab.protocol import Message

log = logging.getLogger(__name__)

_SCHEMA = """
CREATE TABLE IF NOT EXISTS instances (
    instance_id TEXT PRIMARY KEY,
    v1          REAL NOT NULL,
    v2          REAL NOT NULL,
    ready_count INTEGER NOT NULL DEFAULT 0,
    created_at  REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS choices (
    instance_id TEXT NOT NULL,
    client_id   TEXT NOT NULL,
    value       REAL NOT NULL,
    PRIMARY KEY (instance_id, client_id)
);
"""

PLAYERS = 3


@dataclass(frozen=True)
class Winner:
    client_id: str
    amount: float


def compute_winner(choices: dict, v1, v2) -> Optional[Winner]:
    """Resolve a 3-player round: None on 3-0 agreement, minority wins 2-1."""
    if len(choices) != PLAYERS:
        raise ValueError(f"need exactly {PLAYERS} choices, got {len(choices)}")
    if any(v not in (v1, v2) for v in choices.values()):
        raise ValueError("every choice must be one of the two offered values")
    picked_v1 = [c for c, v in choices.items() if v == v1]
    if len(picked_v1) in (0, PLAYERS):
        return None
    if len(picked_v1) == 1:
        lone = picked_v1[0]
    else:
        lone = next(c for c in choices if c not in picked_v1)
    return Winner(client_id=lone, amount=choices[lone])


def scores_for(choices: dict, winner: Optional[Winner]) -> dict:
    if winner is None:
        return {c: 0 for c in choices}
    return {c: (winner.amount if c == winner.client_id else 0) for c in choices}


def _as_amount(value: float):
    return int(value) if float(value).is_integer() else float(value)


@dataclass(frozen=True)
class RoundState:
    instance_id: str
    v1: float
    v2: float
    ready_count: int
    choices: dict


class MinorityGm:
    def __init__(
        self,
        values_set=(5,),
        ratio: float = 2.0,
        state_path: str = ":memory:",
        ttl_s: float = 3600.0,
        rng: Optional[random.Random] = None,
        currency: Optional[str] = None,
        log_path: Optional[str] = None,
    ):
        if not values_set:
            raise ValueError("values_set must not be empty")
        if ratio == 1:
            raise ValueError("ratio 1 would make the two amounts equal")
        self._values = tuple(values_set)
        self._ratio = ratio
        self._ttl = ttl_s
        self._rng = rng or random.Random()
        self._currency = currency
        self._log_path = log_path
        self._lock = threading.RLock()
        self._db = sqlite3.connect(state_path, check_same_thread=False)
        self._db.executescript(_SCHEMA)
        self._db.commit()

    # -- message entry point ---------------------------------------------------

    def handle(self, m: Message) -> list[Message]:
        with self._lock:
            self._expire(time.time())
            if m.topic == "instance" and m.sender == "system":
                return self._on_instance(m)
            if m.topic == "ready" and m.sender == "system":
                return self._on_ready(m)
            if m.topic == "mgUChoice" and m.sender == "client":
                return self._on_choice(m)
            if m.topic == "drop" and m.sender == "system":
                self._discard(m.instance_id)
                return []
            return []  # pings and unknown traffic are fine to ignore

    def _on_instance(self, m: Message) -> list[Message]:
        v1 = self._rng.choice(self._values)
        v2 = _as_amount(v1 * self._ratio)
        self._db.execute(
            "INSERT OR IGNORE INTO instances (instance_id, v1, v2, ready_count, created_at)"
            " VALUES (?,?,?,0,?)",
            (m.instance_id, v1, v2, time.time()),
        )
        self._db.commit()
        self._append_log({"event": "instance", "instanceId": m.instance_id, "values": [v1, v2]})
        return []

    def _on_ready(self, m: Message) -> list[Message]:
        state = self._state(m.instance_id)
        if state is None:
            return [self._fault(m, "ready for unknown instance")]
        self._db.execute(
            "UPDATE instances SET ready_count = ready_count + 1 WHERE instance_id = ?",
            (m.instance_id,),
        )
        self._db.commit()
        return [
            Message(
                topic="mgChoices",
                recipient="client",
                client_id=m.client_id,
                instance_id=m.instance_id,
                params=self._choices_params(state),
            )
        ]

    def _on_choice(self, m: Message) -> list[Message]:
        state = self._state(m.instance_id)
        if state is None:
            return [self._fault(m, "choice for unknown instance")]
        value = m.params
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value not in (
            state.v1,
            state.v2,
        ):
            return [self._fault(m, f"choice {value!r} is not one of the offered values")]
        if m.client_id in state.choices:
            return []  # first choice wins; duplicates are ignored
        self._db.execute(
            "INSERT INTO choices (instance_id, client_id, value) VALUES (?,?,?)",
            (m.instance_id, m.client_id, float(value)),
        )
        self._db.commit()
        self._append_log(
            {"event": "choice", "instanceId": m.instance_id, "clientId": m.client_id, "value": value}
        )
        state = self._state(m.instance_id)
        if len(state.choices) < PLAYERS:
            return []

        v1, v2 = _as_amount(state.v1), _as_amount(state.v2)
        choices = {c: _as_amount(v) for c, v in state.choices.items()}
        winner = compute_winner(choices, v1, v2)
        scores = scores_for(choices, winner)
        self._discard(m.instance_id)
        self._append_log(
            {
                "event": "result",
                "instanceId": m.instance_id,
                "choices": choices,
                "winner": winner.client_id if winner else None,
            }
        )
        result_params = {
            "winner": winner.client_id if winner else None,
            "amount": winner.amount if winner else 0,
            "choices": choices,
            "values": [v1, v2],
        }
        if self._currency:
            result_params["currency"] = self._currency
        return [
            Message(
                topic="mgResult",
                recipient="client",
                broadcast=True,
                instance_id=m.instance_id,
                params=result_params,
            ),
            Message(
                topic="over",
                recipient="system",
                instance_id=m.instance_id,
                params=scores,
            ),
        ]

    # -- helpers ---------------------------------------------------------------

    def _choices_params(self, state: RoundState):
        values = [_as_amount(state.v1), _as_amount(state.v2)]
        if self._currency:
            return {"values": values, "currency": self._currency}
        return values

    @staticmethod
    def _fault(m: Message, reason: str) -> Message:
        return Message(
            topic="error",
            recipient="system",
            instance_id=m.instance_id,
            params={"reason": reason},
        )

    def _state(self, instance_id) -> Optional[RoundState]:
        if instance_id is None:
            return None
        row = self._db.execute(
            "SELECT v1, v2, ready_count FROM instances WHERE instance_id = ?",
            (instance_id,),
        ).fetchone()
        if row is None:
            return None
        choices = dict(
            self._db.execute(
                "SELECT client_id, value FROM choices WHERE instance_id = ?", (instance_id,)
            ).fetchall()
        )
        return RoundState(instance_id, row[0], row[1], row[2], choices)

    def _discard(self, instance_id):
        if instance_id is None:
            return
        self._db.execute("DELETE FROM choices WHERE instance_id = ?", (instance_id,))
        self._db.execute("DELETE FROM instances WHERE instance_id = ?", (instance_id,))
        self._db.commit()

    def _expire(self, now: float):
        cutoff = now - self._ttl
        stale = [
            r[0]
            for r in self._db.execute(
                "SELECT instance_id FROM instances WHERE created_at < ?", (cutoff,)
            ).fetchall()
        ]
        for instance_id in stale:
            self._discard(instance_id)

    def _append_log(self, record: dict):
        if not self._log_path:
            return
        record = {"ts": time.time(), **record}
        with open(self._log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")

    def close(self):
        self._db.close()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="playlab-gm-minority",
        description="Run the three-player minority game manager.",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8032)
    parser.add_argument(
        "--values-set",
        default="5",
        help="comma-separated pool the first amount is drawn from (default: 5)",
    )
    parser.add_argument(
        "--ratio", type=float, default=2.0, help="second amount = first * ratio (default: 2)"
    )
    parser.add_argument("--ttl", type=float, default=3600.0, help="seconds before stale round state expires")
    parser.add_argument("--state", default="minority-gm.sqlite3", help="round-state database path")
    parser.add_argument("--log", default=None, help="append raw choice records to this JSONL file")
    parser.add_argument("--currency", default=None, help="currency sign added to presentation params")
    args = parser.parse_args(argv)

    try:
        values = tuple(_as_amount(float(v)) for v in args.values_set.split(",") if v.strip())
    except ValueError:
        parser.error("--values-set must be a comma-separated list of numbers")

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s")
    gm = MinorityGm(
        values_set=values,
        ratio=args.ratio,
        state_path=args.state,
        ttl_s=args.ttl,
        currency=args.currency,
        log_path=args.log,
    )
    server = GmServer(gm.handle, host=args.host, port=args.port, name="minority-gm/0.1")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()
        gm.close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
