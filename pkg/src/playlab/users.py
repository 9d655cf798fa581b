"""Accounts, profiles, access filters, score credits, and leaderboards.

This module also owns the private mapping from per-instance anonymous
client ids back to accounts. ``resolve_client`` is deliberately never
wired to any network endpoint; the rest of the platform addresses players
only by (instanceId, clientId).
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import re
import secrets
import time
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from playlab.storage import Store, StoreError

_USERNAME_RE = re.compile(r"^[A-Za-z0-9_.-]{3,32}$")
_AGE_BAND_RE = re.compile(r"^(\d{1,3})-(\d{1,3})$")

# scrypt cost parameters; bumping them only affects new verifiers because
# the parameters are stored alongside each hash.
_SCRYPT_N = 2**14
_SCRYPT_R = 8
_SCRYPT_P = 1

DENY_REGISTRATION = "registration_required"
DENY_PROFILE = "profile_mismatch"


class RegistryError(Exception):
    pass


class UnknownInstanceError(RegistryError):
    pass


@dataclass(frozen=True)
class Profile:
    age_band: Optional[str] = None
    gender: Optional[str] = None
    language: Optional[str] = None
    location: Optional[str] = None

    def as_dict(self) -> dict:
        return {
            "age_band": self.age_band,
            "gender": self.gender,
            "language": self.language,
            "location": self.location,
        }


@dataclass(frozen=True)
class Identity:
    """Either a registered account or a guest (account_id None)."""

    account_id: Optional[str]
    display_name: str
    profile: Optional[Profile] = None

    @property
    def is_guest(self) -> bool:
        return self.account_id is None


GUEST = Identity(account_id=None, display_name="guest", profile=None)


@dataclass(frozen=True)
class AccessFilter:
    """Per-game entry predicate. An empty filter admits everyone."""

    requires_registration: bool = False
    languages: Optional[frozenset] = None
    age_min: Optional[int] = None
    age_max: Optional[int] = None
    locations: Optional[frozenset] = None

    def profile_dependent(self) -> bool:
        return (
            self.languages is not None
            or self.age_min is not None
            or self.age_max is not None
            or self.locations is not None
        )

    def evaluate(self, identity: Identity) -> Optional[str]:
        """Return None when access is allowed, else a deny reason class."""
        if not self.requires_registration and not self.profile_dependent():
            return None
        if identity.is_guest:
            # Guests cannot satisfy registration or any profile predicate.
            return DENY_REGISTRATION
        profile = identity.profile or Profile()
        if self.languages is not None and profile.language not in self.languages:
            return DENY_PROFILE
        if self.age_min is not None or self.age_max is not None:
            band = _parse_age_band(profile.age_band) if profile.age_band else None
            if band is None:
                return DENY_PROFILE
            lo, hi = band
            if self.age_min is not None and lo < self.age_min:
                return DENY_PROFILE
            if self.age_max is not None and hi > self.age_max:
                return DENY_PROFILE
        if self.locations is not None and profile.location not in self.locations:
            return DENY_PROFILE
        return None

    def as_dict(self) -> dict:
        out: dict = {"requires_registration": self.requires_registration}
        if self.languages is not None:
            out["languages"] = sorted(self.languages)
        if self.age_min is not None:
            out["age_min"] = self.age_min
        if self.age_max is not None:
            out["age_max"] = self.age_max
        if self.locations is not None:
            out["locations"] = sorted(self.locations)
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "AccessFilter":
        return cls(
            requires_registration=bool(data.get("requires_registration", False)),
            languages=frozenset(data["languages"]) if data.get("languages") else None,
            age_min=data.get("age_min"),
            age_max=data.get("age_max"),
            locations=frozenset(data["locations"]) if data.get("locations") else None,
        )


def _parse_age_band(text: str) -> Optional[tuple[int, int]]:
    match = _AGE_BAND_RE.match(text or "")
    if not match:
        return None
    lo, hi = int(match.group(1)), int(match.group(2))
    if lo > hi:
        return None
    return lo, hi


@dataclass(frozen=True)
class ScoreReport:
    """Outcome of one update_scores call."""

    applied: tuple  # ordered (client_id, account_id_or_None, amount)
    skipped: tuple  # (client_id, reason)
    replay: bool = False


class UserRegistry:
    def __init__(self, store: Store, clock=time.time):
        self._store = store
        self._clock = clock

    # -- registration and auth ------------------------------------------------

    def register_user(self, username: str, password: str, profile: Optional[Profile] = None) -> str:
        if not isinstance(username, str) or not _USERNAME_RE.match(username):
            raise RegistryError("username must be 3-32 chars of letters, digits, _ . -")
        if not isinstance(password, str) or len(password) < 6:
            raise RegistryError("password must be at least 6 characters")
        profile = profile or Profile()
        self._validate_profile(profile)
        account_id = "u" + secrets.token_hex(6)
        verifier = _hash_password(password)
        try:
            self._store.create_account(account_id, username, verifier, profile.as_dict())
        except StoreError as exc:
            raise RegistryError(str(exc))
        return account_id

    @staticmethod
    def _validate_profile(profile: Profile):
        for name in ("age_band", "gender", "language", "location"):
            value = getattr(profile, name)
            if value is not None and (not isinstance(value, str) or value == ""):
                raise RegistryError(f"profile field {name} must be a non-empty string")
        if profile.age_band is not None and _parse_age_band(profile.age_band) is None:
            raise RegistryError("age_band must look like '18-25' with low <= high")

    def authenticate(self, username: str, password: str) -> Optional[Identity]:
        row = self._store.account_by_username(username)
        if row is None or not _verify_password(password, row["verifier"]):
            return None
        return self._identity_from_row(row)

    def identity_for(self, account_id: str) -> Optional[Identity]:
        row = self._store.account_by_id(account_id)
        return None if row is None else self._identity_from_row(row)

    @staticmethod
    def _identity_from_row(row: dict) -> Identity:
        return Identity(
            account_id=row["account_id"],
            display_name=row["username"],
            profile=Profile(
                age_band=row["age_band"],
                gender=row["gender"],
                language=row["language"],
                location=row["location"],
            ),
        )

    def list_accounts(self) -> list[dict]:
        return self._store.list_accounts()

    # -- access filtering -------------------------------------------------------

    @staticmethod
    def check_access(access_filter: AccessFilter, identity: Identity) -> Optional[str]:
        """None = allow; otherwise a deny reason class (no filter details)."""
        return access_filter.evaluate(identity)

    # -- instance membership and scoring ----------------------------------------

    def record_instance_members(
        self, game_id: str, instance_id: str, members: Sequence[tuple[str, Optional[str]]]
    ) -> None:
        self._store.record_members(game_id, instance_id, members)

    def resolve_client(self, instance_id: str, client_id: str) -> Optional[str]:
        return self._store.resolve_client(instance_id, client_id)

    def update_scores(self, game_id: str, instance_id: str, scores: Mapping) -> ScoreReport:
        members = self._store.members_of(instance_id)
        if not members:
            raise UnknownInstanceError(f"no members recorded for instance {instance_id}")
        if self._store.credits_exist(instance_id):
            return ScoreReport(applied=(), skipped=(), replay=True)

        member_ids = {cid for cid, _ in members}
        skipped = []
        amounts = {}
        for client_id, amount in scores.items():
            if client_id not in member_ids:
                skipped.append((client_id, "unknown clientId"))
                continue
            if isinstance(amount, bool) or not isinstance(amount, (int, float)):
                skipped.append((client_id, "score is not a number"))
                continue
            amounts[client_id] = float(amount)

        rows = [(cid, acct, amounts.get(cid, 0.0)) for cid, acct in members]
        self._store.apply_credits(game_id, instance_id, rows)
        return ScoreReport(applied=tuple(rows), skipped=tuple(skipped))

    def leaderboard(self, game_id: str, top_n: int = 10) -> list[tuple[str, float]]:
        rows = self._store.stats_rows(game_id)
        return [(r["username"], r["total_score"]) for r in rows[: max(top_n, 0)]]

    def game_score(self, account_id: str, game_id: str) -> float:
        stats = self._store.stats_for(account_id, game_id)
        return stats["total_score"] if stats else 0.0

    def stats_export(self, game_id: str) -> list[dict]:
        """Rows for `stats export`: one record per (account, game)."""
        return [
            {
                "accountId": r["account_id"],
                "displayName": r["username"],
                "gameId": game_id,
                "totalScore": r["total_score"],
                "matchesPlayed": r["matches_played"],
                "firstCreditAt": r["first_credit_at"],
            }
            for r in self._store.stats_rows(game_id)
        ]


# -- password hashing -------------------------------------------------------


def _hash_password(password: str) -> str:
    salt = secrets.token_bytes(16)
    key = hashlib.scrypt(
        password.encode("utf-8"), salt=salt, n=_SCRYPT_N, r=_SCRYPT_R, p=_SCRYPT_P
    )
    parts = (
        "scrypt",
        str(_SCRYPT_N),
        str(_SCRYPT_R),
        str(_SCRYPT_P),
        base64.b64encode(salt).decode("ascii"),
        base64.b64encode(key).decode("ascii"),
    )
    return "$".join(parts)


def _verify_password(password: str, verifier: str) -> bool:
    try:
        scheme, n, r, p, salt_b64, key_b64 = verifier.split("$")
        if scheme != "scrypt":
            return False
        salt = base64.b64decode(salt_b64)
        expected = base64.b64decode(key_b64)
        key = hashlib.scrypt(
            password.encode("utf-8"), salt=salt, n=int(n), r=int(r), p=int(p)
        )
    except (ValueError, TypeError):
        return False
    return hmac.compare_digest(key, expected)
