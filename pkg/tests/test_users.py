import pytest

from playlab.storage import Store
from playlab.users import (
    GUEST,
    AccessFilter,
    Profile,
    RegistryError,
    UnknownInstanceError,
    UserRegistry,
)


@pytest.fixture
def registry(tmp_path):
    return UserRegistry(Store(tmp_path / "t.sqlite3"))


def test_register_and_authenticate(registry):
    account_id = registry.register_user("alice", "hunter22", Profile(language="it"))
    assert account_id.startswith("u")
    identity = registry.authenticate("alice", "hunter22")
    assert identity is not None
    assert identity.account_id == account_id
    assert identity.profile.language == "it"
    assert registry.authenticate("alice", "wrong") is None
    assert registry.authenticate("nobody", "hunter22") is None


def test_duplicate_username_rejected(registry):
    registry.register_user("alice", "hunter22")
    with pytest.raises(RegistryError):
        registry.register_user("alice", "other-pass")


def test_password_never_stored_plaintext(registry, tmp_path):
    registry.register_user("alice", "supersecretpw")
    raw = (tmp_path / "t.sqlite3").read_bytes()
    assert b"supersecretpw" not in raw


def test_profile_fields_are_optional(registry):
    account_id = registry.register_user("bruno", "password1", Profile(language="it"))
    identity = registry.identity_for(account_id)
    assert identity.profile.age_band is None
    assert identity.profile.language == "it"


def test_malformed_age_band_rejected(registry):
    with pytest.raises(RegistryError):
        registry.register_user("carla", "password1", Profile(age_band="old"))
    with pytest.raises(RegistryError):
        registry.register_user("carla", "password1", Profile(age_band="30-20"))


def test_bad_username_rejected(registry):
    with pytest.raises(RegistryError):
        registry.register_user("x", "password1")
    with pytest.raises(RegistryError):
        registry.register_user("has spaces", "password1")


# -- access filters ------------------------------------------------------------


def identity_with(profile):
    return GUEST.__class__(account_id="u123", display_name="p", profile=profile)


def test_open_game_admits_guests():
    assert AccessFilter().evaluate(GUEST) is None


def test_registration_required_denies_guests():
    f = AccessFilter(requires_registration=True)
    assert f.evaluate(GUEST) == "registration_required"
    assert f.evaluate(identity_with(Profile())) is None


def test_profile_filter_denies_guests():
    f = AccessFilter(languages=frozenset({"it"}))
    assert f.evaluate(GUEST) == "registration_required"


def test_language_filter():
    f = AccessFilter(languages=frozenset({"en"}))
    assert f.evaluate(identity_with(Profile(language="it"))) == "profile_mismatch"
    assert f.evaluate(identity_with(Profile(language="en"))) is None
    assert f.evaluate(identity_with(Profile())) == "profile_mismatch"


def test_age_band_interval_check():
    # Oracle: a band passes iff [lo, hi] lies within [age_min, age_max].
    f = AccessFilter(age_min=18, age_max=25)
    assert f.evaluate(identity_with(Profile(age_band="18-25"))) is None
    assert f.evaluate(identity_with(Profile(age_band="19-24"))) is None
    assert f.evaluate(identity_with(Profile(age_band="16-21"))) == "profile_mismatch"
    assert f.evaluate(identity_with(Profile(age_band="18-29"))) == "profile_mismatch"
    assert f.evaluate(identity_with(Profile())) == "profile_mismatch"


def test_filter_round_trips_through_dict():
    f = AccessFilter(requires_registration=True, languages=frozenset({"it", "en"}), age_min=18)
    assert AccessFilter.from_dict(f.as_dict()) == f


# -- scoring -------------------------------------------------------------------


def seeded_instance(registry, game="mg", instance="inst1", guests=0):
    accounts = [registry.register_user(f"player{i}", "password1") for i in range(3 - guests)]
    members = [(f"c{i}", accounts[i] if i < len(accounts) else None) for i in range(3)]
    registry.record_instance_members(game, instance, members)
    return members


def test_update_scores_credits_winner(registry):
    members = seeded_instance(registry)
    scores = {"c0": 0, "c1": 0, "c2": 10}
    report = registry.update_scores("mg", "inst1", scores)
    assert not report.replay and report.skipped == ()
    board = registry.leaderboard("mg", 10)
    assert board[0] == ("player2", 10.0)
    # matchesPlayed increments for every registered member, even at 0.
    assert all(r["matchesPlayed"] == 1 for r in registry.stats_export("mg"))


def test_replay_credits_nothing(registry):
    seeded_instance(registry)
    registry.update_scores("mg", "inst1", {"c2": 10})
    before = registry.stats_export("mg")
    report = registry.update_scores("mg", "inst1", {"c2": 10})
    assert report.replay
    assert registry.stats_export("mg") == before


def test_unknown_client_id_skipped_others_applied(registry):
    seeded_instance(registry)
    report = registry.update_scores("mg", "inst1", {"c2": 7, "ghost": 99})
    assert ("ghost", "unknown clientId") in report.skipped
    assert registry.leaderboard("mg", 1) == [("player2", 7.0)]


def test_guest_scores_not_persisted(registry):
    members = seeded_instance(registry, guests=1)  # c2 is a guest
    before = {r["accountId"]: r["totalScore"] for r in registry.stats_export("mg")}
    registry.update_scores("mg", "inst1", {"c2": 50, "c0": 3})
    after = {r["accountId"]: r["totalScore"] for r in registry.stats_export("mg")}
    # Oracle: the stats diff equals the registered-members-only credit.
    registered = {cid: acct for cid, acct in members if acct is not None}
    expected = dict(before)
    expected.setdefault(registered["c0"], 0)
    expected[registered["c0"]] += 3
    expected.setdefault(registered["c1"], 0)
    assert after == expected


def test_unknown_instance_raises(registry):
    with pytest.raises(UnknownInstanceError):
        registry.update_scores("mg", "ghost", {"a": 1})


def test_non_numeric_score_skipped(registry):
    seeded_instance(registry)
    report = registry.update_scores("mg", "inst1", {"c0": "ten", "c1": True, "c2": 4})
    reasons = {cid: why for cid, why in report.skipped}
    assert set(reasons) == {"c0", "c1"}
    assert registry.leaderboard("mg", 1) == [("player2", 4.0)]


def test_total_score_equals_ledger_sum(registry):
    members = seeded_instance(registry)
    registry.record_instance_members("mg", "inst2", members)
    registry.update_scores("mg", "inst1", {"c0": 5})
    registry.update_scores("mg", "inst2", {"c0": 7, "c2": 1})
    for row in registry.stats_export("mg"):
        assert row["totalScore"] == registry._store.ledger_total(row["accountId"], "mg")


def test_leaderboard_order_and_tiebreak(registry):
    # Full-sort oracle: total desc, then earlier first credit.
    a = registry.register_user("ann", "password1")
    b = registry.register_user("bob", "password1")
    c = registry.register_user("cyd", "password1")
    registry.record_instance_members("g", "i1", [("x", a)])
    registry.record_instance_members("g", "i2", [("y", b)])
    registry.record_instance_members("g", "i3", [("z", c)])
    registry.update_scores("g", "i1", {"x": 20})  # ann credited first
    registry.update_scores("g", "i2", {"y": 30})
    registry.update_scores("g", "i3", {"z": 20})  # cyd ties ann, later
    assert registry.leaderboard("g", 10) == [("bob", 30.0), ("ann", 20.0), ("cyd", 20.0)]
    assert registry.leaderboard("g", 2) == [("bob", 30.0), ("ann", 20.0)]
    assert registry.leaderboard("empty-game", 5) == []


def test_resolve_client_private_mapping(registry):
    members = seeded_instance(registry, guests=1)
    assert registry.resolve_client("inst1", "c0") == members[0][1]
    assert registry.resolve_client("inst1", "c2") is None  # guest
    assert registry.resolve_client("other", "c0") is None  # foreign instance


def test_distinct_members_map_to_distinct_accounts(registry):
    members = seeded_instance(registry)
    resolved = [registry.resolve_client("inst1", cid) for cid, _ in members]
    assert len(set(resolved)) == len(resolved)
