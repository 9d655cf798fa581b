import random

import pytest

from playlab import events as ev
from playlab.matchmaking import (
    Credit,
    Deliver,
    Dequeued,
    GmNotify,
    GroupingConstraint,
    InstanceManager,
    InstanceState,
    MatchmakingError,
    Note,
    Release,
    build_predicate,
    distinct_field,
    same_field,
    score_band,
)


def make_manager():
    counters = {"i": 0, "c": 0}

    def next_instance():
        counters["i"] += 1
        return f"inst{counters['i']}"

    def next_client():
        counters["c"] += 1
        return f"cli{counters['c']}"

    return InstanceManager(
        clock=lambda: 1000.0,
        instance_id_factory=next_instance,
        client_id_factory=next_client,
    )


def constraint(k, predicate=None):
    return GroupingConstraint(required_players=k, predicate=predicate)


def enqueue(mgr, game, session, snapshot=None, k=2, predicate=None):
    return mgr.enqueue_player(game, session, snapshot or {}, constraint(k, predicate))


# -- formation ---------------------------------------------------------------


def test_first_player_queues():
    mgr = make_manager()
    inst, effects = enqueue(mgr, "g", "s1", k=2)
    assert inst is None
    kinds = [e.kind for e in effects if isinstance(e, Note)]
    assert kinds == [ev.QUEUED]
    deliveries = [e for e in effects if isinstance(e, Deliver)]
    assert deliveries[0].message.topic == "queued"


def test_third_player_completes_three_player_game():
    mgr = make_manager()
    enqueue(mgr, "g", "s1", k=3)
    enqueue(mgr, "g", "s2", k=3)
    inst, effects = enqueue(mgr, "g", "s3", k=3)
    assert inst is not None
    assert inst.session_ids() == ["s1", "s2", "s3"]
    assert inst.state is InstanceState.LOADING
    assert len(set(inst.client_ids())) == 3
    assert mgr.queue_depth("g") == 0


def test_formation_effect_order():
    mgr = make_manager()
    enqueue(mgr, "g", "s1", k=2)
    inst, effects = enqueue(mgr, "g", "s2", k=2)
    assert isinstance(effects[0], Note) and effects[0].kind == ev.INSTANCE
    assert isinstance(effects[1], GmNotify)
    gm_msg = effects[1].message
    assert gm_msg.sender == "system"
    assert gm_msg.topic == "instance"
    assert gm_msg.instance_id == inst.instance_id
    assert gm_msg.recipient is None
    assert isinstance(effects[2], Note) and effects[2].kind == ev.LOAD
    loads = [e.message for e in effects if isinstance(e, Deliver)]
    assert [m.topic for m in loads] == ["instance", "instance"]
    assert {m.client_id for m in loads} == set(inst.client_ids())


def test_duplicate_enqueue_rejected():
    mgr = make_manager()
    enqueue(mgr, "g", "s1", k=3)
    with pytest.raises(MatchmakingError):
        enqueue(mgr, "g", "s1", k=3)


def test_unknown_room_rejected():
    mgr = make_manager()
    with pytest.raises(MatchmakingError):
        mgr.room("nope")


def test_score_band_pairing_from_seniority():
    # Queue a,b,c,d with scores 0,100,5,95 and band 10: (a,c) pairs first.
    mgr = make_manager()
    pred = score_band(10)
    for sid, score in (("a", 0), ("b", 100), ("c", 5)):
        inst, _ = enqueue(mgr, "g", sid, {"score": score}, k=2, predicate=pred)
        if sid == "c":
            assert inst is not None
            assert inst.session_ids() == ["a", "c"]
    inst, _ = enqueue(mgr, "g", "d", {"score": 95}, k=2, predicate=pred)
    assert inst is not None
    assert inst.session_ids() == ["b", "d"]


def test_distinct_location_triple_window():
    mgr = make_manager()
    pred = distinct_field("location")
    locs = {"p1": "rome", "p2": "rome", "p3": "turin", "p4": "milan"}
    formed = []
    for sid in ("p1", "p2", "p3", "p4"):
        inst, _ = enqueue(mgr, "g", sid, {"location": locs[sid]}, k=3, predicate=pred)
        if inst:
            formed.append(inst)
    assert len(formed) == 1
    # Only {p1,p3,p4} (and {p2,p3,p4}) are valid; seniority picks p1's triple.
    assert formed[0].session_ids() == ["p1", "p3", "p4"]
    assert mgr.queue_depth("g") == 1


def test_fifo_without_predicate():
    mgr = make_manager()
    for i in range(5):
        enqueue(mgr, "g", f"s{i}", k=6)
    inst, _ = enqueue(mgr, "g", "s5", k=6)
    assert inst.session_ids() == [f"s{i}" for i in range(6)]


# -- oracle comparison ----------------------------------------------------------


def first_admissible_subset(queue, k, predicate):
    """Brute-force seniority-anchored search, written independently of the
    production scan: recursive lexicographic enumeration of index subsets."""
    found = None

    def rec(start, acc):
        nonlocal found
        if found is not None:
            return
        if len(acc) == k:
            snaps = [queue[i][1] for i in acc]
            if predicate is None or predicate(snaps):
                found = tuple(acc)
            return
        if len(queue) - start < k - len(acc):
            return
        for i in range(start, len(queue)):
            rec(i + 1, acc + [i])
            if found is not None:
                return

    rec(0, [])
    return found


def simulate_with_oracle(seed, trials=30):
    rng = random.Random(seed)
    mismatches = 0
    for _ in range(trials):
        mgr = make_manager()
        k = rng.randint(2, 4)
        band = rng.choice([0, 5, 10, 25, 40])
        pred = score_band(band)
        model = []  # mirrored queue of (session_id, snapshot)
        for n in range(rng.randint(1, 12)):
            sid = f"s{n}"
            snap = {"score": rng.randint(0, 100)}
            inst, _ = mgr.enqueue_player("g", sid, snap, constraint(k, pred))
            model.append((sid, snap))
            expected = first_admissible_subset(model, k, pred)
            if expected is None:
                if inst is not None:
                    mismatches += 1
            else:
                want = [model[i][0] for i in expected]
                if inst is None or inst.session_ids() != want:
                    mismatches += 1
                else:
                    model = [m for i, m in enumerate(model) if i not in set(expected)]
    return mismatches


def test_policy_matches_bruteforce_oracle():
    assert simulate_with_oracle(seed=7, trials=40) == 0


def test_concurrent_joins_lose_and_duplicate_nobody():
    # Conservation under concurrency: every joiner ends up in exactly one
    # instance or still queued; nobody vanishes, nobody is cloned.
    import threading

    mgr = InstanceManager()
    c = constraint(3)
    formed = []
    formed_lock = threading.Lock()
    sessions = [f"s{i}" for i in range(20)]

    def join(sid):
        inst, _ = mgr.enqueue_player("g", sid, {}, c)
        if inst is not None:
            with formed_lock:
                formed.append(inst)

    threads = [threading.Thread(target=join, args=(s,)) for s in sessions]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    placed = [sid for inst in formed for sid in inst.session_ids()]
    still_queued = mgr.room("g").positions()
    assert len(formed) == 6  # 20 // 3
    assert len(placed) == len(set(placed)) == 18
    assert sorted(placed + still_queued) == sorted(sessions)


# -- readiness -------------------------------------------------------------------


def form_instance(mgr, k=3, game="g"):
    inst = None
    for i in range(k):
        inst, _ = enqueue(mgr, game, f"s{i}", k=k)
    return inst


def test_ready_sequence_and_running_transition():
    mgr = make_manager()
    inst = form_instance(mgr, k=3)
    c1, c2, c3 = inst.client_ids()

    effects = mgr.mark_client_ready(inst.instance_id, c1)
    assert inst.state is InstanceState.LOADING
    notify = [e for e in effects if isinstance(e, GmNotify)]
    assert len(notify) == 1
    assert notify[0].message.topic == "ready"
    assert notify[0].message.client_id == c1

    mgr.mark_client_ready(inst.instance_id, c2)
    assert inst.state is InstanceState.LOADING
    mgr.mark_client_ready(inst.instance_id, c3)
    assert inst.state is InstanceState.RUNNING


def test_duplicate_ready_is_idempotent():
    mgr = make_manager()
    inst = form_instance(mgr, k=2)
    c1 = inst.client_ids()[0]
    first = mgr.mark_client_ready(inst.instance_id, c1)
    second = mgr.mark_client_ready(inst.instance_id, c1)
    assert any(isinstance(e, GmNotify) for e in first)
    assert second == []


def test_ready_for_aborted_instance_rejected():
    mgr = make_manager()
    inst = form_instance(mgr, k=2)
    c1, c2 = inst.client_ids()
    mgr.handle_disconnect(inst.instance_id, c1)
    with pytest.raises(MatchmakingError):
        mgr.mark_client_ready(inst.instance_id, c2)


def test_ready_unknown_client_rejected():
    mgr = make_manager()
    inst = form_instance(mgr, k=2)
    with pytest.raises(MatchmakingError):
        mgr.mark_client_ready(inst.instance_id, "ghost")


# -- disconnects --------------------------------------------------------------------


def test_disconnect_notifies_survivors_and_gm():
    mgr = make_manager()
    inst = form_instance(mgr, k=2)
    c1, c2 = inst.client_ids()
    effects = mgr.handle_disconnect(inst.instance_id, c1)

    assert inst.state is InstanceState.ABORTED
    deliveries = [e for e in effects if isinstance(e, Deliver)]
    assert len(deliveries) == 1  # only the survivor
    assert deliveries[0].session_id == inst.member(c2).session_id
    msg = deliveries[0].message
    assert msg.topic == "drop" and msg.broadcast and msg.params["clientId"] == c1

    gm = [e for e in effects if isinstance(e, GmNotify)]
    assert len(gm) == 1 and gm[0].message.topic == "drop" and gm[0].message.client_id == c1
    assert any(isinstance(e, Release) for e in effects)


def test_drop_after_over_is_noop():
    mgr = make_manager()
    inst = form_instance(mgr, k=2)
    c1, _ = inst.client_ids()
    inst.state = InstanceState.RUNNING
    mgr.close_instance(inst.instance_id)
    assert mgr.handle_disconnect(inst.instance_id, c1) == []


def test_concurrent_drops_abort_exactly_once():
    # Serialized replay of both orderings must agree on the final state.
    finals = []
    for order in ((0, 1), (1, 0)):
        mgr = make_manager()
        inst = form_instance(mgr, k=2)
        cids = inst.client_ids()
        first = mgr.handle_disconnect(inst.instance_id, cids[order[0]])
        second = mgr.handle_disconnect(inst.instance_id, cids[order[1]])
        assert second == []
        assert sum(1 for e in first if isinstance(e, Note) and e.kind == ev.ABORTED) == 1
        finals.append(inst.state)
    assert finals == [InstanceState.ABORTED, InstanceState.ABORTED]


# -- close / over ----------------------------------------------------------------------


def run_instance(mgr, k=3):
    inst = form_instance(mgr, k=k)
    for c in inst.client_ids():
        mgr.mark_client_ready(inst.instance_id, c)
    assert inst.state is InstanceState.RUNNING
    return inst


def test_close_with_scores_emits_credit():
    mgr = make_manager()
    inst = run_instance(mgr, k=3)
    c1, c2, c3 = inst.client_ids()
    effects = mgr.close_instance(inst.instance_id, {c1: 0, c2: 0, c3: 10})
    assert inst.state is InstanceState.OVER
    credits = [e for e in effects if isinstance(e, Credit)]
    assert len(credits) == 1
    assert credits[0].scores == {c1: 0, c2: 0, c3: 10}
    assert sum(1 for e in effects if isinstance(e, Release)) == 3
    kinds = [e.kind for e in effects if isinstance(e, Note)]
    assert kinds == [ev.OVER, ev.CLOSED]


def test_close_without_scores_has_no_credit():
    mgr = make_manager()
    inst = run_instance(mgr, k=2)
    effects = mgr.close_instance(inst.instance_id)
    assert not any(isinstance(e, Credit) for e in effects)
    assert inst.state is InstanceState.OVER


def test_second_over_is_ignored():
    mgr = make_manager()
    inst = run_instance(mgr, k=2)
    mgr.close_instance(inst.instance_id)
    effects = mgr.close_instance(inst.instance_id, {"x": 1})
    assert not any(isinstance(e, Credit) for e in effects)
    assert [e.kind for e in effects if isinstance(e, Note)] == [ev.AUDIT]


def test_over_for_unknown_instance_logged_and_ignored():
    mgr = make_manager()
    effects = mgr.close_instance("ghost", {"a": 1})
    assert [e.kind for e in effects if isinstance(e, Note)] == [ev.AUDIT]


def test_over_during_loading_is_ignored():
    mgr = make_manager()
    inst = form_instance(mgr, k=2)
    effects = mgr.close_instance(inst.instance_id)
    assert inst.state is InstanceState.LOADING
    assert [e.kind for e in effects if isinstance(e, Note)] == [ev.AUDIT]


# -- fault aborts and timeouts -------------------------------------------------------------


def test_abort_for_fault_notifies_all_members():
    mgr = make_manager()
    inst = run_instance(mgr, k=3)
    effects = mgr.abort_for_fault(inst.instance_id, "gm_unreachable")
    assert inst.state is InstanceState.ABORTED
    deliveries = [e for e in effects if isinstance(e, Deliver)]
    assert len(deliveries) == 3
    assert all(d.message.topic == "error" for d in deliveries)
    assert mgr.abort_for_fault(inst.instance_id, "again") == []


def test_waiting_room_timeout_dequeues_with_error():
    mgr = make_manager()
    enqueue(mgr, "g", "s1", k=2)
    effects = mgr.scan_timeouts(now=1000.0 + 121, waiting_timeout_s=120, loading_timeout_s=30)
    assert mgr.queue_depth("g") == 0
    deliveries = [e for e in effects if isinstance(e, Deliver)]
    assert len(deliveries) == 1
    assert deliveries[0].message.topic == "error"
    assert deliveries[0].message.params["reason"] == "waiting_timeout"
    assert any(isinstance(e, Dequeued) for e in effects)


def test_loading_timeout_aborts_as_missing_drops():
    mgr = make_manager()
    inst = form_instance(mgr, k=3)
    mgr.mark_client_ready(inst.instance_id, inst.client_ids()[0])
    effects = mgr.scan_timeouts(now=1000.0 + 31, waiting_timeout_s=120, loading_timeout_s=30)
    assert inst.state is InstanceState.ABORTED
    drops = [e for e in effects if isinstance(e, Note) and e.kind == ev.DROP]
    assert len(drops) == 1  # the first missing member kills it; second is no-op
    assert drops[0].fields["reason"] == "loading_timeout"


def test_timeouts_leave_fresh_state_alone():
    mgr = make_manager()
    enqueue(mgr, "g", "s1", k=2)
    effects = mgr.scan_timeouts(now=1000.0 + 5, waiting_timeout_s=120, loading_timeout_s=30)
    assert effects == []
    assert mgr.queue_depth("g") == 1


# -- predicate helpers -------------------------------------------------------------------


def test_same_field_predicate():
    pred = same_field("language")
    assert pred([{"language": "it"}, {"language": "it"}])
    assert not pred([{"language": "it"}, {"language": "en"}])
    assert not pred([{"language": None}, {"language": None}])


def test_build_predicate_from_spec():
    assert build_predicate({"rule": "none"}) is None
    assert build_predicate({}) is None
    pred = build_predicate({"rule": "score_band", "band": 10})
    assert pred([{"score": 5}, {"score": 11}])
    assert not pred([{"score": 5}, {"score": 16}])
    with pytest.raises(MatchmakingError):
        build_predicate({"rule": "psychic"})
