import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from s2arq.channel import AdversaryPolicy
from s2arq.codec import CodecParams
from s2arq.engine import (
    DEBRIS,
    DeliverEvent,
    ExecutionTrace,
    FetchEvent,
    StopRule,
    check_legal_suffix,
    count_alpha_beta,
    hb_chain_weight,
    index_progression_violations,
    is_safe,
    provenance_violations,
    packets_per_message,
    run,
    run_scripted,
)
from s2arq.faults import Configuration, arbitrary_configuration, safe_configuration
from s2arq.protocol import (
    EFFICIENT,
    AckPacket,
    Packet,
    ReceiverState,
    ScriptedSource,
    SenderState,
    required_acks,
)

P = CodecParams(2, 2, 1)
Q = CodecParams(1, 1, 1)


# safety detector -------------------------------------------------------------

def test_safe_configuration_is_safe():
    rep = is_safe(safe_configuration(1, P), P)
    assert rep.is_safe and rep.violated_clause is None
    assert rep.ais_vector == (1, (0, 0, 0, 0), (0, 0, 0, 0), 1, (0, 0, 0, 0), (0, 2, 0, 0))


def _with(c: Configuration, **kw) -> Configuration:
    d = dict(sender=c.sender, receiver=c.receiver, chan_sr=c.chan_sr, chan_rs=c.chan_rs)
    d.update(kw)
    return Configuration(**d)


@pytest.mark.parametrize("change,clause", [
    ({"sender": SenderState(2, required_acks(2, 1))}, "index-agreement"),
    ({"sender": SenderState(1, frozenset({AckPacket(1, 1)}))}, "ack-set"),
    ({"sender": SenderState(7, frozenset())}, "sender-index"),
    ({"receiver": ReceiverState(1, frozenset({Packet(1, 1, (0, 0))}))}, "packet-set-index"),
    ({"chan_sr": (Packet(0, 1, (0, 0)), Packet(2, 1, (0, 0)))}, "stale-bound"),
    ({"receiver": ReceiverState(1, frozenset({Packet(0, 1, (0, 0))})), "chan_sr": (Packet(2, 1, (0, 0)),)},
     "stale-bound"),
])
def test_unsafe_clauses(change, clause):
    rep = is_safe(_with(safe_configuration(1, P), **change), P)
    assert not rep.is_safe and rep.violated_clause == clause


def test_channel_packet_with_agreed_index_is_harmless():
    # in flight with the receiver's last delivered index: rejected on arrival
    c = _with(safe_configuration(1, P), chan_sr=(Packet(1, 3, (1, 0)),))
    assert is_safe(c, P).is_safe
    t = run(c, 0, 20_000, P, stop=StopRule(deliveries=20))
    assert check_legal_suffix(t).k == 0
    assert all(g.is_safe for g in t.guard_checks)


# runs ---------------------------------------------------------------------------

def test_scripted_three_batches_delivered_once_in_order():
    batches = [[[0, 1], [1, 1]], [[1, 0], [0, 0]], [[1, 1], [0, 1]]]
    t = run(safe_configuration(0, P), 4, 100_000, P, AdversaryPolicy(0.3, 0.3),
            ScriptedSource(batches))
    assert t.complete and t.end_reason == "input-exhausted"
    assert [list(map(list, e.content)) for e in t.deliver_events] == batches
    assert [e.content for e in t.fetch_events] == [e.content for e in t.deliver_events]
    assert check_legal_suffix(t) == (0, 0, "pass")


def test_runs_are_deterministic_per_seed():
    c = arbitrary_configuration(3, P)
    a = run(c, 11, 3000, P, AdversaryPolicy(0.2, 0.2))
    b = run(c, 11, 3000, P, AdversaryPolicy(0.2, 0.2))
    assert a.kinds == b.kinds and a.recv_origin == b.recv_origin
    assert a.deliver_events == b.deliver_events


def test_budget_exhaustion_marks_incomplete():
    t = run(safe_configuration(0, P), 0, 50, P, stop=StopRule(deliveries=10**6))
    assert not t.complete and t.end_reason == "budget" and len(t) == 50
    with pytest.raises(ValueError):
        run(safe_configuration(0, P), 0, 0, P)


def test_until_safe_stops_at_first_safe_configuration():
    t = run(arbitrary_configuration(5, P), 5, 10**6, P, stop=StopRule(until_safe=True))
    assert t.complete and t.first_safe == len(t)


# legal suffix ---------------------------------------------------------------------

def debris_delivery_start() -> Configuration:
    # receiver holds a full batch for index 1 that decodes to (1,); the sender is
    # at index 1 transmitting an encoding of (0,) and has no acks yet
    receiver = ReceiverState(0, frozenset(Packet(1, i, (1,)) for i in (1, 2, 3)))
    sender = SenderState(1, frozenset(), ((0,), (0,), (0,)))
    return Configuration(sender, receiver)


def test_debris_delivery_gives_k_one():
    t = run(debris_delivery_start(), 2, 100_000, Q, stop=StopRule(deliveries=6))
    first = t.deliver_events[0]
    assert first.content == ((1,),) and first.batch_id == DEBRIS
    assert check_legal_suffix(t) == (1, 0, "pass")


def _trace(fetches, deliveries):
    t = ExecutionTrace(Q)
    t.fetch_events = [FetchEvent(s, i, i % 3, c, ()) for i, (s, c) in enumerate(fetches)]
    t.deliver_events = [DeliverEvent(s, -1, i % 3, c, ()) for i, (s, c) in enumerate(deliveries)]
    return t


def test_legal_suffix_detects_skip_duplicate_and_reorder():
    a, b, c = ((0,),), ((1,),), ((0,),)  # a and c have equal content
    ok = _trace([(1, a), (5, b), (9, c)], [(3, a), (7, b), (11, c)])
    assert check_legal_suffix(ok).verdict == "pass"
    skipped = _trace([(1, a), (5, b), (9, c), (13, b)], [(3, a), (11, c), (15, b)])
    assert check_legal_suffix(skipped).k == 1
    dup = _trace([(1, b), (5, a)], [(3, b), (4, b), (7, a)])
    assert check_legal_suffix(dup).k == 1
    lost_tail = _trace([(1, a), (5, b), (9, a)], [(3, a)])
    assert check_legal_suffix(lost_tail).verdict == "fail"
    assert check_legal_suffix(_trace([(1, a)], [])).verdict == "n/a"


def test_pending_last_fetch_is_allowed():
    t = _trace([(1, ((0,),)), (5, ((1,),))], [(3, ((0,),))])
    assert check_legal_suffix(t) == (0, 0, "pass")


# happened-before ----------------------------------------------------------------

def reference_chain_weight(t, start, end, effective_only):
    """Longest path in the explicit causality DAG."""
    g = nx.DiGraph()
    last = {"s": ("init", "s"), "r": ("init", "r")}
    g.add_nodes_from(last.values())
    for x in range(start, end):
        rec = t.step(x)
        g.add_edge(last[rec["actor"]], x, weight=0)
        last[rec["actor"]] = x
        o = rec["recv"]
        if o is not None and o >= start and (rec["effective"] or not effective_only):
            g.add_edge(o, x, weight=1)
    return nx.dag_longest_path_length(g, weight="weight", default_weight=0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(0, 0.5), st.floats(0, 0.5), st.booleans())
def test_chain_weight_matches_reference(seed, om, dup, eff):
    t = run(arbitrary_configuration(seed, P), seed, 400, P, AdversaryPolicy(om, dup))
    start = seed % 50
    assert hb_chain_weight(t, start, len(t), eff) == reference_chain_weight(t, start, len(t), eff)


def test_chain_weight_hand_example():
    # step 0 sender sends, step 1 receiver takes it, step 2 receiver sends,
    # step 3 sender takes that: a two-hop chain
    t = ExecutionTrace(Q)
    for kind, origin, eff, sent in ((0, -2, 0, 3), (3, 0, 1, 0), (2, -2, 0, 2), (1, 2, 1, 0)):
        t.kinds.append(kind)
        t.recv_origin.append(origin)
        t.effective.append(eff)
        t.n_sent.append(sent)
    assert hb_chain_weight(t, 0, 4) == 2
    assert hb_chain_weight(t, 1, 4) == 1   # the first message was sent before the window
    t.effective[1] = 0
    assert hb_chain_weight(t, 0, 4) == 1
    assert hb_chain_weight(t, 0, 4, effective_only=False) == 2


# counters and provenance checks ---------------------------------------------------------

def test_count_alpha_beta():
    t = _trace([(1, ((0,),)), (6, ((1,),))], [(3, ((0,),)), (8, ((1,),))])
    t.first_safe = 5
    assert count_alpha_beta(t) == (1, 1, True)
    t.first_safe = None
    assert count_alpha_beta(t) == (2, 2, False)


def test_converged_runs_satisfy_progression_and_provenance():
    for seed in range(30):
        t = run(arbitrary_configuration(seed, P), seed, 10**6, P, AdversaryPolicy(0.2, 0.2),
                stop=StopRule(until_safe=True, fetches_after_safe=8))
        assert t.first_safe is not None
        assert index_progression_violations(t, t.first_safe) == []
        assert provenance_violations(t, t.first_safe) == []


def test_progression_checker_flags_violations():
    t = _trace([(1, ((0,),)), (5, ((1,),))], [(3, ((0,),)), (4, ((0,),))])
    assert index_progression_violations(t, 0)


def test_packets_per_message():
    t = run(safe_configuration(0, P), 0, 10**6, P, stop=StopRule(deliveries=5))
    assert packets_per_message(t) == t.packets_sent / 10


# trace export ----------------------------------------------------------------------

def test_trace_jsonl_roundtrip(tmp_path):
    t = run(arbitrary_configuration(2, P), 2, 5000, P, AdversaryPolicy(0.1, 0.1), record_ais=True,
            stop=StopRule(until_safe=True, fetches_after_safe=3))
    path = tmp_path / "t.jsonl"
    t.dump(path)
    u = ExecutionTrace.load(path)
    assert u.kinds == t.kinds and u.recv_origin == t.recv_origin and u.n_sent == t.n_sent
    assert u.fetch_events == t.fetch_events and u.deliver_events == t.deliver_events
    assert u.guard_checks == t.guard_checks and u.first_safe == t.first_safe
    assert len(u.ais) == len(t)  # configuration before each step
    assert hb_chain_weight(u, 0, len(u)) == hb_chain_weight(t, 0, len(t))


def test_scripted_actions():
    c = safe_configuration(0, Q)
    acts = [("sender_tick", [True, False, False]), ("receiver_recv", 0, False), ("sender_tick", [False] * 3)]
    t, sim = run_scripted(c, acts, Q, ScriptedSource([[[1]]]))
    assert len(t.fetch_events) == 1 and t.fetch_events[0].content == ((1,),)
    assert sim.receiver.packet_set == {Packet(1, 1, (1,))}
    assert not sim.chan_sr.in_flight
    with pytest.raises(ValueError):
        run_scripted(c, [("teleport",)], Q)
