"""Exhaustive bounded exploration of adversary schedules.

States are small immutable tuples so that breadth-first search can
deduplicate them.  Each transition is one adversary choice:

* ``sender_tick`` / ``receiver_tick`` with the channel afterwards holding
  either its previous content or one of the emitted items (capacity-1
  channels: every other emitted item was omitted or displaced)
* ``sender_recv`` / ``receiver_recv`` of the in-flight item, with or without
  duplication
* ``drop`` of an in-flight item
* for the first-attempt variant, ``inject`` of one debris packet per round

Because the search is breadth-first over deduplicated states, every state is
expanded at its minimal depth, which is enough for depth-bounded properties.
Each reported violation carries the action path, which
:func:`to_scripted_actions` turns into a schedule for ``engine.run_scripted``.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .codec import CodecParams
from .engine import safety_clause
from .faults import PACKET_SET_MODES, Configuration, arbitrary_configuration
from .protocol import (
    EFFICIENT,
    FIRST_ATTEMPT,
    INDICES,
    AckPacket,
    EndOfInput,
    Packet,
    required_acks,
    sanity_violation,
)

# in-flight items are (value, weight) where weight is the happened-before weight
# of the sending step, or -1 for debris present at the start
NO_EDGE = -1


@dataclass
class ExplorationResult:
    starts: int = 0
    states: int = 0
    max_fetches: int = 0
    max_deliveries: int = 0
    max_chain: int = 0
    violations: list = field(default_factory=list)

    def merge(self, other: "ExplorationResult"):
        self.starts += other.starts
        self.states += other.states
        self.max_fetches = max(self.max_fetches, other.max_fetches)
        self.max_deliveries = max(self.max_deliveries, other.max_deliveries)
        self.max_chain = max(self.max_chain, other.max_chain)
        self.violations.extend(other.violations)


def _chan_after_send(chan: tuple, emitted: list, weight: int) -> list[tuple]:
    """Channel contents an adversary can leave after a burst of sends (capacity 1)."""
    outs = [chan]
    for item in emitted:
        c = ((item, weight),)
        if c not in outs:
            outs.append(c)
    return outs


# --------------------------------------------------------------------------
# efficient protocol, counts before first safety


def _efficient_successors(state, params: CodecParams):
    """Yield (action, next_state, fetched, delivered) for the efficient protocol.

    ``state`` is (sender, receiver, chan_sr, chan_rs, ws, wr).  Fetch contents
    are branched over every possible batch.
    """
    sender, receiver, chan_sr, chan_rs, ws, wr = state
    c = params.capacity
    # sender tick
    if required_acks(sender.alt_index, c) <= sender.ack_set:
        batches = itertools.product(
            itertools.product((0, 1), repeat=params.ml), repeat=params.pl)
        for batch in batches:
            s2, pkts = EFFICIENT.sender_tick(sender, params, lambda count, b=batch: b)
            for ch in _chan_after_send(chan_sr, pkts, ws):
                yield ("sender_tick", batch, ch), (s2, receiver, ch, chan_rs, ws, wr), 1, 0
    else:
        s2, pkts = EFFICIENT.sender_tick(sender, params, None)
        for ch in _chan_after_send(chan_sr, pkts, ws):
            yield ("sender_tick", None, ch), (s2, receiver, ch, chan_rs, ws, wr), 0, 0
    # receiver tick
    r2, acks, delivered = EFFICIENT.receiver_tick(receiver, params)
    for ch in _chan_after_send(chan_rs, acks, wr):
        yield ("receiver_tick", ch), (sender, r2, chan_sr, ch, ws, wr), 0, int(delivered is not None)
    # receptions, with and without duplication, and drops
    if chan_rs:
        (ack, w), = chan_rs
        s2 = EFFICIENT.sender_on_ack(sender, ack, params)
        ws2 = max(ws, w + 1) if (s2 is not sender and w != NO_EDGE) else ws
        for dup in (False, True):
            yield ("sender_recv", dup), (s2, receiver, chan_sr, chan_rs if dup else (), ws2, wr), 0, 0
        yield ("drop", "rs"), (sender, receiver, chan_sr, (), ws, wr), 0, 0
    if chan_sr:
        (pkt, w), = chan_sr
        r2, _ = EFFICIENT.receiver_on_packet(receiver, pkt, params)
        wr2 = max(wr, w + 1) if (r2 is not receiver and w != NO_EDGE) else wr
        for dup in (False, True):
            yield ("receiver_recv", dup), (sender, r2, chan_sr if dup else (), chan_rs, ws, wr2), 0, 0
        yield ("drop", "sr"), (sender, receiver, (), chan_rs, ws, wr), 0, 0


def _is_safe_state(state, params) -> bool:
    sender, receiver, chan_sr = state[0], state[1], state[2]
    return safety_clause(sender, receiver, (p for p, _ in chan_sr), params) is None


def explore_convergence(
    config: Configuration,
    params: CodecParams,
    depth: int,
    max_fetches: int = 4,
    max_deliveries: int = 4,
    max_chain: int = 8,
) -> ExplorationResult:
    """Every schedule of at most ``depth`` adversary actions from ``config``.

    Along each path, fetches and deliveries are counted and the effective
    happened-before weight tracked until the first safe configuration; a path
    exceeding any bound before reaching safety is a violation.
    """
    if params.capacity != 1:
        raise ValueError("the explorer models capacity-1 channels")
    if config.variant is not EFFICIENT:
        raise ValueError("convergence exploration is defined for the efficient protocol")
    start = (config.sender, config.receiver,
             tuple((p, NO_EDGE) for p in config.chan_sr),
             tuple((a, NO_EDGE) for a in config.chan_rs), 0, 0)
    res = ExplorationResult(starts=1)
    key0 = (start, 0, 0)
    seen = {key0}
    frontier = deque([(key0, 0, ())])
    while frontier:
        (state, nf, nd), d, path = frontier.popleft()
        res.states += 1
        res.max_chain = max(res.max_chain, state[4], state[5])
        if _is_safe_state(state, params):
            continue
        if d >= depth:
            continue
        for action, nxt, df, dd in _efficient_successors(state, params):
            nf2, nd2 = nf + df, nd + dd
            key = (nxt, nf2, nd2)
            if key in seen:
                continue
            seen.add(key)
            p2 = path + (action,)
            res.max_fetches = max(res.max_fetches, nf2)
            res.max_deliveries = max(res.max_deliveries, nd2)
            if nf2 > max_fetches or nd2 > max_deliveries or max(nxt[4], nxt[5]) > max_chain:
                res.violations.append({"start": config.to_dict(), "path": p2,
                                       "fetches": nf2, "deliveries": nd2,
                                       "chain": max(nxt[4], nxt[5])})
                continue
            frontier.append((key, d + 1, p2))
    return res


def coverage_starts(params: CodecParams, seeds_per_mode: int = 200) -> list[Configuration]:
    """Arbitrary starts chosen so that every generator mode and every structural
    feature combination the generator produces is represented once."""
    chosen: dict[tuple, Configuration] = {}
    for mode in PACKET_SET_MODES:
        for seed in range(seeds_per_mode):
            cfg = arbitrary_configuration(seed, params, mode=mode)
            s, r = cfg.sender, cfg.receiver
            sig = (
                mode,
                (s.alt_index - r.last_delivered_index) % 3,
                required_acks(s.alt_index, params.capacity) <= s.ack_set,
                bool(s.ack_set - required_acks(s.alt_index, params.capacity)),
                sanity_violation(r, params),
                tuple(sorted({p.ai == s.alt_index for p in r.packet_set})),
                len(cfg.chan_sr), cfg.chan_sr and cfg.chan_sr[0].ai == s.alt_index,
                len(cfg.chan_rs), cfg.chan_rs and cfg.chan_rs[0].ldai == s.alt_index,
            )
            chosen.setdefault(sig, cfg)
    return list(chosen.values())


def explore_many(starts: Iterable[Configuration], params: CodecParams, depth: int, **bounds) -> ExplorationResult:
    total = ExplorationResult()
    for cfg in starts:
        total.merge(explore_convergence(cfg, params, depth, **bounds))
    return total


# --------------------------------------------------------------------------
# first-attempt protocol, majority soundness under bounded debris injection


def debris_universe(params: CodecParams) -> list[Packet]:
    copies = FIRST_ATTEMPT.labels(params)
    return [Packet(ai, lbl, bits)
            for ai in INDICES for lbl in range(1, copies + 1)
            for bits in itertools.product((0, 1), repeat=params.ml)]


def _fa_successors(state, params: CodecParams, messages: tuple, debris: list):
    """State: (sender, receiver, chan_sr, chan_rs, fetched, injected).

    ``fetched`` counts messages taken from ``messages``; ``injected`` says
    whether the current round already has its one debris packet, either
    injected during the round or carried over in flight from the previous one.
    Yields (action, next_state, delivered_value).
    """
    sender, receiver, chan_sr, chan_rs, fetched, injected = state
    nxt_msg = messages[fetched] if fetched < len(messages) else None

    took = []

    def fetch(count):
        if nxt_msg is None:
            raise EndOfInput
        took.append(nxt_msg)
        return (nxt_msg,)

    try:
        s2, pkts = FIRST_ATTEMPT.sender_tick(sender, params, fetch)
        got = took[0] if took else None
        for ch in _chan_after_send(chan_sr, pkts, 0):
            yield ("sender_tick", got, ch), (s2, receiver, ch, chan_rs, fetched + len(took), injected), None
    except EndOfInput:
        pass
    r2, _, delivered = FIRST_ATTEMPT.receiver_tick(receiver, params)
    # a delivery starts a new round; debris still in flight counts against it
    inj2 = injected if delivered is None else any(w == NO_EDGE for _, w in chan_sr)
    yield ("receiver_tick", ()), (sender, r2, chan_sr, chan_rs, fetched, inj2), delivered
    if chan_rs:
        (ack, w), = chan_rs
        s2 = FIRST_ATTEMPT.sender_on_ack(sender, ack, params)
        for dup in (False, True):
            yield ("sender_recv", dup), (s2, receiver, chan_sr, chan_rs if dup else (), fetched, injected), None
        yield ("drop", "rs"), (sender, receiver, chan_sr, (), fetched, injected), None
    if chan_sr:
        (pkt, w), = chan_sr
        r2, acks = FIRST_ATTEMPT.receiver_on_packet(receiver, pkt, params)
        for dup in (False, True):
            for ch in _chan_after_send(chan_rs, acks, 0):
                yield ("receiver_recv", dup, ch), (sender, r2, chan_sr if dup else (), ch, fetched, injected), None
        yield ("drop", "sr"), (sender, receiver, (), chan_rs, fetched, injected), None
    if not injected:
        # debris displaces the channel content so a round never sees more than one
        for p in debris:
            yield ("inject", p), (sender, receiver, ((p, NO_EDGE),), chan_rs, fetched, True), None


def explore_first_attempt(
    params: CodecParams,
    depth: int,
    messages: tuple,
    y: int = 0,
) -> ExplorationResult:
    """Every schedule of at most ``depth`` actions from the clean configuration at
    index ``y``; a violation is a delivery whose value differs from the message
    fetched for that round."""
    if params.capacity != 1:
        raise ValueError("the explorer models capacity-1 channels")
    debris = debris_universe(params)
    sender = FIRST_ATTEMPT.initial_sender(y, required_acks(y, params.capacity), None)
    receiver = FIRST_ATTEMPT.initial_receiver(y, frozenset())
    start = (sender, receiver, (), (), 0, False)
    res = ExplorationResult(starts=1)
    seen = {(start, 0)}
    frontier = deque([(start, 0, 0, ())])
    while frontier:
        state, nd, d, path = frontier.popleft()
        res.states += 1
        if d >= depth:
            continue
        for action, nxt, delivered in _fa_successors(state, params, messages, debris):
            nd2 = nd
            if delivered is not None:
                nd2 += 1
                expected = messages[nd] if nd < len(messages) else None
                if nd >= nxt[4] or delivered != (expected,):
                    res.violations.append({"path": path + (action,), "delivered": delivered,
                                           "expected": expected})
                    continue
            res.max_deliveries = max(res.max_deliveries, nd2)
            res.max_fetches = max(res.max_fetches, nxt[4])
            key = (nxt, nd2)
            if key in seen:
                continue
            seen.add(key)
            frontier.append((nxt, nd2, d + 1, path + (action,)))
    return res


# --------------------------------------------------------------------------
# replay


def _admit_mask(emitted: list, kept: tuple) -> list[bool]:
    if not kept:
        return [False] * len(emitted)
    want = kept[0][0]
    mask = [False] * len(emitted)
    mask[emitted.index(want)] = True
    return mask


def to_scripted_actions(
    start: Configuration, path: Iterable[tuple], params: CodecParams
) -> tuple[list, list]:
    """Translate an explorer path into ``engine.run_scripted`` actions plus the
    batches the message source must serve.

    Replay with a drop-random-existing policy and a large fairness threshold:
    admitting only the item the explorer kept then reproduces its channel.
    """
    variant = start.variant
    actions, batches = [], []
    sender, receiver = start.sender, start.receiver
    chan_sr = tuple((p, NO_EDGE) for p in start.chan_sr)
    chan_rs = tuple((a, NO_EDGE) for a in start.chan_rs)
    for step in path:
        name = step[0]
        if name == "sender_tick":
            _, batch, kept = step
            if batch is not None:
                batches.append(batch if variant is EFFICIENT else (batch,))
            s2, pkts = variant.sender_tick(sender, params, lambda count: batches[-1])
            keep_old = kept == chan_sr and not (kept and kept[0][0] in pkts)
            actions.append((name, [False] * len(pkts) if keep_old else _admit_mask(pkts, kept)))
            sender, chan_sr = s2, kept
        elif name == "receiver_tick":
            r2, acks, _ = variant.receiver_tick(receiver, params)
            kept = step[1] if variant is EFFICIENT else chan_rs
            keep_old = kept == chan_rs and not (kept and kept[0][0] in acks)
            actions.append((name, [False] * len(acks) if keep_old else _admit_mask(acks, kept)))
            receiver, chan_rs = r2, kept
        elif name == "sender_recv":
            sender = variant.sender_on_ack(sender, chan_rs[0][0], params)
            actions.append((name, 0, step[1]))
            chan_rs = chan_rs if step[1] else ()
        elif name == "receiver_recv":
            r2, acks = variant.receiver_on_packet(receiver, chan_sr[0][0], params)
            if len(step) == 3:
                kept = step[2]
                keep_old = kept == chan_rs and not (kept and kept[0][0] in acks)
                actions.append((name, 0, step[1], [False] * len(acks) if keep_old else _admit_mask(acks, kept)))
                chan_rs = kept
            else:
                actions.append((name, 0, step[1]))
            receiver = r2
            chan_sr = chan_sr if step[1] else ()
        elif name == "drop":
            actions.append(("drop", step[1], 0))
            if step[1] == "sr":
                chan_sr = ()
            else:
                chan_rs = ()
        elif name == "inject":
            actions.append(("inject", "sr", step[1], True))
            chan_sr = ((step[1], NO_EDGE),)
        else:
            raise ValueError(f"unknown explorer action {name!r}")
    return actions, batches
