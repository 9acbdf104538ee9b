"""Interleaving-model executor and execution analysis.

One scheduler slot runs exactly one atomic step of one process:

* sender tick      - loop iteration of the sender, sends every packet
* sender recv      - the sender receives one ack from the channel
* receiver tick    - loop iteration of the receiver, may deliver, sends acks
* receiver recv    - the receiver receives one packet from the channel

Environment faults (omission, duplication, reordering, drop on full) happen
inside the channel operations these steps perform.  Configuration ``x`` is
the one right before step ``x``; configuration ``len(steps)`` is the final one.

Every in-flight item is an :class:`Envelope` remembering the step that sent
it (``-1`` for debris present at the start).  That provenance is what the
happened-before measure and the provenance checks below are computed from.
"""

from __future__ import annotations

import json
import random
from operator import itemgetter
from array import array
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Optional, Sequence

from .channel import DROP_NEW, AdversaryPolicy, Channel
from .codec import CODES, CodecParams, code_name
from .faults import Configuration
from .protocol import (
    EFFICIENT,
    INDICES,
    VARIANTS,
    AckPacket,
    EndOfInput,
    Packet,
    SeededSource,
    Variant,
    required_acks,
)

SENDER_TICK, SENDER_RECV, RECEIVER_TICK, RECEIVER_RECV = range(4)
STEP_NAMES = ("sender_tick", "sender_recv", "receiver_tick", "receiver_recv")
ACTOR = ("s", "s", "r", "r")
DEBRIS = -1
NO_RECV = -2

DEFAULT_WEIGHTS = {"sender_tick": 1.0, "sender_recv": 2.0, "receiver_tick": 1.0, "receiver_recv": 2.0}


class Envelope(NamedTuple):
    packet: object
    origin: int


_envelope_key = itemgetter(0)


class FetchEvent(NamedTuple):
    step: int
    batch_id: int
    index: int
    content: tuple
    ack_origins: tuple


class DeliverEvent(NamedTuple):
    step: int
    batch_id: int
    index: int
    content: tuple
    packet_origins: tuple


class GuardCheck(NamedTuple):
    step: int
    index: int
    is_safe: bool
    clause: Optional[str]


# --------------------------------------------------------------------------
# safe-configuration detector


class SafeConfigReport(NamedTuple):
    is_safe: bool
    ais_vector: tuple
    violated_clause: Optional[str]


def _hist(indices: Iterable) -> tuple:
    c = Counter(i if i in INDICES else "x" for i in indices)
    return (c[0], c[1], c[2], c["x"])


def ais_vector(sender, receiver, chan_sr: Iterable[Packet], chan_rs: Iterable[AckPacket]) -> tuple:
    """Alternating indices in the order: sender, sender-to-receiver channel, receiver
    packet set, receiver, receiver-to-sender channel, sender ack set.  Histograms
    count indices 0, 1, 2 and out-of-range values."""
    return (
        sender.alt_index,
        _hist(p.ai for p in chan_sr),
        _hist(p.ai for p in receiver.packet_set),
        receiver.last_delivered_index,
        _hist(a.ldai for a in chan_rs),
        _hist(a.ldai for a in sender.ack_set),
    )


def safety_clause(sender, receiver, chan_sr: Iterable[Packet], params: CodecParams) -> Optional[str]:
    """First violated clause of the safe pattern, or None when the configuration is safe.

    Safe means: sender and receiver share index y, the sender holds exactly the
    acks for y, the receiver stores nothing tagged y, and the packets tagged
    otherwise across the receiver's store and the sender-to-receiver channel
    number at most ``capacity`` (so they can corrupt at most ``capacity``
    columns of the next batch).
    """
    y = sender.alt_index
    if y not in INDICES:
        return "sender-index"
    if receiver.last_delivered_index != y:
        return "index-agreement"
    if sender.ack_set != required_acks(y, params.capacity):
        return "ack-set"
    stale = set()
    for p in receiver.packet_set:
        if p.ai == y:
            return "packet-set-index"
        stale.add(p)
    for p in chan_sr:
        if p.ai != y:
            stale.add(p)
    if len(stale) > params.capacity:
        return "stale-bound"
    return None


def is_safe(c: Configuration, params: CodecParams) -> SafeConfigReport:
    clause = safety_clause(c.sender, c.receiver, c.chan_sr, params)
    return SafeConfigReport(clause is None, ais_vector(c.sender, c.receiver, c.chan_sr, c.chan_rs), clause)


# --------------------------------------------------------------------------
# execution trace


@dataclass
class ExecutionTrace:
    params: CodecParams
    variant: str = "efficient"
    seed: Optional[int] = None
    kinds: array = field(default_factory=lambda: array("b"))
    recv_origin: array = field(default_factory=lambda: array("q"))
    effective: array = field(default_factory=lambda: array("b"))
    n_sent: array = field(default_factory=lambda: array("h"))
    ais: Optional[list] = None
    fetch_events: list = field(default_factory=list)
    deliver_events: list = field(default_factory=list)
    guard_checks: list = field(default_factory=list)
    first_safe: Optional[int] = None
    packets_sent: int = 0
    complete: bool = True
    end_reason: str = ""

    def __len__(self):
        return len(self.kinds)

    def step(self, x: int) -> dict:
        kind = self.kinds[x]
        origin = self.recv_origin[x]
        return {
            "i": x,
            "actor": ACTOR[kind],
            "kind": STEP_NAMES[kind],
            "recv": None if origin == NO_RECV else origin,
            "effective": bool(self.effective[x]),
            "sent": self.n_sent[x],
        }

    # line-delimited export ------------------------------------------------

    def to_records(self) -> Iterable[dict]:
        p = self.params
        yield {
            "type": "header",
            "pl": p.pl, "ml": p.ml, "capacity": p.capacity, "n": p.n, "code": code_name(p.code),
            "variant": self.variant, "seed": self.seed, "steps": len(self),
            "first_safe": self.first_safe, "complete": self.complete,
            "end_reason": self.end_reason, "packets_sent": self.packets_sent,
        }
        for x in range(len(self)):
            rec = {"type": "step", **self.step(x)}
            if self.ais is not None:
                rec["ais"] = self.ais[x]
            yield rec
        for e in self.fetch_events:
            yield {"type": "fetch", "step": e.step, "batch_id": e.batch_id, "index": e.index,
                   "content": [list(m) for m in e.content], "ack_origins": list(e.ack_origins)}
        for e in self.deliver_events:
            yield {"type": "deliver", "step": e.step, "batch_id": e.batch_id, "index": e.index,
                   "content": [list(m) for m in e.content], "packet_origins": list(e.packet_origins)}
        for g in self.guard_checks:
            yield {"type": "guard", "step": g.step, "index": g.index, "is_safe": g.is_safe, "clause": g.clause}

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.to_records():
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def load(cls, path) -> "ExecutionTrace":
        with open(path) as fh:
            return cls.from_records(json.loads(line) for line in fh if line.strip())

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> "ExecutionTrace":
        t = None
        for rec in records:
            kind = rec["type"]
            if kind == "header":
                code = CODES[rec.get("code", "repetition")]
                t = cls(CodecParams(rec["pl"], rec["ml"], rec["capacity"], code), rec["variant"], rec["seed"])
                t.first_safe = rec["first_safe"]
                t.complete = rec["complete"]
                t.end_reason = rec["end_reason"]
                t.packets_sent = rec["packets_sent"]
            elif kind == "step":
                if rec["i"] != len(t):
                    raise ValueError(f"step records out of order at {rec['i']}")
                t.kinds.append(STEP_NAMES.index(rec["kind"]))
                t.recv_origin.append(NO_RECV if rec["recv"] is None else rec["recv"])
                t.effective.append(int(rec["effective"]))
                t.n_sent.append(rec["sent"])
                if "ais" in rec:
                    t.ais = t.ais if t.ais is not None else []
                    t.ais.append(rec["ais"])
            elif kind == "fetch":
                t.fetch_events.append(FetchEvent(rec["step"], rec["batch_id"], rec["index"],
                                                 tuple(tuple(m) for m in rec["content"]),
                                                 tuple(rec["ack_origins"])))
            elif kind == "deliver":
                t.deliver_events.append(DeliverEvent(rec["step"], rec["batch_id"], rec["index"],
                                                     tuple(tuple(m) for m in rec["content"]),
                                                     tuple(rec["packet_origins"])))
            elif kind == "guard":
                t.guard_checks.append(GuardCheck(rec["step"], rec["index"], rec["is_safe"], rec["clause"]))
            else:
                raise ValueError(f"unknown record type {kind!r}")
        if t is None:
            raise ValueError("trace has no header")
        return t


# --------------------------------------------------------------------------
# simulator


class Simulator:
    """Owns one configuration and executes atomic steps on it."""

    def __init__(
        self,
        config: Configuration,
        params: CodecParams,
        policy: AdversaryPolicy = AdversaryPolicy(),
        source: Optional[Callable] = None,
        seed: int = 0,
        fairness_k: Optional[int] = None,
        track_safety: bool = True,
        record_ais: bool = False,
    ):
        self.params = params
        self.variant: Variant = config.variant
        self.rng = random.Random(seed)
        self.sender = config.sender
        self.receiver = config.receiver
        # a capacity-0 system still needs a one-slot buffer to communicate at all
        room = max(params.capacity, 1)
        self.chan_sr = Channel(room, policy, fairness_k, _envelope_key, random.Random(self.rng.random()),
                               [Envelope(p, DEBRIS) for p in config.chan_sr])
        self.chan_rs = Channel(room, policy, fairness_k, _envelope_key, random.Random(self.rng.random()),
                               [Envelope(a, DEBRIS) for a in config.chan_rs])
        self.source = source if source is not None else SeededSource(params.ml, seed)
        self.trace = ExecutionTrace(params, self.variant.name, seed)
        if record_ais:
            self.trace.ais = []
        self.track_safety = track_safety and self.variant is EFFICIENT
        self.input_exhausted = False
        self.ack_origin = {a: DEBRIS for a in self.sender.ack_set}
        self.packet_origin = {p: DEBRIS for p in self.receiver.packet_set}
        self._check_safety()

    # configuration views ------------------------------------------------

    @property
    def step_count(self) -> int:
        return len(self.trace)

    def configuration(self) -> Configuration:
        return Configuration(
            self.sender, self.receiver,
            tuple(e.packet for e in self.chan_sr.in_flight),
            tuple(e.packet for e in self.chan_rs.in_flight),
            self.variant,
        )

    def safety(self) -> Optional[str]:
        return safety_clause(self.sender, self.receiver, (e.packet for e in self.chan_sr.in_flight), self.params)

    def _check_safety(self):
        t = self.trace
        if self.trace.ais is not None:
            t.ais.append(ais_vector(self.sender, self.receiver,
                                    [e.packet for e in self.chan_sr.in_flight],
                                    [e.packet for e in self.chan_rs.in_flight]))
        if self.track_safety and t.first_safe is None and self.safety() is None:
            t.first_safe = len(t)

    def _record(self, kind: int, origin: int, effective: bool, sent: int):
        t = self.trace
        t.kinds.append(kind)
        t.recv_origin.append(origin)
        t.effective.append(effective)
        t.n_sent.append(sent)
        self._check_safety()

    def _emit(self, channel: Channel, items: list, admit: Optional[Sequence[bool]], step: int):
        if admit is None:
            self.rng.shuffle(items)
            for it in items:
                channel.send(Envelope(it, step))
        else:
            for it, ok in zip(items, admit):
                channel.send(Envelope(it, step), ok)

    # steps ----------------------------------------------------------------

    def sender_tick(self, admit: Optional[Sequence[bool]] = None):
        step = self.step_count
        v, params = self.variant, self.params
        before = self.sender
        fired = _guard_fires(before, params, v)
        if fired and self.track_safety and self.trace.first_safe is not None:
            clause = self.safety()
            self.trace.guard_checks.append(GuardCheck(step, before.alt_index, clause is None, clause))
        fetched = []

        def fetch(count):
            batch = self.source(count)
            fetched.append(tuple(tuple(m) for m in batch))
            return batch

        try:
            self.sender, packets = v.sender_tick(before, params, fetch)
        except EndOfInput:
            self.input_exhausted = True
            self._record(SENDER_TICK, NO_RECV, False, 0)
            return
        if fetched:
            t = self.trace
            origins = tuple(sorted(self.ack_origin.get(a, DEBRIS) for a in before.ack_set
                                   if a.ldai == before.alt_index))
            t.fetch_events.append(FetchEvent(step, len(t.fetch_events), self.sender.alt_index, fetched[0], origins))
            self.ack_origin = {}
        self.trace.packets_sent += len(packets)
        self._emit(self.chan_sr, packets, admit, step)
        self._record(SENDER_TICK, NO_RECV, False, len(packets))

    def sender_recv(self, index: Optional[int] = None, duplicate: Optional[bool] = None):
        env = self.chan_rs.deliver(index, duplicate)
        if env is None:
            return self._record(SENDER_RECV, NO_RECV, False, 0)
        before = self.sender
        self.sender = self.variant.sender_on_ack(before, env.packet, self.params)
        effective = self.sender is not before
        if effective:
            self.ack_origin[env.packet] = env.origin
        self._record(SENDER_RECV, env.origin, effective, 0)

    def receiver_tick(self, admit: Optional[Sequence[bool]] = None):
        step = self.step_count
        before = self.receiver
        self.receiver, acks, delivered = self.variant.receiver_tick(before, self.params)
        if delivered is not None:
            ind = self.receiver.last_delivered_index
            used = [p for p in before.packet_set if p.ai == ind]
            origins = tuple(sorted(self.packet_origin.get(p, DEBRIS) for p in used))
            self.trace.deliver_events.append(
                DeliverEvent(step, self._batch_id(ind, delivered), ind, delivered, origins))
        if self.receiver.packet_set is not before.packet_set:
            self.packet_origin = {p: o for p, o in self.packet_origin.items() if p in self.receiver.packet_set}
        self._emit(self.chan_rs, acks, admit, step)
        self._record(RECEIVER_TICK, NO_RECV, False, len(acks))

    def receiver_recv(self, index: Optional[int] = None, duplicate: Optional[bool] = None,
                      admit: Optional[Sequence[bool]] = None):
        step = self.step_count
        env = self.chan_sr.deliver(index, duplicate)
        if env is None:
            return self._record(RECEIVER_RECV, NO_RECV, False, 0)
        before = self.receiver
        self.receiver, acks = self.variant.receiver_on_packet(before, env.packet, self.params)
        effective = self.receiver is not before
        if effective:
            self.packet_origin = {p: o for p, o in self.packet_origin.items() if p in self.receiver.packet_set}
            self.packet_origin[env.packet] = env.origin
        self._emit(self.chan_rs, acks, admit, step)
        self._record(RECEIVER_RECV, env.origin, effective, len(acks))

    def drop(self, direction: str, index: int):
        """Environment omission of an in-flight item (no process step is recorded)."""
        (self.chan_sr if direction == "sr" else self.chan_rs).drop(index)

    def inject(self, direction: str, item, replace: bool = False) -> bool:
        """Fault injection: place ``item`` in a channel as debris if there is room
        (after clearing the channel when ``replace`` is set)."""
        ch = self.chan_sr if direction == "sr" else self.chan_rs
        if replace:
            ch.in_flight.clear()
        if len(ch) >= ch.capacity:
            return False
        ch.in_flight.append(Envelope(item, DEBRIS))
        return True

    def _batch_id(self, index, content) -> int:
        for e in reversed(self.trace.fetch_events):
            if e.index == index and e.content == content:
                return e.batch_id
        return DEBRIS

    def apply(self, action: tuple):
        """Execute one scripted action; see :func:`run_scripted`."""
        name, *args = action
        if name in ("sender_tick", "receiver_tick", "sender_recv", "receiver_recv"):
            getattr(self, name)(*args)
        elif name == "drop":
            self.drop(*args)
        elif name == "inject":
            self.inject(*args)
        else:
            raise ValueError(f"unknown action {name!r}")


def _guard_fires(s, params: CodecParams, variant: Variant) -> bool:
    if variant is EFFICIENT:
        return required_acks(s.alt_index, params.capacity) <= s.ack_set
    copies = 2 * params.capacity + 1
    return len({a.lbl for a in s.ack_set if a.ldai == s.alt_index and type(a.lbl) is int
                and 1 <= a.lbl <= copies}) >= params.capacity + 1


# --------------------------------------------------------------------------
# runs


@dataclass
class StopRule:
    until_safe: bool = False
    fetches_after_safe: Optional[int] = None
    deliveries: Optional[int] = None
    on_exhaustion: bool = True


def _should_stop(sim: Simulator, rule: StopRule) -> Optional[str]:
    t = sim.trace
    if rule.until_safe and t.first_safe is not None:
        if rule.fetches_after_safe is None:
            return "safe"
        after = 0
        for e in reversed(t.fetch_events):
            if e.step < t.first_safe:
                break
            after += 1
        if after >= rule.fetches_after_safe:
            return "safe"
    if rule.deliveries is not None and len(t.deliver_events) >= rule.deliveries:
        return "deliveries"
    if rule.on_exhaustion and sim.input_exhausted:
        return "input-exhausted"
    return None


def run(
    config0: Configuration,
    seed: int,
    budget: int,
    params: CodecParams,
    policy: AdversaryPolicy = AdversaryPolicy(),
    source: Optional[Callable] = None,
    stop: StopRule = StopRule(),
    weights: Optional[dict] = None,
    fairness_k: Optional[int] = None,
    track_safety: bool = True,
    record_ais: bool = False,
) -> ExecutionTrace:
    """Run a seeded random schedule for at most ``budget`` steps.

    The trace is marked incomplete when the budget runs out before ``stop``
    is satisfied.
    """
    if budget < 1:
        raise ValueError("step budget must be >= 1")
    sim = Simulator(config0, params, policy, source, seed, fairness_k, track_safety, record_ais)
    w = dict(DEFAULT_WEIGHTS)
    w.update(weights or {})
    rng = sim.rng
    ticks = [(w["sender_tick"], sim.sender_tick), (w["receiver_tick"], sim.receiver_tick)]
    t = sim.trace
    reason = _should_stop(sim, stop)
    fetches, delivers = t.fetch_events, t.deliver_events
    seen = None
    while reason is None and len(t) < budget:
        options = list(ticks)
        if sim.chan_rs.in_flight:
            options.append((w["sender_recv"], sim.sender_recv))
        if sim.chan_sr.in_flight:
            options.append((w["receiver_recv"], sim.receiver_recv))
        r = rng.random() * sum(o[0] for o in options)
        for weight, action in options:
            r -= weight
            if r < 0:
                break
        action()
        # the stop rule only depends on these, so skip re-evaluating it otherwise
        now = (len(fetches), len(delivers), t.first_safe, sim.input_exhausted)
        if now != seen:
            seen = now
            reason = _should_stop(sim, stop)
    t.complete = reason is not None
    t.end_reason = reason or "budget"
    return t


def run_scripted(
    config0: Configuration,
    actions: Sequence[tuple],
    params: CodecParams,
    source: Optional[Callable] = None,
    policy: AdversaryPolicy = AdversaryPolicy(drop_on_full=DROP_NEW),
    track_safety: bool = True,
    fairness_k: Optional[int] = None,
) -> tuple[ExecutionTrace, Simulator]:
    """Execute an explicit adversary schedule.

    Actions: ``("sender_tick", admit)``, ``("receiver_tick", admit)`` where
    ``admit`` lists one bool per emitted item in label order;
    ``("sender_recv", index, duplicate)``, ``("receiver_recv", index, duplicate[, admit])``;
    ``("drop", "sr"|"rs", index)``; ``("inject", "sr"|"rs", item[, replace])``.
    A scripted adversary decides omissions itself, so a large ``fairness_k``
    keeps the channel's fairness enforcement from overriding the script.
    """
    sim = Simulator(config0, params, policy, source, 0, fairness_k, track_safety)
    for a in actions:
        sim.apply(a)
    sim.trace.end_reason = "script"
    return sim.trace, sim


# --------------------------------------------------------------------------
# analysis


class LegalSuffix(NamedTuple):
    k: Optional[int]
    fetch_offset: Optional[int]
    verdict: str


def check_legal_suffix(t: ExecutionTrace, since_step: int = 0) -> LegalSuffix:
    """Smallest ``k`` such that deliveries ``k..`` equal a contiguous run of fetched
    batches, in order, with nothing skipped and at most the last fetch still pending.

    Only events at or after ``since_step`` are considered.
    """
    delivered = [e for e in t.deliver_events if e.step >= since_step]
    fetched = [e for e in t.fetch_events if e.step >= since_step]
    if not delivered:
        return LegalSuffix(None, None, "n/a")
    contents = [e.content for e in fetched]
    for k, d in enumerate(delivered):
        rest = [e.content for e in delivered[k:]]
        candidates = [j for j, c in enumerate(contents) if c == d.content]
        for j in candidates:
            if fetched[j].step > d.step:
                continue
            if contents[j:j + len(rest)] == rest and j + len(rest) >= len(contents) - 1:
                if all(f.step < e.step for f, e in zip(fetched[j:], delivered[k:])):
                    return LegalSuffix(k, j, "pass")
    return LegalSuffix(None, None, "fail")


def hb_chain_weight(t: ExecutionTrace, start: int, end: int, effective_only: bool = True) -> int:
    """Heaviest happened-before path between configurations ``start`` and ``end``.

    Steps of one process are chained with weight 0; a receive is joined to the
    step that sent the received item with weight 1.  Items already in flight
    at ``start`` have no sending step inside the window.  With
    ``effective_only`` a receive counts as a message edge only when the item
    passed the receiving process's filter and changed its state; rejected and
    duplicate receptions carry no information.
    """
    if start > end:
        raise ValueError("start must not exceed end")
    w = [0, 0]
    sent_w: dict[int, int] = {}
    kinds, origins, eff, sent = t.kinds, t.recv_origin, t.effective, t.n_sent
    for x in range(start, end):
        kind = kinds[x]
        actor = 0 if kind < 2 else 1
        o = origins[x]
        if o >= start and (eff[x] or not effective_only):
            cand = sent_w[o] + 1
            if cand > w[actor]:
                w[actor] = cand
        if sent[x]:
            sent_w[x] = w[actor]
    return max(w)


class AlphaBeta(NamedTuple):
    fetches: int
    deliveries: int
    complete: bool


def count_alpha_beta(t: ExecutionTrace) -> AlphaBeta:
    """Fetch and delivery steps strictly before the first safe configuration."""
    if t.first_safe is None:
        return AlphaBeta(len(t.fetch_events), len(t.deliver_events), False)
    s = t.first_safe
    return AlphaBeta(
        sum(1 for e in t.fetch_events if e.step < s),
        sum(1 for e in t.deliver_events if e.step < s),
        True,
    )


def index_progression_violations(t: ExecutionTrace, since_step: int) -> list[str]:
    """Violations of the converged index pattern among events at or after ``since_step``.

    Consecutive fetches and consecutive deliveries advance their index by one
    modulo 3, and between two consecutive fetches exactly one delivery occurs,
    carrying the index of the earlier fetch.
    """
    out = []
    fetches = [e for e in t.fetch_events if e.step >= since_step]
    deliveries = [e for e in t.deliver_events if e.step >= since_step]
    for a, b in zip(fetches, fetches[1:]):
        if b.index != (a.index + 1) % 3:
            out.append(f"fetch index {a.index}->{b.index} at step {b.step}")
        between = [d for d in deliveries if a.step < d.step < b.step]
        if len(between) != 1 or between[0].index != a.index:
            out.append(f"deliveries between fetches at {a.step} and {b.step}: "
                       f"{[d.index for d in between]} (expected [{a.index}])")
    for a, b in zip(deliveries, deliveries[1:]):
        if b.index != (a.index + 1) % 3:
            out.append(f"delivery index {a.index}->{b.index} at step {b.step}")
    return out


def provenance_violations(t: ExecutionTrace, since_step: int) -> list[str]:
    """Provenance checks on consecutive fetches and deliveries after ``since_step``.

    Each fetch after the first relies on at least one ack the receiver sent
    since the previous fetch.  Each delivery after the first relies on at least
    ``n - capacity`` packets the sender sent since the previous delivery.
    """
    p = t.params
    out = []
    fetches = [e for e in t.fetch_events if e.step >= since_step]
    for a, b in zip(fetches, fetches[1:]):
        if len(b.ack_origins) < p.capacity + 1:
            out.append(f"fetch at {b.step} used {len(b.ack_origins)} acks")
        if not any(o > a.step for o in b.ack_origins):
            out.append(f"fetch at {b.step} used no ack sent after fetch at {a.step}")
    deliveries = [e for e in t.deliver_events if e.step >= since_step]
    for a, b in zip(deliveries, deliveries[1:]):
        fresh = sum(1 for o in b.packet_origins if o > a.step)
        if fresh < p.n - p.capacity:
            out.append(f"delivery at {b.step} used {fresh} fresh packets (< n - capacity)")
    return out


def packets_per_message(t: ExecutionTrace) -> float:
    """Packets the sender emitted per delivered application message."""
    msgs = sum(len(e.content) for e in t.deliver_events)
    return t.packets_sent / msgs if msgs else float("inf")
