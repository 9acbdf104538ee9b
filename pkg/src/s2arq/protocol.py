"""Sender and receiver step functions.

Both the efficient protocol (batches coded over ``n`` transposed columns) and
the first-attempt protocol (``2*capacity+1`` labeled copies of one message,
majority vote at the receiver) are written as pure functions over immutable
state values.  Every function is total: states and packets may hold any
value, including out-of-range indices and wrong widths left behind by a
transient fault, and the guards in the algorithms are what discard them.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, replace
from typing import Callable, Iterable, NamedTuple, Optional, Sequence

from .codec import Bits, CodecParams, PayloadColumn, decode_batch, encode_batch

INDICES = (0, 1, 2)


class EndOfInput(Exception):
    """The application has no more messages to fetch."""


class Packet(NamedTuple):
    ai: object
    lbl: object
    dat: object

    def is_valid(self, params: CodecParams, n_labels: Optional[int] = None) -> bool:
        n = params.n if n_labels is None else n_labels
        return (
            self.ai in INDICES
            and type(self.lbl) is int
            and 1 <= self.lbl <= n
            and _is_bits(self.dat, params.pl)
        )


class AckPacket(NamedTuple):
    ldai: object
    lbl: object

    def is_valid(self, params: CodecParams, n_labels: Optional[int] = None) -> bool:
        n = params.capacity + 1 if n_labels is None else n_labels
        return self.ldai in INDICES and type(self.lbl) is int and 1 <= self.lbl <= n


def _is_bits(dat, width: int) -> bool:
    return isinstance(dat, tuple) and len(dat) == width and all(b in (0, 1) for b in dat)


Fetch = Callable[[int], Sequence[Bits]]


# --------------------------------------------------------------------------
# efficient protocol


@dataclass(frozen=True)
class SenderState:
    alt_index: object
    ack_set: frozenset = frozenset()
    # encoded batch as n columns of pl bits, or None before the first fetch
    messages: Optional[tuple[Bits, ...]] = None


@dataclass(frozen=True)
class ReceiverState:
    last_delivered_index: object
    packet_set: frozenset = frozenset()


def required_acks(alt_index, capacity: int) -> frozenset:
    return frozenset(AckPacket(alt_index, i) for i in range(1, capacity + 2))


def outgoing_packets(s: SenderState) -> list[Packet]:
    if s.messages is None:
        return []
    return [Packet(s.alt_index, i, col) for i, col in enumerate(s.messages, start=1)]


def sender_tick(s: SenderState, params: CodecParams, fetch: Fetch) -> tuple[SenderState, list[Packet]]:
    """One iteration of the sender loop: fetch on a complete ack set, then emit all ``n`` packets.

    Raises ``EndOfInput`` (state unchanged, nothing emitted) when the guard
    fires but the application has nothing left.
    """
    if required_acks(s.alt_index, params.capacity) <= s.ack_set:
        batch = fetch(params.pl)
        columns = encode_batch(batch, params)
        alt = (s.alt_index + 1) % 3 if s.alt_index in INDICES else 0
        s = SenderState(alt, frozenset(), tuple(c.data for c in columns))
    return s, outgoing_packets(s)


def sender_on_ack(s: SenderState, a: AckPacket, params: CodecParams) -> SenderState:
    if a.ldai == s.alt_index and type(a.lbl) is int and 1 <= a.lbl <= params.capacity + 1:
        if a not in s.ack_set:
            return replace(s, ack_set=s.ack_set | {a})
    return s


def sanity_violation(r: ReceiverState, params: CodecParams) -> Optional[str]:
    """Name of the first receiver sanity clause that ``r`` violates, or None."""
    n, pl = params.n, params.pl
    ldi = r.last_delivered_index
    seen: dict[tuple, object] = {}
    per_index: Counter = Counter()
    for p in r.packet_set:
        if not (p.ai in INDICES and p.ai != ldi and type(p.lbl) is int and 1 <= p.lbl <= n):
            return "index-label"
        key = (p.ai, p.lbl)
        if key in seen:
            return "duplicate-label"
        seen[key] = p.dat
        if not _is_bits(p.dat, pl):
            return "data-width"
        per_index[p.ai] += 1
    if sum(1 for c in per_index.values() if c >= n) > 1:
        return "multiple-complete"
    return None


def complete_index(r: ReceiverState, params: CodecParams):
    """The unique index other than the last delivered one that owns ``n`` packets, else None."""
    counts = Counter(p.ai for p in r.packet_set)
    full = [i for i, c in counts.items() if i != r.last_delivered_index and c >= params.n]
    return full[0] if len(full) == 1 else None


def receiver_tick(
    r: ReceiverState, params: CodecParams
) -> tuple[ReceiverState, list[AckPacket], Optional[tuple[Bits, ...]]]:
    delivered = None
    if r.packet_set and sanity_violation(r, params) is not None:
        r = replace(r, packet_set=frozenset())
    ind = complete_index(r, params)
    if ind is not None:
        columns = [PayloadColumn(p.lbl, p.dat) for p in r.packet_set if p.ai == ind]
        delivered = decode_batch(columns, params)
        r = ReceiverState(ind, frozenset())
    acks = [AckPacket(r.last_delivered_index, i) for i in range(1, params.capacity + 2)]
    return r, acks, delivered


def receiver_on_packet(r: ReceiverState, p: Packet, params: CodecParams) -> ReceiverState:
    if not (
        p.ai in INDICES
        and p.ai != r.last_delivered_index
        and type(p.lbl) is int
        and 1 <= p.lbl <= params.n
        and _is_bits(p.dat, params.pl)
    ):
        return r
    for q in r.packet_set:
        if q.ai == p.ai and q.lbl == p.lbl:
            return r
    return replace(r, packet_set=r.packet_set | {p})


# --------------------------------------------------------------------------
# first-attempt protocol: one message per round, 2*capacity+1 labeled copies


@dataclass(frozen=True)
class FirstAttemptSenderState:
    alt_index: object
    ack_set: frozenset = frozenset()
    message: Optional[Bits] = None


@dataclass(frozen=True)
class FirstAttemptReceiverState:
    last_delivered_index: object
    packet_set: frozenset = frozenset()


def fa_copies(capacity: int) -> int:
    return 2 * capacity + 1


def fa_sender_tick(
    s: FirstAttemptSenderState, params: CodecParams, fetch: Fetch
) -> tuple[FirstAttemptSenderState, list[Packet]]:
    """Fetch one message on ``capacity+1`` distinct matching acks; always re-emit every labeled copy."""
    copies = fa_copies(params.capacity)
    matching = {a.lbl for a in s.ack_set if a.ldai == s.alt_index and type(a.lbl) is int and 1 <= a.lbl <= copies}
    if len(matching) >= params.capacity + 1:
        (msg,) = fetch(1)
        alt = (s.alt_index + 1) % 3 if s.alt_index in INDICES else 0
        s = FirstAttemptSenderState(alt, frozenset(), tuple(msg))
    if s.message is None:
        return s, []
    return s, [Packet(s.alt_index, i, s.message) for i in range(1, copies + 1)]


def fa_sender_on_ack(s: FirstAttemptSenderState, a: AckPacket, params: CodecParams) -> FirstAttemptSenderState:
    # acks echo packet labels, so any label of the 2*capacity+1 copies counts
    if a.ldai == s.alt_index and type(a.lbl) is int and 1 <= a.lbl <= fa_copies(params.capacity):
        if a not in s.ack_set:
            return replace(s, ack_set=s.ack_set | {a})
    return s


def fa_receiver_on_packet(
    r: FirstAttemptReceiverState, p: Packet, params: CodecParams
) -> tuple[FirstAttemptReceiverState, list[AckPacket]]:
    """Store ``p`` (replacing any packet with the same index and label) and acknowledge it."""
    copies = fa_copies(params.capacity)
    ack = [AckPacket(r.last_delivered_index, p.lbl)] if type(p.lbl) is int else []
    if not (
        p.ai in INDICES
        and p.ai != r.last_delivered_index
        and type(p.lbl) is int
        and 1 <= p.lbl <= copies
        and _is_bits(p.dat, params.ml)
    ):
        return r, ack
    kept = frozenset(q for q in r.packet_set if (q.ai, q.lbl) != (p.ai, p.lbl))
    return replace(r, packet_set=kept | {p}), ack


def majority(values: Iterable) -> Optional[object]:
    """The value held by a strict majority, or None."""
    values = list(values)
    if not values:
        return None
    value, count = Counter(values).most_common(1)[0]
    return value if 2 * count > len(values) else None


def fa_receiver_tick(
    r: FirstAttemptReceiverState, params: CodecParams
) -> tuple[FirstAttemptReceiverState, list[AckPacket], Optional[tuple[Bits, ...]]]:
    copies = fa_copies(params.capacity)
    bad = any(
        not (q.ai in INDICES and q.ai != r.last_delivered_index and type(q.lbl) is int
             and 1 <= q.lbl <= copies and _is_bits(q.dat, params.ml))
        for q in r.packet_set
    )
    if bad:
        return replace(r, packet_set=frozenset()), [], None
    counts = Counter(q.ai for q in r.packet_set)
    full = [i for i, c in counts.items() if c >= copies]
    if len(full) != 1:
        if len(full) > 1:
            return replace(r, packet_set=frozenset()), [], None
        return r, [], None
    ind = full[0]
    winner = majority(q.dat for q in r.packet_set if q.ai == ind)
    if winner is None:
        return replace(r, packet_set=frozenset()), [], None
    return FirstAttemptReceiverState(ind, frozenset()), [], (winner,)


# --------------------------------------------------------------------------
# engine-facing adapters


class Variant(NamedTuple):
    name: str
    sender_tick: Callable
    sender_on_ack: Callable
    receiver_tick: Callable
    # (state, packet, params) -> (state, acks)
    receiver_on_packet: Callable
    initial_sender: Callable
    initial_receiver: Callable
    batch_size: Callable[[CodecParams], int]
    labels: Callable[[CodecParams], int]


def _eff_on_packet(r, p, params):
    return receiver_on_packet(r, p, params), []


EFFICIENT = Variant(
    "efficient", sender_tick, sender_on_ack, receiver_tick, _eff_on_packet,
    SenderState, ReceiverState, lambda params: params.pl, lambda params: params.n,
)

FIRST_ATTEMPT = Variant(
    "first-attempt", fa_sender_tick, fa_sender_on_ack, fa_receiver_tick, fa_receiver_on_packet,
    FirstAttemptSenderState, FirstAttemptReceiverState, lambda params: 1,
    lambda params: fa_copies(params.capacity),
)

VARIANTS = {v.name: v for v in (EFFICIENT, FIRST_ATTEMPT)}


# --------------------------------------------------------------------------
# application-layer message sources


class SeededSource:
    """Unbounded deterministic generator of ``ml``-bit messages."""

    def __init__(self, ml: int, seed: int = 0, limit: Optional[int] = None):
        self.ml = ml
        self.rng = random.Random(seed)
        self.limit = limit
        self.fetched = 0

    def __call__(self, count: int) -> tuple[Bits, ...]:
        if self.limit is not None and self.fetched >= self.limit:
            raise EndOfInput
        self.fetched += 1
        return tuple(
            tuple(self.rng.getrandbits(1) for _ in range(self.ml)) for _ in range(count)
        )


class ScriptedSource:
    """Serves a fixed list of batches, then raises ``EndOfInput``."""

    def __init__(self, batches: Sequence[Sequence[Sequence[int]]]):
        self.batches = [tuple(tuple(m) for m in b) for b in batches]
        self.fetched = 0

    def __call__(self, count: int) -> tuple[Bits, ...]:
        if self.fetched >= len(self.batches):
            raise EndOfInput
        batch = self.batches[self.fetched]
        if len(batch) != count:
            raise ValueError(f"scripted batch {self.fetched} has {len(batch)} messages, need {count}")
        self.fetched += 1
        return batch
