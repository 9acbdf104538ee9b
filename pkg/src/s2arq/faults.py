"""Arbitrary and safe starting configurations.

A transient fault can leave every variable holding any value of its domain and
the channels holding any packets up to the capacity bound.  The generators
here deliberately draw from widened domains (out-of-range indices and labels,
wrong data widths) so that the receiver's sanity checks and the sender's ack
filter actually get exercised.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .codec import CodecParams, encode_batch
from .protocol import (
    EFFICIENT,
    INDICES,
    AckPacket,
    Packet,
    Variant,
    required_acks,
)

PACKET_SET_MODES = ("empty", "clean", "widened", "complete-one", "complete-two", "chaos")


@dataclass(frozen=True)
class Configuration:
    sender: object
    receiver: object
    chan_sr: tuple = ()
    chan_rs: tuple = ()
    variant: Variant = field(default=EFFICIENT, compare=False, repr=False)

    def to_dict(self) -> dict:
        s, r = self.sender, self.receiver
        out = {
            "variant": self.variant.name,
            "sender": {
                "alt_index": s.alt_index,
                "ack_set": sorted(([a.ldai, a.lbl] for a in s.ack_set), key=repr),
            },
            "receiver": {
                "last_delivered_index": r.last_delivered_index,
                "packet_set": sorted((_packet_json(p) for p in r.packet_set), key=repr),
            },
            "chan_sr": [_packet_json(p) for p in self.chan_sr],
            "chan_rs": [[a.ldai, a.lbl] for a in self.chan_rs],
        }
        if hasattr(s, "messages"):
            out["sender"]["messages"] = None if s.messages is None else [list(c) for c in s.messages]
        else:
            out["sender"]["message"] = None if s.message is None else list(s.message)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Configuration":
        from .protocol import VARIANTS

        variant = VARIANTS[d.get("variant", "efficient")]
        sd, rd = d["sender"], d["receiver"]
        acks = frozenset(AckPacket(*a) for a in sd.get("ack_set", []))
        if variant is EFFICIENT:
            msgs = sd.get("messages")
            sender = variant.initial_sender(
                sd["alt_index"], acks, None if msgs is None else tuple(tuple(c) for c in msgs)
            )
        else:
            msg = sd.get("message")
            sender = variant.initial_sender(sd["alt_index"], acks, None if msg is None else tuple(msg))
        receiver = variant.initial_receiver(
            rd["last_delivered_index"], frozenset(_packet_from_json(p) for p in rd.get("packet_set", []))
        )
        return cls(
            sender,
            receiver,
            tuple(_packet_from_json(p) for p in d.get("chan_sr", [])),
            tuple(AckPacket(*a) for a in d.get("chan_rs", [])),
            variant,
        )


def _packet_json(p: Packet) -> list:
    dat = list(p.dat) if isinstance(p.dat, tuple) else p.dat
    return [p.ai, p.lbl, dat]


def _packet_from_json(p) -> Packet:
    ai, lbl, dat = p
    return Packet(ai, lbl, tuple(dat) if isinstance(dat, list) else dat)


def _bits(rng: random.Random, width: int) -> tuple:
    return tuple(rng.getrandbits(1) for _ in range(width))


def _debris_packet(rng: random.Random, params: CodecParams, widened: bool) -> Packet:
    n, pl = params.n, params.pl
    if not widened:
        return Packet(rng.choice(INDICES), rng.randint(1, n), _bits(rng, pl))
    width = rng.choice((pl - 1, pl, pl, pl + 1)) if pl > 1 else rng.choice((pl, pl, pl + 1, 0))
    return Packet(rng.randint(0, 3), rng.randint(0, n + 2), _bits(rng, width))


def _debris_ack(rng: random.Random, capacity: int) -> AckPacket:
    return AckPacket(rng.randint(0, 3), rng.randint(0, capacity + 2))


def _complete_set(rng, params, ind) -> set:
    return {Packet(ind, i, _bits(rng, params.pl)) for i in range(1, params.n + 1)}


def _packet_set(rng: random.Random, params: CodecParams, ldi: int, mode: str) -> frozenset:
    n = params.n
    others = [i for i in INDICES if i != ldi]
    if mode == "empty":
        return frozenset()
    if mode in ("clean", "widened"):
        size = rng.randint(0, 2 * n)
        return frozenset(_debris_packet(rng, params, mode == "widened") for _ in range(size))
    if mode == "complete-one":
        # a full debris batch, possibly one short, for an index other than ldi
        ps = _complete_set(rng, params, rng.choice(others))
        if rng.random() < 0.5:
            ps.discard(rng.choice(sorted(ps)))
        return frozenset(ps)
    if mode == "complete-two":
        return frozenset(_complete_set(rng, params, others[0]) | _complete_set(rng, params, others[1]))
    # chaos: one violation of every sanity clause at once, within the 2n size cap
    ps = {
        Packet(ldi, 1, _bits(rng, params.pl)),
        Packet(others[0], 1, (0,) * params.pl),
        Packet(others[0], 1, (1,) * params.pl),
        Packet(others[1], n + 1, _bits(rng, params.pl + 1)),
    }
    return frozenset(ps)


def arbitrary_configuration(
    seed: int, params: CodecParams, variant: Variant = EFFICIENT, mode: Optional[str] = None
) -> Configuration:
    """Draw a configuration from the full (capacity-bounded) state space."""
    rng = random.Random(seed)
    c = params.capacity
    alt = rng.choice(INDICES)
    ldi = rng.choice(INDICES)
    universe = [AckPacket(i, l) for i in INDICES for l in range(1, c + 2)]
    ack_set = frozenset(rng.sample(universe, rng.randint(0, min(len(universe), 2 * (c + 1)))))
    if rng.random() < 0.25:
        # guard already satisfied, possibly with junk alongside
        ack_set = (ack_set | required_acks(alt, c))
    mode = mode if mode is not None else rng.choice(PACKET_SET_MODES)
    if variant is EFFICIENT:
        batch = [_bits(rng, params.ml) for _ in range(params.pl)]
        cols = tuple(col.data for col in encode_batch(batch, params))
        sender = variant.initial_sender(alt, ack_set, cols)
        packet_set = _packet_set(rng, params, ldi, mode)
    else:
        sender = variant.initial_sender(alt, ack_set, _bits(rng, params.ml))
        k = variant.labels(params)
        packet_set = frozenset(
            Packet(rng.choice(INDICES), rng.randint(1, k), _bits(rng, params.ml))
            for _ in range(rng.randint(0, 2 * k))
        )
    receiver = variant.initial_receiver(ldi, packet_set)
    widened = mode in ("widened", "chaos")
    chan_sr = tuple(_debris_packet(rng, params, widened) for _ in range(rng.randint(0, c)))
    chan_rs = tuple(_debris_ack(rng, c) for _ in range(rng.randint(0, c)))
    return Configuration(sender, receiver, chan_sr, chan_rs, variant)


class UnsafeConfigurationError(ValueError):
    pass


def safe_configuration(
    y: int,
    params: CodecParams,
    chan_sr: Sequence[Packet] = (),
    chan_rs: Sequence[AckPacket] = (),
    variant: Variant = EFFICIENT,
) -> Configuration:
    """Sender and receiver agree on index ``y``, the sender holds every ack for ``y``,
    and the sender-to-receiver debris carries only indices other than ``y``."""
    if y not in INDICES:
        raise UnsafeConfigurationError(f"index must be in [0, 2], got {y!r}")
    c = params.capacity
    if len(chan_sr) > c or len(chan_rs) > c:
        raise UnsafeConfigurationError("channel contents exceed capacity")
    for p in chan_sr:
        if p.ai == y:
            raise UnsafeConfigurationError(f"channel packet {p} carries the agreed index {y}")
    sender = variant.initial_sender(y, required_acks(y, c), None)
    receiver = variant.initial_receiver(y, frozenset())
    return Configuration(sender, receiver, tuple(chan_sr), tuple(chan_rs), variant)


def clean_configuration(params: CodecParams, variant: Variant = EFFICIENT) -> Configuration:
    return safe_configuration(0, params, variant=variant)
