"""Bounded-capacity unidirectional channel with an adversarial environment.

The channel is a multiset of in-flight items.  The environment may omit a
send, drop an in-flight item to make room, deliver any item (reordering), and
deliver a copy while retaining the original (duplication).  It never invents
items: anything delivered was sent or was already present at the start.

Fair communication is enforced with a counter per packet value: once a value
has been sent ``fairness_k`` times without being delivered it is *due*, the
environment may no longer omit it, and the next delivery from this channel
picks a due item if one is in flight.

Items are opaque; ``key`` extracts the packet value used for fairness
bookkeeping (the engine sends envelopes that carry provenance next to the
packet).
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Hashable, Optional

DROP_NEW = "drop-new"
DROP_RANDOM_EXISTING = "drop-random-existing"


@dataclass(frozen=True)
class AdversaryPolicy:
    omission: float = 0.0
    duplication: float = 0.0
    drop_on_full: str = DROP_RANDOM_EXISTING
    seed: int = 0

    def __post_init__(self):
        for name in ("omission", "duplication"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} rate must be in [0, 1], got {v}")
        if self.drop_on_full not in (DROP_NEW, DROP_RANDOM_EXISTING):
            raise ValueError(f"unknown drop_on_full policy {self.drop_on_full!r}")


def _identity(x):
    return x


class Channel:
    def __init__(
        self,
        capacity: int,
        policy: AdversaryPolicy = AdversaryPolicy(),
        fairness_k: Optional[int] = None,
        key: Callable[[object], Hashable] = _identity,
        rng: Optional[random.Random] = None,
        initial=(),
    ):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = capacity
        self.policy = policy
        self.fairness_k = fairness_k if fairness_k is not None else 3 * (capacity + 1)
        self.key = key
        self.rng = rng if rng is not None else random.Random(policy.seed)
        self.in_flight: list = list(initial)
        if len(self.in_flight) > capacity:
            raise ValueError(f"{len(self.in_flight)} initial items exceed capacity {capacity}")
        self.pending_send_counts: Counter = Counter()

    def __len__(self):
        return len(self.in_flight)

    def _due(self, item) -> bool:
        return self.pending_send_counts[self.key(item)] >= self.fairness_k

    def fairness_due(self, k: Optional[int] = None) -> set:
        k = self.fairness_k if k is None else k
        if k < 1:
            raise ValueError("fairness threshold must be >= 1")
        return {v for v, c in self.pending_send_counts.items() if c >= k}

    def send(self, item, admit: Optional[bool] = None) -> bool:
        """Offer ``item`` to the channel; returns True when it was inserted.

        ``admit`` overrides the random omission decision (scripted adversaries).
        """
        counts = self.pending_send_counts
        key = self.key(item)
        count = counts[key] + 1
        counts[key] = count
        due = count >= self.fairness_k
        if admit is None:
            omission = self.policy.omission
            admit = due or not omission or self.rng.random() >= omission
        if not admit or self.capacity == 0:
            return False
        in_flight = self.in_flight
        if len(in_flight) >= self.capacity:
            if self.policy.drop_on_full == DROP_NEW and not due:
                return False
            victims = [i for i, x in enumerate(in_flight) if not self._due(x)]
            if not victims:
                if not due:
                    return False
                victims = range(len(in_flight))
            in_flight.pop(victims[0] if len(victims) == 1 else self.rng.choice(victims))
        in_flight.append(item)
        return True

    def deliver(self, index: Optional[int] = None, duplicate: Optional[bool] = None):
        """Remove and return one in-flight item, or None if the channel is empty.

        With duplication the original stays in flight and a copy is delivered.
        """
        if not self.in_flight:
            return None
        if index is None:
            due = [i for i, x in enumerate(self.in_flight) if self._due(x)]
            if due:
                index = self.rng.choice(due)
            else:
                index = self.rng.randrange(len(self.in_flight)) if len(self.in_flight) > 1 else 0
        if duplicate is None:
            duplicate = bool(self.policy.duplication) and self.rng.random() < self.policy.duplication
        item = self.in_flight[index] if duplicate else self.in_flight.pop(index)
        self.pending_send_counts.pop(self.key(item), None)
        return item

    def drop(self, index: int):
        """Environment omission of an in-flight item."""
        return self.in_flight.pop(index)


# functional-style aliases matching the operation names used elsewhere

def channel_send(ch: Channel, item, admit: Optional[bool] = None) -> Channel:
    ch.send(item, admit)
    return ch


def channel_deliver(ch: Channel, index: Optional[int] = None, duplicate: Optional[bool] = None):
    return ch, ch.deliver(index, duplicate)


def fairness_due(ch: Channel, k: int) -> set:
    return ch.fairness_due(k)
