import json

import pytest

from s2arq.codec import CodecParams
from s2arq.engine import is_safe
from s2arq.faults import (
    PACKET_SET_MODES,
    Configuration,
    UnsafeConfigurationError,
    arbitrary_configuration,
    safe_configuration,
)
from s2arq.protocol import FIRST_ATTEMPT, AckPacket, Packet, required_acks, sanity_violation

P = CodecParams(2, 2, 1)


@pytest.mark.parametrize("mode", PACKET_SET_MODES)
def test_arbitrary_configuration_respects_bounds(mode):
    for seed in range(40):
        c = arbitrary_configuration(seed, P, mode=mode)
        assert len(c.chan_sr) <= P.capacity and len(c.chan_rs) <= P.capacity
        assert len(c.receiver.packet_set) <= 2 * P.n
        assert c.sender.messages is not None and len(c.sender.messages) == P.n


def test_modes_reach_their_sanity_clauses():
    for s in range(20):
        r = arbitrary_configuration(s, P, mode="chaos").receiver
        assert sanity_violation(r, P) is not None
        ps = r.packet_set
        assert any(p.ai == r.last_delivered_index for p in ps)
        assert any(not 1 <= p.lbl <= P.n for p in ps)
        assert any(len(p.dat) != P.pl for p in ps)
        keys = [(p.ai, p.lbl) for p in ps]
        assert len(keys) != len(set(keys))
    two = arbitrary_configuration(0, P, mode="complete-two").receiver
    assert sanity_violation(two, P) == "multiple-complete"
    assert all(sanity_violation(arbitrary_configuration(s, P, mode="complete-one").receiver, P) is None
               for s in range(20))


def test_arbitrary_is_deterministic_per_seed():
    assert arbitrary_configuration(7, P) == arbitrary_configuration(7, P)
    assert any(arbitrary_configuration(7, P) != arbitrary_configuration(s, P) for s in range(8, 12))


def test_json_roundtrip():
    for seed in range(30):
        c = arbitrary_configuration(seed, P)
        assert Configuration.from_dict(json.loads(json.dumps(c.to_dict()))) == c
    fa = arbitrary_configuration(3, P, FIRST_ATTEMPT)
    assert Configuration.from_dict(json.loads(json.dumps(fa.to_dict()))) == fa


def test_safe_configuration_shape():
    c = safe_configuration(2, P, chan_sr=[Packet(0, 3, (1, 1))], chan_rs=[AckPacket(1, 1)])
    assert c.sender.alt_index == c.receiver.last_delivered_index == 2
    assert c.sender.ack_set == required_acks(2, 1)
    assert is_safe(c, P).is_safe


@pytest.mark.parametrize("kw", [
    {"chan_sr": [Packet(1, 1, (0, 0))]},                      # debris with the agreed index
    {"chan_sr": [Packet(0, 1, (0, 0)), Packet(2, 1, (0, 0))]},  # over capacity
])
def test_safe_configuration_refuses(kw):
    with pytest.raises(UnsafeConfigurationError):
        safe_configuration(1, P, **kw)
    with pytest.raises(UnsafeConfigurationError):
        safe_configuration(3, P)
