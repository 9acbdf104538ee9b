import json
import random
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from s2arq.channel import AdversaryPolicy
from s2arq.codec import CodecParams
from s2arq.protocol import AckPacket, Packet
from s2arq.transport import (
    MAGIC,
    Proxy,
    WireError,
    deserialize,
    free_udp_port,
    load_log,
    local_session,
    pack_bits,
    replay_log,
    serialize,
    unpack_bits,
)

P = CodecParams(2, 2, 1)


def batches(count, params=P, seed=1):
    rng = random.Random(seed)
    return [[[rng.getrandbits(1) for _ in range(params.ml)] for _ in range(params.pl)] for _ in range(count)]


# wire format -------------------------------------------------------------------

def test_ack_bytes():
    assert serialize(AckPacket(1, 2)) == bytes.fromhex("533201010002")


def test_data_bytes():
    # 10 bits pack MSB first into two bytes with zero padding
    p = Packet(2, 5, (1, 0, 1, 1, 0, 0, 0, 0, 0, 1))
    assert serialize(p) == bytes.fromhex("5332000200050002b040")
    assert deserialize(serialize(p), 10) == p


@given(st.integers(0, 2), st.integers(1, 500), st.lists(st.integers(0, 1), min_size=1, max_size=40))
def test_roundtrip(ai, lbl, dat):
    p = Packet(ai, lbl, tuple(dat))
    assert deserialize(serialize(p), len(dat)) == p
    a = AckPacket(ai, lbl)
    assert deserialize(serialize(a), len(dat)) == a


def test_every_truncation_parses_to_an_invalid_packet():
    for full in (serialize(Packet(1, 3, (1, 0))), serialize(AckPacket(1, 2))):
        for k in range(len(full)):
            got = deserialize(full[:k], 2)
            assert None in (got.ai if isinstance(got, Packet) else got.ldai, got.lbl) or \
                getattr(got, "dat", ()) is None


@given(st.binary(max_size=30))
def test_garbage_never_raises(data):
    got = deserialize(data, 2)
    assert isinstance(got, (Packet, AckPacket))


def test_wrong_width_payload_is_kept_for_the_sanity_filter():
    wide = serialize(Packet(1, 1, (1, 1, 1)))
    assert deserialize(wide, 2).dat != (1, 1)


@pytest.mark.parametrize("p", [Packet(256, 1, (0,)), Packet(0, 70000, (0,)), Packet(0, 1, (2,)),
                               Packet(-1, 1, (0,)), AckPacket(0, -1)])
def test_fields_that_do_not_fit_are_rejected(p):
    with pytest.raises(WireError):
        serialize(p)


def test_bit_packing():
    assert pack_bits((1, 0, 0, 0, 0, 0, 0, 0, 1)) == b"\x80\x80"
    assert unpack_bits(b"\x80\x80", 9) == (1, 0, 0, 0, 0, 0, 0, 0, 1)
    assert len(unpack_bits(b"\x80\x81", 9)) == 16  # nonzero padding is not trimmed
    assert MAGIC == b"S2"


# proxy ---------------------------------------------------------------------------

def _proxy_roundtrip(policy, n=20):
    import socket
    host = "127.0.0.1"
    ps, pa, pb, pr = (free_udp_port() for _ in range(4))
    proxy = Proxy((host, pa), (host, pb), (host, ps), (host, pr), capacity=n, policy=policy)
    th = threading.Thread(target=proxy.serve, args=(1.0,))
    th.start()
    snd = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    rcv = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    rcv.bind((host, pr))
    rcv.settimeout(0.5)
    for i in range(n):
        snd.sendto(bytes([i]), (host, pa))
    got = []
    try:
        while True:
            got.append(rcv.recvfrom(100)[0])
    except OSError:
        pass
    th.join()
    snd.close()
    rcv.close()
    return got


def test_proxy_passes_everything_without_impairment():
    got = _proxy_roundtrip(AdversaryPolicy())
    assert sorted(got) == [bytes([i]) for i in range(20)]


def test_proxy_full_omission_forwards_nothing():
    # with fewer sends than the fairness threshold nothing is ever due
    assert _proxy_roundtrip(AdversaryPolicy(omission=1.0), n=3) == []


# live sessions ----------------------------------------------------------------------

@pytest.mark.parametrize("tick_ms,count", [(1, 30), (100, 4)])
def test_delivery_does_not_depend_on_tick_period(tmp_path, tick_ms, count):
    b = batches(count, seed=tick_ms)
    r = local_session(str(tmp_path), P, b, AdversaryPolicy(0.1, 0.1), tick_ms=tick_ms, timeout=60)
    assert r.sender_ok and r.delivered == b


@pytest.mark.slow
def test_hundred_batches_under_impairment_and_replay(tmp_path):
    b = batches(100)
    r = local_session(str(tmp_path), P, b, AdversaryPolicy(0.2, 0.2), seed=3)
    assert r.sender_ok and r.delivered == b
    assert replay_log(load_log(r.sender_log)) == []
    assert replay_log(load_log(r.receiver_log)) == []


def test_first_attempt_live(tmp_path):
    q = CodecParams(1, 3, 1)
    b = batches(10, q)
    r = local_session(str(tmp_path), q, b, AdversaryPolicy(0.1, 0.1), variant="first-attempt")
    assert r.sender_ok and r.delivered == b


def test_replay_detects_tampering(tmp_path):
    r = local_session(str(tmp_path), P, batches(5))
    recs = load_log(r.receiver_log)
    assert replay_log(recs) == []
    i = next(k for k, rec in enumerate(recs) if rec.get("delivered"))
    recs[i] = json.loads(json.dumps(recs[i]))
    recs[i]["delivered"][0][0] ^= 1
    assert any("delivered" in m for m in replay_log(recs))
