"""Live sender and receiver over UDP, an impairment proxy, and log replay.

Wire format (big-endian)::

    53 32 | kind (0 data, 1 ack) | ai | lbl (2 bytes) | dat_len (2 bytes) | dat
    53 32 | 01                   | ldai | lbl (2 bytes)

``dat`` is the payload bit-packed most-significant-bit first and zero padded
to ``dat_len`` bytes.  Parsing never raises: anything malformed comes back as
a packet whose fields fail the protocol's validity checks, so the receiver's
own sanity logic discards it.

Each live process is a single loop that owns its state: it waits for a
datagram until the next tick deadline, applies the matching step function,
and logs every input together with the resulting state.  Replaying that log
through the same step functions must reproduce every logged state.
"""

from __future__ import annotations

import json
import logging
import random
import socket
import struct
import time
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

from .channel import AdversaryPolicy, Channel
from .codec import CodecParams
from .faults import Configuration, arbitrary_configuration, safe_configuration
from .protocol import (
    EFFICIENT,
    VARIANTS,
    AckPacket,
    EndOfInput,
    Packet,
    ScriptedSource,
    SeededSource,
    Variant,
)

log = logging.getLogger(__name__)

MAGIC = b"\x53\x32"
KIND_DATA, KIND_ACK = 0, 1
_HEAD = struct.Struct(">2sBBHH")
_ACK = struct.Struct(">2sBBH")


class WireError(ValueError):
    pass


def pack_bits(bits: Sequence[int]) -> bytes:
    out = bytearray((len(bits) + 7) // 8)
    for i, b in enumerate(bits):
        if b:
            out[i // 8] |= 0x80 >> (i % 8)
    return bytes(out)


def unpack_bits(data: bytes, width: Optional[int] = None) -> tuple:
    """Bits of ``data`` MSB first; trimmed to ``width`` when the padding is all zero."""
    bits = tuple((byte >> (7 - k)) & 1 for byte in data for k in range(8))
    if width is not None and len(data) == (width + 7) // 8 and not any(bits[width:]):
        return bits[:width]
    return bits


def serialize(p: Union[Packet, AckPacket]) -> bytes:
    if isinstance(p, AckPacket):
        _check_field("ldai", p.ldai, 0xFF)
        _check_field("lbl", p.lbl, 0xFFFF)
        return _ACK.pack(MAGIC, KIND_ACK, p.ldai, p.lbl)
    _check_field("ai", p.ai, 0xFF)
    _check_field("lbl", p.lbl, 0xFFFF)
    if not isinstance(p.dat, tuple) or any(b not in (0, 1) for b in p.dat):
        raise WireError(f"payload must be a tuple of bits, got {p.dat!r}")
    dat = pack_bits(p.dat)
    if len(dat) > 0xFFFF:
        raise WireError("payload too long")
    return _HEAD.pack(MAGIC, KIND_DATA, p.ai, p.lbl, len(dat)) + dat


def _check_field(name, v, top):
    if type(v) is not int or not 0 <= v <= top:
        raise WireError(f"{name}={v!r} does not fit its wire field")


def deserialize(data: bytes, pl: int) -> Union[Packet, AckPacket]:
    """Parse one datagram.  Malformed input yields fields set to None or a payload
    of the wrong width, never an exception."""
    if len(data) < 3 or data[:2] != MAGIC:
        return Packet(None, None, None)
    kind = data[2]
    if kind == KIND_ACK:
        if len(data) != _ACK.size:
            ldai = data[3] if len(data) > 3 else None
            return AckPacket(ldai, None)
        _, _, ldai, lbl = _ACK.unpack(data)
        return AckPacket(ldai, lbl)
    if kind != KIND_DATA:
        return Packet(None, None, None)
    if len(data) < _HEAD.size:
        ai = data[3] if len(data) > 3 else None
        return Packet(ai, None, None)
    _, _, ai, lbl, dat_len = _HEAD.unpack_from(data)
    body = data[_HEAD.size:]
    if len(body) != dat_len:
        return Packet(ai, lbl, None)
    return Packet(ai, lbl, unpack_bits(body, pl))


# --------------------------------------------------------------------------
# state snapshots for the event log


def state_json(state) -> dict:
    if hasattr(state, "packet_set"):
        return {
            "last_delivered_index": state.last_delivered_index,
            "packet_set": sorted([p.ai, p.lbl, list(p.dat)] for p in state.packet_set),
        }
    out = {"alt_index": state.alt_index, "ack_set": sorted([a.ldai, a.lbl] for a in state.ack_set)}
    if hasattr(state, "messages"):
        out["messages"] = None if state.messages is None else [list(c) for c in state.messages]
    else:
        out["message"] = None if state.message is None else list(state.message)
    return out


# --------------------------------------------------------------------------
# live endpoints


@dataclass
class Endpoint:
    role: str                    # "sender" or "receiver"
    params: CodecParams
    bind: tuple                  # local (host, port)
    peer: tuple                  # where to send (normally the proxy)
    variant: Variant = EFFICIENT
    tick: float = 0.01
    seed: int = 0
    log_path: Optional[str] = None
    idle_timeout: float = 2.0
    max_seconds: float = 120.0


class LiveProcess:
    """Single-owner event loop around one protocol process."""

    def __init__(self, ep: Endpoint, start: Configuration, source=None):
        self.ep = ep
        self.rng = random.Random(ep.seed)
        self.state = start.sender if ep.role == "sender" else start.receiver
        self.source = source
        self.delivered: list = []
        self.done = False
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind(ep.bind)
        self._log = open(ep.log_path, "w") if ep.log_path else None
        self._write({"ev": "init", "role": ep.role, "variant": ep.variant.name,
                     "pl": ep.params.pl, "ml": ep.params.ml, "capacity": ep.params.capacity,
                     "state": state_json(self.state)})

    def _write(self, rec: dict):
        if self._log:
            self._log.write(json.dumps(rec) + "\n")

    def close(self):
        self.sock.close()
        if self._log:
            self._log.close()

    def _send_all(self, items) -> list[str]:
        items = list(items)
        self.rng.shuffle(items)
        wire = [serialize(x) for x in items]
        for w in wire:
            self.sock.sendto(w, self.ep.peer)
        return [w.hex() for w in wire]

    def on_datagram(self, data: bytes):
        v, params = self.ep.variant, self.ep.params
        item = deserialize(data, params.pl if v is EFFICIENT else params.ml)
        sent = []
        if self.ep.role == "sender":
            if isinstance(item, AckPacket):
                self.state = v.sender_on_ack(self.state, item, params)
        elif isinstance(item, Packet):
            self.state, acks = v.receiver_on_packet(self.state, item, params)
            sent = self._send_all(acks)
        self._write({"ev": "recv", "data": data.hex(), "sent": sent, "state": state_json(self.state)})

    def on_tick(self):
        v, params = self.ep.variant, self.ep.params
        rec = {"ev": "tick"}
        if self.ep.role == "sender":
            fetched = []

            def fetch(count):
                batch = self.source(count)
                fetched.append([list(m) for m in batch])
                return batch

            try:
                self.state, out = v.sender_tick(self.state, params, fetch)
            except EndOfInput:
                rec.update(end_of_input=True, sent=[], state=state_json(self.state))
                self._write(rec)
                self.done = True
                return
            rec["fetched"] = fetched[0] if fetched else None
        else:
            self.state, out, delivered = v.receiver_tick(self.state, params)
            rec["delivered"] = None if delivered is None else [list(m) for m in delivered]
            if delivered is not None:
                self.delivered.append(delivered)
        rec["sent"] = self._send_all(out)
        rec["state"] = state_json(self.state)
        self._write(rec)

    def serve(self) -> "LiveProcess":
        ep = self.ep
        started = last_rx = time.monotonic()
        next_tick = started
        try:
            while not self.done:
                now = time.monotonic()
                if now - started > ep.max_seconds:
                    log.warning("%s stopped after %.0fs", ep.role, ep.max_seconds)
                    break
                if ep.role == "receiver" and now - last_rx > ep.idle_timeout:
                    break
                if now >= next_tick:
                    self.on_tick()
                    next_tick = max(next_tick + ep.tick, now)
                    continue
                self.sock.settimeout(max(next_tick - now, 1e-4))
                try:
                    data, _ = self.sock.recvfrom(65535)
                except socket.timeout:
                    continue
                last_rx = time.monotonic()
                self.on_datagram(data)
        finally:
            self.close()
        return self


def start_configuration(params: CodecParams, variant: Variant, mode: str = "clean", seed: int = 0) -> Configuration:
    if mode == "clean":
        return safe_configuration(0, params, variant=variant)
    if mode == "arbitrary":
        cfg = arbitrary_configuration(seed, params, variant)
        # channel debris lives in the proxy, not in the endpoints
        return Configuration(cfg.sender, cfg.receiver, (), (), variant)
    raise ValueError(f"unknown start mode {mode!r}")


def run_sender(ep: Endpoint, batches=None, count: Optional[int] = None, start: str = "clean") -> LiveProcess:
    cfg = start_configuration(ep.params, ep.variant, start, ep.seed)
    source = ScriptedSource(batches) if batches is not None else SeededSource(ep.params.ml, ep.seed, count)
    return LiveProcess(ep, cfg, source).serve()


def run_receiver(ep: Endpoint, start: str = "clean") -> LiveProcess:
    cfg = start_configuration(ep.params, ep.variant, start, ep.seed)
    return LiveProcess(ep, cfg).serve()


# --------------------------------------------------------------------------
# impairment proxy


class Proxy:
    """Two-port UDP relay whose per-direction buffer is a :class:`Channel`.

    Datagrams arriving on ``sender_side`` are forwarded to ``receiver``, and
    those arriving on ``receiver_side`` to ``sender``.  Each direction holds at
    most ``capacity`` datagrams; every ``deliver_period`` seconds one randomly
    chosen datagram per direction is forwarded (possibly duplicated).
    """

    def __init__(self, sender_side: tuple, receiver_side: tuple, sender: tuple, receiver: tuple,
                 capacity: int, policy: AdversaryPolicy = AdversaryPolicy(), deliver_period: float = 0.0005):
        rng = random.Random(policy.seed)
        self.a = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.b = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.a.bind(sender_side)
        self.b.bind(receiver_side)
        self.a.setblocking(False)
        self.b.setblocking(False)
        self.sender, self.receiver = sender, receiver
        self.sr = Channel(capacity, policy, rng=random.Random(rng.random()))
        self.rs = Channel(capacity, policy, rng=random.Random(rng.random()))
        self.deliver_period = deliver_period
        self.forwarded = 0

    def pump_once(self):
        for sock, chan in ((self.a, self.sr), (self.b, self.rs)):
            while True:
                try:
                    data, _ = sock.recvfrom(65535)
                except (BlockingIOError, InterruptedError):
                    break
                chan.send(data)
        for chan, sock, dest in ((self.sr, self.b, self.receiver), (self.rs, self.a, self.sender)):
            data = chan.deliver()
            if data is not None:
                sock.sendto(data, dest)
                self.forwarded += 1

    def serve(self, seconds: float):
        end = time.monotonic() + seconds
        try:
            while time.monotonic() < end:
                self.pump_once()
                time.sleep(self.deliver_period)
        finally:
            self.a.close()
            self.b.close()


# --------------------------------------------------------------------------
# replay


def load_log(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def replay_log(records: Iterable[dict]) -> list[str]:
    """Re-run a live process's logged inputs through the step functions.

    Returns a list of mismatches (empty when every logged state and every
    emitted datagram set is reproduced exactly).
    """
    records = list(records)
    head = records[0]
    if head.get("ev") != "init":
        return ["log does not start with an init record"]
    params = CodecParams(head["pl"], head["ml"], head["capacity"])
    v = VARIANTS[head["variant"]]
    role = head["role"]
    state = _state_from_json(head["state"], role, v)
    width = params.pl if v is EFFICIENT else params.ml
    problems = []
    for i, rec in enumerate(records[1:], start=1):
        sent: list = []
        if rec["ev"] == "recv":
            item = deserialize(bytes.fromhex(rec["data"]), width)
            if role == "sender":
                if isinstance(item, AckPacket):
                    state = v.sender_on_ack(state, item, params)
            elif isinstance(item, Packet):
                state, sent = v.receiver_on_packet(state, item, params)
        elif rec["ev"] == "tick":
            if role == "sender":
                if rec.get("end_of_input"):
                    def fetch(count):
                        raise EndOfInput
                else:
                    batch = rec.get("fetched")

                    def fetch(count, batch=batch):
                        if batch is None:
                            raise RuntimeError("replay fetched where the live run did not")
                        return tuple(tuple(m) for m in batch)
                try:
                    state, sent = v.sender_tick(state, params, fetch)
                except EndOfInput:
                    pass
                except RuntimeError as e:
                    problems.append(f"record {i}: {e}")
            else:
                state, sent, delivered = v.receiver_tick(state, params)
                logged = rec.get("delivered")
                if (None if delivered is None else [list(m) for m in delivered]) != logged:
                    problems.append(f"record {i}: delivered {delivered} vs logged {logged}")
        else:
            problems.append(f"record {i}: unknown event {rec['ev']!r}")
            continue
        if sorted(serialize(x).hex() for x in sent) != sorted(rec["sent"]):
            problems.append(f"record {i}: emitted datagrams differ")
        if state_json(state) != rec["state"]:
            problems.append(f"record {i}: state differs")
    return problems


def _state_from_json(d: dict, role: str, v: Variant):
    if role == "receiver":
        return v.initial_receiver(d["last_delivered_index"],
                                  frozenset(Packet(a, l, tuple(x)) for a, l, x in d["packet_set"]))
    acks = frozenset(AckPacket(a, l) for a, l in d["ack_set"])
    if "messages" in d:
        msgs = d["messages"]
        return v.initial_sender(d["alt_index"], acks, None if msgs is None else tuple(tuple(c) for c in msgs))
    msg = d["message"]
    return v.initial_sender(d["alt_index"], acks, None if msg is None else tuple(msg))


# --------------------------------------------------------------------------
# local sessions (demo and tests)


def free_udp_port(host: str = "127.0.0.1") -> int:
    s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    s.bind((host, 0))
    port = s.getsockname()[1]
    s.close()
    return port


@dataclass
class SessionResult:
    delivered: list
    sent_batches: list
    sender_log: str
    receiver_log: str
    sender_ok: bool


def local_session(workdir, params: CodecParams, batches: list, policy: AdversaryPolicy = AdversaryPolicy(),
                  tick_ms: float = 5.0, variant: str = "efficient", seed: int = 0,
                  timeout: float = 120.0) -> SessionResult:
    """Run proxy, receiver and sender as three OS processes on localhost.

    ``batches`` are served by the sender in order; the result holds what the
    receiver delivered plus the two event logs.
    """
    import os
    import subprocess
    import sys

    host = "127.0.0.1"
    ps, pa, pb, pr = (free_udp_port(host) for _ in range(4))
    msgs = os.path.join(workdir, "messages.json")
    with open(msgs, "w") as fh:
        json.dump(batches, fh)
    slog, rlog = os.path.join(workdir, "sender.jsonl"), os.path.join(workdir, "receiver.jsonl")
    out = os.path.join(workdir, "delivered.json")
    py = [sys.executable, "-m", "s2arq"]
    common = ["--pl", str(params.pl), "--ml", str(params.ml), "--capacity", str(params.capacity),
              "--variant", variant, "--tick-ms", str(tick_ms), "--seed", str(seed)]
    proxy = subprocess.Popen(py + [
        "proxy", "--sender-side", f"{host}:{pa}", "--receiver-side", f"{host}:{pb}",
        "--sender", f"{host}:{ps}", "--receiver", f"{host}:{pr}",
        "--capacity", str(max(params.capacity, 1)), "--seconds", str(timeout), "--seed", str(seed),
        "--omission", str(policy.omission), "--duplication", str(policy.duplication),
        "--drop-on-full", policy.drop_on_full])
    receiver = subprocess.Popen(py + ["receive", "--bind", f"{host}:{pr}", "--peer", f"{host}:{pb}",
                                      "--log", rlog, "--deliveries-out", out, "--idle", "1.0",
                                      "--max-seconds", str(timeout)] + common,
                                stdout=subprocess.DEVNULL)
    time.sleep(0.3)
    try:
        sender = subprocess.run(py + ["send", "--bind", f"{host}:{ps}", "--peer", f"{host}:{pa}",
                                      "--messages", msgs, "--log", slog,
                                      "--max-seconds", str(timeout)] + common, timeout=timeout + 10)
        receiver.wait(timeout=timeout + 10)
    finally:
        for p in (receiver, proxy):
            if p.poll() is None:
                p.kill()
                p.wait()
    with open(out) as fh:
        delivered = json.load(fh)
    return SessionResult(delivered, batches, slog, rlog, sender.returncode == 0)
