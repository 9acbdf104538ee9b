"""Transpose error-correction codec.

A batch of ``pl`` messages of ``ml`` bits is viewed as a bit matrix with one
message per row.  Each row is encoded with a bit-level code into ``n`` bits and
the encoded matrix is sent column by column, so packet ``i`` carries bit ``i``
of every encoded message.  A wrong packet therefore costs at most one bit per
encoded message, and a code that corrects ``capacity`` bit errors recovers the
batch from any ``n`` distinctly labeled columns of which at most ``capacity``
are wrong.

Bit-vectors are tuples of 0/1 ints.  Bit ``j`` of a message is its ``j``-th
most significant bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Protocol, Sequence

Bits = tuple[int, ...]


class CodecError(ValueError):
    """Raised on parameter or shape violations."""


class BitCode(Protocol):
    """Contract for the per-message code: corrects ``t`` bit errors."""

    def encoded_length(self, ml: int, t: int) -> int: ...

    def encode(self, word: Bits, t: int) -> Bits: ...

    def decode(self, word: Bits, ml: int, t: int) -> Bits: ...


class RepetitionCode:
    """Each bit repeated ``2t+1`` times, decoded by per-block majority."""

    def encoded_length(self, ml: int, t: int) -> int:
        return ml * (2 * t + 1)

    def encode(self, word: Bits, t: int) -> Bits:
        r = 2 * t + 1
        return tuple(b for b in word for _ in range(r))

    def decode(self, word: Bits, ml: int, t: int) -> Bits:
        r = 2 * t + 1
        return tuple(
            1 if 2 * sum(word[k * r:(k + 1) * r]) > r else 0 for k in range(ml)
        )


REPETITION = RepetitionCode()


class BCHCode:
    """Shortened binary BCH code of designed distance ``2t+1`` (``galois`` backend).

    Much shorter than repetition for long messages: ``n`` grows like
    ``ml + t*log2(ml)`` instead of ``ml*(2t+1)``.  ``t = 0`` is the identity.
    """

    def __init__(self):
        self._codes: dict = {}

    def __getstate__(self):
        # galois code objects are rebuilt on demand rather than pickled
        return {}

    def __setstate__(self, state):
        self._codes = {}

    def _code(self, ml: int, t: int):
        key = (ml, t)
        if key not in self._codes:
            import galois  # slow import, only paid when this code is used

            m = 2
            while True:
                code = None
                if 2 ** m - 1 > 2 * t:
                    try:
                        code = galois.BCH(2 ** m - 1, d=2 * t + 1)
                    except ValueError:
                        pass
                if code is not None and code.k >= ml:
                    break
                m += 1
            self._codes[key] = (code, galois.GF2)
        return self._codes[key]

    def encoded_length(self, ml: int, t: int) -> int:
        if t == 0:
            return ml
        code, _ = self._code(ml, t)
        return code.n - (code.k - ml)

    def encode(self, word: Bits, t: int) -> Bits:
        if t == 0:
            return tuple(word)
        code, gf2 = self._code(len(word), t)
        return tuple(int(b) for b in code.encode(gf2(list(word))))

    def decode(self, word: Bits, ml: int, t: int) -> Bits:
        if t == 0:
            return tuple(word)
        code, gf2 = self._code(ml, t)
        return tuple(int(b) for b in code.decode(gf2(list(word))))


BCH = BCHCode()
CODES = {"repetition": REPETITION, "bch": BCH}


def code_name(code: BitCode) -> str:
    for name, c in CODES.items():
        if type(c) is type(code):
            return name
    return type(code).__name__


@dataclass(frozen=True)
class CodecParams:
    pl: int
    ml: int
    capacity: int
    code: BitCode = field(default=REPETITION, compare=False, repr=False)

    def __post_init__(self):
        for name in ("pl", "ml", "capacity"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool):
                raise CodecError(f"{name} must be an int, got {v!r}")
        if self.pl < 1:
            raise CodecError(f"pl must be >= 1, got {self.pl}")
        if self.ml < 1:
            raise CodecError(f"ml must be >= 1, got {self.ml}")
        if self.capacity < 0:
            raise CodecError(f"capacity must be >= 0, got {self.capacity}")
        n = self.n
        if self.capacity > 0 and not (n > self.ml and n > 2 * self.capacity):
            raise CodecError(
                f"code length n={n} must exceed ml={self.ml} and 2*capacity"
            )

    @property
    def n(self) -> int:
        """Bits per encoded message, which is also the number of packets per batch."""
        return self.code.encoded_length(self.ml, self.capacity)


class PayloadColumn(NamedTuple):
    label: int
    data: Bits


def _check_bits(word: Sequence[int], length: int, what: str) -> Bits:
    if len(word) != length:
        raise CodecError(f"{what} must have {length} bits, got {len(word)}")
    if any(b not in (0, 1) for b in word):
        raise CodecError(f"{what} must contain only 0/1 bits")
    return tuple(word)


def bitcode_encode(word: Sequence[int], params: CodecParams) -> Bits:
    word = _check_bits(word, params.ml, "word")
    return params.code.encode(word, params.capacity)


def bitcode_decode(word: Sequence[int], params: CodecParams) -> Bits:
    """Decode an ``n``-bit word; returns a best-effort value if it is too far from every codeword."""
    word = _check_bits(word, params.n, "codeword")
    return params.code.decode(word, params.ml, params.capacity)


def validate_batch(batch: Sequence[Sequence[int]], params: CodecParams) -> tuple[Bits, ...]:
    if len(batch) != params.pl:
        raise CodecError(f"batch must hold {params.pl} messages, got {len(batch)}")
    return tuple(_check_bits(m, params.ml, f"message {j}") for j, m in enumerate(batch))


def transpose(rows: Sequence[Bits]) -> tuple[Bits, ...]:
    return tuple(zip(*rows))


def encode_batch(batch: Sequence[Sequence[int]], params: CodecParams) -> list[PayloadColumn]:
    """Encode ``pl`` messages into ``n`` columns labeled ``1..n``."""
    rows = [bitcode_encode(m, params) for m in validate_batch(batch, params)]
    return [PayloadColumn(i + 1, col) for i, col in enumerate(transpose(rows))]


def decode_batch(columns: Sequence[PayloadColumn], params: CodecParams) -> tuple[Bits, ...]:
    n, pl = params.n, params.pl
    if len(columns) != n:
        raise CodecError(f"expected {n} columns, got {len(columns)}")
    by_label: dict[int, Bits] = {}
    for label, data in columns:
        if not 1 <= label <= n or label in by_label:
            raise CodecError(f"bad or repeated label {label!r}")
        by_label[label] = _check_bits(data, pl, f"column {label}")
    rows = transpose([by_label[i] for i in range(1, n + 1)])
    return tuple(bitcode_decode(row, params) for row in rows)


def int_to_bits(value: int, width: int) -> Bits:
    return tuple((value >> (width - 1 - k)) & 1 for k in range(width))


def bits_to_int(bits: Sequence[int]) -> int:
    v = 0
    for b in bits:
        v = (v << 1) | b
    return v
