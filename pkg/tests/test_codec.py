import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from s2arq.codec import (
    BCH,
    CodecError,
    CodecParams,
    PayloadColumn,
    bits_to_int,
    bitcode_decode,
    bitcode_encode,
    decode_batch,
    encode_batch,
    int_to_bits,
    transpose,
)


def bits(s):
    return tuple(int(c) for c in s)


# hand-computed values for the repetition code at capacity 1 (each bit tripled)

def test_repetition_encode_word():
    p = CodecParams(pl=1, ml=2, capacity=1)
    assert p.n == 6
    assert bitcode_encode(bits("01"), p) == bits("000111")


def test_repetition_decode_with_one_flip_per_block():
    p = CodecParams(pl=1, ml=2, capacity=1)
    assert bitcode_decode(bits("010111"), p) == bits("01")
    assert bitcode_decode(bits("000101"), p) == bits("01")


def test_transposed_columns_for_two_messages():
    p = CodecParams(pl=2, ml=2, capacity=1)
    cols = encode_batch([bits("01"), bits("10")], p)
    assert cols == [
        PayloadColumn(1, bits("01")),
        PayloadColumn(2, bits("01")),
        PayloadColumn(3, bits("01")),
        PayloadColumn(4, bits("10")),
        PayloadColumn(5, bits("10")),
        PayloadColumn(6, bits("10")),
    ]


def test_one_corrupt_column_costs_one_bit_per_message():
    p = CodecParams(pl=2, ml=2, capacity=1)
    cols = encode_batch([bits("01"), bits("10")], p)
    cols[4] = PayloadColumn(5, bits("01"))
    assert decode_batch(cols, p) == (bits("01"), bits("10"))


def test_capacity_zero_is_identity():
    p = CodecParams(pl=2, ml=3, capacity=0)
    assert p.n == 3
    cols = encode_batch([bits("101"), bits("011")], p)
    assert [c.data for c in cols] == [bits("10"), bits("01"), bits("11")]
    assert decode_batch(cols, p) == (bits("101"), bits("011"))


def test_transpose():
    assert transpose([bits("101"), bits("011")]) == (bits("10"), bits("01"), bits("11"))


@pytest.mark.parametrize("pl,ml,c", [(1, 1, 1), (2, 2, 1), (1, 2, 2)])
def test_exhaustive_small(pl, ml, c):
    p = CodecParams(pl, ml, c)
    words = list(itertools.product((0, 1), repeat=ml))
    payloads = list(itertools.product((0, 1), repeat=pl))
    for batch in itertools.product(words, repeat=pl):
        cols = encode_batch(batch, p)
        for bad in itertools.combinations(range(p.n), c):
            for vals in itertools.product(payloads, repeat=c):
                corrupted = list(cols)
                for i, v in zip(bad, vals):
                    corrupted[i] = PayloadColumn(i + 1, v)
                assert decode_batch(corrupted, p) == tuple(batch)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_roundtrip_with_column_order_and_corruption(data):
    pl = data.draw(st.integers(1, 4))
    ml = data.draw(st.integers(1, 5))
    c = data.draw(st.integers(0, 3))
    p = CodecParams(pl, ml, c)
    batch = [tuple(data.draw(st.lists(st.integers(0, 1), min_size=ml, max_size=ml))) for _ in range(pl)]
    cols = encode_batch(batch, p)
    for i in data.draw(st.lists(st.integers(0, p.n - 1), max_size=c, unique=True)):
        junk = tuple(data.draw(st.lists(st.integers(0, 1), min_size=pl, max_size=pl)))
        cols[i] = PayloadColumn(i + 1, junk)
    cols = data.draw(st.permutations(cols))
    assert decode_batch(cols, p) == tuple(batch)


def test_parameter_validation():
    with pytest.raises(CodecError):
        CodecParams(0, 2, 1)
    with pytest.raises(CodecError):
        CodecParams(2, 0, 1)
    with pytest.raises(CodecError):
        CodecParams(2, 2, -1)
    with pytest.raises(CodecError):
        CodecParams(2, True, 1)


def test_shape_errors():
    p = CodecParams(2, 2, 1)
    with pytest.raises(CodecError):
        encode_batch([bits("01")], p)
    with pytest.raises(CodecError):
        encode_batch([bits("01"), bits("1")], p)
    with pytest.raises(CodecError):
        encode_batch([bits("01"), (0, 2)], p)
    cols = encode_batch([bits("01"), bits("10")], p)
    with pytest.raises(CodecError):
        decode_batch(cols[:-1], p)
    with pytest.raises(CodecError):
        decode_batch(cols[:-1] + [cols[0]], p)
    with pytest.raises(CodecError):
        decode_batch(cols[:-1] + [PayloadColumn(7, bits("00"))], p)
    with pytest.raises(CodecError):
        decode_batch(cols[:-1] + [PayloadColumn(6, bits("0"))], p)


def test_int_bits_msb_first():
    assert int_to_bits(6, 4) == bits("0110")
    assert bits_to_int(bits("0110")) == 6
    assert all(bits_to_int(int_to_bits(v, 5)) == v for v in range(32))


@pytest.mark.parametrize("ml,t,n", [(2, 1, 5), (4, 1, 7), (8, 1, 12), (4, 2, 12)])
def test_bch_lengths(ml, t, n):
    # shortened BCH(7,4), BCH(15,11), BCH(15,7) codes
    assert BCH.encoded_length(ml, t) == n


def test_bch_corrects_every_single_column():
    p = CodecParams(2, 4, 1, BCH)
    for batch in itertools.product(itertools.product((0, 1), repeat=4), repeat=2):
        cols = encode_batch(batch, p)
        for i in range(p.n):
            for v in itertools.product((0, 1), repeat=2):
                c2 = list(cols)
                c2[i] = PayloadColumn(i + 1, v)
                assert decode_batch(c2, p) == tuple(batch)
