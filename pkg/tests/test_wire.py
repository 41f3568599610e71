import random

import pytest
from hypothesis import given, settings, strategies as st

from gbpchain.control.eid import format_eid, parse_eid
from gbpchain.control.wire import (BadVersion, MalformedFrame, MapReply, MapRequest, UnknownType, WireError,
                                   decode_message, encode_message)

u32 = st.integers(0, 2**32 - 1)
u64 = st.integers(0, 2**64 - 1)
requests = st.builds(MapRequest, u64, u32, u32, st.text(max_size=40), st.binary(min_size=64, max_size=64))
replies = st.builds(MapReply, u64, u32, u32, st.binary(max_size=300))


@given(st.one_of(requests, replies))
def test_round_trip(msg):
    assert decode_message(encode_message(msg)) == msg


def test_request_layout():
    frame = encode_message(MapRequest(0x0102030405060708, 0x0A010005, 0x0A020009, "orga.alice", bytes(range(64))))
    assert frame[:2] == b"\x01\x01"
    assert frame[2:10] == bytes.fromhex("0102030405060708")
    assert frame[10:14] == bytes([10, 1, 0, 5])
    assert frame[14:18] == bytes([10, 2, 0, 9])
    assert frame[18:20] == b"\x00\x0a"
    assert frame[20:30] == b"orga.alice"
    assert frame[30:] == bytes(range(64))


def test_unknown_type():
    frame = bytearray(encode_message(MapReply(1, 2, 3, b"x")))
    frame[1] = 7
    with pytest.raises(UnknownType):
        decode_message(bytes(frame))


def test_bad_version():
    frame = bytearray(encode_message(MapReply(1, 2, 3, b"x")))
    frame[0] = 2
    with pytest.raises(BadVersion):
        decode_message(bytes(frame))


@pytest.mark.parametrize("cut", [0, 1, 5, 19, -1])
def test_truncated(cut):
    frame = encode_message(MapRequest(1, 2, 3, "a.b", bytes(64)))
    with pytest.raises(WireError):
        decode_message(frame[:cut])


def test_trailing_bytes():
    with pytest.raises(MalformedFrame):
        decode_message(encode_message(MapReply(1, 2, 3, b"abc")) + b"\x00")


def test_bad_signature_length():
    with pytest.raises(MalformedFrame):
        encode_message(MapRequest(1, 2, 3, "a.b", b"short"))


def test_fuzz_never_crashes():
    rng = random.Random(11)
    valid = encode_message(MapRequest(9, 8, 7, "org.user", bytes(64)))
    for i in range(10_000):
        if i % 2:
            data = bytes(rng.getrandbits(8) for _ in range(rng.randrange(0, 120)))
        else:
            data = bytearray(valid)
            for _ in range(rng.randrange(1, 4)):
                data[rng.randrange(len(data))] = rng.getrandbits(8)
            data = bytes(data[:rng.randrange(len(data) + 1)])
        try:
            msg = decode_message(data)
        except WireError:
            continue
        assert encode_message(msg) == data


@settings(max_examples=300)
@given(st.binary(max_size=200))
def test_decode_total(data):
    try:
        decode_message(data)
    except WireError:
        pass


@given(st.integers(1, 2**32 - 1))
def test_eid_round_trip(value):
    assert parse_eid(format_eid(value)) == value


@pytest.mark.parametrize("text", ["0.0.0.0", "256.1.1.1", "a.b.c.d", ""])
def test_bad_eid(text):
    with pytest.raises(ValueError):
        parse_eid(text)
