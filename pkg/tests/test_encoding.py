"""Canonical encoding against independently packed golden bytes."""
from __future__ import annotations

import struct

import pytest
from hypothesis import given, strategies as st

from revledger.encoding import (
    DecodeError,
    MAX_FIELD_SIZE,
    Reader,
    Writer,
    append_field,
    decode_uint,
    encode_uint,
    peek_tag,
)


def _field(body: bytes) -> bytes:
    return struct.pack(">I", len(body)) + body


def test_uint_codec():
    assert encode_uint(0) == b"\x00" * 8
    assert encode_uint(5) == struct.pack(">Q", 5)
    assert decode_uint(struct.pack(">Q", 2**64 - 1)) == 2**64 - 1
    with pytest.raises(ValueError):
        encode_uint(-1)
    with pytest.raises(DecodeError):
        decode_uint(b"\x00" * 7)


def test_writer_golden_bytes():
    got = Writer(0x7A).raw(b"ab").uint(5).text("hi").finish()
    expected = (
        bytes([0x7A])
        + _field(b"ab")
        + _field(struct.pack(">Q", 5))
        + _field(b"hi")
    )
    assert got == expected


def test_optional_golden_bytes():
    assert Writer(0x01).opt(None).finish() == bytes([0x01]) + _field(b"\x00")
    assert Writer(0x01).opt(b"xy").finish() == bytes([0x01]) + _field(b"\x01xy")
    # Present but empty is distinct from absent.
    assert Writer(0x01).opt(b"").finish() == bytes([0x01]) + _field(b"\x01")


def test_sequence_golden_bytes():
    got = Writer(0x02).seq([b"a", b"bc"]).finish()
    body = struct.pack(">Q", 2) + _field(b"a") + _field(b"bc")
    assert got == bytes([0x02]) + _field(body)
    assert Writer(0x02).seq([]).finish() == bytes([0x02]) + _field(struct.pack(">Q", 0))


def test_reader_walks_fields_in_order():
    data = Writer(0x30).uint(7).text("name").opt(None).seq([b"x"]).raw(b"tail").finish()
    r = Reader(data, 0x30)
    assert r.uint() == 7
    assert r.text() == "name"
    assert r.opt() is None
    assert r.seq() == [b"x"]
    assert r.raw() == b"tail"
    r.end()


def test_reader_rejects_wrong_tag_and_empty():
    data = Writer(0x10).raw(b"x").finish()
    with pytest.raises(DecodeError):
        Reader(data, 0x11)
    with pytest.raises(DecodeError):
        Reader(b"")
    with pytest.raises(DecodeError):
        peek_tag(b"")
    assert peek_tag(data) == 0x10


def test_reader_rejects_truncation_and_trailing():
    data = Writer(0x10).raw(b"abcd").finish()
    with pytest.raises(DecodeError):
        Reader(data[:3], 0x10).raw()  # header cut short
    with pytest.raises(DecodeError):
        Reader(data[:-1], 0x10).raw()  # body cut short
    r = Reader(data + b"!", 0x10)
    r.raw()
    with pytest.raises(DecodeError):
        r.end()


def test_reader_rejects_oversized_field_header():
    data = bytes([0x10]) + struct.pack(">I", MAX_FIELD_SIZE + 1)
    with pytest.raises(DecodeError):
        Reader(data, 0x10).raw()


def test_reader_rejects_bad_optionals():
    with pytest.raises(DecodeError):
        Reader(bytes([0x01]) + _field(b""), 0x01).opt()  # no presence byte
    with pytest.raises(DecodeError):
        Reader(bytes([0x01]) + _field(b"\x00junk"), 0x01).opt()
    with pytest.raises(DecodeError):
        Reader(bytes([0x01]) + _field(b"\x02"), 0x01).opt()


def test_reader_rejects_bad_sequences():
    short = struct.pack(">Q", 2) + _field(b"a")  # promises two items
    with pytest.raises(DecodeError):
        Reader(bytes([0x02]) + _field(short), 0x02).seq()
    trailing = struct.pack(">Q", 1) + _field(b"a") + b"rest"
    with pytest.raises(DecodeError):
        Reader(bytes([0x02]) + _field(trailing), 0x02).seq()
    with pytest.raises(DecodeError):
        Reader(bytes([0x02]) + _field(b"\x00" * 4), 0x02).seq()  # header short


def test_reader_rejects_invalid_utf8():
    data = Writer(0x10).raw(b"\xff\xfe").finish()
    with pytest.raises(DecodeError):
        Reader(data, 0x10).text()


def test_append_field_matches_writer():
    payload = Writer(0x10).raw(b"body").finish()
    sig = b"\x55" * 64
    assert append_field(payload, sig) == payload + _field(sig)
    r = Reader(append_field(payload, sig), 0x10)
    assert r.raw() == b"body"
    assert r.raw() == sig
    r.end()


_FIELDS = st.lists(
    st.one_of(
        st.tuples(st.just("raw"), st.binary(max_size=64)),
        st.tuples(st.just("uint"), st.integers(min_value=0, max_value=2**64 - 1)),
        st.tuples(st.just("text"), st.text(max_size=32)),
        st.tuples(st.just("opt"), st.none() | st.binary(max_size=32)),
        st.tuples(st.just("seq"), st.lists(st.binary(max_size=16), max_size=6)),
    ),
    max_size=6,
)


@given(tag=st.integers(min_value=0, max_value=255), fields=_FIELDS)
def test_write_read_round_trip(tag, fields):
    w = Writer(tag)
    for kind, value in fields:
        getattr(w, kind)(value)
    r = Reader(w.finish(), tag)
    for kind, value in fields:
        got = getattr(r, kind)()
        if kind == "seq":
            assert got == list(value)
        else:
            assert got == value
    r.end()
