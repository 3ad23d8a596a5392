"""Canonical binary encoding shared by everything the ledger stores,
hashes, signs or transmits.

The format is deliberately rigid so equal values always encode to equal
bytes and distinct values never collide:

* one type-tag byte,
* then each field in declaration order as a 4-byte big-endian length
  prefix followed by the field bytes.

Integers are unsigned 8-byte big-endian, strings UTF-8, nested values
their own complete encoding, sequences an 8-byte count followed by
length-prefixed items, optionals a presence byte. Because every hash
input starts with the type tag, different kinds of value can never be
confused for one another no matter where their digests end up.
"""
from __future__ import annotations

import struct

# Type tags. One registry so the domain separation stays auditable.
TAG_GROUP = 0x01
TAG_MEMBERSHIP_INDEX = 0x02
TAG_SUSPENSION_INDEX = 0x03

TAG_MEMBER_CERT = 0x10
TAG_MEMBER_REVOCATION = 0x11
TAG_CERT_REVOCATION = 0x12
TAG_PREIMAGE_REVOCATION = 0x13
TAG_SUSPEND = 0x14
TAG_RESUME = 0x15
TAG_HIER_CERT = 0x16
TAG_CHAIN = 0x17

TAG_PROOF = 0x20
TAG_UPDATE_PROOF = 0x21
TAG_BLOCK = 0x22
TAG_DELIVERY_RECEIPT = 0x23
TAG_REJECTION = 0x24
TAG_ENDORSEMENT = 0x25
TAG_CHECKPOINT = 0x26

TAG_REQ_SUBMIT = 0x30
TAG_REQ_QUERY = 0x31
TAG_REQ_FETCH_AUTH = 0x32
TAG_REQ_LATEST_BLOCK = 0x33
TAG_REQ_SUBSCRIBE_AUDIT = 0x34
TAG_REQ_AUDITOR_BLOCKS = 0x35

TAG_RESP_SUBMIT = 0x40
TAG_RESP_QUERY = 0x41
TAG_RESP_FETCH_AUTH = 0x42
TAG_RESP_LATEST_BLOCK = 0x43
TAG_RESP_SUBSCRIBE_AUDIT = 0x44
TAG_RESP_AUDITOR_BLOCKS = 0x45
TAG_RESP_ERROR = 0x4F

TAG_FEED_UPDATE = 0x50
TAG_FEED_ENTRY = 0x51
TAG_FEED_BLOCK = 0x52

_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")

UINT_SIZE = 8
MAX_FIELD_SIZE = 1 << 30


class DecodeError(ValueError):
    """Input bytes are not a well-formed canonical encoding."""


def encode_uint(value: int) -> bytes:
    if value < 0:
        raise ValueError("canonical integers are unsigned")
    return _U64.pack(value)


def decode_uint(data: bytes) -> int:
    if len(data) != UINT_SIZE:
        raise DecodeError(f"integer field must be {UINT_SIZE} bytes, got {len(data)}")
    return _U64.unpack(data)[0]


class Writer:
    """Accumulates one tagged value, field by field."""

    __slots__ = ("_parts",)

    def __init__(self, tag: int):
        self._parts: list[bytes] = [bytes([tag])]

    def raw(self, value: bytes) -> "Writer":
        """A bytes field (also used for nested encoded values)."""
        self._parts.append(_U32.pack(len(value)))
        self._parts.append(bytes(value))
        return self

    def uint(self, value: int) -> "Writer":
        return self.raw(encode_uint(value))

    def text(self, value: str) -> "Writer":
        return self.raw(value.encode("utf-8"))

    def opt(self, value: bytes | None) -> "Writer":
        if value is None:
            return self.raw(b"\x00")
        return self.raw(b"\x01" + bytes(value))

    def seq(self, items: list[bytes] | tuple[bytes, ...]) -> "Writer":
        body = [encode_uint(len(items))]
        for item in items:
            body.append(_U32.pack(len(item)))
            body.append(bytes(item))
        return self.raw(b"".join(body))

    def finish(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    """Walks one tagged value, field by field, validating as it goes."""

    __slots__ = ("_data", "_pos", "tag")

    def __init__(self, data: bytes, expect_tag: int | None = None):
        if not data:
            raise DecodeError("empty input")
        self.tag = data[0]
        if expect_tag is not None and self.tag != expect_tag:
            raise DecodeError(f"expected tag 0x{expect_tag:02x}, found 0x{self.tag:02x}")
        self._data = data
        self._pos = 1

    def raw(self) -> bytes:
        data, pos = self._data, self._pos
        if pos + 4 > len(data):
            raise DecodeError("truncated field header")
        (size,) = _U32.unpack_from(data, pos)
        if size > MAX_FIELD_SIZE:
            raise DecodeError(f"field size {size} exceeds limit")
        pos += 4
        if pos + size > len(data):
            raise DecodeError("truncated field body")
        self._pos = pos + size
        return data[pos : pos + size]

    def uint(self) -> int:
        return decode_uint(self.raw())

    def text(self) -> str:
        try:
            return self.raw().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError("field is not valid UTF-8") from exc

    def opt(self) -> bytes | None:
        body = self.raw()
        if not body:
            raise DecodeError("optional field missing presence byte")
        if body[0] == 0x00:
            if len(body) != 1:
                raise DecodeError("absent optional carries payload")
            return None
        if body[0] != 0x01:
            raise DecodeError("bad optional presence byte")
        return body[1:]

    def seq(self) -> list[bytes]:
        body = self.raw()
        if len(body) < UINT_SIZE:
            raise DecodeError("truncated sequence header")
        count = _U64.unpack_from(body, 0)[0]
        items: list[bytes] = []
        pos = UINT_SIZE
        for _ in range(count):
            if pos + 4 > len(body):
                raise DecodeError("truncated sequence item header")
            (size,) = _U32.unpack_from(body, pos)
            pos += 4
            if pos + size > len(body):
                raise DecodeError("truncated sequence item")
            items.append(body[pos : pos + size])
            pos += size
        if pos != len(body):
            raise DecodeError("trailing bytes in sequence")
        return items

    def end(self) -> None:
        if self._pos != len(self._data):
            raise DecodeError(f"{len(self._data) - self._pos} trailing bytes")


def append_field(encoded: bytes, field: bytes) -> bytes:
    """Extend an encoding with one more length-prefixed field.

    Lets a signature be attached to the exact bytes that were signed
    without re-serializing the earlier fields.
    """
    return encoded + _U32.pack(len(field)) + bytes(field)


def peek_tag(data: bytes) -> int:
    if not data:
        raise DecodeError("empty input")
    return data[0]
