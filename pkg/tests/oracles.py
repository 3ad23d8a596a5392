"""Independent recomputations the tests use as oracles.

Nothing in here touches tree or ledger internals: roots are rebuilt
from first principles with hashlib, so agreement with the package is
evidence rather than tautology.
"""
from __future__ import annotations

import hashlib
import struct

_U64 = struct.Struct(">Q")

Leaves = dict[bytes, list[tuple[int, bytes]]]


def naive_leaf_hash(full_index: bytes, entries) -> bytes:
    """Fold H(0x00 || index), then absorb each (seq, event_hash) pair."""
    h = hashlib.sha256(b"\x00" + full_index).digest()
    for seq, event_hash in entries:
        h = hashlib.sha256(h + _U64.pack(seq) + event_hash).digest()
    return h


def _bit(index: bytes, depth: int) -> int:
    return (index[depth // 8] >> (7 - depth % 8)) & 1


def naive_root(leaves: Leaves) -> bytes:
    """Rebuild the root from a plain mapping by recursion.

    A subtree holding one index is that index's leaf wherever the
    recursion currently is, an empty subtree is 32 zero bytes, anything
    bigger is an interior node splitting on the current bit.
    """

    def subtree(items, depth):
        if not items:
            return bytes(32)
        if len(items) == 1:
            index, entries = items[0]
            return naive_leaf_hash(index, entries)
        left = [(i, e) for i, e in items if not _bit(i, depth)]
        right = [(i, e) for i, e in items if _bit(i, depth)]
        return hashlib.sha256(
            b"\x01" + subtree(left, depth + 1) + subtree(right, depth + 1)
        ).digest()

    return subtree(sorted(leaves.items()), 0)


def naive_block_hash(prev_hash: bytes, root: bytes, latest_seq: int, timestamp: int) -> bytes:
    return hashlib.sha256(prev_hash + root + _U64.pack(latest_seq) + _U64.pack(timestamp)).digest()


def index_of(n: int) -> bytes:
    """A deterministic pseudo-random 32-byte index for test data."""
    return hashlib.sha256(b"index/" + str(n).encode()).digest()


def ehash_of(n: int) -> bytes:
    return hashlib.sha256(b"event/" + str(n).encode()).digest()
