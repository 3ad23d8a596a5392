"""Merkle prefix tree over 256-bit indexes with per-insert update proofs.

Leaves hold append-only event lists and sit at the depth of the first
bit that distinguishes their index from every other stored index. The
hash rules are fixed by the protocol:

* empty tree root: 32 zero bytes,
* leaf hash: fold ``c = H(c || seq_be8 || event_hash)`` starting from
  ``c = H(0x00 || full_index)``, so appending is O(1),
* interior hash: ``H(0x01 || left || right)`` with 32 zero bytes for an
  absent child.

Every mutation returns an ``UpdateProof``: the authentication path of
the touched leaf before and after the append. A verifier holding only
the previous root can replay it and learn the next root, which is what
lets an auditor with constant state follow the whole ledger.

Nodes are immutable, so ``snapshot()`` is one reference copy and
readers are never blocked by writers; callers must serialize writes.
The node layout is deliberately primitive (lists and tuples, digest
always at slot 0) because insertion is the hottest path in the system;
the public proof types wrap it in something typed.

    interior = [digest, child_bit0, child_bit1]
    leaf     = (digest, full_index, entries)   # digest == cumulative hash
"""
from __future__ import annotations

import hashlib
import struct
from typing import Iterator, NamedTuple, Union

from .encoding import (
    DecodeError,
    Reader,
    TAG_PROOF,
    TAG_UPDATE_PROOF,
    Writer,
)

_sha = hashlib.sha256
_U64 = struct.Struct(">Q")

INDEX_SIZE = 32
ZERO_DIGEST = bytes(32)
LEAF_PREFIX = b"\x00"
INTERIOR_PREFIX = b"\x01"

Entry = tuple[int, bytes, bytes]  # (seq, event_hash, event_bytes)


class NonMonotonicTimestamp(ValueError):
    """An append would not increase the leaf's last sequence number."""


def _bit_at(index: bytes, depth: int) -> int:
    return (index[depth >> 3] >> (7 - (depth & 7))) & 1


def _bits_equal(a: bytes, b: bytes, count: int) -> bool:
    """First ``count`` bits of two indexes agree."""
    whole = count >> 3
    if a[:whole] != b[:whole]:
        return False
    rest = count & 7
    if rest:
        mask = (0xFF << (8 - rest)) & 0xFF
        return (a[whole] ^ b[whole]) & mask == 0
    return True


def leaf_base_hash(full_index: bytes) -> bytes:
    return _sha(LEAF_PREFIX + full_index).digest()


def leaf_extend_hash(cumulative: bytes, seq: int, event_hash: bytes) -> bytes:
    return _sha(cumulative + _U64.pack(seq) + event_hash).digest()


def interior_hash(left: bytes, right: bytes) -> bytes:
    return _sha(INTERIOR_PREFIX + left + right).digest()


# ---------------------------------------------------------------------------
# proofs

class PresentLeaf(NamedTuple):
    full_index: bytes
    entries: tuple[tuple[int, bytes], ...]  # (seq, event_hash), bodies travel separately


class AbsentBranch(NamedTuple):
    depth: int


class MismatchedLeaf(NamedTuple):
    full_index: bytes
    leaf_hash: bytes


Terminal = Union[PresentLeaf, AbsentBranch, MismatchedLeaf]

_TERMINAL_PRESENT = 0
_TERMINAL_NO_BRANCH = 1
_TERMINAL_MISMATCH = 2


class Proof(NamedTuple):
    """Authentication path for one index against one root.

    ``siblings`` holds the digest of the branch not taken at each depth
    from the root down; position in the tuple is the depth. A presence
    proof ends in the leaf's full index and entry list, an absence proof
    either in the depth where the path stops or in the other leaf that
    occupies the queried prefix.
    """

    index: bytes
    siblings: tuple[bytes, ...]
    terminal: Terminal

    @property
    def present(self) -> bool:
        return type(self.terminal) is PresentLeaf

    def to_bytes(self) -> bytes:
        sib_parts = []
        for depth, digest in enumerate(self.siblings):
            sib_parts.append(bytes([depth]) + digest)
        w = Writer(TAG_PROOF).raw(self.index).raw(b"".join(sib_parts))
        t = self.terminal
        if type(t) is PresentLeaf:
            body = t.full_index + b"".join(_U64.pack(s) + h for s, h in t.entries)
            w.uint(_TERMINAL_PRESENT).raw(body)
        elif type(t) is AbsentBranch:
            w.uint(_TERMINAL_NO_BRANCH).raw(_U64.pack(t.depth))
        else:
            w.uint(_TERMINAL_MISMATCH).raw(t.full_index + t.leaf_hash)
        return w.finish()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Proof":
        r = Reader(data, TAG_PROOF)
        index = r.raw()
        if len(index) != INDEX_SIZE:
            raise DecodeError("proof index must be 32 bytes")
        sib_body = r.raw()
        if len(sib_body) % 33:
            raise DecodeError("malformed sibling list")
        siblings = []
        for pos in range(0, len(sib_body), 33):
            depth = sib_body[pos]
            if depth != pos // 33:
                raise DecodeError("sibling depths must be consecutive from the root")
            siblings.append(sib_body[pos + 1 : pos + 33])
        kind = r.uint()
        body = r.raw()
        terminal: Terminal
        if kind == _TERMINAL_PRESENT:
            if len(body) < INDEX_SIZE or (len(body) - INDEX_SIZE) % 40:
                raise DecodeError("malformed presence terminal")
            full_index = body[:INDEX_SIZE]
            entries = []
            for pos in range(INDEX_SIZE, len(body), 40):
                entries.append((_U64.unpack_from(body, pos)[0], body[pos + 8 : pos + 40]))
            terminal = PresentLeaf(full_index, tuple(entries))
        elif kind == _TERMINAL_NO_BRANCH:
            if len(body) != 8:
                raise DecodeError("malformed absence terminal")
            terminal = AbsentBranch(_U64.unpack(body)[0])
        elif kind == _TERMINAL_MISMATCH:
            if len(body) != 2 * INDEX_SIZE:
                raise DecodeError("malformed mismatched-leaf terminal")
            terminal = MismatchedLeaf(body[:INDEX_SIZE], body[INDEX_SIZE:])
        else:
            raise DecodeError(f"unknown terminal kind {kind}")
        r.end()
        return cls(index, tuple(siblings), terminal)


class UpdateProof(NamedTuple):
    """One accepted event: the leaf path before, the appended entry,
    and the leaf path after. Chains two consecutive roots."""

    before: Proof
    seq: int
    event_hash: bytes
    after: Proof

    def to_bytes(self) -> bytes:
        return (
            Writer(TAG_UPDATE_PROOF)
            .raw(self.before.to_bytes())
            .uint(self.seq)
            .raw(self.event_hash)
            .raw(self.after.to_bytes())
            .finish()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "UpdateProof":
        r = Reader(data, TAG_UPDATE_PROOF)
        before = Proof.from_bytes(r.raw())
        seq = r.uint()
        event_hash = r.raw()
        if len(event_hash) != 32:
            raise DecodeError("event hash must be 32 bytes")
        after = Proof.from_bytes(r.raw())
        r.end()
        return cls(before, seq, event_hash, after)


def proof_implied_root(proof: Proof) -> bytes | None:
    """Root this proof commits to, or None if internally inconsistent."""
    index = proof.index
    if len(index) != INDEX_SIZE:
        return None
    siblings = proof.siblings
    depth = len(siblings)
    if depth > 256:
        return None
    t = proof.terminal
    if type(t) is PresentLeaf:
        if t.full_index != index or not t.entries:
            return None
        if not _bits_equal(t.full_index, index, depth):
            return None
        node_hash = leaf_base_hash(t.full_index)
        last_seq = -1
        for seq, event_hash in t.entries:
            if seq <= last_seq or len(event_hash) != 32:
                return None
            node_hash = leaf_extend_hash(node_hash, seq, event_hash)
            last_seq = seq
    elif type(t) is AbsentBranch:
        if t.depth != depth:
            return None
        node_hash = ZERO_DIGEST
    elif type(t) is MismatchedLeaf:
        if t.full_index == index or len(t.full_index) != INDEX_SIZE:
            return None
        if not _bits_equal(t.full_index, index, depth):
            return None
        if len(t.leaf_hash) != 32:
            return None
        node_hash = t.leaf_hash
    else:
        return None
    for level in range(depth - 1, -1, -1):
        sibling = siblings[level]
        if len(sibling) != 32:
            return None
        if _bit_at(index, level):
            node_hash = interior_hash(sibling, node_hash)
        else:
            node_hash = interior_hash(node_hash, sibling)
    return node_hash


def verify_proof(proof: Proof, root: bytes) -> bool:
    implied = proof_implied_root(proof)
    return implied is not None and implied == root


def verify_update(update: UpdateProof, root_before: bytes, root_after: bytes) -> bool:
    """Check that the update is the only change between the two roots.

    Beyond verifying both paths, the sibling lists must agree (extended
    only by the zero-filled split levels when the insert divided an
    occupied prefix). Without that rule a malicious server could hide a
    second mutation in the parts of the tree the paths do not cover.
    """
    before, after = update.before, update.after
    if before.index != after.index:
        return False
    if type(after.terminal) is not PresentLeaf:
        return False
    if not verify_proof(before, root_before) or not verify_proof(after, root_after):
        return False
    appended = (update.seq, update.event_hash)
    t_before, t_after = before.terminal, after.terminal
    if type(t_before) is PresentLeaf:
        if after.siblings != before.siblings:
            return False
        if t_after.entries != t_before.entries + (appended,):
            return False
        if update.seq <= t_before.entries[-1][0]:
            return False
    elif type(t_before) is AbsentBranch:
        if after.siblings != before.siblings:
            return False
        if t_after.entries != (appended,):
            return False
    elif type(t_before) is MismatchedLeaf:
        shared = len(before.siblings)
        if t_after.entries != (appended,):
            return False
        if len(after.siblings) <= shared:
            return False
        if after.siblings[:shared] != before.siblings:
            return False
        extension = after.siblings[shared:]
        split_depth = len(after.siblings) - 1
        if any(d != ZERO_DIGEST for d in extension[:-1]):
            return False
        if extension[-1] != t_before.leaf_hash:
            return False
        other = t_before.full_index
        if not _bits_equal(other, after.index, split_depth):
            return False
        if _bit_at(other, split_depth) == _bit_at(after.index, split_depth):
            return False
    else:
        return False
    return True


# ---------------------------------------------------------------------------
# the tree


def _collect_pairs(entries: tuple[Entry, ...]) -> tuple[tuple[int, bytes], ...]:
    return tuple((seq, ehash) for seq, ehash, _ in entries)


def _lookup(root, index: bytes) -> Proof:
    siblings: list[bytes] = []
    node = root
    depth = 0
    while type(node) is list:
        bit = _bit_at(index, depth)
        sibling = node[2 - bit]
        siblings.append(sibling[0] if sibling is not None else ZERO_DIGEST)
        node = node[1 + bit]
        depth += 1
    if node is None:
        terminal: Terminal = AbsentBranch(depth)
    elif node[1] == index:
        terminal = PresentLeaf(index, _collect_pairs(node[2]))
    else:
        terminal = MismatchedLeaf(node[1], node[0])
    return Proof(index, tuple(siblings), terminal)


def _entries(root, index: bytes) -> tuple[Entry, ...]:
    node = root
    depth = 0
    while type(node) is list:
        node = node[1 + _bit_at(index, depth)]
        depth += 1
    if node is not None and node[1] == index:
        return node[2]
    return ()


class TreeSnapshot:
    """Frozen view of the tree at some root. Cheap to take, safe to
    read from any thread while the live tree moves on."""

    __slots__ = ("_root",)

    def __init__(self, root):
        self._root = root

    @property
    def root(self) -> bytes:
        return self._root[0] if self._root is not None else ZERO_DIGEST

    def lookup(self, index: bytes) -> Proof:
        return _lookup(self._root, index)

    def entries(self, index: bytes) -> tuple[Entry, ...]:
        return _entries(self._root, index)


class PrefixTree:
    """Mutable handle over immutable nodes.

    ``insert`` is written for throughput: one descent collects the
    path, the rebuild climbs back up reusing the collected siblings,
    and the pre/post proofs share every object they can.
    """

    __slots__ = ("_root", "leaf_count", "entry_count")

    def __init__(self):
        self._root = None
        self.leaf_count = 0
        self.entry_count = 0

    @property
    def root(self) -> bytes:
        return self._root[0] if self._root is not None else ZERO_DIGEST

    def snapshot(self) -> TreeSnapshot:
        return TreeSnapshot(self._root)

    def lookup(self, index: bytes) -> Proof:
        return _lookup(self._root, index)

    def entries(self, index: bytes) -> tuple[Entry, ...]:
        return _entries(self._root, index)

    def insert(self, index: bytes, seq: int, event_hash: bytes, event_bytes: bytes = b"") -> UpdateProof:
        if len(index) != INDEX_SIZE:
            raise ValueError("index must be 32 bytes")
        sha = _sha
        bits: list[int] = []
        sib_nodes: list = []
        push_bit = bits.append
        push_sib = sib_nodes.append
        node = self._root
        depth = 0
        while type(node) is list:
            bit = (index[depth >> 3] >> (7 - (depth & 7))) & 1
            push_bit(bit)
            push_sib(node[2 - bit])
            node = node[1 + bit]
            depth += 1

        seq_bytes = _U64.pack(seq)
        extension: tuple[bytes, ...] = ()
        if node is None:
            before_terminal: Terminal = AbsentBranch(depth)
            cumulative = sha(sha(LEAF_PREFIX + index).digest() + seq_bytes + event_hash).digest()
            new_node = (cumulative, index, ((seq, event_hash, event_bytes),))
            after_entries = ((seq, event_hash),)
            self.leaf_count += 1
        elif node[1] == index:
            old_entries = node[2]
            if seq <= old_entries[-1][0]:
                raise NonMonotonicTimestamp(
                    f"sequence {seq} does not advance leaf at {index.hex()[:16]}"
                )
            before_pairs = _collect_pairs(old_entries)
            before_terminal = PresentLeaf(index, before_pairs)
            cumulative = sha(node[0] + seq_bytes + event_hash).digest()
            new_node = (cumulative, index, old_entries + ((seq, event_hash, event_bytes),))
            after_entries = before_pairs + ((seq, event_hash),)
        else:
            other = node
            other_index = other[1]
            before_terminal = MismatchedLeaf(other_index, other[0])
            byte_pos = depth >> 3
            while index[byte_pos] == other_index[byte_pos]:
                byte_pos += 1
            split = (byte_pos << 3) + 7 - ((index[byte_pos] ^ other_index[byte_pos]).bit_length() - 1)
            cumulative = sha(sha(LEAF_PREFIX + index).digest() + seq_bytes + event_hash).digest()
            fresh_leaf = (cumulative, index, ((seq, event_hash, event_bytes),))
            if (index[split >> 3] >> (7 - (split & 7))) & 1:
                new_node = [sha(INTERIOR_PREFIX + other[0] + cumulative).digest(), other, fresh_leaf]
            else:
                new_node = [sha(INTERIOR_PREFIX + cumulative + other[0]).digest(), fresh_leaf, other]
            level = split - 1
            while level >= depth:
                if (index[level >> 3] >> (7 - (level & 7))) & 1:
                    new_node = [sha(INTERIOR_PREFIX + ZERO_DIGEST + new_node[0]).digest(), None, new_node]
                else:
                    new_node = [sha(INTERIOR_PREFIX + new_node[0] + ZERO_DIGEST).digest(), new_node, None]
                level -= 1
            extension = (ZERO_DIGEST,) * (split - depth) + (other[0],)
            after_entries = ((seq, event_hash),)
            self.leaf_count += 1

        sib_digests: list[bytes] = []
        push_digest = sib_digests.append
        level = depth - 1
        while level >= 0:
            sibling = sib_nodes[level]
            digest = sibling[0] if sibling is not None else ZERO_DIGEST
            push_digest(digest)
            if bits[level]:
                new_node = [sha(INTERIOR_PREFIX + digest + new_node[0]).digest(), sibling, new_node]
            else:
                new_node = [sha(INTERIOR_PREFIX + new_node[0] + digest).digest(), new_node, sibling]
            level -= 1
        sib_digests.reverse()

        self._root = new_node
        self.entry_count += 1
        shared = tuple(sib_digests)
        before = Proof(index, shared, before_terminal)
        after = Proof(index, shared + extension if extension else shared, PresentLeaf(index, after_entries))
        return UpdateProof(before, seq, event_hash, after)

    def iter_leaf_depths(self) -> Iterator[int]:
        if self._root is None:
            return
        stack = [(self._root, 0)]
        while stack:
            node, depth = stack.pop()
            if type(node) is list:
                if node[1] is not None:
                    stack.append((node[1], depth + 1))
                if node[2] is not None:
                    stack.append((node[2], depth + 1))
            else:
                yield depth
