"""The ledger service: an untrusted registrar that cannot lie quietly.

Everything the service hands out is designed to be evidence. A delivery
receipt is signed against the latest published block before the event
touches the tree, so silently dropping the event afterwards is provable
by whoever holds the receipt. Refusals are signed and, when the reason
is a blocking revocation, carry that revocation and its stored
authorization so the refused party can check the reason instead of
trusting it. Published blocks commit to the entire tree, so history
edits show up as root mismatches in the audit feed. The service's
honesty is therefore not assumed anywhere; it is checked by the clients
and auditors built on top of this module.

State is two append-only files, an event log and a block log. The
Merkle tree is an in-memory index over the event log and is rebuilt by
replaying it, which makes restarts bit-for-bit deterministic. Queries
are answered from the snapshot frozen at the last published block;
events accepted since then are pending and become visible at the next
block.

Blocks are cut every ``block_events`` acceptances or ``block_seconds``
seconds, whichever comes first, and the clock-driven cadence fires even
when nothing happened, so a receipt holder is never left waiting for
the block that would prove the ledger kept its promise. The block hash
chains the previous block hash, the tree root, the newest sequence
number, and the publication time, in that order, with no leading tag
byte; auditors and clients recompute exactly this.

The service is single-threaded by design. Sequence numbers, log
offsets, and tree roots all assume one writer, and the wire front end
feeds it from one loop.
"""
from __future__ import annotations

import os
import struct
import time
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

from .crypto import Digest, KeyPair, PublicKey, Signature, ZERO_DIGEST, sha256, verify
from .encoding import (
    DecodeError,
    Reader,
    TAG_BLOCK,
    TAG_DELIVERY_RECEIPT,
    TAG_FEED_BLOCK,
    TAG_FEED_ENTRY,
    TAG_FEED_UPDATE,
    TAG_REJECTION,
    TAG_RESP_FETCH_AUTH,
    Writer,
)
from .events import (
    CertRevocation,
    Event,
    GroupId,
    HierCertificate,
    MemberRevocation,
    PreimageRevocation,
    ResumeEvent,
    ROLE_LEADER,
    SuspendEvent,
    decode_chain,
    decode_event,
    encode_chain,
    event_index,
    suspension_index,
)
from .prefix_tree import PrefixTree, Proof, TreeSnapshot, UpdateProof
from .validation import ChainCheck, check_chain

_U64 = struct.Struct(">Q")
_U32 = struct.Struct(">I")

EVENT_LOG_NAME = "events.log"
BLOCK_LOG_NAME = "blocks.log"

# Refusal codes. Stable strings: they appear in signed rejections.
REJECT_MALFORMED = "malformed"
REJECT_BAD_SIGNATURE = "bad-signature"
REJECT_BAD_PREIMAGE = "bad-preimage"
REJECT_DUPLICATE = "duplicate-event"
REJECT_STALE = "stale-freshness"
REJECT_UNAUTHORIZED = "unauthorized"
REJECT_SUSPENDED = "group-suspended"

# Audit feed flavors.
FEED_STREAM = 0  # self-contained update proofs, for constant-state auditors
FEED_FULL = 1  # bare (seq, index, hash) triples, for replica auditors


class LedgerIntegrityError(RuntimeError):
    """The on-disk store contradicts itself; refusing to serve from it."""


# ---------------------------------------------------------------------------
# signed artifacts


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: Digest
    root: bytes
    latest_seq: int
    timestamp: int
    signature: Signature

    @cached_property
    def block_hash(self) -> Digest:
        return sha256(
            bytes(self.prev_hash)
            + self.root
            + _U64.pack(self.latest_seq)
            + _U64.pack(self.timestamp)
        )

    @classmethod
    def build(
        cls,
        key: KeyPair,
        height: int,
        prev_hash: Digest,
        root: bytes,
        latest_seq: int,
        timestamp: int,
    ) -> "Block":
        unsigned = cls(height, prev_hash, root, latest_seq, timestamp, None)  # type: ignore[arg-type]
        return cls(height, prev_hash, root, latest_seq, timestamp, key.sign(bytes(unsigned.block_hash)))

    def verify(self, ledger_key: PublicKey) -> bool:
        return verify(ledger_key, bytes(self.block_hash), self.signature)

    @cached_property
    def encoded(self) -> bytes:
        return (
            Writer(TAG_BLOCK)
            .uint(self.height)
            .raw(bytes(self.prev_hash))
            .raw(self.root)
            .uint(self.latest_seq)
            .uint(self.timestamp)
            .raw(bytes(self.signature))
            .finish()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Block":
        r = Reader(data, TAG_BLOCK)
        height = r.uint()
        prev_hash = Digest(r.raw())
        root = r.raw()
        if len(root) != 32:
            raise DecodeError("block root must be 32 bytes")
        latest_seq = r.uint()
        timestamp = r.uint()
        signature = Signature(r.raw())
        r.end()
        return cls(height, prev_hash, root, latest_seq, timestamp, signature)

    def describe(self) -> dict:
        return {
            "height": self.height,
            "root": self.root.hex(),
            "latest_seq": self.latest_seq,
            "timestamp": self.timestamp,
            "block_hash": self.block_hash.hex(),
        }


@dataclass(frozen=True)
class DeliveryReceipt:
    """Signed promise, made before anything is written, that the event
    will be included. ``block_hash``, ``t_latest`` and ``t_utc`` quote
    the latest block at the moment of the promise, so any strictly later
    block must already show the event; one that does not is evidence."""

    event_hash: Digest
    block_hash: Digest
    t_latest: int
    t_utc: int
    signature: Signature

    @property
    def signed_payload(self) -> bytes:
        return (
            Writer(TAG_DELIVERY_RECEIPT)
            .raw(bytes(self.event_hash))
            .raw(bytes(self.block_hash))
            .uint(self.t_latest)
            .uint(self.t_utc)
            .finish()
        )

    @classmethod
    def build(cls, key: KeyPair, event_hash: Digest, basis: Block) -> "DeliveryReceipt":
        unsigned = cls(event_hash, basis.block_hash, basis.latest_seq, basis.timestamp, None)  # type: ignore[arg-type]
        return cls(
            event_hash,
            basis.block_hash,
            basis.latest_seq,
            basis.timestamp,
            key.sign(unsigned.signed_payload),
        )

    def verify(self, ledger_key: PublicKey) -> bool:
        return verify(ledger_key, self.signed_payload, self.signature)

    def describe(self) -> dict:
        return {
            "event_hash": self.event_hash.hex(),
            "basis_block": self.block_hash.hex(),
            "basis_seq": self.t_latest,
            "basis_time": self.t_utc,
        }

    @cached_property
    def encoded(self) -> bytes:
        return (
            Writer(TAG_DELIVERY_RECEIPT)
            .raw(bytes(self.event_hash))
            .raw(bytes(self.block_hash))
            .uint(self.t_latest)
            .uint(self.t_utc)
            .raw(bytes(self.signature))
            .finish()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "DeliveryReceipt":
        r = Reader(data, TAG_DELIVERY_RECEIPT)
        event_hash = Digest(r.raw())
        block_hash = Digest(r.raw())
        t_latest = r.uint()
        t_utc = r.uint()
        signature = Signature(r.raw())
        r.end()
        return cls(event_hash, block_hash, t_latest, t_utc, signature)


@dataclass(frozen=True)
class Rejection:
    """Signed refusal. ``as_of_seq`` pins the ledger state it was made
    against, which is what a wrongful-refusal complaint argues about.
    When a stored revocation is the reason, it rides along with its
    stored authorization so the refused party can judge the refusal."""

    event_hash: Digest
    code: str
    detail: str
    as_of_seq: int
    blocking_seq: int
    blocking_event: bytes | None
    blocking_auth: bytes | None
    signature: Signature

    @property
    def signed_payload(self) -> bytes:
        return (
            Writer(TAG_REJECTION)
            .raw(bytes(self.event_hash))
            .text(self.code)
            .text(self.detail)
            .uint(self.as_of_seq)
            .uint(self.blocking_seq)
            .opt(self.blocking_event)
            .opt(self.blocking_auth)
            .finish()
        )

    @classmethod
    def build(
        cls,
        key: KeyPair,
        event_hash: Digest,
        code: str,
        detail: str,
        as_of_seq: int,
        blocking_seq: int = 0,
        blocking_event: bytes | None = None,
        blocking_auth: bytes | None = None,
    ) -> "Rejection":
        unsigned = cls(
            event_hash, code, detail, as_of_seq, blocking_seq, blocking_event, blocking_auth, None  # type: ignore[arg-type]
        )
        return cls(
            event_hash,
            code,
            detail,
            as_of_seq,
            blocking_seq,
            blocking_event,
            blocking_auth,
            key.sign(unsigned.signed_payload),
        )

    def verify(self, ledger_key: PublicKey) -> bool:
        return verify(ledger_key, self.signed_payload, self.signature)

    @cached_property
    def encoded(self) -> bytes:
        return (
            Writer(TAG_REJECTION)
            .raw(bytes(self.event_hash))
            .text(self.code)
            .text(self.detail)
            .uint(self.as_of_seq)
            .uint(self.blocking_seq)
            .opt(self.blocking_event)
            .opt(self.blocking_auth)
            .raw(bytes(self.signature))
            .finish()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Rejection":
        r = Reader(data, TAG_REJECTION)
        event_hash = Digest(r.raw())
        code = r.text()
        detail = r.text()
        as_of_seq = r.uint()
        blocking_seq = r.uint()
        blocking_event = r.opt()
        blocking_auth = r.opt()
        signature = Signature(r.raw())
        r.end()
        return cls(event_hash, code, detail, as_of_seq, blocking_seq, blocking_event, blocking_auth, signature)


class AuthAnswer(NamedTuple):
    """Signed reply to an authorization fetch, including the negative
    one; "I stored nothing" must be as quotable as the chain itself."""

    event_hash: bytes
    chain_bytes: bytes | None
    signature: Signature

    @property
    def signed_payload(self) -> bytes:
        return Writer(TAG_RESP_FETCH_AUTH).raw(self.event_hash).opt(self.chain_bytes).finish()

    @classmethod
    def build(cls, key: KeyPair, event_hash: bytes, chain_bytes: bytes | None) -> "AuthAnswer":
        unsigned = cls(event_hash, chain_bytes, None)  # type: ignore[arg-type]
        return cls(event_hash, chain_bytes, key.sign(unsigned.signed_payload))

    def verify(self, ledger_key: PublicKey) -> bool:
        return verify(ledger_key, self.signed_payload, self.signature)

    def to_bytes(self) -> bytes:
        return (
            Writer(TAG_RESP_FETCH_AUTH)
            .raw(self.event_hash)
            .opt(self.chain_bytes)
            .raw(bytes(self.signature))
            .finish()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "AuthAnswer":
        r = Reader(data, TAG_RESP_FETCH_AUTH)
        event_hash = r.raw()
        chain_bytes = r.opt()
        signature = Signature(r.raw())
        r.end()
        return cls(event_hash, chain_bytes, signature)


class SubmitOutcome(NamedTuple):
    receipt: DeliveryReceipt | None
    rejection: Rejection | None

    @property
    def accepted(self) -> bool:
        return self.receipt is not None


class QueryAnswer(NamedTuple):
    block: Block
    proof: Proof
    bodies: tuple[bytes, ...]  # event bytes matching the proof's entries


# ---------------------------------------------------------------------------
# feed frames


def encode_feed_entry(seq: int, index: bytes, event_hash: bytes) -> bytes:
    return Writer(TAG_FEED_ENTRY).uint(seq).raw(index).raw(event_hash).finish()


def decode_feed_entry(frame: bytes) -> tuple[int, bytes, bytes]:
    r = Reader(frame, TAG_FEED_ENTRY)
    seq = r.uint()
    index = r.raw()
    event_hash = r.raw()
    r.end()
    if len(index) != 32 or len(event_hash) != 32:
        raise DecodeError("feed entry fields must be 32 bytes")
    return seq, index, event_hash


def encode_feed_update(update: UpdateProof) -> bytes:
    return Writer(TAG_FEED_UPDATE).raw(update.to_bytes()).finish()


def decode_feed_update(frame: bytes) -> UpdateProof:
    r = Reader(frame, TAG_FEED_UPDATE)
    update = UpdateProof.from_bytes(r.raw())
    r.end()
    return update


def encode_feed_block(block: Block) -> bytes:
    return Writer(TAG_FEED_BLOCK).raw(block.encoded).finish()


def decode_feed_block(frame: bytes) -> Block:
    r = Reader(frame, TAG_FEED_BLOCK)
    block = Block.from_bytes(r.raw())
    r.end()
    return block


# ---------------------------------------------------------------------------
# the service


class LedgerService:
    def __init__(
        self,
        key: KeyPair,
        storage_dir: str | Path | None = None,
        *,
        block_events: int = 1000,
        block_seconds: float = 60.0,
        clock=time.time,
    ):
        self._key = key
        self._clock = clock
        self._block_events = block_events
        self._block_seconds = block_seconds

        self._tree = PrefixTree()
        self._blocks: list[Block] = []
        self._published: TreeSnapshot = self._tree.snapshot()
        self._published_seq = 0
        self._last_seq = 0
        self._auth: dict[bytes, bytes] = {}
        self._decoded: dict[bytes, Event] = {}
        self._feeds: tuple[list[bytes], list[bytes]] = ([], [])
        self._pending = 0
        self._last_block_time = clock()

        self._event_log = None
        self._block_log = None
        if storage_dir is not None:
            directory = Path(storage_dir)
            directory.mkdir(parents=True, exist_ok=True)
            self._event_path = directory / EVENT_LOG_NAME
            self._block_path = directory / BLOCK_LOG_NAME
            self._restore()
            self._event_log = open(self._event_path, "ab")
            self._block_log = open(self._block_path, "ab")
        if not self._blocks:
            self._emit_block(self._make_block())

    # -- public surface ----------------------------------------------------

    @property
    def public_key(self) -> PublicKey:
        return self._key.public

    @property
    def tree(self) -> PrefixTree:
        return self._tree

    def close(self) -> None:
        for handle in (self._event_log, self._block_log):
            if handle is not None:
                handle.close()
        self._event_log = self._block_log = None

    def submit(self, event_bytes: bytes, chain_bytes: bytes | None = None) -> SubmitOutcome:
        event_hash = sha256(event_bytes)
        try:
            event = decode_event(event_bytes)
        except DecodeError as exc:
            return self._refuse(event_hash, REJECT_MALFORMED, str(exc))
        if isinstance(event, HierCertificate):
            return self._refuse(
                event_hash, REJECT_MALFORMED, "hierarchical certificates are never registered"
            )
        chain = None
        if chain_bytes is not None:
            try:
                chain = decode_chain(chain_bytes)
            except DecodeError as exc:
                return self._refuse(event_hash, REJECT_MALFORMED, f"bad chain: {exc}")

        if isinstance(event, PreimageRevocation):
            if not event.valid():
                return self._refuse(event_hash, REJECT_BAD_PREIMAGE, "preimage does not match commitment")
        elif not event.verify_signature():
            return self._refuse(event_hash, REJECT_BAD_SIGNATURE, "event signature does not verify")

        index = bytes(event_index(event))
        entries = self._tree.entries(index)
        for _, stored_hash, _ in entries:
            if stored_hash == event_hash:
                return self._refuse(event_hash, REJECT_DUPLICATE, "event already registered")
        if entries and not isinstance(event, PreimageRevocation):
            floor = entries[-1][0]
            if event.freshness <= floor:
                return self._refuse(
                    event_hash,
                    REJECT_STALE,
                    f"freshness {event.freshness} does not exceed stored sequence {floor}",
                )

        refusal = self._authorize(event, chain)
        if refusal is not None:
            return self._refuse(event_hash, *refusal)

        # The receipt is signed before the write on purpose: if the write
        # never lands, the receipt convicts us.
        receipt = DeliveryReceipt.build(self._key, event_hash, self._blocks[-1])
        seq = self._next_seq()
        self._record(seq, event, event_bytes, bytes(event_hash), index, chain_bytes)
        self._maybe_publish()
        return SubmitOutcome(receipt, None)

    def internal_check_chain(
        self, chain, group: GroupId, subject: PublicKey, role: str
    ) -> ChainCheck:
        """The trusted-state flavor of chain validation, for differential
        comparison against the proof-driven client-side flavor."""
        return check_chain(self, chain, group, subject, role)

    def publish_block(self) -> Block:
        block = self._make_block()
        self._emit_block(block)
        return block

    def pump(self) -> Block | None:
        """Give the clock-driven block cadence a chance to fire."""
        if self._clock() - self._last_block_time >= self._block_seconds:
            return self.publish_block()
        return None

    def latest_block(self) -> Block:
        return self._blocks[-1]

    def blocks_since(self, height: int) -> list[Block]:
        return [b for b in self._blocks if b.height > height]

    def query(self, index: bytes) -> QueryAnswer:
        proof = self._published.lookup(bytes(index))
        bodies: tuple[bytes, ...] = ()
        if proof.present:
            bodies = tuple(body for _, _, body in self._published.entries(bytes(index)))
        return QueryAnswer(self._blocks[-1], proof, bodies)

    def fetch_auth(self, event_hash: bytes) -> AuthAnswer:
        return AuthAnswer.build(self._key, bytes(event_hash), self._auth.get(bytes(event_hash)))

    def audit_feed(self, mode: int, cursor: int, limit: int = 256) -> tuple[list[bytes], int]:
        log = self._feeds[FEED_FULL if mode == FEED_FULL else FEED_STREAM]
        frames = log[cursor : cursor + limit]
        return frames, cursor + len(frames)

    def suspension_holder(self, group: GroupId) -> PublicKey | None:
        entries = self.entries_at(bytes(suspension_index(group)))
        if entries and isinstance(entries[-1][1], SuspendEvent):
            return entries[-1][1].issuer
        return None

    # -- LedgerView: validation reads current (not yet published) state ----

    def entries_at(self, index: bytes) -> list[tuple[int, Event]]:
        out = []
        for seq, event_hash, body in self._tree.entries(bytes(index)):
            event = self._decoded.get(event_hash)
            if event is None:
                event = decode_event(body)
                self._decoded[event_hash] = event
            out.append((seq, event))
        return out

    # -- internals (fault injection overrides these seams) -----------------

    def _authorize(self, event: Event, chain) -> tuple[str, str, tuple[int, Event] | None] | None:
        """None to accept, or (code, detail, blocking revocation or None)."""
        if isinstance(event, PreimageRevocation):
            return None
        if isinstance(event, CertRevocation):
            # Stored as data for whoever holds the certificate to judge:
            # verifiers only honor one signed by the certificate's issuer,
            # so no authorization is checked or kept here.
            return None

        group = event.group
        holder = self.suspension_holder(group)
        if isinstance(event, SuspendEvent):
            if holder is not None:
                return REJECT_SUSPENDED, "a suspension is already active for this group", None
        elif isinstance(event, ResumeEvent):
            if holder is None:
                return REJECT_UNAUTHORIZED, "no active suspension to resume", None
            if event.issuer != holder:
                return REJECT_UNAUTHORIZED, "only the suspending leader may resume", None
            return None
        elif holder is not None and event.issuer != holder:
            return REJECT_SUSPENDED, "group is suspended by another leader", None

        result = check_chain(self, chain or (), group, event.issuer, ROLE_LEADER)
        if not result.ok:
            return (
                REJECT_UNAUTHORIZED,
                f"{result.failure.code}: {result.failure.detail}",
                result.revocation,
            )
        return None

    def _next_seq(self) -> int:
        self._last_seq += 1
        return self._last_seq

    def _record(
        self,
        seq: int,
        event: Event,
        event_bytes: bytes,
        event_hash: bytes,
        index: bytes,
        chain_bytes: bytes | None,
    ) -> None:
        update = self._tree.insert(index, seq, event_hash, event_bytes)
        self._decoded[event_hash] = event
        stored_chain = self._chain_to_log(event, chain_bytes)
        if isinstance(event, MemberRevocation):
            self._auth[event_hash] = stored_chain
        if self._event_log is not None:
            self._event_log.write(self._event_record(seq, event_bytes, stored_chain))
        self._emit_feed(update, seq, index, event_hash)
        self._pending += 1

    @staticmethod
    def _chain_to_log(event: Event, chain_bytes: bytes | None) -> bytes | None:
        # Member revocations always leave an auditable authorization; an
        # owner acting directly gets the empty chain, which validates on
        # its own. Certificates keep the chain they were submitted with.
        if isinstance(event, MemberRevocation):
            return chain_bytes if chain_bytes is not None else encode_chain(())
        return chain_bytes

    def _emit_feed(self, update: UpdateProof, seq: int, index: bytes, event_hash: bytes) -> None:
        self._feeds[FEED_STREAM].append(encode_feed_update(update))
        self._feeds[FEED_FULL].append(encode_feed_entry(seq, index, event_hash))

    def _refuse(
        self,
        event_hash: Digest,
        code: str,
        detail: str,
        revocation: tuple[int, Event] | None = None,
    ) -> SubmitOutcome:
        blocking_seq = 0
        blocking_event = blocking_auth = None
        if revocation is not None:
            blocking_seq = revocation[0]
            blocking_event = revocation[1].encoded
            blocking_auth = self._auth.get(bytes(revocation[1].hash))
        return SubmitOutcome(
            None,
            Rejection.build(
                self._key,
                event_hash,
                code,
                detail,
                self._last_seq,
                blocking_seq,
                blocking_event,
                blocking_auth,
            ),
        )

    def _make_block(self) -> Block:
        now = int(self._clock())
        if self._blocks:
            prev = self._blocks[-1]
            return Block.build(
                self._key,
                prev.height + 1,
                prev.block_hash,
                self._tree.root,
                self._last_seq,
                max(now, prev.timestamp),
            )
        return Block.build(self._key, 0, Digest(ZERO_DIGEST), self._tree.root, self._last_seq, now)

    def _emit_block(self, block: Block) -> None:
        self._blocks.append(block)
        self._published = self._tree.snapshot()
        self._published_seq = block.latest_seq
        frame = encode_feed_block(block)
        self._feeds[FEED_STREAM].append(frame)
        self._feeds[FEED_FULL].append(frame)
        if self._block_log is not None:
            # Durability boundary: everything the block commits to must
            # hit disk no later than the block itself.
            self._event_log.flush()
            os.fsync(self._event_log.fileno())
            encoded = block.encoded
            self._block_log.write(_U32.pack(len(encoded)) + encoded)
            self._block_log.flush()
            os.fsync(self._block_log.fileno())
        self._pending = 0
        self._last_block_time = self._clock()

    def _maybe_publish(self) -> None:
        if self._pending >= self._block_events:
            self.publish_block()
        elif self._clock() - self._last_block_time >= self._block_seconds:
            self.publish_block()

    # -- persistence --------------------------------------------------------

    @staticmethod
    def _event_record(seq: int, event_bytes: bytes, chain_bytes: bytes | None) -> bytes:
        parts = [_U64.pack(seq), _U32.pack(len(event_bytes)), event_bytes]
        if chain_bytes is None:
            parts.append(b"\x00")
        else:
            parts.append(b"\x01" + _U32.pack(len(chain_bytes)) + chain_bytes)
        return b"".join(parts)

    def _restore(self) -> None:
        events = list(read_event_log(self._event_path))
        blocks = list(read_block_log(self._block_path))
        if not blocks:
            if events:
                raise LedgerIntegrityError("event log present but block log empty")
            return

        # Replay events in log order, weaving block frames back into the
        # feeds at the sequence numbers they originally covered.
        pending_blocks = iter(blocks)
        next_block = next(pending_blocks, None)
        reached = 0

        def flush_blocks(up_to_seq: int):
            nonlocal next_block
            while next_block is not None and next_block.latest_seq <= up_to_seq:
                self._blocks.append(next_block)
                self._published = self._tree.snapshot()
                self._published_seq = next_block.latest_seq
                frame = encode_feed_block(next_block)
                self._feeds[FEED_STREAM].append(frame)
                self._feeds[FEED_FULL].append(frame)
                next_block = next(pending_blocks, None)

        flush_blocks(0)
        for seq, event_bytes, chain_bytes in events:
            event = decode_event(event_bytes)
            event_hash = bytes(sha256(event_bytes))
            index = bytes(event_index(event))
            update = self._tree.insert(index, seq, event_hash, event_bytes)
            self._decoded[event_hash] = event
            if chain_bytes is not None and isinstance(event, MemberRevocation):
                self._auth[event_hash] = chain_bytes
            self._feeds[FEED_STREAM].append(encode_feed_update(update))
            self._feeds[FEED_FULL].append(encode_feed_entry(seq, index, event_hash))
            reached = seq
            flush_blocks(seq)

        if next_block is not None:
            raise LedgerIntegrityError(
                f"block at height {next_block.height} covers sequence "
                f"{next_block.latest_seq} but the event log stops at {reached}"
            )
        tip = self._blocks[-1]
        if self._published.root != tip.root:
            raise LedgerIntegrityError("replayed tree root does not match last published block")
        self._last_seq = reached
        self._pending = reached - tip.latest_seq


def read_event_log(path: str | Path):
    """Yield (seq, event bytes, chain bytes or None) records, tolerating
    a torn tail from a crash mid-append. The replay oracle reads this
    directly, so the format doubles as the ledger's public ground truth."""
    path = Path(path)
    if not path.exists():
        return
    data = path.read_bytes()
    pos = 0
    total = len(data)
    while pos + 12 <= total:
        seq = _U64.unpack_from(data, pos)[0]
        length = _U32.unpack_from(data, pos + 8)[0]
        pos += 12
        if pos + length + 1 > total:
            return
        event_bytes = data[pos : pos + length]
        pos += length
        marker = data[pos]
        pos += 1
        chain_bytes = None
        if marker == 1:
            if pos + 4 > total:
                return
            chain_len = _U32.unpack_from(data, pos)[0]
            pos += 4
            if pos + chain_len > total:
                return
            chain_bytes = data[pos : pos + chain_len]
            pos += chain_len
        yield seq, event_bytes, chain_bytes


def read_block_log(path: str | Path):
    path = Path(path)
    if not path.exists():
        return
    data = path.read_bytes()
    pos = 0
    total = len(data)
    while pos + 4 <= total:
        length = _U32.unpack_from(data, pos)[0]
        pos += 4
        if pos + length > total:
            return
        yield Block.from_bytes(data[pos : pos + length])
        pos += length
