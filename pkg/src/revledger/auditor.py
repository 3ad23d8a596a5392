"""Auditors: independent processes that hold the ledger to its word.

Two designs with the same job and very different budgets. The stream
auditor keeps constant state (a cursor, a running root, and the last
block) and verifies every published update proof against the root it
already believes, so each accepted event extends an unbroken chain of
roots from genesis. The replica auditor keeps a full copy of the tree
and rebuilds every root from the raw entry feed, which costs memory but
lets it answer questions about any index and any height.

Both stop endorsing the moment anything fails to verify. A failure is
recorded as a `Misbehavior` carrying the signed artifacts in hand; the
feed itself is public, so anyone can refetch the surrounding frames and
recheck the claim. Kinds:

* ``bad-block-signature``: block signature does not verify,
* ``broken-root-chain``: a block or update does not build on its
  predecessor's verified root,
* ``non-monotonic-timestamp``: a sequence number or block timestamp
  went backwards,
* ``non-append-mutation``: a feed frame is not a single append,
* ``root-mismatch``: published root disagrees with verified updates,
* ``fork-detected``: two signed blocks share a height,
* ``wrongful-refusal``: the ledger refused a relayed event twice
  without a reason it could support.

Endorsements are the positive side of the protocol: a signature over
(height, block hash) that clients collect to convince themselves the
chain they see is the one auditors verified.

Auditors also act as a submission path of last resort: a client holding
a refusal can ask an auditor to relay the event, and a repeat refusal
whose stated reason does not hold up against the auditor's own view
becomes a published misbehavior record.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Protocol

from .crypto import Digest, KeyPair, PublicKey, Signature, ZERO_DIGEST, sha256, verify
from .encoding import (
    DecodeError,
    Reader,
    TAG_CHECKPOINT,
    TAG_ENDORSEMENT,
    TAG_FEED_BLOCK,
    TAG_FEED_ENTRY,
    TAG_FEED_UPDATE,
    Writer,
    peek_tag,
)
from .events import (
    CertRevocation,
    MemberRevocation,
    PreimageRevocation,
    ROLE_LEADER,
    decode_chain,
    decode_event,
    event_index,
    general_checks,
    membership_index,
)
from .ledger import (
    Block,
    FEED_FULL,
    FEED_STREAM,
    REJECT_BAD_PREIMAGE,
    REJECT_BAD_SIGNATURE,
    REJECT_DUPLICATE,
    REJECT_MALFORMED,
    REJECT_STALE,
    REJECT_UNAUTHORIZED,
    Rejection,
    SubmitOutcome,
    decode_feed_block,
    decode_feed_entry,
    decode_feed_update,
)
from .prefix_tree import NonMonotonicTimestamp, PrefixTree, proof_implied_root, verify_update

BAD_BLOCK_SIGNATURE = "bad-block-signature"
BROKEN_ROOT_CHAIN = "broken-root-chain"
NON_MONOTONIC_TIMESTAMP = "non-monotonic-timestamp"
NON_APPEND_MUTATION = "non-append-mutation"
ROOT_MISMATCH = "root-mismatch"
FORK_DETECTED = "fork-detected"
WRONGFUL_REFUSAL = "wrongful-refusal"


@dataclass(frozen=True)
class Misbehavior:
    kind: str
    detail: str
    height: int | None
    evidence: tuple[bytes, ...]

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "detail": self.detail,
            "height": self.height,
            "evidence_frames": len(self.evidence),
        }


@dataclass(frozen=True)
class Endorsement:
    auditor: PublicKey
    height: int
    block_hash: Digest
    signature: Signature

    @property
    def signed_payload(self) -> bytes:
        return (
            Writer(TAG_ENDORSEMENT)
            .raw(bytes(self.auditor))
            .uint(self.height)
            .raw(bytes(self.block_hash))
            .finish()
        )

    @classmethod
    def build(cls, key: KeyPair, height: int, block_hash: Digest) -> "Endorsement":
        unsigned = cls(key.public, height, block_hash, None)  # type: ignore[arg-type]
        return cls(key.public, height, block_hash, key.sign(unsigned.signed_payload))

    def verify(self) -> bool:
        return verify(self.auditor, self.signed_payload, self.signature)

    @cached_property
    def encoded(self) -> bytes:
        return (
            Writer(TAG_ENDORSEMENT)
            .raw(bytes(self.auditor))
            .uint(self.height)
            .raw(bytes(self.block_hash))
            .raw(bytes(self.signature))
            .finish()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Endorsement":
        r = Reader(data, TAG_ENDORSEMENT)
        auditor = PublicKey(r.raw())
        height = r.uint()
        block_hash = Digest(r.raw())
        signature = Signature(r.raw())
        r.end()
        return cls(auditor, height, block_hash, signature)


class FeedSource(Protocol):
    def audit_feed(self, mode: int, cursor: int, limit: int = 256) -> tuple[list[bytes], int]: ...


class _AuditorBase:
    """Shared frame loop and block-header checks."""

    mode: int

    def __init__(self, ledger_key: PublicKey, key: KeyPair | None = None):
        self._ledger_key = ledger_key
        self._key = key
        self.cursor = 0
        self.last_block: Block | None = None
        self.misbehaviors: list[Misbehavior] = []
        self.endorsements: list[Endorsement] = []

    @property
    def healthy(self) -> bool:
        return not self.misbehaviors

    @property
    def public_key(self) -> PublicKey | None:
        return self._key.public if self._key else None

    def pull(self, source: FeedSource) -> list[Misbehavior]:
        """Poll the feed to its current end. Stops at the first failure;
        state after detected misbehavior is not worth extending."""
        found: list[Misbehavior] = []
        while self.healthy:
            frames, advanced = source.audit_feed(self.mode, self.cursor)
            if not frames:
                break
            for frame in frames:
                self.cursor += 1
                misbehavior = self.ingest(frame)
                if misbehavior is not None:
                    found.append(misbehavior)
                    break
        return found

    def ingest(self, frame: bytes) -> Misbehavior | None:
        if not self.healthy:
            return None
        try:
            tag = peek_tag(frame)
            if tag == TAG_FEED_BLOCK:
                result = self._apply_block(decode_feed_block(frame), frame)
            else:
                result = self._apply_frame(tag, frame)
        except DecodeError as exc:
            result = Misbehavior(NON_APPEND_MUTATION, f"undecodable feed frame: {exc}", None, (frame,))
        if result is not None:
            self.misbehaviors.append(result)
        return result

    def observe_block(self, block: Block) -> Misbehavior | None:
        """Cross-check a block seen out of band, e.g. relayed by a client."""
        ours = self._block_at(block.height)
        if ours is not None and ours.block_hash != block.block_hash and block.verify(self._ledger_key):
            misbehavior = Misbehavior(
                FORK_DETECTED,
                f"two signed blocks at height {block.height}",
                block.height,
                (ours.encoded, block.encoded),
            )
            self.misbehaviors.append(misbehavior)
            return misbehavior
        return None

    def endorsement_for(self, height: int) -> Endorsement | None:
        for endorsement in reversed(self.endorsements):
            if endorsement.height == height:
                return endorsement
        return None

    def relay_submit(
        self,
        ledger,
        event_bytes: bytes,
        chain_bytes: bytes | None = None,
        prior: Rejection | None = None,
    ) -> tuple[SubmitOutcome, Misbehavior | None]:
        """Resubmit a refused event on a client's behalf.

        A first refusal is between the client and the ledger. A repeat
        refusal, presented here together with the earlier signed one,
        whose stated reason this auditor can positively rule out becomes
        a published misbehavior record. Reasons the auditor's own state
        cannot settle are passed through untouched.
        """
        outcome = ledger.submit(event_bytes, chain_bytes)
        if outcome.accepted or prior is None:
            return outcome, None
        if self._judge_rejection(event_bytes, chain_bytes, outcome.rejection) is not False:
            return outcome, None
        misbehavior = Misbehavior(
            WRONGFUL_REFUSAL,
            f"repeat refusal with unsupported reason {outcome.rejection.code!r}",
            None,
            (prior.encoded, outcome.rejection.encoded, event_bytes, chain_bytes or b""),
        )
        self.misbehaviors.append(misbehavior)
        return outcome, misbehavior

    def _judge_rejection(
        self, event_bytes: bytes, chain_bytes: bytes | None, rejection: Rejection
    ) -> bool | None:
        """True if the stated reason holds, False if it provably does not,
        None when this auditor cannot settle it. Without a replica only
        statelessly checkable reasons are decidable."""
        try:
            event = decode_event(event_bytes)
            if chain_bytes is not None:
                decode_chain(chain_bytes)
        except DecodeError:
            return True
        if rejection.code == REJECT_MALFORMED:
            return False
        if rejection.code == REJECT_BAD_SIGNATURE:
            if isinstance(event, PreimageRevocation):
                return False
            return not event.verify_signature()
        if rejection.code == REJECT_BAD_PREIMAGE:
            if isinstance(event, PreimageRevocation):
                return not event.valid()
            return False
        return None

    # -- subclass hooks -----------------------------------------------------

    def _apply_frame(self, tag: int, frame: bytes) -> Misbehavior | None:
        raise NotImplementedError

    def _expected_root(self) -> bytes:
        raise NotImplementedError

    def _expected_seq(self) -> int:
        raise NotImplementedError

    def _block_at(self, height: int) -> Block | None:
        if self.last_block is not None and self.last_block.height == height:
            return self.last_block
        return None

    # -- common block rules ---------------------------------------------------

    def _apply_block(self, block: Block, frame: bytes) -> Misbehavior | None:
        prev = self.last_block
        evidence = (frame,) if prev is None else (prev.encoded, frame)
        if not block.verify(self._ledger_key):
            return Misbehavior(BAD_BLOCK_SIGNATURE, "block signature does not verify", block.height, evidence)
        if prev is None:
            if block.height != 0 or bytes(block.prev_hash) != ZERO_DIGEST:
                return Misbehavior(BROKEN_ROOT_CHAIN, "first block is not a genesis block", block.height, evidence)
        else:
            if block.height != prev.height + 1:
                return Misbehavior(
                    BROKEN_ROOT_CHAIN,
                    f"height {block.height} does not follow {prev.height}",
                    block.height,
                    evidence,
                )
            if block.prev_hash != prev.block_hash:
                return Misbehavior(BROKEN_ROOT_CHAIN, "block does not link its predecessor", block.height, evidence)
            if block.timestamp < prev.timestamp:
                return Misbehavior(NON_MONOTONIC_TIMESTAMP, "block timestamp went backwards", block.height, evidence)
        if block.root != self._expected_root() or block.latest_seq != self._expected_seq():
            return Misbehavior(
                ROOT_MISMATCH,
                f"block commits root {block.root.hex()[:16]} at seq {block.latest_seq}, "
                f"verified state is {self._expected_root().hex()[:16]} at seq {self._expected_seq()}",
                block.height,
                evidence,
            )
        self.last_block = block
        self._remember_block(block)
        if self._key is not None:
            self.endorsements.append(Endorsement.build(self._key, block.height, block.block_hash))
        return None

    def _remember_block(self, block: Block) -> None:
        pass


class StreamAuditor(_AuditorBase):
    """Constant-state auditor over the update-proof feed.

    Everything it needs fits in a checkpoint of a few hundred bytes: the
    feed cursor, the root and sequence number it has verified up to, and
    the last block. Restoring from a checkpoint resumes exactly where
    the saved auditor stopped.
    """

    mode = FEED_STREAM

    def __init__(self, ledger_key: PublicKey, key: KeyPair | None = None):
        super().__init__(ledger_key, key)
        self.root = ZERO_DIGEST
        self.seq = 0

    def _expected_root(self) -> bytes:
        return self.root

    def _expected_seq(self) -> int:
        return self.seq

    def _apply_frame(self, tag: int, frame: bytes) -> Misbehavior | None:
        if tag != TAG_FEED_UPDATE:
            return Misbehavior(NON_APPEND_MUTATION, f"unexpected frame tag {tag:#x} in proof stream", None, (frame,))
        update = decode_feed_update(frame)
        if update.seq <= self.seq:
            return Misbehavior(
                NON_MONOTONIC_TIMESTAMP,
                f"update sequence {update.seq} does not advance {self.seq}",
                None,
                (frame,),
            )
        root_before = proof_implied_root(update.before)
        if root_before != self.root:
            return Misbehavior(
                BROKEN_ROOT_CHAIN,
                "update does not build on the verified root",
                None,
                (frame,),
            )
        root_after = proof_implied_root(update.after)
        if root_after is None or not verify_update(update, self.root, root_after):
            return Misbehavior(
                NON_APPEND_MUTATION,
                "update is not a single append to its leaf",
                None,
                (frame,),
            )
        self.root = root_after
        self.seq = update.seq
        return None

    @classmethod
    def attach_from(
        cls,
        ledger_key: PublicKey,
        block: Block,
        cursor: int,
        key: KeyPair | None = None,
    ) -> "StreamAuditor":
        """Start mid-stream from a block trusted out of band (say, endorsed
        by another auditor), verifying everything after it. ``cursor`` must
        point just past that block's feed frame."""
        auditor = cls(ledger_key, key)
        auditor.cursor = cursor
        auditor.root = block.root
        auditor.seq = block.latest_seq
        auditor.last_block = block
        return auditor

    def checkpoint(self) -> bytes:
        """Serialized resumable state; by construction a few hundred bytes."""
        w = Writer(TAG_CHECKPOINT).uint(self.cursor).raw(self.root).uint(self.seq)
        w.opt(self.last_block.encoded if self.last_block else None)
        return w.finish()

    @classmethod
    def from_checkpoint(cls, ledger_key: PublicKey, data: bytes, key: KeyPair | None = None) -> "StreamAuditor":
        r = Reader(data, TAG_CHECKPOINT)
        auditor = cls(ledger_key, key)
        auditor.cursor = r.uint()
        auditor.root = r.raw()
        auditor.seq = r.uint()
        block_bytes = r.opt()
        r.end()
        if len(auditor.root) != 32:
            raise DecodeError("checkpoint root must be 32 bytes")
        if block_bytes is not None:
            auditor.last_block = Block.from_bytes(block_bytes)
        return auditor


class ReplicaAuditor(_AuditorBase):
    """Full-copy auditor over the compact entry feed.

    Rebuilds the whole tree from (seq, index, hash) triples, so each
    feed frame is a fixed 85 bytes on the wire no matter how large the
    tree gets, and any historical block can be cross-checked later.
    """

    mode = FEED_FULL

    def __init__(self, ledger_key: PublicKey, key: KeyPair | None = None):
        super().__init__(ledger_key, key)
        self.replica = PrefixTree()
        self.seq = 0
        self.blocks: list[Block] = []

    def _expected_root(self) -> bytes:
        return self.replica.root

    def _expected_seq(self) -> int:
        return self.seq

    def _block_at(self, height: int) -> Block | None:
        if 0 <= height < len(self.blocks):
            return self.blocks[height]
        return None

    def _remember_block(self, block: Block) -> None:
        self.blocks.append(block)

    def _apply_frame(self, tag: int, frame: bytes) -> Misbehavior | None:
        if tag != TAG_FEED_ENTRY:
            return Misbehavior(NON_APPEND_MUTATION, f"unexpected frame tag {tag:#x} in entry feed", None, (frame,))
        seq, index, event_hash = decode_feed_entry(frame)
        if seq <= self.seq:
            return Misbehavior(
                NON_MONOTONIC_TIMESTAMP,
                f"entry sequence {seq} does not advance {self.seq}",
                None,
                (frame,),
            )
        try:
            self.replica.insert(index, seq, event_hash)
        except NonMonotonicTimestamp:
            return Misbehavior(NON_MONOTONIC_TIMESTAMP, "entry rewinds its leaf", None, (frame,))
        self.seq = seq
        return None

    def proof_for(self, index: bytes):
        """Replica-side lookup; lets the auditor answer queries too."""
        return self.replica.lookup(bytes(index))

    def _judge_rejection(
        self, event_bytes: bytes, chain_bytes: bytes | None, rejection: Rejection
    ) -> bool | None:
        verdict = super()._judge_rejection(event_bytes, chain_bytes, rejection)
        if verdict is not None:
            return verdict
        event = decode_event(event_bytes)
        entries = self.replica.entries(bytes(event_index(event)))
        if rejection.code == REJECT_DUPLICATE:
            return any(stored == sha256(event_bytes) for _, stored, _ in entries)
        if rejection.code == REJECT_STALE:
            if isinstance(event, PreimageRevocation) or not entries:
                return False
            return event.freshness <= entries[-1][0]
        if rejection.code == REJECT_UNAUTHORIZED:
            return self._judge_unauthorized(event, chain_bytes, rejection)
        return None

    def _judge_unauthorized(
        self, event, chain_bytes: bytes | None, rejection: Rejection
    ) -> bool | None:
        # Anyone may deposit these two; authorization never applies.
        if isinstance(event, (CertRevocation, PreimageRevocation)):
            return False
        chain = decode_chain(chain_bytes) if chain_bytes is not None else ()
        group = event.group
        if general_checks(chain, event.issuer, group, ROLE_LEADER) is not None:
            return True
        registered = [0]
        for cert in chain:
            hits = [
                seq
                for seq, stored, _ in self.replica.entries(
                    bytes(membership_index(group, cert.role, cert.subject))
                )
                if stored == bytes(cert.hash)
            ]
            if not hits:
                return True
            registered.append(hits[0])
        rev_bytes = rejection.blocking_event
        if rev_bytes is None:
            # Sound chain, every link on the ledger, and nothing blocking
            # it on offer: the stated reason cannot hold.
            return False
        try:
            rev = decode_event(rev_bytes)
        except DecodeError:
            return False
        seq = rejection.blocking_seq
        stored = any(
            s == seq and h == sha256(rev_bytes)
            for s, h, _ in self.replica.entries(bytes(event_index(rev)))
        )
        if not stored:
            return False
        if isinstance(rev, CertRevocation):
            if any(bytes(cert.hash) == bytes(rev.cert_hash) for cert in chain):
                # Issuer-match and cascade order are the validator's call;
                # a replica of stored entries cannot rule the reason out.
                return None
            return False
        if not isinstance(rev, MemberRevocation) or rev.group != group:
            return False
        if not chain:
            return rev.subject == group.owner_key and rev.role == ROLE_LEADER and seq > 0
        for pos, cert in enumerate(chain):
            if (
                rev.role == ROLE_LEADER
                and rev.subject == cert.issuer
                and registered[pos] < seq <= registered[pos + 1]
            ):
                return True
        last = chain[-1]
        return rev.subject == last.subject and rev.role == last.role and seq > registered[-1]


def attach_at_block(
    ledger_key: PublicKey,
    source: FeedSource,
    block_hash: bytes,
    key: KeyPair | None = None,
) -> StreamAuditor | None:
    """Start a stream auditor mid-feed, anchored at a block the caller
    already trusts (say, one endorsed by auditors it knows). Scans the
    proof stream for that block and attaches just past it; returns None
    if no such block has been published.
    """
    cursor = 0
    while True:
        frames, _ = source.audit_feed(FEED_STREAM, cursor)
        if not frames:
            return None
        for frame in frames:
            cursor += 1
            if peek_tag(frame) != TAG_FEED_BLOCK:
                continue
            try:
                block = decode_feed_block(frame)
            except DecodeError:
                continue
            if block.block_hash == bytes(block_hash) and block.verify(ledger_key):
                return StreamAuditor.attach_from(ledger_key, block, cursor, key)
