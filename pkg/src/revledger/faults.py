"""Adversarial ledger variants for the detection harness.

`FaultyLedger` is the honest service with eight armable one-shot
faults, each a misbehavior the surrounding protocol claims to catch.
Arming never changes behavior until the next qualifying call, so a
test can interleave honest traffic freely and knows exactly which
operation the fault landed on. Every fired fault is logged; a run
where nothing fired is an honest run and must produce zero alarms.

The faults deliberately go through the same seams the honest code
uses (sequence assignment, recording, feed emission, block building),
so nothing else about the service's behavior shifts and a detector
cannot cheat by noticing side effects of the injection itself.
"""
from __future__ import annotations

from .crypto import sha256
from .events import Event, MemberRevocation
from .ledger import (
    Block,
    LedgerService,
    QueryAnswer,
    REJECT_UNAUTHORIZED,
    SubmitOutcome,
)
from .prefix_tree import PrefixTree, UpdateProof
from .wire import NoResponse

FAULT_MUTATE_HISTORY = "mutate-history"
FAULT_DELETE_ENTRY = "delete-entry"
FAULT_FORK = "fork"
FAULT_DROP_UPDATE = "drop-update"
FAULT_REUSED_SEQ = "non-monotonic-seq"
FAULT_STORE_UNAUTHORIZED = "store-unauthorized-rev"
FAULT_REFUSE_VALID = "refuse-valid-event"
FAULT_OMIT_AFTER_POD = "omit-after-pod"

ALL_FAULTS = (
    FAULT_MUTATE_HISTORY,
    FAULT_DELETE_ENTRY,
    FAULT_FORK,
    FAULT_DROP_UPDATE,
    FAULT_REUSED_SEQ,
    FAULT_STORE_UNAUTHORIZED,
    FAULT_REFUSE_VALID,
    FAULT_OMIT_AFTER_POD,
)


class UnresponsiveChannel:
    """Wraps any ledger channel; while ``silent`` every call times out.
    Exists so no-response alarms can be staged without real sockets."""

    def __init__(self, inner):
        self._inner = inner
        self.silent = False

    def __getattr__(self, name):
        target = getattr(self._inner, name)
        if not callable(target):
            return target

        def call(*args, **kwargs):
            if self.silent:
                raise NoResponse("the ledger went dark")
            return target(*args, **kwargs)

        return call


class FaultyLedger(LedgerService):
    """The honest service until told otherwise."""

    def __init__(self, *args, **kwargs):
        # Set up before super().__init__: genesis runs through our seams.
        self._armed: str | None = None
        self._fired: list[str] = []
        self._inserts: list[tuple[bytes, int, bytes, bytes]] = []
        self._fork_tip: Block | None = None
        super().__init__(*args, **kwargs)

    def arm(self, kind: str) -> None:
        if kind not in ALL_FAULTS:
            raise ValueError(f"unknown fault {kind!r}")
        self._armed = kind

    @property
    def fired(self) -> tuple[str, ...]:
        return tuple(self._fired)

    def _consume(self, kind: str) -> bool:
        if self._armed != kind:
            return False
        self._armed = None
        self._fired.append(kind)
        return True

    # -- submission-path faults ----------------------------------------------

    def submit(self, event_bytes: bytes, chain_bytes: bytes | None = None) -> SubmitOutcome:
        if self._consume(FAULT_REFUSE_VALID):
            # A plausible-sounding refusal with nothing behind it.
            return self._refuse(
                sha256(event_bytes), REJECT_UNAUTHORIZED, "issuer holds no leadership"
            )
        return super().submit(event_bytes, chain_bytes)

    def _authorize(self, event: Event, chain):
        if isinstance(event, MemberRevocation) and self._consume(FAULT_STORE_UNAUTHORIZED):
            return None
        return super()._authorize(event, chain)

    def _next_seq(self) -> int:
        if self._last_seq >= 1 and self._consume(FAULT_REUSED_SEQ):
            return self._last_seq
        return super()._next_seq()

    def _record(self, seq, event, event_bytes, event_hash, index, chain_bytes) -> None:
        if self._consume(FAULT_OMIT_AFTER_POD):
            # The receipt has already been signed; erase every other trace.
            self._last_seq -= 1
            return
        self._inserts.append((index, seq, event_hash, event_bytes))
        super()._record(seq, event, event_bytes, event_hash, index, chain_bytes)

    def _emit_feed(self, update: UpdateProof, seq: int, index: bytes, event_hash: bytes) -> None:
        if self._consume(FAULT_DROP_UPDATE):
            return
        super()._emit_feed(update, seq, index, event_hash)

    # -- block-path faults ----------------------------------------------------

    def publish_block(self) -> Block:
        if self._consume(FAULT_FORK):
            block = super().publish_block()
            self._fork_tip = Block.build(
                self._key,
                block.height,
                block.prev_hash,
                block.root,
                block.latest_seq,
                block.timestamp + 1,
            )
            return self._fork_tip
        self._fork_tip = None
        return super().publish_block()

    def _make_block(self) -> Block:
        block = super()._make_block()
        if self._inserts and self._consume(FAULT_MUTATE_HISTORY):
            return self._with_root(block, self._doctored_root(tamper_last=True))
        if self._inserts and self._consume(FAULT_DELETE_ENTRY):
            return self._with_root(block, self._doctored_root(drop_last=True))
        return block

    def _with_root(self, block: Block, root: bytes) -> Block:
        return Block.build(
            self._key, block.height, block.prev_hash, root, block.latest_seq, block.timestamp
        )

    def _doctored_root(self, *, drop_last: bool = False, tamper_last: bool = False) -> bytes:
        records = self._inserts[:-1] if drop_last else list(self._inserts)
        if tamper_last and records:
            index, seq, event_hash, body = records[-1]
            flipped = event_hash[:-1] + bytes([event_hash[-1] ^ 1])
            records[-1] = (index, seq, flipped, body)
        tree = PrefixTree()
        for index, seq, event_hash, body in records:
            tree.insert(index, seq, event_hash, body)
        return tree.root

    # -- the two faces of a fork ----------------------------------------------

    def latest_block(self) -> Block:
        if self._fork_tip is not None:
            return self._fork_tip
        return super().latest_block()

    def query(self, index: bytes) -> QueryAnswer:
        answer = super().query(index)
        if self._fork_tip is not None and answer.block.height == self._fork_tip.height:
            return QueryAnswer(self._fork_tip, answer.proof, answer.bodies)
        return answer
