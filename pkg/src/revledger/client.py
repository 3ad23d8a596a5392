"""Verifying access client: consumes the ledger without trusting it.

Every answer the client acts on is first forced through a checkable
form. Blocks must carry a valid ledger signature, proofs must verify
against the block root, entry bodies must hash to the entries the proof
commits to, and stored authorizations arrive inside signed replies that
are evidence in themselves. When a check fails, the client raises an
alarm carrying the signed artifacts that prove the failure; it never
just logs and moves on, because the whole protocol rests on misbehavior
being attributable.

Membership verification runs in two phases. First the presented chain
is validated against ledger history. If it fails because of a stored
key revocation, the client fetches the authorization the ledger stored
with that revocation and re-validates it as of the moment the
revocation was accepted. A revocation the ledger cannot justify that
way is exactly the misbehavior this protocol exists to catch, so it
raises the ``unauthorized-revocation-stored`` alarm. The verdict stays
"not-member" even then: a ledger caught cheating does not get to vouch
for anyone. Certificate revocations carry their own authority (the
verifier only honors ones signed by the certificate's issuer), so they
get no second phase.

Two obligations outlive each submission. A delivery receipt quotes the
block it was promised against; once a strictly later block is public,
the event must be provably present, or ``pod-not-honored`` fires. A
signed rejection pins the state it claims to have been decided against;
once that state is public the client re-judges it, and a refusal it can
rule out becomes ``wrongful-refusal``.

Reads within one verification are pinned to a single block height. If
the ledger publishes mid-verification the client simply starts the
session over; entries are append-only, so a fresh session sees a
superset of the old one.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .crypto import Digest, KeyPair, PublicKey, sha256
from .encoding import DecodeError
from .events import (
    CertRevocation,
    CheckFailure,
    Event,
    GroupId,
    HierCertificate,
    MemberCertificate,
    MemberRevocation,
    PreimageRevocation,
    ResumeEvent,
    ROLE_LEADER,
    SuspendEvent,
    decode_chain,
    decode_event,
    encode_chain,
    event_index,
    hier_general_checks,
    suspension_index,
)
from .ledger import Block, Rejection, SubmitOutcome
from .prefix_tree import verify_proof
from .validation import check_chain
from .wire import NoResponse, RemoteError

ALARM_NO_RESPONSE = "no-response"
ALARM_INVALID_PROOF = "invalid-proof"
ALARM_UNAUTHORIZED_REVOCATION = "unauthorized-revocation-stored"
ALARM_WRONGFUL_REFUSAL = "wrongful-refusal"
ALARM_POD_NOT_HONORED = "pod-not-honored"
ALARM_FORK = "fork-detected"

STATUS_MEMBER = "member"
STATUS_NOT_MEMBER = "not-member"
STATUS_UNDECIDED = "undecided"


@dataclass(frozen=True)
class Alarm:
    kind: str
    detail: str
    evidence: tuple[bytes, ...]

    def describe(self) -> dict:
        return {"kind": self.kind, "detail": self.detail, "evidence_frames": len(self.evidence)}


class MemberDecision(NamedTuple):
    status: str
    failure: CheckFailure | None
    alarm: Alarm | None


class VerifiedAnswer(NamedTuple):
    block: Block
    proof_bytes: bytes
    entries: tuple[tuple[int, Event], ...]


class _SnapshotMoved(Exception):
    """A block landed between reads; the session must restart."""


class _QueryFailed(Exception):
    """A response failed verification; an alarm is already recorded."""


class _Session:
    """Proof-backed ``LedgerView`` pinned to one block height."""

    def __init__(self, client: "AccessClient"):
        self._client = client
        self._height: int | None = None
        self._entries: dict[bytes, tuple[tuple[int, Event], ...]] = {}
        self._auth: dict[bytes, bytes | None] = {}

    def entries_at(self, index: bytes) -> tuple[tuple[int, Event], ...]:
        key = bytes(index)
        cached = self._entries.get(key)
        if cached is None:
            answer = self._client.query_verified(key)
            if answer is None:
                raise _QueryFailed
            if self._height is None:
                self._height = answer.block.height
            elif answer.block.height != self._height:
                raise _SnapshotMoved
            cached = answer.entries
            self._entries[key] = cached
        return cached

    def stored_auth(self, event_hash: bytes) -> bytes | None:
        key = bytes(event_hash)
        if key not in self._auth:
            answer = self._client.fetch_auth_verified(key)
            if answer is None:
                raise _QueryFailed
            self._auth[key] = answer.chain_bytes
        return self._auth[key]


class AccessClient:
    """One participant's view of the ledger.

    ``channel`` is anything with the service's submit/query/fetch_auth/
    latest_block signatures: the service itself, a loopback stub, or a
    TCP `RemoteLedger`. ``auditors`` are consulted for endorsements to
    cross-check published blocks against; they may lag, so a missing
    endorsement is tolerated while a conflicting one is a fork.
    """

    def __init__(self, channel, ledger_key: PublicKey, auditors: Sequence = ()):
        self._channel = channel
        self._ledger_key = ledger_key
        self._auditors = list(auditors)
        self.alarms: list[Alarm] = []
        self._blocks_seen: dict[int, Block] = {}
        self._receipts: list[tuple[object, bytes, bytes]] = []  # receipt, event bytes, index
        self._refusals: list[tuple[Event, bytes | None, Rejection]] = []

    # -- alarms --------------------------------------------------------------

    def _raise_alarm(self, kind: str, detail: str, evidence: tuple[bytes, ...]) -> Alarm:
        alarm = Alarm(kind, detail, evidence)
        self.alarms.append(alarm)
        return alarm

    def alarms_of(self, kind: str) -> list[Alarm]:
        return [a for a in self.alarms if a.kind == kind]

    # -- verified transport wrappers ------------------------------------------

    def _note_block(self, block: Block) -> bool:
        if not block.verify(self._ledger_key):
            self._raise_alarm(
                ALARM_INVALID_PROOF,
                f"block {block.height} signature does not verify",
                (block.encoded,),
            )
            return False
        known = self._blocks_seen.get(block.height)
        if known is not None and known.block_hash != block.block_hash:
            self._raise_alarm(
                ALARM_FORK,
                f"two signed blocks at height {block.height}",
                (known.encoded, block.encoded),
            )
            return False
        self._blocks_seen[block.height] = block
        for auditor in self._auditors:
            endorsement = auditor.endorsement_for(block.height)
            if endorsement is None or not endorsement.verify():
                continue
            if endorsement.block_hash != block.block_hash:
                self._raise_alarm(
                    ALARM_FORK,
                    f"auditor endorsed a different block at height {block.height}",
                    (endorsement.encoded, block.encoded),
                )
                return False
        return True

    def latest_block(self) -> Block | None:
        try:
            block = self._channel.latest_block()
        except (NoResponse, RemoteError, DecodeError) as exc:
            self._raise_alarm(ALARM_NO_RESPONSE, f"latest block: {exc}", ())
            return None
        return block if self._note_block(block) else None

    def query_verified(self, index: bytes) -> VerifiedAnswer | None:
        index = bytes(index)
        try:
            answer = self._channel.query(index)
        except NoResponse as exc:
            self._raise_alarm(ALARM_NO_RESPONSE, f"query: {exc}", (index,))
            return None
        except (RemoteError, DecodeError) as exc:
            self._raise_alarm(ALARM_INVALID_PROOF, f"undecodable query response: {exc}", (index,))
            return None
        block, proof, bodies = answer
        if not self._note_block(block):
            return None
        proof_bytes = proof.to_bytes()
        evidence = (block.encoded, proof_bytes)
        if proof.index != index:
            self._raise_alarm(ALARM_INVALID_PROOF, "proof answers a different index", evidence)
            return None
        if not verify_proof(proof, block.root):
            self._raise_alarm(ALARM_INVALID_PROOF, "proof does not match the published root", evidence)
            return None
        if not proof.present:
            if bodies:
                self._raise_alarm(ALARM_INVALID_PROOF, "absence proof arrived with bodies", evidence)
                return None
            return VerifiedAnswer(block, proof_bytes, ())
        pairs = proof.terminal.entries
        if len(bodies) != len(pairs):
            self._raise_alarm(ALARM_INVALID_PROOF, "entry bodies do not match the proof", evidence)
            return None
        entries = []
        for (seq, event_hash), body in zip(pairs, bodies):
            if bytes(sha256(body)) != event_hash:
                self._raise_alarm(ALARM_INVALID_PROOF, f"body at sequence {seq} hashes wrong", evidence)
                return None
            try:
                entries.append((seq, decode_event(body)))
            except DecodeError:
                self._raise_alarm(ALARM_INVALID_PROOF, f"body at sequence {seq} does not decode", evidence)
                return None
        return VerifiedAnswer(block, proof_bytes, tuple(entries))

    def fetch_auth_verified(self, event_hash: bytes):
        event_hash = bytes(event_hash)
        try:
            answer = self._channel.fetch_auth(event_hash)
        except NoResponse as exc:
            self._raise_alarm(ALARM_NO_RESPONSE, f"fetch auth: {exc}", ())
            return None
        except (RemoteError, DecodeError) as exc:
            self._raise_alarm(ALARM_INVALID_PROOF, f"undecodable auth response: {exc}", ())
            return None
        if answer.event_hash != event_hash or not answer.verify(self._ledger_key):
            self._raise_alarm(
                ALARM_INVALID_PROOF,
                "authorization reply does not match the request or its signature fails",
                (answer.to_bytes(),),
            )
            return None
        return answer

    # -- submission and its follow-ups ----------------------------------------

    def submit(self, event: Event, chain: Sequence[MemberCertificate] | None = None) -> SubmitOutcome | None:
        chain_bytes = encode_chain(chain) if chain is not None else None
        try:
            outcome = self._channel.submit(event.encoded, chain_bytes)
        except (NoResponse, RemoteError, DecodeError) as exc:
            self._raise_alarm(ALARM_NO_RESPONSE, f"submit: {exc}", (event.encoded,))
            return None
        if outcome.accepted:
            receipt = outcome.receipt
            if not receipt.verify(self._ledger_key) or receipt.event_hash != event.hash:
                self._raise_alarm(
                    ALARM_INVALID_PROOF,
                    "delivery receipt does not cover the submitted event",
                    (event.encoded, receipt.encoded),
                )
            else:
                self._receipts.append((receipt, event.encoded, bytes(event_index(event))))
        else:
            rejection = outcome.rejection
            if not rejection.verify(self._ledger_key) or rejection.event_hash != event.hash:
                self._raise_alarm(
                    ALARM_INVALID_PROOF,
                    "rejection does not cover the submitted event",
                    (event.encoded, rejection.encoded),
                )
            else:
                self._refusals.append((event, chain_bytes, rejection))
        return outcome

    def pending_receipts(self) -> int:
        return len(self._receipts)

    def pending_refusals(self) -> int:
        return len(self._refusals)

    def check_receipts(self) -> list[Alarm]:
        """Hold the ledger to every delivery receipt that has come due.

        A receipt quotes the block it was promised against; it is due
        once a strictly later block is public. Due receipts either show
        up in a verified presence proof at the event's index or become
        a ``pod-not-honored`` alarm.
        """
        tip = self.latest_block()
        if tip is None:
            return []
        raised: list[Alarm] = []
        still_waiting = []
        for receipt, event_bytes, index in self._receipts:
            due = (
                tip.block_hash != receipt.block_hash
                and tip.latest_seq >= receipt.t_latest
                and tip.timestamp >= receipt.t_utc
            )
            if not due:
                still_waiting.append((receipt, event_bytes, index))
                continue
            answer = self.query_verified(index)
            if answer is None:
                still_waiting.append((receipt, event_bytes, index))
                continue
            event_hash = bytes(sha256(event_bytes))
            honored = any(bytes(event.hash) == event_hash for _, event in answer.entries)
            if not honored:
                raised.append(
                    self._raise_alarm(
                        ALARM_POD_NOT_HONORED,
                        "promised event is absent from a strictly later block",
                        (receipt.encoded, event_bytes, answer.block.encoded, answer.proof_bytes),
                    )
                )
        self._receipts = still_waiting
        return raised

    def review_refusals(self) -> list[Alarm]:
        """Re-judge signed rejections once the state they cite is public.

        A rejection that names a blocking revocation is audited the same
        way a verification failure is: the stored authorization must
        itself validate as of the revocation's acceptance. One that
        names nothing is replayed through the acceptance rules capped at
        its own ``as_of_seq``. Either way, a refusal the ledger cannot
        support becomes a ``wrongful-refusal`` alarm.
        """
        tip = self.latest_block()
        if tip is None:
            return []
        raised: list[Alarm] = []
        still_pending = []
        for event, chain_bytes, rejection in self._refusals:
            if rejection.as_of_seq > tip.latest_seq:
                still_pending.append((event, chain_bytes, rejection))
                continue
            try:
                alarm = self._review_one_refusal(event, chain_bytes, rejection)
            except (_SnapshotMoved, _QueryFailed):
                still_pending.append((event, chain_bytes, rejection))
                continue
            if alarm is not None:
                raised.append(alarm)
        self._refusals = still_pending
        return raised

    def _review_one_refusal(
        self, event: Event, chain_bytes: bytes | None, rejection: Rejection
    ) -> Alarm | None:
        session = _Session(self)
        if rejection.blocking_event is not None:
            return self._judge_cited_revocation(session, event, rejection)
        if self._should_have_accepted(session, event, chain_bytes, rejection.as_of_seq):
            evidence = [rejection.encoded, event.encoded]
            if chain_bytes is not None:
                evidence.append(chain_bytes)
            return self._raise_alarm(
                ALARM_WRONGFUL_REFUSAL,
                f"event refused with {rejection.code!r} was acceptable "
                f"at sequence {rejection.as_of_seq}",
                tuple(evidence),
            )
        return None

    def _judge_cited_revocation(
        self, session: _Session, event: Event, rejection: Rejection
    ) -> Alarm | None:
        """Check the revocation a rejection leans on: really stored, and
        stored with an authorization that holds up."""
        try:
            revocation = decode_event(rejection.blocking_event)
        except DecodeError:
            return self._raise_alarm(
                ALARM_WRONGFUL_REFUSAL,
                "rejection cites an undecodable revocation",
                (rejection.encoded, event.encoded),
            )
        entries = session.entries_at(bytes(event_index(revocation)))
        stored = any(
            seq == rejection.blocking_seq and stored.hash == revocation.hash
            for seq, stored in entries
        )
        if not stored:
            return self._raise_alarm(
                ALARM_WRONGFUL_REFUSAL,
                f"rejection cites a revocation absent at sequence {rejection.blocking_seq}",
                (rejection.encoded, event.encoded, rejection.blocking_event),
            )
        if not isinstance(revocation, MemberRevocation):
            # A certificate revocation carries its own authority; stored
            # plus issuer-signed is the whole justification.
            return None
        group = revocation.group
        alarm = self._audit_stored_revocation(session, group, rejection.blocking_seq, revocation)
        return alarm

    def _audit_stored_revocation(
        self, session: _Session, group: GroupId, rev_seq: int, revocation: MemberRevocation
    ) -> Alarm | None:
        """Second-phase check shared by verification and refusal review:
        the ledger must hold an authorization for the revocation that
        validated when it accepted it."""
        stored = session.stored_auth(bytes(revocation.hash))
        if stored is None:
            return self._raise_alarm(
                ALARM_UNAUTHORIZED_REVOCATION,
                f"no authorization stored for the revocation at sequence {rev_seq}",
                (revocation.encoded,),
            )
        try:
            stored_chain = decode_chain(stored)
        except DecodeError:
            return self._raise_alarm(
                ALARM_UNAUTHORIZED_REVOCATION,
                f"stored authorization for sequence {rev_seq} does not decode",
                (revocation.encoded, stored),
            )
        # The ledger authorized against state strictly before sequencing
        # the revocation; capping at rev_seq would let a self-revocation
        # retroactively invalidate its own authority.
        audit = check_chain(
            session, stored_chain, group, revocation.issuer, ROLE_LEADER, as_of=rev_seq - 1
        )
        if audit.ok:
            return None
        return self._raise_alarm(
            ALARM_UNAUTHORIZED_REVOCATION,
            f"stored authorization for the revocation at sequence {rev_seq} "
            f"fails validation: {audit.failure.code}",
            (revocation.encoded, stored),
        )

    def _should_have_accepted(
        self, session: _Session, event: Event, chain_bytes: bytes | None, as_of: int
    ) -> bool:
        """Mirror of the service's acceptance pipeline, read through
        proofs and capped at the rejection's own state."""
        if isinstance(event, HierCertificate):
            return False
        chain: tuple[MemberCertificate, ...] = ()
        if chain_bytes is not None:
            try:
                chain = decode_chain(chain_bytes)
            except DecodeError:
                return False
        if isinstance(event, PreimageRevocation):
            if not event.valid():
                return False
        elif not event.verify_signature():
            return False

        index = bytes(event_index(event))
        entries = [(s, e) for s, e in session.entries_at(index) if s <= as_of]
        if any(e.hash == event.hash for _, e in entries):
            return False
        if entries and not isinstance(event, PreimageRevocation):
            if event.freshness <= entries[-1][0]:
                return False
        if isinstance(event, (PreimageRevocation, CertRevocation)):
            return True

        group = event.group
        susp = [(s, e) for s, e in session.entries_at(bytes(suspension_index(group))) if s <= as_of]
        holder = susp[-1][1].issuer if susp and isinstance(susp[-1][1], SuspendEvent) else None
        if isinstance(event, SuspendEvent):
            if holder is not None:
                return False
        elif isinstance(event, ResumeEvent):
            return holder is not None and event.issuer == holder
        elif holder is not None and event.issuer != holder:
            return False
        return check_chain(session, chain, group, event.issuer, ROLE_LEADER, as_of=as_of).ok

    def followup(self) -> list[Alarm]:
        """Run every deferred obligation: receipts due, refusals due."""
        return self.check_receipts() + self.review_refusals()

    # -- membership ------------------------------------------------------------

    def verify_member(
        self,
        subject: PublicKey,
        role: str,
        group: GroupId,
        chain: Sequence[MemberCertificate],
    ) -> MemberDecision:
        for _ in range(3):
            session = _Session(self)
            try:
                return self._verify_member_once(session, subject, role, group, chain)
            except _SnapshotMoved:
                continue
            except _QueryFailed:
                return MemberDecision(STATUS_UNDECIDED, None, None)
        return MemberDecision(STATUS_UNDECIDED, None, None)

    def _verify_member_once(
        self,
        session: _Session,
        subject: PublicKey,
        role: str,
        group: GroupId,
        chain: Sequence[MemberCertificate],
    ) -> MemberDecision:
        result = check_chain(session, chain, group, subject, role)
        if result.ok:
            return MemberDecision(STATUS_MEMBER, None, None)
        if result.revocation is None:
            # Structurally bad, unregistered, or similar: nobody need be
            # accused, the chain simply does not prove membership.
            return MemberDecision(STATUS_NOT_MEMBER, result.failure, None)
        rev_seq, revocation = result.revocation
        if not isinstance(revocation, MemberRevocation):
            # Certificate revocations were already screened for the
            # issuer's own signature; there is nothing left to audit.
            return MemberDecision(STATUS_NOT_MEMBER, result.failure, None)
        alarm = self._audit_stored_revocation(session, group, rev_seq, revocation)
        return MemberDecision(STATUS_NOT_MEMBER, result.failure, alarm)

    # -- issuing --------------------------------------------------------------

    def _default_freshness(self) -> int:
        tip = self.latest_block()
        if tip is None:
            raise NoResponse("cannot stamp an event without a trusted block")
        return tip.latest_seq

    def add_member(
        self,
        leader_key: KeyPair,
        leader_chain: Sequence[MemberCertificate],
        group: GroupId,
        role: str,
        subject: PublicKey,
        freshness: int | None = None,
    ) -> SubmitOutcome | None:
        if freshness is None:
            freshness = self._default_freshness()
        cert = MemberCertificate.issue(leader_key, subject, group, role, freshness)
        return self.submit(cert, leader_chain)

    def revoke_member(
        self,
        leader_key: KeyPair,
        leader_chain: Sequence[MemberCertificate],
        group: GroupId,
        role: str,
        subject: PublicKey,
        freshness: int | None = None,
    ) -> SubmitOutcome | None:
        if freshness is None:
            freshness = self._default_freshness()
        revocation = MemberRevocation.issue(leader_key, subject, group, role, freshness)
        return self.submit(revocation, leader_chain)

    def suspend(
        self,
        leader_key: KeyPair,
        leader_chain: Sequence[MemberCertificate],
        group: GroupId,
        freshness: int | None = None,
    ) -> SubmitOutcome | None:
        if freshness is None:
            freshness = self._default_freshness()
        return self.submit(SuspendEvent.issue(leader_key, group, freshness), leader_chain)

    def resume(
        self,
        leader_key: KeyPair,
        leader_chain: Sequence[MemberCertificate],
        group: GroupId,
        freshness: int | None = None,
    ) -> SubmitOutcome | None:
        if freshness is None:
            freshness = self._default_freshness()
        return self.submit(ResumeEvent.issue(leader_key, group, freshness), leader_chain)

    def revoke_cert(
        self,
        issuer_key: KeyPair,
        certificate: HierCertificate | MemberCertificate,
        freshness: int | None = None,
    ) -> SubmitOutcome | None:
        if freshness is None:
            freshness = self._default_freshness()
        return self.submit(CertRevocation.issue(issuer_key, certificate.hash, freshness))

    def reveal_preimage(self, preimage: bytes) -> SubmitOutcome | None:
        return self.submit(PreimageRevocation.reveal(preimage))

    # -- hierarchical chains ----------------------------------------------------

    def verify_hier_chain(
        self, chain: Sequence[HierCertificate], root_key: PublicKey, now: int
    ) -> bool:
        """Judge a hierarchical delegation chain against the ledger.

        Structure and signatures first, each validity window against the
        caller-supplied clock, then per certificate a verified answer at
        its hash index (an issuer-signed revocation there kills it) and,
        when the certificate commits to one, at its preimage commitment.
        """
        chain = tuple(chain)
        if hier_general_checks(chain, root_key) is not None:
            return False
        try:
            for cert in chain:
                if cert.validity is not None:
                    not_before, not_after = cert.validity
                    if not (not_before <= now <= not_after):
                        return False
                if self._hier_cert_revoked(cert):
                    return False
        except _QueryFailed:
            # Unprovable answers fail closed; the alarm is already raised.
            return False
        return True

    def _hier_cert_revoked(self, cert: HierCertificate) -> bool:
        answer = self.query_verified(bytes(cert.hash))
        if answer is None:
            raise _QueryFailed
        for _, event in answer.entries:
            if (
                isinstance(event, CertRevocation)
                and event.issuer == cert.issuer
                and event.verify_signature()
            ):
                return True
        if cert.revocation_commitment is None:
            return False
        answer = self.query_verified(bytes(cert.revocation_commitment))
        if answer is None:
            raise _QueryFailed
        return any(
            isinstance(event, PreimageRevocation)
            and event.valid()
            and event.commitment == cert.revocation_commitment
            for _, event in answer.entries
        )
