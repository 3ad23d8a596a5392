"""The verifying client: every answer checked, every lie an alarm."""
from __future__ import annotations

import pytest

from revledger.auditor import ReplicaAuditor
from revledger.client import (
    ALARM_FORK,
    ALARM_INVALID_PROOF,
    ALARM_NO_RESPONSE,
    ALARM_POD_NOT_HONORED,
    ALARM_UNAUTHORIZED_REVOCATION,
    ALARM_WRONGFUL_REFUSAL,
    AccessClient,
    STATUS_MEMBER,
    STATUS_NOT_MEMBER,
    STATUS_UNDECIDED,
)
from revledger.crypto import sha256
from revledger.events import (
    CERT_NOT_REGISTERED,
    HierCertificate,
    MemberCertificate,
    MemberRevocation,
    REVOKED,
    ROLE_LEADER,
    ROLE_MEMBER,
    encode_chain,
)
from revledger.faults import (
    FAULT_FORK,
    FAULT_OMIT_AFTER_POD,
    FAULT_REFUSE_VALID,
    FAULT_STORE_UNAUTHORIZED,
    FaultyLedger,
    UnresponsiveChannel,
)
from revledger.ledger import Block, QueryAnswer, REJECT_UNAUTHORIZED

from conftest import ManualClock, key_of

LEADER = key_of("cli-leader")
MEMBER = key_of("cli-member")


@pytest.fixture
def client(service, utp_key):
    return AccessClient(service, utp_key.public)


def _leader_cert(owner, group, freshness=0):
    return MemberCertificate.issue(owner, LEADER.public, group, ROLE_LEADER, freshness)


def _member_cert(group, freshness=1):
    return MemberCertificate.issue(LEADER, MEMBER.public, group, ROLE_MEMBER, freshness)


def test_verify_member_accepts_a_registered_chain(service, client, owner, group):
    leader_cert = _leader_cert(owner, group)
    assert service.submit(leader_cert.encoded).accepted
    member_cert = _member_cert(group)
    assert service.submit(member_cert.encoded, encode_chain([leader_cert])).accepted
    service.publish_block()

    decision = client.verify_member(MEMBER.public, ROLE_MEMBER, group, [leader_cert, member_cert])
    assert decision.status == STATUS_MEMBER
    assert decision.failure is None and decision.alarm is None
    assert client.alarms == []


def test_verify_member_rejects_an_unregistered_chain(service, client, owner, group):
    service.publish_block()
    cert = _leader_cert(owner, group)  # never submitted
    decision = client.verify_member(LEADER.public, ROLE_LEADER, group, [cert])
    assert decision.status == STATUS_NOT_MEMBER
    assert decision.failure.code == CERT_NOT_REGISTERED
    assert decision.alarm is None


def test_honest_revocation_raises_no_alarm(service, client, owner, group):
    cert = _leader_cert(owner, group)
    assert service.submit(cert.encoded).accepted
    revoke = MemberRevocation.issue(owner, LEADER.public, group, ROLE_LEADER, 2)
    assert service.submit(revoke.encoded).accepted
    service.publish_block()

    decision = client.verify_member(LEADER.public, ROLE_LEADER, group, [cert])
    assert decision.status == STATUS_NOT_MEMBER
    assert decision.failure.code == REVOKED
    # Phase two ran and the stored authorization held up.
    assert decision.alarm is None and client.alarms == []


def test_unjustified_stored_revocation_raises_the_alarm(utp_key, owner, group, tmp_path):
    service = FaultyLedger(utp_key, block_events=1 << 30, block_seconds=float(1 << 30))
    cert = _leader_cert(owner, group)
    assert service.submit(cert.encoded).accepted

    stranger = key_of("cli-stranger")
    forged = MemberRevocation.issue(stranger, LEADER.public, group, ROLE_LEADER, 2)
    service.arm(FAULT_STORE_UNAUTHORIZED)
    assert service.submit(forged.encoded).accepted
    assert service.fired == (FAULT_STORE_UNAUTHORIZED,)
    service.publish_block()

    client = AccessClient(service, utp_key.public)
    decision = client.verify_member(LEADER.public, ROLE_LEADER, group, [cert])
    # Caught cheating, but a cheater's ledger still cannot vouch anyone in.
    assert decision.status == STATUS_NOT_MEMBER
    assert decision.alarm is not None
    assert decision.alarm.kind == ALARM_UNAUTHORIZED_REVOCATION
    assert client.alarms_of(ALARM_UNAUTHORIZED_REVOCATION) == [decision.alarm]


class _WrongIndexChannel:
    """Answers every query with the proof for some other index."""

    def __init__(self, inner):
        self._inner = inner

    def __getattr__(self, name):
        return getattr(self._inner, name)

    def query(self, index):
        return self._inner.query(b"\x5c" * 32)


def test_proof_for_the_wrong_index_is_an_invalid_proof(service, utp_key, owner, group):
    assert service.submit(_leader_cert(owner, group).encoded).accepted
    service.publish_block()
    client = AccessClient(_WrongIndexChannel(service), utp_key.public)
    decision = client.verify_member(LEADER.public, ROLE_LEADER, group, [_leader_cert(owner, group)])
    assert decision.status == STATUS_UNDECIDED
    alarms = client.alarms_of(ALARM_INVALID_PROOF)
    assert alarms and "different index" in alarms[0].detail


class _BodySwapChannel(_WrongIndexChannel):
    def query(self, index):
        answer = self._inner.query(index)
        if not answer.bodies:
            return answer
        doctored = [b"\x00" + body[1:] for body in answer.bodies]
        return QueryAnswer(answer.block, answer.proof, tuple(doctored))


def test_doctored_entry_bodies_are_an_invalid_proof(service, utp_key, owner, group):
    cert = _leader_cert(owner, group)
    assert service.submit(cert.encoded).accepted
    service.publish_block()
    client = AccessClient(_BodySwapChannel(service), utp_key.public)
    decision = client.verify_member(LEADER.public, ROLE_LEADER, group, [cert])
    assert decision.status == STATUS_UNDECIDED
    assert any("hashes wrong" in a.detail for a in client.alarms_of(ALARM_INVALID_PROOF))


def test_silence_is_undecided_never_member(service, utp_key, owner, group):
    cert = _leader_cert(owner, group)
    assert service.submit(cert.encoded).accepted
    service.publish_block()
    channel = UnresponsiveChannel(service)
    client = AccessClient(channel, utp_key.public)
    channel.silent = True
    decision = client.verify_member(LEADER.public, ROLE_LEADER, group, [cert])
    assert decision.status == STATUS_UNDECIDED
    assert client.alarms_of(ALARM_NO_RESPONSE)
    assert client.latest_block() is None
    # Service recovers, so does the client.
    channel.silent = False
    assert client.verify_member(LEADER.public, ROLE_LEADER, group, [cert]).status == STATUS_MEMBER


class _TwoFaced:
    """Serves one face per call, then sticks with the last."""

    def __init__(self, faces):
        self._faces = list(faces)

    def latest_block(self):
        if len(self._faces) > 1:
            return self._faces.pop(0)
        return self._faces[0]


def test_client_spots_a_fork_across_its_own_reads(service, utp_key, owner, group):
    assert service.submit(_leader_cert(owner, group).encoded).accepted
    face_a = service.publish_block()
    face_b = Block.build(
        utp_key, face_a.height, face_a.prev_hash, face_a.root, face_a.latest_seq, face_a.timestamp + 1
    )
    client = AccessClient(_TwoFaced([face_a, face_b]), utp_key.public)
    assert client.latest_block() == face_a
    assert client.latest_block() is None  # second face at the same height
    alarms = client.alarms_of(ALARM_FORK)
    assert alarms and alarms[0].evidence == (face_a.encoded, face_b.encoded)


def test_auditor_endorsement_exposes_a_forked_answer(utp_key, owner, group):
    service = FaultyLedger(utp_key, block_events=1 << 30, block_seconds=float(1 << 30))
    assert service.submit(_leader_cert(owner, group).encoded).accepted
    service.arm(FAULT_FORK)
    service.publish_block()  # honest face into the feed, forged face to clients

    auditor = ReplicaAuditor(utp_key.public, key=key_of("cli-auditor"))
    auditor.pull(service)  # endorses the honest face
    assert auditor.healthy

    # A fresh client has no first face to compare against; the
    # endorsement is what catches the lie.
    client = AccessClient(service, utp_key.public, auditors=[auditor])
    assert client.latest_block() is None
    alarms = client.alarms_of(ALARM_FORK)
    assert alarms and "auditor endorsed" in alarms[0].detail


def test_receipts_are_discharged_by_a_later_block(service, client, owner, group):
    service.publish_block()
    outcome = client.submit(_leader_cert(owner, group))
    assert outcome.accepted
    assert client.pending_receipts() == 1
    # Not due yet: the promised block is still the tip.
    assert client.check_receipts() == []
    assert client.pending_receipts() == 1
    service.publish_block()
    assert client.check_receipts() == []
    assert client.pending_receipts() == 0
    assert client.alarms == []


def test_dropped_event_after_receipt_is_pod_not_honored(utp_key, owner, group):
    service = FaultyLedger(utp_key, block_events=1 << 30, block_seconds=float(1 << 30))
    service.publish_block()
    client = AccessClient(service, utp_key.public)

    service.arm(FAULT_OMIT_AFTER_POD)
    outcome = client.submit(_leader_cert(owner, group))
    assert outcome.accepted  # the receipt is real, the recording never happened
    assert service.fired == (FAULT_OMIT_AFTER_POD,)

    clock = ManualClock()
    service._clock = clock  # move time so the next block is strictly later
    clock.advance(5)
    service.publish_block()
    raised = client.check_receipts()
    assert [a.kind for a in raised] == [ALARM_POD_NOT_HONORED]
    assert client.pending_receipts() == 0


def test_wrongful_refusal_is_flagged_on_review(utp_key, owner, group):
    service = FaultyLedger(utp_key, block_events=1 << 30, block_seconds=float(1 << 30))
    service.publish_block()
    client = AccessClient(service, utp_key.public)

    service.arm(FAULT_REFUSE_VALID)
    outcome = client.submit(_leader_cert(owner, group))
    assert not outcome.accepted
    assert outcome.rejection.code == REJECT_UNAUTHORIZED
    assert client.pending_refusals() == 1

    service.publish_block()
    raised = client.review_refusals()
    assert [a.kind for a in raised] == [ALARM_WRONGFUL_REFUSAL]
    assert client.pending_refusals() == 0


def test_honest_refusal_survives_review(service, client, owner, group):
    service.publish_block()
    stranger = key_of("cli-stranger")
    cert = MemberCertificate.issue(stranger, MEMBER.public, group, ROLE_MEMBER, 0)
    outcome = client.submit(cert)
    assert not outcome.accepted and outcome.rejection.code == REJECT_UNAUTHORIZED
    service.publish_block()
    assert client.review_refusals() == []
    assert client.pending_refusals() == 0
    assert client.alarms == []


def test_refusal_citing_a_real_revocation_survives_review(service, client, owner, group):
    leader_cert = _leader_cert(owner, group)
    assert service.submit(leader_cert.encoded).accepted
    revoke = MemberRevocation.issue(owner, LEADER.public, group, ROLE_LEADER, 2)
    assert service.submit(revoke.encoded).accepted
    service.publish_block()

    outcome = client.submit(_member_cert(group, freshness=3), chain=[leader_cert])
    assert not outcome.accepted
    assert outcome.rejection.blocking_event is not None
    service.publish_block()
    assert client.review_refusals() == []
    assert client.alarms == []


def test_followup_runs_both_obligations(utp_key, owner, group):
    service = FaultyLedger(utp_key, block_events=1 << 30, block_seconds=float(1 << 30))
    service.publish_block()
    client = AccessClient(service, utp_key.public)

    service.arm(FAULT_REFUSE_VALID)
    client.submit(_leader_cert(owner, group))
    service.arm(FAULT_OMIT_AFTER_POD)
    client.submit(_leader_cert(owner, group, freshness=0))

    clock = ManualClock()
    service._clock = clock
    clock.advance(5)
    service.publish_block()
    kinds = sorted(a.kind for a in client.followup())
    assert kinds == [ALARM_POD_NOT_HONORED, ALARM_WRONGFUL_REFUSAL]


def test_issuing_helpers_stamp_freshness_from_the_tip(service, client, owner, group):
    service.publish_block()
    outcome = client.add_member(owner, (), group, ROLE_LEADER, LEADER.public)
    assert outcome.accepted
    service.publish_block()

    leader_chain = (_leader_cert(owner, group),)
    assert client.add_member(LEADER, leader_chain, group, ROLE_MEMBER, MEMBER.public).accepted
    assert client.suspend(owner, (), group).accepted
    # The tip has not caught up with the suspension, so the default
    # stamp would be stale against the same index; the caller must lead.
    assert client.resume(owner, (), group, freshness=4).accepted
    service.publish_block()
    assert client.revoke_member(LEADER, leader_chain, group, ROLE_MEMBER, MEMBER.public).accepted
    assert client.alarms == []


def test_revoke_cert_and_preimage_round_trip(service, client, owner, group):
    service.publish_block()
    cert = _leader_cert(owner, group)
    assert service.submit(cert.encoded).accepted
    service.publish_block()
    assert client.revoke_cert(owner, cert).accepted

    preimage = b"cli-burn-string"
    commitment = sha256(preimage)
    hier = HierCertificate.issue(owner, LEADER.public, {"relay"}, revocation_commitment=commitment)
    assert hier.revocation_commitment == commitment
    assert client.reveal_preimage(preimage).accepted
    assert client.alarms == []


# -- hierarchical chains -------------------------------------------------------


@pytest.fixture
def hier_chain(owner):
    intermediate = key_of("cli-hier-mid")
    worker = key_of("cli-hier-leaf")
    top = HierCertificate.issue(
        owner, intermediate.public, {"relay", "sign"}, validity=(1000, 2000)
    )
    leaf = HierCertificate.issue(
        intermediate,
        worker.public,
        {"sign"},
        revocation_commitment=sha256(b"hier-burn"),
    )
    return top, leaf, intermediate


def test_hier_chain_verifies_until_revoked(service, client, owner, hier_chain):
    top, leaf, intermediate = hier_chain
    service.publish_block()
    assert client.verify_hier_chain([top, leaf], owner.public, now=1500)
    assert not client.verify_hier_chain([top, leaf], owner.public, now=999)  # too early
    assert not client.verify_hier_chain([leaf], owner.public, now=1500)  # wrong root

    # Only the issuer's signed revocation counts.
    assert client.revoke_cert(intermediate, leaf).accepted
    service.publish_block()
    assert not client.verify_hier_chain([top, leaf], owner.public, now=1500)
    assert client.verify_hier_chain([top], owner.public, now=1500)


def test_hier_chain_dies_with_its_preimage(service, client, owner, hier_chain):
    top, leaf, _ = hier_chain
    service.publish_block()
    assert client.verify_hier_chain([top, leaf], owner.public, now=1500)
    assert client.reveal_preimage(b"hier-burn").accepted
    service.publish_block()
    assert not client.verify_hier_chain([top, leaf], owner.public, now=1500)


def test_hier_chain_fails_closed_when_the_ledger_goes_dark(service, utp_key, owner, hier_chain):
    top, leaf, _ = hier_chain
    service.publish_block()
    channel = UnresponsiveChannel(service)
    client = AccessClient(channel, utp_key.public)
    channel.silent = True
    assert not client.verify_hier_chain([top, leaf], owner.public, now=1500)
    assert client.alarms_of(ALARM_NO_RESPONSE)
