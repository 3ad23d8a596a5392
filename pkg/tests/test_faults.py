"""Fault injection mechanics: armed faults fire once, on the right seam."""
from __future__ import annotations

import pytest

from revledger.auditor import (
    FORK_DETECTED,
    NON_MONOTONIC_TIMESTAMP,
    ROOT_MISMATCH,
    ReplicaAuditor,
    StreamAuditor,
)
from revledger.events import (
    MemberCertificate,
    MemberRevocation,
    ROLE_LEADER,
    ROLE_MEMBER,
    encode_chain,
    event_index,
)
from revledger.faults import (
    ALL_FAULTS,
    FAULT_DELETE_ENTRY,
    FAULT_DROP_UPDATE,
    FAULT_FORK,
    FAULT_MUTATE_HISTORY,
    FAULT_OMIT_AFTER_POD,
    FAULT_REFUSE_VALID,
    FAULT_REUSED_SEQ,
    FAULT_STORE_UNAUTHORIZED,
    FaultyLedger,
    UnresponsiveChannel,
)
from revledger.ledger import REJECT_UNAUTHORIZED
from revledger.wire import NoResponse

from conftest import key_of

LEADER = key_of("flt-leader")
MEMBER = key_of("flt-member")


@pytest.fixture
def faulty(utp_key):
    service = FaultyLedger(utp_key, block_events=1 << 30, block_seconds=float(1 << 30))
    yield service
    service.close()


def _cert(owner, group, subject=None, freshness=0):
    return MemberCertificate.issue(owner, subject or LEADER.public, group, ROLE_LEADER, freshness)


def test_unknown_fault_is_refused(faulty):
    with pytest.raises(ValueError, match="unknown fault"):
        faulty.arm("set-the-building-on-fire")


def test_unarmed_service_is_the_honest_service(faulty, utp_key, owner, group):
    assert faulty.submit(_cert(owner, group).encoded).accepted
    faulty.publish_block()
    auditor = ReplicaAuditor(utp_key.public)
    assert auditor.pull(faulty) == []
    assert faulty.fired == ()


def test_each_fault_fires_exactly_once(faulty, owner, group):
    faulty.arm(FAULT_REFUSE_VALID)
    first = faulty.submit(_cert(owner, group).encoded)
    assert not first.accepted and first.rejection.code == REJECT_UNAUTHORIZED
    # Same submission again: the fault was consumed, honesty is back.
    second = faulty.submit(_cert(owner, group).encoded)
    assert second.accepted
    assert faulty.fired == (FAULT_REFUSE_VALID,)


def test_arming_covers_every_catalogued_fault(faulty):
    for kind in ALL_FAULTS:
        faulty.arm(kind)  # arming alone never touches behavior
    assert faulty.fired == ()


@pytest.mark.parametrize("fault", [FAULT_MUTATE_HISTORY, FAULT_DELETE_ENTRY])
def test_history_tampering_breaks_the_published_root(faulty, utp_key, owner, group, fault):
    assert faulty.submit(_cert(owner, group).encoded).accepted
    faulty.publish_block()
    auditor = StreamAuditor(utp_key.public)
    assert auditor.pull(faulty) == []

    grant = MemberCertificate.issue(LEADER, MEMBER.public, group, ROLE_MEMBER, 2)
    faulty.arm(fault)
    assert faulty.submit(grant.encoded, encode_chain([_cert(owner, group)])).accepted
    faulty.publish_block()
    assert faulty.fired[-1] == fault
    assert [m.kind for m in auditor.pull(faulty)] == [ROOT_MISMATCH]


def test_dropped_update_is_caught_at_the_next_block(faulty, utp_key, owner, group):
    assert faulty.submit(_cert(owner, group).encoded).accepted
    faulty.publish_block()
    stream = StreamAuditor(utp_key.public)
    replica = ReplicaAuditor(utp_key.public)
    assert stream.pull(faulty) == [] and replica.pull(faulty) == []

    faulty.arm(FAULT_DROP_UPDATE)
    revocation_free = _cert(owner, group, subject=MEMBER.public, freshness=2)
    assert faulty.submit(revocation_free.encoded).accepted
    faulty.publish_block()
    assert [m.kind for m in stream.pull(faulty)] == [ROOT_MISMATCH]
    assert [m.kind for m in replica.pull(faulty)] == [ROOT_MISMATCH]


def test_reused_sequence_number_is_caught_in_the_feed(faulty, utp_key, owner, group):
    assert faulty.submit(_cert(owner, group).encoded).accepted
    auditor = StreamAuditor(utp_key.public)
    faulty.publish_block()
    assert auditor.pull(faulty) == []

    faulty.arm(FAULT_REUSED_SEQ)
    assert faulty.submit(_cert(owner, group, subject=MEMBER.public, freshness=1).encoded).accepted
    assert faulty.fired == (FAULT_REUSED_SEQ,)
    assert [m.kind for m in auditor.pull(faulty)] == [NON_MONOTONIC_TIMESTAMP]


def test_fork_fault_serves_two_faces(faulty, utp_key, owner, group):
    assert faulty.submit(_cert(owner, group).encoded).accepted
    auditor = ReplicaAuditor(utp_key.public)

    faulty.arm(FAULT_FORK)
    forged = faulty.publish_block()
    assert auditor.pull(faulty) == []  # the feed carries the honest face
    honest = auditor.last_block
    assert honest.height == forged.height and honest.block_hash != forged.block_hash

    # Queries and the tip endorse the forged face while it lives.
    assert faulty.latest_block() == forged
    index = bytes(event_index(_cert(owner, group)))
    assert faulty.query(index).block == forged

    found = auditor.observe_block(faulty.latest_block())
    assert found is not None and found.kind == FORK_DETECTED

    faulty.publish_block()  # an honest publish retires the forged face
    assert faulty.latest_block().height == forged.height + 1


def test_omitted_event_leaves_a_receipt_with_nothing_behind_it(faulty, owner, group):
    cert = _cert(owner, group)
    faulty.arm(FAULT_OMIT_AFTER_POD)
    outcome = faulty.submit(cert.encoded)
    assert outcome.accepted and outcome.receipt.verify(faulty._key.public)
    assert faulty.fired == (FAULT_OMIT_AFTER_POD,)
    # No trace: the tree never saw it and the sequence was rolled back.
    assert not faulty.tree.lookup(bytes(event_index(cert))).present
    resubmitted = faulty.submit(cert.encoded)
    assert resubmitted.accepted  # not even a duplicate


def test_unauthorized_revocation_is_stored_without_authority(faulty, owner, group):
    assert faulty.submit(_cert(owner, group).encoded).accepted
    stranger = key_of("flt-stranger")
    forged = MemberRevocation.issue(stranger, LEADER.public, group, ROLE_LEADER, 2)
    faulty.arm(FAULT_STORE_UNAUTHORIZED)
    assert faulty.submit(forged.encoded).accepted
    assert faulty.fired == (FAULT_STORE_UNAUTHORIZED,)
    answer = faulty.fetch_auth(bytes(forged.hash))
    assert answer.chain_bytes is not None  # stored, but an empty claim


def test_unresponsive_channel_toggles(service, owner, group):
    channel = UnresponsiveChannel(service)
    assert channel.latest_block() == service.latest_block()
    channel.silent = True
    with pytest.raises(NoResponse):
        channel.latest_block()
    with pytest.raises(NoResponse):
        channel.submit(_cert(owner, group).encoded)
    channel.silent = False
    assert channel.submit(_cert(owner, group).encoded).accepted
    assert channel.tree is service.tree  # plain attributes pass through
