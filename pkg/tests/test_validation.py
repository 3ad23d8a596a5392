"""History-aware chain validation: revocation windows, cert kills, as_of.

Most cases plant events straight into a fake view. The ledger itself
refuses to store some of these histories, but the validator must judge
whatever a (possibly lying) server serves, so it gets tested on the
full space, not just the reachable part.
"""
from __future__ import annotations

import pytest

from revledger.events import (
    CERT_NOT_REGISTERED,
    CERT_REVOKED,
    CertRevocation,
    ISSUER_REVOKED,
    MemberCertificate,
    MemberRevocation,
    REVOKED,
    ROLE_LEADER,
    ROLE_MEMBER,
    WRONG_SUBJECT,
    event_index,
)
from revledger.validation import check_chain

from conftest import key_of

LEADER = key_of("val-leader")
MEMBER = key_of("val-member")


class FakeView:
    """entries_at over hand-planted (seq, event) rows."""

    def __init__(self, *rows):
        self._rows: dict[bytes, list] = {}
        for seq, event in rows:
            self.put(seq, event)

    def put(self, seq, event):
        self._rows.setdefault(bytes(event_index(event)), []).append((seq, event))

    def entries_at(self, index):
        return sorted(self._rows.get(bytes(index), []))


def _cert(issuer, subject, group, role, freshness):
    return MemberCertificate.issue(issuer, subject.public, group, role, freshness)


def _rev(issuer, subject, group, role, freshness):
    return MemberRevocation.issue(issuer, subject.public, group, role, freshness)


def test_structural_failure_short_circuits_without_ledger_access(owner, group):
    class Untouchable:
        def entries_at(self, index):
            raise AssertionError("structural failures must not read history")

    result = check_chain(Untouchable(), (), group, MEMBER.public, ROLE_LEADER)
    assert result.failure.code == WRONG_SUBJECT


def test_registered_grant_validates(owner, group):
    cert = _cert(owner, MEMBER, group, ROLE_MEMBER, 0)
    view = FakeView((1, cert))
    assert check_chain(view, (cert,), group, MEMBER.public, ROLE_MEMBER).ok


def test_unregistered_link_fails(owner, group):
    cert = _cert(owner, MEMBER, group, ROLE_MEMBER, 0)
    result = check_chain(FakeView(), (cert,), group, MEMBER.public, ROLE_MEMBER)
    assert result.failure.code == CERT_NOT_REGISTERED
    assert result.failure.position == 0


def test_revocation_after_grant_kills_it_and_is_returned(owner, group):
    cert = _cert(owner, MEMBER, group, ROLE_MEMBER, 0)
    revoke = _rev(owner, MEMBER, group, ROLE_MEMBER, 1)
    view = FakeView((1, cert), (2, revoke))
    result = check_chain(view, (cert,), group, MEMBER.public, ROLE_MEMBER)
    assert result.failure.code == REVOKED
    assert result.revocation == (2, revoke)


def test_reregistration_outlives_an_old_revocation(owner, group):
    old = _cert(owner, MEMBER, group, ROLE_MEMBER, 0)
    revoke = _rev(owner, MEMBER, group, ROLE_MEMBER, 1)
    fresh = _cert(owner, MEMBER, group, ROLE_MEMBER, 2)
    view = FakeView((1, old), (2, revoke), (3, fresh))
    assert check_chain(view, (fresh,), group, MEMBER.public, ROLE_MEMBER).ok
    # The superseded certificate stays dead.
    assert check_chain(view, (old,), group, MEMBER.public, ROLE_MEMBER).failure.code == REVOKED


def test_grant_survives_later_revocation_of_its_issuer(owner, group):
    # The delegation was made while the issuer was in good standing;
    # pulling the issuer's key afterwards must not orphan the member.
    lead = _cert(owner, LEADER, group, ROLE_LEADER, 0)
    grant = MemberCertificate.issue(LEADER, MEMBER.public, group, ROLE_MEMBER, 1)
    lead_revoked = _rev(owner, LEADER, group, ROLE_LEADER, 2)
    view = FakeView((1, lead), (2, grant), (3, lead_revoked))
    assert check_chain(view, (lead, grant), group, MEMBER.public, ROLE_MEMBER).ok
    # The leader's own credential is gone, though.
    assert check_chain(view, (lead,), group, LEADER.public, ROLE_LEADER).failure.code == REVOKED


def test_revocation_inside_the_issuer_window_breaks_the_link(owner, group):
    lead = _cert(owner, LEADER, group, ROLE_LEADER, 0)
    lead_revoked = _rev(owner, LEADER, group, ROLE_LEADER, 1)
    grant = MemberCertificate.issue(LEADER, MEMBER.public, group, ROLE_MEMBER, 2)
    view = FakeView((1, lead), (2, lead_revoked), (3, grant))
    result = check_chain(view, (lead, grant), group, MEMBER.public, ROLE_MEMBER)
    assert result.failure.code == ISSUER_REVOKED
    assert result.failure.position == 1
    assert result.revocation == (2, lead_revoked)


def test_issuer_window_opens_at_the_issuers_own_registration(owner, group):
    # A revocation older than the issuer's current certificate is
    # superseded by that registration and must not count.
    stale_revocation = _rev(owner, LEADER, group, ROLE_LEADER, 0)
    lead = _cert(owner, LEADER, group, ROLE_LEADER, 1)
    grant = MemberCertificate.issue(LEADER, MEMBER.public, group, ROLE_MEMBER, 2)
    view = FakeView((1, stale_revocation), (2, lead), (3, grant))
    assert check_chain(view, (lead, grant), group, MEMBER.public, ROLE_MEMBER).ok


def test_owner_leadership_is_positional_too(owner, group):
    # Revoking the owner's leadership cuts off chains rooted after the
    # revocation but not ones rooted before it.
    before = _cert(owner, LEADER, group, ROLE_LEADER, 0)
    owner_revoked = MemberRevocation.issue(owner, owner.public, group, ROLE_LEADER, 1)
    after = _cert(owner, MEMBER, group, ROLE_MEMBER, 2)
    view = FakeView((1, before), (2, owner_revoked), (3, after))
    assert check_chain(view, (before,), group, LEADER.public, ROLE_LEADER).ok
    result = check_chain(view, (after,), group, MEMBER.public, ROLE_MEMBER)
    assert result.failure.code == ISSUER_REVOKED
    assert result.failure.position == 0


def test_cert_revocation_kills_one_link_everywhere(owner, group):
    lead = _cert(owner, LEADER, group, ROLE_LEADER, 0)
    grant = MemberCertificate.issue(LEADER, MEMBER.public, group, ROLE_MEMBER, 1)
    kill = CertRevocation.issue(owner, lead.hash, 2)
    view = FakeView((1, lead), (2, grant), (3, kill))
    result = check_chain(view, (lead, grant), group, MEMBER.public, ROLE_MEMBER)
    assert result.failure.code == CERT_REVOKED
    assert result.failure.position == 0
    assert result.revocation == (3, kill)


def test_cert_revocation_by_a_stranger_is_ignored(owner, group):
    lead = _cert(owner, LEADER, group, ROLE_LEADER, 0)
    stranger = key_of("val-stranger")
    noise = CertRevocation.issue(stranger, lead.hash, 1)
    view = FakeView((1, lead), (2, noise))
    assert check_chain(view, (lead,), group, LEADER.public, ROLE_LEADER).ok


def test_reissued_link_replaces_a_cert_revoked_one(owner, group):
    lead = _cert(owner, LEADER, group, ROLE_LEADER, 0)
    kill = CertRevocation.issue(owner, lead.hash, 1)
    reissued = _cert(owner, LEADER, group, ROLE_LEADER, 2)
    view = FakeView((1, lead), (2, kill), (3, reissued))
    assert check_chain(view, (lead,), group, LEADER.public, ROLE_LEADER).failure.code == CERT_REVOKED
    assert check_chain(view, (reissued,), group, LEADER.public, ROLE_LEADER).ok


def test_as_of_caps_the_visible_history(owner, group):
    cert = _cert(owner, MEMBER, group, ROLE_MEMBER, 0)
    revoke = _rev(owner, MEMBER, group, ROLE_MEMBER, 4)
    view = FakeView((5, cert), (7, revoke))
    chain = (cert,)
    args = (chain, group, MEMBER.public, ROLE_MEMBER)
    assert check_chain(view, *args, as_of=4).failure.code == CERT_NOT_REGISTERED
    assert check_chain(view, *args, as_of=5).ok
    assert check_chain(view, *args, as_of=6).ok
    assert check_chain(view, *args, as_of=7).failure.code == REVOKED
    assert check_chain(view, *args).failure.code == REVOKED


def test_as_of_hides_a_late_cert_revocation(owner, group):
    cert = _cert(owner, MEMBER, group, ROLE_MEMBER, 0)
    kill = CertRevocation.issue(owner, cert.hash, 3)
    view = FakeView((1, cert), (4, kill))
    chain = (cert,)
    assert check_chain(view, chain, group, MEMBER.public, ROLE_MEMBER, as_of=3).ok
    assert (
        check_chain(view, chain, group, MEMBER.public, ROLE_MEMBER, as_of=4).failure.code
        == CERT_REVOKED
    )


def test_service_view_agrees_with_fake_view(service, owner, group):
    # Same judgement whether history comes from the live tree or a
    # hand-planted view; the service path goes through real submission.
    cert = _cert(owner, MEMBER, group, ROLE_MEMBER, 0)
    assert service.submit(cert.encoded).accepted
    revoke = _rev(owner, MEMBER, group, ROLE_MEMBER, 2)
    assert service.submit(revoke.encoded).accepted
    fake = FakeView((1, cert), (2, revoke))
    via_service = service.internal_check_chain((cert,), group, MEMBER.public, ROLE_MEMBER)
    via_fake = check_chain(fake, (cert,), group, MEMBER.public, ROLE_MEMBER)
    assert via_service.failure.code == via_fake.failure.code == REVOKED
    assert via_service.revocation[0] == via_fake.revocation[0]
