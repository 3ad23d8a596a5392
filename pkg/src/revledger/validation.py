"""Certificate-chain validation against ledger history.

A delegation chain is only as good as the ledger says it is: every
certificate in it must be registered, and no link may have been revoked
where the chain relies on it. Key revocations are positional. For link
``i`` registered at sequence ``t_i`` (with ``t_0 = 0`` for the group
owner's built-in leadership), the issuer's leadership must survive
``(t_{i-1}, t_i]``, and the final grant must survive everything after
``t_n``. A key revocation landing after a link was used does not count
against it; re-registering after a revocation is the legitimate way to
restore a member.

Certificate revocations are not positional: a revoked certificate is
dead everywhere, whenever the revocation landed, and every chain running
through it fails until that link is reissued. One counts only when
signed by the certificate's own issuer; entries anyone else managed to
park at the certificate's index are ignored.

``as_of`` caps the history considered. It exists for re-validating a
stored revocation at the moment the ledger accepted it: without the
cap, revoking a revoker would retroactively poison revocations they
issued while still in good standing, and honest verifiers would start
alarming on a ledger that did nothing wrong.

Validation reads history through the ``LedgerView`` protocol. The
service implements it with direct tree access; the client implements it
with proof-checked query responses. They share this module's logic but
nothing about trust.
"""
from __future__ import annotations

from typing import NamedTuple, Protocol, Sequence

from .events import (
    CERT_REVOKED,
    CheckFailure,
    CertRevocation,
    Event,
    GroupId,
    ISSUER_REVOKED,
    MemberCertificate,
    MemberRevocation,
    REVOKED,
    ROLE_LEADER,
    CERT_NOT_REGISTERED,
    general_checks,
    membership_index,
)
from .crypto import PublicKey


class LedgerView(Protocol):
    """Read access to accepted events, however obtained."""

    def entries_at(self, index: bytes) -> Sequence[tuple[int, Event]]:
        """Events stored at an index, ascending by sequence number."""


class ChainCheck(NamedTuple):
    failure: CheckFailure | None
    revocation: tuple[int, Event] | None = None

    @property
    def ok(self) -> bool:
        return self.failure is None


def check_chain(
    view: LedgerView,
    chain: Sequence[MemberCertificate],
    group: GroupId,
    subject: PublicKey,
    role: str,
    *,
    as_of: int | None = None,
) -> ChainCheck:
    """Validate that ``chain`` grants ``subject`` the ``role`` in ``group``.

    Structural checks come first and need no ledger access. After that,
    each link is located in the ledger by certificate hash, then the
    revocation rules described in the module docstring are applied.
    When a stored revocation is what breaks the chain, it is returned so
    the caller can audit the revocation itself.
    """
    failure = general_checks(chain, subject, group, role)
    if failure is not None:
        return ChainCheck(failure)

    registered: list[int] = []
    for pos, cert in enumerate(chain):
        index = membership_index(group, cert.role, cert.subject)
        found = None
        for seq, event in view.entries_at(index):
            if as_of is not None and seq > as_of:
                break
            if isinstance(event, MemberCertificate) and event.hash == cert.hash:
                found = seq
                break
        if found is None:
            return ChainCheck(
                CheckFailure(CERT_NOT_REGISTERED, f"chain link {pos} is not registered", pos)
            )
        registered.append(found)

    window_start = 0
    for pos, cert in enumerate(chain):
        hit = _cert_revocation(view, cert, as_of)
        if hit is not None:
            return ChainCheck(
                CheckFailure(
                    CERT_REVOKED,
                    f"certificate of chain link {pos} was revoked at sequence {hit[0]}",
                    pos,
                ),
                hit,
            )
        hit = _revocation_in(
            view, group, ROLE_LEADER, cert.issuer, window_start, registered[pos]
        )
        if hit is not None:
            return ChainCheck(
                CheckFailure(
                    ISSUER_REVOKED,
                    f"issuer of chain link {pos} was revoked at sequence {hit[0]}",
                    pos,
                ),
                hit,
            )
        window_start = registered[pos]

    hit = _revocation_in(view, group, role, subject, window_start, as_of)
    if hit is not None:
        return ChainCheck(
            CheckFailure(REVOKED, f"grant was revoked at sequence {hit[0]}"), hit
        )
    return ChainCheck(None)


def _revocation_in(
    view: LedgerView,
    group: GroupId,
    role: str,
    subject: PublicKey,
    after: int,
    until: int | None,
) -> tuple[int, Event] | None:
    index = membership_index(group, role, subject)
    for seq, event in view.entries_at(index):
        if seq <= after:
            continue
        if until is not None and seq > until:
            break
        if isinstance(event, MemberRevocation):
            return seq, event
    return None


def _cert_revocation(
    view: LedgerView,
    cert: MemberCertificate,
    as_of: int | None,
) -> tuple[int, Event] | None:
    for seq, event in view.entries_at(cert.hash):
        if as_of is not None and seq > as_of:
            break
        if (
            isinstance(event, CertRevocation)
            and event.issuer == cert.issuer
            and event.verify_signature()
        ):
            return seq, event
    return None
