"""Brute-force replay of group history, used as ground truth in tests.

This is the second, independent route to the membership answer. The
validator in `validation` walks certificate chains against per-index
event lists; this module ignores chains entirely and just folds the
global event order: every group's owner holds leadership from the
start, an event counts only if its issuer holds leadership when the
event lands, a counted add grants the named role, a counted revoke
clears it, everything else is ignored. Differential tests drive both
routes over the same accepted-event log and demand identical verdicts.

Nothing here consults signatures, proofs, or chain structure, on
purpose: by the time an event is in the accepted log the ledger has
vouched for those, and re-deriving the roles from order alone is what
makes the comparison meaningful. Keep it slow and obvious.
"""
from __future__ import annotations

from pathlib import Path
from typing import Iterable

from .crypto import PublicKey
from .events import (
    CertRevocation,
    Event,
    GroupId,
    MemberCertificate,
    MemberRevocation,
    PreimageRevocation,
    ResumeEvent,
    ROLE_LEADER,
    SuspendEvent,
    decode_event,
)
from .ledger import read_event_log


class RoleAssignment:
    """Who holds which role in which group, plus active suspensions.

    The owner's leadership needs no entry: any (group, leader, owner)
    triple defaults to true, and an explicit entry (from a revoke, or a
    later re-add) overrides the default. Entries matching the default
    are dropped on write so two equal states compare equal regardless
    of how they were reached.
    """

    def __init__(self) -> None:
        self._roles: dict[tuple[GroupId, str, PublicKey], bool] = {}
        self._suspended: dict[GroupId, PublicKey] = {}

    @staticmethod
    def _default(group: GroupId, role: str, key: PublicKey) -> bool:
        return role == ROLE_LEADER and key == group.owner_key

    def has_role(self, group: GroupId, role: str, key: PublicKey) -> bool:
        return self._roles.get((group, role, key), self._default(group, role, key))

    def is_leader(self, group: GroupId, key: PublicKey) -> bool:
        return self.has_role(group, ROLE_LEADER, key)

    def suspension_holder(self, group: GroupId) -> PublicKey | None:
        return self._suspended.get(group)

    def _set(self, group: GroupId, role: str, key: PublicKey, value: bool) -> None:
        if value == self._default(group, role, key):
            self._roles.pop((group, role, key), None)
        else:
            self._roles[(group, role, key)] = value

    def _counts(self, group: GroupId, issuer: PublicKey) -> bool:
        """Whether an event from ``issuer`` about ``group`` has effect:
        leadership at this instant, and no foreign suspension."""
        holder = self._suspended.get(group)
        if holder is not None and issuer != holder:
            return False
        return self.is_leader(group, issuer)

    def apply(self, event: Event) -> None:
        if isinstance(event, MemberCertificate):
            if self._counts(event.group, event.issuer):
                self._set(event.group, event.role, event.subject, True)
        elif isinstance(event, MemberRevocation):
            if self._counts(event.group, event.issuer):
                self._set(event.group, event.role, event.subject, False)
        elif isinstance(event, SuspendEvent):
            if self._suspended.get(event.group) is None and self.is_leader(
                event.group, event.issuer
            ):
                self._suspended[event.group] = event.issuer
        elif isinstance(event, ResumeEvent):
            if self._suspended.get(event.group) == event.issuer:
                del self._suspended[event.group]
        # Certificate and preimage revocations do not move roles.

    def copy(self) -> "RoleAssignment":
        clone = RoleAssignment()
        clone._roles = dict(self._roles)
        clone._suspended = dict(self._suspended)
        return clone

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RoleAssignment):
            return NotImplemented
        return self._roles == other._roles and self._suspended == other._suspended

    def describe(self) -> dict:
        return {
            "overrides": len(self._roles),
            "suspended_groups": len(self._suspended),
        }


class ReplayOracle:
    """Replays an ordered accepted-event history and answers role and
    chain-liveness questions about any prefix of it."""

    def __init__(self, history: Iterable[tuple[int, Event]] = ()):
        self._history: list[tuple[int, Event]] = []
        self._state = RoleAssignment()
        self._revoked_certs: list[tuple[int, PublicKey, bytes]] = []
        self._preimages: list[tuple[int, bytes]] = []
        for seq, event in history:
            self.feed(seq, event)

    @classmethod
    def from_log(cls, path: str | Path) -> "ReplayOracle":
        """Build from the ledger's persisted event log; re-sequencing is
        deliberately not attempted, the file order is the truth."""
        return cls((seq, decode_event(raw)) for seq, raw, _ in read_event_log(path))

    def feed(self, seq: int, event: Event) -> None:
        if self._history and seq <= self._history[-1][0]:
            raise ValueError(f"sequence {seq} does not advance {self._history[-1][0]}")
        self._history.append((seq, event))
        if isinstance(event, CertRevocation):
            self._revoked_certs.append((seq, event.issuer, bytes(event.cert_hash)))
        elif isinstance(event, PreimageRevocation) and event.valid():
            self._preimages.append((seq, bytes(event.commitment)))
        self._state.apply(event)

    def __len__(self) -> int:
        return len(self._history)

    @property
    def state(self) -> RoleAssignment:
        return self._state

    def has_role(self, group: GroupId, role: str, key: PublicKey) -> bool:
        return self._state.has_role(group, role, key)

    def suspension_holder(self, group: GroupId) -> PublicKey | None:
        return self._state.suspension_holder(group)

    def state_at(self, t_query: int) -> RoleAssignment:
        """Full refold of the prefix through ``t_query``; linear on
        purpose, this is the oracle."""
        state = RoleAssignment()
        for seq, event in self._history:
            if seq > t_query:
                break
            state.apply(event)
        return state

    def role_at(self, t_query: int, group: GroupId, role: str, key: PublicKey) -> bool:
        return self.state_at(t_query).has_role(group, role, key)

    # -- certificate liveness (combined mode) --------------------------------

    def cert_revoked(self, cert, at: int | None = None) -> bool:
        """An issuer-signed revocation of this exact certificate exists.
        Revocations by anyone else are inert, matching the verifier."""
        cert_hash = bytes(cert.hash)
        for seq, issuer, revoked in self._revoked_certs:
            if at is not None and seq > at:
                break
            if issuer == cert.issuer and revoked == cert_hash:
                return True
        if getattr(cert, "revocation_commitment", None) is not None:
            commitment = bytes(cert.revocation_commitment)
            for seq, revealed in self._preimages:
                if at is not None and seq > at:
                    break
                if revealed == commitment:
                    return True
        return False

    def chain_alive(self, chain, at: int | None = None) -> bool:
        """One dead link kills the whole chain; reissuing that link
        (a fresh certificate, hence a fresh hash) restores it."""
        return not any(self.cert_revoked(cert, at) for cert in chain)
