"""Domain events: membership certificates, revocations, suspensions and
the rules that map them to ledger indexes.

Groups exist implicitly. ``GroupId(owner, name)`` names one, and the
owner key is a leader of every group it names without any setup event;
that initial grant is the fixed point all certificate chains anchor to.

Each event kind encodes with its own type tag (see ``encoding``), and
signed kinds sign exactly the encoding of the fields preceding the
signature. The hash of the complete encoding identifies an event
everywhere: in tree leaves, in delivery receipts and in audit streams.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Union

from .crypto import (
    CryptoError,
    Digest,
    KeyPair,
    PublicKey,
    Signature,
    sha256,
    verify,
)
from .encoding import (
    DecodeError,
    Reader,
    TAG_CERT_REVOCATION,
    TAG_CHAIN,
    TAG_GROUP,
    TAG_HIER_CERT,
    TAG_MEMBER_CERT,
    TAG_MEMBER_REVOCATION,
    TAG_MEMBERSHIP_INDEX,
    TAG_PREIMAGE_REVOCATION,
    TAG_RESUME,
    TAG_SUSPEND,
    TAG_SUSPENSION_INDEX,
    Writer,
    append_field,
    peek_tag,
)

ROLE_LEADER = "leader"
ROLE_MEMBER = "member"

ACTION_ADD = "add"
ACTION_REVOKE = "revoke"
ACTION_REVOKE_CERT = "revoke-cert"
ACTION_REVOKE_PREIMAGE = "revoke-preimage"
ACTION_SUSPEND = "suspend"
ACTION_RESUME = "resume"

MAX_GROUP_NAME_BYTES = 256
MAX_ROLE_BYTES = 64

# Failure codes shared by structural chain checks everywhere.
BROKEN_LINK = "broken-link"
BAD_SIGNATURE = "bad-signature"
WRONG_ROOT = "wrong-root"
WRONG_ROLE = "wrong-role"
WRONG_SUBJECT = "wrong-subject"
CERT_NOT_REGISTERED = "certificate-not-registered"
# Codes raised only by history-aware validation, never by general_checks.
REVOKED = "revoked"
ISSUER_REVOKED = "issuer-revoked"
CERT_REVOKED = "certificate-revoked"


class CheckFailure(NamedTuple):
    code: str
    detail: str
    position: int | None = None


@dataclass(frozen=True)
class GroupId:
    """A group is named by its owner's key plus a label; nothing has to
    be registered anywhere for the group to exist."""

    owner_key: PublicKey
    name: str

    def __post_init__(self) -> None:
        if len(self.name.encode("utf-8")) > MAX_GROUP_NAME_BYTES:
            raise ValueError(f"group name exceeds {MAX_GROUP_NAME_BYTES} bytes")

    @cached_property
    def encoded(self) -> bytes:
        return Writer(TAG_GROUP).raw(self.owner_key).text(self.name).finish()

    @classmethod
    def from_bytes(cls, data: bytes) -> "GroupId":
        r = Reader(data, TAG_GROUP)
        try:
            owner = PublicKey(r.raw())
        except CryptoError as exc:
            raise DecodeError(str(exc)) from exc
        name = r.text()
        r.end()
        return cls(owner, name)

    def describe(self) -> dict:
        return {"owner_key": self.owner_key.hex(), "name": self.name}


def _check_role(role: str) -> None:
    if not role or len(role.encode("utf-8")) > MAX_ROLE_BYTES:
        raise ValueError("role must be a non-empty string of at most 64 bytes")


def _read_key(r: Reader) -> PublicKey:
    try:
        return PublicKey(r.raw())
    except CryptoError as exc:
        raise DecodeError(str(exc)) from exc


def _read_sig(r: Reader) -> Signature:
    try:
        return Signature(r.raw())
    except CryptoError as exc:
        raise DecodeError(str(exc)) from exc


def _read_digest(r: Reader) -> Digest:
    try:
        return Digest(r.raw())
    except CryptoError as exc:
        raise DecodeError(str(exc)) from exc


def _read_action(r: Reader, expected: str) -> None:
    action = r.text()
    if action != expected:
        raise DecodeError(f"expected action {expected!r}, found {action!r}")


@dataclass(frozen=True)
class MemberCertificate:
    """Grants ``subject`` the role in the group, signed by the issuer.

    ``freshness`` is the issuer's view of the latest ledger sequence
    number. The ledger only accepts the event if it is newer than the
    last event stored at the same index, so stale grants cannot be
    replayed over later revocations.
    """

    issuer: PublicKey
    subject: PublicKey
    group: GroupId
    role: str
    freshness: int
    signature: Signature

    action = ACTION_ADD

    def __post_init__(self) -> None:
        _check_role(self.role)

    @cached_property
    def signed_payload(self) -> bytes:
        return (
            Writer(TAG_MEMBER_CERT)
            .raw(self.issuer)
            .raw(self.subject)
            .raw(self.group.encoded)
            .text(self.role)
            .text(self.action)
            .uint(self.freshness)
            .finish()
        )

    @cached_property
    def encoded(self) -> bytes:
        return append_field(self.signed_payload, self.signature)

    @cached_property
    def hash(self) -> Digest:
        return sha256(self.encoded)

    @classmethod
    def issue(
        cls,
        issuer_key: KeyPair,
        subject: PublicKey,
        group: GroupId,
        role: str,
        freshness: int,
    ) -> "MemberCertificate":
        unsigned = cls(issuer_key.public, subject, group, role, freshness, Signature(bytes(64)))
        return cls(issuer_key.public, subject, group, role, freshness, issuer_key.sign(unsigned.signed_payload))

    def verify_signature(self) -> bool:
        return verify(self.issuer, self.signed_payload, self.signature)

    @classmethod
    def from_bytes(cls, data: bytes) -> "MemberCertificate":
        r = Reader(data, TAG_MEMBER_CERT)
        issuer = _read_key(r)
        subject = _read_key(r)
        group = GroupId.from_bytes(r.raw())
        role = r.text()
        _read_action(r, cls.action)
        freshness = r.uint()
        sig = _read_sig(r)
        r.end()
        return cls(issuer, subject, group, role, freshness, sig)

    def describe(self) -> dict:
        return {
            "type": "member-certificate",
            "issuer": self.issuer.hex(),
            "subject": self.subject.hex(),
            "group": self.group.describe(),
            "role": self.role,
            "action": self.action,
            "freshness": self.freshness,
        }


@dataclass(frozen=True)
class MemberRevocation:
    """Removes the role from ``subject``; shares the certificate's index
    so grants and revocations interleave in one event list."""

    issuer: PublicKey
    subject: PublicKey
    group: GroupId
    role: str
    freshness: int
    signature: Signature

    action = ACTION_REVOKE

    def __post_init__(self) -> None:
        _check_role(self.role)

    @cached_property
    def signed_payload(self) -> bytes:
        return (
            Writer(TAG_MEMBER_REVOCATION)
            .raw(self.issuer)
            .raw(self.subject)
            .raw(self.group.encoded)
            .text(self.role)
            .text(self.action)
            .uint(self.freshness)
            .finish()
        )

    @cached_property
    def encoded(self) -> bytes:
        return append_field(self.signed_payload, self.signature)

    @cached_property
    def hash(self) -> Digest:
        return sha256(self.encoded)

    @classmethod
    def issue(
        cls,
        issuer_key: KeyPair,
        subject: PublicKey,
        group: GroupId,
        role: str,
        freshness: int,
    ) -> "MemberRevocation":
        unsigned = cls(issuer_key.public, subject, group, role, freshness, Signature(bytes(64)))
        return cls(issuer_key.public, subject, group, role, freshness, issuer_key.sign(unsigned.signed_payload))

    def verify_signature(self) -> bool:
        return verify(self.issuer, self.signed_payload, self.signature)

    @classmethod
    def from_bytes(cls, data: bytes) -> "MemberRevocation":
        r = Reader(data, TAG_MEMBER_REVOCATION)
        issuer = _read_key(r)
        subject = _read_key(r)
        group = GroupId.from_bytes(r.raw())
        role = r.text()
        _read_action(r, cls.action)
        freshness = r.uint()
        sig = _read_sig(r)
        r.end()
        return cls(issuer, subject, group, role, freshness, sig)

    def describe(self) -> dict:
        return {
            "type": "member-revocation",
            "issuer": self.issuer.hex(),
            "subject": self.subject.hex(),
            "group": self.group.describe(),
            "role": self.role,
            "action": self.action,
            "freshness": self.freshness,
        }


@dataclass(frozen=True)
class CertRevocation:
    """Revokes one specific certificate, addressed by its hash.

    Only the certificate's own issuer can make this stick: verifiers
    ignore a stored revocation whose signer differs from the issuer of
    the certificate they are judging, so anyone may submit one but only
    the issuer's lands. Killing a single link this way invalidates every
    chain running through it until that link is reissued.
    """

    issuer: PublicKey
    cert_hash: Digest
    freshness: int
    signature: Signature

    action = ACTION_REVOKE_CERT

    @cached_property
    def signed_payload(self) -> bytes:
        return (
            Writer(TAG_CERT_REVOCATION)
            .raw(self.issuer)
            .raw(self.cert_hash)
            .text(self.action)
            .uint(self.freshness)
            .finish()
        )

    @cached_property
    def encoded(self) -> bytes:
        return append_field(self.signed_payload, self.signature)

    @cached_property
    def hash(self) -> Digest:
        return sha256(self.encoded)

    @classmethod
    def issue(cls, issuer_key: KeyPair, cert_hash: Digest, freshness: int) -> "CertRevocation":
        unsigned = cls(issuer_key.public, cert_hash, freshness, Signature(bytes(64)))
        return cls(issuer_key.public, cert_hash, freshness, issuer_key.sign(unsigned.signed_payload))

    def verify_signature(self) -> bool:
        return verify(self.issuer, self.signed_payload, self.signature)

    @classmethod
    def from_bytes(cls, data: bytes) -> "CertRevocation":
        r = Reader(data, TAG_CERT_REVOCATION)
        issuer = _read_key(r)
        cert_hash = _read_digest(r)
        _read_action(r, cls.action)
        freshness = r.uint()
        sig = _read_sig(r)
        r.end()
        return cls(issuer, cert_hash, freshness, sig)

    def describe(self) -> dict:
        return {
            "type": "cert-revocation",
            "issuer": self.issuer.hex(),
            "cert_hash": self.cert_hash.hex(),
            "action": self.action,
            "freshness": self.freshness,
        }


@dataclass(frozen=True)
class PreimageRevocation:
    """Self-certifying revocation: publishing the preimage of a
    commitment baked into a certificate revokes it. Needs no signature;
    the hash relation is the whole proof."""

    commitment: Digest
    preimage: bytes

    action = ACTION_REVOKE_PREIMAGE

    @cached_property
    def encoded(self) -> bytes:
        return (
            Writer(TAG_PREIMAGE_REVOCATION)
            .raw(self.commitment)
            .text(self.action)
            .raw(self.preimage)
            .finish()
        )

    @cached_property
    def hash(self) -> Digest:
        return sha256(self.encoded)

    def valid(self) -> bool:
        return sha256(self.preimage) == self.commitment

    @classmethod
    def reveal(cls, preimage: bytes) -> "PreimageRevocation":
        return cls(sha256(preimage), bytes(preimage))

    @classmethod
    def from_bytes(cls, data: bytes) -> "PreimageRevocation":
        r = Reader(data, TAG_PREIMAGE_REVOCATION)
        commitment = _read_digest(r)
        _read_action(r, cls.action)
        preimage = r.raw()
        r.end()
        return cls(commitment, preimage)

    def describe(self) -> dict:
        return {
            "type": "preimage-revocation",
            "commitment": self.commitment.hex(),
            "action": self.action,
            "preimage": self.preimage.hex(),
        }


@dataclass(frozen=True)
class SuspendEvent:
    """Freezes a group: while a suspension is active only the suspending
    key's events are accepted for that group."""

    issuer: PublicKey
    group: GroupId
    freshness: int
    signature: Signature

    action = ACTION_SUSPEND

    @cached_property
    def signed_payload(self) -> bytes:
        return (
            Writer(TAG_SUSPEND)
            .raw(self.issuer)
            .raw(self.group.encoded)
            .text(self.action)
            .uint(self.freshness)
            .finish()
        )

    @cached_property
    def encoded(self) -> bytes:
        return append_field(self.signed_payload, self.signature)

    @cached_property
    def hash(self) -> Digest:
        return sha256(self.encoded)

    @classmethod
    def issue(cls, issuer_key: KeyPair, group: GroupId, freshness: int) -> "SuspendEvent":
        unsigned = cls(issuer_key.public, group, freshness, Signature(bytes(64)))
        return cls(issuer_key.public, group, freshness, issuer_key.sign(unsigned.signed_payload))

    def verify_signature(self) -> bool:
        return verify(self.issuer, self.signed_payload, self.signature)

    @classmethod
    def from_bytes(cls, data: bytes) -> "SuspendEvent":
        r = Reader(data, TAG_SUSPEND)
        issuer = _read_key(r)
        group = GroupId.from_bytes(r.raw())
        _read_action(r, cls.action)
        freshness = r.uint()
        sig = _read_sig(r)
        r.end()
        return cls(issuer, group, freshness, sig)

    def describe(self) -> dict:
        return {
            "type": "suspend",
            "issuer": self.issuer.hex(),
            "group": self.group.describe(),
            "action": self.action,
            "freshness": self.freshness,
        }


@dataclass(frozen=True)
class ResumeEvent:
    """Lifts a suspension. Only valid from the key that suspended."""

    issuer: PublicKey
    group: GroupId
    freshness: int
    signature: Signature

    action = ACTION_RESUME

    @cached_property
    def signed_payload(self) -> bytes:
        return (
            Writer(TAG_RESUME)
            .raw(self.issuer)
            .raw(self.group.encoded)
            .text(self.action)
            .uint(self.freshness)
            .finish()
        )

    @cached_property
    def encoded(self) -> bytes:
        return append_field(self.signed_payload, self.signature)

    @cached_property
    def hash(self) -> Digest:
        return sha256(self.encoded)

    @classmethod
    def issue(cls, issuer_key: KeyPair, group: GroupId, freshness: int) -> "ResumeEvent":
        unsigned = cls(issuer_key.public, group, freshness, Signature(bytes(64)))
        return cls(issuer_key.public, group, freshness, issuer_key.sign(unsigned.signed_payload))

    def verify_signature(self) -> bool:
        return verify(self.issuer, self.signed_payload, self.signature)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ResumeEvent":
        r = Reader(data, TAG_RESUME)
        issuer = _read_key(r)
        group = GroupId.from_bytes(r.raw())
        _read_action(r, cls.action)
        freshness = r.uint()
        sig = _read_sig(r)
        r.end()
        return cls(issuer, group, freshness, sig)

    def describe(self) -> dict:
        return {
            "type": "resume",
            "issuer": self.issuer.hex(),
            "group": self.group.describe(),
            "action": self.action,
            "freshness": self.freshness,
        }


@dataclass(frozen=True)
class HierCertificate:
    """Hierarchical-PKI style certificate: delegates a set of capability
    tags, optionally time-bounded, optionally revocable by preimage.

    These never enter the ledger; only their revocations do. A chain is
    judged by its signatures, its validity windows against the caller's
    clock, and the absence of revocations under each certificate's hash.
    """

    issuer: PublicKey
    subject: PublicKey
    auth: frozenset[str]
    validity: tuple[int, int] | None
    revocation_commitment: Digest | None
    signature: Signature

    def __post_init__(self) -> None:
        if self.validity is not None and self.validity[0] > self.validity[1]:
            raise ValueError("validity window ends before it starts")

    @cached_property
    def signed_payload(self) -> bytes:
        w = (
            Writer(TAG_HIER_CERT)
            .raw(self.issuer)
            .raw(self.subject)
            .seq([tag.encode("utf-8") for tag in sorted(self.auth)])
        )
        if self.validity is None:
            w.opt(None)
        else:
            from .encoding import encode_uint

            w.opt(encode_uint(self.validity[0]) + encode_uint(self.validity[1]))
        w.opt(self.revocation_commitment)
        return w.finish()

    @cached_property
    def encoded(self) -> bytes:
        return append_field(self.signed_payload, self.signature)

    @cached_property
    def hash(self) -> Digest:
        return sha256(self.encoded)

    @classmethod
    def issue(
        cls,
        issuer_key: KeyPair,
        subject: PublicKey,
        auth: frozenset[str] | set[str],
        validity: tuple[int, int] | None = None,
        revocation_commitment: Digest | None = None,
    ) -> "HierCertificate":
        unsigned = cls(
            issuer_key.public, subject, frozenset(auth), validity, revocation_commitment, Signature(bytes(64))
        )
        return cls(
            issuer_key.public,
            subject,
            frozenset(auth),
            validity,
            revocation_commitment,
            issuer_key.sign(unsigned.signed_payload),
        )

    def verify_signature(self) -> bool:
        return verify(self.issuer, self.signed_payload, self.signature)

    @classmethod
    def from_bytes(cls, data: bytes) -> "HierCertificate":
        from .encoding import decode_uint

        r = Reader(data, TAG_HIER_CERT)
        issuer = _read_key(r)
        subject = _read_key(r)
        try:
            auth = frozenset(item.decode("utf-8") for item in r.seq())
        except UnicodeDecodeError as exc:
            raise DecodeError("auth tag is not valid UTF-8") from exc
        validity_raw = r.opt()
        if validity_raw is None:
            validity = None
        elif len(validity_raw) == 16:
            validity = (decode_uint(validity_raw[:8]), decode_uint(validity_raw[8:]))
        else:
            raise DecodeError("validity window must be two integers")
        commitment_raw = r.opt()
        commitment = Digest(commitment_raw) if commitment_raw is not None else None
        sig = _read_sig(r)
        r.end()
        return cls(issuer, subject, auth, validity, commitment, sig)

    def describe(self) -> dict:
        return {
            "type": "hier-certificate",
            "issuer": self.issuer.hex(),
            "subject": self.subject.hex(),
            "auth": sorted(self.auth),
            "validity": list(self.validity) if self.validity else None,
            "revocation_commitment": self.revocation_commitment.hex() if self.revocation_commitment else None,
        }


Event = Union[
    MemberCertificate,
    MemberRevocation,
    CertRevocation,
    PreimageRevocation,
    SuspendEvent,
    ResumeEvent,
]

_EVENT_DECODERS = {
    TAG_MEMBER_CERT: MemberCertificate.from_bytes,
    TAG_MEMBER_REVOCATION: MemberRevocation.from_bytes,
    TAG_CERT_REVOCATION: CertRevocation.from_bytes,
    TAG_PREIMAGE_REVOCATION: PreimageRevocation.from_bytes,
    TAG_SUSPEND: SuspendEvent.from_bytes,
    TAG_RESUME: ResumeEvent.from_bytes,
}


def decode_event(data: bytes) -> Event:
    decoder = _EVENT_DECODERS.get(peek_tag(data))
    if decoder is None:
        raise DecodeError(f"unknown event tag 0x{peek_tag(data):02x}")
    return decoder(data)


# ---------------------------------------------------------------------------
# ledger indexes


def membership_index(group: GroupId, role: str, subject: PublicKey) -> Digest:
    """Where grants and revocations of (group, role, subject) live.

    Deliberately ignores the issuer and freshness so that every event
    about one membership, no matter who issued it, lands in one list.
    """
    return sha256(
        Writer(TAG_MEMBERSHIP_INDEX).raw(group.encoded).text(role).raw(subject).finish()
    )


def suspension_index(group: GroupId) -> Digest:
    """One list per group for suspend and resume events."""
    return sha256(Writer(TAG_SUSPENSION_INDEX).raw(group.encoded).text("suspension").finish())


def event_index(event: Event) -> Digest:
    if isinstance(event, (MemberCertificate, MemberRevocation)):
        return membership_index(event.group, event.role, event.subject)
    if isinstance(event, CertRevocation):
        return event.cert_hash
    if isinstance(event, PreimageRevocation):
        return event.commitment
    if isinstance(event, (SuspendEvent, ResumeEvent)):
        return suspension_index(event.group)
    raise TypeError(f"no ledger index for {type(event).__name__}")


# ---------------------------------------------------------------------------
# certificate chains

MembershipChain = tuple[MemberCertificate, ...]
HierChain = tuple[HierCertificate, ...]


def encode_chain(certs: tuple | list) -> bytes:
    return Writer(TAG_CHAIN).seq([c.encoded for c in certs]).finish()


def decode_chain(data: bytes) -> tuple:
    r = Reader(data, TAG_CHAIN)
    items = r.seq()
    r.end()
    certs = []
    for item in items:
        tag = peek_tag(item)
        if tag == TAG_MEMBER_CERT:
            certs.append(MemberCertificate.from_bytes(item))
        elif tag == TAG_HIER_CERT:
            certs.append(HierCertificate.from_bytes(item))
        else:
            raise DecodeError(f"chain may only contain certificates, found tag 0x{tag:02x}")
    return tuple(certs)


def general_checks(
    chain: MembershipChain,
    subject: PublicKey,
    group: GroupId,
    role: str,
) -> CheckFailure | None:
    """Ledger-independent validation of a membership chain.

    Covers linkage, signatures, the anchoring of the first certificate
    at the group owner, intermediate links delegating leadership, and
    the final link naming the requested subject and role. The empty
    chain is the owner's own credential: it passes exactly when the
    subject is the owner key and the role is leadership.
    """
    if not chain:
        if subject != group.owner_key:
            return CheckFailure(WRONG_SUBJECT, "empty chain only authorizes the group owner")
        if role != ROLE_LEADER:
            return CheckFailure(WRONG_ROLE, "empty chain only authorizes leadership")
        return None
    for pos, cert in enumerate(chain):
        if not isinstance(cert, MemberCertificate):
            return CheckFailure(BROKEN_LINK, f"{type(cert).__name__} cannot appear in a membership chain", pos)
        if pos > 0 and cert.issuer != chain[pos - 1].subject:
            return CheckFailure(BROKEN_LINK, "issuer does not match previous subject", pos)
        if not cert.verify_signature():
            return CheckFailure(BAD_SIGNATURE, "certificate signature does not verify", pos)
        if cert.group != group:
            return CheckFailure(WRONG_ROLE, "certificate issued for a different group", pos)
        if pos < len(chain) - 1 and cert.role != ROLE_LEADER:
            return CheckFailure(WRONG_ROLE, "intermediate certificate does not delegate leadership", pos)
    if chain[0].issuer != group.owner_key:
        return CheckFailure(WRONG_ROOT, "chain does not start at the group owner", 0)
    last = chain[-1]
    if last.subject != subject:
        return CheckFailure(WRONG_SUBJECT, "chain ends at a different subject", len(chain) - 1)
    if last.role != role:
        return CheckFailure(WRONG_ROLE, f"chain grants {last.role!r}, not {role!r}", len(chain) - 1)
    return None


def hier_general_checks(chain: HierChain, root_key: PublicKey) -> CheckFailure | None:
    """Structural validation of a hierarchical chain: linkage,
    signatures, and anchoring at the externally trusted root key."""
    if not chain:
        return CheckFailure(BROKEN_LINK, "empty hierarchical chain proves nothing")
    for pos, cert in enumerate(chain):
        if not isinstance(cert, HierCertificate):
            return CheckFailure(BROKEN_LINK, f"{type(cert).__name__} cannot appear in a hierarchical chain", pos)
        if pos > 0 and cert.issuer != chain[pos - 1].subject:
            return CheckFailure(BROKEN_LINK, "issuer does not match previous subject", pos)
        if not cert.verify_signature():
            return CheckFailure(BAD_SIGNATURE, "certificate signature does not verify", pos)
    if chain[0].issuer != root_key:
        return CheckFailure(WRONG_ROOT, "chain does not start at the trusted root", 0)
    return None


def auth_intersection(chain: HierChain) -> frozenset[str]:
    """Capabilities a hierarchical chain actually conveys: a delegate
    cannot pass on more than it received."""
    if not chain:
        return frozenset()
    granted = chain[0].auth
    for cert in chain[1:]:
        granted = granted & cert.auth
    return granted
