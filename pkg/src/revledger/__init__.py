"""Publicly auditable revocation: an untrusted append-only ledger,
constant-state auditors, and clients that verify membership without
trusting the operator.

The useful entry points re-exported here: ``LedgerService`` runs the
log, ``AccessClient`` issues and verifies membership against it,
``StreamAuditor``/``ReplicaAuditor`` watch its feed, and ``ReplayOracle``
refolds a persisted history from scratch.
"""

from .auditor import Endorsement, Misbehavior, ReplicaAuditor, StreamAuditor
from .client import AccessClient, Alarm, MemberDecision
from .crypto import Digest, KeyPair, PublicKey, sha256
from .events import (
    ROLE_LEADER,
    ROLE_MEMBER,
    CertRevocation,
    GroupId,
    HierCertificate,
    MemberCertificate,
    MemberRevocation,
    PreimageRevocation,
    ResumeEvent,
    SuspendEvent,
    decode_chain,
    decode_event,
    encode_chain,
)
from .ledger import (
    AuthAnswer,
    Block,
    DeliveryReceipt,
    LedgerService,
    Rejection,
    SubmitOutcome,
)
from .oracle import ReplayOracle, RoleAssignment
from .prefix_tree import PrefixTree, verify_proof, verify_update
from .validation import check_chain
from .wire import (
    AuditorServer,
    LedgerServer,
    LoopbackTransport,
    RemoteAuditor,
    RemoteLedger,
    SocketServer,
    SocketTransport,
)

__all__ = [
    "AccessClient",
    "Alarm",
    "AuditorServer",
    "AuthAnswer",
    "Block",
    "CertRevocation",
    "DeliveryReceipt",
    "Digest",
    "Endorsement",
    "GroupId",
    "HierCertificate",
    "KeyPair",
    "LedgerServer",
    "LedgerService",
    "LoopbackTransport",
    "MemberCertificate",
    "MemberDecision",
    "MemberRevocation",
    "Misbehavior",
    "PreimageRevocation",
    "PrefixTree",
    "PublicKey",
    "Rejection",
    "RemoteAuditor",
    "RemoteLedger",
    "ReplayOracle",
    "ReplicaAuditor",
    "ResumeEvent",
    "RoleAssignment",
    "ROLE_LEADER",
    "ROLE_MEMBER",
    "SocketServer",
    "SocketTransport",
    "StreamAuditor",
    "SubmitOutcome",
    "SuspendEvent",
    "check_chain",
    "decode_chain",
    "decode_event",
    "encode_chain",
    "sha256",
    "verify_proof",
    "verify_update",
]
