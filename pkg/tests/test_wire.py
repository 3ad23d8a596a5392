"""Framed protocol: loopback and TCP run the same bytes."""
from __future__ import annotations

import socket
import threading
import time

import pytest

from revledger.auditor import StreamAuditor
from revledger.client import AccessClient, STATUS_MEMBER
from revledger.encoding import DecodeError, TAG_RESP_ERROR, Writer, peek_tag
from revledger.events import MemberCertificate, ROLE_LEADER, event_index
from revledger.ledger import FEED_FULL, FEED_STREAM, REJECT_MALFORMED
from revledger.wire import (
    AuditorServer,
    LedgerServer,
    LoopbackTransport,
    NoResponse,
    RemoteAuditor,
    RemoteError,
    RemoteLedger,
    SocketServer,
    SocketTransport,
    recv_frame,
    send_frame,
)

from conftest import key_of

LEADER = key_of("wire-leader")


@pytest.fixture
def loop_ledger(service):
    return RemoteLedger(LoopbackTransport(LedgerServer(service)))


def _seed(service, owner, group):
    cert = MemberCertificate.issue(owner, LEADER.public, group, ROLE_LEADER, 0)
    assert service.submit(cert.encoded).accepted
    service.publish_block()
    return cert


def test_loopback_submit_round_trips_both_outcomes(service, loop_ledger, owner, group):
    cert = MemberCertificate.issue(owner, LEADER.public, group, ROLE_LEADER, 0)
    outcome = loop_ledger.submit(cert.encoded)
    assert outcome.accepted
    assert outcome.receipt.verify(service._key.public)
    assert outcome.receipt.event_hash == cert.hash

    refused = loop_ledger.submit(b"not an event")
    assert not refused.accepted
    assert refused.rejection.code == REJECT_MALFORMED


def test_loopback_reads_match_the_service_exactly(service, loop_ledger, owner, group):
    cert = _seed(service, owner, group)
    index = bytes(event_index(cert))

    direct = service.query(index)
    remote = loop_ledger.query(index)
    assert remote.block == direct.block
    assert remote.proof.to_bytes() == direct.proof.to_bytes()
    assert remote.bodies == direct.bodies

    absent = loop_ledger.query(b"\xab" * 32)
    assert not absent.proof.present

    assert loop_ledger.latest_block() == service.latest_block()

    direct_auth = service.fetch_auth(bytes(cert.hash))
    remote_auth = loop_ledger.fetch_auth(bytes(cert.hash))
    assert remote_auth.to_bytes() == direct_auth.to_bytes()

    for mode in (FEED_STREAM, FEED_FULL):
        frames, cursor = loop_ledger.audit_feed(mode, 0, 100)
        assert (frames, cursor) == service.audit_feed(mode, 0, 100)
        assert frames  # both feeds carry the block and the entry


def test_undecodable_request_comes_back_as_an_error_frame(service):
    transport = LoopbackTransport(LedgerServer(service))
    response = transport.rpc(b"\x99junk")
    assert peek_tag(response) == TAG_RESP_ERROR


class _AlwaysError:
    def handle(self, request: bytes) -> bytes:
        return Writer(TAG_RESP_ERROR).text("nope").finish()


def test_stub_surfaces_protocol_errors(service):
    broken = RemoteLedger(LoopbackTransport(_AlwaysError()))
    with pytest.raises(RemoteError, match="nope"):
        broken.latest_block()


# -- real sockets ----------------------------------------------------------------


@pytest.fixture
def tcp(service):
    server = SocketServer(LedgerServer(service))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host, port = server.address
    transport = SocketTransport.connect(host, port)
    yield RemoteLedger(transport)
    transport.close()
    server.close()
    thread.join(timeout=2)


def test_tcp_round_trip_equals_loopback(service, tcp, owner, group):
    cert = _seed(service, owner, group)
    index = bytes(event_index(cert))
    local = RemoteLedger(LoopbackTransport(LedgerServer(service)))

    assert tcp.latest_block() == local.latest_block()
    assert tcp.query(index).proof.to_bytes() == local.query(index).proof.to_bytes()
    assert tcp.fetch_auth(bytes(cert.hash)).to_bytes() == local.fetch_auth(bytes(cert.hash)).to_bytes()
    assert tcp.audit_feed(FEED_STREAM, 0, 50) == local.audit_feed(FEED_STREAM, 0, 50)


def test_verifying_client_works_over_tcp(service, tcp, utp_key, owner, group):
    cert = _seed(service, owner, group)
    client = AccessClient(tcp, utp_key.public)
    decision = client.verify_member(LEADER.public, ROLE_LEADER, group, [cert])
    assert decision.status == STATUS_MEMBER
    assert client.alarms == []


def test_auditor_pulls_over_tcp(service, tcp, utp_key, owner, group):
    _seed(service, owner, group)
    auditor = StreamAuditor(utp_key.public)
    assert auditor.pull(tcp) == []
    assert auditor.healthy and auditor.root == service.tree.root


def test_endorsement_service_over_tcp(service, utp_key, owner, group):
    _seed(service, owner, group)
    auditor = StreamAuditor(utp_key.public, key=key_of("wire-auditor"))
    server = SocketServer(AuditorServer(auditor, source=service))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        host, port = server.address
        remote = RemoteAuditor(SocketTransport.connect(host, port))
        tip = service.latest_block()
        endorsement = remote.endorsement_for(tip.height)
        assert endorsement is not None and endorsement.block_hash == tip.block_hash
        assert remote.endorsement_for(tip.height + 5) is None
        since = remote.endorsements_since(0)
        assert [e.height for e in since] == sorted(e.height for e in since)
        remote.close()
    finally:
        server.close()
        thread.join(timeout=2)


def test_silent_peer_raises_no_response():
    left, right = socket.socketpair()
    right.close()  # the "server" hangs up before answering
    transport = SocketTransport(left)
    try:
        with pytest.raises(NoResponse):
            RemoteLedger(transport).latest_block()
    finally:
        transport.close()


def test_idle_hook_runs_between_requests(service):
    beats = []
    server = SocketServer(LedgerServer(service), idle=lambda: beats.append(1))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        deadline = time.monotonic() + 2.0
        while not beats and time.monotonic() < deadline:
            time.sleep(0.05)
        assert beats, "idle hook never fired while the server waited"
    finally:
        server.close()
        thread.join(timeout=2)


def test_oversized_frame_is_refused_not_buffered():
    left, right = socket.socketpair()
    try:
        left.sendall((1 << 27).to_bytes(4, "big"))
        with pytest.raises(DecodeError, match="exceeds limit"):
            recv_frame(right)
    finally:
        left.close()
        right.close()


def test_frame_helpers_round_trip():
    left, right = socket.socketpair()
    try:
        send_frame(left, b"payload bytes")
        assert recv_frame(right) == b"payload bytes"
        left.close()
        assert recv_frame(right) is None  # clean close between frames
    finally:
        right.close()
