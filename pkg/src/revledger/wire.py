"""Wire protocol: length-framed canonical messages over any byte pipe.

Every message is one TLV value prefixed with a 4-byte big-endian
length. The in-process loopback and the TCP transport run the exact
same encode/decode path, so a test that exercises loopback is also
exercising the wire format; only the socket plumbing differs.

Two services speak it. The ledger answers SUBMIT, QUERY, FETCH_AUTH,
LATEST_BLOCK and SUBSCRIBE_AUDIT (a cursor poll over the published
feed, so "subscribing" is just asking again from where you left off).
An auditor answers AUDITOR_BLOCKS with its signed endorsements, which
is all a client needs to cross-check the block hash the ledger showed
it. Client stubs (`RemoteLedger`, `RemoteAuditor`) mirror the service
methods, so verifying code takes either the in-process object or the
stub without caring which.
"""
from __future__ import annotations

import socket
import struct
from typing import Callable, Protocol

from .auditor import Endorsement
from .encoding import (
    DecodeError,
    Reader,
    TAG_REQ_AUDITOR_BLOCKS,
    TAG_REQ_FETCH_AUTH,
    TAG_REQ_LATEST_BLOCK,
    TAG_REQ_QUERY,
    TAG_REQ_SUBMIT,
    TAG_REQ_SUBSCRIBE_AUDIT,
    TAG_RESP_AUDITOR_BLOCKS,
    TAG_RESP_ERROR,
    TAG_RESP_LATEST_BLOCK,
    TAG_RESP_QUERY,
    TAG_RESP_SUBMIT,
    TAG_RESP_SUBSCRIBE_AUDIT,
    Writer,
    peek_tag,
)
from .ledger import (
    AuthAnswer,
    Block,
    DeliveryReceipt,
    LedgerService,
    QueryAnswer,
    Rejection,
    SubmitOutcome,
)
from .prefix_tree import Proof

_U32 = struct.Struct(">I")

MAX_FRAME = 1 << 26  # 64 MiB; nothing legitimate comes close


class NoResponse(RuntimeError):
    """The service did not answer. The request itself is the evidence."""


class RemoteError(RuntimeError):
    """The service answered with a protocol-level error message."""


# ---------------------------------------------------------------------------
# framing


def send_frame(sock: socket.socket, payload: bytes) -> None:
    sock.sendall(_U32.pack(len(payload)) + payload)


def recv_frame(sock: socket.socket) -> bytes | None:
    header = _recv_exact(sock, 4)
    if header is None:
        return None
    length = _U32.unpack(header)[0]
    if length > MAX_FRAME:
        raise DecodeError(f"frame of {length} bytes exceeds limit")
    payload = _recv_exact(sock, length)
    if payload is None:
        raise DecodeError("connection closed mid-frame")
    return payload


def _recv_exact(sock: socket.socket, count: int) -> bytes | None:
    parts = []
    remaining = count
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            return None if remaining == count else b""
        parts.append(chunk)
        remaining -= len(chunk)
    return b"".join(parts)


# ---------------------------------------------------------------------------
# request / response codecs


def encode_submit(event_bytes: bytes, chain_bytes: bytes | None) -> bytes:
    return Writer(TAG_REQ_SUBMIT).raw(event_bytes).opt(chain_bytes).finish()


def encode_query(index: bytes) -> bytes:
    return Writer(TAG_REQ_QUERY).raw(bytes(index)).finish()


def encode_fetch_auth(event_hash: bytes) -> bytes:
    return Writer(TAG_REQ_FETCH_AUTH).raw(bytes(event_hash)).finish()


def encode_latest_block() -> bytes:
    return Writer(TAG_REQ_LATEST_BLOCK).finish()


def encode_subscribe_audit(mode: int, cursor: int, limit: int) -> bytes:
    return Writer(TAG_REQ_SUBSCRIBE_AUDIT).uint(mode).uint(cursor).uint(limit).finish()


def encode_auditor_blocks(height: int) -> bytes:
    return Writer(TAG_REQ_AUDITOR_BLOCKS).uint(height).finish()


# ---------------------------------------------------------------------------
# servers


class LedgerServer:
    """Maps request frames onto a ``LedgerService``. Transport-free:
    something else moves the bytes."""

    def __init__(self, service: LedgerService):
        self._service = service

    def handle(self, request: bytes) -> bytes:
        try:
            return self._dispatch(request)
        except DecodeError as exc:
            return Writer(TAG_RESP_ERROR).text(f"bad request: {exc}").finish()

    def _dispatch(self, request: bytes) -> bytes:
        tag = peek_tag(request)
        if tag == TAG_REQ_SUBMIT:
            r = Reader(request, TAG_REQ_SUBMIT)
            event_bytes = r.raw()
            chain_bytes = r.opt()
            r.end()
            outcome = self._service.submit(event_bytes, chain_bytes)
            body = outcome.receipt.encoded if outcome.accepted else outcome.rejection.encoded
            return Writer(TAG_RESP_SUBMIT).uint(1 if outcome.accepted else 0).raw(body).finish()
        if tag == TAG_REQ_QUERY:
            r = Reader(request, TAG_REQ_QUERY)
            index = r.raw()
            r.end()
            answer = self._service.query(index)
            return (
                Writer(TAG_RESP_QUERY)
                .raw(answer.block.encoded)
                .raw(answer.proof.to_bytes())
                .seq(answer.bodies)
                .finish()
            )
        if tag == TAG_REQ_FETCH_AUTH:
            r = Reader(request, TAG_REQ_FETCH_AUTH)
            event_hash = r.raw()
            r.end()
            return self._service.fetch_auth(event_hash).to_bytes()
        if tag == TAG_REQ_LATEST_BLOCK:
            Reader(request, TAG_REQ_LATEST_BLOCK).end()
            return Writer(TAG_RESP_LATEST_BLOCK).raw(self._service.latest_block().encoded).finish()
        if tag == TAG_REQ_SUBSCRIBE_AUDIT:
            r = Reader(request, TAG_REQ_SUBSCRIBE_AUDIT)
            mode = r.uint()
            cursor = r.uint()
            limit = r.uint()
            r.end()
            frames, advanced = self._service.audit_feed(mode, cursor, min(limit, 4096))
            return Writer(TAG_RESP_SUBSCRIBE_AUDIT).uint(advanced).seq(frames).finish()
        raise DecodeError(f"unknown request tag {tag:#x}")


class AuditorServer:
    """Serves one auditor's endorsements over the framed protocol.

    Given a feed source it pulls before answering, so endorsements are
    as fresh as the ledger's published stream; without one it serves
    whatever the auditor has been fed out of band.
    """

    def __init__(self, auditor, source=None):
        self._auditor = auditor
        self._source = source

    def handle(self, request: bytes) -> bytes:
        try:
            r = Reader(request, TAG_REQ_AUDITOR_BLOCKS)
            height = r.uint()
            r.end()
        except DecodeError as exc:
            return Writer(TAG_RESP_ERROR).text(f"bad request: {exc}").finish()
        if self._source is not None and self._auditor.healthy:
            self._auditor.pull(self._source)
        recent = [e.encoded for e in self._auditor.endorsements if e.height >= height]
        return Writer(TAG_RESP_AUDITOR_BLOCKS).seq(recent[-1024:]).finish()


# ---------------------------------------------------------------------------
# transports


class RequestHandler(Protocol):
    def handle(self, request: bytes) -> bytes: ...


class LoopbackTransport:
    """Request/response through the full codec path, no sockets."""

    def __init__(self, server: RequestHandler):
        self._server = server

    def rpc(self, request: bytes) -> bytes:
        return self._server.handle(request)

    def close(self) -> None:
        pass


class SocketTransport:
    def __init__(self, sock: socket.socket):
        self._sock = sock

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = 5.0) -> "SocketTransport":
        sock = socket.create_connection((host, port), timeout=timeout)
        sock.settimeout(timeout)
        return cls(sock)

    def rpc(self, request: bytes) -> bytes:
        try:
            send_frame(self._sock, request)
            response = recv_frame(self._sock)
        except OSError as exc:
            raise NoResponse(str(exc)) from exc
        if response is None:
            raise NoResponse("connection closed before a response arrived")
        return response

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class SocketServer:
    """Single-threaded accept loop, one request in flight at a time.
    Enough to demo the protocol over real TCP; not a production front.

    ``idle`` runs while waiting for connections and after each request;
    the ledger passes its block-timer pump here.
    """

    def __init__(
        self,
        handler: RequestHandler,
        host: str = "127.0.0.1",
        port: int = 0,
        idle: Callable[[], None] | None = None,
    ):
        self._server_socket = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._server_socket.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._server_socket.bind((host, port))
        self._server_socket.listen(8)
        self._server_socket.settimeout(0.2)  # accept in short beats so idle() runs
        self._handler = handler
        self._idle = idle or (lambda: None)
        self._running = False

    @property
    def address(self) -> tuple[str, int]:
        return self._server_socket.getsockname()

    def serve_forever(self) -> None:
        self._running = True
        while self._running:
            try:
                conn, _ = self._server_socket.accept()
            except socket.timeout:
                self._idle()
                continue
            except OSError:
                break  # listening socket closed under us
            with conn:
                conn.settimeout(5.0)
                while self._running:
                    try:
                        request = recv_frame(conn)
                    except (DecodeError, OSError):
                        break
                    if request is None:
                        break
                    send_frame(conn, self._handler.handle(request))
                    self._idle()

    def shutdown(self) -> None:
        self._running = False

    def close(self) -> None:
        self.shutdown()
        self._server_socket.close()


# ---------------------------------------------------------------------------
# client-side stubs


class RemoteLedger:
    """Speaks the wire protocol; quacks like ``LedgerService`` for the
    read and submit paths that clients and auditors use."""

    def __init__(self, transport):
        self._transport = transport

    def close(self) -> None:
        self._transport.close()

    def _rpc(self, request: bytes) -> bytes:
        response = self._transport.rpc(request)
        if peek_tag(response) == TAG_RESP_ERROR:
            r = Reader(response, TAG_RESP_ERROR)
            message = r.text()
            r.end()
            raise RemoteError(message)
        return response

    def submit(self, event_bytes: bytes, chain_bytes: bytes | None = None) -> SubmitOutcome:
        r = Reader(self._rpc(encode_submit(event_bytes, chain_bytes)), TAG_RESP_SUBMIT)
        accepted = r.uint()
        body = r.raw()
        r.end()
        if accepted:
            return SubmitOutcome(DeliveryReceipt.from_bytes(body), None)
        return SubmitOutcome(None, Rejection.from_bytes(body))

    def query(self, index: bytes) -> QueryAnswer:
        r = Reader(self._rpc(encode_query(index)), TAG_RESP_QUERY)
        block = Block.from_bytes(r.raw())
        proof = Proof.from_bytes(r.raw())
        bodies = tuple(r.seq())
        r.end()
        return QueryAnswer(block, proof, bodies)

    def fetch_auth(self, event_hash: bytes) -> AuthAnswer:
        return AuthAnswer.from_bytes(self._rpc(encode_fetch_auth(event_hash)))

    def latest_block(self) -> Block:
        r = Reader(self._rpc(encode_latest_block()), TAG_RESP_LATEST_BLOCK)
        block = Block.from_bytes(r.raw())
        r.end()
        return block

    def audit_feed(self, mode: int, cursor: int, limit: int = 256) -> tuple[list[bytes], int]:
        r = Reader(self._rpc(encode_subscribe_audit(mode, cursor, limit)), TAG_RESP_SUBSCRIBE_AUDIT)
        advanced = r.uint()
        frames = r.seq()
        r.end()
        return frames, advanced


class RemoteAuditor:
    """Client stub for an auditor's endorsement service."""

    def __init__(self, transport):
        self._transport = transport

    def close(self) -> None:
        self._transport.close()

    def endorsements_since(self, height: int) -> list[Endorsement]:
        response = self._transport.rpc(encode_auditor_blocks(height))
        if peek_tag(response) == TAG_RESP_ERROR:
            r = Reader(response, TAG_RESP_ERROR)
            message = r.text()
            r.end()
            raise RemoteError(message)
        r = Reader(response, TAG_RESP_AUDITOR_BLOCKS)
        endorsements = [Endorsement.from_bytes(item) for item in r.seq()]
        r.end()
        return endorsements

    def endorsement_for(self, height: int) -> Endorsement | None:
        for endorsement in self.endorsements_since(height):
            if endorsement.height == height:
                return endorsement
        return None
