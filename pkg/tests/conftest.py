"""Shared fixtures and deterministic key material.

Keys are derived from short labels so that any value a test freezes
(roots, digests, serialized proofs) stays stable from run to run.
"""
from __future__ import annotations

import pytest

from revledger.crypto import KeyPair, sha256
from revledger.events import GroupId
from revledger.ledger import LedgerService


def key_of(label: str) -> KeyPair:
    return KeyPair(sha256(b"revledger-test/" + label.encode()))


class ManualClock:
    """Callable clock the test advances by hand."""

    def __init__(self, start: float = 1_700_000_000.0):
        self.now = float(start)

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += seconds


@pytest.fixture
def clock():
    return ManualClock()


@pytest.fixture
def utp_key():
    return key_of("utp")


@pytest.fixture
def service(utp_key, clock):
    # Huge publication thresholds: tests publish blocks explicitly.
    svc = LedgerService(utp_key, block_events=1 << 30, block_seconds=float(1 << 30), clock=clock)
    yield svc
    svc.close()


@pytest.fixture
def owner():
    return key_of("owner")


@pytest.fixture
def group(owner):
    return GroupId(owner.public, "ops")
