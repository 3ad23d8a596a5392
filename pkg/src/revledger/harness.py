"""Deterministic drivers: scripted scenarios, fault fuzzing, benchmarks.

Everything here runs in one process. Keys come from a seeded RNG, time
from a manual clock, and blocks are published explicitly, so a run is a
pure function of its seed: the same seed gives a byte-identical
transcript, and a fuzz failure replays from the seed alone.

Three entry points matter:

* ``run_scenario`` executes a scripted step list (the built-in scripts
  live in ``NAMED_SCENARIOS``) and returns a transcript.
* ``run_workload`` / ``fuzz_run`` generate randomized histories, the
  first comparing the online verifier against the replay oracle, the
  second arming one ledger fault and checking somebody raised the alarm.
* ``run_bench`` measures tree, chain-check and auditor throughput.
"""
from __future__ import annotations

import json
import platform
import random
import statistics
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .auditor import (
    BROKEN_ROOT_CHAIN,
    NON_MONOTONIC_TIMESTAMP,
    ROOT_MISMATCH,
    ReplicaAuditor,
    StreamAuditor,
)
from .client import (
    ALARM_FORK,
    ALARM_POD_NOT_HONORED,
    ALARM_UNAUTHORIZED_REVOCATION,
    ALARM_WRONGFUL_REFUSAL,
    STATUS_MEMBER,
    STATUS_UNDECIDED,
    AccessClient,
)
from .crypto import ZERO_DIGEST, KeyPair, PublicKey
from .events import (
    ROLE_LEADER,
    ROLE_MEMBER,
    CertRevocation,
    GroupId,
    MemberCertificate,
    MemberRevocation,
    ResumeEvent,
    SuspendEvent,
    encode_chain,
    membership_index,
)
from .faults import (
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
from .ledger import (
    EVENT_LOG_NAME,
    Block,
    LedgerService,
    SubmitOutcome,
    encode_feed_block,
    encode_feed_entry,
    encode_feed_update,
)
from .oracle import ReplayOracle
from .prefix_tree import PrefixTree
from .validation import check_chain
from .wire import LedgerServer, LoopbackTransport, RemoteLedger

EPOCH = 1_700_000_000  # manual clocks start here; any fixed origin works


class World:
    """One ledger plus everything that talks to it, all seed-driven.

    Scenario and fuzz worlds route through the real wire encoding via a
    loopback transport; workload worlds call the service directly for
    speed. ``chains`` tracks the newest accepted certificate chain per
    (group, role, subject) (what an honest holder would present), and
    ``accepted`` mirrors the event log so a replay oracle can be built
    without touching storage.
    """

    def __init__(
        self,
        seed: int,
        *,
        faulty: bool = False,
        storage_dir: str | Path | None = None,
        wire: bool = False,
        with_auditors: bool = False,
        block_events: int = 1 << 30,
        block_seconds: float = float(1 << 30),
    ):
        self.seed = seed
        self.rng = random.Random(seed)
        self.now = float(EPOCH)
        self.utp_key = self.keypair()
        service_cls = FaultyLedger if faulty else LedgerService
        self.service = service_cls(
            self.utp_key,
            storage_dir,
            block_events=block_events,
            block_seconds=block_seconds,
            clock=lambda: self.now,
        )
        base = (
            RemoteLedger(LoopbackTransport(LedgerServer(self.service)))
            if wire
            else self.service
        )
        self.channel = UnresponsiveChannel(base)
        self.auditors: list = []
        if with_auditors:
            # Keyed, so they endorse blocks and clients can cross-check
            # the tip they were served against an independent view.
            self.auditors = [
                StreamAuditor(self.utp_key.public, key=self.keypair()),
                ReplicaAuditor(self.utp_key.public, key=self.keypair()),
            ]
        self.keys: dict[str, KeyPair] = {}
        self.clients: dict[str, AccessClient] = {}
        self.groups: dict[str, GroupId] = {}
        self.chains: dict[tuple[GroupId, str, PublicKey], tuple[MemberCertificate, ...]] = {}
        self.accepted: list[tuple[int, object]] = []
        self.last_seq = 0
        self.observer = AccessClient(self.channel, self.utp_key.public, self.auditors)

    def keypair(self) -> KeyPair:
        return KeyPair(self.rng.randbytes(32))

    def tick(self, seconds: float = 1.0) -> None:
        self.now += seconds

    def actor(self, name: str) -> KeyPair:
        if name not in self.keys:
            self.keys[name] = self.keypair()
            self.clients[name] = AccessClient(
                self.channel, self.utp_key.public, self.auditors
            )
        return self.keys[name]

    def group(self, name: str, owner: str) -> GroupId:
        if name not in self.groups:
            self.groups[name] = GroupId(self.actor(owner).public, name)
        return self.groups[name]

    def chain_for(
        self, group: GroupId, role: str, subject: PublicKey
    ) -> tuple[MemberCertificate, ...]:
        return self.chains.get((group, role, subject), ())

    def freshness(self) -> int:
        # One past the last accepted sequence number: always beats the
        # floor at any index, so back-to-back edits of one membership
        # never trip the staleness rule.
        return self.last_seq + 1

    def submit_event(
        self,
        event,
        chain: Sequence[MemberCertificate] = (),
        client: AccessClient | None = None,
    ) -> SubmitOutcome | None:
        chain = tuple(chain)
        if client is not None:
            outcome = client.submit(event, chain)
        else:
            outcome = self.service.submit(event.encoded, encode_chain(chain))
        self._record(event, outcome)
        return outcome

    def _record(self, event, outcome: SubmitOutcome | None) -> None:
        if outcome is None or not outcome.accepted:
            return
        self.last_seq += 1
        self.accepted.append((self.last_seq, event))
        if isinstance(event, MemberCertificate):
            issuer_chain = self.chain_for(event.group, ROLE_LEADER, event.issuer)
            key = (event.group, event.role, event.subject)
            self.chains[key] = issuer_chain + (event,)

    def oracle(self) -> ReplayOracle:
        return ReplayOracle(iter(self.accepted))

    def publish(self) -> Block:
        return self.service.publish_block()

    def pull_auditors(self) -> list:
        found = []
        for auditor in self.auditors:
            found.extend(auditor.pull(self.channel))
        return found


# ---------------------------------------------------------------------------
# scripted scenarios


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    steps: tuple[dict, ...]


@dataclass(frozen=True)
class ScenarioResult:
    name: str
    passed: bool
    transcript: tuple[str, ...]
    failure: str | None = None


class StepFailed(Exception):
    """An expectation in a scenario script did not hold."""


def load_scenario(path: str | Path) -> Scenario:
    """Read a ``{"name", "seed", "steps"}`` script from a JSON file."""
    raw = json.loads(Path(path).read_text())
    return Scenario(raw["name"], int(raw.get("seed", 0)), tuple(raw["steps"]))


def run_scenario(scenario: Scenario) -> ScenarioResult:
    faulty = any(step.get("op") == "arm" for step in scenario.steps)
    world = World(scenario.seed, faulty=faulty, wire=True, with_auditors=True)
    lines: list[str] = []
    for number, step in enumerate(scenario.steps):
        op = step.get("op")
        handler = _STEP_HANDLERS.get(op)
        try:
            if handler is None:
                raise StepFailed(f"unknown step op {op!r}")
            record = handler(world, step)
        except StepFailed as exc:
            lines.append(json.dumps({"step": number, "op": op, "error": str(exc)}, sort_keys=True))
            return ScenarioResult(scenario.name, False, tuple(lines), str(exc))
        record.update({"step": number, "op": op})
        lines.append(json.dumps(record, sort_keys=True))
    return ScenarioResult(scenario.name, True, tuple(lines))


def _need(step: dict, field: str):
    try:
        return step[field]
    except KeyError:
        raise StepFailed(f"step {step.get('op')!r} is missing {field!r}") from None


def _issuer_context(world: World, step: dict):
    name = _need(step, "issuer")
    key = world.actor(name)
    group = world.groups.get(_need(step, "group"))
    if group is None:
        raise StepFailed(f"unknown group {step['group']!r}")
    chain = world.chain_for(group, ROLE_LEADER, key.public)
    return key, world.clients[name], group, chain


def _expect_outcome(step: dict, outcome: SubmitOutcome | None) -> dict:
    if outcome is None:
        got = "no-response"
    elif outcome.accepted:
        got = "accepted"
    else:
        got = outcome.rejection.code
    want = step.get("expect", "accepted")
    if got != want:
        raise StepFailed(f"expected outcome {want!r}, got {got!r}")
    return {"outcome": got}


def _step_actor(world: World, step: dict) -> dict:
    world.actor(_need(step, "name"))
    return {"name": step["name"]}


def _step_group(world: World, step: dict) -> dict:
    world.group(_need(step, "name"), _need(step, "owner"))
    return {"name": step["name"], "owner": step["owner"]}


def _step_add(world: World, step: dict) -> dict:
    key, client, group, chain = _issuer_context(world, step)
    subject = world.actor(_need(step, "subject")).public
    event = MemberCertificate.issue(
        key, subject, group, _need(step, "role"), world.freshness()
    )
    return _expect_outcome(step, world.submit_event(event, chain, client))


def _step_revoke(world: World, step: dict) -> dict:
    key, client, group, chain = _issuer_context(world, step)
    subject = world.actor(_need(step, "subject")).public
    event = MemberRevocation.issue(
        key, subject, group, _need(step, "role"), world.freshness()
    )
    return _expect_outcome(step, world.submit_event(event, chain, client))


def _step_suspend(world: World, step: dict) -> dict:
    key, client, group, chain = _issuer_context(world, step)
    event = SuspendEvent.issue(key, group, world.freshness())
    return _expect_outcome(step, world.submit_event(event, chain, client))


def _step_resume(world: World, step: dict) -> dict:
    key, client, group, chain = _issuer_context(world, step)
    event = ResumeEvent.issue(key, group, world.freshness())
    return _expect_outcome(step, world.submit_event(event, chain, client))


def _step_revoke_cert(world: World, step: dict) -> dict:
    key, client, group, _ = _issuer_context(world, step)
    subject = world.actor(_need(step, "subject")).public
    chain = world.chain_for(group, _need(step, "role"), subject)
    if not chain:
        raise StepFailed(f"no registered certificate for {step['subject']!r}")
    event = CertRevocation.issue(key, chain[-1].hash, world.freshness())
    return _expect_outcome(step, world.submit_event(event, (), client))


def _step_publish(world: World, step: dict) -> dict:
    block = world.publish()
    return {"height": block.height, "root": block.root.hex()}


def _step_tick(world: World, step: dict) -> dict:
    seconds = float(step.get("seconds", 1))
    world.tick(seconds)
    return {"seconds": seconds}


def _step_arm(world: World, step: dict) -> dict:
    world.service.arm(_need(step, "fault"))
    return {"fault": step["fault"]}


def _step_silence(world: World, step: dict) -> dict:
    world.channel.silent = bool(_need(step, "on"))
    return {"silent": world.channel.silent}


def _step_verify(world: World, step: dict) -> dict:
    subject = world.actor(_need(step, "subject")).public
    group = world.groups.get(_need(step, "group"))
    if group is None:
        raise StepFailed(f"unknown group {step['group']!r}")
    role = _need(step, "role")
    chain = world.chain_for(group, role, subject)
    decision = world.observer.verify_member(subject, role, group, chain)
    want = step.get("expect", STATUS_MEMBER)
    if decision.status != want:
        raise StepFailed(
            f"verify {step['subject']}/{role}: expected {want!r}, got {decision.status!r}"
        )
    alarm = decision.alarm.kind if decision.alarm else None
    if step.get("alarm") != alarm:
        raise StepFailed(f"verify alarm: expected {step.get('alarm')!r}, got {alarm!r}")
    return {"subject": step["subject"], "role": role, "status": decision.status, "alarm": alarm}


def _step_oracle(world: World, step: dict) -> dict:
    subject = world.actor(_need(step, "subject")).public
    group = world.groups.get(_need(step, "group"))
    if group is None:
        raise StepFailed(f"unknown group {step['group']!r}")
    held = world.oracle().has_role(group, _need(step, "role"), subject)
    if held != bool(_need(step, "expect")):
        raise StepFailed(f"oracle says {held} for {step['subject']}/{step['role']}")
    return {"subject": step["subject"], "role": step["role"], "held": held}


def _step_agree(world: World, step: dict) -> dict:
    subject = world.actor(_need(step, "subject")).public
    group = world.groups.get(_need(step, "group"))
    if group is None:
        raise StepFailed(f"unknown group {step['group']!r}")
    role = _need(step, "role")
    chain = world.chain_for(group, role, subject)
    decision = world.observer.verify_member(subject, role, group, chain)
    held = world.oracle().has_role(group, role, subject)
    if decision.status == STATUS_UNDECIDED or (decision.status == STATUS_MEMBER) != held:
        raise StepFailed(
            f"verifier {decision.status!r} disagrees with oracle {held} "
            f"for {step['subject']}/{role}"
        )
    return {"subject": step["subject"], "role": role, "held": held, "status": decision.status}


def _step_followup(world: World, step: dict) -> dict:
    name = _need(step, "actor")
    if name not in world.clients:
        raise StepFailed(f"unknown actor {name!r}")
    kinds = sorted(alarm.kind for alarm in world.clients[name].followup())
    want = sorted(step.get("expect", []))
    if kinds != want:
        raise StepFailed(f"followup alarms {kinds} != expected {want}")
    return {"actor": name, "alarms": kinds}


def _step_pull(world: World, step: dict) -> dict:
    kinds = sorted({m.kind for m in world.pull_auditors()})
    want = step.get("expect", [])
    if want == "healthy":
        if kinds or not all(a.healthy for a in world.auditors):
            raise StepFailed(f"auditors unhealthy or reported {kinds}")
    elif kinds != sorted(want):
        raise StepFailed(f"auditors reported {kinds} != expected {sorted(want)}")
    return {"misbehavior": kinds, "healthy": [a.healthy for a in world.auditors]}


_STEP_HANDLERS: dict[str, Callable[[World, dict], dict]] = {
    "actor": _step_actor,
    "group": _step_group,
    "add": _step_add,
    "revoke": _step_revoke,
    "suspend": _step_suspend,
    "resume": _step_resume,
    "revoke-cert": _step_revoke_cert,
    "publish": _step_publish,
    "tick": _step_tick,
    "arm": _step_arm,
    "silence": _step_silence,
    "verify": _step_verify,
    "oracle": _step_oracle,
    "agree": _step_agree,
    "followup": _step_followup,
    "pull": _step_pull,
}


def _handover_script() -> tuple[dict, ...]:
    # Delegated authority outlives its grantor: the newest leader can
    # revoke the founder, and the middle of the chain stays valid.
    return (
        {"op": "actor", "name": "alice"},
        {"op": "actor", "name": "bob"},
        {"op": "actor", "name": "carol"},
        {"op": "group", "name": "shared-files", "owner": "alice"},
        {"op": "add", "issuer": "alice", "group": "shared-files", "role": "leader", "subject": "bob"},
        {"op": "add", "issuer": "bob", "group": "shared-files", "role": "leader", "subject": "carol"},
        {"op": "revoke", "issuer": "carol", "group": "shared-files", "role": "leader", "subject": "alice"},
        {"op": "publish"},
        {"op": "pull", "expect": "healthy"},
        {"op": "verify", "group": "shared-files", "role": "leader", "subject": "alice", "expect": "not-member"},
        {"op": "verify", "group": "shared-files", "role": "leader", "subject": "bob", "expect": "member"},
        {"op": "verify", "group": "shared-files", "role": "leader", "subject": "carol", "expect": "member"},
        {"op": "agree", "group": "shared-files", "role": "leader", "subject": "alice"},
        {"op": "agree", "group": "shared-files", "role": "leader", "subject": "bob"},
        {"op": "agree", "group": "shared-files", "role": "leader", "subject": "carol"},
        {"op": "followup", "actor": "carol", "expect": []},
    )


def _race_script(first: str, second: str) -> tuple[dict, ...]:
    # Two leaders try to revoke each other; whoever is sequenced first
    # wins and the loser's revocation bounces as unauthorized. The
    # remaining steps must hold under either service order.
    group = "home-devices"
    return (
        {"op": "actor", "name": "owner"},
        {"op": "actor", "name": "david"},
        {"op": "actor", "name": "erik"},
        {"op": "group", "name": group, "owner": "owner"},
        {"op": "add", "issuer": "owner", "group": group, "role": "leader", "subject": "david"},
        {"op": "add", "issuer": "owner", "group": group, "role": "leader", "subject": "erik"},
        {"op": "revoke", "issuer": first, "group": group, "role": "leader", "subject": second},
        {"op": "revoke", "issuer": second, "group": group, "role": "leader", "subject": first, "expect": "unauthorized"},
        {"op": "add", "issuer": second, "group": group, "role": "member", "subject": second, "expect": "unauthorized"},
        {"op": "publish"},
        {"op": "pull", "expect": "healthy"},
        {"op": "verify", "group": group, "role": "leader", "subject": first, "expect": "member"},
        {"op": "verify", "group": group, "role": "leader", "subject": second, "expect": "not-member"},
        {"op": "agree", "group": group, "role": "leader", "subject": first},
        {"op": "agree", "group": group, "role": "leader", "subject": second},
        # The loser's rejection cites the winner's revocation; reviewing
        # it must not raise a wrongful-refusal alarm.
        {"op": "followup", "actor": second, "expect": []},
        {"op": "followup", "actor": first, "expect": []},
    )


def _clique_script() -> tuple[dict, ...]:
    # Revocation alone cannot expel members who re-add each other faster
    # than the owner revokes; suspending the group stops the re-adds so
    # the owner can sweep the clique out and resume.
    group = "project"
    return (
        {"op": "actor", "name": "owner"},
        {"op": "actor", "name": "mal1"},
        {"op": "actor", "name": "mal2"},
        {"op": "group", "name": group, "owner": "owner"},
        {"op": "add", "issuer": "owner", "group": group, "role": "leader", "subject": "mal1"},
        {"op": "add", "issuer": "owner", "group": group, "role": "leader", "subject": "mal2"},
        # Plain revocation loses the race: the accomplice re-adds.
        {"op": "revoke", "issuer": "owner", "group": group, "role": "leader", "subject": "mal1"},
        {"op": "add", "issuer": "mal2", "group": group, "role": "leader", "subject": "mal1"},
        {"op": "publish"},
        {"op": "verify", "group": group, "role": "leader", "subject": "mal1", "expect": "member"},
        # Suspension freezes everyone but the suspender.
        {"op": "suspend", "issuer": "owner", "group": group},
        {"op": "revoke", "issuer": "owner", "group": group, "role": "leader", "subject": "mal1"},
        {"op": "add", "issuer": "mal2", "group": group, "role": "leader", "subject": "mal1", "expect": "group-suspended"},
        {"op": "revoke", "issuer": "owner", "group": group, "role": "leader", "subject": "mal2"},
        {"op": "add", "issuer": "mal1", "group": group, "role": "leader", "subject": "mal2", "expect": "group-suspended"},
        {"op": "resume", "issuer": "mal2", "group": group, "expect": "unauthorized"},
        {"op": "resume", "issuer": "owner", "group": group},
        {"op": "add", "issuer": "mal2", "group": group, "role": "leader", "subject": "mal1", "expect": "unauthorized"},
        {"op": "publish"},
        {"op": "pull", "expect": "healthy"},
        {"op": "verify", "group": group, "role": "leader", "subject": "mal1", "expect": "not-member"},
        {"op": "verify", "group": group, "role": "leader", "subject": "mal2", "expect": "not-member"},
        {"op": "verify", "group": group, "role": "leader", "subject": "owner", "expect": "member"},
        {"op": "agree", "group": group, "role": "leader", "subject": "mal1"},
        {"op": "agree", "group": group, "role": "leader", "subject": "mal2"},
        {"op": "agree", "group": group, "role": "leader", "subject": "owner"},
        {"op": "followup", "actor": "mal1", "expect": []},
        {"op": "followup", "actor": "mal2", "expect": []},
        {"op": "followup", "actor": "owner", "expect": []},
    )


# Scenario name -> interleavings. Each interleaving is one step script;
# the race scenario must pass regardless of which revocation lands first.
NAMED_SCENARIOS: dict[str, tuple[tuple[dict, ...], ...]] = {
    "alice-bob-carol": (_handover_script(),),
    "david-erik-race": (
        _race_script("david", "erik"),
        _race_script("erik", "david"),
    ),
    "semi-malicious-clique": (_clique_script(),),
}


def run_named_scenario(name: str, seed: int = 11) -> list[ScenarioResult]:
    """Run every interleaving of a built-in scenario."""
    try:
        scripts = NAMED_SCENARIOS[name]
    except KeyError:
        raise ValueError(
            f"unknown scenario {name!r}; choose from {sorted(NAMED_SCENARIOS)}"
        ) from None
    results = []
    for i, steps in enumerate(scripts):
        label = name if len(scripts) == 1 else f"{name}#{i + 1}"
        results.append(run_scenario(Scenario(label, seed, steps)))
    return results


# ---------------------------------------------------------------------------
# randomized workloads checked against the replay oracle


@dataclass(frozen=True)
class WorkloadReport:
    seed: int
    keys: int
    groups: int
    submitted: int
    accepted: int
    checks: int
    disagreements: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.disagreements


def run_workload(seed: int, storage_dir: str | Path | None = None) -> WorkloadReport:
    """Random membership history, then: does the online verifier agree
    with a from-scratch replay for every chain anyone could present?

    With ``storage_dir`` set the oracle replays the persisted event log
    rather than the in-memory mirror, covering the storage path too.
    """
    world = World(seed, storage_dir=storage_dir)
    rng = world.rng
    try:
        n_keys = rng.randint(6, 20)
        n_groups = rng.randint(3, 6)
        n_events = rng.randint(60, 300)
        keys = [world.keypair() for _ in range(n_keys)]
        groups = [
            GroupId(rng.choice(keys).public, f"team-{i}") for i in range(n_groups)
        ]
        submitted = accepted = 0
        for _ in range(n_events):
            group = rng.choice(groups)
            event, chain = _random_op(world, rng, group, keys)
            outcome = world.submit_event(event, chain)
            submitted += 1
            accepted += bool(outcome.accepted)
        world.publish()
        if storage_dir is not None:
            oracle = ReplayOracle.from_log(Path(storage_dir) / EVENT_LOG_NAME)
        else:
            oracle = world.oracle()
        checks, disagreements = _membership_sweep(world, oracle, groups, keys)
        return WorkloadReport(
            seed, n_keys, n_groups, submitted, accepted, checks, tuple(disagreements)
        )
    finally:
        world.service.close()


def _random_op(world: World, rng: random.Random, group: GroupId, keys: list[KeyPair]):
    # Issuers are mostly picked from keys that currently hold (or never
    # lost) leadership, so histories stay busy; the rest are rogue
    # attempts that the ledger should refuse.
    leaders = [
        k
        for k in keys
        if k.public == group.owner_key
        or world.chains.get((group, ROLE_LEADER, k.public))
    ]
    if leaders and rng.random() < 0.85:
        issuer = rng.choice(leaders)
    else:
        issuer = rng.choice(keys)
    chain = world.chain_for(group, ROLE_LEADER, issuer.public)
    stamp = world.freshness()
    draw = rng.random()
    if draw < 0.50:
        subject = rng.choice(keys).public
        role = ROLE_LEADER if rng.random() < 0.4 else ROLE_MEMBER
        return MemberCertificate.issue(issuer, subject, group, role, stamp), chain
    if draw < 0.74:
        held = [(r, s) for (g, r, s) in world.chains if g == group]
        if held and rng.random() < 0.8:
            role, subject = rng.choice(held)
        else:
            role = ROLE_LEADER if rng.random() < 0.5 else ROLE_MEMBER
            subject = rng.choice(keys).public
        return MemberRevocation.issue(issuer, subject, group, role, stamp), chain
    if draw < 0.86:
        return SuspendEvent.issue(issuer, group, stamp), chain
    holder = world.service.suspension_holder(group)
    if holder is not None and rng.random() < 0.8:
        match = next((k for k in keys if k.public == holder), None)
        if match is not None:
            issuer = match
            chain = world.chain_for(group, ROLE_LEADER, holder)
    return ResumeEvent.issue(issuer, group, stamp), chain


def _membership_sweep(
    world: World,
    oracle: ReplayOracle,
    groups: list[GroupId],
    keys: list[KeyPair],
) -> tuple[int, list[str]]:
    triples = set(world.chains)
    for group in groups:
        triples.add((group, ROLE_LEADER, group.owner_key))
        # A couple of pairs nobody certified, to exercise the negative path.
        for _ in range(2):
            role = ROLE_LEADER if world.rng.random() < 0.5 else ROLE_MEMBER
            triples.add((group, role, world.rng.choice(keys).public))
    disagreements: list[str] = []
    for group, role, subject in sorted(triples, key=lambda t: (t[0].name, t[1], t[2])):
        chain = world.chain_for(group, role, subject)
        decision = world.observer.verify_member(subject, role, group, chain)
        expected = oracle.has_role(group, role, subject)
        if decision.status == STATUS_UNDECIDED or (decision.status == STATUS_MEMBER) != expected:
            disagreements.append(
                f"seed={world.seed} group={group.name} role={role} "
                f"subject={subject.hex()[:12]} verifier={decision.status} oracle={expected}"
            )
        elif decision.alarm is not None:
            disagreements.append(
                f"seed={world.seed} group={group.name} role={role} "
                f"subject={subject.hex()[:12]} spurious alarm {decision.alarm.kind}"
            )
    return len(triples), disagreements


# ---------------------------------------------------------------------------
# fault fuzzing

# Who must notice each fault. Detection counts if any of the listed
# kinds shows up among client alarms or auditor misbehavior reports.
EXPECTED_DETECTION: dict[str, frozenset[str]] = {
    FAULT_MUTATE_HISTORY: frozenset({ROOT_MISMATCH}),
    FAULT_DELETE_ENTRY: frozenset({ROOT_MISMATCH}),
    FAULT_FORK: frozenset({ALARM_FORK}),
    FAULT_DROP_UPDATE: frozenset({ROOT_MISMATCH, BROKEN_ROOT_CHAIN}),
    FAULT_REUSED_SEQ: frozenset({NON_MONOTONIC_TIMESTAMP}),
    FAULT_STORE_UNAUTHORIZED: frozenset({ALARM_UNAUTHORIZED_REVOCATION}),
    FAULT_REFUSE_VALID: frozenset({ALARM_WRONGFUL_REFUSAL}),
    FAULT_OMIT_AFTER_POD: frozenset({ALARM_POD_NOT_HONORED}),
}


@dataclass(frozen=True)
class FuzzOutcome:
    seed: int
    fault: str | None
    fired: tuple[str, ...]
    detected: tuple[str, ...]
    expected: tuple[str, ...]
    healthy: bool
    ok: bool

    def describe(self) -> dict:
        return {
            "seed": self.seed,
            "fault": self.fault,
            "fired": list(self.fired),
            "detected": list(self.detected),
            "expected": list(self.expected),
            "healthy": self.healthy,
            "ok": self.ok,
        }


def fuzz_run(seed: int, fault: str | None = None) -> FuzzOutcome:
    """One honest history, one optional armed fault, then a uniform
    follow-up pass. Honest runs must stay silent; faulty runs must
    produce at least one of the expected alarm kinds."""
    if fault is not None and fault not in EXPECTED_DETECTION:
        raise ValueError(f"unknown fault {fault!r}")
    world = World(seed, faulty=True, wire=True, with_auditors=True)
    owner = world.actor("owner")
    lead = world.actor("lead")
    peer = world.actor("peer")
    mate = world.actor("mate")
    group = world.group("ops", "owner")
    oclient = world.clients["owner"]
    lclient = world.clients["lead"]

    def issue(builder, issuer, *args, client, chain=()):
        event = builder(issuer, *args, world.freshness())
        outcome = world.submit_event(event, chain, client)
        if outcome is None or not outcome.accepted:
            raise RuntimeError(f"honest base event refused: {outcome!r}")
        return event

    issue(MemberCertificate.issue, owner, lead.public, group, ROLE_LEADER, client=oclient)
    issue(MemberCertificate.issue, owner, peer.public, group, ROLE_MEMBER, client=oclient)
    lead_chain = world.chain_for(group, ROLE_LEADER, lead.public)
    issue(MemberCertificate.issue, lead, mate.public, group, ROLE_MEMBER, client=lclient, chain=lead_chain)
    issue(MemberRevocation.issue, owner, mate.public, group, ROLE_MEMBER, client=oclient)
    issue(SuspendEvent.issue, owner, group, client=oclient)
    issue(ResumeEvent.issue, owner, group, client=oclient)
    world.tick()
    world.publish()
    world.pull_auditors()
    for client in (oclient, lclient):
        client.followup()
    if _collect_alarm_kinds(world):
        raise RuntimeError("alarms during honest preamble")

    if fault is not None:
        world.service.arm(fault)
    _FUZZ_TRIGGERS[fault](world, group)

    world.tick()
    world.observer.latest_block()
    world.pull_auditors()
    for client in (oclient, lclient):
        client.followup()
    world.observer.verify_member(
        lead.public, ROLE_LEADER, group, world.chain_for(group, ROLE_LEADER, lead.public)
    )
    world.observer.verify_member(
        peer.public, ROLE_MEMBER, group, world.chain_for(group, ROLE_MEMBER, peer.public)
    )

    detected = _collect_alarm_kinds(world)
    healthy = all(a.healthy for a in world.auditors)
    expected = EXPECTED_DETECTION.get(fault, frozenset())
    if fault is None:
        ok = not detected and healthy
    else:
        ok = bool(expected & detected)
    return FuzzOutcome(
        seed,
        fault,
        tuple(world.service.fired),
        tuple(sorted(detected)),
        tuple(sorted(expected)),
        healthy,
        ok,
    )


def _collect_alarm_kinds(world: World) -> set[str]:
    kinds = {a.kind for c in world.clients.values() for a in c.alarms}
    kinds |= {a.kind for a in world.observer.alarms}
    kinds |= {m.kind for auditor in world.auditors for m in auditor.misbehaviors}
    return kinds


def _fresh_member(world: World, group: GroupId, client: AccessClient) -> SubmitOutcome | None:
    owner = world.keys["owner"]
    subject = world.keypair().public
    event = MemberCertificate.issue(owner, subject, group, ROLE_MEMBER, world.freshness())
    return world.submit_event(event, (), client)


def _trigger_tamper(world: World, group: GroupId) -> None:
    # Covers mutate-history and delete-entry: the doctored root goes out
    # with the next block.
    _fresh_member(world, group, world.clients["owner"])
    world.tick()
    world.publish()


def _trigger_fork(world: World, group: GroupId) -> None:
    # publish() signs the canonical block and the forged sibling; the
    # forged one is what latest_block/query serve until the next block.
    world.tick()
    world.publish()


def _trigger_rogue_revocation(world: World, group: GroupId) -> None:
    peer = world.keys["peer"]
    lead = world.keys["lead"]
    event = MemberRevocation.issue(
        peer, lead.public, group, ROLE_LEADER, world.freshness()
    )
    outcome = world.submit_event(event, (), world.clients["owner"])
    if outcome is None or not outcome.accepted:
        raise RuntimeError("armed ledger failed to store the rogue revocation")
    world.tick()
    world.publish()


def _trigger_submission(world: World, group: GroupId) -> None:
    # Covers drop-update, non-monotonic-seq, refuse-valid-event and
    # omit-after-pod: each fires on the next submission or its feed.
    _fresh_member(world, group, world.clients["owner"])
    world.tick()
    world.publish()


_FUZZ_TRIGGERS: dict[str | None, Callable[[World, GroupId], None]] = {
    None: _trigger_submission,
    FAULT_MUTATE_HISTORY: _trigger_tamper,
    FAULT_DELETE_ENTRY: _trigger_tamper,
    FAULT_FORK: _trigger_fork,
    FAULT_DROP_UPDATE: _trigger_submission,
    FAULT_REUSED_SEQ: _trigger_submission,
    FAULT_STORE_UNAUTHORIZED: _trigger_rogue_revocation,
    FAULT_REFUSE_VALID: _trigger_submission,
    FAULT_OMIT_AFTER_POD: _trigger_submission,
}


def fuzz_batch(
    runs_per_fault: int,
    honest_runs: int = 0,
    faults: Sequence[str] = ALL_FAULTS,
    seed0: int = 0,
) -> list[FuzzOutcome]:
    outcomes = []
    seed = seed0
    for fault in faults:
        for _ in range(runs_per_fault):
            outcomes.append(fuzz_run(seed, fault))
            seed += 1
    for _ in range(honest_runs):
        outcomes.append(fuzz_run(seed))
        seed += 1
    return outcomes


# ---------------------------------------------------------------------------
# benchmarks


class _TreeEntries:
    """entries_at view over a raw tree, decoding event bodies lazily."""

    def __init__(self, tree: PrefixTree):
        self._tree = tree
        self._cache: dict[bytes, object] = {}

    def entries_at(self, index: bytes):
        from .events import decode_event

        out = []
        for seq, event_hash, body in self._tree.entries(index):
            event = self._cache.get(event_hash)
            if event is None:
                event = decode_event(body)
                self._cache[event_hash] = event
            out.append((seq, event))
        return out


class _ReplayFeed:
    """Feed source over a prerecorded frame list, for auditor benchmarks."""

    def __init__(self, frames: list[bytes]):
        self._frames = frames

    def audit_feed(self, mode: int, cursor: int, limit: int = 256):
        batch = self._frames[cursor : cursor + limit]
        return batch, cursor + len(batch)


def run_bench(
    *,
    entries: int = 100_000,
    chain_length: int = 50,
    chain_count: int = 120,
    feed_updates: int = 20_000,
    seed: int = 2026,
) -> dict:
    """Measure the hot paths and return one JSON-friendly report.

    Signature checks are memoized process-wide, so every benchmark chain
    uses fresh keys: each verification here is a cold one.
    """
    rng = random.Random(seed)
    report: dict = {
        "config": {
            "entries": entries,
            "chain_length": chain_length,
            "chain_count": chain_count,
            "feed_updates": feed_updates,
            "seed": seed,
        },
        "machine": {
            "python": platform.python_version(),
            "platform": platform.platform(),
        },
    }

    tree = PrefixTree()
    body = bytes(150)  # roughly a small certificate
    indexes = [rng.randbytes(32) for _ in range(entries)]
    started = time.perf_counter()
    update = None
    for position, index in enumerate(indexes):
        update = tree.insert(index, position + 1, index, body)
    elapsed = time.perf_counter() - started
    report["inserts_per_s"] = round(entries / elapsed, 1)
    report["update_proof_bytes"] = len(encode_feed_update(update))
    report["mean_leaf_depth"] = round(statistics.fmean(tree.iter_leaf_depths()), 3)

    owner = KeyPair(rng.randbytes(32))
    group = GroupId(owner.public, "bench")
    seq = entries
    chains: list[tuple[MemberCertificate, ...]] = []
    for _ in range(chain_count):
        issuer = owner
        certs = []
        for _ in range(chain_length):
            holder = KeyPair(rng.randbytes(32))
            seq += 1
            cert = MemberCertificate.issue(issuer, holder.public, group, ROLE_LEADER, seq)
            tree.insert(
                membership_index(group, ROLE_LEADER, holder.public),
                seq,
                cert.hash,
                cert.encoded,
            )
            certs.append(cert)
            issuer = holder
        chains.append(tuple(certs))
    view = _TreeEntries(tree)
    started = time.perf_counter()
    for chain in chains:
        result = check_chain(view, chain, group, chain[-1].subject, ROLE_LEADER)
        if not result.ok:
            raise RuntimeError(f"benchmark chain failed validation: {result.failure}")
    elapsed = time.perf_counter() - started
    report["check_chain_per_s"] = round(chain_count / elapsed, 1)
    report["ledger_entries_at_check"] = entries + chain_count * chain_length

    ledger_key = KeyPair(rng.randbytes(32))
    feed_tree = PrefixTree()
    frames: list[bytes] = []
    genesis = Block.build(ledger_key, 0, ZERO_DIGEST, feed_tree.root, 0, EPOCH)
    frames.append(encode_feed_block(genesis))
    prev, height = genesis.block_hash, 1
    for position in range(feed_updates):
        index = rng.randbytes(32)
        frames.append(encode_feed_update(feed_tree.insert(index, position + 1, index)))
        if (position + 1) % 2000 == 0 or position + 1 == feed_updates:
            block = Block.build(
                ledger_key, height, prev, feed_tree.root, position + 1, EPOCH + height
            )
            frames.append(encode_feed_block(block))
            prev, height = block.block_hash, height + 1
    auditor = StreamAuditor(ledger_key.public)
    source = _ReplayFeed(frames)
    started = time.perf_counter()
    complaints = auditor.pull(source)
    elapsed = time.perf_counter() - started
    if complaints or not auditor.healthy:
        raise RuntimeError("stream auditor rejected a synthetic honest feed")
    report["auditor_updates_per_s"] = round(feed_updates / elapsed, 1)
    report["stream_state_bytes"] = len(auditor.checkpoint())
    report["entry_frame_bytes"] = len(encode_feed_entry(1, bytes(32), bytes(32)))
    return report
