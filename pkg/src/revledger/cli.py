"""Command-line front end.

Four command families mirror the deployment roles: ``ledger`` runs the
untrusted log server, ``client`` issues and verifies membership from a
local keystore, ``auditor`` follows a ledger's feed, and ``oracle`` /
``harness`` replay and stress histories offline. Output is one JSON
object per line so scripts can consume verdicts directly.

The keystore is a plain directory::

    keys/<name>.key      private key material
    keys/<name>.pub      hex public key
    groups/<name>.json   group descriptor (owner key + name)
    chains/*.chain       newest accepted certificate chain per membership
    ledger.pub           pinned ledger identity, written on first use
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from .client import AccessClient
from .crypto import CryptoError, KeyPair, PublicKey
from .encoding import DecodeError
from .events import (
    ROLE_LEADER,
    ROLE_MEMBER,
    GroupId,
    MemberCertificate,
    decode_chain,
    encode_chain,
    membership_index,
    suspension_index,
)
from .faults import ALL_FAULTS
from .harness import (
    NAMED_SCENARIOS,
    Scenario,
    fuzz_run,
    load_scenario,
    run_bench,
    run_named_scenario,
    run_scenario,
    run_workload,
)
from .ledger import LedgerService
from .oracle import ReplayOracle
from .auditor import ReplicaAuditor, StreamAuditor, attach_at_block
from .wire import (
    AuditorServer,
    LedgerServer,
    NoResponse,
    RemoteAuditor,
    RemoteLedger,
    SocketServer,
    SocketTransport,
)


def _emit(record: dict) -> None:
    print(json.dumps(record, sort_keys=True), flush=True)


def _fail(message: str) -> "NoReturn":  # noqa: F821 - py3.10 spelling
    _emit({"error": message})
    raise SystemExit(2)


def _parse_addr(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        _fail(f"address must look like host:port, got {value!r}")
    return host, int(port)


def _parse_hex_key(value: str) -> PublicKey:
    try:
        return PublicKey(bytes.fromhex(value))
    except (ValueError, CryptoError):
        _fail(f"not a hex-encoded public key: {value!r}")


# ---------------------------------------------------------------------------
# keystore


class Keystore:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _key_path(self, name: str) -> Path:
        return self.root / "keys" / f"{name}.key"

    def save_key(self, name: str, key: KeyPair) -> None:
        path = self._key_path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(key.to_bytes())
        path.with_suffix(".pub").write_text(key.public.hex() + "\n")

    def load_key(self, name: str) -> KeyPair:
        path = self._key_path(name)
        if not path.exists():
            _fail(f"no key named {name!r} in {self.root}")
        return KeyPair.from_bytes(path.read_bytes())

    def resolve_public(self, ref: str) -> PublicKey:
        """A keystore name if one exists, else a hex public key."""
        if self._key_path(ref).exists():
            return self.load_key(ref).public
        return _parse_hex_key(ref)

    def save_group(self, group: GroupId) -> None:
        path = self.root / "groups" / f"{group.name}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps({"name": group.name, "owner": group.owner_key.hex()}) + "\n"
        )

    def load_group(self, name: str) -> GroupId:
        path = self.root / "groups" / f"{name}.json"
        if not path.exists():
            _fail(f"no group named {name!r} in {self.root}")
        raw = json.loads(path.read_text())
        return GroupId(_parse_hex_key(raw["owner"]), raw["name"])

    def _chain_path(self, group: GroupId, role: str, subject: PublicKey) -> Path:
        return self.root / "chains" / f"{group.name}.{role}.{subject.hex()[:16]}.chain"

    def save_chain(self, group: GroupId, role: str, subject: PublicKey, chain) -> None:
        path = self._chain_path(group, role, subject)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_chain(chain))

    def load_chain(self, group: GroupId, role: str, subject: PublicKey):
        path = self._chain_path(group, role, subject)
        if not path.exists():
            return ()
        return decode_chain(path.read_bytes())

    def pin_ledger(self, key: PublicKey) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "ledger.pub").write_text(key.hex() + "\n")

    def pinned_ledger(self) -> PublicKey | None:
        path = self.root / "ledger.pub"
        if not path.exists():
            return None
        return _parse_hex_key(path.read_text().strip())


def _ledger_identity(store: Keystore, args) -> PublicKey:
    if getattr(args, "ledger_pub", None):
        key = _parse_hex_key(args.ledger_pub)
        store.pin_ledger(key)
        return key
    pinned = store.pinned_ledger()
    if pinned is None:
        _fail("ledger identity unknown; pass --ledger-pub once to pin it")
    return pinned


def _open_client(args, store: Keystore) -> AccessClient:
    ledger_key = _ledger_identity(store, args)
    channel = RemoteLedger(SocketTransport.connect(*_parse_addr(args.ledger)))
    auditors = [
        RemoteAuditor(SocketTransport.connect(*_parse_addr(addr)))
        for addr in (args.auditor or [])
    ]
    return AccessClient(channel, ledger_key, auditors)


def _drain_alarms(client: AccessClient, already: int = 0) -> list[dict]:
    return [alarm.describe() for alarm in client.alarms[already:]]


def _fresh_stamp(client: AccessClient, index: bytes) -> int:
    """Freshness that clears the per-index floor even when the tip block
    has not caught up with the index's newest entry yet."""
    tip = client.latest_block()
    if tip is None:
        _fail("ledger unreachable")
    answer = client.query_verified(bytes(index))
    floor = answer.entries[-1][0] if answer is not None and answer.entries else 0
    return max(tip.latest_seq, floor + 1)


# ---------------------------------------------------------------------------
# ledger commands


def cmd_ledger_serve(args) -> int:
    data = os.environ.get("REVLEDGER_DATA") or args.data
    key_path = Path(args.key)
    if key_path.exists():
        key = KeyPair.from_bytes(key_path.read_bytes())
    else:
        key = KeyPair.generate()
        key_path.parent.mkdir(parents=True, exist_ok=True)
        key_path.write_bytes(key.to_bytes())
    service = LedgerService(
        key,
        data,
        block_events=args.block_events,
        block_seconds=args.block_interval,
    )
    server = SocketServer(
        LedgerServer(service), *_parse_addr(args.listen), idle=service.pump
    )
    host, port = server.address
    _emit(
        {
            "op": "serve",
            "listen": f"{host}:{port}",
            "data": data,
            "public": key.public.hex(),
            "height": service.latest_block().height,
        }
    )
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
        service.close()
    return 0


# ---------------------------------------------------------------------------
# client commands


def cmd_client_keygen(args) -> int:
    store = Keystore(args.keystore)
    key = KeyPair.generate()
    store.save_key(args.name, key)
    _emit({"op": "keygen", "name": args.name, "public": key.public.hex()})
    return 0


def cmd_client_group_create(args) -> int:
    store = Keystore(args.keystore)
    group = GroupId(store.resolve_public(args.owner), args.name)
    store.save_group(group)
    _emit({"op": "group-create", "name": group.name, "owner": group.owner_key.hex()})
    return 0


def _outcome_record(outcome) -> dict:
    if outcome is None:
        return {"outcome": "no-response"}
    if outcome.accepted:
        return {"outcome": "accepted", "receipt": outcome.receipt.describe()}
    return {"outcome": outcome.rejection.code, "detail": outcome.rejection.detail}


def _membership_op(args, op: str) -> int:
    store = Keystore(args.keystore)
    client = _open_client(args, store)
    issuer = store.load_key(args.issuer)
    group = store.load_group(args.group)
    chain = store.load_chain(group, ROLE_LEADER, issuer.public)
    record: dict = {"op": op, "group": group.name}
    if op == "revoke":
        subject = store.resolve_public(args.subject)
        record.update({"role": args.role, "subject": subject.hex()})
        stamp = _fresh_stamp(client, membership_index(group, args.role, subject))
        outcome = client.revoke_member(issuer, chain, group, args.role, subject, freshness=stamp)
    elif op == "suspend":
        stamp = _fresh_stamp(client, suspension_index(group))
        outcome = client.suspend(issuer, chain, group, freshness=stamp)
    else:
        stamp = _fresh_stamp(client, suspension_index(group))
        outcome = client.resume(issuer, chain, group, freshness=stamp)
    record.update(_outcome_record(outcome))
    record["alarms"] = _drain_alarms(client)
    _emit(record)
    return 0 if record["outcome"] == "accepted" else 1


def cmd_client_add(args) -> int:
    store = Keystore(args.keystore)
    client = _open_client(args, store)
    issuer = store.load_key(args.issuer)
    group = store.load_group(args.group)
    chain = store.load_chain(group, ROLE_LEADER, issuer.public)
    subject = store.resolve_public(args.subject)
    stamp = _fresh_stamp(client, membership_index(group, args.role, subject))
    cert = MemberCertificate.issue(issuer, subject, group, args.role, stamp)
    outcome = client.submit(cert, chain)
    record = {
        "op": "add",
        "group": group.name,
        "role": args.role,
        "subject": subject.hex(),
        **_outcome_record(outcome),
        "alarms": _drain_alarms(client),
    }
    if outcome is not None and outcome.accepted:
        store.save_chain(group, args.role, subject, chain + (cert,))
        record["chain_certificates"] = len(chain) + 1
    _emit(record)
    return 0 if record["outcome"] == "accepted" else 1


def cmd_client_revoke(args) -> int:
    return _membership_op(args, "revoke")


def cmd_client_suspend(args) -> int:
    return _membership_op(args, "suspend")


def cmd_client_resume(args) -> int:
    return _membership_op(args, "resume")


def cmd_client_verify(args) -> int:
    store = Keystore(args.keystore)
    client = _open_client(args, store)
    group = store.load_group(args.group)
    subject = store.resolve_public(args.subject)
    chain = store.load_chain(group, args.role, subject)
    decision = client.verify_member(subject, args.role, group, chain)
    alarms = client.followup()
    _emit(
        {
            "op": "verify",
            "group": group.name,
            "role": args.role,
            "subject": subject.hex(),
            "status": decision.status,
            "failure": decision.failure.code if decision.failure else None,
            "alarms": [a.describe() for a in alarms]
            + ([decision.alarm.describe()] if decision.alarm else []),
        }
    )
    return 0 if decision.status == "member" else 1


def cmd_client_revoke_cert(args) -> int:
    store = Keystore(args.keystore)
    client = _open_client(args, store)
    issuer = store.load_key(args.issuer)
    group = store.load_group(args.group)
    subject = store.resolve_public(args.subject)
    chain = store.load_chain(group, args.role, subject)
    if not chain:
        _fail(f"no stored chain for {args.subject!r}; nothing to revoke")
    stamp = _fresh_stamp(client, chain[-1].hash)
    outcome = client.revoke_cert(issuer, chain[-1], freshness=stamp)
    _emit(
        {
            "op": "revoke-cert",
            "group": group.name,
            "certificate": chain[-1].hash.hex(),
            **_outcome_record(outcome),
            "alarms": _drain_alarms(client),
        }
    )
    return 0 if outcome is not None and outcome.accepted else 1


def cmd_client_verify_chain(args) -> int:
    store = Keystore(args.keystore)
    client = _open_client(args, store)
    try:
        chain = decode_chain(Path(args.chain_file).read_bytes())
    except (OSError, DecodeError) as exc:
        _fail(f"cannot read chain file: {exc}")
    root = store.resolve_public(args.root)
    now = args.at if args.at is not None else int(time.time())
    valid = client.verify_hier_chain(chain, root, now)
    _emit(
        {
            "op": "verify-chain",
            "certificates": len(chain),
            "root": root.hex(),
            "at": now,
            "valid": valid,
            "alarms": _drain_alarms(client),
        }
    )
    return 0 if valid else 1


# ---------------------------------------------------------------------------
# auditor commands


def cmd_auditor_run(args) -> int:
    ledger_key = _parse_hex_key(args.ledger_pub)
    if args.key and Path(args.key).exists():
        key = KeyPair.from_bytes(Path(args.key).read_bytes())
    elif args.key:
        key = KeyPair.generate()
        Path(args.key).parent.mkdir(parents=True, exist_ok=True)
        Path(args.key).write_bytes(key.to_bytes())
    else:
        key = KeyPair.generate()
    source = RemoteLedger(SocketTransport.connect(*_parse_addr(args.ledger)))
    if args.mode == "full":
        if args.trust_block:
            _fail("--trust-block only applies to --mode stream")
        auditor = ReplicaAuditor(ledger_key, key=key)
    elif args.trust_block:
        auditor = attach_at_block(
            ledger_key, source, bytes.fromhex(args.trust_block), key=key
        )
        if auditor is None:
            _fail("trusted block not found in the ledger's feed")
    else:
        auditor = StreamAuditor(ledger_key, key=key)

    evidence = Path(args.evidence)
    reported = 0

    def poll() -> None:
        nonlocal reported
        auditor.pull(source)
        if len(auditor.misbehaviors) > reported:
            with evidence.open("a") as sink:
                for record in auditor.misbehaviors[reported:]:
                    sink.write(json.dumps(record.describe(), sort_keys=True) + "\n")
                    _emit({"op": "misbehavior", **record.describe()})
            reported = len(auditor.misbehaviors)

    _emit(
        {
            "op": "audit",
            "mode": args.mode,
            "public": key.public.hex(),
            "evidence": str(evidence),
        }
    )
    try:
        if args.listen:
            server = SocketServer(
                AuditorServer(auditor), *_parse_addr(args.listen), idle=poll
            )
            host, port = server.address
            _emit({"op": "listening", "listen": f"{host}:{port}"})
            if args.once:
                poll()
                server.close()
            else:
                server.serve_forever()
        else:
            while True:
                poll()
                if args.once:
                    break
                time.sleep(args.poll)
    except KeyboardInterrupt:
        pass
    except NoResponse as exc:
        _emit({"op": "halt", "reason": str(exc)})
    _emit({"op": "done", "healthy": auditor.healthy, "cursor": auditor.cursor})
    return 0 if auditor.healthy else 1


# ---------------------------------------------------------------------------
# oracle commands


def cmd_oracle_replay(args) -> int:
    log = Path(args.data) / "events.log"
    if not log.exists():
        _fail(f"no event log under {args.data!r}")
    oracle = ReplayOracle.from_log(log)
    if args.query:
        group_ref, role, key_hex = args.query
        owner_hex, _, name = group_ref.partition(":")
        if not name:
            _fail("group must look like <owner-hex>:<name>")
        group = GroupId(_parse_hex_key(owner_hex), name)
        subject = _parse_hex_key(key_hex)
        _emit(
            {
                "op": "replay",
                "events": len(oracle),
                "group": name,
                "role": role,
                "key": key_hex,
                "member": oracle.has_role(group, role, subject),
            }
        )
    else:
        _emit({"op": "replay", "events": len(oracle), "state": oracle.state.describe()})
    return 0


# ---------------------------------------------------------------------------
# harness commands


def cmd_harness_scenario(args) -> int:
    if args.name in NAMED_SCENARIOS:
        results = run_named_scenario(args.name, seed=args.seed)
    elif Path(args.name).exists():
        scenario = load_scenario(args.name)
        results = [run_scenario(Scenario(scenario.name, args.seed, scenario.steps))]
    else:
        _fail(
            f"unknown scenario {args.name!r}; built-ins: {sorted(NAMED_SCENARIOS)}"
        )
    failed = False
    for result in results:
        if args.transcript:
            for line in result.transcript:
                print(line)
        _emit(
            {
                "op": "scenario",
                "name": result.name,
                "passed": result.passed,
                "failure": result.failure,
            }
        )
        failed |= not result.passed
    return 1 if failed else 0


def cmd_harness_fuzz(args) -> int:
    faults = args.faults.split(",") if args.faults else list(ALL_FAULTS)
    for fault in faults:
        if fault not in ALL_FAULTS:
            _fail(f"unknown fault {fault!r}; catalogue: {list(ALL_FAULTS)}")
    seed = args.seed
    all_ok = True
    for fault in faults:
        detected = 0
        for _ in range(args.runs):
            outcome = fuzz_run(seed, fault)
            seed += 1
            detected += outcome.ok
            if not outcome.ok and args.verbose:
                _emit({"op": "miss", **outcome.describe()})
        _emit(
            {
                "op": "fuzz",
                "fault": fault,
                "runs": args.runs,
                "detected": detected,
                "rate": detected / args.runs if args.runs else None,
            }
        )
        all_ok &= detected == args.runs
    false_positives = 0
    for _ in range(args.honest):
        outcome = fuzz_run(seed)
        seed += 1
        if not outcome.ok:
            false_positives += 1
            if args.verbose:
                _emit({"op": "false-positive", **outcome.describe()})
    if args.honest:
        _emit({"op": "fuzz", "fault": None, "runs": args.honest, "false_positives": false_positives})
        all_ok &= false_positives == 0
    return 0 if all_ok else 1


def cmd_harness_bench(args) -> int:
    report = run_bench(entries=args.entries, chain_length=args.chain_length)
    line = json.dumps(report, sort_keys=True)
    print(line, flush=True)
    if args.out:
        with open(args.out, "a") as sink:
            sink.write(line + "\n")
    return 0


def cmd_harness_workload(args) -> int:
    report = run_workload(args.seed)
    _emit(
        {
            "op": "workload",
            "seed": report.seed,
            "accepted": report.accepted,
            "checks": report.checks,
            "disagreements": list(report.disagreements),
        }
    )
    return 0 if report.ok else 1


# ---------------------------------------------------------------------------
# argument wiring


def _add_client_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--ledger", default="127.0.0.1:7400", help="ledger address host:port")
    parser.add_argument("--auditor", action="append", help="auditor endorsement address; repeatable")
    parser.add_argument("--keystore", default="./keystore", help="local key/chain directory")
    parser.add_argument("--ledger-pub", help="hex ledger public key; pinned into the keystore")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="revledger",
        description="Publicly auditable revocation ledger: server, clients, auditors.",
    )
    top = parser.add_subparsers(dest="family", required=True)

    ledger = top.add_parser("ledger", help="run the ledger service").add_subparsers(
        dest="command", required=True
    )
    serve = ledger.add_parser("serve", help="serve the wire protocol over TCP")
    serve.add_argument("--listen", default="127.0.0.1:7400")
    serve.add_argument("--data", default="./ledger-data", help="storage directory (REVLEDGER_DATA overrides)")
    serve.add_argument("--block-interval", type=float, default=60.0, help="max seconds between blocks")
    serve.add_argument("--block-events", type=int, default=1000, help="max events per block")
    serve.add_argument("--key", default="./ledger-data/ledger.key", help="key file; created if missing")
    serve.set_defaults(func=cmd_ledger_serve)

    client = top.add_parser("client", help="issue and verify membership").add_subparsers(
        dest="command", required=True
    )

    keygen = client.add_parser("keygen", help="create a named key")
    keygen.add_argument("--name", required=True)
    keygen.add_argument("--keystore", default="./keystore")
    keygen.set_defaults(func=cmd_client_keygen)

    group_create = client.add_parser("group-create", help="record a group descriptor")
    group_create.add_argument("--name", required=True)
    group_create.add_argument("--owner", required=True, help="keystore name or hex key")
    group_create.add_argument("--keystore", default="./keystore")
    group_create.set_defaults(func=cmd_client_group_create)

    for op, fn, needs_subject in (
        ("add", cmd_client_add, True),
        ("revoke", cmd_client_revoke, True),
        ("suspend", cmd_client_suspend, False),
        ("resume", cmd_client_resume, False),
        ("revoke-cert", cmd_client_revoke_cert, True),
    ):
        sub = client.add_parser(op, help=f"{op} via the ledger")
        _add_client_common(sub)
        sub.add_argument("--issuer", required=True, help="keystore key name")
        sub.add_argument("--group", required=True)
        if needs_subject:
            sub.add_argument("--role", choices=(ROLE_LEADER, ROLE_MEMBER), required=True)
            sub.add_argument("--subject", required=True, help="keystore name or hex key")
        sub.set_defaults(func=fn)

    verify = client.add_parser("verify", help="check membership against the published tree")
    _add_client_common(verify)
    verify.add_argument("--group", required=True)
    verify.add_argument("--role", choices=(ROLE_LEADER, ROLE_MEMBER), required=True)
    verify.add_argument("--subject", required=True)
    verify.set_defaults(func=cmd_client_verify)

    verify_chain = client.add_parser("verify-chain", help="check a delegation chain file")
    _add_client_common(verify_chain)
    verify_chain.add_argument("--chain-file", required=True)
    verify_chain.add_argument("--root", required=True, help="trust anchor: keystore name or hex key")
    verify_chain.add_argument("--at", type=int, help="validity instant, unix seconds (default: now)")
    verify_chain.set_defaults(func=cmd_client_verify_chain)

    auditor = top.add_parser("auditor", help="follow and endorse a ledger").add_subparsers(
        dest="command", required=True
    )
    run = auditor.add_parser("run", help="pull the audit feed; optionally serve endorsements")
    run.add_argument("--mode", choices=("full", "stream"), default="stream")
    run.add_argument("--ledger", default="127.0.0.1:7400")
    run.add_argument("--ledger-pub", required=True, help="hex ledger public key")
    run.add_argument("--listen", help="serve endorsements on host:port")
    run.add_argument("--key", help="auditor key file; created if missing")
    run.add_argument("--trust-block", help="hex block hash to attach from (stream mode)")
    run.add_argument("--evidence", default="./auditor-evidence.jsonl")
    run.add_argument("--poll", type=float, default=1.0, help="seconds between feed polls")
    run.add_argument("--once", action="store_true", help="single poll, then exit")
    run.set_defaults(func=cmd_auditor_run)

    oracle = top.add_parser("oracle", help="replay a persisted event log").add_subparsers(
        dest="command", required=True
    )
    replay = oracle.add_parser("replay", help="fold the log and answer a membership query")
    replay.add_argument("--data", required=True, help="ledger storage directory")
    replay.add_argument(
        "--query",
        nargs=3,
        metavar=("GROUP", "ROLE", "KEY"),
        help="GROUP as <owner-hex>:<name>, KEY as hex",
    )
    replay.set_defaults(func=cmd_oracle_replay)

    harness = top.add_parser("harness", help="scenarios, fuzzing, benchmarks").add_subparsers(
        dest="command", required=True
    )

    scenario = harness.add_parser("scenario", help="run a built-in or JSON scenario")
    scenario.add_argument("name", help="built-in name or path to a JSON script")
    scenario.add_argument("--seed", type=int, default=11)
    scenario.add_argument("--transcript", action="store_true", help="print step records")
    scenario.set_defaults(func=cmd_harness_scenario)

    fuzz = harness.add_parser("fuzz", help="inject faults and count detections")
    fuzz.add_argument("--faults", help="comma-separated fault list (default: all)")
    fuzz.add_argument("--runs", type=int, default=100, help="runs per fault")
    fuzz.add_argument("--honest", type=int, default=0, help="extra honest runs")
    fuzz.add_argument("--seed", type=int, default=0)
    fuzz.add_argument("--verbose", action="store_true")
    fuzz.set_defaults(func=cmd_harness_fuzz)

    bench = harness.add_parser("bench", help="measure tree, chain and auditor throughput")
    bench.add_argument("--entries", type=int, default=100_000)
    bench.add_argument("--chain-length", type=int, default=50)
    bench.add_argument("--out", help="append the JSON report to this file")
    bench.set_defaults(func=cmd_harness_bench)

    workload = harness.add_parser("workload", help="one random history checked against the oracle")
    workload.add_argument("--seed", type=int, default=0)
    workload.set_defaults(func=cmd_harness_workload)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NoResponse as exc:
        _emit({"error": f"no response from the ledger: {exc}"})
        return 2


if __name__ == "__main__":
    sys.exit(main())
