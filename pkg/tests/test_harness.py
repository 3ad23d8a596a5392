"""Harness determinism and the built-in scenario/fuzz/bench drivers."""
from __future__ import annotations

import json

import pytest

from revledger.faults import ALL_FAULTS
from revledger.harness import (
    NAMED_SCENARIOS,
    Scenario,
    World,
    fuzz_batch,
    fuzz_run,
    load_scenario,
    run_bench,
    run_named_scenario,
    run_scenario,
    run_workload,
)


def test_same_seed_same_world():
    a, b = World(99), World(99)
    try:
        assert a.utp_key.public == b.utp_key.public
        assert a.actor("x").public == b.actor("x").public
        assert a.actor("y").public == b.actor("y").public
    finally:
        a.service.close()
        b.service.close()


@pytest.mark.parametrize("name", sorted(NAMED_SCENARIOS))
def test_named_scenarios_pass_every_interleaving(name):
    results = run_named_scenario(name)
    assert len(results) == len(NAMED_SCENARIOS[name])
    for result in results:
        assert result.passed, f"{result.name}: {result.failure}"
        assert result.transcript


def test_scenario_transcripts_are_reproducible():
    first, second = (run_named_scenario("david-erik-race") for _ in range(2))
    assert [r.transcript for r in first] == [r.transcript for r in second]
    # The two interleavings genuinely differ, same expectations or not.
    assert first[0].transcript != first[1].transcript


def test_transcript_lines_are_json_with_step_numbers():
    result = run_named_scenario("alice-bob-carol")[0]
    records = [json.loads(line) for line in result.transcript]
    assert [r["step"] for r in records] == list(range(len(records)))
    assert records[0]["op"] == "actor"


def test_failed_expectation_stops_the_script():
    steps = (
        {"op": "actor", "name": "ann"},
        {"op": "group", "name": "g", "owner": "ann"},
        # ann owns the group; this must be accepted, we claim otherwise.
        {"op": "add", "issuer": "ann", "group": "g", "role": "member",
         "subject": "ann", "expect": "unauthorized"},
        {"op": "publish"},
    )
    result = run_scenario(Scenario("wrong-claim", 5, steps))
    assert not result.passed
    assert "expected outcome" in result.failure
    last = json.loads(result.transcript[-1])
    assert last["step"] == 2 and "error" in last


def test_unknown_op_and_missing_field_fail_cleanly():
    result = run_scenario(Scenario("bad-op", 1, ({"op": "teleport"},)))
    assert not result.passed and "unknown step op" in result.failure

    result = run_scenario(Scenario("bad-field", 1, ({"op": "actor"},)))
    assert not result.passed and "missing" in result.failure


def test_unknown_scenario_name_is_a_value_error():
    with pytest.raises(ValueError, match="unknown scenario"):
        run_named_scenario("does-not-exist")


def test_scenarios_load_from_json(tmp_path):
    script = {
        "name": "from-disk",
        "seed": 7,
        "steps": [
            {"op": "actor", "name": "pat"},
            {"op": "group", "name": "files", "owner": "pat"},
            {"op": "add", "issuer": "pat", "group": "files", "role": "member", "subject": "pat"},
            {"op": "publish"},
            {"op": "verify", "group": "files", "role": "member", "subject": "pat"},
            {"op": "agree", "group": "files", "role": "member", "subject": "pat"},
        ],
    }
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(script))
    scenario = load_scenario(path)
    assert scenario.name == "from-disk" and scenario.seed == 7
    result = run_scenario(scenario)
    assert result.passed, result.failure


def test_workload_agrees_with_the_replay_oracle():
    report = run_workload(1234)
    assert report.ok, report.disagreements
    assert report.submitted >= 60
    assert 0 < report.accepted <= report.submitted
    assert report.checks > report.groups  # the sweep includes extra probes


def test_workload_is_deterministic():
    assert run_workload(77) == run_workload(77)


def test_workload_oracle_can_replay_from_storage(tmp_path):
    report = run_workload(4321, storage_dir=tmp_path / "ledger")
    assert report.ok, report.disagreements
    assert (tmp_path / "ledger").exists()


def test_honest_fuzz_run_is_silent():
    outcome = fuzz_run(3)
    assert outcome.ok and outcome.healthy
    assert outcome.fault is None and outcome.fired == ()
    assert outcome.detected == ()


@pytest.mark.parametrize("fault", ALL_FAULTS)
def test_every_fault_is_detected(fault):
    outcome = fuzz_run(17, fault)
    assert outcome.fired == (fault,), "the fault must actually fire"
    assert outcome.ok, (
        f"{fault}: detected {outcome.detected}, expected one of {outcome.expected}"
    )


def test_fuzz_runs_are_reproducible():
    assert fuzz_run(29, "fork") == fuzz_run(29, "fork")


def test_fuzz_rejects_unknown_faults():
    with pytest.raises(ValueError, match="unknown fault"):
        fuzz_run(1, "gremlins")


def test_fuzz_batch_covers_faults_and_honest_runs():
    outcomes = fuzz_batch(1, honest_runs=2)
    assert len(outcomes) == len(ALL_FAULTS) + 2
    assert all(o.ok for o in outcomes)
    assert {o.fault for o in outcomes} == set(ALL_FAULTS) | {None}
    assert len({o.seed for o in outcomes}) == len(outcomes)


def test_bench_reports_every_measurement():
    report = run_bench(entries=2000, chain_length=4, chain_count=3, feed_updates=800)
    assert report["inserts_per_s"] > 0
    assert report["check_chain_per_s"] > 0
    assert report["auditor_updates_per_s"] > 0
    assert 0 < report["update_proof_bytes"] < 2048
    assert 0 < report["stream_state_bytes"] <= 1024
    assert 0 < report["entry_frame_bytes"] <= 128
    assert report["mean_leaf_depth"] > 1
    assert report["config"]["entries"] == 2000
