import json

import pytest

from advm.equivalence import compare_essential_traces, essential_firings, essential_signature
from advm.generator import random_valid_diagram
from advm.oracle import oracle_run
from advm.runtime import EventKind, run_activity


def both(diagram, name, args=(), seed=0):
    return (run_activity(diagram, name, args, seed=seed),
            oracle_run(diagram, name, args, seed=seed))


@pytest.mark.parametrize("name, activity, args, status", [
    ("process_order.ad", "ProcessOrder", [], "completed"),
    ("fig6.ad", "Fig6", [], "quiescent-stuck"),
    ("fig2.ad", "LoopThroughAction", [], None),
    ("fig2.ad", "ForkActionJoin", [], None),
    ("minimal.ad", "Increment", [{"n": 4}], "completed"),
])
def test_fixtures_agree(load, name, activity, args, status):
    d = load(name)
    for seed in range(5):
        vm, ref = both(d, activity, args, seed)
        assert vm.status == ref.status
        if status:
            assert vm.status == status
        verdict = compare_essential_traces(vm.trace, ref.trace)
        assert verdict, verdict.divergence
        assert vm.outputs == ref.outputs


def test_minimal_outputs(load):
    vm, ref = both(load("minimal.ad"), "Increment", [{"n": 4}])
    assert vm.outputs == ref.outputs == [{"n": 5}]
    (firing,) = essential_firings(ref.trace).values()
    assert firing.action == "Bump"


def test_empty_activity_has_empty_essential_trace(parse):
    d = parse("activity E { initial i; finalFlow f; pin i.out; pin f.in; edge i.out -> f.in; }")
    vm, ref = both(d, "E")
    assert vm.status == ref.status == "completed"
    assert not essential_signature(vm.trace) and not essential_signature(ref.trace)
    assert compare_essential_traces(vm.trace, ref.trace)


def test_changed_behavior_is_detected(fixture_path, parse):
    text = fixture_path("minimal.ad").read_text()
    vm = run_activity(parse(text), "Increment", [{"n": 4}])
    other = parse(text.replace("add(n=1)", "add(n=2)"))
    ref = oracle_run(other, "Increment", [{"n": 4}])
    verdict = compare_essential_traces(vm.trace, ref.trace)
    assert not verdict
    assert "Bump" in verdict.divergence


def test_missing_firing_is_detected(load):
    events = [json.loads(line) for line in run_activity(
        load("process_order.ad"), "ProcessOrder").trace.to_jsonl().splitlines()]
    dropped = next(e for e in events if e["kind"] == "ActionStarted")["payload"]["firing"]
    pruned = [e for e in events if e["payload"].get("firing") != dropped]
    verdict = compare_essential_traces(events, pruned)
    assert not verdict and verdict.left_count == verdict.right_count + 1


def test_non_essential_events_are_ignored(load):
    events = [json.loads(line) for line in run_activity(
        load("process_order.ad"), "ProcessOrder").trace.to_jsonl().splitlines()]
    moves = [e for e in events if e["kind"] == "TokenMoved"]
    assert moves
    rest = [e for e in events if e["kind"] != "TokenMoved"]
    assert compare_essential_traces(events, rest)


def test_causal_context_matters():
    # same action and values, different producer: not interchangeable
    a = [
        {"kind": "ActionStarted", "payload": {"firing": 1, "scope": "M", "action": "X",
                                              "consumed": []}},
        {"kind": "TokenCreated", "payload": {"firing": 1, "type": "T", "value": {"k": 1}}},
        {"kind": "ActionStarted", "payload": {"firing": 2, "scope": "M", "action": "Y",
                                              "consumed": [{"type": "T", "value": {"k": 1},
                                                            "origins": [1]}]}},
    ]
    b = [dict(a[0]), dict(a[1]), {"kind": "ActionStarted", "payload": {
        "firing": 2, "scope": "M", "action": "Y",
        "consumed": [{"type": "T", "value": {"k": 1}, "origins": [0]}]}}]
    assert not compare_essential_traces(a, b)


def test_oracle_accepts_each_token_once():
    checked = 0
    for seed in range(150):
        gen = random_valid_diagram(seed, 12)
        ref = oracle_run(gen.diagram, gen.activity, gen.args, seed=seed)
        seen = set()
        for e in ref.trace.of_kind(EventKind.ACTION_STARTED):
            for c in e.payload["consumed"]:
                key = (e.payload["scope"], c["token"])
                assert key not in seen, (seed, key)
                seen.add(key)
                checked += 1
    assert checked > 500


def test_oracle_is_deterministic_per_seed(load):
    d = load("process_order.ad")
    runs = {oracle_run(d, "ProcessOrder", seed=3).trace.to_jsonl() for _ in range(3)}
    assert len(runs) == 1


def test_generated_corpus_agrees():
    for seed in range(100):
        gen = random_valid_diagram(seed, 12)
        for s in range(3):
            vm, ref = both(gen.diagram, gen.activity, gen.args, s)
            assert vm.status == ref.status, (seed, s)
            verdict = compare_essential_traces(vm.trace, ref.trace)
            assert verdict, (seed, s, verdict.divergence, gen.text)
