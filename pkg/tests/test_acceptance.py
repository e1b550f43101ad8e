"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``python3 -m pytest tests/test_acceptance.py -v`` or
``python3 tests/test_acceptance.py``.
"""

import subprocess
import sys
import time
from contextlib import contextmanager
from itertools import product
from pathlib import Path
from types import SimpleNamespace

import pytest

from advm.cli import main as advm_main
from advm.compiler import ActivityFactory, PullEngine, PushEngine, dump_runtime
from advm.equivalence import compare_essential_traces
from advm.generator import random_valid_diagram
from advm.guard import eval_join_criteria
from advm.model import parse_activity, parse_file
from advm.oracle import oracle_run
from advm.runtime import run_activity
from advm.validate import validate_diagram

from test_compiler import FIXTURE_FILES, TOPOLOGIES, brute_paths, compiled_paths

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
CORPUS_SIZE = 500
SEEDS = 5


@contextmanager
def criterion(capsys, number, title, limit=None):
    started = time.perf_counter()
    status = "FAIL"
    detail = ""
    try:
        yield
        status = "PASS"
    except BaseException as exc:
        detail = f" ({type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''})"
        raise
    finally:
        elapsed = time.perf_counter() - started
        if status == "PASS" and limit is not None and elapsed >= limit:
            status, detail = "FAIL", f" (took {elapsed:.2f}s, limit {limit}s)"
        with capsys.disabled():
            print(f"\n{status} criterion {number}: {title} [{elapsed:.2f}s]{detail}")
    if status == "FAIL":
        pytest.fail(f"criterion {number} exceeded its time limit")


def compile_one(diagram, name):
    return ActivityFactory(diagram).create_activity(name, activate=False)


# -- 1 ------------------------------------------------------------------------------


def join_condition(present: dict) -> bool:
    """Join condition read directly off the token sets at the three queues."""
    p1, p2, p3 = (present.get(k) for k in ("p1", "p2", "p3"))
    return (p1 is not None and p2 is not None and p1["att2"] == p2["att2"]) or \
        (p2 is not None and p3 is not None)


def test_criterion_1_join_criteria(capsys):
    with criterion(capsys, 1, "join criteria of the two-join topology", limit=1.0):
        rt = compile_one(parse_file(FIXTURES / "fig6.ad"), "Fig6")
        dump = dump_runtime(rt)
        assert '    criteria OR(AND("p1.att2 = p2.att2", p1, p2), AND(p2, p3))\n' in dump
        (engine,) = rt.pull_engines
        cases = 0
        for present, match in product(product([False, True], repeat=3), [True, False]):
            values = {"p1": {"att2": 5}, "p2": {"att2": 5 if match else 6}, "p3": {"att3": 0}}
            bound = {p: values[p] for p, on in zip(("p1", "p2", "p3"), present) if on}
            binding = {p: SimpleNamespace(type="T", value=v, is_control=False) for p, v in bound.items()}
            assert eval_join_criteria(engine.join_criteria, binding) is join_condition(bound), (present, match)
            cases += 1
        assert cases == 16


# -- 2 ------------------------------------------------------------------------------


def test_criterion_2_validation(capsys):
    with criterion(capsys, 2, "invalid constructs rejected, counterparts clean", limit=1.0):
        codes = lambda f: {n: r.codes() for n, r in validate_diagram(parse_file(FIXTURES / f)).items()}
        assert codes("fig1a.ad") == {"LoopWithoutAction": ["E1"]}
        assert codes("fig1b.ad") == {"ForkThenJoin": ["E2"]}
        clean = validate_diagram(parse_file(FIXTURES / "fig2.ad"))
        assert len(clean) == 2 and all(r.ok and not r.warnings for r in clean.values())


# -- 3 ------------------------------------------------------------------------------


def test_criterion_3_engine_assignment(capsys):
    with criterion(capsys, 3, f"engine assignment on {len(TOPOLOGIES)} topologies"):
        assert len(TOPOLOGIES) >= 6
        saw_engineless = saw_split = saw_both_ends = False
        for name, (body, expected) in TOPOLOGIES.items():
            rt = compile_one(parse_activity(f"behavior b = identity; activity T {{ {body} }}"), "T")
            got = {e.queue.name: ("push", [p.end.name for p in e.paths]) for e in rt.push_engines}
            got.update({e.queue.name: ("pull", [p.start.name for p in e.paths]) for e in rt.pull_engines})
            assert got == expected, name
            engineless = {q.name for q in rt.queues if q.engine is None}
            assert engineless == {q.name for q in rt.queues} - set(expected), name
            saw_engineless |= bool(engineless)
            for q in rt.queues:
                saw_split |= len({id(p.engine) for p in q.paths if p.start is q}) > 1
            for p in rt.paths:
                owners = [e for e in rt.engines if p in e.paths]
                assert len(owners) == 1 and owners[0] is p.engine, name
                assert isinstance(p.engine, PullEngine if p.has_join else PushEngine)
                saw_both_ends |= p.start.engine is not None and p.end.engine is not None
        assert saw_engineless and saw_split and saw_both_ends


# -- 4 and 5 -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def corpus():
    started = time.perf_counter()
    results = []
    for seed in range(CORPUS_SIZE):
        gen = random_valid_diagram(seed, 12)
        assert gen.node_count <= 12
        for s in range(SEEDS):
            vm = run_activity(gen.diagram, gen.activity, gen.args, seed=s, check_races=True)
            ref = oracle_run(gen.diagram, gen.activity, gen.args, seed=s)
            results.append((seed, s, vm, ref))
    return results, time.perf_counter() - started


def test_criterion_4_equivalence(capsys, corpus):
    results, elapsed = corpus
    with criterion(capsys, 4, f"VM/oracle equivalence, {CORPUS_SIZE} diagrams x {SEEDS} seeds "
                              f"(runs took {elapsed:.1f}s)"):
        divergent = []
        for seed, s, vm, ref in results:
            verdict = compare_essential_traces(vm.trace, ref.trace)
            if not verdict or vm.status != ref.status:
                divergent.append((seed, s, verdict.divergence or f"{vm.status} vs {ref.status}"))
        assert len(results) == CORPUS_SIZE * SEEDS
        assert not divergent, divergent[:5]
        assert elapsed < 60, f"corpus took {elapsed:.1f}s"


def test_criterion_5_race_freedom(capsys, corpus):
    results, _ = corpus
    with criterion(capsys, 5, "race-freedom assertion never trips on the corpus"):
        tripped = [(seed, s, vm.error) for seed, s, vm, _ in results
                   if vm.error and "RaceDetected" in vm.error]
        assert not tripped, tripped[:5]
        assert all(vm.vm.check_races for *_, vm, _ in results)
        assert max(vm.vm.max_candidates for *_, vm, _ in results) == 1


# -- 6 ------------------------------------------------------------------------------


def test_criterion_6_determinism(capsys, tmp_path):
    with criterion(capsys, 6, "fixed seed gives byte-identical traces; seeds stay equivalent"):
        po = str(FIXTURES / "process_order.ad")
        blobs = set()
        for i in range(10):
            path = tmp_path / f"run{i}.jsonl"
            code = advm_main(["run", po, "--activity", "ProcessOrder", "--seed", "11",
                              "--trace", str(path)])
            capsys.readouterr()
            assert code == 0
            blobs.add(path.read_bytes())
        assert len(blobs) == 1 and blobs.pop()
        diagram = parse_file(po)
        base = run_activity(diagram, "ProcessOrder", seed=0)
        orderings = set()
        for seed in range(1, 20):
            other = run_activity(diagram, "ProcessOrder", seed=seed)
            assert other.status == base.status
            assert compare_essential_traces(base.trace, other.trace), seed
            orderings.add(other.trace.to_jsonl())
        assert len(orderings) > 1, "seed had no effect on interleaving"


# -- 7 ------------------------------------------------------------------------------


def test_criterion_7_path_oracle(capsys):
    with criterion(capsys, 7, "compiled paths equal brute-force route enumeration"):
        checked = 0
        for name in FIXTURE_FILES:
            d = parse_file(FIXTURES / name)
            for act, model in d.items():
                assert compiled_paths(compile_one(d, act)) == brute_paths(model), act
                checked += 1
        for seed in range(CORPUS_SIZE):
            gen = random_valid_diagram(seed, 12)
            for act, model in gen.diagram.items():
                assert compiled_paths(compile_one(gen.diagram, act)) == brute_paths(model), (seed, act)
                checked += 1
        assert checked > CORPUS_SIZE


# -- 8 ------------------------------------------------------------------------------

LIFECYCLE = "TestActivation or TestPushEngine or TestPullEngine or TestActions or TestFinishing"


def test_criterion_8_lifecycle_contracts(capsys):
    with criterion(capsys, 8, "lifecycle pre/postconditions"):
        proc = subprocess.run(
            [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
             str(ROOT / "tests" / "test_runtime.py"), "-k", LIFECYCLE],
            capture_output=True, text=True, cwd=ROOT)
        summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr
        assert proc.returncode == 0, summary
        assert "passed" in summary and "failed" not in summary
        passed = int(summary.split(" passed")[0].split()[-1])
        assert passed >= 25, summary


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
