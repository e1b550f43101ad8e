from itertools import permutations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advm.generator import random_valid_diagram
from advm.model import ActivityModel, EdgeDef, NodeDef, NodeKind
from advm.validate import validate, validate_diagram


def codes(diagram):
    return {name: report.codes() for name, report in validate_diagram(diagram).items()}


def test_fig1_invalid_constructs(load):
    assert codes(load("fig1a.ad")) == {"LoopWithoutAction": ["E1"]}
    assert codes(load("fig1b.ad")) == {"ForkThenJoin": ["E2"]}


def test_fig2_counterparts_are_clean(load):
    reports = validate_diagram(load("fig2.ad"))
    assert all(r.ok and not r.warnings for r in reports.values())


def test_fixtures_are_clean(load):
    for name in ("process_order.ad", "fig6.ad", "minimal.ad", "example.ad"):
        assert all(not c for c in codes(load(name)).values()), name


BASE = """
behavior b = identity;
activity A {{
    initial i;
    action X calls b;
    action Y calls b;
    finalFlow f;
    {extra}
    pin i.out;
    pin X.in;
    pin X.out;
    pin Y.in;
    pin Y.out;
    pin f.in;
    {edges}
}}
"""


def check(parse, extra="", edges=""):
    return validate_diagram(parse(BASE.format(extra=extra, edges=edges)))["A"]


def test_edge_touching_stable_node_without_pin(parse):
    r = check(parse, edges="edge i.out -> X.in; edge X.out -> Y.in; edge Y -> f.in; edge Y.out -> f.in;")
    assert "E3" in r.codes()


def test_action_without_input_pin(parse):
    d = parse("behavior b = identity; activity A { action X calls b; pin X.out; finalFlow f; pin f.in;"
              " edge X.out -> f.in; }")
    assert "E3" in validate_diagram(d)["A"].codes()


def test_output_pin_with_two_edges(parse):
    r = check(parse, edges="edge i.out -> X.in; edge X.out -> Y.in; edge X.out -> f.in; edge Y.out -> f.in;")
    assert "E4" in r.codes()


def test_decision_rules(parse):
    r = check(parse, extra="decision d; merge m;", edges="""
        edge i.out -> X.in; edge X.out -> d; edge d -> m guard k = 1; edge d -> m;
        edge m -> Y.in; edge Y.out -> f.in;""")
    assert r.codes() == ["E5"]
    r = check(parse, extra="decision d; merge m;", edges="""
        edge i.out -> X.in; edge X.out -> d; edge d -> m guard otherwise; edge d -> m guard otherwise;
        edge m -> Y.in; edge Y.out -> f.in;""")
    assert r.codes() == ["E5"]


def test_overlapping_guards_warn(parse):
    r = check(parse, extra="decision d; merge m;", edges="""
        edge i.out -> X.in; edge X.out -> d; edge d -> m guard k < 3; edge d -> m guard k > 1;
        edge m -> Y.in; edge Y.out -> f.in;""")
    assert r.ok and r.warning_codes() == ["W1"]


def test_unbound_behavior(parse):
    d = parse(BASE.format(extra="", edges="edge i.out -> X.in; edge X.out -> Y.in; edge Y.out -> f.in;")
              .replace("behavior b = identity;", ""))
    assert validate_diagram(d)["A"].codes() == ["E6", "E6"]


def test_join_spec_unknown_variable(parse):
    r = check(parse, extra="fork fk; join j when nope.k = X.out.k;", edges="""
        edge i.out -> fk; edge fk -> X.in; edge fk -> Y.in; edge X.out -> j; edge Y.out -> j;
        edge j -> f.in;""")
    assert r.codes() == ["E8"]


def test_control_node_arity(parse):
    r = check(parse, extra="merge m;", edges="edge i.out -> X.in; edge X.out -> Y.in; edge Y.out -> f.in;")
    assert r.codes() == ["E7"]


def test_parameter_without_node(parse):
    d = parse("behavior b = identity; activity A (in x) { action X calls b; pin X.in; finalFlow f; "
              "pin f.in; pin X.out; edge X.out -> f.in; }")
    assert "E10" in validate_diagram(d)["A"].codes()


# -- brute-force oracles for E1 and E2 -----------------------------------------

KINDS = [NodeKind.FORK, NodeKind.JOIN, NodeKind.DECISION, NodeKind.MERGE]


@st.composite
def control_graphs(draw):
    n = draw(st.integers(1, 5))
    kinds = draw(st.lists(st.sampled_from(KINDS), min_size=n, max_size=n))
    controls = [f"C{i}" for i in range(n)]
    nodes = [NodeDef(c, k) for c, k in zip(controls, kinds)]
    for a in ("A0", "A1"):
        nodes += [NodeDef(a, NodeKind.ACTION, behavior="b"),
                  NodeDef(f"{a}.in", NodeKind.INPUT_PIN, owner=a),
                  NodeDef(f"{a}.out", NodeKind.OUTPUT_PIN, owner=a)]
    sources = controls + ["A0.out", "A1.out"]
    targets = controls + ["A0.in", "A1.in"]
    pairs = draw(st.lists(st.tuples(st.sampled_from(sources), st.sampled_from(targets)),
                          min_size=1, max_size=9))
    edges = tuple(EdgeDef(f"e{i}", s, t) for i, (s, t) in enumerate(pairs, 1))
    return ActivityModel("G", tuple(nodes), edges)


def brute_cycle(model) -> bool:
    controls = [n.name for n in model.nodes if n.is_control]
    arcs = {(e.source, e.target) for e in model.edges}
    for size in range(1, len(controls) + 1):
        for perm in permutations(controls, size):
            if all((perm[i], perm[(i + 1) % size]) in arcs for i in range(size)):
                return True
    return False


def brute_fork_join_route(model) -> bool:
    """Enumerate every simple route leaving an output pin through control nodes."""
    kinds = {n.name: n.kind for n in model.nodes}
    found = False

    def extend(route):
        nonlocal found
        route_kinds = {kinds[r] for r in route}
        if NodeKind.FORK in route_kinds and NodeKind.JOIN in route_kinds:
            found = True
            return
        for e in model.edges:
            if e.source == route[-1] and model.node(e.target).is_control and e.target not in route:
                extend(route + [e.target])

    for e in model.edges:
        if model.node(e.source).kind == NodeKind.OUTPUT_PIN and model.node(e.target).is_control:
            extend([e.target])
    return found


@settings(max_examples=400, deadline=None)
@given(control_graphs())
def test_e1_matches_cycle_enumeration(model):
    assert ("E1" in validate(model, behaviors={"b"}).codes()) == brute_cycle(model)


@settings(max_examples=400, deadline=None)
@given(control_graphs())
def test_e2_matches_route_enumeration(model):
    assert ("E2" in validate(model, behaviors={"b"}).codes()) == brute_fork_join_route(model)


def test_generator_output_is_clean():
    for seed in range(1000):
        gen = random_valid_diagram(seed, 12)
        assert gen.node_count <= 12
        bad = {n: r.codes() for n, r in validate_diagram(gen.diagram).items() if r.codes()}
        assert not bad, (seed, bad, gen.text)


@pytest.mark.parametrize("code", ["E1", "E2"])
def test_generator_negative_controls(code):
    hits = 0
    for seed in range(40):
        gen = random_valid_diagram(seed, 12, violate=code)
        hits += code in validate_diagram(gen.diagram)["Main"].codes()
    assert hits >= 30


def test_small_bound():
    gen = random_valid_diagram(0, 4)
    assert gen.node_count <= 4
    assert all(r.ok for r in validate_diagram(gen.diagram).values())
