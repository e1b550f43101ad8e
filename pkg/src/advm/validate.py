"""Structural validation of activity models.

Error codes:

    E1  cycle through control nodes only
    E2  route between stable nodes containing both a fork and a join
    E3  missing or misplaced pin
    E4  pin edge cardinality violated
    E5  malformed decision (fewer than two outgoing edges, unguarded edge,
        misplaced or repeated ``otherwise``)
    E6  unresolvable behavior reference
    E7  control node arity (missing incoming/outgoing edges)
    E8  join specification reads an unknown or ambiguous queue variable
    E10 parameter without exactly one parameter node

Warnings:

    W1  decision guards not provably mutually exclusive
    W2  activity has no way to start (no initial node, no input parameter)
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Collection, Iterable, Mapping, Optional

import networkx as nx

from .guard import Field, Otherwise, provably_exclusive, to_text, variables
from .model import (
    CONTROL_KINDS,
    FINAL_KINDS,
    ActivityModel,
    Diagram,
    NodeDef,
    NodeKind,
)


@dataclass(frozen=True)
class Issue:
    code: str
    elements: tuple[str, ...]
    message: str

    def __str__(self) -> str:
        return f"{self.code} [{', '.join(self.elements)}] {self.message}"


@dataclass
class ValidationReport:
    activity: str
    errors: list[Issue] = field(default_factory=list)
    warnings: list[Issue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def codes(self) -> list[str]:
        return [i.code for i in self.errors]

    def warning_codes(self) -> list[str]:
        return [i.code for i in self.warnings]


def validate(
    model: ActivityModel,
    registry: Optional[Mapping[str, ActivityModel]] = None,
    behaviors: Collection[str] = (),
) -> ValidationReport:
    """Check ``model`` against the supported diagram subset.

    ``registry`` holds the activities a CallBehaviorAction may invoke and
    ``behaviors`` the names of declared opaque behaviors.
    """
    report = ValidationReport(model.name)
    err = report.errors
    registry = registry or {}

    _check_pins(model, err)
    _check_controls(model, err)
    _check_decisions(model, report)
    _check_control_cycles(model, err)
    _check_fork_join_routes(model, err)
    _check_join_specs(model, err)
    _check_parameters(model, err)

    for node in model.nodes_of(NodeKind.ACTION):
        if node.behavior not in registry and node.behavior not in behaviors:
            err.append(Issue("E6", (node.name,), f"behavior {node.behavior!r} is not bound"))

    if not model.nodes_of(NodeKind.INITIAL) and not model.inputs():
        report.warnings.append(Issue("W2", (model.name,), "no initial node and no input parameter"))
    return report


def validate_diagram(diagram: Diagram, behaviors: Iterable[str] = ()) -> dict[str, ValidationReport]:
    names = set(diagram.behaviors) | set(behaviors)
    return {name: validate(m, diagram, names) for name, m in diagram.items()}


# ---------------------------------------------------------------------------


def _check_pins(model: ActivityModel, err: list[Issue]) -> None:
    for edge in model.edges:
        for end in (edge.source, edge.target):
            node = model.node(end)
            if node.is_stable:
                err.append(Issue("E3", (edge.name, end),
                                 f"edge {edge.source} -> {edge.target} touches {end} without a pin"))

    for node in model.nodes:
        if node.is_pin:
            owner = model.node(node.owner)
            if owner.is_control or owner.is_pin:
                err.append(Issue("E3", (node.name,), f"pin {node.name} is owned by non-stable node"))
            elif owner.kind == NodeKind.INITIAL and node.kind != NodeKind.OUTPUT_PIN:
                err.append(Issue("E3", (node.name,), "initial nodes have output pins only"))
            elif owner.kind in FINAL_KINDS and node.kind != NodeKind.INPUT_PIN:
                err.append(Issue("E3", (node.name,), "final nodes have input pins only"))
            elif owner.kind == NodeKind.PARAMETER:
                direction = model.parameter(owner.parameter).direction
                expected = NodeKind.OUTPUT_PIN if direction == "in" else NodeKind.INPUT_PIN
                if node.kind != expected:
                    err.append(Issue("E3", (node.name,),
                                     f"{direction} parameter node pins must be {expected.value}"))
            n_in = len(model.incoming(node.name))
            n_out = len(model.outgoing(node.name))
            if node.kind == NodeKind.OUTPUT_PIN and (n_out != 1 or n_in != 0):
                err.append(Issue("E4", (node.name,),
                                 f"output pin needs exactly one outgoing edge (has {n_out} out, {n_in} in)"))
            if node.kind == NodeKind.INPUT_PIN and (n_in != 1 or n_out != 0):
                err.append(Issue("E4", (node.name,),
                                 f"input pin needs exactly one incoming edge (has {n_in} in, {n_out} out)"))
        elif node.is_stable:
            pins = model.pins_of(node.name)
            if node.kind == NodeKind.ACTION and not model.pins_of(node.name, NodeKind.INPUT_PIN):
                err.append(Issue("E3", (node.name,), "action has no input pin"))
            elif not pins:
                err.append(Issue("E3", (node.name,), f"{node.kind.value} {node.name} has no pin"))


def _check_controls(model: ActivityModel, err: list[Issue]) -> None:
    for node in model.nodes_of(*CONTROL_KINDS):
        n_in = len(model.incoming(node.name))
        n_out = len(model.outgoing(node.name))
        problem = None
        if n_in == 0 or n_out == 0:
            problem = f"needs incoming and outgoing edges (has {n_in} in, {n_out} out)"
        elif node.kind in (NodeKind.FORK, NodeKind.DECISION) and n_in != 1:
            problem = f"needs exactly one incoming edge (has {n_in})"
        elif node.kind in (NodeKind.JOIN, NodeKind.MERGE) and n_out != 1:
            problem = f"needs exactly one outgoing edge (has {n_out})"
        if problem:
            err.append(Issue("E7", (node.name,), f"{node.kind.value} {node.name} {problem}"))


def _check_decisions(model: ActivityModel, report: ValidationReport) -> None:
    for edge in model.edges:
        if isinstance(edge.guard, Otherwise) and model.node(edge.source).kind != NodeKind.DECISION:
            report.errors.append(Issue("E5", (edge.name,), "'otherwise' is only allowed on decision edges"))

    for node in model.nodes_of(NodeKind.DECISION):
        out = model.outgoing(node.name)
        if len(out) < 2:
            report.errors.append(Issue("E5", (node.name,), "decision needs at least two outgoing edges"))
        unguarded = [e.name for e in out if e.guard is None]
        if unguarded:
            report.errors.append(Issue("E5", (node.name, *unguarded), "decision edge without guard"))
        if sum(isinstance(e.guard, Otherwise) for e in out) > 1:
            report.errors.append(Issue("E5", (node.name,), "more than one 'otherwise' edge"))
        plain = [e for e in out if e.guard is not None and not isinstance(e.guard, Otherwise)]
        for i, a in enumerate(plain):
            for b in plain[i + 1:]:
                if not provably_exclusive(a.guard, b.guard):
                    report.warnings.append(Issue(
                        "W1", (node.name, a.name, b.name),
                        f"guards {to_text(a.guard)!r} and {to_text(b.guard)!r} may overlap"))


def control_graph(model: ActivityModel) -> nx.DiGraph:
    """Subgraph induced by control nodes and the edges between them."""
    g = nx.DiGraph()
    controls = {n.name for n in model.nodes_of(*CONTROL_KINDS)}
    g.add_nodes_from(sorted(controls))
    for e in model.edges:
        if e.source in controls and e.target in controls:
            g.add_edge(e.source, e.target)
    return g


def _check_control_cycles(model: ActivityModel, err: list[Issue]) -> None:
    g = control_graph(model)
    for comp in nx.strongly_connected_components(g):
        members = sorted(comp)
        if len(members) > 1 or g.has_edge(members[0], members[0]):
            err.append(Issue("E1", tuple(members),
                             "control nodes form a loop without any action: " + ", ".join(members)))


def _check_fork_join_routes(model: ActivityModel, err: list[Issue]) -> None:
    reported: set[tuple[str, str]] = set()

    def walk(node: NodeDef, forks: tuple, joins: tuple, on_route: frozenset) -> None:
        if node.kind == NodeKind.FORK:
            forks = forks + (node.name,)
        elif node.kind == NodeKind.JOIN:
            joins = joins + (node.name,)
        if forks and joins:
            key = (forks[0], joins[0])
            if key not in reported:
                reported.add(key)
                err.append(Issue("E2", key,
                                 f"fork {forks[0]} and join {joins[0]} lie on one route between stable nodes"))
            return
        for e in model.outgoing(node.name):
            nxt = model.node(e.target)
            if nxt.is_control and nxt.name not in on_route:
                walk(nxt, forks, joins, on_route | {nxt.name})

    for pin in model.nodes_of(NodeKind.OUTPUT_PIN):
        for e in model.outgoing(pin.name):
            first = model.node(e.target)
            if first.is_control:
                walk(first, (), (), frozenset({first.name}))


def upstream_output_pins(model: ActivityModel, node_name: str) -> list[NodeDef]:
    """Output pins reaching ``node_name`` through control nodes only."""
    found: dict[str, NodeDef] = {}
    seen: set[str] = set()
    stack = [node_name]
    while stack:
        name = stack.pop()
        for e in model.incoming(name):
            src = model.node(e.source)
            if src.kind == NodeKind.OUTPUT_PIN:
                found.setdefault(src.name, src)
            elif src.is_control and src.name not in seen:
                seen.add(src.name)
                stack.append(src.name)
    return sorted(found.values(), key=lambda n: model.nodes.index(n))


def resolve_pin_variable(var: str, pins: list[NodeDef]) -> Optional[NodeDef]:
    """Match a join-spec variable to a pin by qualified or unique short name."""
    for p in pins:
        if p.name == var:
            return p
    short = [p for p in pins if p.short_name == var]
    return short[0] if len(short) == 1 else None


def _check_join_specs(model: ActivityModel, err: list[Issue]) -> None:
    for node in model.nodes_of(NodeKind.JOIN):
        if node.join_spec is None:
            continue
        pins = upstream_output_pins(model, node.name)
        bare = _bare_fields(node.join_spec)
        if bare:
            err.append(Issue("E8", (node.name,),
                             f"join specification reads {', '.join(bare)} without a queue variable"))
        for var in variables(node.join_spec):
            if resolve_pin_variable(var, pins) is None:
                err.append(Issue("E8", (node.name,),
                                 f"join specification variable {var!r} names no unique upstream output pin"))


def _bare_fields(expr) -> list[str]:
    out = []

    def walk(e):
        if isinstance(e, Field) and e.var is None:
            out.append(e.name)
        for child in getattr(e, "items", ()) or ():
            walk(child)
        for attr in ("left", "right", "item"):
            if hasattr(e, attr):
                walk(getattr(e, attr))

    walk(expr)
    return out


def _check_parameters(model: ActivityModel, err: list[Issue]) -> None:
    counts = Counter(n.parameter for n in model.nodes_of(NodeKind.PARAMETER))
    for p in model.parameters:
        if counts[p.name] != 1:
            err.append(Issue("E10", (p.name,),
                             f"parameter {p.name} has {counts[p.name]} parameter nodes (expected 1)"))
