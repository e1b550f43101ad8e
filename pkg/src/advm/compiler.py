"""Lowering of activity models to runtime structures.

The factory turns every stable node (action, initial, final, parameter node)
into a runtime node with input/output queues, compiles the edges and control
nodes between queues into paths, and attaches push engines to output queues
and pull engines to input queues.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional, Union

from .errors import AlreadyActive, CompileError
from .guard import (
    TRUE,
    And,
    Expr,
    Not,
    Or,
    Otherwise,
    Var,
    conjoin,
    disjoin,
    rename_vars,
    to_dnf,
    to_prefix,
    to_text,
    variables,
)
from .model import (
    ActivityModel,
    EdgeDef,
    ExecutionMode,
    NodeDef,
    NodeKind,
    ParameterDef,
)
from .validate import resolve_pin_variable


class QueueKind(str, Enum):
    INPUT = "InputQueue"
    OUTPUT = "OutputQueue"


@dataclass(eq=False)
class Queue:
    name: str
    kind: QueueKind
    owner: "StableNode"
    definition: NodeDef
    pin_type: Optional[str] = None
    tokens: list = field(default_factory=list)
    engine: Optional[Union["PushEngine", "PullEngine"]] = None
    paths: list["Path"] = field(default_factory=list)
    incoming: Optional["RuntimeEdge"] = None
    outgoing: Optional["RuntimeEdge"] = None

    @property
    def short_name(self) -> str:
        return self.definition.short_name

    def __repr__(self) -> str:
        return f"<{self.kind.value} {self.name}>"


@dataclass(eq=False)
class StableNode:
    name: str
    kind: NodeKind
    definition: NodeDef
    inputs: list[Queue] = field(default_factory=list)
    outputs: list[Queue] = field(default_factory=list)
    # execution state for actions
    waiting: Any = None

    @property
    def behavior(self) -> Optional[str]:
        return self.definition.behavior

    @property
    def is_synchronous(self) -> bool:
        return self.definition.is_synchronous


@dataclass(eq=False)
class IntermediateNode:
    name: str
    kind: NodeKind
    definition: NodeDef
    incoming: list["RuntimeEdge"] = field(default_factory=list)
    outgoing: list["RuntimeEdge"] = field(default_factory=list)


@dataclass(eq=False)
class RuntimeEdge:
    name: str
    definition: EdgeDef
    source: Union[Queue, IntermediateNode]
    target: Union[Queue, IntermediateNode]
    condition: Expr = TRUE


@dataclass(eq=False)
class Path:
    start: Queue
    end: Queue
    pass_rule: Expr
    has_join: bool
    route: tuple[RuntimeEdge, ...]
    engine: Optional[Union["PushEngine", "PullEngine"]] = None

    @property
    def route_names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.route)

    def __repr__(self) -> str:
        kind = "pull" if self.has_join else "push"
        return f"<Path {self.start.name} -> {self.end.name} : {to_text(self.pass_rule)} : {kind}>"


@dataclass(eq=False)
class PushEngine:
    queue: Queue
    paths: list[Path] = field(default_factory=list)
    examined: set = field(default_factory=set)


@dataclass(eq=False)
class PullEngine:
    queue: Queue
    paths: list[Path] = field(default_factory=list)
    join_criteria: Expr = TRUE
    sources: list[Queue] = field(default_factory=list)
    var_names: dict = field(default_factory=dict)  # Queue -> variable name
    # execution state
    seen: set = field(default_factory=set)
    passed: dict = field(default_factory=dict)  # token id -> (token, set of Path)
    dirty: bool = False

    @property
    def criteria_text(self) -> str:
        return to_prefix(self.join_criteria)


@dataclass(eq=False)
class ParameterR:
    definition: ParameterDef
    node: StableNode
    value: Any = None

    @property
    def name(self) -> str:
        return self.definition.name

    @property
    def direction(self) -> str:
        return self.definition.direction

    @property
    def queue(self) -> Queue:
        q = self.node.outputs if self.direction == "in" else self.node.inputs
        return q[0]


@dataclass(eq=False)
class ActivityRuntime:
    definition: ActivityModel
    is_active: bool = False
    is_final: bool = False
    stable_nodes: list[StableNode] = field(default_factory=list)
    intermediate_nodes: list[IntermediateNode] = field(default_factory=list)
    edges: list[RuntimeEdge] = field(default_factory=list)
    queues: list[Queue] = field(default_factory=list)
    paths: list[Path] = field(default_factory=list)
    push_engines: list[PushEngine] = field(default_factory=list)
    pull_engines: list[PullEngine] = field(default_factory=list)
    parameters: list[ParameterR] = field(default_factory=list)
    mapping: dict = field(default_factory=dict)  # definition element -> runtime element
    # set by the executing machine
    instance: str = ""
    scope: str = ""
    children: list["ActivityRuntime"] = field(default_factory=list)
    parent_firing: int = 0
    on_activate: Any = None

    @property
    def name(self) -> str:
        return self.definition.name

    @property
    def engines(self) -> list:
        return [*self.push_engines, *self.pull_engines]

    def actions(self) -> list[StableNode]:
        return [n for n in self.stable_nodes if n.kind == NodeKind.ACTION]

    def nodes_of(self, *kinds: NodeKind) -> list[StableNode]:
        return [n for n in self.stable_nodes if n.kind in kinds]

    def queue(self, name: str) -> Queue:
        for q in self.queues:
            if q.name == name:
                return q
        raise KeyError(name)

    def input_parameters(self) -> list[ParameterR]:
        return [p for p in self.parameters if p.direction == "in"]

    def output_parameters(self) -> list[ParameterR]:
        return [p for p in self.parameters if p.direction == "out"]

    def runtime_of(self, definition: Any) -> Any:
        return self.mapping[definition]

    def activate(self) -> None:
        if self.is_active:
            raise AlreadyActive(f"activity {self.instance or self.name} is already active")
        self.is_active = True
        if self.on_activate is not None:
            self.on_activate(self)

    def token_count(self) -> int:
        return sum(len(q.tokens) for q in self.queues)


# ---------------------------------------------------------------------------
# Factory
# ---------------------------------------------------------------------------


class ActivityFactory:
    """Entry point that builds runtime instances for activity definitions.

    One factory per process run; it owns the pool of ``single``-mode instances.
    """

    def __init__(self, activities: Optional[Mapping[str, ActivityModel]] = None,
                 dnf_join_criteria: bool = False):
        self.activities = dict(activities or {})
        self.dnf_join_criteria = dnf_join_criteria
        self.instance_pool: dict[str, ActivityRuntime] = {}
        self._lock = threading.Lock()

    def create_activity(self, definition: Union[ActivityModel, str],
                        activate: bool = True) -> ActivityRuntime:
        if isinstance(definition, str):
            definition = self.activities[definition]
        if definition.execution_mode == ExecutionMode.SINGLE:
            with self._lock:
                existing = self.instance_pool.get(definition.name)
                if existing is not None:
                    return existing
                rt = self._build(definition, activate)
                self.instance_pool[definition.name] = rt
                return rt
        return self._build(definition, activate)

    def _build(self, definition: ActivityModel, activate: bool) -> ActivityRuntime:
        rt = ActivityRuntime(definition)
        for node in definition.nodes:
            if node.is_stable:
                sn = StableNode(node.name, node.kind, node)
                rt.stable_nodes.append(sn)
                rt.mapping[node] = sn
                rt.mapping[sn] = node
            elif node.is_control:
                inode = IntermediateNode(node.name, node.kind, node)
                rt.intermediate_nodes.append(inode)
                rt.mapping[node] = inode
                rt.mapping[inode] = node
        by_name = {n.name: rt.mapping[n] for n in definition.nodes if n in rt.mapping}
        for node in definition.nodes:
            if not node.is_pin:
                continue
            owner = by_name[node.owner]
            kind = QueueKind.OUTPUT if node.kind == NodeKind.OUTPUT_PIN else QueueKind.INPUT
            q = Queue(node.name, kind, owner, node, node.pin_type)
            (owner.outputs if kind == QueueKind.OUTPUT else owner.inputs).append(q)
            rt.queues.append(q)
            rt.mapping[node] = q
            rt.mapping[q] = node
            by_name[node.name] = q
        for param in definition.parameters:
            pnode = definition.parameter_node(param.name)
            if pnode is None:
                raise CompileError(f"parameter {param.name} has no parameter node")
            rt.parameters.append(ParameterR(param, rt.mapping[pnode]))
        conditions = effective_conditions(definition)
        for edge in definition.edges:
            redge = RuntimeEdge(edge.name, edge, by_name[edge.source], by_name[edge.target],
                                conditions[edge.name])
            src, dst = redge.source, redge.target
            if isinstance(src, Queue):
                src.outgoing = redge
            else:
                src.outgoing.append(redge)
            if isinstance(dst, Queue):
                dst.incoming = redge
            else:
                dst.incoming.append(redge)
            rt.edges.append(redge)
            rt.mapping[edge] = redge
            rt.mapping[redge] = edge
        create_paths(rt)
        create_token_engines(rt, dnf=self.dnf_join_criteria)
        rt.is_final = definition.has_activity_final
        if activate:
            rt.activate()
        return rt


def effective_conditions(definition: ActivityModel) -> dict[str, Expr]:
    """Edge guards with ``otherwise`` expanded against its decision siblings."""
    out: dict[str, Expr] = {}
    for edge in definition.edges:
        guard = edge.guard
        if guard is None:
            out[edge.name] = TRUE
        elif isinstance(guard, Otherwise):
            siblings = [e.guard for e in definition.outgoing(edge.source)
                        if e is not edge and e.guard is not None and not isinstance(e.guard, Otherwise)]
            out[edge.name] = Not(disjoin(siblings)) if siblings else TRUE
        else:
            out[edge.name] = guard
    return out


def create_paths(rt: ActivityRuntime) -> None:
    """Wave-front expansion from every output queue through intermediate nodes."""
    limit = len(rt.edges) + 1
    for snode in rt.stable_nodes:
        for oque in snode.outputs:
            if oque.outgoing is None:
                continue
            wave = deque([(oque.outgoing, (), False, ())])
            while wave:
                edge, conds, has_join, route = wave.popleft()
                conds = conds + (edge.condition,)
                route = route + (edge,)
                if len(route) > limit:
                    raise CompileError(f"route from {oque.name} does not terminate")
                target = edge.target
                if isinstance(target, Queue):
                    path = Path(oque, target, conjoin(conds), has_join, route)
                    rt.paths.append(path)
                    oque.paths.append(path)
                    target.paths.append(path)
                    continue
                joined = has_join or target.kind == NodeKind.JOIN
                for nxt in target.outgoing:
                    wave.append((nxt, conds, joined, route))


def create_token_engines(rt: ActivityRuntime, dnf: bool = False) -> None:
    for snode in rt.stable_nodes:
        for oque in snode.outputs:
            push_paths = [p for p in oque.paths if not p.has_join]
            if push_paths:
                engine = PushEngine(oque, push_paths)
                oque.engine = engine
                for p in push_paths:
                    p.engine = engine
                rt.push_engines.append(engine)
    for snode in rt.stable_nodes:
        for ique in snode.inputs:
            pull_paths = [p for p in ique.paths if p.has_join]
            if pull_paths:
                engine = PullEngine(ique, pull_paths)
                ique.engine = engine
                for p in pull_paths:
                    p.engine = engine
                create_join_criteria(engine)
                if dnf:
                    engine.join_criteria = to_dnf(engine.join_criteria)
                rt.pull_engines.append(engine)


def create_join_criteria(engine: PullEngine) -> None:
    """Build the join criteria by walking upstream over the engine's pull paths.

    Joins contribute AND (with their join specification first), merges OR,
    decisions are transparent; output queues are the leaves.
    """
    by_route = {p.route: p for p in engine.paths}
    leaves: list[tuple[Queue, Path]] = []

    def build(edge: RuntimeEdge, chain: tuple) -> Optional[Expr]:
        chain = (edge,) + chain
        src = edge.source
        if isinstance(src, Queue):
            path = by_route.get(chain)
            if path is None:
                return None
            leaves.append((src, path))
            return Var(src.name, path)
        operands = [x for x in (build(e, chain) for e in src.incoming) if x is not None]
        if not operands:
            return None
        if src.kind == NodeKind.JOIN:
            spec = src.definition.join_spec
            items = ([_JoinSpec(spec, src)] if spec is not None else []) + operands
            return And(tuple(items))
        if src.kind == NodeKind.MERGE:
            return disjoin(operands)
        if src.kind == NodeKind.DECISION:
            return operands[0]
        raise CompileError(f"fork {src.name} on a pull path into {engine.queue.name}")

    incoming = engine.queue.incoming
    tree = build(incoming, ()) if incoming is not None else None
    if tree is None:
        raise CompileError(f"no pull path into {engine.queue.name}")

    sources: list[Queue] = []
    for q, _ in leaves:
        if q not in sources:
            sources.append(q)
    shorts = [q.short_name for q in sources]
    names = {q: (q.short_name if shorts.count(q.short_name) == 1 else q.name) for q in sources}
    engine.sources = sources
    engine.var_names = names
    engine.join_criteria = _finish(tree, names, [q.definition for q in sources])


@dataclass(frozen=True)
class _JoinSpec:
    expr: Expr
    join: Any


def _finish(expr: Any, names: dict, pins: list[NodeDef]) -> Expr:
    if isinstance(expr, Var):
        return Var(names[expr.path.start], expr.path)
    if isinstance(expr, _JoinSpec):
        mapping = {}
        for var in variables(expr.expr):
            pin = resolve_pin_variable(var, pins)
            if pin is None:
                raise CompileError(f"join {expr.join.name}: unknown variable {var!r}")
            q = next(q for q in names if q.definition is pin)
            mapping[var] = names[q]
        return rename_vars(expr.expr, mapping)
    if isinstance(expr, And):
        return And(tuple(_finish(i, names, pins) for i in expr.items))
    if isinstance(expr, Or):
        return Or(tuple(_finish(i, names, pins) for i in expr.items))
    return expr


# ---------------------------------------------------------------------------
# Dump
# ---------------------------------------------------------------------------


def dump_runtime(rt: ActivityRuntime) -> str:
    """Deterministic listing of queues, paths and engines."""
    d = rt.definition
    lines = [f"activity {d.name} mode={d.execution_mode.value} final={str(rt.is_final).lower()}"]
    lines.append("queues:")
    for q in rt.queues:
        engine = "-"
        if isinstance(q.engine, PushEngine):
            engine = "push"
        elif isinstance(q.engine, PullEngine):
            engine = "pull"
        kind = "out" if q.kind == QueueKind.OUTPUT else "in"
        lines.append(f"  {kind} {q.name} : {q.pin_type or 'NULL'} [{engine}]")
    lines.append("paths:")
    for p in rt.paths:
        lines.append(f"  {p.start.name} -> {p.end.name} : {to_text(p.pass_rule)} : "
                     f"{'pull' if p.has_join else 'push'}")
    lines.append("engines:")
    for e in rt.push_engines:
        lines.append(f"  push {e.queue.name} : " + ", ".join(p.end.name for p in e.paths))
    for e in rt.pull_engines:
        lines.append(f"  pull {e.queue.name} : " + ", ".join(p.start.name for p in e.paths))
        lines.append(f"    criteria {e.criteria_text}")
    return "\n".join(lines) + "\n"
