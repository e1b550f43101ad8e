"""Static activity-diagram model and the textual diagram format.

Example::

    behavior receive = const(id=1, status=accepted);

    activity Main (in order: Order, out result: Order) {
        initial i;
        action A calls receive;
        finalActivity f;
        pin i.out;
        pin A.in;
        pin A.out : Order;
        pin f.in;
        edge i.out -> A.in;
        edge A.out -> f.in guard status = accepted;
    }

Pin direction is inferred from the edges that touch the pin.
"""

from __future__ import annotations

import re
from decimal import Decimal
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterator, Mapping, Optional

from .errors import ExprSyntaxError, ParseError
from .guard import Expr, parse_expr


class NodeKind(str, Enum):
    INITIAL = "InitialNode"
    ACTIVITY_FINAL = "ActivityFinalNode"
    FLOW_FINAL = "FlowFinalNode"
    FORK = "ForkNode"
    JOIN = "JoinNode"
    DECISION = "DecisionNode"
    MERGE = "MergeNode"
    ACTION = "CallBehaviorAction"
    PARAMETER = "ActivityParameterNode"
    INPUT_PIN = "InputPin"
    OUTPUT_PIN = "OutputPin"


CONTROL_KINDS = frozenset({NodeKind.FORK, NodeKind.JOIN, NodeKind.DECISION, NodeKind.MERGE})
FINAL_KINDS = frozenset({NodeKind.ACTIVITY_FINAL, NodeKind.FLOW_FINAL})
STABLE_KINDS = frozenset({NodeKind.ACTION, NodeKind.INITIAL, NodeKind.PARAMETER}) | FINAL_KINDS
PIN_KINDS = frozenset({NodeKind.INPUT_PIN, NodeKind.OUTPUT_PIN})


class ExecutionMode(str, Enum):
    SEPARATE = "separate"
    SINGLE = "single"


@dataclass(frozen=True)
class ParameterDef:
    name: str
    direction: str  # "in" | "out"
    type: Optional[str] = None


@dataclass(frozen=True)
class NodeDef:
    name: str
    kind: NodeKind
    join_spec: Optional[Expr] = None
    behavior: Optional[str] = None
    is_synchronous: bool = True
    pin_type: Optional[str] = None
    owner: Optional[str] = None
    parameter: Optional[str] = None
    line: int = 0

    @property
    def short_name(self) -> str:
        """Pin name without its owner prefix."""
        if self.owner is not None:
            return self.name[len(self.owner) + 1:]
        return self.name

    @property
    def is_control(self) -> bool:
        return self.kind in CONTROL_KINDS

    @property
    def is_stable(self) -> bool:
        return self.kind in STABLE_KINDS

    @property
    def is_pin(self) -> bool:
        return self.kind in PIN_KINDS


@dataclass(frozen=True)
class EdgeDef:
    name: str
    source: str
    target: str
    guard: Optional[Expr] = None
    line: int = 0


@dataclass(frozen=True)
class ActivityModel:
    name: str
    nodes: tuple[NodeDef, ...]
    edges: tuple[EdgeDef, ...]
    parameters: tuple[ParameterDef, ...] = ()
    execution_mode: ExecutionMode = ExecutionMode.SEPARATE

    @cached_property
    def _by_name(self) -> dict[str, NodeDef]:
        return {n.name: n for n in self.nodes}

    @cached_property
    def _incoming(self) -> dict[str, list[EdgeDef]]:
        out: dict[str, list[EdgeDef]] = {n.name: [] for n in self.nodes}
        for e in self.edges:
            out.setdefault(e.target, []).append(e)
        return out

    @cached_property
    def _outgoing(self) -> dict[str, list[EdgeDef]]:
        out: dict[str, list[EdgeDef]] = {n.name: [] for n in self.nodes}
        for e in self.edges:
            out.setdefault(e.source, []).append(e)
        return out

    def node(self, name: str) -> NodeDef:
        return self._by_name[name]

    def has_node(self, name: str) -> bool:
        return name in self._by_name

    def incoming(self, name: str) -> list[EdgeDef]:
        return self._incoming.get(name, [])

    def outgoing(self, name: str) -> list[EdgeDef]:
        return self._outgoing.get(name, [])

    def pins_of(self, owner: str, kind: Optional[NodeKind] = None) -> list[NodeDef]:
        return [n for n in self.nodes if n.owner == owner and (kind is None or n.kind == kind)]

    def nodes_of(self, *kinds: NodeKind) -> list[NodeDef]:
        return [n for n in self.nodes if n.kind in kinds]

    def parameter(self, name: str) -> ParameterDef:
        for p in self.parameters:
            if p.name == name:
                return p
        raise KeyError(name)

    def parameter_node(self, param: str) -> Optional[NodeDef]:
        for n in self.nodes:
            if n.kind == NodeKind.PARAMETER and n.parameter == param:
                return n
        return None

    def inputs(self) -> list[ParameterDef]:
        return [p for p in self.parameters if p.direction == "in"]

    def outputs(self) -> list[ParameterDef]:
        return [p for p in self.parameters if p.direction == "out"]

    @property
    def has_activity_final(self) -> bool:
        return any(n.kind == NodeKind.ACTIVITY_FINAL for n in self.nodes)


@dataclass(frozen=True)
class BehaviorDecl:
    """``behavior <name> = <stub>(<args>)`` declaration in a diagram file."""

    name: str
    stub: str
    args: tuple = ()
    kwargs: tuple = ()
    line: int = 0


@dataclass(frozen=True)
class Diagram(Mapping[str, ActivityModel]):
    """All activities and behavior declarations of one diagram file."""

    activities: dict = field(default_factory=dict)
    behaviors: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> ActivityModel:
        return self.activities[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.activities)

    def __len__(self) -> int:
        return len(self.activities)

    def __hash__(self) -> int:
        return id(self)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_LEX_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|//[^\n]*)
  | (?P<arrow>->)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)
  | (?P<num>-?\d+(?:\.\d+)?)
  | (?P<str>"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<punct>[{}();:,=])
    """,
    re.VERBOSE,
)

_NODE_KEYWORDS = {
    "initial": NodeKind.INITIAL,
    "finalActivity": NodeKind.ACTIVITY_FINAL,
    "finalFlow": NodeKind.FLOW_FINAL,
    "fork": NodeKind.FORK,
    "join": NodeKind.JOIN,
    "decision": NodeKind.DECISION,
    "merge": NodeKind.MERGE,
}


@dataclass
class _Lex:
    kind: str
    text: str
    pos: int


class _DiagramParser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    # -- low level -------------------------------------------------------

    def where(self, pos: int) -> tuple[int, int]:
        line = self.text.count("\n", 0, pos) + 1
        col = pos - (self.text.rfind("\n", 0, pos) + 1) + 1
        return line, col

    def error(self, message: str, pos: Optional[int] = None) -> ParseError:
        return ParseError(message, *self.where(self.pos if pos is None else pos))

    def skip(self) -> None:
        while True:
            m = _LEX_RE.match(self.text, self.pos)
            if m and m.lastgroup == "ws":
                self.pos = m.end()
            else:
                return

    def peek(self) -> Optional[_Lex]:
        self.skip()
        if self.pos >= len(self.text):
            return None
        m = _LEX_RE.match(self.text, self.pos)
        if not m:
            raise self.error(f"unexpected character {self.text[self.pos]!r}")
        return _Lex(m.lastgroup, m.group(), self.pos)

    def take(self, kind: Optional[str] = None, text: Optional[str] = None) -> _Lex:
        lex = self.peek()
        if lex is None:
            raise self.error(f"unexpected end of input, expected {text or kind}")
        if (kind and lex.kind != kind) or (text and lex.text != text):
            raise self.error(f"expected {text or kind}, got {lex.text!r}", lex.pos)
        self.pos += len(lex.text)
        return lex

    def accept(self, text: str) -> bool:
        lex = self.peek()
        if lex is not None and lex.text == text:
            self.pos += len(lex.text)
            return True
        return False

    def simple_name(self) -> _Lex:
        lex = self.take("name")
        if "." in lex.text:
            raise self.error(f"expected a simple name, got {lex.text!r}", lex.pos)
        return lex

    def raw_until_semicolon(self) -> tuple[str, int]:
        self.skip()
        start = self.pos
        quote = None
        i = start
        while i < len(self.text):
            ch = self.text[i]
            if quote:
                if ch == "\\":
                    i += 1
                elif ch == quote:
                    quote = None
            elif ch in "'\"":
                quote = ch
            elif ch == ";":
                self.pos = i
                return self.text[start:i], start
            i += 1
        raise self.error("missing ';'", start)

    def expression(self) -> Expr:
        raw, start = self.raw_until_semicolon()
        try:
            return parse_expr(raw)
        except ExprSyntaxError as exc:
            raise self.error(str(exc), start + exc.position) from None

    # -- grammar ---------------------------------------------------------

    def parse(self) -> Diagram:
        activities: dict[str, ActivityModel] = {}
        behaviors: dict[str, BehaviorDecl] = {}
        while (lex := self.peek()) is not None:
            if lex.text == "activity":
                model = self.activity()
                if model.name in activities:
                    raise self.error(f"duplicate activity {model.name!r}", lex.pos)
                activities[model.name] = model
            elif lex.text == "behavior":
                decl = self.behavior()
                behaviors[decl.name] = decl
            else:
                raise self.error(f"expected 'activity' or 'behavior', got {lex.text!r}", lex.pos)
        return Diagram(activities, behaviors)

    def behavior(self) -> BehaviorDecl:
        start = self.take(text="behavior").pos
        name = self.simple_name().text
        self.take(text="=")
        stub = self.simple_name().text
        args: list = []
        kwargs: list = []
        if self.accept("("):
            while not self.accept(")"):
                key = None
                lex = self.peek()
                if lex is not None and lex.kind == "name":
                    save = self.pos
                    self.take()
                    if self.accept("="):
                        key = lex.text
                    else:
                        self.pos = save
                value = self.literal()
                (kwargs.append((key, value)) if key else args.append(value))
                if not self.accept(","):
                    self.take(text=")")
                    break
        self.take(text=";")
        return BehaviorDecl(name, stub, tuple(args), tuple(kwargs), self.where(start)[0])

    def literal(self):
        lex = self.take()
        if lex.kind == "num":
            return Decimal(lex.text) if "." in lex.text else int(lex.text)
        if lex.kind == "str":
            return _unquote(lex.text)
        if lex.kind == "name":
            if lex.text in ("true", "false"):
                return lex.text == "true"
            return lex.text
        raise self.error(f"expected a literal, got {lex.text!r}", lex.pos)

    def activity(self) -> ActivityModel:
        self.take(text="activity")
        name = self.simple_name().text
        mode = ExecutionMode.SEPARATE
        lex = self.peek()
        if lex is not None and lex.text in ("single", "separate"):
            self.take()
            mode = ExecutionMode(lex.text)
        params: list[ParameterDef] = []
        if self.accept("("):
            if not self.accept(")"):
                while True:
                    direction = self.take("name")
                    if direction.text not in ("in", "out"):
                        raise self.error("parameter direction must be 'in' or 'out'", direction.pos)
                    pname = self.simple_name()
                    ptype = None
                    if self.accept(":"):
                        ptype = self.simple_name().text
                    if any(p.name == pname.text for p in params):
                        raise self.error(f"duplicate parameter {pname.text!r}", pname.pos)
                    params.append(ParameterDef(pname.text, direction.text, ptype))
                    if self.accept(")"):
                        break
                    self.take(text=",")
        self.take(text="{")
        builder = _ActivityBuilder(self, name, tuple(params), mode)
        while not self.accept("}"):
            builder.statement()
        return builder.build()


def _unquote(text: str) -> str:
    return re.sub(r"\\(.)", r"\1", text[1:-1])


@dataclass
class _PendingPin:
    name: str
    owner: str
    pin_type: Optional[str]
    line: int


class _ActivityBuilder:
    def __init__(self, parser: _DiagramParser, name: str, params: tuple, mode: ExecutionMode):
        self.p = parser
        self.name = name
        self.params = params
        self.mode = mode
        self.nodes: dict[str, NodeDef] = {}
        self.pins: dict[str, _PendingPin] = {}
        self.order: list[str] = []
        self.edges: list[tuple[str, str, Optional[Expr], int, int, int]] = []

    def declare(self, name: str, pos: int) -> None:
        if name in self.nodes or name in self.pins:
            raise self.p.error(f"duplicate node name {name!r}", pos)
        self.order.append(name)

    def statement(self) -> None:
        kw = self.p.take("name")
        line = self.p.where(kw.pos)[0]
        if kw.text in _NODE_KEYWORDS:
            n = self.p.simple_name()
            kind = _NODE_KEYWORDS[kw.text]
            spec = None
            if kind == NodeKind.JOIN and self.p.peek() is not None and self.p.peek().text == "when":
                self.p.take()
                spec = self.p.expression()
            self.declare(n.text, n.pos)
            self.nodes[n.text] = NodeDef(n.text, kind, join_spec=spec, line=line)
        elif kw.text == "action":
            n = self.p.simple_name()
            self.p.take(text="calls")
            behavior = self.p.simple_name().text
            sync = True
            if self.p.peek() is not None and self.p.peek().text in ("async", "sync"):
                sync = self.p.take().text == "sync"
            self.declare(n.text, n.pos)
            self.nodes[n.text] = NodeDef(n.text, NodeKind.ACTION, behavior=behavior,
                                         is_synchronous=sync, line=line)
        elif kw.text == "param":
            n = self.p.simple_name()
            pname = n.text
            if self.p.accept(":"):
                ref = self.p.simple_name()
                if ref.text not in ("in", "out"):
                    pname = ref.text
                else:
                    declared = ref.text
                    match = [p for p in self.params if p.name == n.text]
                    if match and match[0].direction != declared:
                        raise self.p.error(
                            f"parameter node {n.text!r} declared {declared} but parameter is {match[0].direction}",
                            ref.pos)
            if not any(p.name == pname for p in self.params):
                raise self.p.error(f"unknown parameter {pname!r}", n.pos)
            ptype = next(p.type for p in self.params if p.name == pname)
            self.declare(n.text, n.pos)
            self.nodes[n.text] = NodeDef(n.text, NodeKind.PARAMETER, parameter=pname,
                                         pin_type=ptype, line=line)
        elif kw.text == "pin":
            n = self.p.take("name")
            if n.text.count(".") != 1:
                raise self.p.error("pin names have the form <owner>.<pin>", n.pos)
            owner = n.text.split(".")[0]
            if owner not in self.nodes:
                raise self.p.error(f"pin owner {owner!r} is not declared", n.pos)
            ptype = None
            if self.p.accept(":"):
                ptype = self.p.simple_name().text
            self.declare(n.text, n.pos)
            self.pins[n.text] = _PendingPin(n.text, owner, ptype, line)
        elif kw.text == "edge":
            src = self.p.take("name")
            self.p.take("arrow")
            dst = self.p.take("name")
            guard = None
            if self.p.peek() is not None and self.p.peek().text == "guard":
                self.p.take()
                guard = self.p.expression()
            self.edges.append((src.text, dst.text, guard, line, src.pos, dst.pos))
        else:
            raise self.p.error(f"unknown statement {kw.text!r}", kw.pos)
        self.p.take(text=";")

    def build(self) -> ActivityModel:
        edges = []
        sources: set[str] = set()
        targets: set[str] = set()
        for i, (src, dst, guard, line, spos, dpos) in enumerate(self.edges, 1):
            for end, pos in ((src, spos), (dst, dpos)):
                if end not in self.nodes and end not in self.pins:
                    raise self.p.error(f"edge references unknown node {end!r}", pos)
            sources.add(src)
            targets.add(dst)
            edges.append(EdgeDef(f"e{i}", src, dst, guard, line))
        nodes = []
        for name in self.order:
            if name in self.nodes:
                nodes.append(self.nodes[name])
                continue
            pin = self.pins[name]
            nodes.append(NodeDef(name, self._pin_kind(pin, sources, targets),
                                 pin_type=pin.pin_type, owner=pin.owner, line=pin.line))
        return ActivityModel(self.name, tuple(nodes), tuple(edges), self.params, self.mode)

    def _pin_kind(self, pin: _PendingPin, sources: set, targets: set) -> NodeKind:
        if pin.name in sources:
            return NodeKind.OUTPUT_PIN
        if pin.name in targets:
            return NodeKind.INPUT_PIN
        owner = self.nodes[pin.owner]
        if owner.kind == NodeKind.INITIAL:
            return NodeKind.OUTPUT_PIN
        if owner.kind == NodeKind.PARAMETER:
            param = next(p for p in self.params if p.name == owner.parameter)
            return NodeKind.OUTPUT_PIN if param.direction == "in" else NodeKind.INPUT_PIN
        return NodeKind.INPUT_PIN


def parse_activity(source_text: str) -> Diagram:
    """Parse diagram text into a :class:`Diagram` of activity models."""
    return _DiagramParser(source_text).parse()


def parse_file(path) -> Diagram:
    with open(path, encoding="utf-8") as fh:
        return parse_activity(fh.read())
