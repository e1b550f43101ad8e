"""Random generator of valid activity diagrams for differential testing.

Diagrams are built from nested blocks (single actions, decision/merge
blocks, fork/join blocks, asynchronous calls and sub-activity calls) so that
every generated diagram passes validation and every action fires at most
once per run. Node counts include all non-pin nodes of all activities.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from itertools import count
from typing import Optional

from .model import Diagram, parse_activity

SETTERS = 4


@dataclass
class GeneratedDiagram:
    seed: int
    text: str
    diagram: Diagram
    activity: str
    args: list
    node_count: int


@dataclass
class _Activity:
    name: str
    header: str
    decls: list[str] = field(default_factory=list)
    pins: list[str] = field(default_factory=list)
    edges: list[str] = field(default_factory=list)

    def render(self) -> str:
        body = [*self.decls, *self.pins, *self.edges]
        return f"activity {self.name}{self.header} {{\n" + "".join(f"    {s}\n" for s in body) + "}\n"


class _Builder:
    def __init__(self, rng: random.Random, violate: Optional[str]):
        self.rng = rng
        self.violate = violate
        self.ids = count(1)
        self.nodes = 0
        self.subs: list[_Activity] = []
        self.act: _Activity = None  # type: ignore[assignment]

    def node(self, decl: str) -> None:
        self.act.decls.append(decl)
        self.nodes += 1

    def edge(self, src: str, dst: str, guard: Optional[str] = None) -> None:
        self.act.edges.append(f"edge {src} -> {dst}" + (f" guard {guard};" if guard else ";"))

    def behavior(self) -> str:
        return self.rng.choice([f"s{i}" for i in range(SETTERS)] + ["inc", "idt"])

    # -- blocks: each returns (entry, exit, nodes used) -------------------------

    def action(self, behavior: Optional[str] = None, inputs: int = 1, sync: bool = True) -> tuple:
        i = next(self.ids)
        name = f"A{i}"
        suffix = "" if sync else " async"
        self.node(f"action {name} calls {behavior or self.behavior()}{suffix};")
        ins = [f"{name}.i{i}{chr(97 + j) if inputs > 1 else ''}" for j in range(inputs)]
        for p in ins:
            self.act.pins.append(f"pin {p};")
        out = f"{name}.o{i}"
        typed = self.rng.random() < 0.3
        self.act.pins.append(f"pin {out}" + (" : Rec;" if typed else ";"))
        return (ins if inputs > 1 else ins[0]), out, 1

    def async_pair(self) -> tuple:
        entry, mid, _ = self.action(self.behavior(), sync=False)
        entry2, out, _ = self.action(f"s{self.rng.randrange(SETTERS)}")
        self.edge(mid, entry2)
        return entry, out, 2

    def call(self) -> tuple:
        i = next(self.ids)
        sub = _Activity(f"Sub{i}", " (in x: Rec, out y: Rec)")
        if self.rng.random() < 0.3:
            sub.header = " single" + sub.header
        sub.decls += ["param x;", "param y;", f"action B{i} calls {self.behavior()};"]
        sub.pins += ["pin x.out;", f"pin B{i}.in;", f"pin B{i}.out;", "pin y.in;"]
        sub.edges += [f"edge x.out -> B{i}.in;", f"edge B{i}.out -> y.in;"]
        self.subs.append(sub)
        self.nodes += 3
        entry, out, _ = self.action(sub.name)
        return entry, out, 4

    def decision(self, budget: int) -> tuple:
        i = next(self.ids)
        d, m = f"D{i}", f"M{i}"
        self.node(f"decision {d};")
        self.node(f"merge {m};")
        used = 2
        n = 3 if budget >= 5 and self.rng.random() < 0.3 else 2
        if n == 3:
            a, b = self.rng.sample(range(SETTERS), 2)
            guards = [f"k = {a}", f"k = {b}", "otherwise"]
        elif self.rng.random() < 0.5:
            v = self.rng.randrange(1, SETTERS + 2)
            guards = [f"k < {v}", f"k >= {v}"]
        else:
            guards = [f"k = {self.rng.randrange(SETTERS)}", "otherwise"]
        empty_left = 1
        for g in guards:
            share = max(0, (budget - used) // n)
            allow_empty = empty_left > 0 and self.rng.random() < 0.4
            res = self.seq(share, nonempty=not allow_empty)
            if res is None:
                empty_left -= 1
                self.edge(d, m, g)
                continue
            entry, out, k = res
            used += k
            self.edge(d, entry, g)
            self.edge(out, m)
        return d, m, used

    def fork(self, budget: int, force_shortcut: bool = False) -> tuple:
        i = next(self.ids)
        f = f"F{i}"
        self.node(f"fork {f};")
        used = 1
        explicit = force_shortcut or self.rng.random() < 0.6
        reserve = 2 if explicit else 1
        n = 2
        exits = []
        for _ in range(n):
            share = max(1, (budget - used - reserve) // n)
            entry, out, k = self.seq(share, nonempty=True, lead_action=True)
            used += k
            self.edge(f, entry)
            exits.append(out)
        if explicit:
            j = f"J{i}"
            spec = ""
            pins = [e for e in exits if "." in e]
            if len(pins) == 2 and self.rng.random() < 0.4:
                a, b = (p.split(".")[1] for p in pins)
                spec = f" when {a}.k {self.rng.choice(['=', '<>', '<=', '>='])} {b}.k"
            self.node(f"join {j}{spec};")
            for e in exits:
                self.edge(e, j)
            if force_shortcut:
                self.edge(f, j)
            entry, out, _ = self.action()
            self.edge(j, entry)
            used += 2
        else:
            entry, out, _ = self.action(inputs=n)
            for e, p in zip(exits, entry):
                self.edge(e, p)
            used += 1
        return f, out, used

    def block(self, budget: int) -> tuple:
        choices = ["action"] * 3
        if budget >= 2:
            choices.append("async")
        if budget >= 4:
            choices += ["decision", "call"]
        if budget >= 5:
            choices += ["fork", "fork"]
        kind = self.rng.choice(choices)
        if kind == "async":
            return self.async_pair()
        if kind == "call":
            return self.call()
        if kind == "decision":
            return self.decision(budget)
        if kind == "fork":
            return self.fork(budget)
        return self.action()

    def seq(self, budget: int, nonempty: bool = False, lead_action: bool = False,
            more: float = 0.6) -> Optional[tuple]:
        blocks = []
        used = 0
        if lead_action or (nonempty and budget >= 1):
            blocks.append(self.action())
            used += 1
        while budget - used >= 1 and self.rng.random() < more:
            b = self.block(budget - used)
            blocks.append(b)
            used += b[2]
        if not blocks:
            return None
        for (_, out, _), (entry, _, _) in zip(blocks, blocks[1:]):
            self.edge(out, entry)
        return blocks[0][0], blocks[-1][1], used


def random_valid_diagram(seed: int, size_bound: int = 12, violate: Optional[str] = None) -> GeneratedDiagram:
    """Generate a diagram with at most ``size_bound`` non-pin nodes.

    With ``violate="E1"`` or ``violate="E2"`` one construct that breaks the
    corresponding structural rule is inserted instead.
    """
    if size_bound < 4:
        raise ValueError("size_bound must be at least 4")
    # block sizes are only estimated up front; redraw until the bound holds
    for attempt in range(100):
        gen = _generate(random.Random(f"{seed}:{attempt}"), seed, size_bound, violate)
        if gen.node_count <= size_bound:
            return gen
    raise RuntimeError(f"could not fit a diagram into {size_bound} nodes")


def _generate(rng: random.Random, seed: int, size_bound: int, violate: Optional[str]) -> GeneratedDiagram:
    b = _Builder(rng, violate)
    with_input = rng.random() < 0.3
    ending = rng.choice(["finalActivity", "finalFlow", "param"])
    header = []
    if with_input:
        header.append("in x: Rec")
    if ending == "param":
        header.append("out y: Rec")
    main = _Activity("Main", f" ({', '.join(header)})" if header else "")
    b.act = main
    if with_input:
        b.node("param x;")
        main.pins.append("pin x.out;")
        start = "x.out"
        args = [{"k": rng.randrange(SETTERS)}]
    else:
        b.node("initial start;")
        main.pins.append("pin start.out;")
        start = "start.out"
        args = []
    budget = size_bound - 2
    if violate == "E1":
        b.node("merge L1;")
        b.node("decision L2;")
        b.edge(start, "L1")
        b.edge("L1", "L2")
        b.edge("L2", "L1", "k = 0")
        budget -= 2
    first_entry, out, used = b.action(f"s{rng.randrange(SETTERS)}")
    if violate == "E1":
        b.edge("L2", first_entry, "otherwise")
    else:
        b.edge(start, first_entry)
    budget -= used
    if violate == "E2" and budget >= 5:
        entry, out2, k = b.fork(budget, force_shortcut=True)
        b.edge(out, entry)
        out = out2
        budget -= k
    rest = b.seq(budget, more=0.9)
    if rest is not None:
        entry, out2, _ = rest
        b.edge(out, entry)
        out = out2
    if ending == "param":
        b.node("param y;")
        main.pins.append("pin y.in;")
        b.edge(out, "y.in")
    else:
        b.node(f"{ending} end;")
        main.pins.append("pin end.in;")
        b.edge(out, "end.in")
    lines = [f"behavior s{i} = set(k={i});" for i in range(SETTERS)]
    lines += ["behavior inc = add(k=1);", "behavior idt = identity;", ""]
    text = "\n".join(lines) + "\n" + main.render() + "".join("\n" + s.render() for s in b.subs)
    return GeneratedDiagram(seed, text, parse_activity(text), "Main", args, b.nodes)
