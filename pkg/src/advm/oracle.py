"""Reference interpreter with offer semantics.

Works directly on :class:`ActivityModel` without compiling paths. Tokens
rest at output pins (or in fork buffers) and are only *offered* downstream;
they move when an acceptor (an action, a final node or an output parameter)
takes a complete set of offers at once. Used to cross-check the virtual
machine by comparing essential traces.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from itertools import count, product
from typing import Any, Mapping, Optional, Sequence

from .behaviors import OpaqueBehaviorBinding
from .errors import AdvmError, ArgumentTypeMismatch, ArityMismatch, BehaviorArityMismatch, BehaviorUnbound
from .guard import Otherwise, eval_guard, eval_join_criteria, normalize_record, variables
from .model import ActivityModel, EdgeDef, NodeKind
from .runtime import EventKind, RunResult, Trace, resolve_behaviors


@dataclass(eq=False)
class _Tok:
    id: int
    type: Optional[str]
    value: dict
    origins: frozenset
    arrival: int

    @property
    def is_control(self) -> bool:
        return self.type is None

    def info(self) -> dict:
        return {"token": self.id, "type": self.type, "value": dict(self.value),
                "origins": sorted(self.origins)}


# An offer leaf: token, route from its resting place to the acceptor, and the
# place it rests in (("pin", name) or ("buf", fork, edge)).
Leaf = tuple


class _Interpreter:
    def __init__(self, activities: Mapping[str, ActivityModel],
                 behaviors: Mapping[str, OpaqueBehaviorBinding], seed: int):
        self.activities = activities
        self.behaviors = behaviors
        self.rng = random.Random(seed)
        self.trace = Trace()
        self.tok_ids = count(1)
        self.firing_ids = count(1)
        self.arrivals = count(1)
        self.instance_ids = count(0)
        self.blocked = False


class _Instance:
    def __init__(self, interp: _Interpreter, model: ActivityModel, scope: str):
        self.ip = interp
        self.m = model
        self.scope = scope
        self.name = f"{model.name}#{next(interp.instance_ids)}"
        self.rest: dict[Any, list[_Tok]] = {}
        self.active = True
        self.is_final = any(n.kind == NodeKind.ACTIVITY_FINAL for n in model.nodes)
        self.out_pins = {}
        for p in model.parameters:
            if p.direction == "out":
                node = next(n for n in model.nodes
                            if n.kind == NodeKind.PARAMETER and n.parameter == p.name)
                pin = next(n for n in model.nodes
                           if n.kind == NodeKind.INPUT_PIN and n.owner == node.name)
                self.out_pins[p.name] = pin.name
        interp.trace.emit(EventKind.ACTIVITY_ACTIVATED, instance=self.name, activity=model.name)

    # -- tokens ---------------------------------------------------------------

    def new_token(self, place, type_, value, origins, firing=None) -> _Tok:
        t = _Tok(next(self.ip.tok_ids), type_, dict(value or {}) if type_ else {},
                 frozenset(origins), next(self.ip.arrivals))
        self.rest.setdefault(place, []).append(t)
        payload = {"instance": self.name, "queue": place[1], **t.info()}
        if firing is not None:
            payload["firing"] = firing
        self.ip.trace.emit(EventKind.TOKEN_CREATED, **payload)
        return t

    def start(self, args: Sequence[Any], origin: int) -> None:
        ins = [p for p in self.m.parameters if p.direction == "in"]
        initials = [n for n in self.m.nodes if n.kind == NodeKind.INITIAL]
        args = list(args)
        if not ins and initials:
            if args:
                raise ArityMismatch(f"{self.m.name} takes no arguments")
            for node in initials:
                for pin in self._pins(node.name, NodeKind.OUTPUT_PIN):
                    self.new_token(("pin", pin), None, None, {origin})
            return
        if len(args) != len(ins):
            raise ArityMismatch(f"{self.m.name} takes {len(ins)} arguments, got {len(args)}")
        for p, arg in zip(ins, args):
            node = next(n for n in self.m.nodes if n.kind == NodeKind.PARAMETER and n.parameter == p.name)
            pin = self._pins(node.name, NodeKind.OUTPUT_PIN)[0]
            if arg is None:
                if p.type is not None:
                    raise ArgumentTypeMismatch(p.name)
                self.new_token(("pin", pin), None, None, {origin})
            elif not isinstance(arg, Mapping):
                raise ArgumentTypeMismatch(p.name)
            else:
                self.new_token(("pin", pin), p.type or "Object", normalize_record(arg), {origin})

    def _pins(self, owner: str, kind: NodeKind) -> list[str]:
        return [n.name for n in self.m.nodes if n.kind == kind and n.owner == owner]

    # -- offers ---------------------------------------------------------------

    def edge_passes(self, edge: EdgeDef, tok: _Tok) -> bool:
        if edge.guard is None:
            return True
        if isinstance(edge.guard, Otherwise):
            return not any(eval_guard(e.guard, tok) for e in self.m.outgoing(edge.source)
                           if e is not edge and e.guard is not None
                           and not isinstance(e.guard, Otherwise))
        return bool(eval_guard(edge.guard, tok))

    def route_ok(self, tok: _Tok, chain: tuple) -> bool:
        return all(self.edge_passes(e, tok) for e in chain)

    def offers(self, edge: EdgeDef, chain: tuple = ()) -> list[list[Leaf]]:
        chain = (edge,) + chain
        src = self.m.node(edge.source)
        if src.is_pin:
            place = ("pin", src.name)
            return [[(t, chain, place)] for t in self.rest.get(place, ()) if self.route_ok(t, chain)]
        if src.kind == NodeKind.FORK:
            place = ("buf", src.name, edge.name)
            out = [[(t, chain, place)] for t in self.rest.get(place, ()) if self.route_ok(t, chain)]
            for e in self.m.incoming(src.name):
                out += self.offers(e, chain)
            return out
        if src.kind in (NodeKind.MERGE, NodeKind.DECISION):
            out = []
            for e in self.m.incoming(src.name):
                out += self.offers(e, chain)
            return out
        # join: one offer from every incoming edge
        parts = [self.offers(e, chain) for e in self.m.incoming(src.name)]
        out = []
        for combo in product(*parts):
            leaves = [leaf for offer in combo for leaf in offer]
            if len({id(leaf[0]) for leaf in leaves}) != len(leaves):
                continue
            if src.join_spec is not None and not self._spec_holds(src.join_spec, leaves):
                continue
            out.append(leaves)
        return out

    def _spec_holds(self, spec, leaves: list[Leaf]) -> bool:
        binding = {}
        for var in variables(spec):
            hits = [leaf[0] for leaf in leaves if leaf[1][0].source == var]
            if not hits:
                hits = [leaf[0] for leaf in leaves
                        if self.m.node(leaf[1][0].source).short_name == var]
            if len(hits) == 1:
                binding[var] = hits[0]
        return eval_join_criteria(spec, binding)

    def best_offer(self, pin: str, taken: set) -> Optional[list[Leaf]]:
        incoming = self.m.incoming(pin)
        if not incoming:
            return None
        cands = [o for o in self.offers(incoming[0]) if not ({id(l[0]) for l in o} & taken)]
        if not cands:
            return None
        return min(cands, key=lambda o: (len(o), sorted(l[0].arrival for l in o)))

    def viable(self, tok: _Tok, edge: EdgeDef) -> bool:
        if not self.edge_passes(edge, tok):
            return False
        target = self.m.node(edge.target)
        if target.is_pin:
            return True
        return any(self.viable(tok, e) for e in self.m.outgoing(target.name))

    def accept(self, offer: list[Leaf]) -> list[_Tok]:
        """Take the offered tokens, leave fork copies behind, collapse control."""
        toks = []
        for tok, route, place in offer:
            self.rest[place].remove(tok)
            toks.append(tok)
            for edge in route[1:]:
                fork = self.m.node(edge.source)
                if fork.kind != NodeKind.FORK:
                    continue
                for other in self.m.outgoing(fork.name):
                    if other is not edge and self.viable(tok, other):
                        copy = _Tok(next(self.ip.tok_ids), tok.type, dict(tok.value),
                                    tok.origins, next(self.ip.arrivals))
                        self.rest.setdefault(("buf", fork.name, other.name), []).append(copy)
        if len(toks) > 1:
            if all(t.is_control for t in toks):
                origins = frozenset().union(*(t.origins for t in toks))
                return [_Tok(next(self.ip.tok_ids), None, {}, origins, next(self.ip.arrivals))]
            return [t for t in toks if not t.is_control]
        return toks

    # -- reactions ------------------------------------------------------------

    def reactions(self) -> list:
        out = []
        for node in self.m.nodes:
            if node.kind == NodeKind.ACTION:
                if node.name in self.waiting:
                    continue
                pins = self._pins(node.name, NodeKind.INPUT_PIN)
                taken: set = set()
                chosen = []
                for pin in pins:
                    offer = self.best_offer(pin, taken)
                    if offer is None:
                        break
                    taken |= {id(l[0]) for l in offer}
                    chosen.append(offer)
                else:
                    if pins:
                        out.append(lambda n=node: self.fire(n))
            elif node.kind in (NodeKind.FLOW_FINAL, NodeKind.ACTIVITY_FINAL):
                for pin in self._pins(node.name, NodeKind.INPUT_PIN):
                    if self.best_offer(pin, set()) is not None:
                        out.append(lambda n=node, p=pin: self.final(n, p))
                        break
            elif node.kind == NodeKind.PARAMETER:
                for pin in self._pins(node.name, NodeKind.INPUT_PIN):
                    if self.best_offer(pin, set()) is not None:
                        out.append(lambda p=pin: self.hold(p))
        if (not self.is_final and self.out_pins
                and all(self.rest.get(("hold", p)) for p in self.out_pins.values())):
            out.append(self.complete)
        return out

    def fire(self, node) -> None:
        ip = self.ip
        consumed = []
        taken: set = set()
        for pin in self._pins(node.name, NodeKind.INPUT_PIN):
            offer = self.best_offer(pin, taken)
            taken |= {id(l[0]) for l in offer}
            consumed += self.accept(offer)
        firing = next(ip.firing_ids)
        ip.trace.emit(EventKind.ACTION_STARTED, instance=self.name, scope=self.scope,
                      action=node.name, behavior=node.behavior, firing=firing,
                      consumed=[t.info() for t in consumed])
        args = [dict(t.value) for t in consumed if not t.is_control]
        types = [t.type for t in consumed if not t.is_control]
        outs = self._pins(node.name, NodeKind.OUTPUT_PIN)
        sub = self.ip.activities.get(node.behavior)
        binding = self.ip.behaviors.get(node.behavior)
        if sub is None and binding is None:
            raise BehaviorUnbound(node.behavior)
        if not node.is_synchronous:
            for pin in outs:
                self.new_token(("pin", pin), None, None, {firing}, firing)
            if sub is not None:
                self._call(sub, args, firing)
            else:
                binding.execute(args, len(outs))
            return
        if sub is not None:
            child = self._call(sub, args, firing)
            if child.active:
                self.waiting.add(node.name)
                ip.blocked = True
                return
            values = child.outputs()
        else:
            values = binding.execute(args, len(outs))
        if len(values) != len(outs):
            raise BehaviorArityMismatch(node.name)
        for pin, value in zip(outs, values):
            ptype = self.m.node(pin).pin_type
            if ptype is not None:
                type_, value = ptype, value or {}
            elif value is None:
                type_ = None
            else:
                type_ = types[0] if types else "Object"
            self.new_token(("pin", pin), type_, value, {firing}, firing)

    def _call(self, model: ActivityModel, args: list, firing: int) -> "_Instance":
        child = _Instance(self.ip, model, f"{self.scope}/{model.name}")
        self.ip.trace.emit(EventKind.SUB_ACTIVITY_INVOKED, instance=self.name, firing=firing,
                           child=child.name)
        child.start(args, firing)
        child.run()
        return child

    def final(self, node, pin: str) -> None:
        self.accept(self.best_offer(pin, set()))
        if node.kind == NodeKind.ACTIVITY_FINAL:
            self.active = False
            self.rest = {k: v for k, v in self.rest.items() if k[0] == "hold"}
            self.ip.trace.emit(EventKind.ACTIVITY_COMPLETED, instance=self.name, via="final")

    def hold(self, pin: str) -> None:
        toks = self.accept(self.best_offer(pin, set()))
        self.rest.setdefault(("hold", pin), []).extend(toks)

    def complete(self) -> None:
        self.active = False
        self.ip.trace.emit(EventKind.ACTIVITY_COMPLETED, instance=self.name, via="parameters")

    def outputs(self) -> list:
        out = []
        for pin in self.out_pins.values():
            held = self.rest.get(("hold", pin))
            out.append(None if not held or held[0].is_control else dict(held[0].value))
        return out

    def remaining(self) -> int:
        return sum(len(v) for k, v in self.rest.items() if k[0] != "hold")

    def run(self) -> str:
        self.waiting: set = set()
        while self.active:
            enabled = self.reactions()
            if not enabled:
                if self.remaining() or self.waiting:
                    return "quiescent-stuck"
                self.active = False
                self.ip.trace.emit(EventKind.ACTIVITY_COMPLETED, instance=self.name, via="quiescence")
                break
            enabled[self.ip.rng.randrange(len(enabled))]()
        return "completed"


def oracle_run(
    diagram: Mapping[str, ActivityModel],
    activity: str,
    args: Sequence[Any] = (),
    seed: int = 0,
    behaviors: Optional[Mapping[str, OpaqueBehaviorBinding]] = None,
) -> RunResult:
    """Execute ``activity`` with the reference interpreter."""
    ip = _Interpreter(diagram, resolve_behaviors(diagram, behaviors), seed)
    inst = _Instance(ip, diagram[activity], activity)
    try:
        inst.start(args, 0)
        status = inst.run()
    except AdvmError as exc:
        ip.trace.emit(EventKind.EXECUTION_ERROR, error=type(exc).__name__, message=str(exc))
        return RunResult("error", ip.trace, [], f"{type(exc).__name__}: {exc}")
    if ip.blocked and status == "completed" and inst.remaining():
        status = "quiescent-stuck"
    return RunResult(status, ip.trace, inst.outputs())
