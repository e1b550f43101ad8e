"""Token-flow execution of compiled activities.

Engines, actions, final nodes and activities are reactions. The
:class:`VirtualMachine` repeatedly picks one enabled reaction, chosen by a
seeded RNG among all enabled ones, and runs it. Every state change is
recorded as a :class:`TraceEvent`.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from itertools import count, product
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

from .behaviors import OpaqueBehaviorBinding, bindings_from_decls
from .compiler import (
    ActivityFactory,
    ActivityRuntime,
    IntermediateNode,
    Path,
    PullEngine,
    PushEngine,
    Queue,
    StableNode,
)
from .errors import (
    AdvmError,
    ArgumentTypeMismatch,
    ArityMismatch,
    BehaviorArityMismatch,
    BehaviorUnbound,
    EvaluationError,
    ExclusivityViolated,
    ExecutionError,
    NotActive,
    RaceDetected,
)
from .guard import eval_guard, eval_join_criteria, normalize_record
from .model import ActivityModel, Diagram, NodeKind


class EventKind(str, Enum):
    ACTIVITY_ACTIVATED = "ActivityActivated"
    ACTIVITY_INVOKED = "ActivityInvoked"
    TOKEN_CREATED = "TokenCreated"
    TOKEN_MOVED = "TokenMoved"
    GROUP_FORMED = "GroupFormed"
    ACTION_STARTED = "ActionStarted"
    ACTION_COMPLETED = "ActionCompleted"
    SUB_ACTIVITY_INVOKED = "SubActivityInvoked"
    TOKEN_DELETED = "TokenDeleted"
    ACTIVITY_COMPLETED = "ActivityCompleted"
    ACTIVITY_TERMINATED = "ActivityTerminated"
    EXECUTION_ERROR = "ExecutionError"


@dataclass(eq=False)
class TokenGroup:
    id: int
    members: list["Token"] = field(default_factory=list)


@dataclass(eq=False)
class Token:
    id: int
    type: Optional[str]
    value: dict
    locus: Optional[Queue] = None
    group: Optional[TokenGroup] = None
    origins: frozenset = frozenset()
    arrival: int = 0

    @property
    def is_control(self) -> bool:
        return self.type is None

    def __repr__(self) -> str:
        return f"<Token {self.id} {self.type or 'NULL'} {self.value}>"


def _json_default(obj: Any) -> Any:
    if isinstance(obj, Decimal):
        return str(obj)
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"not serializable: {obj!r}")


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    kind: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps({"seq": self.seq, "kind": self.kind, "payload": self.payload},
                          sort_keys=True, default=_json_default)


class Trace(list):
    """Ordered list of :class:`TraceEvent` with JSON-lines serialization."""

    def emit(self, kind: EventKind, **payload: Any) -> TraceEvent:
        event = TraceEvent(len(self), kind.value, payload)
        self.append(event)
        return event

    def of_kind(self, kind: EventKind) -> list[TraceEvent]:
        return [e for e in self if e.kind == kind.value]

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self)


def token_info(token: Token) -> dict:
    return {
        "token": token.id,
        "type": token.type,
        "value": dict(token.value),
        "origins": sorted(token.origins),
        "queue": token.locus.name if token.locus is not None else None,
    }


@dataclass
class RunResult:
    status: str  # "completed" | "quiescent-stuck" | "error"
    trace: Trace
    outputs: list = field(default_factory=list)
    error: Optional[str] = None
    steps: int = 0


@dataclass
class _Reaction:
    label: tuple
    run: Callable[[], bool]


@dataclass
class _AsyncJob:
    firing: int
    runtime: ActivityRuntime
    action: StableNode
    binding: OpaqueBehaviorBinding
    args: list


class VirtualMachine:
    """Deterministic scheduler for a tree of activity runtimes."""

    def __init__(
        self,
        activities: Mapping[str, ActivityModel],
        behaviors: Optional[Mapping[str, OpaqueBehaviorBinding]] = None,
        seed: int = 0,
        factory: Optional[ActivityFactory] = None,
        check_races: bool = True,
        step_hook: Optional[Callable[["VirtualMachine"], None]] = None,
        max_steps: int = 100_000,
    ):
        self.factory = factory or ActivityFactory(activities)
        self.behaviors = dict(behaviors or {})
        self.rng = random.Random(seed)
        self.trace = Trace()
        self.check_races = check_races
        self.step_hook = step_hook
        self.max_steps = max_steps
        self.roots: list[ActivityRuntime] = []
        self.pending: list[_AsyncJob] = []
        self.detached: list[tuple[ActivityRuntime, int, ActivityRuntime, StableNode]] = []
        self.max_candidates = 0
        self.steps = 0
        self._token_ids = count(1)
        self._firing_ids = count(1)
        self._group_ids = count(1)
        self._arrivals = count(1)
        self._instances = count(0)

    # -- instance management ----------------------------------------------

    def create(self, activity: str | ActivityModel, activate: bool = True) -> ActivityRuntime:
        rt = self.factory.create_activity(activity, activate=False)
        if not rt.instance:
            self._adopt(rt, rt.name)
            self.roots.append(rt)
        if activate and not rt.is_active:
            rt.activate()
        return rt

    def _adopt(self, rt: ActivityRuntime, scope: str) -> None:
        rt.instance = f"{rt.name}#{next(self._instances)}"
        rt.scope = scope
        rt.on_activate = self._on_activate

    def _on_activate(self, rt: ActivityRuntime) -> None:
        self.trace.emit(EventKind.ACTIVITY_ACTIVATED, instance=rt.instance, activity=rt.name)

    def runtimes(self) -> list[ActivityRuntime]:
        """All runtimes in creation order, parents before children."""
        out: list[ActivityRuntime] = []

        def walk(rt: ActivityRuntime) -> None:
            out.append(rt)
            for child in rt.children:
                walk(child)

        for root in self.roots:
            walk(root)
        return out

    # -- tokens -------------------------------------------------------------

    def _new_token(self, rt: ActivityRuntime, queue: Queue, type_: Optional[str],
                   value: Optional[dict], origins: Iterable[int], firing: Optional[int] = None) -> Token:
        token = Token(next(self._token_ids), type_, dict(value or {}) if type_ else {},
                      queue, None, frozenset(origins), next(self._arrivals))
        queue.tokens.append(token)
        payload = {"instance": rt.instance, **token_info(token)}
        if firing is not None:
            payload["firing"] = firing
        self.trace.emit(EventKind.TOKEN_CREATED, **payload)
        return token

    def _delete_token(self, rt: ActivityRuntime, token: Token) -> None:
        queue = token.locus
        if queue is not None and token in queue.tokens:
            queue.tokens.remove(token)
        self.trace.emit(EventKind.TOKEN_DELETED, instance=rt.instance, token=token.id,
                        queue=queue.name if queue is not None else None)
        token.locus = None

    # -- invocation -------------------------------------------------------

    def set_params(self, rt: ActivityRuntime, args: Sequence[Any] = (), origin: int = 0) -> None:
        """Place the invocation's tokens: control tokens at initial nodes, or
        one data token per input parameter."""
        if not rt.is_active:
            raise NotActive(f"activity {rt.instance} is not active")
        args = list(args)
        inputs = rt.input_parameters()
        initials = rt.nodes_of(NodeKind.INITIAL)
        if not inputs and initials:
            if args:
                raise ArityMismatch(f"{rt.name} takes no arguments, got {len(args)}")
            self.trace.emit(EventKind.ACTIVITY_INVOKED, instance=rt.instance, args=[])
            for node in initials:
                for q in node.outputs:
                    self._new_token(rt, q, None, None, {origin})
            return
        if len(args) != len(inputs):
            raise ArityMismatch(f"{rt.name} takes {len(inputs)} arguments, got {len(args)}")
        checked = []
        for param, arg in zip(inputs, args):
            if arg is None:
                if param.definition.type is not None:
                    raise ArgumentTypeMismatch(f"parameter {param.name}: {param.definition.type} expected, got control")
                checked.append(None)
                continue
            if not isinstance(arg, Mapping):
                raise ArgumentTypeMismatch(f"parameter {param.name}: record expected, got {arg!r}")
            try:
                checked.append(normalize_record(arg))
            except EvaluationError as exc:
                raise ArgumentTypeMismatch(f"parameter {param.name}: {exc}") from None
        self.trace.emit(EventKind.ACTIVITY_INVOKED, instance=rt.instance, args=checked)
        for param, value in zip(inputs, checked):
            param.value = value
            type_ = None if value is None else (param.definition.type or "Object")
            self._new_token(rt, param.queue, type_, value, {origin})

    def get_params(self, rt: ActivityRuntime) -> list:
        out = []
        for param in rt.output_parameters():
            tokens = param.queue.tokens
            value = None if not tokens or tokens[0].is_control else dict(tokens[0].value)
            param.value = value
            out.append(value)
        return out

    def invoke(self, rt: ActivityRuntime, args: Sequence[Any] = ()) -> list:
        """Start ``rt`` with ``args``, run it to quiescence and return its outputs."""
        self.set_params(rt, args)
        self.last_result = self.run_to_quiescence(rt)
        return self.last_result.outputs

    # -- path evaluation -----------------------------------------------------

    def _evaluate_paths(self, token: Token, queue: Queue) -> dict[Path, bool]:
        results = {p: eval_guard(p.pass_rule, token) for p in queue.paths}
        passing = [p for p in queue.paths if results[p]]
        for i, a in enumerate(passing):
            for b in passing[i + 1:]:
                node = _divergence(a, b)
                if isinstance(node, IntermediateNode) and node.kind == NodeKind.DECISION:
                    raise ExclusivityViolated(
                        f"token {token.id} passes two branches of decision {node.name}")
        return results

    # -- reactions -----------------------------------------------------------

    def push_engine_step(self, rt: ActivityRuntime, engine: PushEngine) -> bool:
        queue = engine.queue
        token = next((t for t in queue.tokens if t.id not in engine.examined), None)
        if token is None:
            return False
        results = self._evaluate_paths(token, queue)
        passing = [p for p in engine.paths if results[p]]
        if not passing:
            engine.examined.add(token.id)
            return False
        queue.tokens.remove(token)
        token.locus = None
        copies = []
        for path in passing:
            copy = Token(next(self._token_ids), token.type, dict(token.value), path.end,
                         None, token.origins, next(self._arrivals))
            path.end.tokens.append(copy)
            copies.append(copy)
        self.trace.emit(EventKind.TOKEN_MOVED, instance=rt.instance, token=token.id,
                        source=queue.name, targets=[c.locus.name for c in copies],
                        tokens=[c.id for c in copies])
        return True

    def _pull_refresh(self, engine: PullEngine) -> None:
        for q in engine.sources:
            for t in q.tokens:
                if t.id in engine.seen:
                    continue
                engine.seen.add(t.id)
                results = self._evaluate_paths(t, q)
                ok = {p for p in engine.paths if p.start is q and results[p]}
                if ok:
                    engine.passed[t.id] = (t, ok)
                    engine.dirty = True
        for tid, (t, _) in list(engine.passed.items()):
            if t.locus is None or t not in t.locus.tokens:
                del engine.passed[tid]

    def check_tokens(self, engine: PullEngine) -> Optional[list[Token]]:
        """First token selection satisfying the join criteria.

        Candidates take at most one token per source queue and are tried by
        increasing size, then by arrival order of the chosen tokens.
        """
        options = []
        for q in engine.sources:
            cands = sorted((t for t, _ in engine.passed.values() if t.locus is q),
                           key=lambda t: t.arrival)
            options.append([None, *cands])
        combos = []
        for combo in product(*options):
            chosen = [t for t in combo if t is not None]
            if chosen:
                combos.append((len(chosen), sorted(t.arrival for t in chosen), combo))
        combos.sort(key=lambda c: (c[0], c[1]))

        def admits(var, tok) -> bool:
            return var.path is None or var.path in engine.passed[tok.id][1]

        for _, _, combo in combos:
            binding = {engine.var_names[q]: t for q, t in zip(engine.sources, combo)}
            if eval_join_criteria(engine.join_criteria, binding, admits):
                return [t for t in combo if t is not None]
        return None

    def pull_engine_step(self, rt: ActivityRuntime, engine: PullEngine) -> bool:
        self._pull_refresh(engine)
        if not engine.dirty:
            return False
        engine.dirty = False
        selected = self.check_tokens(engine)
        if selected is None:
            return False
        target = engine.queue
        for t in selected:
            engine.passed.pop(t.id, None)
        if all(t.is_control for t in selected):
            origins: set = set()
            for t in selected:
                origins |= t.origins
                self._delete_token(rt, t)
            self._new_token(rt, target, None, None, origins)
        else:
            group = TokenGroup(next(self._group_ids))
            for t in selected:
                if t.is_control:
                    self._delete_token(rt, t)
                    continue
                source = t.locus
                source.tokens.remove(t)
                t.locus = None
                moved = Token(next(self._token_ids), t.type, dict(t.value), target, group,
                              t.origins, next(self._arrivals))
                target.tokens.append(moved)
                group.members.append(moved)
                self.trace.emit(EventKind.TOKEN_MOVED, instance=rt.instance, token=t.id,
                                source=source.name, targets=[target.name], tokens=[moved.id])
            self.trace.emit(EventKind.GROUP_FORMED, instance=rt.instance, group=group.id,
                            queue=target.name, tokens=[t.id for t in group.members])
        engine.dirty = True
        return True

    def _action_enabled(self, node: StableNode) -> bool:
        return node.waiting is None and bool(node.inputs) and all(q.tokens for q in node.inputs)

    def action_step(self, rt: ActivityRuntime, node: StableNode) -> bool:
        if not self._action_enabled(node):
            return False
        consumed: list[Token] = []
        for q in node.inputs:
            head = q.tokens[0]
            taken = list(head.group.members) if head.group is not None else [head]
            for t in taken:
                q.tokens.remove(t)
            consumed.extend(taken)
        firing = next(self._firing_ids)
        args = [dict(t.value) for t in consumed if not t.is_control]
        self.trace.emit(EventKind.ACTION_STARTED, instance=rt.instance, scope=rt.scope,
                        action=node.name, behavior=node.behavior, firing=firing,
                        consumed=[token_info(t) for t in consumed])
        for t in consumed:
            t.locus = None
        name = node.behavior
        sub = self.factory.activities.get(name)
        binding = self.behaviors.get(name)
        if sub is None and binding is None:
            raise BehaviorUnbound(f"action {node.name}: behavior {name!r} is not bound")
        data_types = [t.type for t in consumed if not t.is_control]
        if node.is_synchronous:
            if sub is not None:
                child = self._spawn(rt, node, firing, sub, args)
                node.waiting = (child, firing, data_types)
            else:
                outputs = binding.execute(args, len(node.outputs))
                self._produce(rt, node, firing, outputs, data_types)
                self.trace.emit(EventKind.ACTION_COMPLETED, instance=rt.instance,
                                action=node.name, firing=firing)
            return True
        if sub is not None:
            child = self._spawn(rt, node, firing, sub, args)
            self.detached.append((child, firing, rt, node))
        else:
            self.pending.append(_AsyncJob(firing, rt, node, binding, args))
        for q in node.outputs:
            self._new_token(rt, q, None, None, {firing}, firing)
        return True

    def _spawn(self, rt: ActivityRuntime, node: StableNode, firing: int,
               definition: ActivityModel, args: list) -> ActivityRuntime:
        child = self.factory.create_activity(definition, activate=False)
        if not child.instance:
            self._adopt(child, f"{rt.scope}/{definition.name}")
        if child not in rt.children:
            rt.children.append(child)
        child.parent_firing = firing
        if not child.is_active and child.token_count():
            # a pooled single-mode instance still holds its previous results
            for q in child.queues:
                for t in list(q.tokens):
                    self._delete_token(child, t)
        self.trace.emit(EventKind.SUB_ACTIVITY_INVOKED, instance=rt.instance, action=node.name,
                        firing=firing, child=child.instance)
        if not child.is_active:
            child.activate()
        self.set_params(child, args, origin=firing)
        return child

    def _produce(self, rt: ActivityRuntime, node: StableNode, firing: int,
                 outputs: Sequence[Optional[dict]], data_types: list) -> None:
        if len(outputs) != len(node.outputs):
            raise BehaviorArityMismatch(
                f"action {node.name} has {len(node.outputs)} output pins, got {len(outputs)} values")
        for q, value in zip(node.outputs, outputs):
            if q.pin_type is not None:
                type_, value = q.pin_type, value or {}
            elif value is None:
                type_ = None
            else:
                type_ = data_types[0] if data_types else "Object"
            self._new_token(rt, q, type_, value, {firing}, firing)

    def completion_step(self, rt: ActivityRuntime, node: StableNode) -> bool:
        child, firing, data_types = node.waiting
        if child.is_active:
            return False
        node.waiting = None
        self._produce(rt, node, firing, self.get_params(child), data_types)
        self.trace.emit(EventKind.ACTION_COMPLETED, instance=rt.instance, action=node.name,
                        firing=firing)
        return True

    def flow_final_step(self, rt: ActivityRuntime, node: StableNode) -> bool:
        queue = next((q for q in node.inputs if q.tokens), None)
        if queue is None:
            return False
        head = queue.tokens[0]
        for t in (list(head.group.members) if head.group is not None else [head]):
            self._delete_token(rt, t)
        return True

    def activity_final_step(self, rt: ActivityRuntime, node: StableNode) -> bool:
        if not any(q.tokens for q in node.inputs):
            return False
        rt.is_active = False
        keep = {p.queue for p in rt.output_parameters()}
        for q in rt.queues:
            if q not in keep:
                for t in list(q.tokens):
                    self._delete_token(rt, t)
        self.trace.emit(EventKind.ACTIVITY_COMPLETED, instance=rt.instance, via="final",
                        node=node.name)
        stack = list(rt.children)
        while stack:
            child = stack.pop(0)
            self.terminate(child)
            stack.extend(child.children)
        return True

    def activity_process_step(self, rt: ActivityRuntime) -> bool:
        outs = rt.output_parameters()
        if rt.is_final or not outs or not all(p.queue.tokens for p in outs):
            return False
        rt.is_active = False
        self.trace.emit(EventKind.ACTIVITY_COMPLETED, instance=rt.instance, via="parameters")
        return True

    def terminate(self, rt: ActivityRuntime) -> None:
        """Stop ``rt`` unconditionally and delete all of its tokens."""
        changed = rt.is_active or rt.token_count() > 0
        rt.is_active = False
        for q in rt.queues:
            for t in list(q.tokens):
                self._delete_token(rt, t)
        for node in rt.actions():
            node.waiting = None
        if changed:
            self.trace.emit(EventKind.ACTIVITY_TERMINATED, instance=rt.instance)

    def _async_step(self, job: _AsyncJob) -> bool:
        self.pending.remove(job)
        job.binding.execute(job.args, len(job.action.outputs))
        self.trace.emit(EventKind.ACTION_COMPLETED, instance=job.runtime.instance,
                        action=job.action.name, firing=job.firing, detached=True,
                        post_termination=not job.runtime.is_active)
        return True

    def _detached_step(self, entry) -> bool:
        child, firing, rt, node = entry
        self.detached.remove(entry)
        self.trace.emit(EventKind.ACTION_COMPLETED, instance=rt.instance, action=node.name,
                        firing=firing, detached=True, post_termination=not rt.is_active)
        return True

    # -- scheduling ---------------------------------------------------------

    def enabled_reactions(self) -> list[_Reaction]:
        out: list[_Reaction] = []
        for rt in self.runtimes():
            if not rt.is_active:
                continue
            for e in rt.push_engines:
                if any(t.id not in e.examined for t in e.queue.tokens):
                    out.append(_Reaction(("push", rt.instance, e.queue.name),
                                         lambda rt=rt, e=e: self.push_engine_step(rt, e)))
            for e in rt.pull_engines:
                if e.dirty or any(t.id not in e.seen for q in e.sources for t in q.tokens):
                    out.append(_Reaction(("pull", rt.instance, e.queue.name),
                                         lambda rt=rt, e=e: self.pull_engine_step(rt, e)))
            for node in rt.stable_nodes:
                if node.kind == NodeKind.ACTION:
                    if self._action_enabled(node):
                        out.append(_Reaction(("action", rt.instance, node.name),
                                             lambda rt=rt, n=node: self.action_step(rt, n)))
                    elif node.waiting is not None and not node.waiting[0].is_active:
                        out.append(_Reaction(("complete", rt.instance, node.name),
                                             lambda rt=rt, n=node: self.completion_step(rt, n)))
                elif node.kind == NodeKind.FLOW_FINAL and any(q.tokens for q in node.inputs):
                    out.append(_Reaction(("flowFinal", rt.instance, node.name),
                                         lambda rt=rt, n=node: self.flow_final_step(rt, n)))
                elif node.kind == NodeKind.ACTIVITY_FINAL and any(q.tokens for q in node.inputs):
                    out.append(_Reaction(("activityFinal", rt.instance, node.name),
                                         lambda rt=rt, n=node: self.activity_final_step(rt, n)))
            outs = rt.output_parameters()
            if not rt.is_final and outs and all(p.queue.tokens for p in outs):
                out.append(_Reaction(("process", rt.instance),
                                     lambda rt=rt: self.activity_process_step(rt)))
        for entry in self.detached:
            if not entry[0].is_active:
                out.append(_Reaction(("detached", entry[1]), lambda e=entry: self._detached_step(e)))
        for job in self.pending:
            out.append(_Reaction(("async", job.firing), lambda j=job: self._async_step(j)))
        return out

    def remaining_tokens(self, rt: ActivityRuntime) -> int:
        total = 0
        stack = [rt]
        while stack:
            cur = stack.pop()
            if cur is rt or cur.is_active:
                keep = {p.queue for p in cur.output_parameters()}
                total += sum(len(q.tokens) for q in cur.queues if q not in keep)
            stack.extend(cur.children)
        return total

    def run_to_quiescence(self, rt: ActivityRuntime) -> RunResult:
        """Run reactions until ``rt`` deactivates or nothing is enabled."""
        status = None
        error = None
        while status is None:
            if not rt.is_active:
                status = "completed"
                break
            enabled = self.enabled_reactions()
            if not enabled:
                if self.remaining_tokens(rt):
                    status = "quiescent-stuck"
                else:
                    rt.is_active = False
                    self.trace.emit(EventKind.ACTIVITY_COMPLETED, instance=rt.instance,
                                    via="quiescence")
                    status = "completed"
                break
            if self.steps >= self.max_steps:
                error = f"step limit {self.max_steps} reached"
                self.trace.emit(EventKind.EXECUTION_ERROR, error="StepLimit", message=error)
                status = "error"
                break
            reaction = enabled[self.rng.randrange(len(enabled))]
            self.steps += 1
            try:
                reaction.run()
                if self.check_races:
                    self.assert_race_free()
            except AdvmError as exc:
                error = f"{type(exc).__name__}: {exc}"
                self.trace.emit(EventKind.EXECUTION_ERROR, error=type(exc).__name__,
                                message=str(exc), reaction=list(reaction.label))
                status = "error"
                break
            if self.step_hook is not None:
                self.step_hook(self)
        if status == "completed":
            while self.pending:
                try:
                    self._async_step(self.pending[0])
                except AdvmError as exc:
                    error = f"{type(exc).__name__}: {exc}"
                    self.trace.emit(EventKind.EXECUTION_ERROR, error=type(exc).__name__,
                                    message=str(exc))
                    status = "error"
                    break
        return RunResult(status, self.trace, self.get_params(rt), error, self.steps)

    def candidate_engines(self, rt: ActivityRuntime, token: Token) -> list:
        """Engines for which ``token`` is currently a movable candidate."""
        queue = token.locus
        out = []
        engine = queue.engine
        if isinstance(engine, PushEngine):
            try:
                if any(eval_guard(p.pass_rule, token) for p in engine.paths):
                    out.append(engine)
            except EvaluationError:
                pass
        for pe in rt.pull_engines:
            if token.id in pe.passed:
                out.append(pe)
        return out

    def assert_race_free(self) -> None:
        for rt in self.runtimes():
            if not rt.is_active:
                continue
            for q in rt.queues:
                if q.kind.value != "OutputQueue":
                    continue
                for t in q.tokens:
                    n = len(self.candidate_engines(rt, t))
                    self.max_candidates = max(self.max_candidates, n)
                    if n > 1:
                        raise RaceDetected(f"token {t.id} in {q.name} is a candidate of {n} engines")


def _divergence(a: Path, b: Path):
    """Node at which two routes from the same queue first differ."""
    for ea, eb in zip(a.route, b.route):
        if ea is not eb:
            return ea.source
    return None


# ---------------------------------------------------------------------------
# Convenience API
# ---------------------------------------------------------------------------


def activate(rt: ActivityRuntime) -> None:
    rt.activate()


def terminate(vm: VirtualMachine, rt: ActivityRuntime) -> None:
    vm.terminate(rt)


def resolve_behaviors(diagram: Mapping[str, ActivityModel],
                      behaviors: Optional[Mapping[str, OpaqueBehaviorBinding]] = None) -> dict:
    out = {}
    if isinstance(diagram, Diagram):
        out.update(bindings_from_decls(diagram.behaviors))
    out.update(behaviors or {})
    return out


def run_activity(
    diagram: Mapping[str, ActivityModel],
    activity: str,
    args: Sequence[Any] = (),
    seed: int = 0,
    behaviors: Optional[Mapping[str, OpaqueBehaviorBinding]] = None,
    **options: Any,
) -> RunResult:
    """Compile ``activity`` from ``diagram``, invoke it with ``args`` and run it."""
    vm = VirtualMachine(diagram, resolve_behaviors(diagram, behaviors), seed=seed, **options)
    rt = vm.create(activity)
    try:
        vm.set_params(rt, args)
    except ExecutionError as exc:
        vm.trace.emit(EventKind.EXECUTION_ERROR, error=type(exc).__name__, message=str(exc))
        return RunResult("error", vm.trace, [], f"{type(exc).__name__}: {exc}")
    result = vm.run_to_quiescence(rt)
    result.vm = vm
    result.runtime = rt
    return result


def replay_queues(trace: Iterable[TraceEvent]) -> dict[tuple[str, str], list[int]]:
    """Reconstruct queue contents (token ids per ``(instance, queue)``) from a trace."""
    state: dict[tuple[str, str], list[int]] = {}
    where: dict[int, tuple[str, str]] = {}

    def remove(tid: int) -> None:
        key = where.pop(tid, None)
        if key is not None:
            state[key].remove(tid)

    for ev in trace:
        p = ev.payload
        if ev.kind == EventKind.TOKEN_CREATED.value:
            key = (p["instance"], p["queue"])
            state.setdefault(key, []).append(p["token"])
            where[p["token"]] = key
        elif ev.kind == EventKind.TOKEN_MOVED.value:
            remove(p["token"])
            for q, tid in zip(p["targets"], p["tokens"]):
                key = (p["instance"], q)
                state.setdefault(key, []).append(tid)
                where[tid] = key
        elif ev.kind == EventKind.TOKEN_DELETED.value:
            remove(p["token"])
        elif ev.kind == EventKind.ACTION_STARTED.value:
            for c in p["consumed"]:
                remove(c["token"])
    return {k: v for k, v in state.items() if v}


def live_queues(vm: VirtualMachine) -> dict[tuple[str, str], list[int]]:
    out = {}
    for rt in vm.runtimes():
        for q in rt.queues:
            if q.tokens:
                out[(rt.instance, q.name)] = [t.id for t in q.tokens]
    return out
