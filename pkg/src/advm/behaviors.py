"""Opaque behavior bindings and the built-in stub library.

A behavior body receives the list of input record values (control inputs are
dropped) and the number of output pins, and returns one value per output pin:
a record ``dict`` for a data token or ``None`` for a control token.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from typing import Callable, Mapping, Optional, Sequence

from .errors import BehaviorArityMismatch, ExecutionError
from .guard import normalize_record, normalize_scalar
from .model import BehaviorDecl

Body = Callable[[list, int], list]


@dataclass(frozen=True)
class OpaqueBehaviorBinding:
    name: str
    body: Body
    arity_in: Optional[int] = None
    arity_out: Optional[int] = None

    def execute(self, inputs: Sequence[dict], n_out: int) -> list[Optional[dict]]:
        if self.arity_in is not None and len(inputs) != self.arity_in:
            raise BehaviorArityMismatch(
                f"{self.name} expects {self.arity_in} inputs, got {len(inputs)}")
        if self.arity_out is not None and n_out != self.arity_out:
            raise BehaviorArityMismatch(
                f"{self.name} produces {self.arity_out} outputs, action has {n_out} output pins")
        outputs = list(self.body([dict(v) for v in inputs], n_out))
        if len(outputs) != n_out:
            raise BehaviorArityMismatch(
                f"{self.name} returned {len(outputs)} values for {n_out} output pins")
        return [normalize_record(o) for o in outputs]


def _merged(inputs: list) -> Optional[dict]:
    if not inputs:
        return None
    out: dict = {}
    for rec in inputs:
        out.update(rec)
    return out


def identity() -> Body:
    """Merge the input records left to right and copy the result to every output."""
    return lambda inputs, n: [_merged(inputs) for _ in range(n)]


def const(**fields) -> Body:
    record = {k: normalize_scalar(v) for k, v in fields.items()}
    return lambda inputs, n: [dict(record) for _ in range(n)]


def setter(**fields) -> Body:
    """Merged input with ``fields`` overwritten."""
    updates = {k: normalize_scalar(v) for k, v in fields.items()}

    def body(inputs, n):
        rec = _merged(inputs) or {}
        rec.update(updates)
        return [dict(rec) for _ in range(n)]

    return body


def adder(**deltas) -> Body:
    """Merged input with numeric ``deltas`` added to existing fields."""
    steps = {k: normalize_scalar(v) for k, v in deltas.items()}

    def body(inputs, n):
        rec = _merged(inputs) or {}
        for key, delta in steps.items():
            if key not in rec:
                raise ExecutionError(f"add: field {key!r} missing from input")
            if isinstance(rec[key], bool) or not isinstance(rec[key], (int, Decimal)):
                raise ExecutionError(f"add: field {key!r} is not numeric")
            rec[key] = rec[key] + delta
        return [dict(rec) for _ in range(n)]

    return body


def control() -> Body:
    return lambda inputs, n: [None] * n


STUBS: dict[str, Callable[..., Body]] = {
    "identity": identity,
    "const": const,
    "set": setter,
    "add": adder,
    "control": control,
}


def bind_stub(name: str, stub: str, *args, **kwargs) -> OpaqueBehaviorBinding:
    try:
        factory = STUBS[stub]
    except KeyError:
        raise ExecutionError(f"unknown stub {stub!r}; available: {', '.join(sorted(STUBS))}") from None
    if args:
        raise ExecutionError(f"stub {stub!r} takes keyword arguments only")
    return OpaqueBehaviorBinding(name, factory(**kwargs))


def bindings_from_decls(decls: Mapping[str, BehaviorDecl]) -> dict[str, OpaqueBehaviorBinding]:
    return {d.name: bind_stub(d.name, d.stub, *d.args, **dict(d.kwargs)) for d in decls.values()}
