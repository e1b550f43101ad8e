"""Guard, join-specification and join-criteria expressions.

Grammar (lowest to highest binding)::

    or    := and ("OR" and)*
    and   := not ("AND" not)*
    not   := "NOT" not | cmp
    cmp   := operand (op operand)?
    operand := "(" or ")" | literal | name ("." name)*

A bare name on the left of a comparison is a field of the current token; a
dotted name ``var.field`` is a field of the token bound to ``var``. A bare
single name on the right of a comparison is a string literal, so
``order=approved`` compares against ``"approved"``. A name used without a
comparison is a queue-presence atom (join criteria only).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from itertools import product
from typing import Any, Callable, Iterable, Mapping, Optional, Protocol, Union

from .errors import (
    EvaluationError,
    ExprSyntaxError,
    FieldMissing,
    GuardOnControlToken,
    TypeMismatch,
)

Scalar = Union[bool, int, Decimal, str]

COMPARISON_OPS = ("=", "<>", "<", "<=", ">", ">=")


# ---------------------------------------------------------------------------
# Expression tree
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: bool


@dataclass(frozen=True)
class Otherwise:
    """True iff every sibling guard of the same decision is false."""


@dataclass(frozen=True)
class Lit:
    value: Scalar


@dataclass(frozen=True)
class Field:
    var: Optional[str]
    name: str


@dataclass(frozen=True)
class Var:
    """Presence atom for an output queue.

    ``path`` optionally pins the atom to one compiled route; it is ignored for
    equality and rendering.
    """

    name: str
    path: Any = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Cmp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Not:
    item: "Expr"


@dataclass(frozen=True)
class Or:
    items: tuple


Expr = Union[Const, Otherwise, Lit, Field, Var, Cmp, And, Or, Not]

TRUE = Const(True)
FALSE = Const(False)


def conjoin(items: Iterable[Expr]) -> Expr:
    """AND of ``items`` with ``true`` conjuncts dropped."""
    kept = tuple(i for i in items if i != TRUE)
    if not kept:
        return TRUE
    if len(kept) == 1:
        return kept[0]
    return And(kept)


def disjoin(items: Iterable[Expr]) -> Expr:
    kept = tuple(items)
    if not kept:
        return FALSE
    if len(kept) == 1:
        return kept[0]
    return Or(kept)


# ---------------------------------------------------------------------------
# Lexer / parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>\d+(?:\.\d+)?)
  | (?P<str>"(?:[^"\\]|\\.)*"|'(?:[^'\\]|\\.)*')
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><>|!=|<=|>=|==|=|<|>)
  | (?P<punct>[().-])
    """,
    re.VERBOSE,
)

_KEYWORDS = {"and", "or", "not", "true", "false", "otherwise"}


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), pos))
        pos = m.end()
    toks.append(_Tok("eof", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def keyword(self, word: str) -> bool:
        tok = self.peek()
        if tok.kind == "name" and tok.text.lower() == word:
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> None:
        tok = self.take()
        if tok.text != text:
            raise ExprSyntaxError(f"expected {text!r}, got {tok.text or 'end'!r}", tok.pos)

    def parse(self) -> Expr:
        expr = self.parse_or()
        tok = self.peek()
        if tok.kind != "eof":
            raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.pos)
        return expr

    def parse_or(self) -> Expr:
        items = [self.parse_and()]
        while self.keyword("or"):
            items.append(self.parse_and())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def parse_and(self) -> Expr:
        items = [self.parse_not()]
        while self.keyword("and"):
            items.append(self.parse_not())
        return items[0] if len(items) == 1 else And(tuple(items))

    def parse_not(self) -> Expr:
        if self.keyword("not"):
            return Not(self.parse_not())
        return self.parse_cmp()

    def parse_cmp(self) -> Expr:
        left = self.parse_operand()
        tok = self.peek()
        if tok.kind != "op":
            if isinstance(left, tuple):
                return Var(".".join(left))
            if isinstance(left, Lit):
                raise ExprSyntaxError("a literal is not a condition", tok.pos)
            return left
        self.take()
        op = {"==": "=", "!=": "<>"}.get(tok.text, tok.text)
        right = self.parse_operand()
        return Cmp(op, _as_operand(left, is_right=False, pos=tok.pos),
                   _as_operand(right, is_right=True, pos=tok.pos))

    def parse_operand(self):
        tok = self.take()
        if tok.text == "(":
            inner = self.parse_or()
            self.expect(")")
            return inner
        sign = ""
        if tok.text == "-" and self.peek().kind == "num":
            sign, tok = "-", self.take()
        if tok.kind == "num":
            text = sign + tok.text
            return Lit(Decimal(text) if "." in text else int(text))
        if tok.kind == "str":
            return Lit(_unquote(tok.text))
        if tok.kind == "name":
            low = tok.text.lower()
            if low in ("true", "false"):
                return Const(low == "true")
            if low == "otherwise":
                return Otherwise()
            if low in _KEYWORDS:
                raise ExprSyntaxError(f"unexpected keyword {tok.text!r}", tok.pos)
            parts = [tok.text]
            while self.peek().text == ".":
                self.take()
                nxt = self.take()
                if nxt.kind != "name":
                    raise ExprSyntaxError("expected a name after '.'", nxt.pos)
                parts.append(nxt.text)
            return tuple(parts)
        raise ExprSyntaxError(f"unexpected {tok.text or 'end of input'!r}", tok.pos)


def _unquote(text: str) -> str:
    body = text[1:-1]
    return re.sub(r"\\(.)", r"\1", body)


def _as_operand(node, *, is_right: bool, pos: int) -> Expr:
    if isinstance(node, tuple):
        if len(node) == 1:
            return Lit(node[0]) if is_right else Field(None, node[0])
        return Field(".".join(node[:-1]), node[-1])
    if isinstance(node, Const):
        return Lit(node.value)
    if isinstance(node, Lit):
        return node
    raise ExprSyntaxError("comparison operands must be fields or literals", pos)


def parse_expr(text: str) -> Expr:
    """Parse ``text`` into an expression tree."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

_BARE_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


def _render_lit(value: Scalar, is_right: bool) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        if is_right and _BARE_RE.match(value) and value.lower() not in _KEYWORDS:
            return value
        return "'" + value.replace("\\", "\\\\").replace("'", "\\'") + "'"
    return str(value)


def to_text(expr: Expr) -> str:
    """Infix rendering that parses back to an equal tree."""
    if isinstance(expr, Const):
        return "true" if expr.value else "false"
    if isinstance(expr, Otherwise):
        return "otherwise"
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Field):
        return expr.name if expr.var is None else f"{expr.var}.{expr.name}"
    if isinstance(expr, Lit):
        return _render_lit(expr.value, True)
    if isinstance(expr, Cmp):
        left = _render_lit(expr.left.value, False) if isinstance(expr.left, Lit) else to_text(expr.left)
        right = _render_lit(expr.right.value, True) if isinstance(expr.right, Lit) else to_text(expr.right)
        return f"{left} {expr.op} {right}"
    if isinstance(expr, Not):
        return f"NOT ({to_text(expr.item)})"
    if isinstance(expr, And):
        return " AND ".join(f"({to_text(i)})" if isinstance(i, Or) else to_text(i) for i in expr.items)
    if isinstance(expr, Or):
        return " OR ".join(to_text(i) for i in expr.items)
    raise TypeError(f"not an expression: {expr!r}")


def to_prefix(expr: Expr) -> str:
    """Prefix rendering used for join criteria, e.g. ``OR(AND("a.x = b.x", a, b), c)``.

    Data predicates are rendered as quoted infix text.
    """
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Const):
        return "true" if expr.value else "false"
    if isinstance(expr, And):
        return "AND(" + ", ".join(to_prefix(i) for i in expr.items) + ")"
    if isinstance(expr, Or):
        return "OR(" + ", ".join(to_prefix(i) for i in expr.items) + ")"
    return json.dumps(to_text(expr))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


class TokenLike(Protocol):
    type: Optional[str]
    value: Mapping[str, Scalar]


def normalize_scalar(value: Any) -> Scalar:
    if isinstance(value, float):
        return Decimal(str(value))
    if isinstance(value, (bool, int, Decimal, str)):
        return value
    raise TypeMismatch(f"unsupported value {value!r}")


def normalize_record(record: Optional[Mapping[str, Any]]) -> Optional[dict]:
    if record is None:
        return None
    return {str(k): normalize_scalar(v) for k, v in record.items()}


def _kind(value: Scalar) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, (int, Decimal, Fraction)):
        return "number"
    return "string"


def compare(op: str, left: Scalar, right: Scalar) -> bool:
    lk, rk = _kind(left), _kind(right)
    if lk != rk:
        raise TypeMismatch(f"cannot compare {left!r} with {right!r}")
    if op == "=":
        return left == right
    if op == "<>":
        return left != right
    if lk == "bool":
        raise TypeMismatch(f"booleans are not ordered ({left!r} {op} {right!r})")
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    if op == ">=":
        return left >= right
    raise EvaluationError(f"unknown operator {op!r}")


def is_constant(expr: Expr) -> bool:
    if isinstance(expr, (Const, Lit, Otherwise)):
        return True
    if isinstance(expr, (Field, Var)):
        return False
    if isinstance(expr, Cmp):
        return is_constant(expr.left) and is_constant(expr.right)
    if isinstance(expr, Not):
        return is_constant(expr.item)
    return all(is_constant(i) for i in expr.items)


def _field_of(token: TokenLike, name: str) -> Scalar:
    if token.type is None:
        raise GuardOnControlToken(f"field {name!r} read from a control token")
    try:
        return token.value[name]
    except KeyError:
        raise FieldMissing(f"token of type {token.type} has no field {name!r}") from None


def eval_guard(expr: Expr, token: TokenLike) -> bool:
    """Evaluate an edge guard or pass rule against the current token."""
    if token.type is None and not is_constant(expr):
        raise GuardOnControlToken(f"guard {to_text(expr)!r} evaluated on a control token")
    return _eval_guard(expr, token)


def _eval_guard(expr: Expr, token: TokenLike) -> bool:
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Cmp):
        return compare(expr.op, _guard_operand(expr.left, token), _guard_operand(expr.right, token))
    if isinstance(expr, And):
        return all(_eval_guard(i, token) for i in expr.items)
    if isinstance(expr, Or):
        return any(_eval_guard(i, token) for i in expr.items)
    if isinstance(expr, Not):
        return not _eval_guard(expr.item, token)
    if isinstance(expr, Otherwise):
        raise EvaluationError("'otherwise' must be expanded before evaluation")
    if isinstance(expr, Var):
        raise EvaluationError(f"queue atom {expr.name!r} is only meaningful in join criteria")
    raise TypeMismatch(f"{to_text(expr)!r} is not a condition")


def _guard_operand(expr: Expr, token: TokenLike) -> Scalar:
    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, Field):
        if expr.var is not None:
            raise EvaluationError(f"guards may only read the current token, not {expr.var!r}")
        return _field_of(token, expr.name)
    raise TypeMismatch(f"{to_text(expr)!r} is not a value")


class _Absent(Exception):
    pass


Binding = Mapping[str, Optional[TokenLike]]
Admits = Callable[[Var, TokenLike], bool]


def eval_join_criteria(expr: Expr, binding: Binding, admits: Optional[Admits] = None) -> bool:
    """Evaluate join criteria over a binding of queue variables to tokens.

    A presence atom is true iff its variable is bound (and, when ``admits`` is
    given, the bound token is admitted for that atom's route). A comparison
    reading an unbound variable is false.
    """
    if isinstance(expr, Var):
        tok = binding.get(expr.name)
        if tok is None:
            return False
        return admits is None or admits(expr, tok)
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, And):
        return all(eval_join_criteria(i, binding, admits) for i in expr.items)
    if isinstance(expr, Or):
        return any(eval_join_criteria(i, binding, admits) for i in expr.items)
    if isinstance(expr, Not):
        return not eval_join_criteria(expr.item, binding, admits)
    if isinstance(expr, Cmp):
        try:
            left = _join_operand(expr.left, binding)
            right = _join_operand(expr.right, binding)
        except _Absent:
            return False
        return compare(expr.op, left, right)
    raise TypeMismatch(f"{to_text(expr)!r} is not a condition")


def _join_operand(expr: Expr, binding: Binding) -> Scalar:
    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, Field):
        if expr.var is None:
            raise EvaluationError(f"field {expr.name!r} needs a queue variable in join criteria")
        tok = binding.get(expr.var)
        if tok is None:
            raise _Absent()
        return _field_of(tok, expr.name)
    raise TypeMismatch(f"{to_text(expr)!r} is not a value")


def variables(expr: Expr) -> list[str]:
    """Presence-atom and field-variable names, in first-occurrence order."""
    seen: dict[str, None] = {}

    def walk(e: Expr) -> None:
        if isinstance(e, Var):
            seen.setdefault(e.name)
        elif isinstance(e, Field) and e.var is not None:
            seen.setdefault(e.var)
        elif isinstance(e, Cmp):
            walk(e.left)
            walk(e.right)
        elif isinstance(e, Not):
            walk(e.item)
        elif isinstance(e, (And, Or)):
            for i in e.items:
                walk(i)

    walk(expr)
    return list(seen)


def rename_vars(expr: Expr, mapping: Mapping[str, str]) -> Expr:
    if isinstance(expr, Var):
        return Var(mapping.get(expr.name, expr.name), expr.path)
    if isinstance(expr, Field):
        return Field(mapping.get(expr.var, expr.var) if expr.var else None, expr.name)
    if isinstance(expr, Cmp):
        return Cmp(expr.op, rename_vars(expr.left, mapping), rename_vars(expr.right, mapping))
    if isinstance(expr, Not):
        return Not(rename_vars(expr.item, mapping))
    if isinstance(expr, And):
        return And(tuple(rename_vars(i, mapping) for i in expr.items))
    if isinstance(expr, Or):
        return Or(tuple(rename_vars(i, mapping) for i in expr.items))
    return expr


def to_dnf(expr: Expr) -> Expr:
    """Disjunctive normal form of an AND/OR tree; other nodes are atoms."""
    terms = _dnf_terms(expr)
    return disjoin(conjoin(t) if len(t) != 1 else t[0] for t in terms)


def _dnf_terms(expr: Expr) -> list[tuple]:
    if isinstance(expr, Or):
        out: list[tuple] = []
        for i in expr.items:
            out.extend(_dnf_terms(i))
        return out
    if isinstance(expr, And):
        parts = [_dnf_terms(i) for i in expr.items]
        return [tuple(a for t in combo for a in t) for combo in product(*parts)]
    return [(expr,)]


# ---------------------------------------------------------------------------
# Static exclusivity check
# ---------------------------------------------------------------------------


def _atoms(expr: Expr) -> Optional[list[Cmp]]:
    """Comparison conjuncts of ``expr`` in ``field op literal`` form, or None."""
    if isinstance(expr, And):
        out: list[Cmp] = []
        for i in expr.items:
            sub = _atoms(i)
            if sub is None:
                return None
            out.extend(sub)
        return out
    if isinstance(expr, Cmp):
        if isinstance(expr.left, Field) and isinstance(expr.right, Lit):
            return [expr]
        if isinstance(expr.left, Lit) and isinstance(expr.right, Field):
            flipped = {"<": ">", "<=": ">=", ">": "<", ">=": "<="}.get(expr.op, expr.op)
            return [Cmp(flipped, expr.right, expr.left)]
    return None


def _atoms_disjoint(a: Cmp, b: Cmp) -> bool:
    if a.left != b.left:
        return False
    va, vb = a.right.value, b.right.value
    if _kind(va) != _kind(vb):
        return False
    if _kind(va) != "number":
        if a.op == "=" and b.op == "=":
            return va != vb
        if {a.op, b.op} == {"=", "<>"}:
            return va == vb
        return False
    # Probe the boundary points, the gaps between them, and beyond both ends.
    points = sorted({Fraction(va), Fraction(vb)})
    probes = list(points)
    probes += [(x + y) / 2 for x, y in zip(points, points[1:])]
    probes += [points[0] - 1, points[-1] + 1]
    return not any(
        compare(a.op, p, Fraction(va)) and compare(b.op, p, Fraction(vb)) for p in probes
    )


def provably_exclusive(g1: Expr, g2: Expr) -> bool:
    """Conservative check that two guards can never both hold."""
    if g1 == FALSE or g2 == FALSE:
        return True
    a1, a2 = _atoms(g1), _atoms(g2)
    if a1 is None or a2 is None:
        return False
    return any(_atoms_disjoint(x, y) for x in a1 for y in a2)
