from decimal import Decimal
from itertools import product
from types import SimpleNamespace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advm.errors import ExprSyntaxError, FieldMissing, GuardOnControlToken, TypeMismatch
from advm.guard import (
    FALSE,
    TRUE,
    And,
    Cmp,
    Field,
    Lit,
    Not,
    Or,
    Var,
    compare,
    conjoin,
    eval_guard,
    eval_join_criteria,
    parse_expr,
    provably_exclusive,
    rename_vars,
    to_dnf,
    to_prefix,
    to_text,
    variables,
)


def tok(type_="T", **value):
    return SimpleNamespace(type=type_, value=value, is_control=type_ is None)


CONTROL = tok(None)


class TestParse:
    def test_bare_right_name_is_string_literal(self):
        assert parse_expr("status = accepted") == Cmp("=", Field(None, "status"), Lit("accepted"))

    def test_dotted_names_are_queue_fields(self):
        e = parse_expr("p1.att2 = p2.att2")
        assert e == Cmp("=", Field("p1", "att2"), Field("p2", "att2"))
        assert variables(e) == ["p1", "p2"]

    def test_alias_operators(self):
        assert parse_expr("k == 2") == parse_expr("k = 2")
        assert parse_expr("k != 2") == parse_expr("k <> 2")

    def test_precedence_or_below_and_below_not(self):
        e = parse_expr("a = 1 or b = 2 and not c = 3")
        assert isinstance(e, Or)
        assert isinstance(e.items[1], And)
        assert isinstance(e.items[1].items[1], Not)

    def test_decimal_literals_keep_scale(self):
        assert parse_expr("x = 1.50").right == Lit(Decimal("1.50"))

    @pytest.mark.parametrize("text", ["k = ", "and k = 1", "(k = 1", "k = 1)", "k @ 1", "'open"])
    def test_syntax_errors_carry_position(self, text):
        with pytest.raises(ExprSyntaxError) as info:
            parse_expr(text)
        assert 0 <= info.value.position <= len(text)

    def test_prefix_form(self):
        e = Or((And((parse_expr("p1.att2 = p2.att2"), Var("p1"), Var("p2"))), And((Var("p2"), Var("p3")))))
        assert to_prefix(e) == 'OR(AND("p1.att2 = p2.att2", p1, p2), AND(p2, p3))'

    def test_conjoin_drops_true(self):
        g = parse_expr("k = 1")
        assert conjoin([TRUE, g, TRUE]) == g
        assert conjoin([TRUE, TRUE]) == TRUE


class TestEvaluate:
    def test_comparisons(self):
        t = tok(k=3, s="abc", b=True, d=Decimal("2.5"))
        cases = {
            "k = 3": True, "k <> 3": False, "k < 4": True, "k >= 4": False,
            "s = abc": True, "s < abd": True, "b = true": True,
            "d > 2": True, "d = 2.50": True,
        }
        for text, expected in cases.items():
            assert eval_guard(parse_expr(text), t) is expected, text

    def test_constant_guard_on_control_token(self):
        assert eval_guard(TRUE, CONTROL) is True
        assert eval_guard(FALSE, CONTROL) is False

    def test_data_guard_on_control_token_is_an_error(self):
        with pytest.raises(GuardOnControlToken):
            eval_guard(parse_expr("k = 1"), CONTROL)

    def test_missing_field(self):
        with pytest.raises(FieldMissing):
            eval_guard(parse_expr("nope = 1"), tok(k=1))

    @pytest.mark.parametrize("text", ["k = abc", "b < true", "s > 1"])
    def test_type_mismatch(self, text):
        with pytest.raises(TypeMismatch):
            eval_guard(parse_expr(text), tok(k=1, b=True, s="x"))

    def test_bool_is_not_a_number(self):
        with pytest.raises(TypeMismatch):
            compare("=", True, 1)


def join_condition_oracle(tokens_by_pin: dict) -> bool:
    """Direct reading of the condition as existence tests over token sets."""
    def exists(pin):
        return pin in tokens_by_pin

    def att2(pin):
        return tokens_by_pin[pin]["att2"]

    first = exists("p1") and exists("p2") and att2("p1") == att2("p2")
    second = exists("p2") and exists("p3")
    return first or second


class TestJoinCriteria:
    CRITERIA = Or((
        And((parse_expr("p1.att2 = p2.att2"), Var("p1"), Var("p2"))),
        And((Var("p2"), Var("p3"))),
    ))

    @pytest.mark.parametrize("present", list(product([False, True], repeat=3)))
    @pytest.mark.parametrize("match", [True, False])
    def test_all_presence_and_match_cases(self, present, match):
        values = {"p1": {"att2": 7}, "p2": {"att2": 7 if match else 8}, "p3": {"att3": 1}}
        binding = {p: tok(**values[p]) for p, on in zip(("p1", "p2", "p3"), present) if on}
        expected = join_condition_oracle({p: values[p] for p in binding})
        assert eval_join_criteria(self.CRITERIA, binding) is expected

    def test_admission_filter(self):
        binding = {"p2": tok(att2=1), "p3": tok()}
        assert eval_join_criteria(self.CRITERIA, binding)
        assert not eval_join_criteria(self.CRITERIA, binding, lambda var, t: var.name != "p2")

    def test_rename(self):
        e = rename_vars(self.CRITERIA, {"p1": "a.p1"})
        assert variables(e)[0] == "a.p1"


# -- property tests ----------------------------------------------------------

FIELDS = ("a", "b")
VARS = ("p1", "p2", "p3")
OPS = ("=", "<>", "<", "<=", ">", ">=")

atoms = st.builds(lambda f, op, v: Cmp(op, Field(None, f), Lit(v)),
                  st.sampled_from(FIELDS), st.sampled_from(OPS), st.integers(-3, 3))


def exprs(leaf):
    return st.recursive(
        leaf,
        lambda sub: st.one_of(
            st.builds(lambda xs: And(tuple(xs)), st.lists(sub, min_size=2, max_size=3)),
            st.builds(lambda xs: Or(tuple(xs)), st.lists(sub, min_size=2, max_size=3)),
            st.builds(Not, sub),
        ),
        max_leaves=6,
    )


records = st.fixed_dictionaries({f: st.integers(-4, 4) for f in FIELDS})


@settings(max_examples=300, deadline=None)
@given(exprs(atoms), records)
def test_text_round_trip_preserves_meaning(expr, record):
    t = tok(**record)
    again = parse_expr(to_text(expr))
    assert eval_guard(again, t) == eval_guard(expr, t)


join_leaves = st.one_of(
    st.sampled_from([Var(v) for v in VARS]),
    st.builds(lambda a, b, op: Cmp(op, Field(a, "x"), Field(b, "x")),
              st.sampled_from(VARS), st.sampled_from(VARS), st.sampled_from(OPS)),
)


@settings(max_examples=300, deadline=None)
@given(exprs(join_leaves), st.dictionaries(st.sampled_from(VARS), st.integers(0, 2)))
def test_dnf_is_equivalent(expr, present):
    binding = {v: tok(x=x) for v, x in present.items()}
    assert eval_join_criteria(to_dnf(expr), binding) == eval_join_criteria(expr, binding)


conj_guards = st.builds(lambda xs: conjoin(xs), st.lists(atoms, min_size=1, max_size=2))


@settings(max_examples=400, deadline=None)
@given(conj_guards, conj_guards)
def test_exclusivity_is_sound(g1, g2):
    if not provably_exclusive(g1, g2):
        return
    for a, b in product(range(-5, 6), repeat=2):
        t = tok(a=a, b=b)
        assert not (eval_guard(g1, t) and eval_guard(g2, t))


def test_exclusivity_examples():
    assert provably_exclusive(parse_expr("k < 3"), parse_expr("k >= 3"))
    assert provably_exclusive(parse_expr("s = a"), parse_expr("s = b"))
    assert not provably_exclusive(parse_expr("k < 3"), parse_expr("k > 1"))
    assert not provably_exclusive(parse_expr("k = 1"), parse_expr("j = 2"))
