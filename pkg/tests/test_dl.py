import pytest
from hypothesis import given, settings, strategies as st

from lagc.compose import Bounds
from lagc.core import STAR, BinOp, State, Var, lit
from lagc.dl import (
    CORPUS,
    PROBES,
    Atom,
    Box,
    Forall,
    Sequent,
    Strategy,
    apply_rule,
    assign_without_update,
    check_sat,
    discharge_fo,
    format_formula,
    initial_sequent,
    mutated_rules,
    parse_formula,
    prove,
    soundness_harness,
    substitute,
)
from lagc.errors import Indeterminate, NoRuleMatches, UnsupportedFormula
from lagc.lang import parse_program, parse_stmt
from lagc.lang.ast import EMPTY, Variant


def triple(pre, src, post, variant=Variant.PAR):
    p = parse_program(src, variant)
    return initial_sequent(parse_formula(pre), p.main, parse_formula(post), p)


# --- prove ----------------------------------------------------------------------


def test_assignment_chain_proved():
    res = prove(triple("tt", "x:=1; y:=x+1", "y == 2"))
    assert res.proved
    rules = []
    node = res.tree
    while node.children:
        rules.append(node.rule)
        (node,) = node.children
    rules.append(node.rule)
    assert rules == ["Assign", "Assign", "Empty", "FO"]


def test_input_proved_on_bounded_domain():
    seq = triple("tt", "input(x)", "x >= 0 - 2")
    assert prove(seq, Strategy(domain=(-2, 2))).proved
    assert not prove(seq, Strategy(domain=(-3, 3))).proved


def test_wrong_postcondition_gives_counter_valuation():
    res = prove(triple("tt", "x:=1", "x == 2"))
    assert not res.proved and res.counter is not None
    assert "counter-valuation" in res.render()


def test_loop_unroll_bound():
    res = prove(triple("tt", "while tt { x := x + 1 }", "tt"), Strategy(loop_unroll=3))
    assert not res.proved and "loop" in res.reason


def test_procedure_pool_proved():
    seq = triple("tt", "m(x) { y:=x; x:=x+1 } { call(m,1); z:=2 }", "y == 1 /\\ z == 2", Variant.PROC)
    assert prove(seq).proved


# --- discharge ------------------------------------------------------------------


def fo(gamma, expr, post):
    s0 = State({"X": STAR, "y": 0})
    tr = (s0, s0.bind(y=expr))
    return Sequent(tuple(parse_formula(g) for g in gamma), frozenset(), tr, parse_formula(post))


def test_discharge_identity():
    s = State({"X": STAR, "x": 0})
    seq = Sequent((), frozenset(), (s, s.bind(x=Var("X"))), Atom(BinOp("==", Var("x"), Var("X"))))
    assert discharge_fo(seq)


def test_discharge_examples():
    d = discharge_fo(fo(["X > 0"], BinOp("+", Var("X"), lit(1)), "y > 1"), (-3, 3))
    assert d.valid and d.checked == 3  # X in 1..3
    d = discharge_fo(fo(["X > 0"], BinOp("+", Var("X"), lit(1)), "y > 2"), (-3, 3))
    assert not d.valid and d.counter == {"X": lit(1)}


def test_discharge_rejects_programs():
    seq = fo([], lit(0), "tt")
    with pytest.raises(UnsupportedFormula):
        discharge_fo(Sequent((), frozenset(), seq.trace, Box(parse_stmt("skip"), Atom(lit(True)))))


def test_quantifier_nesting_limit():
    f = parse_formula("forall a. forall b. forall c. forall d. a == a")
    with pytest.raises(UnsupportedFormula):
        discharge_fo(Sequent((), frozenset(), (State(),), f))


# --- rules ----------------------------------------------------------------------


def test_assign_rule():
    seq = triple("tt", "x:=1; y:=2", "tt")
    (prem,) = apply_rule(seq, "Assign")
    sigma = seq.trace[-1]
    assert prem.trace == seq.trace + (sigma.bind(x=1),)
    assert prem.succ == Box(parse_stmt("y:=2"), Atom(lit(True)))


def test_empty_rule():
    seq = Sequent((), frozenset({lit(True)}), (State(),), Box(EMPTY, Atom(lit(False))))
    (prem,) = apply_rule(seq, "Empty")
    assert prem.succ == Atom(lit(False)) and prem.pc == seq.pc and prem.trace == seq.trace


def test_cond_rule_splits_path_condition():
    seq = triple("tt", "if x > 0 { y := 1 }; z := 1", "tt")
    prems = apply_rule(seq, "Cond")
    assert len(prems) == 2
    g = BinOp(">", Var("x#0"), lit(0))
    assert {p.pc for p in prems} == {frozenset({g}), frozenset({BinOp("==", g, lit(False))})}
    conts = {format_formula(p.succ) for p in prems}
    assert len(conts) == 2


def test_inapplicable_rule_names_shape():
    seq = triple("tt", "skip", "tt")
    with pytest.raises(NoRuleMatches, match="x := e"):
        apply_rule(seq, "Assign")
    with pytest.raises(NoRuleMatches):
        apply_rule(seq, "NoSuchRule")


# --- substitution ---------------------------------------------------------------


def test_substitution_leaves_programs_alone():
    f = parse_formula("x == 1 /\\ [x := x + 1] x == 2")
    g = substitute(f, "x", lit(5))
    assert g.left == Atom(BinOp("==", lit(5), lit(1)))
    assert g.right.stmt == f.right.stmt
    assert g.right.body == Atom(BinOp("==", lit(5), lit(2)))


def test_substitution_respects_binders():
    f = Forall("x", Atom(BinOp("==", Var("x"), Var("x"))))
    assert substitute(f, "x", lit(3)) == f


# --- satisfaction ---------------------------------------------------------------


def test_check_sat_examples():
    s = State({"x": 1, "y": 2})
    tr = (State({"x": 0, "y": 0}), State({"x": 1, "y": 0}), s)
    assert check_sat(tr, parse_formula("y == 2"))
    assert not check_sat(tr, parse_formula("y == 3"))
    phi = parse_formula("x > y")
    assert check_sat((s,), Box(EMPTY, phi)) == check_sat((s,), phi)
    assert check_sat(tr, parse_formula("[y := y + 1] y == 3"))
    assert check_sat(tr, parse_formula("exists v. v == y"))


def test_divergent_box_holds_vacuously():
    assert check_sat((State({"x": 0}),), parse_formula("[while tt { skip }] ff"))


def test_bounded_divergence_is_indeterminate():
    with pytest.raises(Indeterminate):
        check_sat((State({"x": 0}),), parse_formula("[while tt { x := x + 1 }] ff"), bounds=Bounds(max_steps=40))


# --- harness --------------------------------------------------------------------


def test_empty_corpus():
    rep = soundness_harness([])
    assert rep.entries == [] and rep.violations == 0


def test_corpus_proves_and_probes_fail():
    rep = soundness_harness(CORPUS)
    assert rep.proved == len(CORPUS) == 10 and rep.violations == 0
    rep = soundness_harness(PROBES)
    assert rep.proved == 0


def test_mutation_detected():
    rep = soundness_harness(CORPUS + PROBES, rules=mutated_rules(Assign=assign_without_update))
    assert rep.violations >= 1


# --- properties -----------------------------------------------------------------

POSTS = ["y == 2", "y > x", "x + y >= 0", "y == x + 1", "x == 1"]


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(POSTS), st.integers(1, 3), st.integers(0, 2))
def test_counter_valuation_persists_on_larger_domain(post, small, extra):
    seq = triple("tt", "y := x + 1", post)
    small_d, big_d = (-small, small), (-small - extra, small + extra)
    d = discharge_fo(prove_to_leaf(seq), small_d)
    if not d.valid:
        big = prove_to_leaf(seq)
        assert not discharge_fo(big, big_d).valid


def prove_to_leaf(seq):
    (a,) = apply_rule(seq, "Assign")
    (b,) = apply_rule(a, "Empty")
    return b


@settings(max_examples=60, deadline=None)
@given(st.integers(-3, 3), st.integers(-3, 3), st.sampled_from(["y > 0", "y <= x", "y == 1"]))
def test_assign_premise_entails_conclusion(a, b, post):
    """With Γ pinning x, the Assign premise is valid exactly when the concrete run ends in φ."""
    seq = triple(f"x == {a}" if a >= 0 else f"x == 0 - {-a}", f"y := x + {b}" if b >= 0 else f"y := x - {-b}", post)
    (prem,) = apply_rule(seq, "Assign")
    (leaf,) = apply_rule(prem, "Empty")
    x, y = a, a + b
    assert discharge_fo(leaf).valid == {"y > 0": y > 0, "y <= x": y <= x, "y == 1": y == 1}[post]
