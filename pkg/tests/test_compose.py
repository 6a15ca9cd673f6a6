import pytest
from hypothesis import given, settings, strategies as st

from lagc.compose import (
    Bounds,
    Composer,
    Configuration,
    enumerate_traces,
    find_concretizations,
    initial_configuration,
    step,
)
from lagc.core import STAR, Id, State, Var, lit
from lagc.lang import parse_program, parse_stmt
from lagc.lang.ast import Variant
from lagc.localeval import evaluate
from lagc.trace import ConditionedTrace, Event, last
from lagc.wf import WfIndex, check_trace, default_policy, make_policy


def setup(src, variant, names=None):
    p = parse_program(src, variant)
    pol = default_policy(p.variant, p) if names is None else make_policy(p.variant, names, p)
    return p, pol, initial_configuration(p, pol)


def new_items(before, after):
    return after.sh[len(before.sh):]


def events_of(items):
    return [x for x in items if isinstance(x, Event)]


def test_seq_single_successor():
    p, pol, cfg = setup("x:=1; y:=x+1", Variant.SEQ)
    (nxt,) = step(cfg, p, pol)
    assert nxt.sh == (State({"x": 0, "y": 0}), State({"x": 1, "y": 0}))
    assert [t.stmt for t in nxt.tasks] == [parse_stmt("y:=x+1", Variant.SEQ)]


def test_par_two_successors():
    p, pol, cfg = setup("co x:=1; y:=x+1 || x:=2 oc", Variant.PAR)
    a, b = step(cfg, p, pol)
    conts = {str(t.stmt) for c in step(a, p, pol) + step(b, p, pol) for t in c.tasks}
    # after x:=1 the co remains; after x:=2 only the left branch remains
    assert {str(t.stmt) for t in a.tasks} | {str(t.stmt) for t in b.tasks} == {
        str(parse_stmt("co y:=x+1 || x:=2 oc", Variant.PAR)),
        str(parse_stmt("x:=1; y:=x+1", Variant.PAR)),
    }
    (after_x1,) = [c for c in (a, b) if c.sh[-1]["x"] == lit(1)]
    conts = sorted(str(t.stmt) for c in step(after_x1, p, pol) for t in c.tasks)
    assert conts == ["x := 2", "y := x + 1"]


def test_proc_method_runs_once():
    p, pol, cfg = setup("m(x) { y:=x; x:=x+1 } { call(m,1); z:=2 }", Variant.PROC)
    (c1,) = step(cfg, p, pol)
    assert events_of(new_items(cfg, c1)) == [Event("invEv", (lit("m"), lit(1)))]
    succ = step(c1, p, pol)
    runs = [c for c in succ if any(e.kind == "invREv" for e in events_of(new_items(c1, c)))]
    assert len(runs) == 1
    for c in step(runs[0], p, pol):
        assert not any(e.kind == "invREv" for e in events_of(new_items(runs[0], c)))


AO = "class C { m(n) { n := n + 1; return n } } { a; x; f; y; a := 1; x := new C(); f := x!m(a); await f?; y := f.get }"


def test_ao_waits_for_method_before_progress():
    p, pol, cfg = setup(AO, Variant.ACTIVE_OBJECT)
    while not any(e.kind == "invEv" for e in events_of(cfg.sh)):
        (cfg,) = step(cfg, p, pol)
    succ = step(cfg, p, pol)
    assert len(succ) == 1
    (ev,) = events_of(new_items(cfg, succ[0]))
    assert ev.kind == "invREv" and ev.tag == Id("oid", 1)


def test_receive_unifies_with_pending_send():
    src = "m(x) { skip } { receive(x, @p0) }"
    p = parse_program(src, Variant.MULTI)
    pol = make_policy(Variant.MULTI, ["ac"], p)
    p0, p1, i0 = Id("pid", 0), Id("pid", 1), Id("mid", 0)
    s = State({"x": 0})
    sh = (s, Event("sendEv", (lit(7), lit(p1), lit(i0)), p0), s)
    cfg = Configuration(sh, (), WfIndex(pol).feed(sh), frozenset({p0, p1, i0}))
    comp = Composer(p, pol, Bounds())
    ctx = comp.context(cfg, p1)
    found = []
    for ct in evaluate(s, p.main, ctx):
        for rho in find_concretizations(cfg, ct, p1, p, pol):
            found.append((ct.body[1].payload[2], dict(rho)))
    assert len(found) == 1
    mid, rho = found[0]
    assert mid == lit(i0)
    assert list(rho.values()) == [lit(7)]


def test_get_unifies_with_completion():
    p = parse_program(AO, Variant.ACTIVE_OBJECT)
    pol = default_policy(p.variant)
    o0, f0 = Id("oid", 0), Id("fid", 0)
    s = State({"y": 0, "f": lit(f0)})
    sh = (s, Event("compEv", (lit(f0), lit(2)), Id("oid", 1)), s)
    cfg = Configuration(sh, (), WfIndex(pol).feed(sh), frozenset({o0, f0}))
    after = s.bind(**{"V#0": STAR})
    ct = ConditionedTrace(frozenset(), (s, Event("compREv", (lit(f0), Var("V#0"))), after, after.bind(y=Var("V#0"))))
    rhos = find_concretizations(cfg, ct, o0, p, pol)
    assert rhos == [{"V#0": lit(2)}]


def test_input_enumerates_domain():
    p, pol, cfg = setup("input(x)", Variant.PAR)
    succ = step(cfg, p, pol, Bounds(domain=(-1, 1)))
    assert sorted(c.sh[-1]["x"].value for c in succ) == [-1, 0, 1]


# --- enumeration ----------------------------------------------------------------


def finals(res, status="completed"):
    return [last(r.trace) for r in res.runs if r.status == status]


def test_deadlock_and_truncation():
    p = parse_program("m(x) { skip } { receive(x, @p1) }", Variant.MULTI)
    res = enumerate_traces(p)
    assert res.summary()["deadlocked"] == 1 and res.summary()["completed"] == 0
    p = parse_program("x := 0; :: x > 0 -> skip", Variant.PAR)
    assert [r.status for r in enumerate_traces(p).runs] == ["deadlocked"]
    p = parse_program("while tt { x := x + 1 }", Variant.SEQ)
    (r,) = enumerate_traces(p, bounds=Bounds(max_steps=30)).runs
    assert r.status == "truncated" and r.reason == "step bound"
    p = parse_program("while tt { skip }", Variant.SEQ)
    (r,) = enumerate_traces(p).runs
    assert r.status == "truncated" and r.reason == "cycle"


def test_trace_cap():
    p = parse_program("co input(x) || input(y) oc", Variant.PAR)
    res = enumerate_traces(p, bounds=Bounds(max_traces=5))
    assert len(res.runs) == 5 and res.summary()["trace_cap_reached"]


def test_promela_rendezvous_and_loop_exit():
    src = """
    chan c = [0];
    proctype A() { c!1; c!2 }
    proctype B() { int v; int s; do :: c?v -> s := s + v :: s >= 3 -> break od }
    """
    p = parse_program(src, Variant.PROMELA_MINI)
    res = enumerate_traces(p)
    pol = default_policy(p.variant, p)
    done = [r for r in res.runs if r.status == "completed"]
    assert done
    for r in done:
        assert check_trace(r.trace, pol)
        evs = events_of(r.trace)
        # each send is directly received
        for k, e in enumerate(evs):
            if e.kind == "sendEv":
                assert evs[k + 1].kind == "receiveEv"


PROGRAMS = [
    ("co x:=1; y:=x+1 || x:=2 oc", Variant.PAR, None),
    ("m(x) { y:=x; x:=x+1 } { call(m,1); z:=2 }", Variant.PROC, None),
    ("m(x) { send(x + 1, @p0); send(x, @p0) } { p := spawn(m, 5); receive(a, p); receive(b, p) }", Variant.MULTI, ["ac", "fifo"]),
    ("m(x) { send(x, @p0) } { p := spawn(m, 1); q := spawn(m, 2); receive(a, p); receive(b, q) }", Variant.MULTI, ["ac"]),
    ("class C { r; m(v) { r := v } } { x; x := new C(0); x!m(1); x!m(2) }", Variant.ACTOR, None),
    (AO, Variant.ACTIVE_OBJECT, None),
]


@pytest.mark.parametrize("src,variant,names", PROGRAMS)
def test_outputs_recheck(src, variant, names):
    p = parse_program(src, variant)
    pol = default_policy(p.variant, p) if names is None else make_policy(p.variant, names, p)
    res = enumerate_traces(p, pol)
    assert res.runs
    tagged = variant not in (Variant.SEQ, Variant.PAR, Variant.PROC)
    for r in res.runs:
        assert check_trace(r.trace, pol)
        for k, x in enumerate(r.trace):
            if isinstance(x, Event):
                assert r.trace[k - 1] == r.trace[k + 1]
                assert (x.tag is not None) == tagged


def _rename(tr, perm):
    def f(v):
        if isinstance(v, tuple):
            return tuple(f(x) for x in v)
        if isinstance(v, type(lit(0))) and isinstance(v.value, Id) and v.value.sort == "mid":
            return lit(Id("mid", perm[v.value.n]))
        return v

    return tuple(x if isinstance(x, State) else Event(x.kind, f(x.payload), x.tag) for x in tr)


@settings(max_examples=20, deadline=None)
@given(st.permutations(range(4)))
def test_message_id_renaming_preserves_wf(perm):
    src, variant, names = PROGRAMS[2]
    p = parse_program(src, variant)
    pol = make_policy(p.variant, names, p)
    for r in enumerate_traces(p, pol).runs:
        assert check_trace(_rename(r.trace, perm), pol)


def test_serial_and_parallel_agree():
    for src, variant, names in PROGRAMS:
        p = parse_program(src, variant)
        pol = default_policy(p.variant, p) if names is None else make_policy(p.variant, names, p)
        a = enumerate_traces(p, pol)
        b = enumerate_traces(p, pol, parallel=2)
        assert [r.lines() for r in a.runs] == [r.lines() for r in b.runs]
