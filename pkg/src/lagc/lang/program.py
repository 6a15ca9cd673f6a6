"""Program preparation: initial states, sort inference and jump tables."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..core import EMPTY_STATE, BinOp, Id, Lit, SExpr, State, Var, lit
from ..errors import GateError
from . import ast as A
from .ast import Variant


def expr_sort(e: SExpr, known: dict[str, str]) -> Optional[str]:
    if isinstance(e, Lit):
        return e.sort
    if isinstance(e, Var):
        return known.get(e.name)
    if isinstance(e, BinOp):
        if e.op in ("==", "!=", "<", "<=", ">", ">=", "&&", "||"):
            return "bool"
        return "int"
    return None


def infer_sorts(bodies: list[A.Stmt], seed: Optional[dict[str, str]] = None) -> dict[str, str]:
    """Syntactic sort inference to a fixpoint.

    Variables without evidence are integers.  Targets of ``spawn`` hold
    process ids, targets of ``new`` object ids, and so on.
    """
    known: dict[str, str] = dict(seed or {})
    changed = True
    while changed:
        changed = False

        def note(name: str, sort: Optional[str]) -> None:
            nonlocal changed
            if sort is not None and name not in known:
                known[name] = sort
                changed = True

        for body in bodies:
            for s in A.walk(body):
                if isinstance(s, A.Assign):
                    note(s.target, expr_sort(s.expr, known))
                    if isinstance(s.expr, Var) and s.target in known:
                        note(s.expr.name, known[s.target])
                elif isinstance(s, A.Spawn):
                    note(s.target, "pid")
                elif isinstance(s, A.New):
                    note(s.target, "oid")
                elif isinstance(s, A.AsyncCall) and s.target is not None:
                    note(s.target, "fid")
                elif isinstance(s, (A.If, A.While)):
                    if isinstance(s.cond, Var):
                        note(s.cond.name, "bool")
                elif isinstance(s, A.Guarded) and isinstance(s.guard, Var):
                    note(s.guard.name, "bool")
                for e in A.stmt_exprs(s):
                    _note_logic(e, note)
    return known


def _note_logic(e: SExpr, note) -> None:
    if isinstance(e, BinOp):
        if e.op in ("&&", "||"):
            for side in (e.left, e.right):
                if isinstance(side, Var):
                    note(side.name, "bool")
        if e.op in ("+", "-", "*", "/", "%", "<", "<=", ">", ">="):
            for side in (e.left, e.right):
                if isinstance(side, Var):
                    note(side.name, "int")
        _note_logic(e.left, note)
        _note_logic(e.right, note)


def default_value(sort: str) -> Optional[Lit]:
    if sort == "bool":
        return lit(False)
    if sort == "int":
        return lit(0)
    return None


def program_vars(prog: A.Program) -> set[str]:
    out = set(A.free_vars(prog.main))
    for m in prog.methods:
        out |= A.free_vars(m.body, frozenset(m.params))
    return out


def initial_state(prog: A.Program) -> State:
    """Default initial state: integers 0, booleans ff, id-sorted variables unbound."""
    V = prog.variant
    if V in (Variant.ACTOR, Variant.ACTIVE_OBJECT):
        return EMPTY_STATE
    if V == Variant.PROMELA_MINI:
        return promela_setup(prog).initial
    bodies = [prog.main] + [m.body for m in prog.methods]
    sorts = infer_sorts(bodies)
    d = {}
    for x in sorted(program_vars(prog)):
        v = default_value(sorts.get(x, "int"))
        if v is not None:
            d[x] = v
    return State(d)


# --- ProMeLa preparation -----------------------------------------------------


@dataclass
class PromelaInfo:
    initial: State
    bodies: dict  # proctype name -> hoisted body
    labels: dict  # proctype name -> {label: continuation}
    channels: dict  # channel id -> ChannelDecl
    owner_of: dict  # channel id -> proctype name or None
    capacity: dict = field(default_factory=dict)  # channel id -> capacity


_PROMELA_CACHE: dict[int, tuple[A.Program, PromelaInfo]] = {}


def promela_setup(prog: A.Program) -> PromelaInfo:
    """Allocate channel ids, hoist local declarations and build jump tables.

    Each proctype runs as exactly one process, so its local variables and
    channels get program-wide unique names (``n@P``) bound in the initial
    state.
    """
    hit = _PROMELA_CACHE.get(id(prog))
    if hit is not None and hit[0] is prog:
        return hit[1]
    init: dict[str, SExpr] = {}
    chans: dict[Id, A.ChannelDecl] = {}
    owner: dict[Id, Optional[str]] = {}
    cap: dict[Id, int] = {}
    global_names: dict[str, str] = {}
    for k, c in enumerate(prog.channels):
        cid = Id("cid", k)
        chans[cid] = c
        owner[cid] = c.owner
        cap[cid] = c.capacity
        var = c.name if c.owner is None else f"{c.name}@{c.owner}"
        if var in init:
            raise GateError(f"duplicate channel {var}")
        init[var] = lit(cid)
        if c.owner is None:
            global_names[c.name] = var
    gsorts = {n: s for n, s in prog.globals}
    for n, s in prog.globals:
        init[n] = default_value(s)
    bodies: dict[str, A.Stmt] = {}
    labels: dict[str, dict] = {}
    for pt in prog.proctypes:
        ren: dict[str, SExpr] = {}
        for c in prog.channels:
            if c.owner == pt.name:
                ren[c.name] = Var(f"{c.name}@{pt.name}")
        before = set(init)
        body, local_sorts = _hoist(pt.body, pt.name, ren, init)
        sorts = infer_sorts([body], {**gsorts, **local_sorts})
        for x in set(init) - before:
            if sorts.get(x) == "bool":
                init[x] = lit(False)
        for x in sorted(A.free_vars(body)):
            if x not in init:
                init[x] = default_value(sorts.get(x, "int")) or lit(0)
        body, table = resolve_jumps(body)
        bodies[pt.name] = body
        labels[pt.name] = table
    info = PromelaInfo(State(init), bodies, labels, chans, owner, cap)
    _PROMELA_CACHE[id(prog)] = (prog, info)
    return info


def _hoist(s: A.Stmt, pname: str, ren: dict, init: dict) -> tuple[A.Stmt, dict]:
    sorts: dict[str, str] = {}
    counter = [0]

    def go(s: A.Stmt, ren: dict) -> A.Stmt:
        if isinstance(s, A.Block):
            inner = dict(ren)
            for d in s.decls:
                name = f"{d}@{pname}"
                while name in init:
                    counter[0] += 1
                    name = f"{d}@{pname}{counter[0]}"
                init[name] = lit(0)
                inner[d] = Var(name)
            return go(A.rename(s.body, {d: inner[d] for d in s.decls}), inner)
        if isinstance(s, A.Seq):
            return A.Seq(go(s.first, ren), go(s.second, ren))
        if isinstance(s, (A.Select, A.Repeat)):
            return type(s)(tuple(A.Branch(b.guard, go(b.body, ren)) for b in s.branches))
        if isinstance(s, A.Guarded):
            return A.Guarded(s.guard, go(s.body, ren))
        if isinstance(s, A.Labeled):
            return A.Labeled(s.label, go(s.body, ren))
        if isinstance(s, A.Atomic):
            return A.Atomic(go(s.body, ren))
        return s

    body = go(A.rename(s, ren) if ren else s, ren)
    return body, sorts


def resolve_jumps(body: A.Stmt) -> tuple[A.Stmt, dict]:
    """Replace ``break`` by jumps and map every label to the code following it."""
    counter = [0]
    exits: dict[int, str] = {}

    def breaks(s: A.Stmt, label: Optional[str]) -> A.Stmt:
        if isinstance(s, A.Break):
            if label is None:
                raise GateError("break outside of a repetition")
            return A.Goto(label)
        if isinstance(s, A.Repeat):
            lbl = f"__break{counter[0]}"
            counter[0] += 1
            out = A.Repeat(tuple(A.Branch(b.guard, breaks(b.body, lbl)) for b in s.branches))
            exits[id(out)] = lbl
            return out
        if isinstance(s, A.Select):
            return A.Select(tuple(A.Branch(b.guard, breaks(b.body, label)) for b in s.branches))
        if isinstance(s, A.Seq):
            return A.Seq(breaks(s.first, label), breaks(s.second, label))
        if isinstance(s, A.Guarded):
            return A.Guarded(s.guard, breaks(s.body, label))
        if isinstance(s, A.Labeled):
            return A.Labeled(s.label, breaks(s.body, label))
        if isinstance(s, A.Atomic):
            return A.Atomic(breaks(s.body, label))
        return s

    body = breaks(body, None)
    table: dict[str, A.Stmt] = {}

    def walk(s: A.Stmt, rest: A.Stmt) -> None:
        if isinstance(s, A.Seq):
            walk(s.first, A.seq(s.second, rest))
            walk(s.second, rest)
        elif isinstance(s, A.Labeled):
            if s.label in table:
                raise GateError(f"duplicate label {s.label}")
            table[s.label] = A.seq(s.body, rest)
            walk(s.body, rest)
        elif isinstance(s, A.Repeat):
            table[exits[id(s)]] = rest
            for b in s.branches:
                walk(b.body, A.seq(s, rest))
        elif isinstance(s, A.Select):
            for b in s.branches:
                walk(b.body, rest)
        elif isinstance(s, (A.Guarded, A.Atomic)):
            walk(s.body, rest)

    walk(body, A.EMPTY)
    for s in A.walk(body):
        if isinstance(s, A.Goto) and s.label not in table:
            raise GateError(f"goto to unknown label {s.label}")
    return body, table
