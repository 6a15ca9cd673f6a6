"""Dynamic logic over symbolic traces.

Sequents have the shape ``Γ, pc ⇒ τ φ``: assumptions, a path condition,
a symbolic trace produced so far and a formula whose leading modality is
still to be executed.  The prover runs the program rules as a symbolic
executor until no program is left, then checks the remaining first-order
obligation by enumerating the symbols of the trace over a finite integer
domain.  Verdicts are therefore valid *on that domain*.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .compose import Bounds, enumerate_traces
from .core import (
    FF,
    STAR,
    TT,
    Id,
    Lit,
    SExpr,
    State,
    Var,
    eval_expr,
    expr_vars,
    lit,
    update,
)
from .errors import EvalError, Indeterminate, NoRuleMatches, ParseError, SortError, UnsupportedFormula
from .lang import ast as A
from .lang.ast import EMPTY, Program, Variant
from .lang.parser import parse_expr, parse_stmt
from .lang.pretty import pretty, pretty_expr
from .lang.program import infer_sorts
from .localeval import EvalContext, Fresh, evaluate
from .trace import (
    ConditionedTrace,
    Event,
    chop,
    concretize_trace,
    events,
    flatten_payload,
    format_trace,
    trace_symbols,
)
from .wf import check_trace, default_policy

# --- formulas -------------------------------------------------------------------


class Formula:
    __slots__ = ()

    def __str__(self) -> str:
        return format_formula(self)


@dataclass(frozen=True)
class Atom(Formula):
    expr: SExpr


@dataclass(frozen=True)
class Not(Formula):
    body: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Iff(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Exists(Formula):
    var: str
    body: Formula


@dataclass(frozen=True)
class Forall(Formula):
    var: str
    body: Formula


@dataclass(frozen=True)
class Box(Formula):
    """``[s]φ``; ``index`` is set for the process-pool encoding."""

    stmt: A.Stmt
    body: Formula
    index: Optional[int] = None


@dataclass(frozen=True)
class Pool(Formula):
    """Conjunction of indexed modalities ``[s_i]_i φ`` sharing one postcondition."""

    tasks: tuple  # ((index, stmt), ...)
    body: Formula


TRUE = Atom(TT)
FALSE = Atom(FF)

_BINARY = {And: "∧", Or: "∨", Implies: "→", Iff: "↔"}
_PREC = {Iff: 1, Implies: 2, Or: 3, And: 4}


def format_formula(f: Formula, parent: int = 0) -> str:
    if isinstance(f, Atom):
        return pretty_expr(f.expr)
    if isinstance(f, Not):
        return "¬" + format_formula(f.body, 9)
    if type(f) in _BINARY:
        p = _PREC[type(f)]
        text = f"{format_formula(f.left, p + 1)} {_BINARY[type(f)]} {format_formula(f.right, p)}"
        return f"({text})" if p < parent or (p == parent and parent) else text
    if isinstance(f, (Exists, Forall)):
        q = "∃" if isinstance(f, Exists) else "∀"
        text = f"{q}{f.var}. {format_formula(f.body)}"
        return f"({text})" if parent else text
    if isinstance(f, Box):
        idx = f"_{f.index}" if f.index is not None else ""
        return f"[{pretty(f.stmt)}]{idx} {format_formula(f.body, 9)}"
    if isinstance(f, Pool):
        inner = " ∧ ".join(f"[{pretty(s)}]_{i}" for i, s in f.tasks)
        return f"⟨{inner}⟩ {format_formula(f.body, 9)}"
    return repr(f)


def is_program_free(f: Formula) -> bool:
    if isinstance(f, (Box, Pool)):
        return False
    if isinstance(f, Atom):
        return True
    if isinstance(f, (Not, Exists, Forall)):
        return is_program_free(f.body)
    return is_program_free(f.left) and is_program_free(f.right)


def substitute(f: Formula, name: str, term: SExpr) -> Formula:
    """Replace free occurrences of ``name`` by ``term``; programs stay untouched."""
    if isinstance(f, Atom):
        return Atom(A.subst_expr(f.expr, {name: term}))
    if isinstance(f, Not):
        return Not(substitute(f.body, name, term))
    if isinstance(f, (And, Or, Implies, Iff)):
        return type(f)(substitute(f.left, name, term), substitute(f.right, name, term))
    if isinstance(f, (Exists, Forall)):
        if f.var == name:
            return f
        return type(f)(f.var, substitute(f.body, name, term))
    if isinstance(f, Box):
        return Box(f.stmt, substitute(f.body, name, term), f.index)
    if isinstance(f, Pool):
        return Pool(f.tasks, substitute(f.body, name, term))
    raise TypeError(f)


def formula_vars(f: Formula) -> set[str]:
    """Free variables of the first-order parts."""
    if isinstance(f, Atom):
        return set(expr_vars(f.expr))
    if isinstance(f, (Exists, Forall)):
        return formula_vars(f.body) - {f.var}
    if isinstance(f, (Not, Box, Pool)):
        return formula_vars(f.body)
    return formula_vars(f.left) | formula_vars(f.right)


def quantifier_depth(f: Formula) -> int:
    if isinstance(f, Atom):
        return 0
    if isinstance(f, (Exists, Forall)):
        return 1 + quantifier_depth(f.body)
    if isinstance(f, (Not, Box, Pool)):
        return quantifier_depth(f.body)
    return max(quantifier_depth(f.left), quantifier_depth(f.right))


# --- formula parser ----------------------------------------------------------------

_CONNECTIVES = ("<->", "↔", "->", "→", "/\\", "∧", "\\/", "∨")
_QUANT = re.compile(r"(exists|forall|∃|∀)\s*([A-Za-z_][A-Za-z0-9_#']*)\s*\.")


class _FormulaParser:
    def __init__(self, text: str, variant: Variant):
        self.s = text
        self.i = 0
        self.variant = variant

    def error(self, msg: str):
        line = self.s.count("\n", 0, self.i) + 1
        col = self.i - (self.s.rfind("\n", 0, self.i) + 1) + 1
        raise ParseError(msg, line, col)

    def ws(self) -> None:
        while self.i < len(self.s) and self.s[self.i].isspace():
            self.i += 1

    def conn(self) -> Optional[str]:
        self.ws()
        for c in _CONNECTIVES:
            if self.s.startswith(c, self.i):
                return c
        return None

    def eat(self, c: str) -> None:
        self.i += len(c)

    def parse(self) -> Formula:
        f = self.iff()
        self.ws()
        if self.i != len(self.s):
            self.error("unexpected input after formula")
        return f

    def iff(self) -> Formula:
        left = self.imp()
        while self.conn() in ("<->", "↔"):
            self.eat(self.conn())
            left = Iff(left, self.imp())
        return left

    def imp(self) -> Formula:
        left = self.disj()
        c = self.conn()
        if c in ("->", "→"):
            self.eat(c)
            return Implies(left, self.imp())
        return left

    def disj(self) -> Formula:
        left = self.conj()
        while self.conn() in ("\\/", "∨"):
            self.eat(self.conn())
            left = Or(left, self.conj())
        return left

    def conj(self) -> Formula:
        left = self.unary()
        while self.conn() in ("/\\", "∧"):
            self.eat(self.conn())
            left = And(left, self.unary())
        return left

    def _match(self, open_: str, close: str, start: int) -> int:
        depth = 0
        for j in range(start, len(self.s)):
            if self.s[j] == open_:
                depth += 1
            elif self.s[j] == close:
                depth -= 1
                if depth == 0:
                    return j
        self.i = start
        self.error(f"unbalanced {open_}")

    def unary(self) -> Formula:
        self.ws()
        s = self.s
        if s.startswith("~", self.i) or s.startswith("¬", self.i):
            self.i += 1
            return Not(self.unary())
        m = _QUANT.match(s, self.i)
        if m:
            self.i = m.end()
            body = self.iff()
            return (Exists if m.group(1) in ("exists", "∃") else Forall)(m.group(2), body)
        if s.startswith("[", self.i):
            j = self._match("[", "]", self.i)
            inner = s[self.i + 1:j].strip()
            self.i = j + 1
            idx = None
            mm = re.compile(r"_(\d+)").match(s, self.i)
            if mm:
                idx = int(mm.group(1))
                self.i = mm.end()
            stmt = EMPTY if inner in ("", "∘") else parse_stmt(inner, self.variant)
            return Box(stmt, self.unary(), idx)
        if s.startswith("(", self.i):
            j = self._match("(", ")", self.i)
            rest = s[j + 1:].lstrip()
            if not rest or rest.startswith(")") or any(rest.startswith(c) for c in _CONNECTIVES):
                sub = _FormulaParser(s[self.i + 1:j], self.variant)
                f = sub.parse()
                self.i = j + 1
                return f
        return self.atom()

    def atom(self) -> Formula:
        start = self.i
        depth = 0
        j = self.i
        s = self.s
        while j < len(s):
            ch = s[j]
            if ch == "(":
                depth += 1
            elif ch == ")":
                if depth == 0:
                    break
                depth -= 1
            elif depth == 0 and any(s.startswith(c, j) for c in _CONNECTIVES):
                break
            j += 1
        text = s[start:j].strip()
        if not text:
            self.error("expected a formula")
        self.i = j
        try:
            return Atom(parse_expr(text))
        except ParseError as e:
            raise ParseError(f"in atom {text!r}: {e.message}", e.line, start + e.col) from None


def parse_formula(text: str, variant: Variant | str = Variant.PAR) -> Formula:
    """Parse ``~ /\\ \\/ -> <-> exists X. forall X. [s] [s]_i`` over expression atoms."""
    if isinstance(variant, str):
        variant = Variant.parse(variant)
    return _FormulaParser(text, variant).parse()


# --- first-order evaluation ---------------------------------------------------------

MAX_QUANTIFIER_DEPTH = 3


def _candidates(domain: tuple, ids: frozenset) -> list[Lit]:
    lo, hi = domain
    out = [lit(v) for v in range(lo, hi + 1)] + [FF, TT]
    sorts = sorted({i.sort for i in ids})
    for i in sorted(ids):
        out.append(lit(i))
    for srt in sorts:
        used = {i.n for i in ids if i.sort == srt}
        n = 0
        while n in used:
            n += 1
        out.append(lit(Id(srt, n)))
    return out


def holds(f: Formula, state: State, domain: tuple = (-3, 3), ids: frozenset = frozenset()) -> bool:
    """Truth of a program-free formula in a concrete state.

    Quantifiers range over the integer domain, the booleans and the ids
    given plus one unused id per sort; ill-sorted instances are skipped.
    """
    if quantifier_depth(f) > MAX_QUANTIFIER_DEPTH:
        raise UnsupportedFormula(f"quantifier nesting deeper than {MAX_QUANTIFIER_DEPTH}")
    return _holds(f, state, domain, ids)


def _holds(f: Formula, state: State, domain, ids) -> bool:
    if isinstance(f, Atom):
        v = eval_expr(state, f.expr)
        if not (isinstance(v, Lit) and v.sort == "bool"):
            raise SortError(f"{pretty_expr(f.expr)} is not a closed boolean")
        return v.value
    if isinstance(f, Not):
        return not _holds(f.body, state, domain, ids)
    if isinstance(f, And):
        return _holds(f.left, state, domain, ids) and _holds(f.right, state, domain, ids)
    if isinstance(f, Or):
        return _holds(f.left, state, domain, ids) or _holds(f.right, state, domain, ids)
    if isinstance(f, Implies):
        return (not _holds(f.left, state, domain, ids)) or _holds(f.right, state, domain, ids)
    if isinstance(f, Iff):
        return _holds(f.left, state, domain, ids) == _holds(f.right, state, domain, ids)
    if isinstance(f, (Exists, Forall)):
        want_all = isinstance(f, Forall)
        for c in _candidates(domain, ids):
            try:
                r = _holds(substitute(f.body, f.var, c), state, domain, ids)
            except SortError:
                continue
            if want_all and not r:
                return False
            if not want_all and r:
                return True
        return want_all
    raise UnsupportedFormula(f"{format_formula(f)} contains a program")


def _trace_ids(tr) -> frozenset:
    out = set()
    for x in tr:
        vals = x.values() if isinstance(x, State) else flatten_payload(x.payload)
        for v in vals:
            if isinstance(v, Lit) and isinstance(v.value, Id):
                out.add(v.value)
    return frozenset(out)


# --- sequents ----------------------------------------------------------------------


@dataclass(frozen=True)
class Sequent:
    gamma: tuple  # of Formula
    pc: frozenset
    trace: tuple
    succ: Formula
    sorts: tuple = ()  # (symbol, sort) for symbols that are not integers
    program: Optional[Program] = field(default=None, compare=False, hash=False)

    def __str__(self) -> str:
        g = ", ".join(format_formula(x) for x in self.gamma) or "∅"
        pc = "{" + ", ".join(sorted(pretty_expr(p) for p in self.pc)) + "}"
        return f"{g}, {pc} ⇒ {format_trace(self.trace)} {format_formula(self.succ)}"

    @property
    def variant(self) -> Variant:
        return self.program.variant if self.program is not None else Variant.PAR

    def sort_of(self, sym: str) -> str:
        for s, srt in self.sorts:
            if s == sym:
                return srt
        return "int"


def initial_sequent(pre: Formula, stmt: A.Stmt, post: Formula, program: Optional[Program] = None) -> Sequent:
    """``pre ⇒ ⟨σ*⟩ [stmt] post`` where σ* gives every variable a symbolic start value ``x#0``."""
    if program is None:
        program = Program(Variant.PAR, stmt)
    names = set(A.free_vars(stmt)) | formula_vars(pre) | formula_vars(post)
    for m in program.methods:
        names |= A.free_vars(m.body, frozenset(m.params))
    sorts = infer_sorts([stmt] + [m.body for m in program.methods])
    d: dict = {}
    sym_sorts = []
    for x in sorted(names):
        sym = f"{x}#0"
        d[x] = Var(sym)
        d[sym] = STAR
        if sorts.get(x, "int") != "int":
            sym_sorts.append((sym, sorts[x]))
    succ: Formula = Box(stmt, post)
    if program.variant == Variant.PROC:
        succ = Pool(((0, stmt),), post)
    return Sequent((pre,), frozenset(), (State(d),), succ, tuple(sym_sorts), program)


def _valuations(seq: Sequent, syms, domain) -> list[dict]:
    lo, hi = domain
    choices = []
    names = sorted(syms)
    for s in names:
        srt = seq.sort_of(s)
        if srt == "bool":
            choices.append([FF, TT])
        else:
            choices.append([lit(v) for v in range(lo, hi + 1)])
    return [dict(zip(names, c)) for c in itertools.product(*choices)]


def _pc_true(pc, env: State) -> bool:
    for p in pc:
        try:
            v = eval_expr(env, p)
        except EvalError:
            return False
        if v != TT:
            return False
    return True


@dataclass
class Discharge:
    valid: bool
    counter: Optional[dict] = None  # valuation refuting the sequent
    checked: int = 0  # number of valuations satisfying Γ and pc

    def __bool__(self) -> bool:
        return self.valid


def _relevant(seq: Sequent, rho: dict, domain) -> Optional[tuple]:
    """(first, last, ids) of ρ(τ) if ρ satisfies pc and Γ, else None."""
    env = State(rho)
    if not _pc_true(seq.pc, env):
        return None
    try:
        conc = concretize_trace(rho, seq.trace)
    except EvalError:
        return None
    ids = _trace_ids(conc)
    first = conc[0]
    try:
        if not all(holds(g, first, domain, ids) for g in seq.gamma):
            return None
    except (EvalError, SortError):
        return None
    return conc[0], conc[-1], ids


def discharge_fo(seq: Sequent, domain: tuple = (-3, 3)) -> Discharge:
    """Check a program-free sequent on every valuation of its symbols over ``domain``."""
    if not is_program_free(seq.succ):
        raise UnsupportedFormula("the succedent still contains a program")
    for g in seq.gamma:
        if not is_program_free(g):
            raise UnsupportedFormula("assumptions must be program-free")
    syms = trace_symbols(seq.trace) | _pc_symbols(seq.pc)
    n = 0
    for rho in _valuations(seq, syms, domain):
        r = _relevant(seq, rho, domain)
        if r is None:
            continue
        n += 1
        _first, last, ids = r
        try:
            ok = holds(seq.succ, last, domain, ids)
        except (EvalError, SortError):
            ok = False
        if not ok:
            return Discharge(False, rho, n)
    return Discharge(True, None, n)


def _pc_symbols(pc) -> frozenset:
    out: set = set()
    for p in pc:
        out |= expr_vars(p)
    return frozenset(out)


def feasible(seq: Sequent, domain: tuple) -> bool:
    """Some valuation over the domain satisfies both pc and Γ."""
    syms = trace_symbols(seq.trace) | _pc_symbols(seq.pc)
    return any(_relevant(seq, rho, domain) is not None for rho in _valuations(seq, syms, domain))


# --- rules -------------------------------------------------------------------------


def split_head(s: A.Stmt) -> tuple[A.Stmt, A.Stmt]:
    """First statement of a sequence and what follows it."""
    if isinstance(s, A.Seq):
        h, r = split_head(s.first)
        return h, A.seq(r, s.second)
    return s, EMPTY


def _box(seq: Sequent) -> Box:
    if not isinstance(seq.succ, Box):
        raise NoRuleMatches(f"expected a sequent Γ ⇒ τ [s]φ, got {format_formula(seq.succ)}")
    return seq.succ


def _ctx(seq: Sequent) -> EvalContext:
    return EvalContext(seq.program or Program(Variant.PAR, EMPTY))


def _with(seq: Sequent, ct: ConditionedTrace, succ: Formula) -> Sequent:
    return replace(seq, pc=seq.pc | ct.pc, trace=chop(seq.trace, ct.body), succ=succ)


def rule_empty(seq: Sequent) -> list[Sequent]:
    box = _box(seq)
    if box.stmt is not EMPTY:
        raise NoRuleMatches("Empty expects [∘]φ")
    return [replace(seq, succ=box.body)]


def rule_assign(seq: Sequent) -> list[Sequent]:
    box = _box(seq)
    head, rest = split_head(box.stmt)
    if not isinstance(head, A.Assign):
        raise NoRuleMatches("Assign expects [x := e; s]φ")
    sigma = seq.trace[-1]
    return [replace(seq, trace=chop(seq.trace, (sigma, update(sigma, head.target, head.expr))), succ=Box(rest, box.body, box.index))]


def _local_rule(kinds: tuple, shape: str):
    def rule(seq: Sequent) -> list[Sequent]:
        box = _box(seq)
        head, _rest = split_head(box.stmt)
        if not isinstance(head, kinds):
            raise NoRuleMatches(f"expected {shape}")
        out = []
        for ct in evaluate(seq.trace[-1], box.stmt, _ctx(seq)):
            if len(ct.body) == 1 and ct.cont == box.stmt:
                continue  # a blocked guard produces no finite trace
            if any(p == FF for p in ct.pc):
                continue
            out.append(_with(seq, ct, Box(ct.cont, box.body, box.index)))
        return out

    return rule


def rule_pool(seq: Sequent, rules: dict) -> list[Sequent]:
    """Interleave the indexed modalities and start pending method runs."""
    pool = seq.succ
    if not isinstance(pool, Pool):
        raise NoRuleMatches("Interleave expects a pool of indexed modalities")
    out: list[Sequent] = []
    live = [(i, s) for i, s in pool.tasks if s is not EMPTY]
    for k, (i, s) in enumerate(live):
        sub = replace(seq, succ=Box(s, pool.body, i))
        for prem in apply_rule(sub, rule_for(sub), rules=rules):
            others = live[:k] + live[k + 1:]
            if isinstance(prem.succ, Box) and prem.succ.index == i:
                tasks = others + [(i, prem.succ.stmt)]
            else:
                tasks = others
            out.append(replace(prem, succ=Pool(tuple(sorted(tasks, key=lambda t: t[0])), pool.body)))
    out.extend(rule_mtd_run(seq))
    if not live and not out:
        return [replace(seq, succ=pool.body)]
    return out


def rule_mtd_run(seq: Sequent) -> list[Sequent]:
    """Start one pending invocation ``invEv(m, v)`` as a new indexed task."""
    pool = seq.succ
    prog = seq.program
    if not isinstance(pool, Pool) or prog is None:
        return []
    evs = events(seq.trace)
    pending = []
    for e in evs:
        if e.kind == "invEv" and e.payload not in pending:
            calls = sum(1 for x in evs if x.kind == "invEv" and x.payload == e.payload)
            runs = sum(1 for x in evs if x.kind == "invREv" and x.payload == e.payload)
            if calls > runs:
                pending.append(e.payload)
    out = []
    nxt = max((i for i, _ in pool.tasks), default=0) + 1
    for m_lit, v in pending:
        m = prog.method(m_lit.value)
        sigma = seq.trace[-1]
        (x,) = m.params
        y = Fresh(sigma.keys()).local(x)
        ev = Event("invREv", (m_lit, v))
        tr = chop(seq.trace, (sigma, ev, sigma, update(sigma, y, v)))
        # side condition: the extended trace is well-formed under the counting policy
        if not check_trace(tr, default_policy(Variant.PROC)):
            continue
        body = A.rename(m.body, {x: Var(y)})
        tasks = tuple(sorted(pool.tasks + ((nxt, body),), key=lambda t: t[0]))
        out.append(replace(seq, trace=tr, succ=Pool(tasks, pool.body)))
    return out


RULES: dict[str, Callable] = {
    "Empty": rule_empty,
    "Assign": rule_assign,
    "Skip": _local_rule((A.Skip,), "[skip; s]φ"),
    "Cond": _local_rule((A.If,), "[if e {s} else {s'}; s'']φ"),
    "While": _local_rule((A.While,), "[while e {s}; s']φ"),
    "Local": _local_rule((A.Block,), "[{x; s}; s']φ"),
    "Input": _local_rule((A.Input,), "[input(x); s]φ"),
    "Atomic": _local_rule((A.Atomic,), "[atomic(s); s']φ"),
    "Par": _local_rule((A.Co,), "[co s || s' oc; s'']φ"),
    "GrdStmt": _local_rule((A.Guarded,), "[:: g -> s; s']φ"),
    "MtdCall": _local_rule((A.Call,), "[call(m, e); s]φ"),
}

_HEAD_RULE = {
    A.Assign: "Assign",
    A.Skip: "Skip",
    A.If: "Cond",
    A.While: "While",
    A.Block: "Local",
    A.Input: "Input",
    A.Atomic: "Atomic",
    A.Co: "Par",
    A.Guarded: "GrdStmt",
    A.Call: "MtdCall",
}


def rule_for(seq: Sequent) -> str:
    """Name of the rule matching the leading modality of the succedent."""
    f = seq.succ
    if isinstance(f, Pool):
        return "Interleave"
    if not isinstance(f, Box):
        raise NoRuleMatches("no modality left")
    if f.stmt is EMPTY:
        return "Empty"
    head, _ = split_head(f.stmt)
    try:
        return _HEAD_RULE[type(head)]
    except KeyError:
        raise NoRuleMatches(f"no rule for {type(head).__name__}") from None


def apply_rule(seq: Sequent, name: str, rules: Optional[dict] = None) -> list[Sequent]:
    rules = RULES if rules is None else rules
    if name == "Interleave":
        return rule_pool(seq, rules)
    if name == "MtdRun":
        return rule_mtd_run(seq)
    try:
        fn = rules[name]
    except KeyError:
        raise NoRuleMatches(f"unknown rule {name}") from None
    return fn(seq)


# --- proof search --------------------------------------------------------------------


@dataclass
class ProofNode:
    sequent: Sequent
    rule: str = ""
    children: list = field(default_factory=list)
    status: str = "open"  # closed | infeasible | failed | open
    note: str = ""

    def lines(self, indent: int = 0) -> list[str]:
        pad = "  " * indent
        head = f"{pad}{self.rule or self.status}: {self.sequent}"
        if self.note:
            head += f"   [{self.note}]"
        out = [head]
        for c in self.children:
            out.extend(c.lines(indent + 1))
        return out

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)


@dataclass
class ProofResult:
    proved: bool
    tree: ProofNode
    reason: str = ""
    counter: Optional[dict] = None
    leaf: Optional[Sequent] = None

    def render(self) -> str:
        return "\n".join(self.tree.lines())


@dataclass(frozen=True)
class Strategy:
    max_depth: int = 400
    loop_unroll: int = 8
    domain: tuple = (-3, 3)


class _Fail(Exception):
    def __init__(self, reason: str, leaf: Sequent, counter=None):
        super().__init__(reason)
        self.reason = reason
        self.leaf = leaf
        self.counter = counter


def prove(seq: Sequent, strategy: Optional[Strategy] = None, rules: Optional[dict] = None) -> ProofResult:
    """Symbolically execute the leading program and discharge every leaf.

    Branches whose path condition has no model on the domain are closed as
    infeasible.  Loops are unrolled at most ``loop_unroll`` times along a
    branch.
    """
    strategy = strategy or Strategy()
    rules = RULES if rules is None else rules
    root = ProofNode(seq)
    try:
        _prove(root, strategy, rules, 0, 0)
    except _Fail as f:
        return ProofResult(False, root, f.reason, f.counter, f.leaf)
    return ProofResult(True, root)


def _prove(node: ProofNode, st: Strategy, rules: dict, depth: int, unrolled: int) -> None:
    seq = node.sequent
    if depth > st.max_depth:
        node.status = "failed"
        raise _Fail("proof depth bound reached", seq)
    if not feasible(seq, st.domain):
        node.status, node.rule = "infeasible", "close"
        return
    if is_program_free(seq.succ):
        d = discharge_fo(seq, st.domain)
        node.rule = "FO"
        if d.valid:
            node.status = "closed"
            node.note = f"{d.checked} valuations"
            return
        node.status = "failed"
        node.note = "counter-valuation " + ", ".join(f"{k}={v}" for k, v in sorted(d.counter.items()))
        raise _Fail("first-order obligation fails", seq, d.counter)
    name = rule_for(seq)
    if name == "While":
        unrolled += 1
        if unrolled > st.loop_unroll:
            node.status = "failed"
            raise _Fail("loop unrolling bound reached", seq)
    node.rule = name
    prems = apply_rule(seq, name, rules)
    node.status = "closed"
    for p in prems:
        child = ProofNode(p)
        node.children.append(child)
        _prove(child, st, rules, depth + 1, unrolled)


# --- satisfaction over concrete traces ------------------------------------------------


def check_sat(tr: tuple, phi: Formula, program: Optional[Program] = None, bounds: Optional[Bounds] = None,
              domain: tuple = (-3, 3)) -> bool:
    """``tr ⊨ φ`` with modalities re-entering the enumerator from the last state.

    Only completed runs count (partial correctness).  A run cut by the step
    bound makes the verdict :class:`Indeterminate`; a run cut because it
    cycles has no finite completion and is ignored.
    """
    if not tr:
        raise ValueError("satisfaction needs a non-empty trace")
    ids = _trace_ids(tr)
    if isinstance(phi, Atom):
        return holds(phi, tr[-1], domain, ids)
    if isinstance(phi, Not):
        return not check_sat(tr, phi.body, program, bounds, domain)
    if isinstance(phi, And):
        return check_sat(tr, phi.left, program, bounds, domain) and check_sat(tr, phi.right, program, bounds, domain)
    if isinstance(phi, Or):
        return check_sat(tr, phi.left, program, bounds, domain) or check_sat(tr, phi.right, program, bounds, domain)
    if isinstance(phi, Implies):
        return (not check_sat(tr, phi.left, program, bounds, domain)) or check_sat(tr, phi.right, program, bounds, domain)
    if isinstance(phi, Iff):
        return check_sat(tr, phi.left, program, bounds, domain) == check_sat(tr, phi.right, program, bounds, domain)
    if isinstance(phi, (Exists, Forall)):
        want_all = isinstance(phi, Forall)
        for c in _candidates(domain, ids):
            try:
                r = check_sat(tr, substitute(phi.body, phi.var, c), program, bounds, domain)
            except SortError:
                continue
            if r != want_all:
                return r
        return want_all
    if isinstance(phi, Box):
        if phi.stmt is EMPTY:
            return check_sat(tr, phi.body, program, bounds, domain)
        base = program or Program(Variant.PAR, EMPTY)
        prog = replace(base, main=phi.stmt)
        runs = enumerate_traces(prog, bounds=bounds, initial=tr[-1]).runs
        for r in runs:
            if r.status == "truncated" and r.reason != "cycle":
                raise Indeterminate("enumeration under a modality hit the step bound")
        for r in runs:
            if r.status == "completed" and not check_sat(chop(tr, r.trace), phi.body, program, bounds, domain):
                return False
        return True
    raise UnsupportedFormula(f"cannot evaluate {format_formula(phi)} on a trace")


# --- soundness harness ------------------------------------------------------------------


@dataclass(frozen=True)
class Triple:
    name: str
    pre: str
    program: str
    post: str
    variant: Variant = Variant.PAR


@dataclass
class TripleReport:
    triple: Triple
    proved: bool
    reason: str = ""
    violations: list = field(default_factory=list)  # (initial state, final state)
    runs_checked: int = 0


@dataclass
class HarnessReport:
    entries: list

    @property
    def violations(self) -> int:
        return sum(len(e.violations) for e in self.entries)

    @property
    def proved(self) -> int:
        return sum(1 for e in self.entries if e.proved)

    def lines(self) -> list[str]:
        out = []
        for e in self.entries:
            mark = "proved" if e.proved else "not proved"
            out.append(f"{e.triple.name}: {mark}, {e.runs_checked} runs checked, {len(e.violations)} violations")
            for init, final in e.violations[:3]:
                out.append(f"    from {init} reached {final}")
        return out


def _triple_parts(t: Triple):
    from .lang.parser import parse_program

    prog = parse_program(t.program, t.variant)
    return parse_formula(t.pre, t.variant), prog, parse_formula(t.post, t.variant)


def soundness_harness(corpus: list[Triple], domain: tuple = (-3, 3), rules: Optional[dict] = None,
                      strategy: Optional[Strategy] = None, bounds: Optional[Bounds] = None) -> HarnessReport:
    """Cross-check every proved triple against enumerated concrete runs.

    For each valuation of the program variables over the domain that
    satisfies the precondition, every completed run must end in a state
    satisfying the postcondition.
    """
    strategy = strategy or Strategy(domain=domain)
    bounds = bounds or Bounds(domain=domain, max_steps=300, max_traces=2000)
    entries = []
    for t in corpus:
        pre, prog, post = _triple_parts(t)
        seq = initial_sequent(pre, prog.main, post, prog)
        res = prove(seq, strategy, rules)
        rep = TripleReport(t, res.proved, res.reason)
        entries.append(rep)
        if not res.proved:
            continue
        first = seq.trace[0]
        names = sorted(k for k in first if not k.endswith("#0"))
        for rho in _valuations(seq, [f"{x}#0" for x in names], domain):
            init = State({x: rho[f"{x}#0"] for x in names})
            try:
                if not holds(pre, init, domain):
                    continue
            except (EvalError, SortError):
                continue
            for run in enumerate_traces(prog, bounds=bounds, initial=init).runs:
                if run.status != "completed":
                    continue
                rep.runs_checked += 1
                final = run.trace[-1]
                try:
                    ok = holds(post, final, domain, _trace_ids(run.trace))
                except (EvalError, SortError):
                    ok = False
                if not ok:
                    rep.violations.append((init, final))
    return HarnessReport(entries)


def mutated_rules(**overrides) -> dict:
    out = dict(RULES)
    out.update(overrides)
    return out


def assign_without_update(seq: Sequent) -> list[Sequent]:
    """A deliberately broken Assign rule that forgets the state update."""
    box = _box(seq)
    head, rest = split_head(box.stmt)
    if not isinstance(head, A.Assign):
        raise NoRuleMatches("Assign expects [x := e; s]φ")
    sigma = seq.trace[-1]
    return [replace(seq, trace=chop(seq.trace, (sigma, sigma)), succ=Box(rest, box.body, box.index))]


CORPUS = [
    Triple("assign-chain", "tt", "x := 1; y := x + 1", "y == 2"),
    Triple("increment", "x > 0", "y := x + 1", "y > 1"),
    Triple("abs", "tt", "if x > 0 { y := x } else { y := 0 - x }", "y >= 0"),
    Triple("skip", "tt", "skip", "x == x"),
    Triple("countdown", "x == 2", "while x > 0 { x := x - 1 }", "x == 0"),
    Triple("counter", "y == 0", "x := 3; while x > 0 { x := x - 1; y := y + 1 }", "x == 0 /\\ y == 3"),
    Triple("guard-then", "y == 0", "if y == 0 { z := 1 } else { skip }", "z == 1"),
    Triple("square", "tt", "input(x); y := x * x", "y >= 0"),
    Triple("local-copy", "x >= 0 /\\ x <= 2", "{ t; t := x; x := t + 1 }", "x >= 1"),
    Triple("parallel", "tt", "co x := 1 || y := 2 oc", "x == 1 /\\ y == 2"),
]

# invalid triples a sound prover must reject; a broken rule may accept them
PROBES = [
    Triple("probe-overwrite", "x == 0", "x := 1", "x == 0"),
    Triple("probe-stale", "y == 3", "y := 5", "y == 3"),
]
