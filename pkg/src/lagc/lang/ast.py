"""Statement syntax tree and program tables.

Expressions reuse :mod:`lagc.core` (``Var``, ``Lit``, ``BinOp``).  The name
``this`` is an ordinary variable that local evaluation replaces by the
executing object.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Optional

from ..core import BinOp, Lit, SExpr, Var


class Variant(str, Enum):
    SEQ = "SEQ"
    PAR = "PAR"
    PROC = "PROC"
    MULTI = "MULTI"
    PROMELA_MINI = "PROMELA_MINI"
    ACTOR = "ACTOR"
    ACTIVE_OBJECT = "ACTIVE_OBJECT"

    @classmethod
    def parse(cls, text: str) -> "Variant":
        key = text.strip().upper().replace("-", "_")
        aliases = {"AO": "ACTIVE_OBJECT", "PROMELA": "PROMELA_MINI", "WHILE": "SEQ"}
        return cls(aliases.get(key, key))


class Stmt:
    """Base class of statements."""

    __slots__ = ()

    def __str__(self) -> str:
        from .pretty import pretty

        return pretty(self)


@dataclass(frozen=True, eq=True)
class _EmptyCont(Stmt):
    """The empty continuation; evaluating it yields no traces."""

    def __repr__(self) -> str:
        return "EMPTY"

    def __reduce__(self):
        return "EMPTY"


EMPTY = _EmptyCont()


@dataclass(frozen=True)
class Skip(Stmt):
    pass


@dataclass(frozen=True)
class Assign(Stmt):
    target: str
    expr: SExpr


@dataclass(frozen=True)
class Spawn(Stmt):
    target: str
    method: str
    arg: SExpr


@dataclass(frozen=True)
class New(Stmt):
    target: str
    cls: str
    args: tuple


@dataclass(frozen=True)
class AsyncCall(Stmt):
    """``x!m(args)`` (target None) or ``f := x!m(args)``."""

    target: Optional[str]
    callee: SExpr
    method: str
    args: tuple


@dataclass(frozen=True)
class Get(Stmt):
    target: str
    fut: SExpr


@dataclass(frozen=True)
class If(Stmt):
    cond: SExpr
    then: Stmt
    orelse: Optional[Stmt] = None


@dataclass(frozen=True)
class While(Stmt):
    cond: SExpr
    body: Stmt


@dataclass(frozen=True)
class Seq(Stmt):
    first: Stmt
    second: Stmt


@dataclass(frozen=True)
class Co(Stmt):
    left: Stmt
    right: Stmt


@dataclass(frozen=True)
class Atomic(Stmt):
    body: Stmt


@dataclass(frozen=True)
class Block(Stmt):
    decls: tuple
    body: Stmt


@dataclass(frozen=True)
class Input(Stmt):
    target: str


@dataclass(frozen=True)
class Call(Stmt):
    method: str
    arg: SExpr


@dataclass(frozen=True)
class Guarded(Stmt):
    guard: SExpr
    body: Stmt


@dataclass(frozen=True)
class Goto(Stmt):
    label: str


@dataclass(frozen=True)
class Labeled(Stmt):
    label: str
    body: Stmt


@dataclass(frozen=True)
class Send(Stmt):
    value: SExpr
    dest: SExpr


@dataclass(frozen=True)
class Receive(Stmt):
    target: str
    src: SExpr


@dataclass(frozen=True)
class AwaitBool(Stmt):
    cond: SExpr


@dataclass(frozen=True)
class AwaitFut(Stmt):
    fut: SExpr


@dataclass(frozen=True)
class Return(Stmt):
    expr: SExpr


@dataclass(frozen=True)
class SelfCall(Stmt):
    method: str
    args: tuple


@dataclass(frozen=True)
class Branch:
    guard: Optional[SExpr]  # None marks ``else``
    body: Stmt


@dataclass(frozen=True)
class Select(Stmt):
    branches: tuple


@dataclass(frozen=True)
class Repeat(Stmt):
    branches: tuple


@dataclass(frozen=True)
class Break(Stmt):
    pass


@dataclass(frozen=True)
class JumpTo(Stmt):
    """Internal: the result of a ``goto``; a sequence does not extend it."""

    target: Stmt


def seq(*parts: Stmt) -> Stmt:
    """Right-nested sequence, dropping empty continuations."""
    items = [p for p in parts if p is not EMPTY]
    if not items:
        return EMPTY
    out = items[-1]
    for p in reversed(items[:-1]):
        out = Seq(p, out)
    return out


def flatten_seq(s: Stmt) -> list[Stmt]:
    if isinstance(s, Seq):
        return flatten_seq(s.first) + flatten_seq(s.second)
    if s is EMPTY:
        return []
    return [s]


def head_of(s: Stmt) -> Stmt:
    while isinstance(s, Seq):
        s = s.first
    return s


# --- program tables ------------------------------------------------------------


@dataclass(frozen=True)
class MethodDecl:
    name: str
    params: tuple
    body: Stmt
    cls: Optional[str] = None


@dataclass(frozen=True)
class ClassDecl:
    name: str
    fields: tuple
    methods: tuple


@dataclass(frozen=True)
class ChannelDecl:
    name: str  # variable bound to the channel id
    capacity: int
    owner: Optional[str] = None  # proctype name for local channels


@dataclass(frozen=True)
class ProcType:
    name: str
    body: Stmt


@dataclass(frozen=True)
class Program:
    variant: Variant
    main: Stmt = EMPTY
    methods: tuple = ()
    classes: tuple = ()
    channels: tuple = ()
    proctypes: tuple = ()
    globals: tuple = ()  # (name, sort) declared at top level

    def method(self, name: str) -> Optional[MethodDecl]:
        for m in self.methods:
            if m.name == name:
                return m
        for c in self.classes:
            for m in c.methods:
                if m.name == name:
                    return m
        return None

    def all_methods(self) -> list[MethodDecl]:
        out = list(self.methods)
        for c in self.classes:
            out.extend(c.methods)
        return out

    def class_decl(self, name: str) -> Optional[ClassDecl]:
        for c in self.classes:
            if c.name == name:
                return c
        return None

    def class_of_method(self, name: str) -> Optional[ClassDecl]:
        for c in self.classes:
            if any(m.name == name for m in c.methods):
                return c
        return None


# --- traversal helpers ---------------------------------------------------------


def children(s: Stmt) -> Iterator[Stmt]:
    if isinstance(s, (Seq,)):
        yield s.first
        yield s.second
    elif isinstance(s, Co):
        yield s.left
        yield s.right
    elif isinstance(s, If):
        yield s.then
        if s.orelse is not None:
            yield s.orelse
    elif isinstance(s, (While, Atomic, Block, Guarded, Labeled)):
        yield s.body
    elif isinstance(s, (Select, Repeat)):
        for b in s.branches:
            yield b.body
    elif isinstance(s, JumpTo):
        yield s.target


def walk(s: Stmt) -> Iterator[Stmt]:
    yield s
    for c in children(s):
        yield from walk(c)


def stmt_exprs(s: Stmt) -> list[SExpr]:
    """Expressions that appear directly in ``s`` (not in sub-statements)."""
    if isinstance(s, Assign):
        return [s.expr]
    if isinstance(s, (Spawn,)):
        return [s.arg]
    if isinstance(s, New):
        return list(s.args)
    if isinstance(s, AsyncCall):
        return [s.callee, *s.args]
    if isinstance(s, Get):
        return [s.fut]
    if isinstance(s, (If, While)):
        return [s.cond]
    if isinstance(s, Call):
        return [s.arg]
    if isinstance(s, Guarded):
        return [s.guard]
    if isinstance(s, Send):
        return [s.value, s.dest]
    if isinstance(s, Receive):
        return [s.src]
    if isinstance(s, AwaitBool):
        return [s.cond]
    if isinstance(s, AwaitFut):
        return [s.fut]
    if isinstance(s, Return):
        return [s.expr]
    if isinstance(s, SelfCall):
        return list(s.args)
    if isinstance(s, (Select, Repeat)):
        return [b.guard for b in s.branches if b.guard is not None]
    return []


def stmt_target(s: Stmt) -> Optional[str]:
    if isinstance(s, (Assign, Spawn, New, Get, Input, Receive)):
        return s.target
    if isinstance(s, AsyncCall):
        return s.target
    return None


def subst_expr(e: SExpr, ren: dict) -> SExpr:
    """Replace variables by expressions (``ren`` maps names to SExpr)."""
    if isinstance(e, Var):
        return ren.get(e.name, e)
    if isinstance(e, BinOp):
        return BinOp(e.op, subst_expr(e.left, ren), subst_expr(e.right, ren))
    return e


def _rn(name: Optional[str], ren: dict) -> Optional[str]:
    if name is None or name not in ren:
        return name
    v = ren[name]
    if not isinstance(v, Var):
        raise ValueError(f"cannot assign to the substituted expression for {name}")
    return v.name


def rename(s: Stmt, ren: dict) -> Stmt:
    """Capture-avoiding substitution ``s[x <- e]``; inner declarations shadow."""
    if not ren or s is EMPTY:
        return s
    se = lambda e: subst_expr(e, ren)  # noqa: E731
    if isinstance(s, Skip) or isinstance(s, (Goto, Break)):
        return s
    if isinstance(s, Assign):
        return Assign(_rn(s.target, ren), se(s.expr))
    if isinstance(s, Spawn):
        return Spawn(_rn(s.target, ren), s.method, se(s.arg))
    if isinstance(s, New):
        return New(_rn(s.target, ren), s.cls, tuple(se(a) for a in s.args))
    if isinstance(s, AsyncCall):
        return AsyncCall(_rn(s.target, ren), se(s.callee), s.method, tuple(se(a) for a in s.args))
    if isinstance(s, Get):
        return Get(_rn(s.target, ren), se(s.fut))
    if isinstance(s, If):
        return If(se(s.cond), rename(s.then, ren), None if s.orelse is None else rename(s.orelse, ren))
    if isinstance(s, While):
        return While(se(s.cond), rename(s.body, ren))
    if isinstance(s, Seq):
        return Seq(rename(s.first, ren), rename(s.second, ren))
    if isinstance(s, Co):
        return Co(rename(s.left, ren), rename(s.right, ren))
    if isinstance(s, Atomic):
        return Atomic(rename(s.body, ren))
    if isinstance(s, Block):
        inner = {k: v for k, v in ren.items() if k not in s.decls}
        return Block(s.decls, rename(s.body, inner))
    if isinstance(s, Input):
        return Input(_rn(s.target, ren))
    if isinstance(s, Call):
        return Call(s.method, se(s.arg))
    if isinstance(s, Guarded):
        return Guarded(se(s.guard), rename(s.body, ren))
    if isinstance(s, Labeled):
        return Labeled(s.label, rename(s.body, ren))
    if isinstance(s, Send):
        return Send(se(s.value), se(s.dest))
    if isinstance(s, Receive):
        return Receive(_rn(s.target, ren), se(s.src))
    if isinstance(s, AwaitBool):
        return AwaitBool(se(s.cond))
    if isinstance(s, AwaitFut):
        return AwaitFut(se(s.fut))
    if isinstance(s, Return):
        return Return(se(s.expr))
    if isinstance(s, SelfCall):
        return SelfCall(s.method, tuple(se(a) for a in s.args))
    if isinstance(s, (Select, Repeat)):
        br = tuple(Branch(None if b.guard is None else se(b.guard), rename(b.body, ren)) for b in s.branches)
        return type(s)(br)
    if isinstance(s, JumpTo):
        return JumpTo(rename(s.target, ren))
    raise TypeError(f"rename: unknown statement {s!r}")


def free_vars(s: Stmt, bound: frozenset = frozenset()) -> set[str]:
    """Variables occurring free in ``s`` (block declarations bind)."""
    from ..core import expr_vars

    out: set[str] = set()
    if s is EMPTY:
        return out
    if isinstance(s, Block):
        return free_vars(s.body, bound | frozenset(s.decls))
    for e in stmt_exprs(s):
        out |= set(expr_vars(e)) - bound
    t = stmt_target(s)
    if t is not None and t not in bound:
        out.add(t)
    for c in children(s):
        out |= free_vars(c, bound)
    out.discard("this")
    return out


def is_bool_literal(e: SExpr) -> bool:
    return isinstance(e, Lit) and e.sort == "bool"
