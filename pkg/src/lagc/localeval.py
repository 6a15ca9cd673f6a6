"""Local symbolic evaluation: one step of a statement in a given state.

``evaluate(state, stmt, ctx)`` returns the conditioned traces of the first
step of ``stmt``, each carrying the remaining statement as continuation
(``EMPTY`` when nothing is left).  Local evaluation never looks at the
global trace; the context only supplies candidate ids chosen by the
composition layer.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .core import FF, TT, BinOp, Lit, SExpr, State, Var, eval_expr, expr_vars, lit, update
from .errors import AtomicDivergence, EvalError, GateError, OwnershipError, SortError, UnknownMethod
from .lang import ast as A
from .lang.ast import EMPTY, Program, Variant
from .lang.program import infer_sorts
from .trace import ConditionedTrace, chop, insert_event, is_consistent

ATOMIC_BOUND = 10_000


@dataclass
class EvalContext:
    """What a local step may know besides the state.

    ``obj`` is the executing process or object (a literal id or a symbolic
    variable), ``destiny`` the future the current task resolves.  The id
    lists are candidates for message ids that a step may use.
    """

    program: Program
    obj: Optional[SExpr] = None
    destiny: Optional[SExpr] = None
    send_ids: Sequence[Lit] = ()
    recv_ids: Sequence[Lit] = ()
    invoke_ids: Sequence[Lit] = ()
    labels: dict = field(default_factory=dict)
    atomic_bound: int = ATOMIC_BOUND

    @property
    def variant(self) -> Variant:
        return self.program.variant


class Fresh:
    """Deterministic supply of names not occurring in a state.

    Symbolic variables are ``<Base>#<k>``; renamed program variables are
    ``x'``, ``x'2``, ...  Both shapes are impossible in source programs.
    """

    def __init__(self, taken):
        self.taken = set(taken)

    def symbol(self, base: str = "Y") -> str:
        k = 0
        while f"{base}#{k}" in self.taken:
            k += 1
        name = f"{base}#{k}"
        self.taken.add(name)
        return name

    def local(self, name: str) -> str:
        base = name.split("'")[0]
        cand = base + "'"
        k = 1
        while cand in self.taken:
            k += 1
            cand = f"{base}'{k}"
        self.taken.add(cand)
        return cand


def is_symbol_name(name: str) -> bool:
    return "#" in name


def _ct(body, cont, pc=()) -> ConditionedTrace:
    return ConditionedTrace(frozenset(pc), tuple(body), cont)


def cond_true(c: SExpr) -> SExpr:
    if isinstance(c, Lit):
        if c.sort != "bool":
            raise SortError(f"condition of sort {c.sort}")
        return c
    return c


def cond_false(c: SExpr) -> SExpr:
    if isinstance(c, Lit):
        if c.sort != "bool":
            raise SortError(f"condition of sort {c.sort}")
        return FF if c.value else TT
    return BinOp("==", c, FF)


class LocalEvaluator:
    def __init__(self, ctx: EvalContext):
        self.ctx = ctx

    # --- helpers
    def val(self, state: State, e: SExpr) -> SExpr:
        ctx = self.ctx
        if "this" in expr_vars(e):
            if ctx.obj is None:
                raise EvalError("this used outside an object")
            e = A.subst_expr(e, {"this": ctx.obj})
        return eval_expr(state, e)

    def check_target(self, state: State, x: str) -> None:
        if self.ctx.variant in (Variant.ACTOR, Variant.ACTIVE_OBJECT) and x not in state:
            raise OwnershipError(f"assignment to {x}, which is neither a local variable nor a field of this object")

    def event_step(self, state: State, kind: str, payload, fresh=(), assigns=()) -> tuple:
        tr = insert_event(state, kind, payload, fresh)
        after = tr[-1]
        if assigns:
            nxt = after
            for x, e in assigns:
                nxt = update(nxt, x, e)
            return tr + (nxt,)
        return tr

    def fields_renaming(self, cls: Optional[A.ClassDecl]) -> dict:
        if cls is None or self.ctx.obj is None:
            return {}
        owner = str(self.ctx.obj.value) if isinstance(self.ctx.obj, Lit) else str(self.ctx.obj)
        return {f: Var(f"{owner}.{f}") for f in cls.fields}

    # --- dispatcher
    def eval(self, state: State, s: A.Stmt) -> list[ConditionedTrace]:
        if s is EMPTY:
            return []
        meth = getattr(self, "eval_" + type(s).__name__, None)
        if meth is None:
            raise GateError(f"no local rule for {type(s).__name__}")
        return meth(state, s)

    def eval_Skip(self, state, s):
        return [_ct((state,), EMPTY)]

    def eval_Assign(self, state, s):
        self.check_target(state, s.target)
        rhs = s.expr
        if "this" in expr_vars(rhs):
            rhs = A.subst_expr(rhs, {"this": self.ctx.obj})
        return [_ct((state, update(state, s.target, rhs)), EMPTY)]

    def eval_If(self, state, s):
        c = self.val(state, s.cond)
        return [
            _ct((state,), s.then, [cond_true(c)]),
            _ct((state,), EMPTY if s.orelse is None else s.orelse, [cond_false(c)]),
        ]

    def eval_While(self, state, s):
        return self.eval(state, A.If(s.cond, A.seq(s.body, s)))

    def eval_Seq(self, state, s):
        out = []
        for ct in self.eval(state, s.first):
            cont = ct.cont
            if cont is EMPTY:
                cont = s.second
            elif not isinstance(cont, A.JumpTo):
                cont = A.Seq(cont, s.second)
            out.append(ConditionedTrace(ct.pc, ct.body, cont))
        return out

    def eval_Co(self, state, s):
        out = []
        for ct in self.eval(state, s.left):
            if isinstance(ct.cont, A.JumpTo):
                raise GateError("goto out of a co branch")
            cont = s.right if ct.cont is EMPTY else A.Co(ct.cont, s.right)
            out.append(ConditionedTrace(ct.pc, ct.body, cont))
        for ct in self.eval(state, s.right):
            if isinstance(ct.cont, A.JumpTo):
                raise GateError("goto out of a co branch")
            cont = s.left if ct.cont is EMPTY else A.Co(s.left, ct.cont)
            out.append(ConditionedTrace(ct.pc, ct.body, cont))
        return out

    def eval_Atomic(self, state, s):
        body = s.body
        parts = A.flatten_seq(body)
        if parts and isinstance(parts[0], A.Guarded):
            # blocking atomic: only enter when the guard holds
            g = parts[0]
            c = self.val(state, g.guard)
            rest = A.seq(g.body, *parts[1:])
            out = [_ct((state,), s, [cond_false(c)])]
            for ct in self._unfold(state, rest):
                out.append(ConditionedTrace(ct.pc | {cond_true(c)}, ct.body, EMPTY))
            return out
        return self._unfold(state, body)

    def _unfold(self, state, body) -> list[ConditionedTrace]:
        done: list[ConditionedTrace] = []
        work = deque([(frozenset(), (state,), body)])
        steps = 0
        while work:
            pc, tr, st = work.popleft()
            if isinstance(st, A.JumpTo):
                st = st.target
            for ct in self.eval(tr[-1], st):
                steps += 1
                if steps > self.ctx.atomic_bound:
                    raise AtomicDivergence(f"atomic block exceeded {self.ctx.atomic_bound} unfoldings")
                npc = pc | ct.pc
                if not is_consistent(npc):
                    continue
                if len(ct.body) == 1 and ct.cont == st:
                    continue  # a blocked guard inside the block makes no progress
                ntr = chop(tr, ct.body)
                cont = ct.cont
                if isinstance(cont, A.JumpTo) and cont.target is EMPTY:
                    cont = EMPTY
                if cont is EMPTY:
                    done.append(ConditionedTrace(npc, ntr, EMPTY))
                else:
                    work.append((npc, ntr, cont))
        return done

    def eval_Block(self, state, s):
        if not s.decls:
            return self.eval(state, s.body)
        x = s.decls[0]
        fresh = Fresh(state.keys())
        x2 = fresh.local(x)
        sort = infer_sorts([s.body]).get(x, "int")
        init = FF if sort == "bool" else lit(0)
        body = A.rename(s.body, {x: Var(x2)})
        rest = A.Block(s.decls[1:], body) if len(s.decls) > 1 else body
        return [_ct((state, update(state, x2, init)), rest)]

    def eval_Input(self, state, s):
        self.check_target(state, s.target)
        Y = Fresh(state.keys()).symbol("Y")
        return [_ct(self.event_step(state, "inpEv", (Var(Y),), [Y], [(s.target, Var(Y))]), EMPTY)]

    def eval_Call(self, state, s):
        if self.ctx.program.method(s.method) is None:
            raise UnknownMethod(s.method)
        return [_ct(self.event_step(state, "invEv", (lit(s.method), self.val(state, s.arg))), EMPTY)]

    def eval_Guarded(self, state, s):
        c = self.val(state, s.guard)
        return [_ct((state,), s.body, [cond_true(c)]), _ct((state,), s, [cond_false(c)])]

    def eval_Goto(self, state, s):
        try:
            target = self.ctx.labels[s.label]
        except KeyError:
            raise GateError(f"goto to unknown label {s.label}") from None
        return [_ct((state,), A.JumpTo(target))]

    def eval_Labeled(self, state, s):
        return self.eval(state, s.body)

    def eval_JumpTo(self, state, s):
        return self.eval(state, s.target)

    def eval_Select(self, state, s, blocked: Optional[A.Stmt] = None):
        out = []
        falses = []
        else_body = None
        for b in s.branches:
            if b.guard is None:
                else_body = b.body
                continue
            if b.guard == TT:
                # an executable statement used as guard runs in the same step
                out.extend(self.eval(state, b.body))
                continue
            c = self.val(state, b.guard)
            out.append(_ct((state,), b.body, [cond_true(c)]))
            falses.append(cond_false(c))
        if else_body is not None:
            out.append(_ct((state,), else_body, falses))
        elif falses:
            out.append(_ct((state,), blocked if blocked is not None else s, falses))
        return out

    def eval_Repeat(self, state, s):
        unrolled = A.Select(tuple(A.Branch(b.guard, A.seq(b.body, s)) for b in s.branches))
        return self.eval_Select(state, unrolled, blocked=s)

    def eval_Send(self, state, s):
        v, d = self.val(state, s.value), self.val(state, s.dest)
        return [_ct(self.event_step(state, "sendEv", (v, d, i)), EMPTY) for i in self.ctx.send_ids]

    def eval_Receive(self, state, s):
        self.check_target(state, s.target)
        src = self.val(state, s.src)
        out = []
        for i in self.ctx.recv_ids:
            Y = Fresh(state.keys()).symbol("Y")
            tr = self.event_step(state, "receiveEv", (Var(Y), src, i), [Y], [(s.target, Var(Y))])
            out.append(_ct(tr, EMPTY))
        return out

    def eval_Spawn(self, state, s):
        if self.ctx.program.method(s.method) is None:
            raise UnknownMethod(s.method)
        P = Fresh(state.keys()).symbol("P")
        payload = (lit(s.method), self.val(state, s.arg), Var(P))
        return [_ct(self.event_step(state, "spawnEv", payload, [P], [(s.target, Var(P))]), EMPTY)]

    def eval_New(self, state, s):
        self.check_target(state, s.target)
        cls = self.ctx.program.class_decl(s.cls)
        if cls is None:
            raise GateError(f"unknown class {s.cls}")
        if len(cls.fields) != len(s.args):
            raise GateError(f"new {s.cls}: arity mismatch")
        args = tuple(self.val(state, a) for a in s.args)
        X = Fresh(state.keys()).symbol("X")
        assigns = [(s.target, Var(X))] + [(f"{X}.{f}", a) for f, a in zip(cls.fields, args)]
        return [_ct(self.event_step(state, "newEv", (Var(X), args), [X], assigns), EMPTY)]

    def eval_AsyncCall(self, state, s):
        m = self.ctx.program.method(s.method)
        if m is None:
            raise UnknownMethod(s.method)
        if len(m.params) != len(s.args):
            raise GateError(f"{s.method}: arity mismatch")
        args = tuple(self.val(state, a) for a in s.args)
        callee = self.val(state, s.callee)
        if self.ctx.variant == Variant.ACTIVE_OBJECT:
            F = Fresh(state.keys()).symbol("F")
            assigns = [(s.target, Var(F))] if s.target is not None else []
            if s.target is not None:
                self.check_target(state, s.target)
            payload = (args, callee, lit(s.method), Var(F))
            return [_ct(self.event_step(state, "invEv", payload, [F], assigns), EMPTY)]
        payload_of = lambda i: (args, callee, lit(s.method), i)  # noqa: E731
        return [_ct(self.event_step(state, "invEv", payload_of(i)), EMPTY) for i in self.ctx.send_ids]

    def eval_Get(self, state, s):
        self.check_target(state, s.target)
        f = self.val(state, s.fut)
        if isinstance(f, Lit) and f.sort != "fid":
            raise SortError(f"get on a value of sort {f.sort}")
        V = Fresh(state.keys()).symbol("V")
        return [_ct(self.event_step(state, "compREv", (f, Var(V)), [V], [(s.target, Var(V))]), EMPTY)]

    def eval_Return(self, state, s):
        if self.ctx.destiny is None:
            raise GateError("return outside of a method")
        v = self.val(state, s.expr)
        return [_ct(self.event_step(state, "compEv", (self.ctx.destiny, v)), EMPTY)]

    def eval_AwaitBool(self, state, s):
        return [_ct((state,), EMPTY, [cond_true(self.val(state, s.cond))])]

    def eval_AwaitFut(self, state, s):
        f = self.val(state, s.fut)
        if isinstance(f, Lit) and f.sort != "fid":
            raise SortError(f"await on a value of sort {f.sort}")
        V = Fresh(state.keys()).symbol("V")
        return [_ct(self.event_step(state, "compREv", (f, Var(V)), [V]), EMPTY)]

    def eval_SelfCall(self, state, s):
        m = self.ctx.program.method(s.method)
        if m is None:
            raise UnknownMethod(s.method)
        args = [self.val(state, a) for a in s.args]
        body = _strip_return(m.body)
        body = A.rename(body, self.fields_renaming(self.ctx.program.class_of_method(m.name)))
        assigns = [A.Assign(x, a) for x, a in zip(m.params, args)]
        inlined = A.Block(tuple(m.params), A.seq(*assigns, body)) if m.params else body
        return self.eval(state, inlined)

    # --- method entry rules
    def enter_method(self, state: State, m: A.MethodDecl) -> list[ConditionedTrace]:
        V = self.ctx.variant
        fresh = Fresh(state.keys())
        if V in (Variant.PROC, Variant.MULTI):
            (x,) = m.params
            y = fresh.local(x)
            W = fresh.symbol("W")
            tr = self.event_step(state, "invREv", (lit(m.name), Var(W)), [W], [(y, Var(W))])
            return [_ct(tr, A.rename(m.body, {x: Var(y)}))]
        cls = self.ctx.program.class_of_method(m.name)
        ren = self.fields_renaming(cls)
        locals_ = [fresh.local(x) for x in m.params]
        syms = [fresh.symbol("Z" if V == Variant.ACTOR else "X") for _ in m.params]
        ren.update({x: Var(y) for x, y in zip(m.params, locals_)})
        body = A.rename(m.body, ren)
        assigns = [(y, Var(Z)) for y, Z in zip(locals_, syms)]
        args = tuple(Var(Z) for Z in syms)
        if V == Variant.ACTOR:
            out = []
            for i in self.ctx.invoke_ids:
                tr = self.event_step(state, "invREv", (args, lit(m.name), i), syms, assigns)
                out.append(_ct(tr, body))
            return out
        if V == Variant.ACTIVE_OBJECT:
            if self.ctx.destiny is None:
                raise GateError("method activation needs a future")
            caller = fresh.symbol("C")
            payload = (args, Var(caller), lit(m.name), self.ctx.destiny)
            tr = self.event_step(state, "invREv", payload, syms + [caller], assigns)
            return [_ct(tr, body)]
        raise GateError(f"methods are not part of the {V.value} language")


def _strip_return(body: A.Stmt) -> A.Stmt:
    # the result of a synchronous self call is discarded; its return must not
    # resolve the caller's future
    if isinstance(body, A.Block):
        return A.Block(body.decls, _strip_return(body.body))
    parts = A.flatten_seq(body)
    if parts and isinstance(parts[-1], A.Return):
        parts = parts[:-1]
    return A.seq(*parts) if parts else A.Skip()


def _unwrap(cts: list[ConditionedTrace]) -> list[ConditionedTrace]:
    out = []
    for ct in cts:
        if isinstance(ct.cont, A.JumpTo):
            ct = ConditionedTrace(ct.pc, ct.body, ct.cont.target)
        out.append(ct)
    return out


def evaluate(state: State, stmt: A.Stmt, ctx: EvalContext) -> list[ConditionedTrace]:
    """All conditioned traces of one local step of ``stmt`` from ``state``."""
    return _unwrap(LocalEvaluator(ctx).eval(state, stmt))


def evaluate_method(state: State, method: A.MethodDecl | str, ctx: EvalContext) -> list[ConditionedTrace]:
    """The activation step of a method: its reaction event plus parameter binding."""
    if isinstance(method, str):
        m = ctx.program.method(method)
        if m is None:
            raise UnknownMethod(method)
        method = m
    return LocalEvaluator(ctx).enter_method(state, method)
