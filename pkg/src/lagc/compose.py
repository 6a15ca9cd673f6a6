"""Global composition: step rules per language variant and bounded enumeration.

A configuration pairs a concrete global trace with the pending tasks.  A
task is ``(owner, destiny, statement)``: the process or object running it,
the future it resolves (active objects only) and what is left to execute.
:func:`step` applies every rule instance once; :func:`enumerate_traces`
explores all maximal runs depth first.
"""

from __future__ import annotations

import itertools
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .core import BinOp, Id, Lit, State, Var, eval_expr, lit, value_key
from .errors import ConcretizationError, EvalError
from .lang import ast as A
from .lang.ast import EMPTY, Program, Variant
from .lang.pretty import pretty
from .lang.program import initial_state, promela_setup
from .localeval import EvalContext, evaluate, evaluate_method, is_symbol_name
from .trace import (
    ConditionedTrace,
    Event,
    chop,
    concretize_trace,
    flatten_payload,
    serialize_trace,
    tag,
    trace_symbols,
)
from .wf import Policy, WfIndex, default_policy

NEED_SEND = ("ac", "fifo", "bounded", "co", "sync")


# --- bounds and configurations ----------------------------------------------------


@dataclass(frozen=True)
class Bounds:
    """Finite search parameters: input domain, id pool sizes, step and trace caps."""

    domain: tuple = (-2, 2)
    pools: tuple = ()  # ((sort, size), ...) overriding default_pool
    max_steps: int = 1000
    max_traces: int = 10_000
    default_pool: int = 16

    def __post_init__(self) -> None:
        lo, hi = self.domain
        if lo > hi:
            raise ValueError("empty input domain")
        if self.default_pool < 1 or any(n < 1 for _s, n in self.pools):
            raise ValueError("pool sizes must be at least 1")
        if self.max_steps < 1 or self.max_traces < 1:
            raise ValueError("bounds must be at least 1")

    def pool(self, sort: str) -> int:
        for s, n in self.pools:
            if s == sort:
                return n
        return self.default_pool

    def values(self) -> list[Lit]:
        lo, hi = self.domain
        return [lit(v) for v in range(lo, hi + 1)]


@dataclass(frozen=True)
class Task:
    owner: Optional[Id]
    destiny: Optional[Id]
    stmt: A.Stmt
    key: tuple = field(default=(), compare=False, hash=False)

    @staticmethod
    def make(owner, destiny, stmt) -> "Task":
        key = (str(owner or ""), str(destiny or ""), pretty(stmt))
        return Task(owner, destiny, stmt, key)


def is_suspended(t: Task) -> bool:
    """An active-object task waiting at an await is suspended."""
    return isinstance(A.head_of(t.stmt), (A.AwaitBool, A.AwaitFut))


@dataclass(frozen=True)
class Configuration:
    sh: tuple
    tasks: tuple  # of Task, sorted by key
    wf: WfIndex = field(compare=False, hash=False, repr=False)
    used: frozenset = field(default=frozenset(), compare=False, hash=False, repr=False)

    def terminal(self) -> bool:
        return not self.tasks


def _sorted_tasks(tasks: Iterable[Task]) -> tuple:
    return tuple(sorted(tasks, key=lambda t: t.key))


def _ids_in(items) -> set:
    out = set()
    for x in items:
        if isinstance(x, State):
            vals = x.values()
        else:
            vals = list(flatten_payload(x.payload))
            if x.tag is not None:
                out.add(x.tag)
        for v in vals:
            if isinstance(v, Lit) and isinstance(v.value, Id):
                out.add(v.value)
    return out


def initial_configuration(program: Program, policy: Policy, state: Optional[State] = None) -> Configuration:
    V = program.variant
    init = initial_state(program) if state is None else state
    if V in (Variant.SEQ, Variant.PAR, Variant.PROC):
        sh: tuple = (init,)
        tasks = [Task.make(None, None, program.main)]
    elif V == Variant.MULTI:
        p0 = Id("pid", 0)
        sh = (init, Event("spawnEv", (lit("main"), lit(0), lit(p0)), p0), init)
        tasks = [Task.make(p0, None, program.main)]
    elif V == Variant.PROMELA_MINI:
        info = promela_setup(program)
        sh = (init,)
        tasks = [Task.make(Id("pid", k), None, info.bodies[pt.name]) for k, pt in enumerate(program.proctypes)]
    else:
        o0 = Id("oid", 0)
        sh = (init, Event("newEv", (lit(o0), ()), o0), init)
        tasks = [Task.make(o0, None, program.main)]
    wf = WfIndex(policy).feed(sh)
    if wf is None:
        raise ValueError("initial trace is not well-formed under the policy")
    tasks = [t for t in tasks if t.stmt is not EMPTY]
    return Configuration(sh, _sorted_tasks(tasks), wf, frozenset(_ids_in(sh)))


# --- concretisation search -------------------------------------------------------


class Composer:
    """Rule application for one program under one policy and bounds."""

    def __init__(self, program: Program, policy: Policy, bounds: Bounds):
        self.program = program
        self.policy = policy
        self.bounds = bounds
        self.variant = program.variant
        self.need_send = any(policy.has(c) for c in NEED_SEND)
        self.labels: dict = {}
        if self.variant == Variant.PROMELA_MINI:
            info = promela_setup(program)
            for k, pt in enumerate(program.proctypes):
                self.labels[Id("pid", k)] = info.labels[pt.name]

    # ids
    def fresh_id(self, sort: str, used: Iterable[Id]) -> Optional[Id]:
        taken = {i.n for i in used if i.sort == sort}
        for n in range(self.bounds.pool(sort)):
            if n not in taken:
                return Id(sort, n)
        return None

    def context(self, cfg: Configuration, owner, destiny=None, invoke_ids=()) -> EvalContext:
        mid = self.fresh_id("mid", cfg.used)
        send_ids = [lit(mid)] if mid is not None else []
        wf = cfg.wf
        recv = sorted((i for i in wf.sent if i not in wf.received), key=value_key)
        if not self.need_send and mid is not None:
            recv.append(lit(mid))
        return EvalContext(
            self.program,
            obj=lit(owner) if owner is not None else None,
            destiny=lit(destiny) if destiny is not None else None,
            send_ids=send_ids,
            recv_ids=recv,
            invoke_ids=tuple(invoke_ids),
            labels=self.labels.get(owner, {}),
        )

    def concretizations(self, cfg: Configuration, ct: ConditionedTrace, owner, destiny=None) -> list[dict]:
        """All mappings for the symbols of ``ct`` admitted by the step premises.

        Id-sorted symbols are unified with partner events of the global
        trace or bound to the smallest unused id; data symbols range over
        the input domain.  The path condition is checked here, the policy
        by the caller.
        """
        syms = trace_symbols(ct.body)
        partial: list[dict] = [{}]
        for x in ct.body:
            if not isinstance(x, Event):
                continue
            nxt = []
            for rho in partial:
                for opt in self._options(cfg, x, rho, syms, owner, destiny):
                    nxt.append({**rho, **opt})
            partial = nxt
            if not partial:
                return []
        out = []
        values = self.bounds.values()
        for rho in partial:
            rest = sorted(syms - rho.keys())
            for combo in itertools.product(values, repeat=len(rest)):
                full = {**rho, **dict(zip(rest, combo))}
                if self._pc_holds(ct.pc, full):
                    out.append(full)
        out.sort(key=lambda r: tuple((k, value_key(v)) for k, v in sorted(r.items())))
        return out

    @staticmethod
    def _pc_holds(pc, rho) -> bool:
        env = State(rho)
        for p in pc:
            try:
                v = eval_expr(env, p)
            except EvalError:
                return False
            if not (isinstance(v, Lit) and v.sort == "bool" and v.value is True):
                return False
        return True

    def _options(self, cfg, ev: Event, rho: dict, syms, owner, destiny) -> list[dict]:
        env = State(rho)
        pattern = tuple(_subst(p, env) for p in ev.payload)
        open_vars = {p.name for p in flatten_payload(pattern) if isinstance(p, Var) and p.name in syms}
        if not open_vars:
            return [{}]
        k = ev.kind
        used = set(cfg.used) | {v.value for v in rho.values() if isinstance(v.value, Id)}
        if k in ("spawnEv", "newEv") or (k == "invEv" and self.variant == Variant.ACTIVE_OBJECT):
            sort = {"spawnEv": "pid", "newEv": "oid", "invEv": "fid"}[k]
            pos = {"spawnEv": 2, "newEv": 0, "invEv": 3}[k]
            slot = pattern[pos]
            i = self.fresh_id(sort, used)
            if i is None or not isinstance(slot, Var):
                return []
            return [{slot.name: lit(i)}]
        if k == "invREv":
            return self._unify_all(pattern, self._activation_partners(cfg, pattern, owner), syms)
        if k == "receiveEv":
            partners = [(v, pattern[1], i) for i, (chan, v, _n, _t) in cfg.wf.sent.items()]
            opts = self._unify_all(pattern, partners, syms)
            if not self.need_send:
                opts += [o for o in self._domain_options(open_vars) if o not in opts]
            return opts
        if k == "compREv" and self.policy.base == "future":
            partners = sorted(cfg.wf.resolved, key=lambda p: tuple(value_key(x) for x in p))
            return self._unify_all(pattern, partners, syms)
        return [{}]  # left to the domain enumeration

    def _domain_options(self, names) -> list[dict]:
        names = sorted(names)
        return [dict(zip(names, c)) for c in itertools.product(self.bounds.values(), repeat=len(names))]

    def _activation_partners(self, cfg, pattern, owner) -> list[tuple]:
        wf = cfg.wf
        out = []
        V = self.variant
        evs = [x for x in cfg.sh if isinstance(x, Event)]
        if V == Variant.PROC:
            out = [e.payload for e in evs if e.kind == "invEv"]
        elif V == Variant.MULTI:
            for e in evs:
                if e.kind == "invEv" and e.tag == owner:
                    out.append(e.payload)
                elif e.kind == "spawnEv" and e.payload[2] == lit(owner):
                    out.append(e.payload[:2])
        elif V == Variant.ACTOR:
            for inv in wf.invocations.values():
                args, callee, m, i = inv.payload
                if callee == lit(owner):
                    out.append((args, m, i))
        elif V == Variant.ACTIVE_OBJECT:
            for inv in wf.invocations.values():
                args, callee, m, f = inv.payload
                if callee == lit(owner) and inv.tag is not None:
                    out.append((args, lit(inv.tag), m, f))
        uniq = []
        for p in out:
            if p not in uniq:
                uniq.append(p)
        return uniq

    @staticmethod
    def _unify_all(pattern, partners, syms) -> list[dict]:
        out = []
        for conc in partners:
            b = _unify(pattern, conc, syms, {})
            if b is not None and b not in out:
                out.append(b)
        return out

    # --- rules
    def successors(self, cfg: Configuration) -> list[Configuration]:
        """Every configuration reachable by one rule instance, in canonical order."""
        found: list[tuple] = []
        V = self.variant
        state = cfg.sh[-1]
        seen_tasks = set()
        for ti, t in enumerate(cfg.tasks):
            if t in seen_tasks:
                continue
            seen_tasks.add(t)
            if V == Variant.ACTIVE_OBJECT and not self._selectable(cfg, t):
                continue
            ctx = self.context(cfg, t.owner, t.destiny)
            for k, ct in enumerate(evaluate(state, t.stmt, ctx)):
                if len(ct.body) == 1 and ct.cont == t.stmt:
                    continue  # a blocked guard re-schedules itself without effect
                rest = list(cfg.tasks[:ti] + cfg.tasks[ti + 1:])
                for rho in self.concretizations(cfg, ct, t.owner, t.destiny):
                    nxt = self._apply(cfg, ct, rho, t.owner, t.destiny, rest)
                    if nxt is not None and nxt != cfg:
                        found.append(((CONTINUE, ti, (), k, _rho_key(rho)), nxt))
        if V in STARTS_METHODS:
            for tkey, owner, destiny, meth, inv_ids in self._exec_targets(cfg):
                ctx = self.context(cfg, owner, destiny, inv_ids)
                for k, ct in enumerate(evaluate_method(state, meth, ctx)):
                    for rho in self.concretizations(cfg, ct, owner, destiny):
                        nxt = self._apply(cfg, ct, rho, owner, destiny, list(cfg.tasks))
                        if nxt is not None:
                            found.append(((START, -1, tkey, k, _rho_key(rho)), nxt))
        found.sort(key=lambda p: p[0])
        out: list[Configuration] = []
        seen = set()
        for _k, c in found:
            if c not in seen:
                seen.add(c)
                out.append(c)
        return out

    def _selectable(self, cfg: Configuration, t: Task) -> bool:
        if not is_suspended(t):
            return True
        # a suspended task resumes only when its object is idle
        return not any(u.owner == t.owner and not is_suspended(u) for u in cfg.tasks)

    def _exec_targets(self, cfg: Configuration) -> list[tuple]:
        V = self.variant
        wf = cfg.wf
        out = []
        if V == Variant.PROC:
            for m in self.program.methods:
                out.append(((m.name,), None, None, m, ()))
        elif V == Variant.MULTI:
            pids = {Id("pid", 0)} | {p.value for p in wf.spawned}
            for p in sorted(pids):
                for m in self.program.methods:
                    out.append(((m.name, str(p)), p, None, m, ()))
        elif V == Variant.ACTOR:
            pending: dict = {}
            for i, inv in wf.invocations.items():
                if i in wf.activated:
                    continue
                _args, callee, m, _i = inv.payload
                pending.setdefault((callee.value, m.value), []).append(i)
            for (o, m), ids in sorted(pending.items()):
                meth = self.program.method(m)
                if meth is not None:
                    out.append(((m, str(o)), o, None, meth, sorted(ids, key=value_key)))
        elif V == Variant.ACTIVE_OBJECT:
            busy = {t.owner for t in cfg.tasks if not is_suspended(t)}
            for f, inv in sorted(wf.invocations.items(), key=lambda p: value_key(p[0])):
                if f in wf.activated:
                    continue
                _args, callee, m, _f = inv.payload
                o = callee.value
                meth = self.program.method(m.value)
                if o in busy or meth is None:
                    continue
                out.append(((m.value, str(o), str(f.value)), o, f.value, meth, ()))
        return out

    def _apply(self, cfg, ct, rho, owner, destiny, rest) -> Optional[Configuration]:
        try:
            conc = concretize_trace(rho, ct.body)
        except ConcretizationError:
            return None
        if owner is not None and self.variant not in (Variant.SEQ, Variant.PAR, Variant.PROC):
            conc = tag(conc, owner)
        conc = tuple(_program_part(x) if isinstance(x, State) else x for x in conc)
        wf = cfg.wf.feed(conc[1:])
        if wf is None:
            return None
        sh = chop(cfg.sh, conc)
        tasks = list(rest)
        if ct.cont is not EMPTY:
            tasks.append(Task.make(owner, destiny, ct.cont))
        return Configuration(sh, _sorted_tasks(tasks), wf, cfg.used | frozenset(_ids_in(conc)))


def _program_part(s: State) -> State:
    # once a step is concretised no binding refers to its symbols any more
    if not any(is_symbol_name(k) for k in s):
        return s
    return State({k: v for k, v in s.items() if not is_symbol_name(k)})


# successor ordering: continuing a task sorts before starting a method
CONTINUE, START = 0, 1
STARTS_METHODS = frozenset({Variant.PROC, Variant.MULTI, Variant.ACTOR, Variant.ACTIVE_OBJECT})


def _subst(p, env: State):
    if isinstance(p, tuple):
        return tuple(_subst(x, env) for x in p)
    if isinstance(p, (Var, BinOp)):
        try:
            return eval_expr(env, p)
        except EvalError:
            return p
    return p


def _unify(pattern, conc, syms, acc: dict) -> Optional[dict]:
    if isinstance(pattern, tuple):
        if not isinstance(conc, tuple) or len(pattern) != len(conc):
            return None
        for p, c in zip(pattern, conc):
            acc = _unify(p, c, syms, acc)
            if acc is None:
                return None
        return acc
    if isinstance(pattern, Var) and pattern.name in syms:
        if pattern.name in acc:
            return acc if acc[pattern.name] == conc else None
        return {**acc, pattern.name: conc}
    if isinstance(pattern, Lit):
        return acc if pattern == conc else None
    return acc  # compound symbolic entries are settled by the domain pass


def _rho_key(rho: dict) -> tuple:
    return tuple((k, value_key(v)) for k, v in sorted(rho.items()))


def step(cfg: Configuration, program: Program, policy: Optional[Policy] = None, bounds: Optional[Bounds] = None):
    policy = policy or default_policy(program.variant, program)
    return Composer(program, policy, bounds or Bounds()).successors(cfg)


def find_concretizations(cfg: Configuration, ct: ConditionedTrace, owner, program: Program,
                         policy: Optional[Policy] = None, bounds: Optional[Bounds] = None,
                         destiny=None) -> list[dict]:
    """Admissible mappings for ``ct`` on top of ``cfg`` (policy included)."""
    policy = policy or default_policy(program.variant, program)
    comp = Composer(program, policy, bounds or Bounds())
    out = []
    for rho in comp.concretizations(cfg, ct, owner, destiny):
        if comp._apply(cfg, ct, rho, owner, destiny, []) is not None:
            out.append(rho)
    return out


# --- enumeration -----------------------------------------------------------------


@dataclass(frozen=True)
class Run:
    trace: tuple
    status: str  # completed | deadlocked | truncated
    reason: str = ""
    history: tuple = ()  # task structures along the run, when recorded

    def lines(self, policy: Optional[Policy] = None) -> list[str]:
        extra = {"status": self.status}
        if self.reason:
            extra["reason"] = self.reason
        return serialize_trace(self.trace, truncated=self.status == "truncated", **extra)

    def sort_key(self) -> tuple:
        return ("\n".join(serialize_trace(self.trace)), self.status, self.reason)


@dataclass
class Enumeration:
    runs: list
    exhausted: bool = False  # the trace cap cut the search short

    def summary(self) -> dict:
        counts = {"completed": 0, "deadlocked": 0, "truncated": 0}
        for r in self.runs:
            counts[r.status] += 1
        counts["trace_cap_reached"] = self.exhausted
        return counts

    def traces(self, status: Optional[str] = "completed") -> list[tuple]:
        return [r.trace for r in self.runs if status is None or r.status == status]


def _explore(comp: Composer, start: Configuration, depth: int, record: bool, history: tuple) -> tuple[list, bool]:
    bounds = comp.bounds
    runs: list[Run] = []
    seen_traces = set()
    visited: dict = {}
    on_path: set = set()
    stack: list = [("enter", start, depth, history)]

    def emit(run: Run) -> bool:
        if run.trace in seen_traces:
            return False
        seen_traces.add(run.trace)
        runs.append(run)
        return len(runs) >= bounds.max_traces

    while stack:
        op, cfg, d, hist = stack.pop()
        if op == "exit":
            on_path.discard(cfg)
            continue
        if record:
            hist = hist + (cfg.tasks,)
        if cfg in on_path:
            if emit(Run(cfg.sh, "truncated", "cycle", hist)):
                return runs, True
            continue
        if cfg in visited and visited[cfg] <= d:
            continue
        visited[cfg] = d
        if d >= bounds.max_steps:
            if emit(Run(cfg.sh, "truncated", "step bound", hist)):
                return runs, True
            continue
        succ = comp.successors(cfg)
        if not succ:
            status = "completed" if cfg.terminal() else "deadlocked"
            if emit(Run(cfg.sh, status, "", hist)):
                return runs, True
            continue
        on_path.add(cfg)
        stack.append(("exit", cfg, d, hist))
        for s in reversed(succ):
            stack.append(("enter", s, d + 1, hist))
    return runs, False


def _split(comp: Composer, start: Configuration, record: bool, width: int = 16, levels: int = 4) -> list:
    """Expand the first levels breadth first; returns finished runs and subtrees in order."""
    units: list = [("sub", start, 0, ())]
    for _ in range(levels):
        if sum(1 for u in units if u[0] == "sub") >= width:
            break
        nxt: list = []
        grew = False
        seen = set()
        for u in units:
            if u[0] != "sub":
                nxt.append(u)
                continue
            _kind, cfg, d, hist = u
            h = hist + (cfg.tasks,) if record else hist
            if d >= comp.bounds.max_steps:
                nxt.append(u)
                continue
            succ = comp.successors(cfg)
            if not succ:
                nxt.append(("run", Run(cfg.sh, "completed" if cfg.terminal() else "deadlocked", "", h)))
                continue
            grew = True
            for s in succ:
                if s in seen:
                    continue
                seen.add(s)
                nxt.append(("sub", s, d + 1, h))
        units = nxt
        if not grew:
            break
    return units


_WORKER: dict = {}


def _worker_init(program, policy, bounds, record):
    _WORKER["comp"] = Composer(program, policy, bounds)
    _WORKER["record"] = record


def _worker_run(unit):
    _kind, cfg, d, hist = unit
    return _explore(_WORKER["comp"], cfg, d, _WORKER["record"], hist)


def enumerate_traces(
    program: Program,
    policy: Optional[Policy] = None,
    bounds: Optional[Bounds] = None,
    initial: Optional[State] = None,
    parallel: int = 0,
    record_history: bool = False,
) -> Enumeration:
    """All maximal runs of ``program``, deduplicated and sorted canonically.

    The search is split into independent subtrees after a fixed
    breadth-first prefix; serial and parallel mode process the same
    subtrees and merge them in the same order, so their output agrees.
    """
    policy = policy or default_policy(program.variant, program)
    bounds = bounds or Bounds()
    comp = Composer(program, policy, bounds)
    start = initial_configuration(program, policy, initial)
    units = _split(comp, start, record_history)
    subs = [u for u in units if u[0] == "sub"]
    if parallel and parallel > 1 and len(subs) > 1:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(parallel, mp_context=ctx, initializer=_worker_init,
                                 initargs=(program, policy, bounds, record_history)) as pool:
            results = list(pool.map(_worker_run, subs))
    else:
        results = [_explore(comp, u[1], u[2], record_history, u[3]) for u in subs]
    merged: list[Run] = []
    seen = set()
    exhausted = False
    it = iter(results)
    for u in units:
        if u[0] == "run":
            batch, cut = [u[1]], False
        else:
            batch, cut = next(it)
        exhausted = exhausted or cut
        for r in batch:
            if r.trace in seen:
                continue
            if len(merged) >= bounds.max_traces:
                exhausted = True
                break
            seen.add(r.trace)
            merged.append(r)
    merged.sort(key=Run.sort_key)
    return Enumeration(merged, exhausted)
