"""Events, conditioned symbolic traces, chop, concretisation and tagging.

A trace is a tuple of items, each a :class:`~lagc.core.State` or an
:class:`Event`, in execution order (first item is the earliest state).
Event payload entries are symbolic expressions or tuples of them (argument
lists).  Method names travel as literals of sort ``name``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Mapping, Sequence

from .core import (
    STAR,
    Id,
    Lit,
    SExpr,
    State,
    as_expr,
    concretize_state,
    eval_expr,
    expr_vars,
    is_well_formed,
    lit,
    mark_symbolic,
)
from .errors import ChopError, ConcretizationError, LagcError, TagError

EVENT_KINDS = (
    "inpEv",
    "invEv",
    "invREv",
    "sendEv",
    "receiveEv",
    "spawnEv",
    "newEv",
    "compEv",
    "compREv",
)


@dataclass(frozen=True)
class Event:
    kind: str
    payload: tuple
    tag: Id | None = None

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")

    def __str__(self) -> str:
        tag = f"^{self.tag}" if self.tag is not None else ""
        return f"{self.kind}{tag}({', '.join(_fmt_payload(p) for p in self.payload)})"

    def with_tag(self, tag: Id | None) -> "Event":
        return Event(self.kind, self.payload, tag)

    def is_concrete(self) -> bool:
        return all(isinstance(x, Lit) for x in flatten_payload(self.payload))


def _fmt_payload(p) -> str:
    if isinstance(p, tuple):
        return "⟨" + ", ".join(_fmt_payload(x) for x in p) + "⟩"
    return str(p)


def flatten_payload(payload) -> Iterator[SExpr]:
    for p in payload:
        if isinstance(p, tuple):
            yield from flatten_payload(p)
        else:
            yield p


def map_payload(fn, payload) -> tuple:
    return tuple(map_payload(fn, p) if isinstance(p, tuple) else fn(p) for p in payload)


def payload_vars(payload) -> frozenset[str]:
    out: set[str] = set()
    for p in flatten_payload(payload):
        out |= expr_vars(p)
    return frozenset(out)


Trace = tuple  # of State | Event


def first(tr: Trace) -> State:
    return tr[0]


def last(tr: Trace) -> State:
    return tr[-1]


def states(tr: Trace) -> list[State]:
    return [x for x in tr if isinstance(x, State)]


def events(tr: Trace) -> list[Event]:
    return [x for x in tr if isinstance(x, Event)]


def trace_symbols(tr: Trace) -> frozenset[str]:
    out: set[str] = set()
    for x in tr:
        if isinstance(x, State):
            out |= x.symbols()
    return frozenset(out)


@dataclass(frozen=True)
class ConditionedTrace:
    """``pc |> body`` followed by a continuation marker ``cont``.

    ``cont`` is a statement, or ``None`` when the trace carries no
    continuation.  The empty continuation is the statement ``EMPTY`` from
    :mod:`lagc.lang.ast`.
    """

    pc: frozenset
    body: Trace
    cont: Any = None

    def __str__(self) -> str:
        pc = "{" + ", ".join(sorted(str(p) for p in self.pc)) + "}"
        body = " · ".join(f"⟨{x}⟩" if isinstance(x, State) else str(x) for x in self.body)
        tail = f" · K({self.cont})" if self.cont is not None else ""
        return f"{pc} ▷ {body}{tail}"


def is_consistent(pc: Iterable[SExpr]) -> bool:
    """A path condition is consistent unless it contains ``ff``."""
    return not any(isinstance(p, Lit) and p.sort == "bool" and p.value is False for p in pc)


def chop(left, right):
    """Glue two traces whose boundary states agree up to extension.

    Works on plain traces and on :class:`ConditionedTrace` values (the path
    conditions are joined, the continuation of ``right`` is kept).
    """
    if isinstance(left, ConditionedTrace):
        body = chop(left.body, right.body)
        return ConditionedTrace(left.pc | right.pc, body, right.cont)
    if not left or not right:
        raise ChopError("chop on an empty trace")
    a, b = left[-1], right[0]
    if not isinstance(a, State) or not isinstance(b, State):
        raise ChopError("chop boundary is not a state")
    if not b.extends(a):
        raise ChopError(f"{b} does not extend {a}")
    return tuple(left[:-1]) + tuple(right)


def eval_payload(state: Mapping[str, SExpr], payload) -> tuple:
    return map_payload(lambda e: eval_expr(state, as_expr(e)), payload)


def insert_event(
    state: State, kind: str, payload: Sequence, fresh: Iterable[str] = (), tag: Id | None = None
) -> Trace:
    """The three-item trace ``state · ev · state'`` with ``state' = state[fresh -> *]``.

    The payload is evaluated in ``state'``, so fresh symbolic variables show
    up in the event as themselves.
    """
    after = mark_symbolic(state, fresh)
    ev = Event(kind, eval_payload(after, tuple(payload)), tag)
    return (state, ev, after)


def concretize_trace(rho: Mapping[str, SExpr], ct):
    """Apply the concretisation mapping ``rho`` to a trace or conditioned trace."""
    if isinstance(ct, ConditionedTrace):
        env = State({k: as_expr(v) for k, v in rho.items()})
        pc = frozenset(_concrete(env, p) for p in ct.pc)
        return ConditionedTrace(pc, concretize_trace(rho, ct.body), ct.cont)
    env = State({k: as_expr(v) for k, v in rho.items()})
    out = []
    for x in ct:
        if isinstance(x, State):
            out.append(concretize_state(rho, x))
        else:
            out.append(Event(x.kind, map_payload(lambda e: _concrete(env, e), x.payload), x.tag))
    return tuple(out)


def _concrete(env: State, e: SExpr) -> Lit:
    v = eval_expr(env, e)
    if not isinstance(v, Lit):
        raise ConcretizationError(f"{e} stays symbolic under the mapping")
    return v


def tag(tr: Trace, ident: Id) -> Trace:
    """Mark every event of ``tr`` with ``ident``; retagging with another id fails."""
    out = []
    for x in tr:
        if isinstance(x, Event):
            if x.tag is not None and x.tag != ident:
                raise TagError(f"{x} is already tagged")
            out.append(x.with_tag(ident))
        else:
            out.append(x)
    return tuple(out)


# --- structural well-formedness -------------------------------------------


def wft_violations(tr: Trace, pc: Iterable[SExpr] = ()) -> list[str]:
    """List the structural well-formedness conditions that ``tr`` breaks.

    Around an event the following state must extend the preceding one, and
    the extra variables must be symbolic there (concrete traces are allowed
    the extension that concretisation of fresh symbols produces).
    """
    problems: list[str] = []
    if not tr:
        return ["empty trace"]
    if not isinstance(tr[0], State) or not isinstance(tr[-1], State):
        problems.append("trace must start and end with a state")
    sts = states(tr)
    for s in sts:
        if not is_well_formed(s):
            problems.append(f"ill-formed state {s}")
    symb = frozenset().union(*(s.symbols() for s in sts)) if sts else frozenset()
    for s in sts:
        bad = (frozenset(s.keys()) - s.symbols()) & symb
        if bad:
            problems.append(f"variables {sorted(bad)} symbolic elsewhere but bound in {s}")
    for p in pc:
        if not expr_vars(p) <= symb:
            problems.append(f"path condition {p} mentions non-symbolic variables")
    for i, x in enumerate(tr):
        if isinstance(x, Event):
            if not payload_vars(x.payload) <= symb:
                problems.append(f"event {x} mentions non-symbolic variables")
            if i == 0 or i == len(tr) - 1:
                continue
            before, after = tr[i - 1], tr[i + 1]
            if not isinstance(before, State) or not isinstance(after, State):
                problems.append(f"event {x} is not surrounded by states")
            elif not after.extends(before):
                problems.append(f"state after {x} does not extend the state before")
            elif not before.is_concrete() or not after.is_concrete():
                extra = set(after.keys()) - set(before.keys())
                if any(after[k] is not STAR for k in extra):
                    problems.append(f"state after {x} binds new non-symbolic variables")
    return problems


def is_wellformed_trace(tr: Trace, pc: Iterable[SExpr] = ()) -> bool:
    return not wft_violations(tr, pc)


def is_concrete_trace(tr: Trace) -> bool:
    for x in tr:
        if isinstance(x, State):
            if not x.is_concrete():
                return False
        elif not x.is_concrete():
            return False
    return True


# --- serialisation ----------------------------------------------------------


def encode_value(v) -> Any:
    if isinstance(v, tuple):
        return [encode_value(x) for x in v]
    if isinstance(v, Lit):
        if v.sort in ("int", "bool"):
            return v.value
        if v.sort == "name":
            return {"name": v.value}
        return {"id": str(v.value)}
    if v is STAR:
        return {"star": True}
    return {"expr": str(v)}


def decode_value(obj) -> Any:
    if isinstance(obj, list):
        return tuple(decode_value(x) for x in obj)
    if isinstance(obj, bool) or isinstance(obj, int):
        return lit(obj)
    if isinstance(obj, dict):
        if "name" in obj:
            return lit(obj["name"])
        if "id" in obj:
            return lit(Id.parse(obj["id"]))
        if "star" in obj:
            return STAR
    raise LagcError(f"cannot decode value {obj!r}")


def encode_item(x) -> dict:
    if isinstance(x, State):
        return {"state": {k: encode_value(v) for k, v in x.items()}}
    return {
        "event": {
            "kind": x.kind,
            "tag": str(x.tag) if x.tag is not None else None,
            "payload": [encode_value(p) for p in x.payload],
        }
    }


def decode_item(obj: dict):
    if "state" in obj:
        return State({k: decode_value(v) for k, v in obj["state"].items()})
    ev = obj["event"]
    tag_ = Id.parse(ev["tag"]) if ev.get("tag") else None
    return Event(ev["kind"], tuple(decode_value(p) for p in ev["payload"]), tag_)


def dumps_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def serialize_trace(tr: Trace, pc: Iterable[SExpr] = (), truncated: bool = False, **extra) -> list[str]:
    """Header line followed by one line per item."""
    header = {"pc": sorted(encode_value(p) if isinstance(p, Lit) else str(p) for p in pc), "truncated": truncated}
    header.update(extra)
    return [dumps_line(header)] + [dumps_line(encode_item(x)) for x in tr]


def parse_traces(lines: Iterable[str]) -> list[tuple[dict, Trace]]:
    """Read one or more serialised traces back; summary records are skipped."""
    out: list[tuple[dict, list]] = []
    for raw in lines:
        raw = raw.strip()
        if not raw:
            continue
        obj = json.loads(raw)
        if "pc" in obj:
            out.append((obj, []))
        elif "state" in obj or "event" in obj:
            if not out:
                out.append(({"pc": [], "truncated": False}, []))
            out[-1][1].append(decode_item(obj))
    return [(h, tuple(items)) for h, items in out]


def format_trace(tr: Trace) -> str:
    return " · ".join(f"⟨{x}⟩" if isinstance(x, State) else str(x) for x in tr)
