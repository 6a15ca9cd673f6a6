"""Well-formedness of concrete traces.

A policy is the conjunction of the base predicate of a language variant
with optional communication disciplines:

``ac``        a received message was sent
``fifo``      messages on one channel are received in sending order
``bounded``   fifo, and a send needs fewer than N pending messages
``co``        no message is overtaken by a chain of other messages
``sync``      a send is immediately followed by its reception
``channels``  channel visibility (ProMeLa)
``consume``   a message on a channel is read at most once (ProMeLa)
``capacity``  per-channel discipline from the declared capacities (ProMeLa)

Two independent validators are provided.  :func:`first_violation` checks
each event against its prefix by scanning, following the inductive
definitions literally.  :class:`WfIndex` keeps summary tables so that a
composition step only pays for its new events.  The two must agree.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .core import Id, Lit, State, lit
from .lang.ast import Program, Variant
from .trace import Event

CONJUNCTS = ("ac", "fifo", "bounded", "co", "sync", "channels", "consume", "capacity")

BASE_OF = {
    Variant.SEQ: "base",
    Variant.PAR: "base",
    Variant.PROC: "base",
    Variant.MULTI: "multi",
    Variant.PROMELA_MINI: "promela",
    Variant.ACTOR: "actor",
    Variant.ACTIVE_OBJECT: "future",
}


@dataclass(frozen=True)
class Policy:
    variant: Variant
    conjuncts: tuple = ()
    bound: Optional[int] = None
    capacity: tuple = ()  # ((cid, capacity), ...)
    local_channels: tuple = ()  # ((pid, cid), ...)
    global_channels: tuple = ()  # (cid, ...)

    @property
    def base(self) -> str:
        return BASE_OF[self.variant]

    def has(self, name: str) -> bool:
        return name in self.conjuncts

    @property
    def channel_addressed(self) -> bool:
        return self.variant == Variant.PROMELA_MINI

    def cap_of(self, cid) -> Optional[int]:
        for c, n in self.capacity:
            if c == cid:
                return n
        return None

    def describe(self) -> str:
        parts = [self.base] + [f"bounded({self.bound})" if c == "bounded" else c for c in self.conjuncts]
        return "+".join(parts)


def parse_conjunct(text: str) -> tuple[str, Optional[int]]:
    """``fifo``, ``bounded:3``, ``bd(3)`` or ``consume-once``."""
    t = text.strip().lower().replace("consume-once", "consume").replace("_", "-")
    if t.startswith("bd(") and t.endswith(")"):
        return "bounded", int(t[3:-1])
    if t.startswith("bounded"):
        rest = t[len("bounded"):].strip(":=()")
        return "bounded", int(rest) if rest else 1
    if t in ("chan", "visibility"):
        t = "channels"
    if t not in CONJUNCTS:
        raise ValueError(f"unknown well-formedness constraint {text!r}")
    return t, None


def make_policy(variant: Variant, names: Iterable[str] = (), program: Optional[Program] = None) -> Policy:
    conj: list[str] = []
    bound = None
    for n in names:
        c, b = parse_conjunct(n)
        if c == "bounded":
            bound = b
        if c not in conj:
            conj.append(c)
    cap: tuple = ()
    local: tuple = ()
    glob: tuple = ()
    if program is not None and variant == Variant.PROMELA_MINI:
        from .lang.program import promela_setup

        info = promela_setup(program)
        cap = tuple(sorted(info.capacity.items()))
        names_ = [p.name for p in program.proctypes]
        local = tuple(
            sorted((Id("pid", names_.index(o)), cid) for cid, o in info.owner_of.items() if o is not None)
        )
        glob = tuple(sorted(cid for cid, o in info.owner_of.items() if o is None))
    return Policy(variant, tuple(conj), bound, cap, local, glob)


def default_policy(variant: Variant, program: Optional[Program] = None) -> Policy:
    if variant == Variant.MULTI:
        return make_policy(variant, ["ac"], program)
    if variant == Variant.PROMELA_MINI:
        return make_policy(variant, ["ac", "channels", "consume", "capacity"], program)
    return make_policy(variant, [], program)


# --- event field access ---------------------------------------------------------


def _chan_send(ev: Event, policy: Policy):
    v, dest, i = ev.payload
    return (dest if policy.channel_addressed else (_tag(ev), dest)), v, i


def _chan_recv(ev: Event, policy: Policy):
    v, src, i = ev.payload
    return (src if policy.channel_addressed else (src, _tag(ev))), v, i


def _tag(ev: Event):
    return lit(ev.tag) if ev.tag is not None else None


def _matches(send: Event, recv: Event, policy: Policy) -> bool:
    return send.kind == "sendEv" and recv.kind == "receiveEv" and _chan_send(send, policy) == _chan_recv(recv, policy)


# --- definitional (whole-trace) validator ---------------------------------------------


def _events_with_pos(trace) -> tuple[list[Event], list[int]]:
    evs, pos = [], []
    for k, x in enumerate(trace):
        if isinstance(x, Event):
            evs.append(x)
            pos.append(k)
    return evs, pos


def _def_base(ev: Event, prior: list[Event], policy: Policy) -> Optional[str]:
    b = policy.base
    if b == "base":
        if ev.kind == "invREv":
            m, v = ev.payload
            calls = sum(1 for e in prior if e.kind == "invEv" and e.payload == (m, v))
            runs = sum(1 for e in prior if e.kind == "invREv" and e.payload == (m, v))
            if not calls > runs:
                return "method activation without pending invocation"
        return None
    if b in ("multi", "promela"):
        if ev.kind == "sendEv":
            if any(e.kind == "sendEv" and e.payload[2] == ev.payload[2] for e in prior):
                return "message id sent twice"
        elif ev.kind == "receiveEv":
            if any(e.kind == "receiveEv" and e.payload[2] == ev.payload[2] for e in prior):
                return "message id received twice"
        elif b == "multi" and ev.kind == "spawnEv":
            if any(e.kind == "spawnEv" and e.payload[2] == ev.payload[2] for e in prior):
                return "process id spawned twice"
        elif b == "multi" and ev.kind == "invREv":
            m, v = ev.payload
            p = ev.tag
            calls = sum(1 for e in prior if e.kind == "invEv" and e.tag == p and e.payload == (m, v))
            spawns = sum(1 for e in prior if e.kind == "spawnEv" and e.payload == (m, v, lit(p)))
            runs = sum(1 for e in prior if e.kind == "invREv" and e.tag == p and e.payload == (m, v))
            if not calls + spawns > runs:
                return "method activation without pending invocation"
        return None
    # actors and active objects
    if ev.kind == "newEv":
        if any(e.kind == "newEv" and e.payload[0] == ev.payload[0] for e in prior):
            return "object created twice"
    elif ev.kind == "invEv":
        args, callee, m, i = ev.payload
        if not any(e.kind == "newEv" and e.payload[0] == callee for e in prior):
            return "call to an object that does not exist"
        if any(e.kind == "invEv" and e.payload[3] == i for e in prior):
            return "invocation id used twice"
    elif ev.kind == "invREv":
        me = lit(ev.tag) if ev.tag is not None else None
        if b == "actor":
            args, m, i = ev.payload
            ok = any(
                e.kind == "invEv" and e.payload[0] == args and e.payload[1] == me and e.payload[2] == m and e.payload[3] == i
                for e in prior
            )
            idx = 2
        else:
            args, caller, m, i = ev.payload
            ok = any(
                e.kind == "invEv"
                and e.tag is not None
                and lit(e.tag) == caller
                and e.payload == (args, me, m, i)
                for e in prior
            )
            idx = 3
        if not ok:
            return "activation without matching invocation"
        if any(e.kind == "invREv" and e.payload[idx] == i for e in prior):
            return "invocation activated twice"
    elif ev.kind == "compREv" and b == "future":
        if not any(e.kind == "compEv" and e.payload == ev.payload for e in prior):
            return "future read before it was resolved"
    return None


def _def_chain(a: int, b: int, evs: list[Event], policy: Policy) -> bool:
    """Is there a message chain from position ``a`` to position ``b``?"""
    msgs = []
    for si, s in enumerate(evs):
        if s.kind != "sendEv":
            continue
        for ri, r in enumerate(evs):
            if _matches(s, r, policy):
                msgs.append((si, ri, s, r))
    # depth-first search over chains of messages
    starts = [m for m in msgs if a < m[0]]
    seen = set()
    stack = list(starts)
    while stack:
        m = stack.pop()
        if id(m) in seen:
            continue
        seen.add(id(m))
        si, ri, s, r = m
        if ri < b:
            return True
        receiver = r.tag
        for n in msgs:
            if n[2].tag == receiver and ri < n[0]:
                stack.append(n)
    return False


def _def_comm(ev: Event, k: int, evs: list[Event], pos: list[int], policy: Policy) -> Optional[str]:
    prior = evs[:k]
    conj = policy.conjuncts
    if ev.kind == "receiveEv":
        sends = [j for j, e in enumerate(prior) if _matches(e, ev, policy)]
        need_send = any(c in conj for c in ("ac", "fifo", "bounded", "co", "sync"))
        if need_send and not sends:
            return "message received but never sent"
        if ("fifo" in conj or "bounded" in conj) and sends:
            chan = _chan_recv(ev, policy)[0]
            j0 = sends[0]
            for j in range(j0):
                e = prior[j]
                if e.kind == "sendEv" and _chan_send(e, policy)[0] == chan:
                    if not any(_matches(e, r, policy) for r in prior):
                        return "message overtakes an earlier one on its channel"
        if "co" in conj and sends:
            j0 = sends[0]
            for j, e in enumerate(prior):
                if e.kind != "sendEv":
                    continue
                if _dest(e, policy) != _dest_of_recv(ev, policy):
                    continue
                if _def_chain(j, j0, prior, policy) and not any(_matches(e, r, policy) for r in prior):
                    return "message overtaken by a causal chain"
        if "sync" in conj:
            if not (k > 0 and _matches(prior[-1], ev, policy) and pos[k] - pos[k - 1] == 2):
                return "reception does not directly follow its send"
        if "consume" in conj:
            c = ev.payload[1]
            if any(e.kind == "receiveEv" and e.payload[1] == c and e.payload[2] == ev.payload[2] for e in prior):
                return "message consumed twice"
        if "capacity" in conj:
            c = ev.payload[1]
            cap = policy.cap_of(_lit_val(c))
            if cap == 0:
                if not (k > 0 and _matches(prior[-1], ev, policy) and pos[k] - pos[k - 1] == 2):
                    return "rendezvous reception does not directly follow its send"
            elif cap is not None and sends:
                j0 = sends[0]
                for j in range(j0):
                    e = prior[j]
                    if e.kind == "sendEv" and e.payload[1] == c and not any(_matches(e, r, policy) for r in prior):
                        return "message overtakes an earlier one on its channel"
    if ev.kind == "sendEv":
        if "bounded" in conj:
            chan = _chan_send(ev, policy)[0]
            pending = _pending(prior, chan, policy)
            if not pending < (policy.bound or 0):
                return "channel full"
        if "capacity" in conj:
            cap = policy.cap_of(_lit_val(ev.payload[1]))
            if cap is not None and cap > 0:
                if not _pending(prior, ev.payload[1], policy) < cap:
                    return "channel full"
    if ev.kind in ("sendEv", "receiveEv") and "channels" in conj:
        if not _visible(ev, prior, policy):
            return "channel not visible to the process"
    # a pending synchronous send admits only its own reception next
    if k > 0 and prior[-1].kind == "sendEv":
        last = prior[-1]
        rendezvous = "sync" in conj or (
            "capacity" in conj and policy.cap_of(_lit_val(last.payload[1])) == 0
        )
        if rendezvous and not any(_matches(last, r, policy) for r in prior):
            if not (_matches(last, ev, policy) and pos[k] - pos[k - 1] == 2):
                return "synchronous send not immediately received"
    return None


def _lit_val(x):
    return x.value if isinstance(x, Lit) else x


def _dest(send: Event, policy: Policy):
    return send.payload[1]


def _dest_of_recv(recv: Event, policy: Policy):
    return recv.payload[1] if policy.channel_addressed else lit(recv.tag)


def _pending(prior: list[Event], chan, policy: Policy) -> int:
    n = 0
    for e in prior:
        if e.kind == "sendEv" and _chan_send(e, policy)[0] == chan:
            if not any(_matches(e, r, policy) for r in prior):
                n += 1
    return n


def _visible(ev: Event, prior: list[Event], policy: Policy) -> bool:
    c = _lit_val(ev.payload[1])
    p = ev.tag
    if c in policy.global_channels or (p, c) in policy.local_channels:
        return True
    return any(e.kind == "receiveEv" and e.tag == p and _lit_val(e.payload[0]) == c for e in prior)


def first_violation(trace, policy: Policy) -> Optional[tuple[int, str]]:
    """Index (among events) and reason of the first event breaking ``policy``."""
    evs, pos = _events_with_pos(trace)
    for k, ev in enumerate(evs):
        why = _def_base(ev, evs[:k], policy) or _def_comm(ev, k, evs, pos, policy)
        if why:
            return k, why
        # a synchronous send must be followed by state, reception
        nxt = pos[k] + 2
        if _is_rendezvous(ev, evs[:k], policy) and nxt < len(trace) and isinstance(trace[nxt], State):
            return k + 1, "synchronous send not immediately received"
    return None


def _is_rendezvous(ev: Event, prior: list[Event], policy: Policy) -> bool:
    if ev.kind != "sendEv":
        return False
    conj = policy.conjuncts
    sync = "sync" in conj or ("capacity" in conj and policy.cap_of(_lit_val(ev.payload[1])) == 0)
    return sync and not any(_matches(ev, r, policy) for r in prior)


def check_trace(trace, policy: Policy) -> bool:
    return first_violation(trace, policy) is None


# --- incremental validator -------------------------------------------------------


@dataclass
class WfIndex:
    """Summary of a well-formed trace prefix, extended one event at a time."""

    policy: Policy
    counts: Counter = field(default_factory=Counter)
    sent: dict = field(default_factory=dict)  # mid -> (chan, value, index, sender tag)
    received: dict = field(default_factory=dict)  # mid -> (chan, value, index, receiver tag)
    consumed: frozenset = frozenset()
    chan_sends: dict = field(default_factory=dict)  # chan -> tuple of mids in send order
    pending: dict = field(default_factory=dict)  # chan -> number of unreceived sends
    spawned: frozenset = frozenset()
    objects: frozenset = frozenset()
    invocations: dict = field(default_factory=dict)  # id -> invEv
    activated: frozenset = frozenset()
    resolved: frozenset = frozenset()
    seen_channels: frozenset = frozenset()  # (pid, cid) learnt by reception
    last: Optional[Event] = None
    last_sync_pending: bool = False
    gap: int = 0
    n: int = 0

    def copy(self) -> "WfIndex":
        return WfIndex(
            self.policy,
            self.counts.copy(),
            dict(self.sent),
            dict(self.received),
            self.consumed,
            dict(self.chan_sends),
            dict(self.pending),
            self.spawned,
            self.objects,
            dict(self.invocations),
            self.activated,
            self.resolved,
            self.seen_channels,
            self.last,
            self.last_sync_pending,
            self.gap,
            self.n,
        )

    def feed(self, items) -> Optional["WfIndex"]:
        """Extend by trace items; None if an event breaks the policy."""
        cur = self
        copied = False
        for x in items:
            if isinstance(x, State):
                if cur.last_sync_pending and cur.gap >= 1:
                    return None  # something other than the reception follows the send
                if not copied:
                    cur, copied = cur.copy(), True
                cur.gap += 1
                continue
            if not copied:
                cur, copied = cur.copy(), True
            if cur.violation(x) is not None:
                return None
            cur._record(x)
        return cur

    def admits(self, items) -> bool:
        return self.feed(items) is not None

    # checks
    def violation(self, ev: Event) -> Optional[str]:
        return self._base(ev) or self._comm(ev)

    def _base(self, ev: Event) -> Optional[str]:
        b = self.policy.base
        c = self.counts
        if b == "base":
            if ev.kind == "invREv" and not c[("inv",) + ev.payload] > c[("run",) + ev.payload]:
                return "method activation without pending invocation"
            return None
        if b in ("multi", "promela"):
            if ev.kind == "sendEv" and ev.payload[2] in self.sent:
                return "message id sent twice"
            if ev.kind == "receiveEv" and ev.payload[2] in self.received:
                return "message id received twice"
            if b == "multi" and ev.kind == "spawnEv" and ev.payload[2] in self.spawned:
                return "process id spawned twice"
            if b == "multi" and ev.kind == "invREv":
                key = (ev.tag,) + ev.payload
                if not c[("inv",) + key] + c[("spawn",) + ev.payload + (lit(ev.tag),)] > c[("run",) + key]:
                    return "method activation without pending invocation"
            return None
        if ev.kind == "newEv" and ev.payload[0] in self.objects:
            return "object created twice"
        if ev.kind == "invEv":
            if ev.payload[1] not in self.objects:
                return "call to an object that does not exist"
            if ev.payload[3] in self.invocations:
                return "invocation id used twice"
        if ev.kind == "invREv":
            me = lit(ev.tag) if ev.tag is not None else None
            if b == "actor":
                args, m, i = ev.payload
                inv = self.invocations.get(i)
                ok = inv is not None and inv.payload == (args, me, m, i)
            else:
                args, caller, m, i = ev.payload
                inv = self.invocations.get(i)
                ok = inv is not None and inv.tag is not None and lit(inv.tag) == caller and inv.payload == (args, me, m, i)
            if not ok:
                return "activation without matching invocation"
            if i in self.activated:
                return "invocation activated twice"
        if ev.kind == "compREv" and b == "future" and ev.payload not in self.resolved:
            return "future read before it was resolved"
        return None

    def _comm(self, ev: Event) -> Optional[str]:
        pol = self.policy
        conj = pol.conjuncts
        adjacent = self.last is not None and self.gap == 1
        if ev.kind == "receiveEv":
            chan, v, i = _chan_recv(ev, pol)
            s = self.sent.get(i)
            has_send = s is not None and s[0] == chan and s[1] == v
            if any(c in conj for c in ("ac", "fifo", "bounded", "co", "sync")) and not has_send:
                return "message received but never sent"
            if ("fifo" in conj or "bounded" in conj) and has_send and self._overtakes(chan, i):
                return "message overtakes an earlier one on its channel"
            if "co" in conj and has_send and self._co_bypassed(ev, i):
                return "message overtaken by a causal chain"
            if "sync" in conj:
                if not (adjacent and self.last.kind == "sendEv" and self.last.payload[2] == i and has_send):
                    return "reception does not directly follow its send"
            if "consume" in conj and (ev.payload[1], i) in self.consumed:
                return "message consumed twice"
            if "capacity" in conj:
                cap = pol.cap_of(_lit_val(ev.payload[1]))
                if cap == 0:
                    if not (adjacent and self.last.kind == "sendEv" and self.last.payload[2] == i and has_send):
                        return "rendezvous reception does not directly follow its send"
                elif cap is not None and has_send and self._overtakes(chan, i):
                    return "message overtakes an earlier one on its channel"
        if ev.kind == "sendEv":
            chan = _chan_send(ev, pol)[0]
            if "bounded" in conj and not self.pending.get(chan, 0) < (pol.bound or 0):
                return "channel full"
            if "capacity" in conj:
                cap = pol.cap_of(_lit_val(ev.payload[1]))
                if cap is not None and cap > 0 and not self.pending.get(chan, 0) < cap:
                    return "channel full"
        if ev.kind in ("sendEv", "receiveEv") and "channels" in conj:
            c = _lit_val(ev.payload[1])
            if not (c in pol.global_channels or (ev.tag, c) in pol.local_channels or (ev.tag, c) in self.seen_channels):
                return "channel not visible to the process"
        if self.last_sync_pending:
            last = self.last
            ok = (
                ev.kind == "receiveEv"
                and adjacent
                and _chan_recv(ev, pol) == _chan_send(last, pol)
            )
            if not ok:
                return "synchronous send not immediately received"
        return None

    def _overtakes(self, chan, i) -> bool:
        for j in self.chan_sends.get(chan, ()):
            if j == i:
                return False
            r = self.received.get(j)
            if r is None or r[0] != chan or r[1] != self.sent[j][1]:
                return True
        return False

    def _co_bypassed(self, ev: Event, i) -> bool:
        pol = self.policy
        target_send = self.sent[i][2]
        dest = _dest_of_recv(ev, pol)
        # messages that were both sent and received, as (send idx, recv idx, sender, receiver)
        msgs = []
        for j, (chan, v, sidx, sender) in self.sent.items():
            r = self.received.get(j)
            if r is not None and r[0] == chan and r[1] == v:
                msgs.append((sidx, r[2], sender, r[3]))
        for j, (chan, v, sidx, sender) in self.sent.items():
            if _chan_dest(chan, pol) != dest:
                continue
            r = self.received.get(j)
            if r is not None and r[0] == chan and r[1] == v:
                continue
            if _chain_exists(sidx, target_send, msgs):
                return True
        return False

    def _record(self, ev: Event) -> None:
        pol = self.policy
        c = self.counts
        if ev.kind == "invEv":
            if pol.base == "base":
                c[("inv",) + ev.payload] += 1
            elif pol.base == "multi":
                c[("inv", ev.tag) + ev.payload] += 1
            else:
                self.invocations[ev.payload[3]] = ev
        elif ev.kind == "invREv":
            if pol.base == "base":
                c[("run",) + ev.payload] += 1
            elif pol.base == "multi":
                c[("run", ev.tag) + ev.payload] += 1
            else:
                self.activated = self.activated | {ev.payload[2] if pol.base == "actor" else ev.payload[3]}
        elif ev.kind == "spawnEv":
            c[("spawn",) + ev.payload] += 1
            self.spawned = self.spawned | {ev.payload[2]}
        elif ev.kind == "newEv":
            self.objects = self.objects | {ev.payload[0]}
        elif ev.kind == "compEv":
            self.resolved = self.resolved | {ev.payload}
        elif ev.kind == "sendEv":
            chan, v, i = _chan_send(ev, pol)
            self.sent[i] = (chan, v, self.n, ev.tag)
            self.chan_sends[chan] = self.chan_sends.get(chan, ()) + (i,)
            self.pending[chan] = self.pending.get(chan, 0) + 1
        elif ev.kind == "receiveEv":
            chan, v, i = _chan_recv(ev, pol)
            self.received[i] = (chan, v, self.n, ev.tag)
            self.consumed = self.consumed | {(ev.payload[1], i)}
            s = self.sent.get(i)
            if s is not None and s[0] == chan and s[1] == v:
                self.pending[chan] = self.pending.get(chan, 0) - 1
            if isinstance(v, Lit) and v.sort == "cid":
                self.seen_channels = self.seen_channels | {(ev.tag, v.value)}
        sync_send = False
        if ev.kind == "sendEv":
            conj = pol.conjuncts
            sync_send = "sync" in conj or ("capacity" in conj and pol.cap_of(_lit_val(ev.payload[1])) == 0)
            r = self.received.get(ev.payload[2])
            if r is not None and (r[0], r[1]) == _chan_send(ev, pol)[:2]:
                sync_send = False
        self.last_sync_pending = sync_send
        self.last = ev
        self.gap = 0
        self.n += 1


def _chan_dest(chan, policy: Policy):
    return chan if policy.channel_addressed else chan[1]


def _chain_exists(start: int, end: int, msgs: list) -> bool:
    frontier = deque(m for m in msgs if start < m[0])
    seen = set()
    while frontier:
        m = frontier.popleft()
        if m in seen:
            continue
        seen.add(m)
        sidx, ridx, sender, receiver = m
        if ridx < end:
            return True
        for n in msgs:
            if n[2] == receiver and ridx < n[0] and n not in seen:
                frontier.append(n)
    return False


def index_of(trace, policy: Policy) -> Optional[WfIndex]:
    """Build the incremental index for a whole trace (None if ill-formed)."""
    return WfIndex(policy).feed(trace)


def incremental_first_violation(trace, policy: Policy) -> Optional[int]:
    idx = WfIndex(policy)
    k = 0
    for x in trace:
        nxt = idx.feed((x,))
        if nxt is None:
            return k
        if isinstance(x, Event):
            k += 1
        idx = nxt
    return None
