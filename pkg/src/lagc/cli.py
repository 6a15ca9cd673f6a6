"""Command line: ``lagc run``, ``lagc check-wf`` and ``lagc prove``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

from .compose import Bounds, enumerate_traces
from .core import ID_SORTS, State
from .dl import Strategy, initial_sequent, parse_formula, prove
from .errors import GateError, LagcError, ParseError
from .lang import parse_program
from .lang.ast import Variant
from .trace import Event, dumps_line, parse_traces
from .wf import BASE_OF, default_policy, first_violation, make_policy

EXIT_OK = 0
EXIT_FAIL = 1  # wf violation or failed proof
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_GATE = 4
EXIT_TRUNCATED = 5  # every branch hit a bound
EXIT_RUNTIME = 6

MODELS = {
    "seq": Variant.SEQ,
    "while": Variant.SEQ,
    "par": Variant.PAR,
    "proc": Variant.PROC,
    "multi": Variant.MULTI,
    "promela": Variant.PROMELA_MINI,
    "actor": Variant.ACTOR,
    "ao": Variant.ACTIVE_OBJECT,
}


class UsageError(Exception):
    pass


def _domain(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(x) for x in text.split(".."))
    except ValueError:
        raise argparse.ArgumentTypeError("expected LO..HI") from None
    if lo > hi:
        raise argparse.ArgumentTypeError("empty domain")
    return lo, hi


def _pool(text: str) -> tuple[str, int]:
    if "=" not in text:
        n = _positive(text)
        return "*", n
    sort, _, n = text.partition("=")
    sort = sort.strip().lower()
    if sort not in ID_SORTS:
        raise argparse.ArgumentTypeError(f"unknown id sort {sort!r}; one of {', '.join(ID_SORTS)}")
    return sort, _positive(n)


def _positive(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lagc", description="Trace semantics explorer for small concurrent languages.")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, with_model=True):
        if with_model:
            sp.add_argument("--model", choices=sorted(MODELS), default="par", help="language variant")
        sp.add_argument("--wf", action="append", default=[], metavar="NAME",
                        help="well-formedness conjunct (ac, fifo, bounded:N, co, sync, channels, consume, capacity); repeatable")
        sp.add_argument("--domain", type=_domain, default=None, metavar="LO..HI", help="input value domain")
        sp.add_argument("--format", choices=("text", "machine"), default="text")

    r = sub.add_parser("run", help="enumerate all maximal traces of a program")
    r.add_argument("source")
    common(r)
    r.add_argument("--pool-size", type=_pool, action="append", default=[], metavar="SORT=N",
                   help="id pool size per sort (pid, oid, fid, mid, cid) or N for all")
    r.add_argument("--max-steps", type=_positive, default=1000)
    r.add_argument("--max-traces", type=_positive, default=None,
                   help="cap on emitted traces (default: $LAGC_MAX_TRACES or 10000)")
    r.add_argument("--parallel", type=int, nargs="?", const=os.cpu_count() or 2, default=0, metavar="N",
                   help="explore independent subtrees in N worker processes")

    c = sub.add_parser("check-wf", help="check serialized traces against a policy")
    c.add_argument("trace_file")
    common(c)

    v = sub.add_parser("prove", help="prove a pre/post contract with the sequent calculus")
    v.add_argument("source")
    v.add_argument("--contract", default=None, help="contract file with 'pre:' and 'post:' lines (default SOURCE.contract)")
    common(v)
    v.add_argument("--loop-unroll", type=_positive, default=8)
    v.add_argument("--max-depth", type=_positive, default=400)
    return p


def _policy(args, variant: Variant, program=None):
    base = BASE_OF[variant]
    names = []
    for w in args.wf:
        for part in w.split(","):
            part = part.strip()
            if not part:
                continue
            if part in set(BASE_OF.values()):
                if part != base:
                    raise UsageError(f"well-formedness base {part!r} does not match the {variant.value} model")
                continue
            names.append(part)
    if not args.wf:
        return default_policy(variant, program)
    try:
        return make_policy(variant, names, program)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _visible(state: State) -> str:
    return "[" + ", ".join(f"{k}↦{v}" for k, v in state.items() if "#" not in k) + "]"


def _final(state: State) -> str:
    return " ".join(f"{k}={v}" for k, v in state.items() if "#" not in k)


def cmd_run(args, out) -> int:
    variant = MODELS[args.model]
    with open(args.source, encoding="utf-8") as fh:
        program = parse_program(fh.read(), variant)
    policy = _policy(args, variant, program)
    max_traces = args.max_traces or int(os.environ.get("LAGC_MAX_TRACES", "10000"))
    pools = {}
    for sort, n in args.pool_size:
        if sort == "*":
            pools = {s: n for s in ID_SORTS} | {k: v for k, v in pools.items()}
        else:
            pools[sort] = n
    bounds = Bounds(
        domain=args.domain or (-2, 2),
        pools=tuple(sorted(pools.items())),
        max_steps=args.max_steps,
        max_traces=max_traces,
    )
    result = enumerate_traces(program, policy, bounds, parallel=args.parallel)
    summary = result.summary()
    if args.format == "machine":
        for r in result.runs:
            for line in r.lines():
                out.write(line + "\n")
        out.write(dumps_line({"summary": summary}) + "\n")
    else:
        for k, r in enumerate(result.runs, 1):
            note = f", {r.reason}" if r.reason else ""
            out.write(f"# trace {k} ({r.status}{note})\n")
            for x in r.trace:
                out.write("  " + (_visible(x) if isinstance(x, State) else str(x)) + "\n")
            out.write(f"  final: {_final(r.trace[-1])}\n")
        out.write(
            f"summary: completed={summary['completed']} deadlocked={summary['deadlocked']} "
            f"truncated={summary['truncated']} policy={policy.describe()}"
            + (" (trace cap reached)" if summary["trace_cap_reached"] else "")
            + "\n"
        )
    if result.runs and all(r.status == "truncated" for r in result.runs):
        return EXIT_TRUNCATED
    return EXIT_OK


def cmd_check_wf(args, out) -> int:
    variant = MODELS[args.model]
    policy = _policy(args, variant)
    with open(args.trace_file, encoding="utf-8") as fh:
        try:
            traces = parse_traces(fh)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, LagcError) as e:
            raise ParseError(f"malformed trace file: {e}", 0, 0) from None
    if not traces:
        traces = [({}, ())]
    status = EXIT_OK
    for k, (_hdr, tr) in enumerate(traces, 1):
        v = first_violation(tr, policy)
        if args.format == "machine":
            rec = {"trace": k, "wf": v is None, "policy": policy.describe()}
            if v is not None:
                rec.update({"index": v[0], "reason": v[1]})
            out.write(dumps_line(rec) + "\n")
        elif v is None:
            out.write(f"trace {k}: pass ({policy.describe()})\n")
        else:
            evs = [x for x in tr if isinstance(x, Event)]
            at = str(evs[v[0]]) if v[0] < len(evs) else "end of trace"
            out.write(f"trace {k}: fail at event {v[0]} ({at}): {v[1]}\n")
        if v is not None:
            status = EXIT_FAIL
    return status


def read_contract(path: str) -> dict:
    parts: dict = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, rest = line.partition(":")
            if not sep or key.strip().lower() not in ("pre", "post"):
                raise ParseError(f"contract lines look like 'pre: <formula>', got {line!r}", 0, 0)
            parts[key.strip().lower()] = rest.strip()
    if "post" not in parts:
        raise ParseError("contract has no post condition", 0, 0)
    parts.setdefault("pre", "tt")
    return parts


def cmd_prove(args, out) -> int:
    variant = MODELS[args.model]
    with open(args.source, encoding="utf-8") as fh:
        program = parse_program(fh.read(), variant)
    contract = read_contract(args.contract or args.source + ".contract")
    pre = parse_formula(contract["pre"], variant)
    post = parse_formula(contract["post"], variant)
    seq = initial_sequent(pre, program.main, post, program)
    strategy = Strategy(max_depth=args.max_depth, loop_unroll=args.loop_unroll, domain=args.domain or (-3, 3))
    res = prove(seq, strategy)
    if args.format == "machine":
        rec = {"proved": res.proved, "nodes": res.tree.size(), "domain": list(strategy.domain)}
        if not res.proved:
            rec["reason"] = res.reason
            if res.counter:
                rec["counter"] = {k: str(v) for k, v in sorted(res.counter.items())}
        out.write(dumps_line(rec) + "\n")
    else:
        out.write(res.render() + "\n")
        lo, hi = strategy.domain
        if res.proved:
            out.write(f"proved on domain {lo}..{hi}\n")
        else:
            out.write(f"not proved: {res.reason}\n")
            if res.counter:
                out.write("counter-valuation: " + ", ".join(f"{k}={v}" for k, v in sorted(res.counter.items())) + "\n")
    return EXIT_OK if res.proved else EXIT_FAIL


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "check-wf": cmd_check_wf, "prove": cmd_prove}[args.cmd]
    try:
        return handler(args, out)
    except ParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except GateError as e:
        print(f"not allowed: {e}", file=sys.stderr)
        return EXIT_GATE
    except (OSError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (LagcError, ValueError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
