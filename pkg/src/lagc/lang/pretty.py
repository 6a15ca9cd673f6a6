"""Pretty printer producing source text the parser accepts again."""

from __future__ import annotations

from ..core import BinOp, Id, Lit, SExpr, Var
from . import ast as A

_PREC = {"||": 1, "&&": 2, "==": 3, "!=": 3, "<": 4, "<=": 4, ">": 4, ">=": 4, "+": 5, "-": 5, "*": 6, "/": 6, "%": 6}


def pretty_expr(e: SExpr, parent: int = 0, right: bool = False) -> str:
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Lit):
        if e.sort == "bool":
            return "tt" if e.value else "ff"
        if isinstance(e.value, Id):
            return f"@{e.value}"
        if e.sort == "int" and e.value < 0:
            return f"({e.value})"
        return str(e.value)
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        text = f"{pretty_expr(e.left, p)} {e.op} {pretty_expr(e.right, p, True)}"
        if p < parent or (p == parent and right):
            return f"({text})"
        return text
    return str(e)


def _args(args) -> str:
    return ", ".join(pretty_expr(a) for a in args)


def _branch(b: A.Branch) -> str:
    g = "else" if b.guard is None else pretty_expr(b.guard)
    return f":: {g} -> {pretty(b.body)}"


def pretty(s: A.Stmt) -> str:
    if s is A.EMPTY:
        return "∘"
    if isinstance(s, A.Skip):
        return "skip"
    if isinstance(s, A.Assign):
        return f"{s.target} := {pretty_expr(s.expr)}"
    if isinstance(s, A.Spawn):
        return f"{s.target} := spawn({s.method}, {pretty_expr(s.arg)})"
    if isinstance(s, A.New):
        return f"{s.target} := new {s.cls}({_args(s.args)})"
    if isinstance(s, A.AsyncCall):
        call = f"{pretty_expr(s.callee, 9)}!{s.method}({_args(s.args)})"
        return call if s.target is None else f"{s.target} := {call}"
    if isinstance(s, A.Get):
        return f"{s.target} := {pretty_expr(s.fut, 9)}.get"
    if isinstance(s, A.If):
        text = f"if {pretty_expr(s.cond)} {{ {pretty(s.then)} }}"
        if s.orelse is not None:
            text += f" else {{ {pretty(s.orelse)} }}"
        return text
    if isinstance(s, A.While):
        return f"while {pretty_expr(s.cond)} {{ {pretty(s.body)} }}"
    if isinstance(s, A.Seq):
        first = pretty(s.first)
        if isinstance(s.first, A.Seq):
            first = f"{{ {first} }}"
        second = pretty(s.second)
        if isinstance(A.head_of(s.second), A.Guarded):
            # a ``::`` after ``;`` would open a new selection branch
            second = f"{{ {second} }}"
        return f"{first}; {second}"
    if isinstance(s, A.Co):
        return f"co {_co_branch(s.left)} || {_co_branch(s.right)} oc"
    if isinstance(s, A.Atomic):
        return f"atomic({pretty(s.body)})"
    if isinstance(s, A.Block):
        decls = "".join(f"{d}; " for d in s.decls)
        return f"{{ {decls}{pretty(s.body)} }}"
    if isinstance(s, A.Input):
        return f"input({s.target})"
    if isinstance(s, A.Call):
        return f"call({s.method}, {pretty_expr(s.arg)})"
    if isinstance(s, A.Guarded):
        body = pretty(s.body)
        if isinstance(s.body, (A.Seq, A.Guarded)):
            body = f"{{ {body} }}"
        return f":: {pretty_expr(s.guard)} -> {body}"
    if isinstance(s, A.Goto):
        return f"goto {s.label}"
    if isinstance(s, A.Labeled):
        return f"label {s.label}: {pretty(s.body)}"
    if isinstance(s, A.Send):
        return f"send({pretty_expr(s.value)}, {pretty_expr(s.dest)})"
    if isinstance(s, A.Receive):
        return f"receive({s.target}, {pretty_expr(s.src)})"
    if isinstance(s, A.AwaitBool):
        return f"await {pretty_expr(s.cond)}"
    if isinstance(s, A.AwaitFut):
        return f"await {pretty_expr(s.fut, 9)}?"
    if isinstance(s, A.Return):
        return f"return {pretty_expr(s.expr)}"
    if isinstance(s, A.SelfCall):
        return f"this.{s.method}({_args(s.args)})"
    if isinstance(s, A.Select):
        return "if " + " ".join(_branch(b) for b in s.branches) + " fi"
    if isinstance(s, A.Repeat):
        return "do " + " ".join(_branch(b) for b in s.branches) + " od"
    if isinstance(s, A.Break):
        return "break"
    if isinstance(s, A.JumpTo):
        return f"⇒({pretty(s.target)})"
    return repr(s)


def _co_branch(s: A.Stmt) -> str:
    # logical-or inside a co branch must be parenthesised; wrapping the
    # branch in a declaration-free block keeps it unambiguous
    text = pretty(s)
    if "||" in text and not isinstance(s, A.Co):
        return f"{{ {text} }}"
    return text


def pretty_method(m: A.MethodDecl) -> str:
    return f"{m.name}({', '.join(m.params)}) {_braced(m.body)}"


def _braced(s: A.Stmt) -> str:
    if isinstance(s, A.Block):
        return pretty(s)
    return f"{{ {pretty(s)} }}"


def pretty_program(p: A.Program) -> str:
    parts: list[str] = []
    V = A.Variant
    if p.variant == V.PROMELA_MINI:
        for name, sort in p.globals:
            parts.append(f"{'bool' if sort == 'bool' else 'int'} {name};")
        for c in p.channels:
            if c.owner is None:
                parts.append(f"chan {c.name} = [{c.capacity}];")
        for pt in p.proctypes:
            local = [c for c in p.channels if c.owner == pt.name]
            body = pt.body
            decl = " ".join(f"chan {c.name} = [{c.capacity}];" for c in local)
            text = pretty(body)
            parts.append(f"proctype {pt.name}() {{ {decl + ' ' if decl else ''}{text} }}")
        return "\n".join(parts)
    for c in p.classes:
        inner = " ".join(f"{f};" for f in c.fields)
        meths = " ".join(pretty_method(m) for m in c.methods)
        parts.append(f"class {c.name} {{ {inner} {meths} }}".replace("  ", " "))
    for m in p.methods:
        parts.append(pretty_method(m))
    if p.main is not A.EMPTY:
        if parts:
            parts.append(_braced(p.main))
        else:
            parts.append(pretty(p.main))
    return "\n".join(parts)
