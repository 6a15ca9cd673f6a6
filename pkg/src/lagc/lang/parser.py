"""Recursive-descent parser for the ASCII surface syntax.

Statement forms::

    skip   x := e   s; s   if e { s } [else { s }]   while e { s }
    co s || s oc   atomic(s)   { x; y; s }   input(x)   call(m, e)
    :: g -> s   goto L   label L: s   send(e, e)   receive(x, e)
    x := spawn(m, e)   x := new C(e, ..)   x!m(e, ..)   f := x!m(e, ..)
    await f?   await e   y := f.get   return e   this.m(e, ..)
    if :: g -> s :: else -> s fi   do :: g -> s od   break   c!e   c?x

Inside a ``co`` branch a logical ``||`` must be parenthesised.  Id
literals are written ``@p0``, ``@o1``, ``@f0``, ``@i2`` and ``@c0``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from ..core import BinOp, Id, SExpr, Var, lit
from ..errors import GateError, ParseError
from . import ast as A
from .ast import Variant

KEYWORDS = {
    "skip", "if", "else", "while", "co", "oc", "atomic", "input", "call", "goto", "label",
    "send", "receive", "spawn", "new", "await", "return", "this", "class", "tt", "ff",
    "true", "false", "fi", "do", "od", "break", "chan", "proctype", "active", "of",
    "int", "bool", "byte",
}

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*|/\*.*?\*/)
  | (?P<int>\d+)
  | (?P<id>@[pofic]\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym>:=|::|->|\|\||&&|==|!=|<=|>=|[;{}(),<>+\-*/%!?.:\[\]=])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class Tok:
    kind: str  # int, ident, kw, sym, eof
    text: str
    line: int
    col: int


def tokenize(src: str) -> list[Tok]:
    toks: list[Tok] = []
    pos, line, col = 0, 1, 1
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if not m:
            raise ParseError(f"unexpected character {src[pos]!r}", line, col)
        text = m.group(0)
        kind = m.lastgroup
        if kind != "ws":
            if kind == "ident" and text in KEYWORDS:
                kind = "kw"
            toks.append(Tok(kind, text, line, col))
        nl = text.count("\n")
        if nl:
            line += nl
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        pos = m.end()
    toks.append(Tok("eof", "", line, col))
    return toks


# which statement classes each variant admits
_BASE = {A.Skip, A.Assign, A.If, A.While, A.Seq}
_PAR = _BASE | {A.Co, A.Atomic, A.Block, A.Input, A.Guarded}
_PROC = _PAR | {A.Call}
_MULTI = _PROC | {A.Send, A.Receive, A.Spawn}
_PROMELA = {A.Skip, A.Assign, A.Seq, A.Block, A.Guarded, A.Atomic, A.Select, A.Repeat,
            A.Break, A.Goto, A.Labeled, A.Send, A.Receive}
_ACTOR = {A.Skip, A.Assign, A.If, A.Seq, A.Block, A.Atomic, A.New, A.AsyncCall}
_AO = {A.Skip, A.Assign, A.If, A.While, A.Seq, A.Block, A.New, A.AsyncCall, A.Get,
       A.AwaitBool, A.AwaitFut, A.Return, A.SelfCall}

ALLOWED = {
    Variant.SEQ: _BASE,
    Variant.PAR: _PAR,
    Variant.PROC: _PROC,
    Variant.MULTI: _MULTI,
    Variant.PROMELA_MINI: _PROMELA,
    Variant.ACTOR: _ACTOR,
    Variant.ACTIVE_OBJECT: _AO,
}

_NAMES = {
    A.Co: "co", A.Atomic: "atomic", A.Block: "local scope", A.Input: "input", A.Guarded: "guarded statement",
    A.Call: "call", A.Send: "send", A.Receive: "receive", A.Spawn: "spawn", A.Select: "selection",
    A.Repeat: "repetition", A.Break: "break", A.Goto: "goto", A.Labeled: "label", A.New: "new",
    A.AsyncCall: "asynchronous call", A.Get: "get", A.AwaitBool: "await", A.AwaitFut: "await",
    A.Return: "return", A.SelfCall: "synchronous self call", A.If: "if", A.While: "while",
}


class Parser:
    def __init__(self, src: str, variant: Variant):
        self.toks = tokenize(src)
        self.i = 0
        self.variant = variant
        self.co_depth = 0
        self.branch_depth = 0  # inside ``if :: .. fi`` / ``do :: .. od``

    # --- token helpers
    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("sym", "kw") and t.text == text

    def advance(self) -> Tok:
        t = self.tok
        self.i += 1
        return t

    def error(self, msg: str, tok: Optional[Tok] = None):
        t = tok or self.tok
        found = t.text or "end of input"
        raise ParseError(f"{msg} (found {found!r})", t.line, t.col)

    def expect(self, text: str) -> Tok:
        if not self.at(text):
            self.error(f"expected {text!r}")
        return self.advance()

    def ident(self) -> str:
        if self.tok.kind != "ident":
            self.error("expected identifier")
        return self.advance().text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.advance()
            return True
        return False

    def gate(self, cls, tok: Tok):
        if cls not in ALLOWED[self.variant]:
            name = _NAMES.get(cls, cls.__name__)
            raise GateError(f"{tok.line}:{tok.col}: {name} is not part of the {self.variant.value} language")

    # --- expressions
    _LEVELS = [("||",), ("&&",), ("==", "!="), ("<", "<=", ">", ">="), ("+", "-"), ("*", "/", "%")]

    def expr(self, level: int = 0) -> SExpr:
        if level == len(self._LEVELS):
            return self.unary()
        left = self.expr(level + 1)
        ops = self._LEVELS[level]
        while self.tok.kind == "sym" and self.tok.text in ops:
            if self.tok.text == "||" and self.co_depth > 0:
                break
            op = self.advance().text
            right = self.expr(level + 1)
            left = BinOp(op, left, right)
        return left

    def unary(self) -> SExpr:
        if self.at("-"):
            self.advance()
            if self.tok.kind == "int":
                return lit(-int(self.advance().text))
            return BinOp("-", lit(0), self.unary())
        if self.at("!"):
            self.advance()
            return BinOp("==", self.unary(), lit(False))
        return self.primary()

    def primary(self) -> SExpr:
        t = self.tok
        if t.kind == "int":
            self.advance()
            return lit(int(t.text))
        if t.kind == "id":
            self.advance()
            return lit(Id.parse(t.text[1:]))
        if t.kind == "kw" and t.text in ("tt", "true"):
            self.advance()
            return lit(True)
        if t.kind == "kw" and t.text in ("ff", "false"):
            self.advance()
            return lit(False)
        if t.kind == "kw" and t.text == "this":
            self.advance()
            return Var("this")
        if t.kind == "ident":
            self.advance()
            return Var(t.text)
        if self.at("("):
            self.advance()
            saved, self.co_depth = self.co_depth, 0
            e = self.expr()
            self.co_depth = saved
            self.expect(")")
            return e
        self.error("expected expression")

    def args(self) -> tuple:
        self.expect("(")
        out = []
        saved, self.co_depth = self.co_depth, 0
        if not self.at(")"):
            out.append(self.expr())
            while self.accept(","):
                out.append(self.expr())
        self.co_depth = saved
        self.expect(")")
        return tuple(out)

    # --- statements
    _STOP = {"}", "||", "oc", "::", "fi", "od", ")"}

    def stmts(self) -> A.Stmt:
        """A ``;``-separated statement sequence (trailing ``;`` allowed)."""
        items = [self.stmt()]
        while self.accept(";") or self.accept("->"):
            t = self.tok
            if t.kind == "eof" or (t.kind in ("sym", "kw") and t.text in self._STOP):
                if t.text != "::" or self.branch_depth > 0:
                    break
            items.append(self.stmt())
        return A.seq(*items)

    def block_body(self) -> A.Stmt:
        """Declarations followed by statements, up to a closing brace."""
        decls = []
        while self._at_decl():
            if self.tok.text in ("int", "bool", "byte"):
                self.advance()
            decls.append(self.ident())
            self.expect(";")
        body = A.Skip() if self.at("}") else self.stmts()
        if decls:
            self.gate(A.Block, self.tok)
            return A.Block(tuple(decls), body)
        return body

    def _at_decl(self) -> bool:
        t = self.tok
        if t.kind == "kw" and t.text in ("int", "bool", "byte"):
            return True
        return t.kind == "ident" and self.peek().kind == "sym" and self.peek().text == ";"

    def braced(self) -> A.Stmt:
        self.expect("{")
        saved = self.co_depth, self.branch_depth
        self.co_depth = self.branch_depth = 0
        body = self.block_body()
        self.co_depth, self.branch_depth = saved
        self.expect("}")
        return body

    def stmt(self) -> A.Stmt:
        t = self.tok
        V = self.variant
        if t.kind == "kw":
            kw = t.text
            if kw == "skip":
                self.advance()
                return A.Skip()
            if kw == "if":
                self.advance()
                if self.at("::"):
                    self.gate(A.Select, t)
                    branches = self.branches("fi")
                    return A.Select(branches)
                self.gate(A.If, t)
                cond = self.expr()
                then = self.braced()
                orelse = self.braced() if self.accept("else") else None
                return A.If(cond, then, orelse)
            if kw == "while":
                self.gate(A.While, t)
                self.advance()
                cond = self.expr()
                return A.While(cond, self.braced())
            if kw == "do":
                self.gate(A.Repeat, t)
                self.advance()
                return A.Repeat(self.branches("od"))
            if kw == "co":
                self.gate(A.Co, t)
                self.advance()
                self.co_depth += 1
                parts = [self.stmts()]
                while self.accept("||"):
                    parts.append(self.stmts())
                self.co_depth -= 1
                self.expect("oc")
                if len(parts) < 2:
                    self.error("co needs at least two branches")
                out = parts[-1]
                for p in reversed(parts[:-1]):
                    out = A.Co(p, out)
                return out
            if kw == "atomic":
                self.gate(A.Atomic, t)
                self.advance()
                if self.at("{"):
                    return A.Atomic(self.braced())
                self.expect("(")
                saved, self.co_depth = self.co_depth, 0
                body = self.stmts()
                self.co_depth = saved
                self.expect(")")
                return A.Atomic(body)
            if kw == "input":
                self.gate(A.Input, t)
                self.advance()
                self.expect("(")
                x = self.ident()
                self.expect(")")
                return A.Input(x)
            if kw == "call":
                self.gate(A.Call, t)
                self.advance()
                self.expect("(")
                m = self.ident()
                self.expect(",")
                e = self.expr()
                self.expect(")")
                return A.Call(m, e)
            if kw == "goto":
                self.gate(A.Goto, t)
                self.advance()
                return A.Goto(self.ident())
            if kw == "label":
                self.gate(A.Labeled, t)
                self.advance()
                name = self.ident()
                self.expect(":")
                return A.Labeled(name, self.stmt())
            if kw == "break":
                self.gate(A.Break, t)
                self.advance()
                return A.Break()
            if kw == "send":
                self.gate(A.Send, t)
                self.advance()
                self.expect("(")
                v = self.expr()
                self.expect(",")
                d = self.expr()
                self.expect(")")
                return A.Send(v, d)
            if kw == "receive":
                self.gate(A.Receive, t)
                self.advance()
                self.expect("(")
                x = self.ident()
                self.expect(",")
                src = self.expr()
                self.expect(")")
                return A.Receive(x, src)
            if kw == "await":
                self.advance()
                e = self.expr()
                if self.accept("?"):
                    self.gate(A.AwaitFut, t)
                    return A.AwaitFut(e)
                self.gate(A.AwaitBool, t)
                return A.AwaitBool(e)
            if kw == "return":
                self.gate(A.Return, t)
                self.advance()
                return A.Return(self.expr())
            if kw == "this":
                self.gate(A.SelfCall, t)
                self.advance()
                self.expect(".")
                m = self.ident()
                return A.SelfCall(m, self.args())
        if self.at("{"):
            return self.braced()
        if self.at("::"):
            self.gate(A.Guarded, t)
            self.advance()
            g = self.expr()
            if not self.accept("->"):
                self.expect(";")
            return A.Guarded(g, self.stmt())
        if t.kind == "ident":
            nxt = self.peek()
            if nxt.kind == "sym" and nxt.text == ":=":
                return self.assignment()
            if nxt.kind == "sym" and nxt.text == ":":
                self.gate(A.Labeled, t)
                name = self.advance().text
                self.advance()
                return A.Labeled(name, self.stmt())
            if nxt.kind == "sym" and nxt.text == "!":
                if V == Variant.PROMELA_MINI:
                    c = Var(self.advance().text)
                    self.advance()
                    return A.Send(self.expr(), c)
                callee = Var(self.advance().text)
                self.advance()
                m = self.ident()
                self.gate(A.AsyncCall, t)
                return A.AsyncCall(None, callee, m, self.args())
            if nxt.kind == "sym" and nxt.text == "?" and V == Variant.PROMELA_MINI:
                c = Var(self.advance().text)
                self.advance()
                return A.Receive(self.ident(), c)
        self.error("expected statement")

    def assignment(self) -> A.Stmt:
        start = self.tok
        x = self.ident()
        self.expect(":=")
        t = self.tok
        if t.kind == "kw" and t.text == "spawn":
            self.gate(A.Spawn, t)
            self.advance()
            self.expect("(")
            m = self.ident()
            self.expect(",")
            e = self.expr()
            self.expect(")")
            return A.Spawn(x, m, e)
        if t.kind == "kw" and t.text == "new":
            self.gate(A.New, t)
            self.advance()
            cls = self.ident()
            return A.New(x, cls, self.args())
        e = self.expr()
        if self.at("!") and self.peek().kind == "ident" and self.peek(2).text == "(":
            self.gate(A.AsyncCall, t)
            self.advance()
            m = self.ident()
            return A.AsyncCall(x, e, m, self.args())
        if self.at(".") and self.peek().text == "get":
            self.gate(A.Get, t)
            self.advance()
            self.advance()
            return A.Get(x, e)
        self.gate(A.Assign, start)
        return A.Assign(x, e)

    def branches(self, closer: str) -> tuple:
        out = []
        self.branch_depth += 1
        while self.accept("::"):
            out.append(self.branch())
        self.branch_depth -= 1
        self.expect(closer)
        if not out:
            self.error("selection needs at least one branch")
        return tuple(out)

    def branch(self) -> A.Branch:
        if self.accept("else"):
            if not self.accept("->"):
                self.expect(";")
            return A.Branch(None, self.stmts())
        # a guard is an expression, or an executable statement whose guard is tt
        save = self.i
        try:
            g = self.expr()
            if self.at("->") or self.at(";"):
                self.advance()
                if self.tok.kind in ("sym", "kw") and self.tok.text in ("::", "fi", "od"):
                    return A.Branch(g, A.Skip())
                return A.Branch(g, self.stmts())
        except ParseError:
            pass
        self.i = save
        body = self.stmts()
        return A.Branch(lit(True), body)

    # --- programs
    def program(self) -> A.Program:
        V = self.variant
        if V == Variant.PROMELA_MINI:
            return self.promela_program()
        methods: list[A.MethodDecl] = []
        classes: list[A.ClassDecl] = []
        while True:
            t = self.tok
            if t.kind == "kw" and t.text == "class":
                if V not in (Variant.ACTOR, Variant.ACTIVE_OBJECT):
                    raise GateError(f"{t.line}:{t.col}: classes are not part of the {V.value} language")
                classes.append(self.class_decl())
            elif t.kind == "ident" and self.peek().text == "(":
                if V not in (Variant.PROC, Variant.MULTI):
                    raise GateError(f"{t.line}:{t.col}: method declarations are not part of the {V.value} language")
                methods.append(self.method_decl(None))
            else:
                break
        if self.tok.kind == "eof":
            main = A.EMPTY
        elif (methods or classes) and self.at("{"):
            main = self.braced()
            self.accept(";")
        else:
            main = self.block_body()
        if self.tok.kind != "eof":
            self.error("unexpected input after program")
        names = [m.name for m in methods] + [m.name for c in classes for m in c.methods]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise ParseError(f"method names must be unique: {sorted(dup)}", 1, 1)
        prog = A.Program(V, main=main, methods=tuple(methods), classes=tuple(classes))
        _check_variant(prog)
        return prog

    def method_decl(self, cls: Optional[str]) -> A.MethodDecl:
        t = self.tok
        name = self.ident()
        self.expect("(")
        params = []
        if not self.at(")"):
            params.append(self.ident())
            while self.accept(","):
                params.append(self.ident())
        self.expect(")")
        if self.variant in (Variant.PROC, Variant.MULTI) and len(params) != 1:
            raise ParseError(f"method {name} must take exactly one parameter", t.line, t.col)
        body = self.braced()
        return A.MethodDecl(name, tuple(params), body, cls)

    def class_decl(self) -> A.ClassDecl:
        self.expect("class")
        name = self.ident()
        self.expect("{")
        fields = []
        while self._at_decl():
            if self.tok.text in ("int", "bool", "byte"):
                self.advance()
            fields.append(self.ident())
            self.expect(";")
        methods = []
        while not self.at("}"):
            methods.append(self.method_decl(name))
        self.expect("}")
        return A.ClassDecl(name, tuple(fields), tuple(methods))

    def chan_decl(self, owner: Optional[str]) -> A.ChannelDecl:
        self.expect("chan")
        name = self.ident()
        self.expect("=")
        self.expect("[")
        if self.tok.kind != "int":
            self.error("expected channel capacity")
        cap = int(self.advance().text)
        self.expect("]")
        if self.accept("of"):
            self.expect("{")
            while not self.at("}"):
                self.advance()
            self.expect("}")
        self.expect(";")
        return A.ChannelDecl(name, cap, owner)

    def promela_program(self) -> A.Program:
        chans: list[A.ChannelDecl] = []
        procs: list[A.ProcType] = []
        globs: list[tuple[str, str]] = []
        while self.tok.kind != "eof":
            t = self.tok
            if self.at("chan"):
                chans.append(self.chan_decl(None))
            elif t.kind == "kw" and t.text in ("int", "bool", "byte"):
                self.advance()
                globs.append((self.ident(), "bool" if t.text == "bool" else "int"))
                self.expect(";")
            elif self.at("active") or self.at("proctype"):
                self.accept("active")
                self.expect("proctype")
                name = self.ident()
                if self.accept("("):
                    self.expect(")")
                self.expect("{")
                while self.at("chan"):
                    chans.append(self.chan_decl(name))
                body = self.block_body()
                self.expect("}")
                procs.append(A.ProcType(name, body))
            else:
                self.error("expected channel, variable or proctype declaration")
        if not procs:
            raise ParseError("a ProMeLa program needs at least one proctype", 1, 1)
        prog = A.Program(Variant.PROMELA_MINI, proctypes=tuple(procs), channels=tuple(chans), globals=tuple(globs))
        _check_variant(prog)
        return prog


def _check_variant(prog: A.Program) -> None:
    """Context conditions that the grammar alone does not enforce."""
    V = prog.variant
    bodies = [prog.main] + [m.body for m in prog.all_methods()] + [p.body for p in prog.proctypes]
    for body in bodies:
        for s in A.walk(body):
            if isinstance(s, A.Atomic):
                for inner in A.walk(s.body):
                    if isinstance(inner, (A.While, A.Repeat)):
                        raise GateError("atomic blocks may not contain loops")
            if isinstance(s, A.Call) and prog.method(s.method) is None:
                raise GateError(f"call of unknown method {s.method}")
            if isinstance(s, A.Spawn) and prog.method(s.method) is None:
                raise GateError(f"spawn of unknown method {s.method}")
            if isinstance(s, A.New):
                c = prog.class_decl(s.cls)
                if c is None:
                    raise GateError(f"unknown class {s.cls}")
                if len(c.fields) != len(s.args):
                    raise GateError(f"new {s.cls} expects {len(c.fields)} arguments, got {len(s.args)}")
            if isinstance(s, A.AsyncCall):
                if V == Variant.ACTOR and s.target is not None:
                    raise GateError("actor calls do not return futures")
                m = prog.method(s.method)
                if m is None:
                    raise GateError(f"call of unknown method {s.method}")
                if len(m.params) != len(s.args):
                    raise GateError(f"{s.method} expects {len(m.params)} arguments, got {len(s.args)}")
            if isinstance(s, A.SelfCall):
                m = prog.method(s.method)
                if m is None or len(m.params) != len(s.args):
                    raise GateError(f"bad synchronous call of {s.method}")
    if V == Variant.ACTIVE_OBJECT:
        for m in prog.all_methods():
            stmts = A.flatten_seq(m.body.body if isinstance(m.body, A.Block) else m.body)
            if not stmts or not isinstance(stmts[-1], A.Return):
                raise GateError(f"method {m.name} must end with return")
            for s in A.walk(m.body):
                if isinstance(s, A.Return) and s is not stmts[-1]:
                    raise GateError(f"return may only be the final statement of {m.name}")
        for s in A.walk(prog.main):
            if isinstance(s, A.Return):
                raise GateError("return is not allowed in the main block")


def parse_program(src: str, variant: Variant | str) -> A.Program:
    """Parse a program; raises :class:`ParseError` or :class:`GateError`."""
    if isinstance(variant, str):
        variant = Variant.parse(variant)
    return Parser(src, variant).program()


def parse_stmt(src: str, variant: Variant | str = Variant.PAR) -> A.Stmt:
    if isinstance(variant, str):
        variant = Variant.parse(variant)
    p = Parser(src, variant)
    s = p.block_body()
    if p.tok.kind != "eof":
        p.error("unexpected input after statement")
    return s


def parse_expr(src: str) -> SExpr:
    p = Parser(src, Variant.SEQ)
    e = p.expr()
    if p.tok.kind != "eof":
        p.error("unexpected input after expression")
    return e
