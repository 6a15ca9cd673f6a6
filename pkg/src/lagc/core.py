"""Values, symbolic expressions and symbolic states.

A symbolic state maps variable names to symbolic expressions.  A variable
bound to ``STAR`` is a symbolic variable: its value is not yet known.  Every
other binding may only mention symbolic variables (well-formedness).

Integers are checked 64-bit; overflow and division by zero raise.  Division
truncates towards zero and ``%`` takes the sign of the dividend.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Union

from .errors import ArithmeticOverflow, ConcretizationError, DivisionByZero, EvalError, SortError

INT_MIN = -(2**63)
INT_MAX = 2**63 - 1

ID_SORTS = ("pid", "oid", "fid", "mid", "cid")
_ID_PREFIX = {"pid": "p", "oid": "o", "fid": "f", "mid": "i", "cid": "c"}
_SORT_RANK = {"int": 0, "bool": 1, "pid": 2, "oid": 3, "fid": 4, "mid": 5, "cid": 6, "name": 7}


@dataclass(frozen=True, order=True)
class Id:
    """Identifier of a process, object, future, message or channel.

    Ids only support equality; ``order=True`` is used for canonical sorting.
    """

    sort: str
    n: int

    def __post_init__(self) -> None:
        if self.sort not in _ID_PREFIX:
            raise ValueError(f"unknown id sort {self.sort!r}")

    def __str__(self) -> str:
        return f"{_ID_PREFIX[self.sort]}{self.n}"

    @staticmethod
    def parse(text: str) -> "Id":
        for sort, prefix in _ID_PREFIX.items():
            if text.startswith(prefix) and text[len(prefix):].isdigit():
                return Id(sort, int(text[len(prefix):]))
        raise ValueError(f"not an id: {text!r}")


Value = Union[int, bool, Id, str]


def sort_of(v: Value) -> str:
    if isinstance(v, bool):
        return "bool"
    if isinstance(v, int):
        return "int"
    if isinstance(v, Id):
        return v.sort
    if isinstance(v, str):
        return "name"
    raise SortError(f"not a value: {v!r}")


# --- expressions -----------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Lit:
    """A literal value.  ``sort`` keeps ``1`` and ``True`` apart."""

    value: Value
    sort: str

    def __str__(self) -> str:
        if self.sort == "bool":
            return "tt" if self.value else "ff"
        return str(self.value)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "SExpr"
    right: "SExpr"

    def __str__(self) -> str:
        def wrap(e: SExpr) -> str:
            return f"({e})" if isinstance(e, BinOp) else str(e)

        return f"{wrap(self.left)} {self.op} {wrap(self.right)}"


class _Star:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self) -> str:
        return "*"

    __str__ = __repr__

    def __reduce__(self):
        return (_Star, ())


STAR = _Star()

SExpr = Union[Var, Lit, BinOp, _Star]

TT = Lit(True, "bool")
FF = Lit(False, "bool")

ARITH = ("+", "-", "*", "/", "%")
COMPARE = ("<", "<=", ">", ">=")
EQUALITY = ("==", "!=")
LOGIC = ("&&", "||")
OPERATORS = ARITH + COMPARE + EQUALITY + LOGIC


def lit(v: Value) -> Lit:
    return Lit(v, sort_of(v))


def as_expr(v) -> SExpr:
    if isinstance(v, (Var, Lit, BinOp, _Star)):
        return v
    return lit(v)


def is_value(e) -> bool:
    return isinstance(e, Lit)


def expr_vars(e: SExpr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, BinOp):
        return expr_vars(e.left) | expr_vars(e.right)
    return frozenset()


def _check_int(n: int) -> Lit:
    if n < INT_MIN or n > INT_MAX:
        raise ArithmeticOverflow(f"integer overflow: {n}")
    return Lit(n, "int")


def apply_op(op: str, a: Lit, b: Lit) -> Lit:
    """Apply a binary operator to two literals with sort checking."""
    if op in ARITH or op in COMPARE:
        if a.sort != "int" or b.sort != "int":
            raise SortError(f"{op} expects integers, got {a.sort} and {b.sort}")
        x, y = a.value, b.value
        if op == "+":
            return _check_int(x + y)
        if op == "-":
            return _check_int(x - y)
        if op == "*":
            return _check_int(x * y)
        if op in ("/", "%"):
            if y == 0:
                raise DivisionByZero("division by zero")
            q = abs(x) // abs(y)
            if (x < 0) != (y < 0):
                q = -q
            return _check_int(q) if op == "/" else _check_int(x - q * y)
        if op == "<":
            return lit(x < y)
        if op == "<=":
            return lit(x <= y)
        if op == ">":
            return lit(x > y)
        return lit(x >= y)
    if op in EQUALITY:
        if a.sort != b.sort:
            raise SortError(f"cannot compare {a.sort} with {b.sort}")
        same = a.value == b.value
        return lit(same if op == "==" else not same)
    if op in LOGIC:
        if a.sort != "bool" or b.sort != "bool":
            raise SortError(f"{op} expects booleans")
        return lit((a.value and b.value) if op == "&&" else (a.value or b.value))
    raise EvalError(f"unknown operator {op!r}")


# --- states ----------------------------------------------------------------


class State(Mapping[str, SExpr]):
    """Immutable symbolic state.  Printing and iteration use sorted keys."""

    __slots__ = ("_d", "_hash")

    def __init__(self, bindings: Mapping[str, SExpr] | Iterable[tuple[str, SExpr]] = ()):
        d = dict(bindings)
        for k, v in d.items():
            if not isinstance(v, (Var, Lit, BinOp, _Star)):
                d[k] = lit(v)
        self._d = d
        self._hash = None

    def __getitem__(self, key: str) -> SExpr:
        return self._d[key]

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._d))

    def __len__(self) -> int:
        return len(self._d)

    def __contains__(self, key) -> bool:
        return key in self._d

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._d.items()))
        return self._hash

    def __eq__(self, other) -> bool:
        if not isinstance(other, State):
            return NotImplemented
        return self._d == other._d

    def __repr__(self) -> str:
        return "[" + ", ".join(f"{k}↦{self._d[k]}" for k in sorted(self._d)) + "]"

    def __reduce__(self):
        return (State, (self._d,))

    def items(self):
        return ((k, self._d[k]) for k in sorted(self._d))

    def symbols(self) -> frozenset[str]:
        return frozenset(k for k, v in self._d.items() if v is STAR)

    def is_concrete(self) -> bool:
        return all(isinstance(v, Lit) for v in self._d.values())

    def extends(self, other: "State") -> bool:
        """True if every binding of ``other`` is also a binding here."""
        d = self._d
        return all(k in d and d[k] == v for k, v in other._d.items())

    def bind(self, **kw) -> "State":
        d = dict(self._d)
        d.update({k: as_expr(v) for k, v in kw.items()})
        return State(d)

    def raw(self) -> dict[str, SExpr]:
        return dict(self._d)


EMPTY_STATE = State()


def eval_expr(state: Mapping[str, SExpr], e: SExpr) -> SExpr:
    """Evaluate by substitution and constant folding.

    Variables bound to ``STAR`` evaluate to themselves.
    """
    if isinstance(e, Lit):
        return e
    if isinstance(e, Var):
        try:
            v = state[e.name]
        except KeyError:
            raise EvalError(f"unbound variable {e.name}") from None
        return e if v is STAR else v
    if isinstance(e, BinOp):
        left = eval_expr(state, e.left)
        right = eval_expr(state, e.right)
        if isinstance(left, Lit) and isinstance(right, Lit):
            return apply_op(e.op, left, right)
        if left is STAR or right is STAR:
            raise EvalError("star inside an operator")
        return BinOp(e.op, left, right)
    if e is STAR:
        return STAR
    raise EvalError(f"not an expression: {e!r}")


def is_well_formed(state: State) -> bool:
    symb = state.symbols()
    return all(expr_vars(v) <= symb for v in state.values())


def update(state: State, x: str, se: SExpr) -> State:
    """``state[x -> se]`` with the result normalised.

    The right-hand side is evaluated in the old state.  When a symbolic
    variable receives a non-star value, every binding that mentions it is
    simplified.
    """
    v = STAR if se is STAR else eval_expr(state, se)
    d = state.raw()
    was_symbolic = d.get(x) is STAR
    d[x] = v
    if was_symbolic and v is not STAR:
        tmp = State(d)
        for y, w in list(d.items()):
            if y != x and w is not STAR and x in expr_vars(w):
                d[y] = eval_expr(tmp, w)
    return State(d)


def update_many(state: State, bindings: Iterable[tuple[str, SExpr]]) -> State:
    for x, se in bindings:
        state = update(state, x, se)
    return state


def mark_symbolic(state: State, names: Iterable[str]) -> State:
    d = state.raw()
    for n in names:
        d[n] = STAR
    return State(d)


def check_concretizes(rho: Mapping[str, SExpr], state: State) -> None:
    for k, v in state._d.items():
        if (v is STAR) != (k in rho):
            raise ConcretizationError(
                f"mapping does not concretise {k}: symbolic={v is STAR}, bound={k in rho}"
            )


def _rename_field_key(key: str, rho: Mapping[str, SExpr]) -> str:
    # object fields are stored under "<owner>.<field>"; a symbolic owner is
    # replaced by the id it is concretised to
    owner, dot, field = key.partition(".")
    if dot and owner in rho:
        return f"{rho[owner]}.{field}"
    return key


def concretize_state(rho: Mapping[str, SExpr], state: State) -> State:
    """``rho`` composed with ``state``: rho plus the evaluated non-symbolic bindings."""
    check_concretizes(rho, state)
    d: dict[str, SExpr] = {k: as_expr(v) for k, v in rho.items()}
    env = State(d)
    for k, v in state._d.items():
        if k in rho:
            continue
        val = eval_expr(env, v)
        if not isinstance(val, Lit):
            raise ConcretizationError(f"binding of {k} stays symbolic under the mapping")
        d[_rename_field_key(k, rho)] = val
    return State(d)


def value_key(v: SExpr):
    """Total order on literals used for canonical enumeration order."""
    if isinstance(v, Lit):
        inner = v.value
        if isinstance(inner, Id):
            inner = inner.n
        return (_SORT_RANK.get(v.sort, 9), inner)
    return (10, str(v))
