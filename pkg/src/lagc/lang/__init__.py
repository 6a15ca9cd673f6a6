"""Surface language: syntax tree, parser, pretty printer and variants."""

from .ast import EMPTY, Program, Stmt, Variant
from .parser import parse_expr, parse_program, parse_stmt
from .pretty import pretty, pretty_expr, pretty_program
from .program import infer_sorts, initial_state

__all__ = [
    "EMPTY",
    "Program",
    "Stmt",
    "Variant",
    "parse_expr",
    "parse_program",
    "parse_stmt",
    "pretty",
    "pretty_expr",
    "pretty_program",
    "infer_sorts",
    "initial_state",
]
