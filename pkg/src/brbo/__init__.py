"""Selectively amortized resource bounding for integer control-flow-graph programs.

Pipeline: parse a program (:mod:`brbo.syntax`), pick amortization groups
and reset locations (:mod:`brbo.select`), rewrite the program
(:mod:`brbo.decompose`), then check bounds on the result by bounded
exhaustive exploration (:mod:`brbo.verify`).
"""

from .corelang import Program, Store, initial_store
from .decompose import Decomposition, difftest, transform_program
from .select import select
from .syntax import format_program, parse_expr, parse_program
from .verify import bounded_verify, check_predicate_at, max_resource

__all__ = [
    "Decomposition",
    "Program",
    "Store",
    "bounded_verify",
    "check_predicate_at",
    "difftest",
    "format_program",
    "initial_store",
    "max_resource",
    "parse_expr",
    "parse_program",
    "select",
    "transform_program",
]
