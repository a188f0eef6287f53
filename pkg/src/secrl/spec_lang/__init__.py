"""Specification language: formulas, parsing, traces, and the monitor."""

from .formula import (
    EXISTS,
    FORALL,
    FormulaAst,
    and_,
    cap_end,
    concat,
    deadline_inner,
    hold,
    implies,
    not_,
    or_,
    pretty,
    pretty_formula,
    propositions_of,
    variables_of,
    within,
    BOTTOM,
    TOP,
)
from .parser import parse
from .semantics import evaluate, evaluate_assignment, satisfies_word
from .traces import TimedTrace, format_trace, load_traces, parse_trace, save_traces


def deadline(ast):
    """Execution deadline of a parsed formula."""
    return ast.deadline()


__all__ = [
    "EXISTS", "FORALL", "FormulaAst", "TimedTrace", "TOP", "BOTTOM",
    "and_", "cap_end", "concat", "deadline", "deadline_inner", "evaluate",
    "evaluate_assignment", "format_trace", "hold", "implies", "load_traces",
    "not_", "or_", "parse", "parse_trace", "pretty", "pretty_formula",
    "propositions_of", "satisfies_word", "save_traces", "variables_of",
    "within",
]
