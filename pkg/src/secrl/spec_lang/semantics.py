"""Finite-trace monitor: brute-force satisfaction of quantified formulas.

Windows are index windows [i, j] over trace positions.  An operand of a
within-window must *complete* inside the window; the window's right end caps
every obligation started in it.  Concatenation splits at the minimal k whose
prefix window satisfies the left operand.  Trace-extent requirements are a
precondition (TraceTooShort), not part of window satisfaction, so a verdict
can be decided by a strict prefix of the deadline when the obligations
resolve early.

Hold side conditions under non-unit timestamps admit two readings; both are
exposed via ``hold_mode``:

* ``"index"`` (default): the d+1 consecutive positions i..i+d must satisfy
  the proposition.  With unit timestamps this is the standard reading.
* ``"span"``: every position from i until the first position whose timestamp
  has advanced by >= d time units must satisfy the proposition.
"""

from __future__ import annotations

from itertools import product

from ..errors import TraceTooShort
from . import formula as F

_BIG = 1 << 60  # effectively unbounded top-level window


class _Monitor:
    def __init__(self, assignment, hold_mode):
        # assignment: var -> TimedTrace-like with .events / .timestamps
        self.assignment = assignment
        self.hold_mode = hold_mode
        self.memo = {}

    def sat(self, f, i, j):
        key = (f, i, j)
        cached = self.memo.get(key)
        if cached is None:
            cached = self.memo[key] = self._sat(f, i, j)
        return cached

    def _sat(self, f, i, j):
        if f is F.TOP:
            return True
        if f is F.BOTTOM:
            return False
        if isinstance(f, F.Hold):
            return self._sat_hold(f, i, j)
        if isinstance(f, F.Not):
            return not self.sat(f.operand, i, j)
        if isinstance(f, F.And):
            return self.sat(f.left, i, j) and self.sat(f.right, i, j)
        if isinstance(f, F.Or):
            return self.sat(f.left, i, j) or self.sat(f.right, i, j)
        if isinstance(f, F.Implies):
            return (not self.sat(f.left, i, j)) or self.sat(f.right, i, j)
        if isinstance(f, F.Concat):
            # Minimal split point; beyond the left deadline the verdict of
            # the prefix window is constant, so the search range is finite.
            k_hi = min(j, i + F.deadline_inner(f.left))
            for k in range(i, k_hi + 1):
                if self.sat(f.left, i, k):
                    return self.sat(f.right, k + 1, j)
            return False
        if isinstance(f, F.Within):
            cap = min(i + f.hi, j)
            return any(
                self.sat(f.operand, k, cap) for k in range(i + f.lo, i + f.hi + 1)
            )
        if isinstance(f, F.CapEnd):
            return self.sat(f.operand, i, min(i + f.end, j))
        raise TypeError(f"unknown node {f!r}")

    def _sat_hold(self, f, i, j):
        trace = self.assignment[f.var]
        events = trace.events
        if self.hold_mode == "span" and not trace.unit_spaced:
            stamps = trace.timestamps
            if i >= len(events):
                return False
            last = None
            for p in range(i, len(events)):
                if stamps[p] - stamps[i] >= f.duration:
                    last = p
                    break
            if last is None or last > j:
                return False
        else:
            last = i + f.duration
            if last > j or last >= len(events):
                return False
        for p in range(i, last + 1):
            if (f.prop in events[p]) == f.negated:
                return False
        return True


def _check_traces(ast, traces, alphabet, allow_short):
    deadline = ast.deadline()
    for trace in traces:
        if alphabet is not None:
            trace.check_alphabet(alphabet)
        if allow_short:
            continue
        if trace.unit_spaced:
            covered = len(trace) >= deadline + 1
        else:
            covered = len(trace) > 0 and trace.timestamps[-1] >= deadline
        if not covered:
            raise TraceTooShort(
                f"trace of length {len(trace)} cannot cover deadline {deadline}"
            )


def evaluate(ast, traces, alphabet=None, hold_mode="index", allow_short=False):
    """Table-style satisfaction of a quantified formula over a trace set.

    Quantifiers range over ``traces`` with repetition.  Over an empty trace
    set a universal formula is vacuously true and an existential one false.
    """
    traces = list(traces)
    _check_traces(ast, traces, alphabet, allow_short)
    return _quantify(ast.quantifiers, ast.body, {}, traces, hold_mode)


def _quantify(quantifiers, body, bound, traces, hold_mode):
    if not quantifiers:
        monitor = _Monitor(bound, hold_mode)
        return monitor.sat(body, 0, _BIG)
    (kind, var), rest = quantifiers[0], quantifiers[1:]
    results = (
        _quantify(rest, body, {**bound, var: t}, traces, hold_mode) for t in traces
    )
    return all(results) if kind == F.FORALL else any(results)


def evaluate_assignment(ast, trace_tuple, alphabet=None, hold_mode="index",
                        allow_short=False):
    """Verdict of the body with prefix variables bound positionally.

    This is the per-tuple check used to validate automata and to flag
    episode satisfaction: quantification is externalized, the i-th prefix
    variable is bound to ``trace_tuple[i]``.
    """
    variables = ast.variables
    if len(trace_tuple) != len(variables):
        raise ValueError(
            f"expected {len(variables)} traces, got {len(trace_tuple)}"
        )
    _check_traces(ast, trace_tuple, alphabet, allow_short)
    monitor = _Monitor(dict(zip(variables, trace_tuple)), hold_mode)
    return monitor.sat(ast.body, 0, _BIG)


def satisfies_word(body, var_order, word):
    """Verdict of an inner formula on a zipped word of event tuples.

    ``word`` is a sequence of tuples of events (one coordinate per variable
    in ``var_order``), read with unit timestamps.  Used as the language
    oracle for automata construction.
    """
    from .traces import TimedTrace

    assignment = {
        var: TimedTrace.from_events([symbol[c] for symbol in word])
        for c, var in enumerate(var_order)
    }
    monitor = _Monitor(assignment, "index")
    return monitor.sat(body, 0, _BIG)


def enumerate_assignments(quantifiers, traces):
    """All prefix assignments as tuples, in quantifier order (test helper)."""
    return product(traces, repeat=len(quantifiers))
