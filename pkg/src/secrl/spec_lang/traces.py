"""Timed traces and trace files.

A timed trace is a finite sequence of (timestamp, event) pairs; events are
frozensets of proposition names.  Timestamps are non-negative integers,
non-decreasing, starting at 0.  Trace files hold one trace per line with
``;``-separated steps, each step ``tau:{p1,p2}``.
"""

from __future__ import annotations

import re

from ..errors import UnknownProposition


class TimedTrace:
    __slots__ = ("timestamps", "events")

    def __init__(self, steps):
        """steps: iterable of (timestamp, event) pairs."""
        timestamps = []
        events = []
        for tau, event in steps:
            timestamps.append(int(tau))
            events.append(frozenset(event))
        if timestamps:
            if timestamps[0] != 0:
                raise ValueError(f"first timestamp must be 0, got {timestamps[0]}")
            for a, b in zip(timestamps, timestamps[1:]):
                if b < a:
                    raise ValueError(f"timestamps must be non-decreasing ({a} > {b})")
        self.timestamps = tuple(timestamps)
        self.events = tuple(events)

    @classmethod
    def from_events(cls, events):
        """Build a unit-timestamp trace (tau_i = i) from a list of events."""
        return cls(enumerate(events))

    def __len__(self):
        return len(self.events)

    def __eq__(self, other):
        return (
            isinstance(other, TimedTrace)
            and self.timestamps == other.timestamps
            and self.events == other.events
        )

    def __hash__(self):
        return hash((self.timestamps, self.events))

    @property
    def unit_spaced(self):
        return all(tau == i for i, tau in enumerate(self.timestamps))

    def check_alphabet(self, alphabet):
        alphabet = frozenset(alphabet)
        for i, event in enumerate(self.events):
            unknown = event - alphabet
            if unknown:
                raise UnknownProposition(
                    f"step {i} uses propositions {sorted(unknown)} outside alphabet"
                )

    def __repr__(self):
        return f"TimedTrace({format_trace(self)!r})"


_STEP_RE = re.compile(r"^\s*(\d+)\s*:\s*\{([^}]*)\}\s*$")


def parse_trace(line):
    steps = []
    for part in line.strip().split(";"):
        if not part.strip():
            continue
        m = _STEP_RE.match(part)
        if m is None:
            raise ValueError(f"malformed trace step {part!r}")
        tau = int(m.group(1))
        names = [p.strip() for p in m.group(2).split(",") if p.strip()]
        steps.append((tau, names))
    return TimedTrace(steps)


def format_trace(trace):
    return ";".join(
        f"{tau}:{{{','.join(sorted(event))}}}"
        for tau, event in zip(trace.timestamps, trace.events)
    )


def load_traces(path):
    """Read a trace file: one trace per line, blank lines ignored."""
    traces = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                traces.append(parse_trace(line))
    return traces


def save_traces(traces, path):
    with open(path, "w") as fh:
        for trace in traces:
            fh.write(format_trace(trace) + "\n")
