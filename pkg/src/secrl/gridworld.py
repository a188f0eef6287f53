"""Pick-up-and-delivery grid MDP, its self-composition, and Kripke view.

Cells are indexed row-major; actions are North, East, West, South, Stay in
that fixed order (ties everywhere break toward the front of this list).
Motion is noisy: the intended neighbor gets probability 1 - eps, the two
lateral neighbors eps/2 each, and any move into the boundary redirects its
mass to staying put.  Stay is deterministic.
"""

from __future__ import annotations

import re

import numpy as np

from .automata import KripkeStructure
from .errors import LayoutError

ACTIONS = ("North", "East", "West", "South", "Stay")
N_ACTIONS = len(ACTIONS)

# (drow, dcol) per action; laterals are the two axes orthogonal to intent.
_DELTA = {"North": (-1, 0), "East": (0, 1), "West": (0, -1), "South": (1, 0)}
_LATERALS = {
    "North": ("East", "West"),
    "South": ("East", "West"),
    "East": ("North", "South"),
    "West": ("North", "South"),
}


class MissionLayout:
    """Geometry, labeling, time bounds, and reward constants of a mission."""

    def __init__(self, width, height, initial, pickup1, pickup2, delivery1,
                 delivery2, obstacles, observed=None, rewards=(),
                 bounds=(5, 6, 20, 21, 35), motion_eps=0.05, gamma=0.95,
                 step_cost=-1.0, grey_bonus=10.0, accept_bonus=100.0,
                 obstacle_penalty=-50.0):
        self.width = int(width)
        self.height = int(height)
        self.initial = tuple(initial)
        self.pickup1 = tuple(pickup1)
        self.pickup2 = tuple(pickup2)
        self.delivery1 = tuple(delivery1)
        self.delivery2 = tuple(delivery2)
        self.obstacles = frozenset(tuple(c) for c in obstacles)
        # None means "every non-obstacle cell is observed".
        self.observed = (
            None if observed is None else frozenset(tuple(c) for c in observed)
        )
        self.rewards = frozenset(tuple(c) for c in rewards)
        self.bounds = tuple(int(b) for b in bounds)
        self.motion_eps = float(motion_eps)
        self.gamma = float(gamma)
        self.step_cost = float(step_cost)
        self.grey_bonus = float(grey_bonus)
        self.accept_bonus = float(accept_bonus)
        self.obstacle_penalty = float(obstacle_penalty)
        self._validate()

    def _validate(self):
        if self.width < 2 or self.height < 2:
            raise LayoutError("grid must be at least 2x2")
        special = {
            "initial": self.initial, "pickup1": self.pickup1,
            "pickup2": self.pickup2, "delivery1": self.delivery1,
            "delivery2": self.delivery2,
        }
        cells = list(special.values()) + list(self.obstacles) + list(self.rewards)
        if self.observed is not None:
            cells += list(self.observed)
        for r, c in cells:
            if not (0 <= r < self.height and 0 <= c < self.width):
                raise LayoutError(f"cell ({r},{c}) outside {self.height}x{self.width} grid")
        seen = {}
        for name, cell in special.items():
            if cell in seen:
                raise LayoutError(f"{name} and {seen[cell]} share cell {cell}")
            seen[cell] = name
        for cell in seen:
            if cell in self.obstacles:
                raise LayoutError(f"{seen[cell]} placed on obstacle cell {cell}")
        t1, t2, t3, t4, t5 = self.bounds
        if not (t1 < t2 <= t3 < t4 <= t5):
            raise LayoutError(f"time bounds must satisfy T1<T2<=T3<T4<=T5, got {self.bounds}")
        if not 0.0 <= self.motion_eps < 1.0:
            raise LayoutError(f"motion_eps must be in [0,1), got {self.motion_eps}")

    def cell_index(self, cell):
        r, c = cell
        return r * self.width + c

    @property
    def observed_cells(self):
        if self.observed is not None:
            return self.observed
        return frozenset(
            (r, c)
            for r in range(self.height)
            for c in range(self.width)
            if (r, c) not in self.obstacles
        )


def default_layout(**overrides):
    """The shipped 8x8 mission: a schematic of the benchmark map (one initial,
    two pick-ups, two deliveries, a central obstacle block off the main
    routes, a few reward cells, observation region = all free cells)."""
    params = dict(
        width=8, height=8,
        initial=(0, 0),
        pickup1=(0, 3), pickup2=(3, 0),
        delivery1=(7, 7), delivery2=(7, 4),
        obstacles=[(3, 3), (3, 4), (4, 3), (4, 4)],
        observed=None,
        rewards=[(0, 5), (5, 7), (7, 2), (2, 0)],
    )
    params.update(overrides)
    return MissionLayout(**params)


class GridMdp:
    """Flat-indexed grid MDP with dense outcome arrays.

    ``next_states``/``probs`` have shape (S, A, K) with ``n_out`` valid
    entries per (state, action); padding rows carry probability 0.
    """

    def __init__(self, layout, motion_eps=None):
        eps = layout.motion_eps if motion_eps is None else float(motion_eps)
        if not 0.0 <= eps < 1.0:
            raise LayoutError(f"motion_eps must be in [0,1), got {eps}")
        self.layout = layout
        self.motion_eps = eps
        self.width = layout.width
        self.height = layout.height
        self.n_states = layout.width * layout.height
        self.n_actions = N_ACTIONS
        self.initial = layout.cell_index(layout.initial)
        self.gamma = layout.gamma
        self.step_cost = layout.step_cost
        self.accept_bonus = layout.accept_bonus
        self.labels = self._build_labels()
        self.enter_bonus = self._build_bonus()
        self.next_states, self.probs, self.n_out = self._build_transitions(eps)

    def _build_labels(self):
        lay = self.layout
        named = {
            lay.initial: "I", lay.pickup1: "p1", lay.pickup2: "p2",
            lay.delivery1: "d1", lay.delivery2: "d2",
        }
        observed = lay.observed_cells
        labels = []
        for r in range(self.height):
            for c in range(self.width):
                cell = (r, c)
                props = set()
                if cell in lay.obstacles:
                    props.add("O")
                else:
                    if cell in named:
                        props.add(named[cell])
                    if cell in observed:
                        props.add("B")
                    if cell in lay.rewards:
                        props.add("R")
                labels.append(frozenset(props))
        return tuple(labels)

    def _build_bonus(self):
        lay = self.layout
        bonus = np.zeros(self.n_states)
        for cell in lay.rewards:
            bonus[lay.cell_index(cell)] = lay.grey_bonus
        for cell in lay.obstacles:
            bonus[lay.cell_index(cell)] = lay.obstacle_penalty
        return bonus

    def _neighbor(self, r, c, action):
        dr, dc = _DELTA[action]
        r2, c2 = r + dr, c + dc
        if 0 <= r2 < self.height and 0 <= c2 < self.width:
            return r2 * self.width + c2
        return None  # off-grid: mass redirects to staying

    def _build_transitions(self, eps):
        k_max = 3
        nxt = np.zeros((self.n_states, self.n_actions, k_max), dtype=np.int32)
        prb = np.zeros((self.n_states, self.n_actions, k_max))
        n_out = np.zeros((self.n_states, self.n_actions), dtype=np.int32)
        for s in range(self.n_states):
            r, c = divmod(s, self.width)
            for a, action in enumerate(ACTIONS):
                dist = {}
                if action == "Stay":
                    dist[s] = 1.0
                else:
                    moves = [(action, 1.0 - eps)]
                    lat1, lat2 = _LATERALS[action]
                    moves += [(lat1, eps / 2.0), (lat2, eps / 2.0)]
                    for direction, p in moves:
                        if p == 0.0:
                            continue
                        dst = self._neighbor(r, c, direction)
                        dst = s if dst is None else dst
                        dist[dst] = dist.get(dst, 0.0) + p
                for k, (dst, p) in enumerate(sorted(dist.items())):
                    nxt[s, a, k] = dst
                    prb[s, a, k] = p
                n_out[s, a] = len(dist)
        return nxt, prb, n_out

    def transition(self, s, a):
        """Distribution over successors as a dict state -> probability."""
        k = self.n_out[s, a]
        return {
            int(self.next_states[s, a, i]): float(self.probs[s, a, i])
            for i in range(k)
        }

    def reward(self, s, a):
        """Expected one-step reward (step cost plus entry bonuses)."""
        k = self.n_out[s, a]
        exp = sum(
            self.probs[s, a, i] * self.enter_bonus[self.next_states[s, a, i]]
            for i in range(k)
        )
        return self.step_cost + float(exp)

    def sample_step(self, s, a, rng):
        k = self.n_out[s, a]
        i = rng.choice(k, p=self.probs[s, a, :k] / self.probs[s, a, :k].sum())
        return int(self.next_states[s, a, i])


def build_grid(layout, motion_eps=None):
    return GridMdp(layout, motion_eps)


class ComposedMdp:
    """m-fold synchronous self-composition: one action drives all coordinates.

    States are base-state tuples encoded in base ``n`` (coordinate 0 is the
    most significant digit); labels are label tuples; rewards are summed.
    """

    def __init__(self, base, m):
        if m < 1:
            raise ValueError(f"composition width must be >= 1, got {m}")
        self.base = base
        self.m = m
        n = base.n_states
        self.n_states = n**m
        self.n_actions = base.n_actions
        self.gamma = base.gamma
        self.step_cost = base.step_cost * m
        self.accept_bonus = base.accept_bonus
        self.motion_eps = base.motion_eps
        self.initial = self.encode((base.initial,) * m)
        self.labels = None  # built below
        self._build()

    def encode(self, coords):
        n = self.base.n_states
        s = 0
        for c in coords:
            s = s * n + int(c)
        return s

    def decode(self, s):
        n = self.base.n_states
        out = []
        for _ in range(self.m):
            out.append(s % n)
            s //= n
        return tuple(reversed(out))

    def _build(self):
        base, m = self.base, self.m
        n = base.n_states
        k_base = base.next_states.shape[2]
        k_max = k_base**m
        self.next_states = np.zeros((self.n_states, self.n_actions, k_max),
                                    dtype=np.int64)
        self.probs = np.zeros((self.n_states, self.n_actions, k_max))
        self.n_out = np.zeros((self.n_states, self.n_actions), dtype=np.int32)
        self.enter_bonus = np.zeros(self.n_states)
        labels = []
        for s in range(self.n_states):
            coords = self.decode(s)
            labels.append(tuple(base.labels[c] for c in coords))
            self.enter_bonus[s] = sum(base.enter_bonus[c] for c in coords)
            for a in range(self.n_actions):
                dist = {}
                self._expand(coords, a, 0, 0, 1.0, dist)
                for k, (dst, p) in enumerate(sorted(dist.items())):
                    self.next_states[s, a, k] = dst
                    self.probs[s, a, k] = p
                self.n_out[s, a] = len(dist)
        self.labels = tuple(labels)

    def _expand(self, coords, a, idx, acc_state, acc_p, dist):
        base = self.base
        n = base.n_states
        if idx == self.m:
            dist[acc_state] = dist.get(acc_state, 0.0) + acc_p
            return
        s = coords[idx]
        for k in range(base.n_out[s, a]):
            self._expand(
                coords, a, idx + 1,
                acc_state * n + int(base.next_states[s, a, k]),
                acc_p * float(base.probs[s, a, k]),
                dist,
            )

    def transition(self, s, a):
        k = self.n_out[s, a]
        return {
            int(self.next_states[s, a, i]): float(self.probs[s, a, i])
            for i in range(k)
        }

    def reward(self, s, a):
        k = self.n_out[s, a]
        exp = sum(
            self.probs[s, a, i] * self.enter_bonus[self.next_states[s, a, i]]
            for i in range(k)
        )
        return self.step_cost + float(exp)


def self_compose(base, m):
    return ComposedMdp(base, m)


def to_kripke(g):
    """Forget actions and probabilities: unit-duration edges on the support."""
    transitions = set()
    for s in range(g.n_states):
        for a in range(g.n_actions):
            for k in range(g.n_out[s, a]):
                if g.probs[s, a, k] > 0.0:
                    transitions.add((s, 1, int(g.next_states[s, a, k])))
    labels = {s: g.labels[s] for s in range(g.n_states)}
    return KripkeStructure(range(g.n_states), {g.initial}, transitions, labels)


_LINE_RE = re.compile(r"^\s*([a-z_0-9]+)\s*=\s*(.*?)\s*$")


def _parse_cells(text):
    cells = []
    for part in text.split():
        r, c = part.split(",")
        cells.append((int(r), int(c)))
    return cells


def load_layout(path):
    """Read a layout file: `key = value` lines, `#` comments."""
    raw = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0]
            if not line.strip():
                continue
            m = _LINE_RE.match(line)
            if m is None:
                raise LayoutError(f"malformed layout line {ln}: {line.strip()!r}")
            raw[m.group(1)] = m.group(2)
    try:
        height, width = map(int, raw["grid"].split())
        kwargs = dict(
            width=width, height=height,
            initial=_parse_cells(raw["initial"])[0],
            pickup1=_parse_cells(raw["pickup1"])[0],
            pickup2=_parse_cells(raw["pickup2"])[0],
            delivery1=_parse_cells(raw["delivery1"])[0],
            delivery2=_parse_cells(raw["delivery2"])[0],
            obstacles=_parse_cells(raw.get("obstacles", "")),
            rewards=_parse_cells(raw.get("rewards", "")),
        )
    except (KeyError, ValueError) as exc:
        raise LayoutError(f"bad or missing layout field: {exc}") from exc
    observed = raw.get("observed", "all")
    kwargs["observed"] = None if observed == "all" else _parse_cells(observed)
    if "bounds" in raw:
        kwargs["bounds"] = tuple(map(int, raw["bounds"].split()))
    for key in ("motion_eps", "gamma", "step_cost", "grey_bonus",
                "accept_bonus", "obstacle_penalty"):
        if key in raw:
            kwargs[key] = float(raw[key])
    return MissionLayout(**kwargs)


def save_layout(layout, path):
    def cells(cs):
        return " ".join(f"{r},{c}" for r, c in sorted(cs))

    lines = [
        f"grid = {layout.height} {layout.width}",
        f"initial = {cells([layout.initial])}",
        f"pickup1 = {cells([layout.pickup1])}",
        f"pickup2 = {cells([layout.pickup2])}",
        f"delivery1 = {cells([layout.delivery1])}",
        f"delivery2 = {cells([layout.delivery2])}",
        f"obstacles = {cells(layout.obstacles)}",
        "observed = " + ("all" if layout.observed is None else cells(layout.observed)),
        f"rewards = {cells(layout.rewards)}",
        "bounds = " + " ".join(map(str, layout.bounds)),
        f"motion_eps = {layout.motion_eps}",
        f"gamma = {layout.gamma}",
        f"step_cost = {layout.step_cost}",
        f"grey_bonus = {layout.grey_bonus}",
        f"accept_bonus = {layout.accept_bonus}",
        f"obstacle_penalty = {layout.obstacle_penalty}",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
