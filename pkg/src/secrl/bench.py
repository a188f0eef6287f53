"""Experiment harness: mission library, suite runner, and scalability sweep.

A mission cell is (family, task): family picks the opacity or side-channel
template, task picks which pick-up/delivery pair instantiates it.  The cell
pipeline is parse -> DFA -> self-compose (m = 2) -> product -> timed MDP ->
prune -> train; one composed rollout yields both quantified traces.

Outputs are diff-able text: one CSV per (cell, algorithm, seed), one
efficiency table, one manifest with every resolved parameter.  Wall-clock
numbers enter the CSVs only when timing is explicitly requested, so a
(manifest, seed) pair reproduces byte-identical files.
"""

from __future__ import annotations

import os
import time
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .automata import quantifier_eliminate
from .errors import Infeasible, InsufficientData, LayoutError
from .gridworld import MissionLayout, build_grid, default_layout, load_layout, self_compose
from .learner import TRAINERS, LearnerConfig
from .planner import (
    build_product,
    build_timed,
    distance_map,
    prune,
    satisfaction_bound,
    satisfaction_value,
)
from .spec_lang import parse

FAMILIES = ("opacity", "side_channel")
TASKS = ("p1d1", "p1d2", "p2d1", "p2d2")
ALGORITHMS = ("softmax_eps", "q_learning", "dyna_q")


def mission_formula(family, task, bounds):
    """Instantiate a mission template as a parsed 2-universal formula.

    Both traces visit the same pick-up and the same delivery; the pair
    (p_i, d_j) is the task.  Opacity chains the three visit windows and
    conjoins the observation and obstacle invariants; side-channel guards a
    pick-up-then-sequential-delivery chain with the start window.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown mission family {family!r}")
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    t1, t2, t3, t4, t5 = bounds
    p, d = "p" + task[1], "d" + task[3]
    span = t5 - t1
    w_i = f"[H^1 I@pi1 & H^1 I@pi2]^[0,{t1}]"
    w_p = f"[H^1 {p}@pi1 & H^1 {p}@pi2]^[{t2},{t3}]"
    w_d = f"[H^1 {d}@pi1 & H^1 {d}@pi2]^[{t4},{t5}]"
    w_obs = f"[H^{span} B@pi1 & H^{span} B@pi2]^[{t1},{t5}]"
    w_safe = f"[H^{span} !O@pi1 & H^{span} !O@pi2]^[{t1},{t5}]"
    if family == "opacity":
        body = f"((({w_i} ; {w_p}) ; {w_d}) & {w_obs} & {w_safe})"
    else:
        w_d_seq = f"[H^1 {d}@pi1 ; H^1 {d}@pi2]^[{t4},{t5}]"
        body = f"({w_i} -> (({w_p} ; {w_d_seq}) & {w_safe}))"
    return parse(f"forall pi1 . forall pi2 . {body}")


class MissionModel:
    """Everything the trainers and diagnostics need for one mission cell."""

    def __init__(self, layout, family, task, p_th, m=2):
        self.layout = layout
        self.family = family
        self.task = task
        self.p_th = p_th
        self.m = m
        self.ast = mission_formula(family, task, layout.bounds)
        self.base = build_grid(layout)
        self.mdp = self_compose(self.base, m) if m > 1 else self.base
        self.dfa = quantifier_eliminate(self.ast, set(self.base.labels))
        self.product = build_product(self.mdp, self.dfa)
        self.horizon = self.ast.deadline() + 2
        timed = build_timed(self.product, self.horizon)
        # the per-coordinate slip rate compounds across the composition
        self.eps_eff = 1.0 - (1.0 - self.base.motion_eps) ** m
        self.dmap = distance_map(timed, self.eps_eff)
        try:
            self.timed = prune(timed, self.dmap, p_th, self.eps_eff)
        except Infeasible as exc:
            raise Infeasible(
                f"mission {family}/{task} infeasible: {exc}",
                state=exc.state,
                best_bound=exc.best_bound,
            ) from exc

    @property
    def initial_bound(self):
        return satisfaction_bound(
            self.horizon - 1, int(self.dmap[0]), self.eps_eff
        )

    def summary(self):
        return (
            f"mission {self.family}/{self.task}: deadline {self.ast.deadline()}, "
            f"dfa states {len(self.dfa.states)}, timed states {self.timed.n_timed}, "
            f"dist(q0) {int(self.dmap[0])}, initial bound {self.initial_bound:.4f}"
        )


def build_mission(layout, family, task, p_th=0.85, m=2):
    return MissionModel(layout, family, task, p_th, m)


def _reward_series(records):
    if hasattr(records, "rewards"):
        return np.asarray(records.rewards, dtype=float)
    if isinstance(records, (list, tuple)):
        if len(records) != 1:
            raise InsufficientData(
                f"expected a single run record, got {len(records)}"
            )
        return np.asarray(records[0].rewards, dtype=float)
    return np.asarray(records, dtype=float)


def sample_efficiency(softmax_records, baseline_records, checkpoint=30000,
                      window=1000):
    """Reward ratio of Softmax-ε over a baseline at an episode checkpoint.

    Both series are smoothed with a trailing moving average over ``window``
    episodes ending at the checkpoint; > 1 means Softmax-ε is ahead.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    num = _reward_series(softmax_records)
    den = _reward_series(baseline_records)
    if checkpoint < 1 or len(num) < checkpoint or len(den) < checkpoint:
        raise InsufficientData(
            f"checkpoint {checkpoint} beyond recorded episodes "
            f"({len(num)} / {len(den)})"
        )
    lo = max(0, checkpoint - window)
    a = float(num[lo:checkpoint].mean())
    b = float(den[lo:checkpoint].mean())
    if b == 0.0:
        raise InsufficientData("baseline reward averages to zero at checkpoint")
    return a / b


@dataclass
class ExperimentConfig:
    layout_path: str | None = None
    families: tuple = FAMILIES
    tasks: tuple = TASKS
    algorithms: tuple = ALGORITHMS
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    repetitions: int = 3
    out_dir: str = "out"
    checkpoint: int = 30000
    window: int = 1000

    def resolve_layout(self):
        if self.layout_path is None:
            return default_layout()
        return load_layout(self.layout_path)

    def validate(self):
        for f in self.families:
            if f not in FAMILIES:
                raise ValueError(f"unknown family {f!r}")
        for t in self.tasks:
            if t not in TASKS:
                raise ValueError(f"unknown task {t!r}")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        self.learner.validate()


@dataclass
class EfficiencyReport:
    checkpoint: int
    window: int
    rows: list = field(default_factory=list)  # (family, task, baseline, value)

    def add(self, family, task, baseline, value):
        self.rows.append((family, task, baseline, value))

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("family,task,baseline,checkpoint,window,efficiency\n")
            for family, task, baseline, value in self.rows:
                fh.write(
                    f"{family},{task},{baseline},{self.checkpoint},"
                    f"{self.window},{value:.6f}\n"
                )


_MANIFEST_NOTES = (
    "semantics = completion (a formula is satisfied as soon as some prefix "
    "witnesses it; suffixes cannot revoke it)",
    "bound = binomial tail sum_j C(i,j) eps^j (1-eps)^(i-j), j <= floor((i-d)/2)",
    "pruning = one bound sweep against unpruned distances, then one backward "
    "orphan-cleanup pass (re-thresholding against pruned distances cascades "
    "to an empty model)",
    "composed slip rate = 1 - (1 - eps)^m for the m-fold composition",
    "episode = one composed rollout; both quantified traces are its "
    "coordinates; it ends on sure acceptance, horizon exhaustion, or an "
    "empty feasible set",
    "efficiency smoothing = trailing moving average over `window` episodes",
)


def _write_manifest(path, cfg, layout, cells, csv_names):
    lines = ["[config]"]
    lines.append(f"layout = {cfg.layout_path or 'default'}")
    lines.append(f"grid = {layout.height}x{layout.width}")
    lines.append(f"bounds = {' '.join(map(str, layout.bounds))}")
    lines.append(f"families = {' '.join(cfg.families)}")
    lines.append(f"tasks = {' '.join(cfg.tasks)}")
    lines.append(f"algorithms = {' '.join(cfg.algorithms)}")
    lines.append(f"repetitions = {cfg.repetitions}")
    lines.append(f"checkpoint = {cfg.checkpoint}")
    lines.append(f"window = {cfg.window}")
    lc = cfg.learner
    for key in ("p_th", "motion_eps", "explore_eps", "temperature",
                "learning_rate", "gamma", "episodes", "planning_steps",
                "seed", "q_init", "record_timing"):
        lines.append(f"{key} = {getattr(lc, key)}")
    lines.append("")
    lines.append("[cells]")
    for cell in cells:
        lines.append(cell)
    lines.append("")
    lines.append("[outputs]")
    for name in csv_names:
        lines.append(name)
    lines.append("")
    lines.append("[notes]")
    for note in _MANIFEST_NOTES:
        lines.append(note)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def run_suite(cfg, dry_run=False, log=print):
    """Train every (family, task, algorithm, seed) cell and aggregate.

    Writes one CSV per run, an efficiency table, and a manifest; returns the
    list of written paths.  With dry_run, prints the per-cell plan (sizes,
    horizon, bound) and builds nothing beyond the pruned models.
    """
    cfg.validate()
    layout = cfg.resolve_layout()
    lc = cfg.learner
    if lc.motion_eps != layout.motion_eps:
        layout = replace_motion_eps(layout, lc.motion_eps)
    paths = []
    cell_lines = []
    csv_names = []
    report = EfficiencyReport(cfg.checkpoint, cfg.window)
    if not dry_run:
        os.makedirs(cfg.out_dir, exist_ok=True)
    for family in cfg.families:
        for task in cfg.tasks:
            model = build_mission(layout, family, task, lc.p_th)
            cell_lines.append(model.summary())
            log(model.summary())
            if dry_run:
                continue
            rewards_by_algo = {}
            for algo in cfg.algorithms:
                per_seed = []
                for r in range(cfg.repetitions):
                    run_cfg = replace(lc, seed=lc.seed + r)
                    _, _, records = TRAINERS[algo](model.timed, run_cfg)
                    name = f"{family}_{task}_{algo}_seed{run_cfg.seed}.csv"
                    records[0].to_csv(os.path.join(cfg.out_dir, name))
                    csv_names.append(name)
                    paths.append(os.path.join(cfg.out_dir, name))
                    per_seed.append(records[0])
                rewards_by_algo[algo] = per_seed
            if "softmax_eps" in rewards_by_algo:
                for algo in cfg.algorithms:
                    if algo == "softmax_eps":
                        continue
                    ratios = [
                        sample_efficiency(s, b, cfg.checkpoint, cfg.window)
                        for s, b in zip(
                            rewards_by_algo["softmax_eps"],
                            rewards_by_algo[algo],
                        )
                    ]
                    report.add(family, task, algo, float(np.median(ratios)))
    if dry_run:
        return []
    eff_path = os.path.join(cfg.out_dir, "efficiency.csv")
    report.to_csv(eff_path)
    paths.append(eff_path)
    manifest_path = os.path.join(cfg.out_dir, "manifest.txt")
    _write_manifest(manifest_path, cfg, layout, cell_lines, csv_names)
    paths.append(manifest_path)
    return paths


def replace_motion_eps(layout, eps):
    return MissionLayout(
        layout.width, layout.height, layout.initial, layout.pickup1,
        layout.pickup2, layout.delivery1, layout.delivery2, layout.obstacles,
        layout.observed, layout.rewards, layout.bounds, eps, layout.gamma,
        layout.step_cost, layout.grey_bonus, layout.accept_bonus,
        layout.obstacle_penalty,
    )


def _grid_bfs(width, height, obstacles, start):
    dist = {start: 0}
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        for r2, c2 in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            cell = (r2, c2)
            if (0 <= r2 < height and 0 <= c2 < width
                    and cell not in obstacles and cell not in dist):
                dist[cell] = dist[(r, c)] + 1
                queue.append(cell)
    return dist


_SWEEP_BOUNDS = (3, 4, 10, 11, 18)


def sweep_bounds(size):
    """Per-size time bounds: windows widen with the grid.

    A slip that desynchronizes the composed coordinates is only recoverable
    against a wall, and walls recede as the grid grows, so the window slack
    after each visit must grow with the grid for missions to stay feasible.
    The start and pick-up deadlines stay fixed; the later windows gain
    ``size - 8`` units each.
    """
    extra = max(size - 8, 0)
    t1, t2, t3, t4, t5 = _SWEEP_BOUNDS
    return (t1, t2, t3 + extra, t4 + extra, t5 + extra)


def random_layout(size, rng, bounds=_SWEEP_BOUNDS, obstacle_density=0.10,
                  max_tries=200, route_budget=None):
    """Random size x size mission anchored near a corner, 10% obstacles.

    The mission footprint stays corner-local (``route_budget`` caps the
    pick-up-then-delivery path length) because composed-coordinate slips
    resynchronize only against walls; a mid-grid mission on a large grid is
    unprunable at any threshold.  Placements are rejection-sampled until the
    special cells are mutually reachable within the window budget (BFS
    pre-check); genuinely infeasible draws surface as Infeasible later.
    """
    t1, t2, t3, t4, t5 = bounds
    if route_budget is None:
        route_budget = min(t4, _SWEEP_BOUNDS[3])
    cells = [(r, c) for r in range(size) for c in range(size)]
    n_obs = int(round(obstacle_density * size * size))
    for _ in range(max_tries):
        obs_idx = rng.choice(len(cells), size=n_obs, replace=False)
        obstacles = {cells[i] for i in obs_idx}
        free = [c for c in cells if c not in obstacles]
        corner = (
            (size - 1) * int(rng.integers(2)),
            (size - 1) * int(rng.integers(2)),
        )
        near = [
            c for c in free
            if max(abs(c[0] - corner[0]), abs(c[1] - corner[1])) <= 2
        ]
        if not near:
            continue
        initial = near[int(rng.integers(len(near)))]
        # place specials inside the window-budget BFS balls so the draw can
        # arrive by each window *open*, leaving slip slack for the pruner
        dist_i = _grid_bfs(size, size, obstacles, initial)
        p_pool = [c for c, d in dist_i.items() if 0 < d and d + 1 <= t2]
        if len(p_pool) < 2:
            continue
        pick = rng.choice(len(p_pool), size=2, replace=False)
        p1, p2 = p_pool[pick[0]], p_pool[pick[1]]
        dist_p1 = _grid_bfs(size, size, obstacles, p1)
        dist_p2 = _grid_bfs(size, size, obstacles, p2)
        taken = {initial, p1, p2}
        cap = min(t4, route_budget)
        d_pool = [
            c
            for c in free
            if c not in taken
            and dist_i[p1] + 2 + dist_p1.get(c, 10**9) + 2 <= cap
            and dist_i[p2] + 2 + dist_p2.get(c, 10**9) + 2 <= cap
        ]
        if len(d_pool) < 2:
            continue
        pick = rng.choice(len(d_pool), size=2, replace=False)
        d1, d2 = d_pool[pick[0]], d_pool[pick[1]]
        return MissionLayout(
            size, size, initial, p1, p2, d1, d2, obstacles,
            observed=None, rewards=(), bounds=bounds,
        )
    raise LayoutError(
        f"could not draw a reachable {size}x{size} mission in {max_tries} tries"
    )


def scalability_sweep(sizes, cfg, bounds=None, missions_per_size=2,
                      out_path=None, log=print):
    """Wall-time scaling across grid sizes at a fixed episode count.

    Per size, trains Softmax-ε on seeded random missions (alternating
    opacity / side-channel) and records the full per-mission pipeline time
    (build + prune + train).  Bounds default to the per-size widening of
    ``sweep_bounds``.  Returns rows
    (size, mission, family, deadline, timed_states, wall_s).
    """
    if list(sizes) != sorted(sizes):
        raise ValueError("sizes must be ascending")
    cfg.validate()
    lc = cfg.learner
    rows = []
    for size in sizes:
        size_bounds = sweep_bounds(size) if bounds is None else bounds
        rng = np.random.default_rng(lc.seed + size)
        for k in range(missions_per_size):
            family = FAMILIES[k % len(FAMILIES)]
            attempts = 0
            while True:
                layout = random_layout(size, rng, size_bounds)
                layout = replace_motion_eps(layout, lc.motion_eps)
                start = time.perf_counter()
                try:
                    model = build_mission(layout, family, "p1d1", lc.p_th)
                except Infeasible:
                    attempts += 1
                    if attempts >= 20:
                        raise
                    continue
                break
            TRAINERS["softmax_eps"](model.timed, lc)
            wall = time.perf_counter() - start
            rows.append((
                size, k, family, model.ast.deadline(),
                model.timed.n_timed, wall,
            ))
            log(f"sweep {size}x{size} mission {k} ({family}): "
                f"{model.timed.n_timed} timed states, {wall:.2f}s")
    if out_path is not None:
        with open(out_path, "w") as fh:
            fh.write("size,mission,family,deadline,timed_states,wall_s\n")
            for row in rows:
                fh.write(",".join(map(str, row[:5])) + f",{row[5]:.4f}\n")
    return rows
