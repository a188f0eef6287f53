"""Command-line front end.

Subcommands: parse, compile, plan, train, suite, sweep.  Exit codes: 0 on
success, 2 when a mission is infeasible under the requested threshold, 3 for
configuration errors (bad formula, bad layout, bad flag values).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import bench
from .automata import automaton_to_text, quantifier_eliminate
from .errors import Infeasible, SecrlError
from .gridworld import build_grid, default_layout, load_layout
from .learner import TRAINERS, LearnerConfig
from .planner import reach_policy, satisfaction_value
from .spec_lang import parse as parse_formula
from .spec_lang import pretty_formula

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_CONFIG = 3


def _add_learner_flags(p):
    p.add_argument("--p-th", type=float, default=0.85)
    p.add_argument("--motion-eps", type=float, default=0.05)
    p.add_argument("--explore-eps", type=float, default=0.1)
    p.add_argument("--temperature", type=float, default=50.0)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=0.95)
    p.add_argument("--episodes", type=int, default=50000)
    p.add_argument("--planning-steps", type=int, default=5)
    p.add_argument("--record-timing", action="store_true")


def _learner_config(args):
    return LearnerConfig(
        p_th=args.p_th,
        motion_eps=args.motion_eps,
        explore_eps=args.explore_eps,
        temperature=args.temperature,
        learning_rate=args.learning_rate,
        gamma=args.gamma,
        episodes=args.episodes,
        planning_steps=args.planning_steps,
        seed=args.seed,
        record_timing=args.record_timing,
    )


def _layout(args):
    if args.layout is None:
        return default_layout()
    return load_layout(args.layout)


def _build_parser():
    top = argparse.ArgumentParser(
        prog="secrl",
        description="Constraint-pruned tabular RL for quantified "
        "time-window missions",
    )
    top.add_argument("--seed", type=int, default=0)
    top.add_argument("--out", default="out")
    top.add_argument("--dry-run", action="store_true")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="echo the parsed formula and deadline")
    p.add_argument("formula")

    p = sub.add_parser("compile", help="compile a formula to a DFA dump")
    p.add_argument("formula")
    p.add_argument("--layout", default=None,
                   help="layout file providing the label alphabet")

    p = sub.add_parser("plan", help="build and prune a mission")
    p.add_argument("--family", choices=bench.FAMILIES, default="opacity")
    p.add_argument("--task", choices=bench.TASKS, default="p1d1")
    p.add_argument("--layout", default=None)
    p.add_argument("--p-th", type=float, default=0.85)
    p.add_argument("--motion-eps", type=float, default=0.05)
    p.add_argument("--explain", action="store_true",
                   help="dump per-layer feasible-action diagnostics")

    p = sub.add_parser("train", help="train one (mission, algorithm) cell")
    p.add_argument("--family", choices=bench.FAMILIES, default="opacity")
    p.add_argument("--task", choices=bench.TASKS, default="p1d1")
    p.add_argument("--algo", choices=bench.ALGORITHMS, default="softmax_eps")
    p.add_argument("--layout", default=None)
    _add_learner_flags(p)

    p = sub.add_parser("suite", help="run the full mission/algorithm grid")
    p.add_argument("--families", default=",".join(bench.FAMILIES))
    p.add_argument("--tasks", default=",".join(bench.TASKS))
    p.add_argument("--algorithms", default=",".join(bench.ALGORITHMS))
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--checkpoint", type=int, default=30000)
    p.add_argument("--window", type=int, default=1000)
    p.add_argument("--layout", default=None)
    _add_learner_flags(p)

    p = sub.add_parser("sweep", help="scalability sweep over grid sizes")
    p.add_argument("--sizes", default="8,12,16")
    p.add_argument("--missions-per-size", type=int, default=2)
    p.add_argument("--layout", default=None, help=argparse.SUPPRESS)
    _add_learner_flags(p)

    return top


def _cmd_parse(args):
    ast = parse_formula(args.formula)
    print(pretty_formula(ast))
    print(f"deadline: {ast.deadline()}")
    print(f"traces: {' '.join(ast.variables)}")
    print(f"quantifiers: {ast.kind}")
    return EXIT_OK


def _cmd_compile(args):
    ast = parse_formula(args.formula)
    layout = _layout(args)
    grid = build_grid(layout)
    dfa = quantifier_eliminate(ast, set(grid.labels))
    text = automaton_to_text(dfa)
    if args.out and args.out != "out":
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"{len(dfa.states)} states -> {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_plan(args):
    model = bench.build_mission(
        bench.replace_motion_eps(_layout(args), args.motion_eps),
        args.family, args.task, args.p_th,
    )
    print(model.summary())
    value, _ = satisfaction_value(model.timed)
    print(f"optimal satisfaction probability within feasible sets: "
          f"{value[0]:.4f}")
    reach_policy(model.timed, model.timed.dist)  # raises if q0 is dead
    if args.explain:
        sys.stdout.write(model.timed.explain())
    return EXIT_OK


def _cmd_train(args):
    import os

    layout = bench.replace_motion_eps(_layout(args), args.motion_eps)
    model = bench.build_mission(layout, args.family, args.task, args.p_th)
    print(model.summary())
    if args.dry_run:
        return EXIT_OK
    cfg = _learner_config(args)
    _, _, records = TRAINERS[args.algo](model.timed, cfg)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(
        args.out, f"{args.family}_{args.task}_{args.algo}_seed{cfg.seed}.csv"
    )
    records[0].to_csv(path)
    rec = records[0]
    n = min(1000, len(rec))
    print(f"episodes: {len(rec)}  mean reward (last {n}): "
          f"{rec.rewards[-n:].mean():.2f}  satisfied (last {n}): "
          f"{rec.satisfied[-n:].mean():.3f}")
    print(f"records -> {path}")
    return EXIT_OK


def _cmd_suite(args):
    cfg = bench.ExperimentConfig(
        layout_path=args.layout,
        families=tuple(args.families.split(",")),
        tasks=tuple(args.tasks.split(",")),
        algorithms=tuple(args.algorithms.split(",")),
        learner=_learner_config(args),
        repetitions=args.repetitions,
        out_dir=args.out,
        checkpoint=args.checkpoint,
        window=args.window,
    )
    paths = bench.run_suite(cfg, dry_run=args.dry_run)
    for path in paths:
        print(path)
    return EXIT_OK


def _cmd_sweep(args):
    import os

    sizes = [int(s) for s in args.sizes.split(",")]
    cfg = bench.ExperimentConfig(learner=_learner_config(args))
    if args.dry_run:
        print(f"would sweep sizes {sizes} with "
              f"{args.missions_per_size} missions each")
        return EXIT_OK
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "sweep.csv")
    bench.scalability_sweep(
        sizes, cfg, missions_per_size=args.missions_per_size,
        out_path=out_path,
    )
    print(f"timings -> {out_path}")
    return EXIT_OK


_COMMANDS = {
    "parse": _cmd_parse,
    "compile": _cmd_compile,
    "plan": _cmd_plan,
    "train": _cmd_train,
    "suite": _cmd_suite,
    "sweep": _cmd_sweep,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags; that slot is taken by Infeasible
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SecrlError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
