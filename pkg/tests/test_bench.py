"""Mission templates, efficiency metric, random layouts, suite plumbing."""

import os

import numpy as np
import pytest

from secrl.bench import (
    ALGORITHMS,
    FAMILIES,
    TASKS,
    EfficiencyReport,
    ExperimentConfig,
    MissionModel,
    build_mission,
    mission_formula,
    random_layout,
    replace_motion_eps,
    run_suite,
    sample_efficiency,
    sweep_bounds,
    _grid_bfs,
    _SWEEP_BOUNDS,
)
from secrl.errors import InsufficientData, LayoutError
from secrl.gridworld import default_layout
from secrl.learner import LearnerConfig
from secrl.spec_lang import formula as F

from conftest import small_layout


# ---------------------------------------------------------------- formulas


def test_mission_formula_deadlines_default_bounds():
    bounds = default_layout().bounds
    assert mission_formula("opacity", "p1d1", bounds).deadline() == 62
    assert mission_formula("side_channel", "p1d1", bounds).deadline() == 56


def test_mission_formula_shape():
    ast = mission_formula("opacity", "p2d2", (5, 6, 20, 21, 35))
    assert ast.kind == "forall"
    assert ast.variables == ("pi1", "pi2")
    props = F.propositions_of(ast.body)
    assert props == {"I", "p2", "d2", "B", "O"}
    sc = mission_formula("side_channel", "p1d2", (5, 6, 20, 21, 35))
    assert isinstance(sc.body, F.Implies)
    assert F.propositions_of(sc.body) == {"I", "p1", "d2", "O"}


def test_mission_formula_task_selects_cells():
    for task in TASKS:
        ast = mission_formula("opacity", task, (5, 6, 20, 21, 35))
        props = F.propositions_of(ast.body)
        assert "p" + task[1] in props and "d" + task[3] in props


def test_mission_formula_rejects_unknown_cell():
    with pytest.raises(ValueError):
        mission_formula("stealth", "p1d1", (5, 6, 20, 21, 35))
    with pytest.raises(ValueError):
        mission_formula("opacity", "p3d1", (5, 6, 20, 21, 35))


# ---------------------------------------------------------------- missions


@pytest.fixture(scope="module")
def small_mission():
    return build_mission(small_layout(), "side_channel", "p1d1", p_th=0.85)


def test_mission_model_pipeline(small_mission):
    m = small_mission
    assert m.m == 2
    assert m.horizon == m.ast.deadline() + 2
    assert m.eps_eff == pytest.approx(1.0 - 0.95**2)
    assert m.timed.dist is not None
    assert 0.0 < m.initial_bound <= 1.0
    text = m.summary()
    assert "side_channel/p1d1" in text and "timed states" in text


# ---------------------------------------------------------------- metric


def _series(values):
    class R:
        rewards = np.asarray(values, dtype=float)

    return R()


def test_sample_efficiency_identity_and_ratio():
    a = _series(np.arange(100.0))
    assert sample_efficiency(a, a, checkpoint=100, window=10) == 1.0
    b = _series(np.arange(100.0) * 2.0)
    assert sample_efficiency(b, a, checkpoint=100, window=10) == pytest.approx(2.0)
    assert sample_efficiency(a, b, checkpoint=100, window=10) == pytest.approx(0.5)


def test_sample_efficiency_uses_trailing_window():
    num = _series([0.0] * 90 + [6.0] * 10)
    den = _series([1.0] * 100)
    assert sample_efficiency(num, den, checkpoint=100, window=10) == pytest.approx(6.0)
    # the early zeros are outside the window and must not matter
    assert sample_efficiency(num, den, checkpoint=90, window=10) == 0.0


def test_sample_efficiency_errors():
    a = _series([1.0] * 50)
    with pytest.raises(InsufficientData):
        sample_efficiency(a, a, checkpoint=100, window=10)
    with pytest.raises(InsufficientData):
        sample_efficiency(a, _series([0.0] * 50), checkpoint=50, window=10)
    with pytest.raises(ValueError):
        sample_efficiency(a, a, checkpoint=50, window=0)


# ---------------------------------------------------------------- layouts


def test_replace_motion_eps_keeps_geometry():
    lay = small_layout()
    other = replace_motion_eps(lay, 0.2)
    assert other.motion_eps == 0.2
    assert other.obstacles == lay.obstacles
    assert other.bounds == lay.bounds


def test_sweep_bounds_widen_with_size():
    assert sweep_bounds(8) == _SWEEP_BOUNDS
    t1, t2, t3, t4, t5 = sweep_bounds(16)
    assert (t1, t2) == _SWEEP_BOUNDS[:2]
    assert t3 == _SWEEP_BOUNDS[2] + 8
    assert t5 == _SWEEP_BOUNDS[4] + 8


@pytest.mark.parametrize("size", [8, 12])
def test_random_layout_respects_budgets(size):
    rng = np.random.default_rng(size)
    bounds = sweep_bounds(size)
    t1, t2, t3, t4, t5 = bounds
    lay = random_layout(size, rng, bounds)
    assert lay.width == lay.height == size
    specials = {lay.initial, lay.pickup1, lay.pickup2, lay.delivery1,
                lay.delivery2}
    assert len(specials) == 5
    assert not specials & lay.obstacles
    assert len(lay.obstacles) == round(0.10 * size * size)
    # the initial cell hugs a corner
    r, c = lay.initial
    assert min(r, size - 1 - r) <= 2 and min(c, size - 1 - c) <= 2
    # BFS budgets: pick-ups arrive before the window opens, deliveries
    # within the corner-local route budget
    dist_i = _grid_bfs(size, size, lay.obstacles, lay.initial)
    cap = min(t4, _SWEEP_BOUNDS[3])
    for p in (lay.pickup1, lay.pickup2):
        assert dist_i[p] + 1 <= t2
        dist_p = _grid_bfs(size, size, lay.obstacles, p)
        for d in (lay.delivery1, lay.delivery2):
            assert dist_i[p] + 2 + dist_p[d] + 2 <= cap


def test_random_layout_exhausts_tries():
    rng = np.random.default_rng(0)
    with pytest.raises(LayoutError):
        random_layout(4, rng, bounds=(1, 2, 3, 4, 5), obstacle_density=0.6,
                      max_tries=5)


# ---------------------------------------------------------------- suite


def _suite_config(tmp_path, layout_path, **kw):
    base = dict(
        layout_path=str(layout_path),
        families=("side_channel",),
        tasks=("p1d1",),
        algorithms=("softmax_eps", "q_learning"),
        learner=LearnerConfig(episodes=1200, seed=3),
        repetitions=2,
        out_dir=str(tmp_path / "out"),
        checkpoint=1200,
        window=200,
    )
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def layout_file(tmp_path_factory):
    from secrl.gridworld import save_layout

    path = tmp_path_factory.mktemp("layouts") / "small.layout"
    save_layout(small_layout(), path)
    return path


def test_experiment_config_validation(tmp_path, layout_file):
    cfg = _suite_config(tmp_path, layout_file, families=("bogus",))
    with pytest.raises(ValueError):
        cfg.validate()
    cfg = _suite_config(tmp_path, layout_file, repetitions=0)
    with pytest.raises(ValueError):
        cfg.validate()


def test_run_suite_writes_expected_files(tmp_path, layout_file):
    cfg = _suite_config(tmp_path, layout_file)
    paths = run_suite(cfg, log=lambda *_: None)
    names = sorted(os.path.basename(p) for p in paths)
    # 1 cell x 2 algorithms x 2 seeds + efficiency + manifest
    assert len(paths) == 6
    assert "efficiency.csv" in names and "manifest.txt" in names
    for algo in ("softmax_eps", "q_learning"):
        for seed in (3, 4):
            assert f"side_channel_p1d1_{algo}_seed{seed}.csv" in names
    eff = [p for p in paths if p.endswith("efficiency.csv")][0]
    lines = open(eff).read().splitlines()
    assert lines[0] == "family,task,baseline,checkpoint,window,efficiency"
    family, task, baseline, cp, window, value = lines[1].split(",")
    assert (family, task, baseline) == ("side_channel", "p1d1", "q_learning")
    assert float(value) > 0.0
    manifest = open([p for p in paths if p.endswith("manifest.txt")][0]).read()
    for section in ("[config]", "[cells]", "[outputs]", "[notes]"):
        assert section in manifest
    assert "p_th = 0.85" in manifest


def test_run_suite_dry_run_builds_nothing(tmp_path, layout_file):
    cfg = _suite_config(tmp_path, layout_file)
    assert run_suite(cfg, dry_run=True, log=lambda *_: None) == []
    assert not os.path.exists(cfg.out_dir)


def test_efficiency_report_format(tmp_path):
    report = EfficiencyReport(checkpoint=100, window=10)
    report.add("opacity", "p1d1", "dyna_q", 1.2345678)
    path = tmp_path / "eff.csv"
    report.to_csv(path)
    assert path.read_text().splitlines()[1] == "opacity,p1d1,dyna_q,100,10,1.234568"
