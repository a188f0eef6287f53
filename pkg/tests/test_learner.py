"""Tabular learners: selection, updates, determinism, convergence."""

import numpy as np
import pytest

from secrl.errors import EmptyFeasibleSet
from secrl.learner import (
    LearnerConfig,
    QTable,
    RunRecord,
    TRAINERS,
    q_update,
    select_action,
    simulate_policy,
    train_dyna_q,
    train_q_learning,
    train_softmax_eps,
)
from secrl.planner import distance_map, prune

from conftest import line_layout
from test_planner import build_tiny


def pruned_corridor(motion_eps=0.1, window="[0,6]"):
    _, timed = build_tiny(f"forall pi1 . [H^0 d1@pi1]^{window}",
                          line_layout(motion_eps=motion_eps))
    dmap = distance_map(timed, motion_eps)
    return prune(timed, dmap, 0.5, motion_eps)


@pytest.fixture(scope="module")
def corridor_mission():
    return pruned_corridor()


# ---------------------------------------------------------------- QTable


def test_qtable_masks_infeasible(corridor_mission):
    t = corridor_mission
    q = QTable(t.feasible, init=2.5)
    assert (q.values[~t.feasible] == 0.0).all()
    assert (q.values[t.feasible] == 2.5).all()
    state = int(np.argmax(t.feasible.any(axis=1)))
    action = int(np.argmax(t.feasible[state]))
    assert q[state, action] == 2.5
    dead = np.nonzero(~t.feasible.any(axis=1))[0]
    if len(dead):
        with pytest.raises(KeyError):
            q[int(dead[0]), 0]


def test_greedy_policy_ties_and_dead_states():
    feasible = np.array([[True, True, False], [False, False, False]])
    q = QTable(feasible)
    q.values[0] = [1.0, 1.0, 9.0]  # 9.0 is infeasible and must be ignored
    policy = q.greedy_policy()
    assert policy[0] == 0  # tie resolves to the lowest action index
    assert policy[1] == -1


# ---------------------------------------------------------------- selection


def test_select_action_greedy_when_no_exploration():
    feasible = np.array([[True, True, True]])
    q = QTable(feasible)
    q.values[0] = [0.1, 0.7, 0.3]
    cfg = LearnerConfig(explore_eps=0.0)
    rng = np.random.default_rng(0)
    assert select_action(q, 0, [0, 1, 2], cfg, rng) == 1


def test_select_action_boltzmann_frequencies():
    feasible = np.array([[True, True, False]])
    q = QTable(feasible)
    q.values[0] = [1.0, 0.0, 0.0]
    cfg = LearnerConfig(explore_eps=1.0, temperature=1.0)
    rng = np.random.default_rng(1)
    n = 20000
    picks = np.array([select_action(q, 0, [0, 1], cfg, rng) for _ in range(n)])
    want = np.e / (np.e + 1.0)
    got = (picks == 0).mean()
    assert abs(got - want) < 3 * np.sqrt(want * (1 - want) / n)


def test_select_action_uniform_exploration():
    feasible = np.array([[True, True, False]])
    q = QTable(feasible)
    q.values[0] = [5.0, 0.0, 0.0]
    cfg = LearnerConfig(explore_eps=1.0)
    rng = np.random.default_rng(2)
    n = 20000
    picks = np.array(
        [select_action(q, 0, [0, 1], cfg, rng, boltzmann=False) for _ in range(n)]
    )
    assert abs((picks == 0).mean() - 0.5) < 3 * np.sqrt(0.25 / n)


def test_select_action_empty_feasible_set():
    q = QTable(np.array([[False]]))
    with pytest.raises(EmptyFeasibleSet):
        select_action(q, 0, [], LearnerConfig(), np.random.default_rng(0))


# ---------------------------------------------------------------- updates


def test_q_update_td0():
    feasible = np.array([[True, True], [True, False]])
    q = QTable(feasible)
    q.values[1, 0] = 4.0
    cfg = LearnerConfig(learning_rate=0.5, gamma=0.9)
    new = q_update(q, (0, 1, 2.0, 1), cfg)
    # 0 + 0.5 * (2 + 0.9 * 4 - 0) = 2.8
    assert new == pytest.approx(2.8)
    assert q.values[0, 1] == pytest.approx(2.8)


def test_q_update_terminal_fixed_point():
    q = QTable(np.array([[True]]))
    cfg = LearnerConfig(learning_rate=0.3)
    for _ in range(200):
        q_update(q, (0, 0, 7.0, 0), cfg, terminal=True)
    assert q.values[0, 0] == pytest.approx(7.0, abs=1e-4)


# ---------------------------------------------------------------- training


def _cfg(**kw):
    base = dict(episodes=2000, seed=7, motion_eps=0.1)
    base.update(kw)
    return LearnerConfig(**base)


def test_training_is_deterministic(corridor_mission):
    runs = [train_softmax_eps(corridor_mission, _cfg()) for _ in range(2)]
    (p1, q1, r1), (p2, q2, r2) = runs
    assert np.array_equal(q1.values, q2.values)
    assert np.array_equal(p1, p2)
    assert np.array_equal(r1[0].rewards, r2[0].rewards)
    assert np.array_equal(r1[0].satisfied, r2[0].satisfied)
    assert (r1[0].cum_wall_ms == 0).all()  # timing off by default


def test_seeds_change_the_stream(corridor_mission):
    _, _, ra = train_q_learning(corridor_mission, _cfg(seed=1))
    _, _, rb = train_q_learning(corridor_mission, _cfg(seed=2))
    assert not np.array_equal(ra[0].rewards, rb[0].rewards)


def test_dyna_with_zero_planning_equals_q_learning(corridor_mission):
    _, qa, ra = train_q_learning(corridor_mission, _cfg())
    _, qb, rb = train_dyna_q(corridor_mission, _cfg(planning_steps=0))
    assert np.array_equal(qa.values, qb.values)
    assert np.array_equal(ra[0].rewards, rb[0].rewards)


def test_trained_q_confined_to_feasible_pairs(corridor_mission):
    for trainer in TRAINERS.values():
        _, q, _ = trainer(corridor_mission, _cfg(episodes=500))
        assert (q.values[~corridor_mission.feasible] == 0.0).all()


def test_q_learning_converges_to_dp_optimum():
    # optimistic initialization forces systematic exploration, under which
    # tabular Q-learning recovers the exact DP optimum of the corridor
    t = pruned_corridor(motion_eps=0.0)
    cfg = _cfg(motion_eps=0.0, episodes=8000, q_init=150.0)
    policy, q, _ = train_q_learning(t, cfg)
    v_opt = _dp_value(t, cfg.gamma)
    assert q.values[0].max() == pytest.approx(v_opt[0], rel=1e-4)
    _, satisfied = simulate_policy(t, policy, 200, seed=0)
    assert satisfied.all()


def test_q_values_match_evaluation_of_learned_policy():
    # with plain zero init, TD(0) must still be consistent: the trained
    # Q along the greedy path equals the exact evaluation of that policy
    t = pruned_corridor(motion_eps=0.0)
    cfg = _cfg(motion_eps=0.0, episodes=4000)
    policy, q, _ = train_q_learning(t, cfg)
    v_pol = _dp_policy_value(t, policy, cfg.gamma)
    assert q.values[0, policy[0]] == pytest.approx(v_pol[0], rel=1e-3)


def _dp_backup(t, gamma, pick):
    """Backward sweep with the episode reward semantics of the kernel;
    ``pick(tid, q_row, feasible_row)`` chooses the backed-up action value."""
    mdp = t.product.mdp
    P = t.product
    value = np.zeros(t.n_timed)
    for n in range(t.horizon - 2, -1, -1):
        sl = t.layer_slice(n)
        for tid in range(sl.start, sl.stop):
            if t.sure[tid] or not t.feasible[tid].any():
                continue
            s, x = int(t.pair_s[tid]), int(t.pair_x[tid])
            y = P.step_dfa(x, s)
            q_row = np.full(mdp.n_actions, -np.inf)
            for a in range(mdp.n_actions):
                if not t.feasible[tid, a]:
                    continue
                total = 0.0
                for s2, p in mdp.transition(s, a).items():
                    tid2 = t.locate(P.code(s2, y), n + 1)
                    r = mdp.step_cost + mdp.enter_bonus[s2]
                    if t.sure[tid2]:
                        r += mdp.accept_bonus
                        cont = 0.0
                    elif n + 1 == t.horizon - 1 or not t.feasible[tid2].any():
                        cont = 0.0
                    else:
                        cont = value[tid2]
                    total += p * (r + gamma * cont)
                q_row[a] = total
            value[tid] = pick(tid, q_row, t.feasible[tid])
    return value


def _dp_value(t, gamma):
    return _dp_backup(t, gamma, lambda tid, q_row, feas: q_row[feas].max())


def _dp_policy_value(t, policy, gamma):
    return _dp_backup(t, gamma, lambda tid, q_row, feas: q_row[policy[tid]])


def test_softmax_converges_on_noisy_corridor(corridor_mission):
    from secrl.planner import satisfaction_value

    policy, _, records = train_softmax_eps(corridor_mission, _cfg(episodes=4000))
    optimum = satisfaction_value(corridor_mission)[0][0]
    assert records[0].satisfied[-500:].mean() > 0.6
    _, satisfied = simulate_policy(corridor_mission, policy, 5000, seed=1)
    assert satisfied.mean() > 0.8 * optimum


def test_record_timing_opt_in(corridor_mission):
    _, _, records = train_q_learning(
        corridor_mission, _cfg(episodes=1500, record_timing=True, chunk_size=500)
    )
    wall = records[0].cum_wall_ms
    assert wall[-1] > 0
    assert (np.diff(wall) >= 0).all()


def test_config_validation():
    with pytest.raises(ValueError):
        LearnerConfig(learning_rate=0.0).validate()
    with pytest.raises(ValueError):
        LearnerConfig(explore_eps=1.5).validate()
    with pytest.raises(ValueError):
        LearnerConfig(temperature=0.0).validate()
    with pytest.raises(ValueError):
        LearnerConfig(episodes=0).validate()
    with pytest.raises(ValueError):
        LearnerConfig(planning_steps=-1).validate()


# ---------------------------------------------------------------- records


def test_run_record_csv_round_trip(tmp_path, corridor_mission):
    _, _, records = train_q_learning(corridor_mission, _cfg(episodes=50))
    path = tmp_path / "run.csv"
    records[0].to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "episode,reward,satisfied,cum_wall_ms"
    again = RunRecord.from_csv(path)
    assert np.allclose(again.rewards, records[0].rewards, atol=1e-6)
    assert np.array_equal(again.satisfied, records[0].satisfied)


def test_simulate_policy_traces(corridor_mission):
    from secrl.planner import satisfaction_value

    _, policy = satisfaction_value(corridor_mission)
    rewards, satisfied, traces = simulate_policy(
        corridor_mission, policy, 100, seed=5, collect_traces=True
    )
    assert traces.shape == (100, corridor_mission.horizon)
    assert (traces[:, 0] == corridor_mission.product.mdp.initial).all()
    # frozen after termination: the last two columns agree for satisfied
    # episodes that finished early
    assert satisfied.mean() > 0.5
