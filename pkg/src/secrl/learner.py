"""Tabular RL on the pruned timed MDP: Softmax-ε, Q-learning, Dyna-Q.

The episode loop runs in a compiled kernel over the planner's flat arrays;
Python drives it in chunks so wall time can be logged per episode without
touching the inner loop.  Action selection is ε-greedy whose exploration
branch is either Boltzmann sampling (Softmax-ε) or uniform (Q-learning /
Dyna-Q); ties in the greedy branch always resolve to the lowest action index
(North < East < West < South < Stay).

Determinism: one NumPy RNG stream inside the kernel, seeded once per run, so
identical (config, seed) pairs replay bit-identical episode streams.  Wall
times are only recorded when the config asks for them (they are inherently
non-reproducible and would break byte-identical outputs).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np
from numba import njit

from .errors import EmptyFeasibleSet

ALG_SOFTMAX = 0
ALG_QLEARN = 1
ALG_DYNA = 2

_TAGS = {ALG_SOFTMAX: "softmax_eps", ALG_QLEARN: "q_learning", ALG_DYNA: "dyna_q"}


@dataclass
class LearnerConfig:
    p_th: float = 0.85
    motion_eps: float = 0.05
    explore_eps: float = 0.1
    # Boltzmann temperature, calibrated to the default reward scale (episode
    # returns around +-100): exp(Q / temperature) must stay non-degenerate or
    # the exploration branch collapses into argmax.
    temperature: float = 50.0
    learning_rate: float = 0.1
    gamma: float = 0.95
    episodes: int = 50000
    planning_steps: int = 5
    seed: int = 0
    q_init: float = 0.0
    record_timing: bool = False
    chunk_size: int = 1000

    def validate(self):
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError(f"learning_rate must be in (0,1], got {self.learning_rate}")
        if not 0.0 <= self.explore_eps <= 1.0:
            raise ValueError(f"explore_eps must be in [0,1], got {self.explore_eps}")
        if self.temperature <= 0.0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if self.planning_steps < 0:
            raise ValueError("planning_steps must be >= 0")


class QTable:
    """Dense (timed-state, action) value store restricted to feasible pairs."""

    def __init__(self, feasible, init=0.0):
        self.feasible = feasible
        self.values = np.full(feasible.shape, init, dtype=np.float32)
        self.values[~feasible] = 0.0

    def __getitem__(self, key):
        state, action = key
        if not self.feasible[state, action]:
            raise KeyError(f"({state}, {action}) is not a feasible pair")
        return float(self.values[state, action])

    def greedy_policy(self):
        """Argmax action per state (fixed-order ties); -1 where nothing is
        feasible."""
        masked = np.where(self.feasible, self.values, -np.inf)
        policy = masked.argmax(axis=1).astype(np.int8)
        policy[~self.feasible.any(axis=1)] = -1
        return policy


class RunRecord:
    """Per-episode accounting of one training run."""

    def __init__(self, algorithm, seed, config, rewards, satisfied, cum_wall_ms):
        self.algorithm = algorithm
        self.seed = seed
        self.config = config
        self.rewards = rewards
        self.satisfied = satisfied
        self.cum_wall_ms = cum_wall_ms

    def __len__(self):
        return len(self.rewards)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("episode,reward,satisfied,cum_wall_ms\n")
            for i in range(len(self.rewards)):
                fh.write(
                    f"{i + 1},{self.rewards[i]:.6f},"
                    f"{int(self.satisfied[i])},{int(self.cum_wall_ms[i])}\n"
                )

    @classmethod
    def from_csv(cls, path, algorithm="", seed=0, config=None):
        data = np.genfromtxt(path, delimiter=",", skip_header=1)
        data = np.atleast_2d(data)
        return cls(
            algorithm, seed, config or {},
            data[:, 1].copy(), data[:, 2] > 0.5, data[:, 3].copy(),
        )


def select_action(q, state, feasible_actions, cfg, rng, boltzmann=True):
    """Reference (uncompiled) action selection; mirrors the kernel exactly."""
    acts = [a for a in feasible_actions]
    if not acts:
        raise EmptyFeasibleSet(f"state {state} has no feasible actions")
    vals = np.array([q.values[state, a] for a in acts], dtype=np.float64)
    if rng.random() > cfg.explore_eps:
        return acts[int(np.argmax(vals))]
    if not boltzmann:
        return acts[int(rng.integers(len(acts)))]
    w = np.exp((vals - vals.max()) / cfg.temperature)
    w /= w.sum()
    return acts[int(rng.choice(len(acts), p=w))]


def q_update(q, transition, cfg, terminal=False):
    """TD(0) update; returns the new Q(s, a)."""
    state, action, reward, nxt = transition
    if terminal:
        bootstrap = 0.0
    else:
        vals = q.values[nxt][q.feasible[nxt]]
        bootstrap = float(vals.max()) if len(vals) else 0.0
    old = q.values[state, action]
    new = old + cfg.learning_rate * (reward + cfg.gamma * bootstrap - old)
    q.values[state, action] = new
    return float(new)


@njit(cache=True)
def _seed_rng(seed):
    np.random.seed(seed)


@njit(cache=True)
def _pick_action(qrow, feas_row, n_actions, explore_eps, temperature, boltzmann):
    alpha = np.random.random()
    if alpha > explore_eps:
        best = -1
        best_v = -1e30
        for a in range(n_actions):
            if feas_row[a] and qrow[a] > best_v:
                best_v = qrow[a]
                best = a
        return best
    if boltzmann:
        vmax = -1e30
        for a in range(n_actions):
            if feas_row[a] and qrow[a] > vmax:
                vmax = qrow[a]
        total = 0.0
        for a in range(n_actions):
            if feas_row[a]:
                total += np.exp((qrow[a] - vmax) / temperature)
        u = np.random.random() * total
        acc = 0.0
        for a in range(n_actions):
            if feas_row[a]:
                acc += np.exp((qrow[a] - vmax) / temperature)
                if u <= acc:
                    return a
        # numerical spill: last feasible action
        for a in range(n_actions - 1, -1, -1):
            if feas_row[a]:
                return a
    # uniform over feasible
    count = 0
    for a in range(n_actions):
        if feas_row[a]:
            count += 1
    pick = int(np.random.random() * count)
    if pick == count:
        pick = count - 1
    seen = 0
    for a in range(n_actions):
        if feas_row[a]:
            if seen == pick:
                return a
            seen += 1
    return -1


@njit(cache=True)
def _max_q(qrow, feas_row, n_actions):
    best = 0.0
    found = False
    for a in range(n_actions):
        if feas_row[a]:
            if not found or qrow[a] > best:
                best = qrow[a]
                found = True
    return best if found else 0.0


@njit(cache=True)
def _run_chunk(
    n_episodes, algo, q, feasible, sure,
    codes, layer_starts, pair_s, pair_x,
    next_states, pcum, n_out, enter_bonus,
    dfa_next, state_sym, nx,
    step_cost, accept_bonus, gamma, lr, explore_eps, temperature,
    planning_steps, model_next, model_reward, seen_pairs, n_seen_box,
    out_rewards, out_satisfied,
):
    horizon = len(layer_starts) - 1
    n_actions = q.shape[1]
    boltzmann = algo == ALG_SOFTMAX
    for ep in range(n_episodes):
        tid = 0
        n = 0
        total = 0.0
        satisfied = False
        if sure[0]:
            satisfied = True
        else:
            while True:
                has = False
                for a in range(n_actions):
                    if feasible[tid, a]:
                        has = True
                        break
                if not has:
                    break
                a = _pick_action(
                    q[tid], feasible[tid], n_actions,
                    explore_eps, temperature, boltzmann,
                )
                s = pair_s[tid]
                x = pair_x[tid]
                # sample an outcome of (s, a)
                u = np.random.random()
                k = 0
                kmax = n_out[s, a] - 1
                while k < kmax and u > pcum[s, a, k]:
                    k += 1
                s2 = next_states[s, a, k]
                y = dfa_next[x, state_sym[s]]
                code = s2 * nx + y
                lo = layer_starts[n + 1]
                hi = layer_starts[n + 2]
                tid2 = lo + np.searchsorted(codes[lo:hi], code)

                r = step_cost + enter_bonus[s2]
                terminal = False
                if sure[tid2]:
                    terminal = True
                    satisfied = True
                    r += accept_bonus
                elif n + 1 == horizon - 1:
                    terminal = True
                else:
                    feas2 = False
                    for a2 in range(n_actions):
                        if feasible[tid2, a2]:
                            feas2 = True
                            break
                    if not feas2:
                        terminal = True

                bootstrap = 0.0
                if not terminal:
                    bootstrap = _max_q(q[tid2], feasible[tid2], n_actions)
                q[tid, a] += lr * (r + gamma * bootstrap - q[tid, a])
                total += r

                if algo == ALG_DYNA:
                    if model_next[tid, a] < 0:
                        seen_pairs[n_seen_box[0]] = tid * n_actions + a
                        n_seen_box[0] += 1
                    model_next[tid, a] = -2 if terminal else tid2
                    model_reward[tid, a] = r
                    for _ in range(planning_steps):
                        j = int(np.random.random() * n_seen_box[0])
                        if j == n_seen_box[0]:
                            j -= 1
                        pair = seen_pairs[j]
                        pt = pair // n_actions
                        pa = pair % n_actions
                        pn = model_next[pt, pa]
                        pb = 0.0
                        if pn >= 0:
                            pb = _max_q(q[pn], feasible[pn], n_actions)
                        q[pt, pa] += lr * (
                            model_reward[pt, pa] + gamma * pb - q[pt, pa]
                        )

                if terminal:
                    break
                tid = tid2
                n += 1
        out_rewards[ep] = total
        out_satisfied[ep] = satisfied


def _cumulative_probs(mdp):
    pcum = np.cumsum(mdp.probs, axis=2)
    return pcum


def _train(t, cfg, algo):
    cfg.validate()
    mdp = t.product.mdp
    q = QTable(t.feasible, cfg.q_init)
    pcum = _cumulative_probs(mdp)
    next64 = mdp.next_states.astype(np.int64)
    n_actions = mdp.n_actions
    if algo == ALG_DYNA:
        model_next = np.full(t.feasible.shape, -1, dtype=np.int32)
        model_reward = np.zeros(t.feasible.shape, dtype=np.float32)
        seen_pairs = np.zeros(cfg.episodes * (t.horizon + 1), dtype=np.int64)
    else:
        model_next = np.full((1, n_actions), -1, dtype=np.int32)
        model_reward = np.zeros((1, n_actions), dtype=np.float32)
        seen_pairs = np.zeros(1, dtype=np.int64)
    n_seen_box = np.zeros(1, dtype=np.int64)

    rewards = np.zeros(cfg.episodes, dtype=np.float64)
    satisfied = np.zeros(cfg.episodes, dtype=bool)
    cum_wall = np.zeros(cfg.episodes, dtype=np.float64)

    _seed_rng(cfg.seed)
    start = time.perf_counter()
    done = 0
    while done < cfg.episodes:
        chunk = min(cfg.chunk_size, cfg.episodes - done)
        _run_chunk(
            chunk, algo, q.values, t.feasible, t.sure,
            t.codes, t.layer_starts, t.pair_s, t.pair_x,
            next64, pcum, mdp.n_out, mdp.enter_bonus,
            t.product.dfa_next, t.product.state_sym, t.product.n_dfa,
            mdp.step_cost, mdp.accept_bonus, cfg.gamma, cfg.learning_rate,
            cfg.explore_eps, cfg.temperature,
            cfg.planning_steps if algo == ALG_DYNA else 0,
            model_next, model_reward, seen_pairs, n_seen_box,
            rewards[done : done + chunk], satisfied[done : done + chunk],
        )
        done += chunk
        if cfg.record_timing:
            cum_wall[done - chunk : done] = (time.perf_counter() - start) * 1000.0

    record = RunRecord(
        _TAGS[algo], cfg.seed, asdict(cfg), rewards, satisfied, cum_wall
    )
    return q.greedy_policy(), q, [record]


def train_softmax_eps(t, cfg):
    return _train(t, cfg, ALG_SOFTMAX)


def train_q_learning(t, cfg):
    return _train(t, cfg, ALG_QLEARN)


def train_dyna_q(t, cfg):
    return _train(t, cfg, ALG_DYNA)


TRAINERS = {
    "softmax_eps": train_softmax_eps,
    "q_learning": train_q_learning,
    "dyna_q": train_dyna_q,
}


def simulate_policy(t, policy, n_episodes, seed=0, collect_traces=False):
    """Vectorized rollouts of a fixed policy on the timed MDP.

    Returns (rewards, satisfied) and, when asked, the per-episode sequence of
    MDP states (episodes stay in place after terminating).  Used for
    policy evaluation and monitor cross-checks, not for learning.
    """
    mdp = t.product.mdp
    P = t.product
    rng = np.random.default_rng(seed)
    horizon = t.horizon
    n = n_episodes
    tid = np.zeros(n, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    satisfied = np.zeros(n, dtype=bool)
    rewards = np.zeros(n, dtype=np.float64)
    if t.sure[0]:
        satisfied[:] = True
        alive[:] = False
    traces = None
    if collect_traces:
        traces = np.zeros((n, horizon), dtype=np.int64)
        traces[:, 0] = P.mdp.initial
    pcum = _cumulative_probs(mdp)
    for step in range(horizon - 1):
        if not alive.any():
            if collect_traces:
                traces[:, step + 1 :] = traces[:, step : step + 1]
            continue
        act = policy[tid]
        dead = alive & (act < 0)
        alive[dead] = False
        idx = np.nonzero(alive)[0]
        if len(idx):
            s = t.pair_s[tid[idx]]
            x = t.pair_x[tid[idx]]
            a = act[idx].astype(np.int64)
            u = rng.random(len(idx))
            kk = (u[:, None] > pcum[s, a]).sum(axis=1)
            kk = np.minimum(kk, mdp.n_out[s, a] - 1)
            s2 = mdp.next_states[s, a, kk].astype(np.int64)
            y = P.dfa_next[x, P.state_sym[s]].astype(np.int64)
            code = s2 * P.n_dfa + y
            lo, hi = int(t.layer_starts[step + 1]), int(t.layer_starts[step + 2])
            tid2 = lo + np.searchsorted(t.codes[lo:hi], code)
            rewards[idx] += mdp.step_cost + mdp.enter_bonus[s2]
            now_sure = t.sure[tid2]
            satisfied[idx[now_sure]] = True
            rewards[idx[now_sure]] += mdp.accept_bonus
            stop = now_sure | (step + 1 == horizon - 1)
            alive[idx[stop]] = False
            tid[idx] = tid2
            if collect_traces:
                traces[idx, step + 1] = s2
        if collect_traces:
            still = np.nonzero(~alive)[0]
            frozen = np.setdiff1d(still, idx, assume_unique=False)
            traces[frozen, step + 1] = traces[frozen, step]
    if collect_traces:
        return rewards, satisfied, traces
    return rewards, satisfied
