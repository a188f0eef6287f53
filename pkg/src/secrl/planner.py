"""Product MDP, timed MDP, reachability distances, and action pruning.

The product is kept lazy: a product state is the pair code s * X + x, and the
DFA component advances on the label of the *source* MDP state, so after k
transitions exactly k labels have been consumed.  The timed MDP stores only
the forward-reachable pairs of each time layer as sorted code arrays;
(code, layer) -> dense index lookups go through binary search, which keeps
the same arrays usable from vectorized numpy sweeps and compiled kernels.

Distances and pruning follow the ε-probabilistic reading: an edge counts
toward the distance when its probability is at least 1 - eps, the per-action
worst successor distance feeds the binomial satisfaction bound, and actions
whose bound falls under the threshold are removed.  Removals are re-swept to
a fixed point since they can orphan downstream states.
"""

from __future__ import annotations

from math import comb

import numpy as np

from .automata import symbol_key
from .errors import AlphabetMismatch, Infeasible, NoFeasibleAction

INF = np.int32(np.iinfo(np.int32).max // 4)

_EDGE_TOL = 1e-9


class ProductMdp:
    """Synchronous product of an MDP with a specification DFA (lazy view)."""

    def __init__(self, mdp, dfa):
        self.mdp = mdp
        self.dfa = dfa
        self._x_ids = {x: i for i, x in enumerate(sorted(dfa.states, key=str))}
        self.n_dfa = len(self._x_ids)
        symbols = sorted(dfa.alphabet, key=symbol_key)
        sym_id = {sym: i for i, sym in enumerate(symbols)}

        state_sym = np.empty(mdp.n_states, dtype=np.int32)
        for s in range(mdp.n_states):
            label = mdp.labels[s]
            symbol = label if isinstance(label, tuple) else (label,)
            if symbol not in sym_id:
                raise AlphabetMismatch(
                    f"state {s} label is not a DFA symbol: {symbol!r}"
                )
            state_sym[s] = sym_id[symbol]
        self.state_sym = state_sym

        self.dfa_next = np.empty((self.n_dfa, len(symbols)), dtype=np.int32)
        for (x, symbol), y in dfa.transitions.items():
            self.dfa_next[self._x_ids[x], sym_id[symbol]] = self._x_ids[y]

        self.accepting_x = np.zeros(self.n_dfa, dtype=bool)
        for x in dfa.accepting:
            self.accepting_x[self._x_ids[x]] = True
        # Sure acceptance: accepting and absorbing, i.e. the verdict can no
        # longer change.  (Plain acceptance only says "true if the word ended
        # here".)
        loops = (self.dfa_next == np.arange(self.n_dfa, dtype=np.int32)[:, None])
        self.sure_x = self.accepting_x & loops.all(axis=1)
        self.initial_x = self._x_ids[dfa.initial]
        self.initial = self.code(mdp.initial, self.initial_x)

    @property
    def n_states(self):
        return self.mdp.n_states * self.n_dfa

    def code(self, s, x):
        return s * self.n_dfa + x

    def split(self, code):
        return code // self.n_dfa, code % self.n_dfa

    def step_dfa(self, x, s):
        """DFA successor after consuming the label of source state s."""
        return int(self.dfa_next[x, self.state_sym[s]])

    def accepting(self, code):
        return bool(self.accepting_x[code % self.n_dfa])

    def transition(self, code, a):
        """Successor distribution as a dict code -> probability (test path)."""
        s, x = self.split(code)
        y = self.step_dfa(x, s)
        return {
            self.code(s2, y): p for s2, p in self.mdp.transition(s, a).items()
        }


def build_product(mdp, dfa):
    return ProductMdp(mdp, dfa)


def _succ_union(mdp):
    """CSR of each state's successor support, pooled over all actions."""
    flat, offs = [], [0]
    for s in range(mdp.n_states):
        u = np.unique(mdp.next_states[s][mdp.probs[s] > 0.0])
        flat.append(u)
        offs.append(offs[-1] + len(u))
    return np.concatenate(flat).astype(np.int64), np.array(offs, dtype=np.int64)


class TimedMdp:
    """Product MDP layered by time, restricted to forward-reachable pairs.

    ``codes`` holds per-layer sorted pair codes back to back;
    ``layer_starts[n]`` indexes the start of layer n.  A timed state id is
    its position in ``codes``.  Transitions advance the layer by one; the
    final layer is frozen (self-successors).
    """

    def __init__(self, product, horizon):
        if horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {horizon}")
        self.product = product
        self.horizon = horizon
        self._build_layers()
        self.feasible = np.ones((self.n_timed, product.mdp.n_actions), dtype=bool)
        self.dist = None  # filled by prune / distance_map callers

    def _build_layers(self):
        P = self.product
        mdp = P.mdp
        nx = P.n_dfa
        succ_flat, succ_offs = _succ_union(mdp)
        layers = [np.array([P.initial], dtype=np.int64)]
        for _ in range(self.horizon - 1):
            codes = layers[-1]
            s = codes // nx
            x = codes % nx
            y = P.dfa_next[x, P.state_sym[s]].astype(np.int64)
            cnt = succ_offs[s + 1] - succ_offs[s]
            total = int(cnt.sum())
            # grouped-arange gather of each state's successor slice
            starts = np.repeat(succ_offs[s], cnt)
            within = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
            succ = succ_flat[starts + within]
            layers.append(np.unique(succ * nx + np.repeat(y, cnt)))
        self.layer_starts = np.zeros(self.horizon + 1, dtype=np.int64)
        for n, codes in enumerate(layers):
            self.layer_starts[n + 1] = self.layer_starts[n] + len(codes)
        self.codes = np.concatenate(layers)
        self.n_timed = int(self.layer_starts[-1])
        self.pair_s = (self.codes // nx).astype(np.int64)
        self.pair_x = (self.codes % nx).astype(np.int32)
        # Sure-accepting timed states: absorbing-accepting DFA component
        # anywhere, or plain acceptance on the frozen final layer (there the
        # whole word has been consumed, so acceptance is the verdict).
        self.sure = P.sure_x[self.pair_x].copy()
        final = slice(self.layer_starts[-2], self.layer_starts[-1])
        self.sure[final] |= P.accepting_x[self.pair_x[final]]

    def layer_slice(self, n):
        return slice(int(self.layer_starts[n]), int(self.layer_starts[n + 1]))

    def layer_of(self, tid):
        return int(np.searchsorted(self.layer_starts, tid, side="right") - 1)

    def locate(self, code, n):
        """Timed id of pair ``code`` at layer ``n`` (must be reachable)."""
        lo, hi = int(self.layer_starts[n]), int(self.layer_starts[n + 1])
        i = lo + int(np.searchsorted(self.codes[lo:hi], code))
        if i >= hi or self.codes[i] != code:
            raise KeyError(f"pair {code} not reachable at layer {n}")
        return i

    def clone(self):
        other = object.__new__(TimedMdp)
        other.__dict__.update(self.__dict__)
        other.feasible = self.feasible.copy()
        other.dist = None if self.dist is None else self.dist.copy()
        return other

    def explain(self):
        """Text dump of layer sizes and feasible-action counts."""
        lines = [
            f"timed states: {self.n_timed} "
            f"(product {self.product.n_states} x horizon {self.horizon})"
        ]
        for n in range(self.horizon):
            sl = self.layer_slice(n)
            feas = int(self.feasible[sl].sum())
            dead = int(
                ((~self.feasible[sl]).all(axis=1) & ~self.sure[sl]).sum()
            )
            lines.append(
                f"layer {n:3d}: states {sl.stop - sl.start:7d} "
                f"feasible-actions {feas:8d} dead {dead:6d}"
            )
        return "\n".join(lines) + "\n"


def build_timed(product, horizon):
    return TimedMdp(product, horizon)


def _layer_successor_dist(t, n, dist, eps):
    """Per (row, action): min eps-edge successor distance and max successor
    distance over the full support, for layer n against dist of layer n+1."""
    P = t.product
    mdp = P.mdp
    nx = P.n_dfa
    sl = t.layer_slice(n)
    s = t.pair_s[sl]
    x = t.pair_x[sl]
    y = P.dfa_next[x, P.state_sym[s]].astype(np.int64)
    sp = mdp.next_states[s].astype(np.int64)  # (R, A, K)
    pp = mdp.probs[s]
    succ_code = sp * nx + y[:, None, None]
    nsl = t.layer_slice(n + 1)
    next_codes = t.codes[nsl]
    rows = np.searchsorted(next_codes, succ_code)
    rows = np.clip(rows, 0, len(next_codes) - 1)
    hit = (pp > 0.0) & (next_codes[rows] == succ_code)
    dnx = np.where(hit, dist[nsl][rows], INF)
    eps_edge = hit & (pp >= 1.0 - eps - _EDGE_TOL)
    d_min = np.where(eps_edge, dnx, INF).min(axis=2)
    d_max = np.where(hit, dnx, 0).max(axis=2)
    d_max = np.where(hit.any(axis=2), d_max, INF)
    return d_min, d_max


def _backward_distance(t, eps, feasible):
    dist = np.full(t.n_timed, INF, dtype=np.int64)
    final = t.layer_slice(t.horizon - 1)
    dist[final] = np.where(t.sure[final], 0, INF)
    for n in range(t.horizon - 2, -1, -1):
        sl = t.layer_slice(n)
        d_min, _ = _layer_successor_dist(t, n, dist, eps)
        d_min = np.where(feasible[sl], d_min, INF)
        best = d_min.min(axis=1)
        step = np.where(best >= INF, INF, 1 + best)
        dist[sl] = np.where(t.sure[sl], 0, step)
    return dist


def distance_map(t, eps):
    """Def-8 style distances over ε-probabilistic edges (current A_Fes)."""
    t._policy_eps = eps
    return _backward_distance(t, eps, t.feasible)


def satisfaction_bound(i, d, eps):
    """Lower bound on reaching acceptance within i steps from distance d.

    Binomial tail: at most u_max = floor((i - d) / 2) unintended transitions
    are affordable, each detour costing two steps.
    """
    if d >= INF or d > i:
        return 0.0
    if eps == 0.0:
        return 1.0
    u_max = (i - d) // 2
    return float(
        sum(comb(i, j) * eps**j * (1.0 - eps) ** (i - j) for j in range(u_max + 1))
    )


def _bound_cdf(i, eps):
    """Cumulative binomial weights for 0..i unintended transitions."""
    j = np.arange(i + 1)
    if eps == 0.0:
        pmf = np.zeros(i + 1)
        pmf[0] = 1.0
    else:
        pmf = np.array(
            [comb(i, int(k)) * eps ** int(k) * (1.0 - eps) ** (i - int(k)) for k in j]
        )
    return np.cumsum(pmf)


def prune(t, dmap, p_th, eps):
    """Two-phase action pruning.

    Phase 1 is the binomial-bound sweep: against ``dmap`` (the unpruned
    distance map), an action is removed when its worst positive-probability
    successor distance leaves no slip budget (u_max < 0) or pushes the
    satisfaction bound under p_th.  Phase 2 cleans up orphans: an action is
    removed when even its intended (ε-probabilistic) successor can no longer
    finish under the surviving feasible sets.  Since transitions only cross
    from layer n to n+1, one backward pass reaches the cleanup fixed point.
    Phase 2 deliberately does not re-apply the bound threshold —
    re-thresholding against recomputed distances treats "bound below p_th"
    as "impossible" and provably cascades to an empty model.

    Returns a pruned copy with ``dist`` filled; raises Infeasible when the
    initial state loses every action.
    """
    if not 0.0 < p_th <= 1.0:
        raise ValueError(f"p_th must be in (0, 1], got {p_th}")
    out = t.clone()
    feasible = out.feasible
    initial_bound = None

    dist = dmap
    for n in range(out.horizon - 1):
        sl = out.layer_slice(n)
        _, d_max = _layer_successor_dist(out, n, dist, eps)
        i = out.horizon - 1 - n
        cdf = _bound_cdf(i, eps)
        u = (i - np.minimum(d_max, i + 1)) // 2
        ok = (d_max <= i) & (cdf[np.clip(u, 0, i)] >= p_th)
        ok |= out.sure[sl][:, None]  # done states keep their actions
        if n == 0:
            row0 = int(np.searchsorted(out.codes[sl], out.product.initial))
            initial_bound = max(
                satisfaction_bound(i, int(d), eps) for d in d_max[row0]
            )
        feasible[sl] &= ok

    dist = np.full(out.n_timed, INF, dtype=np.int64)
    final = out.layer_slice(out.horizon - 1)
    dist[final] = np.where(out.sure[final], 0, INF)
    for n in range(out.horizon - 2, -1, -1):
        sl = out.layer_slice(n)
        d_min, _ = _layer_successor_dist(out, n, dist, eps)
        i = out.horizon - 1 - n
        feasible[sl] &= (d_min + 1 <= i) | out.sure[sl][:, None]
        d_min = np.where(feasible[sl], d_min, INF)
        best = d_min.min(axis=1)
        dist[sl] = np.where(
            out.sure[sl], 0, np.where(best >= INF, INF, 1 + best)
        )

    out.dist = dist
    out._policy_eps = eps
    tid0 = int(out.layer_starts[0])
    if not out.sure[tid0] and not feasible[tid0].any():
        raise Infeasible(
            f"all actions pruned at the initial state "
            f"(best satisfaction bound {initial_bound:.6f} < {p_th})",
            state=(out.product.mdp.initial, out.product.initial_x),
            best_bound=initial_bound,
        )
    return out


def satisfaction_value(t):
    """Exact maximum satisfaction probability per timed state, and the policy
    achieving it, restricted to the current feasible-action sets.

    The timed MDP is acyclic in the layer index, so a single backward sweep
    over the full transition probabilities is exact.  This is the strict
    dynamic-programming counterpart of the binomial bound: the bound assumes
    every unintended transition is recoverable at a cost of two steps, which
    fails where a slip desynchronizes composed coordinates or hits a trap
    label; the DP value has no such assumption.  Dead states (no feasible
    action) get value 0 and policy -1.
    """
    P = t.product
    mdp = P.mdp
    nx = P.n_dfa
    value = np.zeros(t.n_timed)
    policy = np.full(t.n_timed, -1, dtype=np.int8)
    final = t.layer_slice(t.horizon - 1)
    value[final] = t.sure[final].astype(float)
    for n in range(t.horizon - 2, -1, -1):
        sl = t.layer_slice(n)
        s = t.pair_s[sl]
        x = t.pair_x[sl]
        y = P.dfa_next[x, P.state_sym[s]].astype(np.int64)
        sp = mdp.next_states[s].astype(np.int64)
        pp = mdp.probs[s]
        succ_code = sp * nx + y[:, None, None]
        nsl = t.layer_slice(n + 1)
        next_codes = t.codes[nsl]
        rows = np.clip(np.searchsorted(next_codes, succ_code), 0, len(next_codes) - 1)
        hit = (pp > 0.0) & (next_codes[rows] == succ_code)
        q = (np.where(hit, pp, 0.0) * value[nsl][rows]).sum(axis=2)
        q = np.where(t.feasible[sl], q, -1.0)
        best = q.max(axis=1)
        act = q.argmax(axis=1).astype(np.int8)
        value[sl] = np.where(t.sure[sl], 1.0, np.maximum(best, 0.0))
        policy[sl] = np.where(t.sure[sl] | (best < 0.0), -1, act)
    return value, policy


def reach_policy(t, dmap, eps=None):
    """Greedy distance-descent policy: per state the feasible action whose
    best ε-probabilistic successor distance is minimal (ties follow the
    fixed action order).  Dead states get -1."""
    if eps is None:
        eps = getattr(t, "_policy_eps", 0.0)
    policy = np.full(t.n_timed, -1, dtype=np.int8)
    for n in range(t.horizon - 1):
        sl = t.layer_slice(n)
        d_min, _ = _layer_successor_dist(t, n, dmap, eps)
        d_min = np.where(t.feasible[sl], d_min, INF + 1)
        best = d_min.min(axis=1)
        act = d_min.argmin(axis=1).astype(np.int8)
        policy[sl] = np.where(best >= INF, -1, act)
    tid0 = int(t.layer_starts[0])
    if policy[tid0] < 0 and not t.sure[tid0]:
        raise NoFeasibleAction(
            "every action from the initial state leads to infinite distance"
        )
    return policy
