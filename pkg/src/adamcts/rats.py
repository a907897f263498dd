"""Depth-limited risk-averse minimax search.

Decision levels maximise over actions, chance levels take the worst supported
successor, and the tree is enumerated exhaustively down to ``depth``. Leaves
are scored by the mean of ``leaf_rollouts`` uniform-random rollouts that
sample the model regularly.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import _kernels as K
from .search import model_arrays
from .mdp import MdpSnapshot


@dataclass(frozen=True)
class RatsConfig:
    depth: int = 3
    leaf_rollouts: int = 10
    rollout_depth_cap: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be at least 1")
        if self.leaf_rollouts < 0:
            raise ValueError("leaf rollout count must be non-negative")


@njit(cache=True)
def _value(s, depth, succ, p_reg, wc_ok, rew, terminal, mode, gamma, k, depth_cap, stats, counter):
    counter[0] += 1
    if terminal[s]:
        return 0.0
    if depth == 0:
        if k == 0:
            return 0.0
        acc = 0.0
        for _ in range(k):
            acc += K.rollout(s, succ, p_reg, wc_ok, rew, terminal, mode, gamma, depth_cap, stats)
        return acc / k
    best = -np.inf
    for a in range(succ.shape[1]):
        worst = np.inf
        for j in range(succ.shape[2]):
            nxt = succ[s, a, j]
            if nxt < 0:
                break
            if not wc_ok[s, a, j]:
                continue
            v = rew[s, a, j] + gamma * _value(nxt, depth - 1, succ, p_reg, wc_ok, rew, terminal, mode, gamma,
                                              k, depth_cap, stats, counter)
            if v < worst:
                worst = v
        if worst > best:
            best = worst
    return best


@njit(cache=True)
def _root_q(s0, depth, seed, succ, p_reg, wc_ok, rew, terminal, mode, gamma, k, depth_cap):
    np.random.seed(seed)
    stats = np.zeros(2, dtype=np.int64)
    counter = np.zeros(1, dtype=np.int64)
    q = np.full(succ.shape[1], np.inf)
    for a in range(succ.shape[1]):
        for j in range(succ.shape[2]):
            nxt = succ[s0, a, j]
            if nxt < 0:
                break
            if not wc_ok[s0, a, j]:
                continue
            v = rew[s0, a, j] + gamma * _value(nxt, depth - 1, succ, p_reg, wc_ok, rew, terminal, mode, gamma,
                                               k, depth_cap, stats, counter)
            if v < q[a]:
                q[a] = v
    return q, counter[0]


@dataclass
class RatsResult:
    action: int
    q_values: np.ndarray
    nodes: int


def rats_search(s0: int, model, cfg: RatsConfig = RatsConfig()) -> RatsResult:
    table, p_reg = model_arrays(model)
    if table.terminal[s0]:
        raise ValueError(f"cannot search from terminal state {s0}")
    wc_ok = (p_reg > 0) if isinstance(model, MdpSnapshot) else table.valid.copy()
    mode = np.full(table.succ.shape[:2], K.REGULAR, dtype=np.int8)
    seed = int(np.random.SeedSequence(cfg.seed).generate_state(1)[0])
    q, nodes = _root_q(s0, cfg.depth, seed, table.succ, p_reg, wc_ok, table.rewards, table.terminal, mode,
                       table.gamma, cfg.leaf_rollouts, cfg.rollout_depth_cap)
    # first action among those within rounding of the max
    best = int(np.flatnonzero(q >= q.max() - K._TIE)[0])
    return RatsResult(best, q, int(nodes))


def rats_plan(s0: int, model, cfg: RatsConfig = RatsConfig()) -> int:
    return rats_search(s0, model, cfg).action


def rats_decision_time(model, cfg: RatsConfig = RatsConfig(), states=None, decisions: int = 30) -> tuple[float, float]:
    """Mean and standard deviation of wall time per decision over ``decisions`` calls.

    Decisions cycle through ``states`` (default: every non-terminal state).
    """
    table, _ = model_arrays(model)
    if states is None:
        states = np.flatnonzero(~table.terminal)
    rats_search(int(states[0]), model, RatsConfig(1, 1, 1, cfg.seed))  # compile outside the timed region
    times = []
    for i in range(decisions):
        s = int(states[i % len(states)])
        t0 = time.perf_counter()
        rats_search(s, model, RatsConfig(cfg.depth, cfg.leaf_rollouts, cfg.rollout_depth_cap, cfg.seed + i))
        times.append(time.perf_counter() - t0)
    return float(np.mean(times)), float(np.std(times, ddof=1))
