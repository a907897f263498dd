"""Monte Carlo tree search: vanilla UCT, risk-averse (worst-case chance nodes) and adaptive.

All three modes run the same compiled engine; they differ only in the
per-pair sampling mode table handed to it:

* vanilla: every pair samples the model's distribution;
* risk-averse: every pair resolves to its worst supported successor;
* adaptive: the dual-phase gate picks per pair between regular sampling from
  the current belief and worst-case resolution over the previous belief.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .belief import TransitionBelief, dpas_deltas, dpas_modes
from .mdp import MdpSnapshot, SuccessorTable

VANILLA = "vanilla"
RISK_AVERSE = "risk_averse"
ADAPTIVE = "adaptive"
MODES = (VANILLA, RISK_AVERSE, ADAPTIVE)


@dataclass(frozen=True)
class SearchConfig:
    simulations: int = 30_000
    c_p: float = math.sqrt(2.0)
    rollout_depth_cap: int = 100
    seed: int = 0
    mode: str = VANILLA
    eps_e: float = 0.02
    eps_a: float = 0.0

    def __post_init__(self):
        if self.simulations < 1:
            raise ValueError("simulation budget must be at least 1")
        if self.c_p < 0:
            raise ValueError("exploration constant must be non-negative")
        if self.mode not in MODES:
            raise ValueError(f"unknown search mode {self.mode!r}")


def model_arrays(model) -> tuple[SuccessorTable, np.ndarray]:
    """Successor structure and compact regular-sampling probabilities of a model."""
    if isinstance(model, MdpSnapshot):
        table = SuccessorTable.from_mdp(model)
        return table, table.compact(model.transitions)
    if isinstance(model, TransitionBelief):
        return model.table, model.mean_probs()
    raise TypeError(f"cannot plan with a {type(model).__name__}")


@dataclass
class SamplerTables:
    """Everything the compiled engine needs to draw successors."""

    succ: np.ndarray
    p_reg: np.ndarray
    wc_ok: np.ndarray
    rew: np.ndarray
    terminal: np.ndarray
    mode: np.ndarray
    gamma: float
    delta_e: np.ndarray | None = None
    delta_a: float | None = None

    @property
    def n_actions(self) -> int:
        return self.succ.shape[1]

    @classmethod
    def build(cls, mode: str, current, previous=None, *, eps_e: float = 0.02, eps_a: float = 0.0,
              dpas_seed: int = 0) -> SamplerTables:
        if mode == ADAPTIVE:
            if not (isinstance(current, TransitionBelief) and isinstance(previous, TransitionBelief)):
                raise ValueError("adaptive search needs both the current and the previous belief")
            table, p_reg = model_arrays(current)
            prev_table, _ = model_arrays(previous)
            if not table.same_structure(prev_table):
                raise ValueError("current and previous beliefs must share the successor structure")
            modes, d_e, d_a = dpas_modes(current, previous, eps_e, eps_a, seed=dpas_seed)
            wc_ok = previous.support.copy()
            return cls(table.succ, p_reg, wc_ok, table.rewards, table.terminal, modes, table.gamma, d_e, d_a)
        model = current if mode == VANILLA or previous is None else previous
        table, p_reg = model_arrays(model)
        wc_ok = (p_reg > 0) if isinstance(model, MdpSnapshot) else table.valid.copy()
        fill = K.REGULAR if mode == VANILLA else K.WORST_CASE
        modes = np.full(table.succ.shape[:2], fill, dtype=np.int8)
        return cls(table.succ, p_reg, wc_ok, table.rewards, table.terminal, modes, table.gamma)


class SearchTree:
    """Flat-array search tree bound to one set of sampler tables."""

    def __init__(self, tables: SamplerTables, root_state: int, capacity: int, c_p: float = math.sqrt(2.0),
                 rollout_depth_cap: int = 100):
        if tables.terminal[root_state]:
            raise ValueError(f"cannot search from terminal state {root_state}")
        self.tables = tables
        self.c_p = float(c_p)
        self.rollout_depth_cap = int(rollout_depth_cap)
        A = tables.n_actions
        n = capacity + 1
        self.dn_state = np.zeros(n, dtype=np.int64)
        self.dn_N = np.zeros(n, dtype=np.int64)
        self.dn_W = np.zeros(n)
        self.dn_expanded = np.zeros(n, dtype=np.bool_)
        self.cn_N = np.zeros(n * A, dtype=np.int64)
        self.cn_W = np.zeros(n * A)
        self.cn_child = np.full((n * A, tables.succ.shape[2]), -1, dtype=np.int64)
        self.n_nodes = np.ones(1, dtype=np.int64)
        self.path_dn = np.zeros(n + 1, dtype=np.int64)
        self.path_cn = np.zeros(n + 1, dtype=np.int64)
        self.path_r = np.zeros(n + 1)
        self.stats = np.zeros(2, dtype=np.int64)
        self.dn_state[0] = root_state
        self.capacity = capacity
        self.simulations = 0

    def _tab(self):
        t = self.tables
        return t.succ, t.p_reg, t.wc_ok, t.rew, t.terminal, t.mode

    def _tree(self):
        return (self.dn_state, self.dn_N, self.dn_W, self.dn_expanded, self.cn_N, self.cn_W,
                self.cn_child, self.n_nodes)

    def run(self, m: int, seed: int = -1) -> SearchTree:
        if self.simulations + m > self.capacity:
            raise ValueError("simulation budget exceeds tree capacity")
        K.run_search(m, seed, *self._tab(), self.c_p, self.tables.gamma, self.rollout_depth_cap,
                     *self._tree(), self.path_dn, self.path_cn, self.path_r, self.stats)
        self.simulations += m
        return self

    @property
    def root(self) -> DecisionNode:
        return DecisionNode(self, 0)

    @property
    def node_count(self) -> int:
        return int(self.n_nodes[0])

    def policy(self) -> dict[int, float]:
        A = self.tables.n_actions
        visits = self.cn_N[:A].astype(float)
        total = visits.sum()
        return {a: visits[a] / total for a in range(A)}

    def best_action(self) -> int:
        return int(np.argmax(self.cn_N[: self.tables.n_actions]))

    def root_values(self) -> np.ndarray:
        A = self.tables.n_actions
        n = self.cn_N[:A]
        return np.where(n > 0, self.cn_W[:A] / np.maximum(n, 1), np.nan)

    @property
    def regular_fraction(self) -> float:
        total = self.stats.sum()
        return float(self.stats[0] / total) if total else float("nan")

    def dump(self, path, max_depth: int = 3) -> None:
        """Write the top of the tree as JSON lines, one node per line."""
        modes = self.tables.mode
        with Path(path).open("w") as fh:
            stack = [(self.root, 0)]
            while stack:
                node, depth = stack.pop()
                row = {"kind": "decision", "depth": depth, "state": node.state, "visits": node.visits,
                       "value": node.value}
                fh.write(json.dumps(row) + "\n")
                if depth >= max_depth:
                    continue
                for a, cn in sorted(node.children.items(), reverse=True):
                    if cn.visits == 0:
                        continue
                    mode = "regular" if modes[node.state, a] == K.REGULAR else "worst_case"
                    fh.write(json.dumps({"kind": "chance", "depth": depth, "state": node.state, "action": a,
                                         "visits": cn.visits, "value": cn.value, "mode": mode}) + "\n")
                    for child in sorted(cn.children.values(), key=lambda d: -d.state):
                        stack.append((child, depth + 1))


@dataclass(frozen=True)
class DecisionNode:
    tree: SearchTree = field(repr=False)
    index: int

    @property
    def state(self) -> int:
        return int(self.tree.dn_state[self.index])

    @property
    def visits(self) -> int:
        return int(self.tree.dn_N[self.index])

    @property
    def value(self) -> float:
        n = self.visits
        return float(self.tree.dn_W[self.index] / n) if n else 0.0

    @property
    def expanded(self) -> bool:
        return bool(self.tree.dn_expanded[self.index])

    @property
    def terminal(self) -> bool:
        return bool(self.tree.tables.terminal[self.state])

    @property
    def children(self) -> dict[int, ChanceNode]:
        if not self.expanded or self.terminal:
            return {}
        A = self.tree.tables.n_actions
        return {a: ChanceNode(self.tree, self.index * A + a) for a in range(A)}


@dataclass(frozen=True)
class ChanceNode:
    tree: SearchTree = field(repr=False)
    index: int

    @property
    def action(self) -> int:
        return self.index % self.tree.tables.n_actions

    @property
    def parent(self) -> DecisionNode:
        return DecisionNode(self.tree, self.index // self.tree.tables.n_actions)

    @property
    def visits(self) -> int:
        return int(self.tree.cn_N[self.index])

    @property
    def value(self) -> float:
        n = self.visits
        return float(self.tree.cn_W[self.index] / n) if n else 0.0

    @property
    def children(self) -> dict[int, DecisionNode]:
        s = self.parent.state
        out = {}
        for k, child in enumerate(self.tree.cn_child[self.index]):
            if child >= 0:
                out[int(self.tree.tables.succ[s, self.action, k])] = DecisionNode(self.tree, int(child))
        return out


@dataclass
class PlanResult:
    action: int
    policy: dict[int, float]
    tree: SearchTree
    regular_calls: int
    worst_case_calls: int

    @property
    def root_values(self) -> np.ndarray:
        return self.tree.root_values()


def _split_seed(seed: int) -> tuple[int, int]:
    search_seed, dpas_seed = np.random.SeedSequence(seed).generate_state(2)
    return int(search_seed), int(dpas_seed)


def plan(s0: int, current, previous=None, cfg: SearchConfig = SearchConfig()) -> PlanResult:
    """Run ``cfg.simulations`` simulations from ``s0`` and return the most visited action.

    ``current`` is the model sampled in regular mode (an MdpSnapshot or a
    TransitionBelief). Risk-averse search uses ``previous`` when given, else
    ``current``. Adaptive search needs both beliefs.
    """
    search_seed, dpas_seed = _split_seed(cfg.seed)
    tables = SamplerTables.build(cfg.mode, current, previous, eps_e=cfg.eps_e, eps_a=cfg.eps_a,
                                 dpas_seed=dpas_seed)
    tree = SearchTree(tables, s0, cfg.simulations, cfg.c_p, cfg.rollout_depth_cap)
    tree.run(cfg.simulations, search_seed)
    return PlanResult(tree.best_action(), tree.policy(), tree, int(tree.stats[0]), int(tree.stats[1]))


# -- single-step operations, mostly for inspection and tests --------------

def traverse(tree: SearchTree) -> DecisionNode:
    """One descent from the root; creates at most one new decision node."""
    leaf, depth, _ = K.traverse(0, *tree._tab(), tree.c_p, tree.tables.gamma, *tree._tree(),
                                tree.path_dn, tree.path_cn, tree.path_r, tree.stats)
    tree._last_depth = depth
    return DecisionNode(tree, int(leaf))


def backpropagate(tree: SearchTree, leaf: DecisionNode, delta: float) -> None:
    """Credit ``delta`` along the path of the last :func:`traverse` call."""
    K.backpropagate(leaf.index, float(delta), tree._last_depth, tree.tables.gamma, tree.dn_N, tree.dn_W,
                    tree.cn_N, tree.cn_W, tree.path_dn, tree.path_cn, tree.path_r)


def uct_select(node: DecisionNode, c_p: float) -> ChanceNode:
    if not node.expanded:
        raise ValueError("UCT selection needs an expanded decision node")
    t = node.tree
    a = K.uct_select(node.index, t.tables.n_actions, t.cn_N, t.cn_W, t.dn_N, float(c_p))
    return ChanceNode(t, node.index * t.tables.n_actions + int(a))


def rollout(s: int, tables: SamplerTables, depth_cap: int = 100, seed: int = 0) -> float:
    K.seed_rng(seed)
    stats = np.zeros(2, dtype=np.int64)
    return float(K.rollout(s, tables.succ, tables.p_reg, tables.wc_ok, tables.rew, tables.terminal, tables.mode,
                           tables.gamma, depth_cap, stats))


def sample_successor_regular(model, s: int, a: int, rng: np.random.Generator) -> int:
    if isinstance(model, TransitionBelief):
        return model.sample_successor(s, a, rng)
    row = model.transitions[s, a]
    return int(rng.choice(len(row), p=row))


def sample_successor_worst_case(node: ChanceNode, model, s: int | None = None, a: int | None = None) -> int:
    """Worst supported successor of ``node`` under ``model``'s support."""
    t = node.tree
    s = node.parent.state if s is None else s
    a = node.action if a is None else a
    table, probs = model_arrays(model)
    wc_ok = (probs > 0) if isinstance(model, MdpSnapshot) else table.valid
    if not wc_ok[s, a].any():
        raise ValueError(f"empty support at ({s}, {a})")
    # tree slots follow the planner's successor table, which may be wider than the model's
    k_tree = K.worst_in_tree(node.index, s, a, t.tables.succ, _align(wc_ok, table, t.tables), t.tables.rew,
                             t.cn_child, t.dn_N, t.dn_W, t.tables.gamma)
    return int(t.tables.succ[s, a, k_tree])


def _align(mask: np.ndarray, src: SuccessorTable, dst: SamplerTables) -> np.ndarray:
    if np.array_equal(src.succ, dst.succ):
        return mask
    dense = src.expand(mask.astype(float)) > 0
    out = np.take_along_axis(dense, np.maximum(dst.succ, 0), axis=2)
    return out & (dst.succ >= 0)


def dpas(s: int, a: int, current: TransitionBelief, previous: TransitionBelief, thresholds=(0.02, 0.0),
         node: ChanceNode | None = None, rng: np.random.Generator | None = None) -> tuple[int, str]:
    """Dual-phase sampling for one chance event; returns ``(successor, mode)``."""
    rng = rng if rng is not None else np.random.default_rng()
    d_e, d_a = dpas_deltas(current, previous, s, a, seed=int(rng.integers(2**32)))
    eps_e, eps_a = thresholds
    if d_e <= eps_e and d_a <= eps_a:
        return sample_successor_regular(current, s, a, rng), "regular"
    if node is None:
        # no subtree values yet: every supported successor is unvisited, lowest state first
        return int(previous.table.succ[s, a][previous.support[s, a]][0]), "worst_case"
    return sample_successor_worst_case(node, previous, s, a), "worst_case"
