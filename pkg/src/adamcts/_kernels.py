"""Compiled inner loops for the tree search and rollouts.

The tree lives in flat arrays. Decision node ``d`` owns chance nodes
``d * A + a``; ``cn_child[c, k]`` is the decision node reached through
successor slot ``k`` (or -1). Values are stored as sums and read as means.

Sampling mode per state-action pair: 0 samples the regular distribution
``p_reg``, 1 resolves to the worst supported successor (``wc_ok`` slots).
"""
import math

import numpy as np
from numba import njit

REGULAR = 0
WORST_CASE = 1
_TIE = 1e-12


@njit(cache=True)
def seed_rng(seed):
    np.random.seed(seed)


@njit(cache=True)
def sample_regular(s, a, succ, p_reg):
    u = np.random.random()
    acc = 0.0
    last = 0
    for k in range(succ.shape[2]):
        if succ[s, a, k] < 0:
            break
        p = p_reg[s, a, k]
        if p > 0.0:
            last = k
            acc += p
            if u < acc:
                return k
    return last


@njit(cache=True)
def worst_in_tree(cn, s, a, succ, wc_ok, rew, cn_child, dn_N, dn_W, gamma):
    """Unvisited supported successors first (lowest state), else lowest r + gamma * V."""
    best = -1
    best_v = np.inf
    for k in range(succ.shape[2]):
        if succ[s, a, k] < 0:
            break
        if not wc_ok[s, a, k]:
            continue
        child = cn_child[cn, k]
        if child < 0 or dn_N[child] == 0:
            return k
        v = rew[s, a, k] + gamma * dn_W[child] / dn_N[child]
        if v < best_v - _TIE:
            best_v = v
            best = k
    return best


@njit(cache=True)
def worst_in_rollout(s, a, succ, wc_ok, rew):
    """Supported successor with the lowest transition reward; ties drawn uniformly."""
    low = np.inf
    ties = 0
    for k in range(succ.shape[2]):
        if succ[s, a, k] < 0:
            break
        if not wc_ok[s, a, k]:
            continue
        r = rew[s, a, k]
        if r < low - _TIE:
            low = r
            ties = 1
        elif r <= low + _TIE:
            ties += 1
    pick = np.random.randint(ties)
    for k in range(succ.shape[2]):
        if succ[s, a, k] < 0:
            break
        if wc_ok[s, a, k] and rew[s, a, k] <= low + _TIE:
            if pick == 0:
                return k
            pick -= 1
    return -1


@njit(cache=True)
def uct_select(node, n_actions, cn_N, cn_W, dn_N, c_p):
    base = node * n_actions
    for a in range(n_actions):
        if cn_N[base + a] == 0:
            return a
    log_n = math.log(dn_N[node])
    best = 0
    best_v = -np.inf
    for a in range(n_actions):
        n = cn_N[base + a]
        v = cn_W[base + a] / n + c_p * math.sqrt(log_n / n)
        if v > best_v + _TIE:
            best_v = v
            best = a
    return best


@njit(cache=True)
def rollout(s, succ, p_reg, wc_ok, rew, terminal, mode, gamma, depth_cap, stats):
    total = 0.0
    disc = 1.0
    n_actions = succ.shape[1]
    for _ in range(depth_cap):
        if terminal[s]:
            break
        a = np.random.randint(n_actions)
        if mode[s, a] == REGULAR:
            k = sample_regular(s, a, succ, p_reg)
            stats[0] += 1
        else:
            k = worst_in_rollout(s, a, succ, wc_ok, rew)
            stats[1] += 1
        total += disc * rew[s, a, k]
        disc *= gamma
        s = succ[s, a, k]
    return total


@njit(cache=True)
def traverse(root, succ, p_reg, wc_ok, rew, terminal, mode, c_p, gamma,
             dn_state, dn_N, dn_W, dn_expanded, cn_N, cn_W, cn_child, n_nodes,
             path_dn, path_cn, path_r, stats):
    """Descend from ``root``; returns ``(leaf, depth, created)``.

    Stops at a terminal node or right after creating a new decision node.
    """
    n_actions = succ.shape[1]
    node = root
    depth = 0
    while True:
        s = dn_state[node]
        if terminal[s]:
            return node, depth, False
        dn_expanded[node] = True
        a = uct_select(node, n_actions, cn_N, cn_W, dn_N, c_p)
        cn = node * n_actions + a
        if mode[s, a] == REGULAR:
            k = sample_regular(s, a, succ, p_reg)
            stats[0] += 1
        else:
            k = worst_in_tree(cn, s, a, succ, wc_ok, rew, cn_child, dn_N, dn_W, gamma)
            stats[1] += 1
        path_dn[depth] = node
        path_cn[depth] = cn
        path_r[depth] = rew[s, a, k]
        depth += 1
        child = cn_child[cn, k]
        if child < 0:
            child = n_nodes[0]
            n_nodes[0] += 1
            dn_state[child] = succ[s, a, k]
            cn_child[cn, k] = child
            return child, depth, True
        node = child


@njit(cache=True)
def backpropagate(leaf, delta, depth, gamma, dn_N, dn_W, cn_N, cn_W, path_dn, path_cn, path_r):
    """Credit ``delta`` to the leaf, then r + gamma * G to each chance/decision pair above it."""
    g = delta
    dn_N[leaf] += 1
    dn_W[leaf] += g
    for i in range(depth - 1, -1, -1):
        g = path_r[i] + gamma * g
        cn_N[path_cn[i]] += 1
        cn_W[path_cn[i]] += g
        dn_N[path_dn[i]] += 1
        dn_W[path_dn[i]] += g


@njit(cache=True)
def run_search(m, seed, succ, p_reg, wc_ok, rew, terminal, mode, c_p, gamma, depth_cap,
               dn_state, dn_N, dn_W, dn_expanded, cn_N, cn_W, cn_child, n_nodes,
               path_dn, path_cn, path_r, stats):
    if seed >= 0:
        np.random.seed(seed)
    for _ in range(m):
        leaf, depth, _created = traverse(0, succ, p_reg, wc_ok, rew, terminal, mode, c_p, gamma,
                                         dn_state, dn_N, dn_W, dn_expanded, cn_N, cn_W, cn_child, n_nodes,
                                         path_dn, path_cn, path_r, stats)
        s = dn_state[leaf]
        if terminal[s]:
            delta = 0.0
        else:
            delta = rollout(s, succ, p_reg, wc_ok, rew, terminal, mode, gamma, depth_cap, stats)
        backpropagate(leaf, delta, depth, gamma, dn_N, dn_W, cn_N, cn_W, path_dn, path_cn, path_r)


@njit(cache=True)
def batch_rollouts(states, k, seed, succ, p_reg, wc_ok, rew, terminal, mode, gamma, depth_cap):
    """Mean of ``k`` rollouts from each state in ``states``."""
    np.random.seed(seed)
    out = np.zeros(states.shape[0])
    stats = np.zeros(2, dtype=np.int64)
    for i in range(states.shape[0]):
        acc = 0.0
        for _ in range(k):
            acc += rollout(states[i], succ, p_reg, wc_ok, rew, terminal, mode, gamma, depth_cap, stats)
        out[i] = acc / k
    return out
