"""Tabular MDP snapshots, non-stationary schedules and value-iteration oracles."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Iterable, NamedTuple, Sequence

import numpy as np

PROB_ATOL = 1e-9


class Action(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3


class TransitionRecord(NamedTuple):
    """One environment step, tagged with the latent vector of the instance it came from."""

    s: int
    a: int
    r: float
    s_next: int
    w_b: Any = None


@dataclass(frozen=True, eq=False)
class MdpSnapshot:
    """One stationary version of an MDP.

    ``transitions[s, a, s']`` and ``rewards[s, a, s']`` are dense tables. Terminal
    states carry an absorbing zero-reward self-loop.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    terminal: np.ndarray
    gamma: float
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        P = np.asarray(self.transitions, dtype=float)
        R = np.asarray(self.rewards, dtype=float)
        term = np.asarray(self.terminal, dtype=bool)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition table must be (S, A, S), got {P.shape}")
        if R.shape != P.shape:
            raise ValueError("reward table must match the transition table shape")
        if term.shape != (P.shape[0],):
            raise ValueError("terminal mask must have one entry per state")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {self.gamma}")
        if np.any(P < 0):
            raise ValueError("negative transition probability")
        if not np.allclose(P.sum(axis=2), 1.0, atol=PROB_ATOL):
            raise ValueError("transition rows must sum to 1")
        if not np.all(np.isfinite(R)):
            raise ValueError("rewards must be finite")
        for arr in (P, R, term):
            arr.setflags(write=False)
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "rewards", R)
        object.__setattr__(self, "terminal", term)

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def support(self) -> np.ndarray:
        """Boolean (S, A, S) mask of successors with positive probability."""
        return self.transitions > 0

    def distribution(self, s: int, a: int) -> list[tuple[int, float]]:
        row = self.transitions[s, a]
        return [(int(j), float(row[j])) for j in np.flatnonzero(row)]

    def expected_reward(self) -> np.ndarray:
        """R(s, a) as the expectation of R(s, a, s') under the transition table."""
        return np.einsum("ijk,ijk->ij", self.transitions, self.rewards)

    def is_deterministic(self) -> bool:
        return bool(np.all(self.support.sum(axis=2) == 1))


@dataclass(frozen=True)
class NonStationarySchedule:
    """A sequence of snapshots switching at given episode indices.

    ``snapshots[k]`` is active from ``change_times[k - 1]`` (or episode 0) until
    the next change time. The agent is told when a switch happens.
    """

    snapshots: Sequence[MdpSnapshot]
    change_times: Sequence[int]

    def __post_init__(self):
        if len(self.snapshots) != len(self.change_times) + 1:
            raise ValueError("need exactly one more snapshot than change times")
        if any(b <= a for a, b in zip(self.change_times, self.change_times[1:])):
            raise ValueError("change times must be strictly increasing")
        if self.change_times and self.change_times[0] <= 0:
            raise ValueError("change times must be positive episode indices")
        first = self.snapshots[0]
        for snap in self.snapshots[1:]:
            if snap.transitions.shape != first.transitions.shape:
                raise ValueError("snapshots must share state and action spaces")
            if snap.gamma != first.gamma:
                raise ValueError("snapshots must share the discount")
            if not np.array_equal(snap.rewards, first.rewards):
                raise ValueError("snapshots must share the reward function")
            if not np.array_equal(snap.terminal, first.terminal):
                raise ValueError("snapshots must share terminal states")

    def version(self, episode: int) -> int:
        return int(np.searchsorted(np.asarray(self.change_times), episode, side="right"))

    def snapshot_at(self, episode: int) -> MdpSnapshot:
        return self.snapshots[self.version(episode)]

    def change_signal(self, episode: int) -> bool:
        """True on the first episode of every new snapshot."""
        return episode in self.change_times


def discounted_return(trajectory: Iterable, gamma: float) -> float:
    """Sum of gamma**t * r_t from t = 0; accepts TransitionRecords or bare rewards."""
    total, disc = 0.0, 1.0
    for step in trajectory:
        r = step.r if isinstance(step, TransitionRecord) else step
        total += disc * float(r)
        disc *= gamma
    return total


def pessimistic_q_values(mdp: MdpSnapshot, horizon: int) -> np.ndarray:
    """Depth-``horizon`` worst-case Q table.

    The chance node collapses onto the supported successor with the lowest
    ``r + gamma * V``; decision nodes maximise.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    support = mdp.support
    V = np.zeros(mdp.n_states)
    Q = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(horizon):
        backup = mdp.rewards + mdp.gamma * V[None, None, :]
        Q = np.where(support, backup, np.inf).min(axis=2)
        Q[mdp.terminal] = 0.0
        V = Q.max(axis=1)
    return Q


def pessimistic_value_iteration(mdp: MdpSnapshot, horizon: int) -> np.ndarray:
    return pessimistic_q_values(mdp, horizon).max(axis=1)


def exact_q_values(mdp: MdpSnapshot, tolerance: float = 1e-10, max_iter: int = 100_000) -> np.ndarray:
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    V = np.zeros(mdp.n_states)
    expected_r = mdp.expected_reward()
    for _ in range(max_iter):
        Q = expected_r + mdp.gamma * mdp.transitions @ V
        Q[mdp.terminal] = 0.0
        V_new = Q.max(axis=1)
        delta = np.max(np.abs(V_new - V))
        V = V_new
        # sup-norm error bound of the contraction
        if delta * mdp.gamma <= tolerance * (1.0 - mdp.gamma) or delta == 0.0:
            break
    Q = expected_r + mdp.gamma * mdp.transitions @ V
    Q[mdp.terminal] = 0.0
    return Q


def exact_value_iteration(mdp: MdpSnapshot, tolerance: float = 1e-10) -> np.ndarray:
    return exact_q_values(mdp, tolerance).max(axis=1)


@dataclass(frozen=True, eq=False)
class SuccessorTable:
    """Compact (S, A, K) view of an MDP's successor structure.

    ``succ[s, a, k]`` lists the possible successors of ``(s, a)`` in ascending
    state order, padded with -1. Planners and beliefs store per-successor
    quantities aligned with it.
    """

    succ: np.ndarray
    rewards: np.ndarray
    terminal: np.ndarray
    gamma: float

    @classmethod
    def from_mdp(cls, mdp: MdpSnapshot, support: np.ndarray | None = None) -> SuccessorTable:
        mask = mdp.support if support is None else np.asarray(support, dtype=bool)
        S, A, _ = mask.shape
        K = max(1, int(mask.sum(axis=2).max()))
        succ = np.full((S, A, K), -1, dtype=np.int64)
        rew = np.zeros((S, A, K))
        for s in range(S):
            for a in range(A):
                idx = np.flatnonzero(mask[s, a])
                if idx.size == 0:
                    raise ValueError(f"empty support at ({s}, {a})")
                succ[s, a, : idx.size] = idx
                rew[s, a, : idx.size] = mdp.rewards[s, a, idx]
        return cls(succ, rew, mdp.terminal.copy(), mdp.gamma)

    @property
    def n_states(self) -> int:
        return self.succ.shape[0]

    @property
    def n_actions(self) -> int:
        return self.succ.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return self.succ >= 0

    def compact(self, dense: np.ndarray) -> np.ndarray:
        """Gather a dense (S, A, S) table onto the successor slots."""
        out = np.take_along_axis(dense, np.maximum(self.succ, 0), axis=2)
        return np.where(self.valid, out, 0.0)

    def expand(self, compact: np.ndarray) -> np.ndarray:
        dense = np.zeros((self.n_states, self.n_actions, self.n_states))
        S, A, K = self.succ.shape
        s_idx, a_idx, k_idx = np.nonzero(self.valid)
        dense[s_idx, a_idx, self.succ[s_idx, a_idx, k_idx]] = compact[s_idx, a_idx, k_idx]
        return dense

    def same_structure(self, other: SuccessorTable) -> bool:
        return np.array_equal(self.succ, other.succ) and np.array_equal(self.terminal, other.terminal)
