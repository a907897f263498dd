"""Slippery gridworlds: Frozen Lake, stochastic Cliff Walking and the non-stationary bridge.

Layouts are plain text, one character per cell::

    S start   G goal   H hole   C cliff   F free

Moving off the grid leaves the agent where it is. Goals, holes and cliff
cells are absorbing.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .mdp import Action, MdpSnapshot

CELL_KINDS = "SGHCF"
PERPENDICULAR = "perpendicular"
OPPOSITE = "opposite"

# (drow, dcol) per Action
MOVES = {
    Action.UP: (-1, 0),
    Action.DOWN: (1, 0),
    Action.LEFT: (0, -1),
    Action.RIGHT: (0, 1),
}
_PERP = {
    Action.UP: (Action.LEFT, Action.RIGHT),
    Action.DOWN: (Action.LEFT, Action.RIGHT),
    Action.LEFT: (Action.UP, Action.DOWN),
    Action.RIGHT: (Action.UP, Action.DOWN),
}
_OPP = {
    Action.UP: Action.DOWN,
    Action.DOWN: Action.UP,
    Action.LEFT: Action.RIGHT,
    Action.RIGHT: Action.LEFT,
}


@dataclass(frozen=True)
class GridLayout:
    rows: tuple[str, ...]

    def __post_init__(self):
        rows = tuple(r.strip() for r in self.rows if r.strip())
        object.__setattr__(self, "rows", rows)
        if not rows:
            raise ValueError("empty layout")
        if len({len(r) for r in rows}) != 1:
            raise ValueError("layout rows must have equal width")
        bad = set("".join(rows)) - set(CELL_KINDS)
        if bad:
            raise ValueError(f"unknown cell characters: {sorted(bad)}")
        flat = "".join(rows)
        if flat.count("S") != 1:
            raise ValueError("layout needs exactly one start cell")
        if "G" not in flat:
            raise ValueError("layout needs at least one goal cell")

    @classmethod
    def from_text(cls, text: str) -> GridLayout:
        return cls(tuple(text.splitlines()))

    def to_text(self) -> str:
        return "\n".join(self.rows) + "\n"

    @property
    def height(self) -> int:
        return len(self.rows)

    @property
    def width(self) -> int:
        return len(self.rows[0])

    @property
    def n_states(self) -> int:
        return self.height * self.width

    def cell(self, s: int) -> str:
        return self.rows[s // self.width][s % self.width]

    def state(self, row: int, col: int) -> int:
        return row * self.width + col

    def coords(self, s: int) -> tuple[int, int]:
        return divmod(s, self.width)

    @property
    def start(self) -> int:
        return "".join(self.rows).index("S")

    def states_of(self, kinds: str) -> frozenset[int]:
        flat = "".join(self.rows)
        return frozenset(i for i, c in enumerate(flat) if c in kinds)

    @property
    def goals(self) -> frozenset[int]:
        return self.states_of("G")

    @property
    def terminals(self) -> frozenset[int]:
        return self.states_of("GHC")

    def neighbour(self, s: int, a: Action) -> int:
        r, c = self.coords(s)
        dr, dc = MOVES[Action(a)]
        nr, nc = r + dr, c + dc
        if 0 <= nr < self.height and 0 <= nc < self.width:
            return self.state(nr, nc)
        return s


@dataclass(frozen=True)
class SlipModel:
    kind: str
    p: float

    def __post_init__(self):
        if self.kind not in (PERPENDICULAR, OPPOSITE):
            raise ValueError(f"unknown slip kind {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"slip probability must lie in [0, 1], got {self.p}")

    def outcomes(self, a: Action) -> list[tuple[Action, float]]:
        """Actual movement directions and their probabilities for intended ``a``."""
        a = Action(a)
        if self.kind == PERPENDICULAR:
            side = (1.0 - self.p) / 2.0
            return [(a, self.p), (_PERP[a][0], side), (_PERP[a][1], side)]
        return [(a, self.p), (_OPP[a], 1.0 - self.p)]


@dataclass(frozen=True)
class RewardScale:
    goal: float = 1.0
    hole: float = -1.0
    step: float = 0.0


@dataclass(frozen=True)
class EnvironmentInstance:
    name: str
    layout: GridLayout
    slip: SlipModel
    rewards: RewardScale = RewardScale()

    def with_p(self, p: float) -> EnvironmentInstance:
        return dataclasses.replace(self, slip=SlipModel(self.slip.kind, p))

    @property
    def p(self) -> float:
        return self.slip.p


@lru_cache(maxsize=256)
def build_mdp(env: EnvironmentInstance, gamma: float = 0.95) -> MdpSnapshot:
    layout = env.layout
    S, A = layout.n_states, len(Action)
    P = np.zeros((S, A, S))
    R = np.zeros((S, A, S))
    terminal = np.zeros(S, dtype=bool)
    terminal[list(layout.terminals)] = True

    entry_reward = np.full(S, env.rewards.step)
    entry_reward[list(layout.states_of("HC"))] = env.rewards.hole
    entry_reward[list(layout.goals)] = env.rewards.goal

    for s in range(S):
        if terminal[s]:
            P[s, :, s] = 1.0
            continue
        for a in Action:
            for move, prob in env.slip.outcomes(a):
                P[s, a, layout.neighbour(s, move)] += prob
        R[s] = entry_reward[None, :]
    # drop zero-probability entries so the support is exact
    P[np.abs(P) < 1e-15] = 0.0
    return MdpSnapshot(
        P,
        R,
        terminal,
        gamma,
        name=env.name,
        meta={"p": env.p, "slip": env.slip.kind, "rewards": dataclasses.asdict(env.rewards)},
    )


def structural_support(env: EnvironmentInstance) -> np.ndarray:
    """Successors reachable for some slip probability strictly between 0 and 1."""
    return build_mdp(env.with_p(0.5)).support


def step(env: EnvironmentInstance, s: int, a: int, rng: np.random.Generator, gamma: float = 0.95):
    """Sample one transition; returns ``(s_next, reward, terminal)``."""
    mdp = build_mdp(env, gamma)
    if mdp.terminal[s]:
        raise ValueError(f"cannot step from terminal state {s}")
    row = mdp.transitions[s, a]
    s_next = int(np.searchsorted(np.cumsum(row), rng.random(), side="right"))
    s_next = min(s_next, len(row) - 1)
    # guard against landing on a zero-probability index through rounding
    while row[s_next] == 0.0:
        s_next -= 1
    return s_next, float(mdp.rewards[s, a, s_next]), bool(mdp.terminal[s_next])


def load_layout(path) -> GridLayout:
    return GridLayout.from_text(Path(path).read_text())


def _packaged_layout(name: str) -> GridLayout:
    return GridLayout.from_text(resources.files("adamcts.layouts").joinpath(f"{name}.txt").read_text())


def standard_layouts(p: float = 0.7) -> dict[str, EnvironmentInstance]:
    return {
        "frozen_lake_4x4": EnvironmentInstance(
            "frozen_lake_4x4", _packaged_layout("frozen_lake_4x4"), SlipModel(PERPENDICULAR, p)
        ),
        "cliff_walking": EnvironmentInstance(
            "cliff_walking",
            _packaged_layout("cliff_walking"),
            SlipModel(PERPENDICULAR, p),
            RewardScale(goal=1.0, hole=-1.0, step=-0.01),
        ),
        "ns_bridge": EnvironmentInstance("ns_bridge", _packaged_layout("ns_bridge"), SlipModel(OPPOSITE, p)),
    }


def make_env(name: str, p: float = 0.7) -> EnvironmentInstance:
    envs = standard_layouts(p)
    if name not in envs:
        raise KeyError(f"unknown environment {name!r}; choose from {sorted(envs)}")
    return envs[name]


def shortest_path_length(layout: GridLayout) -> int:
    """Number of moves on the shortest start-to-goal path avoiding holes and cliffs."""
    from collections import deque

    blocked = layout.states_of("HC")
    dist = {layout.start: 0}
    queue = deque([layout.start])
    while queue:
        s = queue.popleft()
        if s in layout.goals:
            return dist[s]
        for a in Action:
            nxt = layout.neighbour(s, a)
            if nxt not in dist and nxt not in blocked:
                dist[nxt] = dist[s] + 1
                queue.append(nxt)
    raise ValueError("goal unreachable")


def optimal_deterministic_return(env: EnvironmentInstance, gamma: float = 0.95) -> float:
    """Discounted return of the shortest path when moves are deterministic."""
    n = shortest_path_length(env.layout)
    steps = sum(env.rewards.step * gamma**t for t in range(n - 1))
    return steps + env.rewards.goal * gamma ** (n - 1)


def save_instance(env: EnvironmentInstance, path, gamma: float = 0.95) -> None:
    """Write the parameters that regenerate ``build_mdp(env, gamma)``."""
    doc = {
        "environment": env.name,
        "layout": list(env.layout.rows),
        "slip": env.slip.kind,
        "p": env.p,
        "gamma": gamma,
        "reward_scale": dataclasses.asdict(env.rewards),
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_instance(path) -> tuple[EnvironmentInstance, float]:
    doc = json.loads(Path(path).read_text())
    env = EnvironmentInstance(
        doc["environment"],
        GridLayout(tuple(doc["layout"])),
        SlipModel(doc["slip"], float(doc["p"])),
        RewardScale(**doc["reward_scale"]),
    )
    return env, float(doc["gamma"])


def render(layout: GridLayout, marks: dict[int, str] | None = None) -> str:
    marks = marks or {}
    lines = []
    for r, row in enumerate(layout.rows):
        lines.append(" ".join(marks.get(layout.state(r, c), ch) for c, ch in enumerate(row)))
    return "\n".join(lines)
