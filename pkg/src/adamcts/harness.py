"""Scenario runner: warm-up on the old MDP, change signal, then the adaptive episode loop.

A scenario is one cell of the benchmark matrix: an environment, the slip
probability before and after the change, a planner and the model it plans
with. Every episode draws its randomness from ``SeedSequence(seed_base,
spawn_key=(episode,))`` so results do not depend on worker scheduling.
"""
from __future__ import annotations

import dataclasses
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .belief import DirichletBelief, EnsembleBelief, TransitionBelief, TuneConfig, init_from_previous
from .gridworld import EnvironmentInstance, RewardScale, build_mdp, make_env, step, structural_support
from .mdp import TransitionRecord, discounted_return
from .rats import RatsConfig, rats_plan
from .search import ADAPTIVE, RISK_AVERSE, VANILLA, SearchConfig, plan

PLANNERS = ("mcts", "ra-mcts", "ada-mcts", "rats")
GT_CURRENT = "gt-current"
GT_PREVIOUS = "gt-previous"
LEARNED_PREVIOUS = "learned-previous"
LEARNED = "learned"
MODEL_ACCESS = (GT_CURRENT, GT_PREVIOUS, LEARNED_PREVIOUS, LEARNED)
P_GRID = (0.4, 0.5, 0.6, 0.8, 0.9, 1.0)
ENVIRONMENTS = ("frozen_lake_4x4", "cliff_walking", "ns_bridge")

_SEARCH_MODE = {"mcts": VANILLA, "ra-mcts": RISK_AVERSE, "ada-mcts": ADAPTIVE}

# (planner, model access) pairs for the benchmark columns
TABLE1_COLUMNS = (
    ("mcts", GT_CURRENT),
    ("rats", GT_CURRENT),
    ("mcts", LEARNED_PREVIOUS),
    ("rats", GT_PREVIOUS),
    ("rats", LEARNED_PREVIOUS),
    ("ada-mcts", LEARNED),
)
ABLATION_COLUMNS = (
    ("mcts", LEARNED_PREVIOUS),
    ("ra-mcts", LEARNED_PREVIOUS),
    ("ada-mcts", LEARNED),
)

_WARMUP_KEY = 2**31 - 1


def column_label(planner: str, access: str) -> str:
    suffix = {GT_CURRENT: "P_k", GT_PREVIOUS: "P_k-1", LEARNED_PREVIOUS: "Phat_k-1", LEARNED: ""}[access]
    name = planner.upper()
    return f"{name}-{suffix}" if suffix else name


@dataclass(frozen=True)
class WarmupConfig:
    """How the learned model of the old MDP is produced before the change."""

    episodes: int = 200
    simulations: int = 500

    def __post_init__(self):
        if self.episodes < 0 or self.simulations < 1:
            raise ValueError("warm-up needs a non-negative episode count and a positive budget")


@dataclass(frozen=True)
class BeliefConfig:
    backend: str = "dirichlet"
    n_samples: int = 10
    transfer: float = 0.5
    latent_dim: int = 2

    def __post_init__(self):
        if self.backend not in ("dirichlet", "ensemble"):
            raise ValueError(f"unknown belief backend {self.backend!r}")
        if self.n_samples < 2:
            raise ValueError("belief needs at least two posterior samples")
        if not 0.0 <= self.transfer <= 1.0:
            raise ValueError("transfer factor must lie in [0, 1]")


@dataclass(frozen=True)
class ScenarioConfig:
    env_name: str
    p_new: float
    planner: str = "ada-mcts"
    model_access: str = LEARNED
    p_old: float = 0.7
    episodes: int = 100
    max_steps: int = 200
    seed_base: int = 0
    gamma: float = 0.95
    rewards: RewardScale | None = None
    search: SearchConfig = SearchConfig(simulations=3000)
    rats: RatsConfig = RatsConfig()
    tune: TuneConfig = TuneConfig()
    warmup: WarmupConfig = WarmupConfig()
    belief: BeliefConfig = BeliefConfig()

    def __post_init__(self):
        if self.env_name not in ENVIRONMENTS:
            raise ValueError(f"unknown environment {self.env_name!r}; choose from {', '.join(ENVIRONMENTS)}")
        for name in ("p_old", "p_new"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.planner not in PLANNERS:
            raise ValueError(f"unknown planner {self.planner!r}; choose from {', '.join(PLANNERS)}")
        if self.model_access not in MODEL_ACCESS:
            raise ValueError(f"unknown model access {self.model_access!r}; choose from {', '.join(MODEL_ACCESS)}")
        if (self.planner == "ada-mcts") != (self.model_access == LEARNED):
            raise ValueError("ada-mcts plans with the learned belief and is the only planner that does")
        if self.episodes < 1 or self.max_steps < 1:
            raise ValueError("episodes and max_steps must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("discount must lie in (0, 1)")

    @property
    def label(self) -> str:
        return column_label(self.planner, self.model_access)

    def environments(self) -> tuple[EnvironmentInstance, EnvironmentInstance]:
        base = make_env(self.env_name)
        if self.rewards is not None:
            base = dataclasses.replace(base, rewards=self.rewards)
        return base.with_p(self.p_old), base.with_p(self.p_new)


@dataclass
class EpisodeRecord:
    episode: int
    ret: float
    steps: int
    outcome: str
    regular_fraction: float
    decision_seconds: list[float] = field(default_factory=list)


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    episodes: list[EpisodeRecord]

    @property
    def returns(self) -> np.ndarray:
        return np.array([e.ret for e in self.episodes])

    @property
    def mean(self) -> float:
        return float(self.returns.mean())

    @property
    def stderr(self) -> float | None:
        r = self.returns
        if len(r) < 2:
            return None
        return float(r.std(ddof=1) / math.sqrt(len(r)))

    @property
    def decision_times(self) -> np.ndarray:
        return np.array([t for e in self.episodes for t in e.decision_seconds])

    @property
    def mean_decision_seconds(self) -> float:
        t = self.decision_times
        return float(t.mean()) if t.size else float("nan")

    @property
    def mode_trace(self) -> np.ndarray:
        """Fraction of successor draws made in regular mode, per episode."""
        return np.array([e.regular_fraction for e in self.episodes])


def episode_seed(seed_base: int, episode: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed_base, spawn_key=(episode,))


def _new_belief(env: EnvironmentInstance, cfg: ScenarioConfig) -> TransitionBelief:
    mdp = build_mdp(env, cfg.gamma)
    kw = dict(n_samples=cfg.belief.n_samples, tag=None)
    cls = DirichletBelief if cfg.belief.backend == "dirichlet" else EnsembleBelief
    return cls.from_mdp(mdp, support=structural_support(env), **kw)


_warmup_cache: dict = {}


def warmup_belief(cfg: ScenarioConfig) -> TransitionBelief:
    """Learned model of the old MDP: vanilla search with the true old model, then fit.

    Cached per process on everything that influences the result.
    """
    key = (cfg.env_name, cfg.p_old, cfg.gamma, cfg.rewards, cfg.warmup, cfg.belief, cfg.max_steps, cfg.seed_base,
           cfg.search.c_p, cfg.search.rollout_depth_cap)
    if key in _warmup_cache:
        return _warmup_cache[key]
    env_old, _ = cfg.environments()
    mdp_old = build_mdp(env_old, cfg.gamma)
    belief = _new_belief(env_old, cfg)
    ss = np.random.SeedSequence(cfg.seed_base, spawn_key=(_WARMUP_KEY,))
    rng = np.random.default_rng(ss)
    belief.tag = rng.standard_normal(cfg.belief.latent_dim)
    start = env_old.layout.start
    for ep in range(cfg.warmup.episodes):
        s = start
        for t in range(cfg.max_steps):
            scfg = dataclasses.replace(cfg.search, simulations=cfg.warmup.simulations, mode=VANILLA,
                                       seed=int(rng.integers(2**31)))
            a = plan(s, mdp_old, cfg=scfg).action
            s_next, r, done = step(env_old, s, a, rng, cfg.gamma)
            belief.observe(TransitionRecord(s, a, r, s_next))
            s = s_next
            if done:
                break
    if isinstance(belief, EnsembleBelief):
        belief.fit(rng)
    _warmup_cache[key] = belief
    return belief


def _outcome(env: EnvironmentInstance, s: int, done: bool) -> str:
    if not done:
        return "timeout"
    return "goal" if s in env.layout.goals else "hole"


def _decide(cfg: ScenarioConfig, s: int, model, previous, seed: int) -> tuple[int, int, int]:
    if cfg.planner == "rats":
        return rats_plan(s, model, dataclasses.replace(cfg.rats, seed=seed)), 0, 0
    scfg = dataclasses.replace(cfg.search, mode=_SEARCH_MODE[cfg.planner], seed=seed)
    res = plan(s, model, previous, scfg)
    return res.action, res.regular_calls, res.worst_case_calls


def _run_episode(cfg: ScenarioConfig, episode: int, model, previous=None, learner: TransitionBelief | None = None
                 ) -> EpisodeRecord:
    _, env_new = cfg.environments()
    ss = episode_seed(cfg.seed_base, episode)
    env_seq, plan_seq = ss.spawn(2)
    env_rng = np.random.default_rng(env_seq)
    plan_seeds = plan_seq.generate_state(cfg.max_steps)
    s = env_new.layout.start
    rewards, times = [], []
    regular = worst = 0
    done = False
    for t in range(cfg.max_steps):
        t0 = time.perf_counter()
        a, n_reg, n_wc = _decide(cfg, s, model, previous, int(plan_seeds[t] >> 1))
        times.append(time.perf_counter() - t0)
        regular += n_reg
        worst += n_wc
        s_next, r, done = step(env_new, s, a, env_rng, cfg.gamma)
        rewards.append(r)
        if learner is not None:
            learner.observe(TransitionRecord(s, a, r, s_next))
        s = s_next
        if done:
            break
    total = regular + worst
    if cfg.planner == "rats":
        frac = float("nan")
    else:
        frac = regular / total if total else float("nan")
    return EpisodeRecord(episode, discounted_return(rewards, cfg.gamma), len(rewards), _outcome(env_new, s, done),
                         frac, times)


def _episode_job(args):
    cfg, episode, model, previous = args
    return _run_episode(cfg, episode, model, previous)


def run_scenario(cfg: ScenarioConfig, jobs: int = 1, prev_belief: TransitionBelief | None = None) -> ScenarioResult:
    """Run every episode of one cell after the change signal.

    ``prev_belief`` skips the warm-up when the caller already has the learned
    model of the old MDP. Episodes of non-adaptive planners are independent and
    may be spread over ``jobs`` processes; the adaptive loop is sequential.
    """
    env_old, env_new = cfg.environments()
    if cfg.model_access in (LEARNED_PREVIOUS, LEARNED) and prev_belief is None:
        prev_belief = warmup_belief(cfg)
    if cfg.model_access == GT_CURRENT:
        model = build_mdp(env_new, cfg.gamma)
    elif cfg.model_access == GT_PREVIOUS:
        model = build_mdp(env_old, cfg.gamma)
    else:
        model = prev_belief

    if cfg.model_access != LEARNED:
        if jobs > 1 and cfg.episodes > 1:
            with ProcessPoolExecutor(jobs) as pool:
                records = list(pool.map(_episode_job, [(cfg, i, model, None) for i in range(cfg.episodes)]))
        else:
            records = [_run_episode(cfg, i, model) for i in range(cfg.episodes)]
        return ScenarioResult(cfg, records)

    # change signal: fresh latent tag and instance buffer, partially transferred knowledge
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed_base, spawn_key=(_WARMUP_KEY, 1)))
    current = init_from_previous(prev_belief, rng, cfg.belief.transfer, cfg.belief.latent_dim)
    records = []
    for i in range(cfg.episodes):
        records.append(_run_episode(cfg, i, current, prev_belief, learner=current))
        current.tune_model(cfg.tune, i, rng)
    return ScenarioResult(cfg, records)


def _cell_job(args):
    cfg, prev = args
    try:
        return run_scenario(cfg, prev_belief=prev), None
    except Exception as exc:  # recorded per cell, the matrix keeps going
        return None, f"{type(exc).__name__}: {exc}"


def run_matrix(configs: list[ScenarioConfig], jobs: int = 1) -> list[tuple[ScenarioConfig, ScenarioResult | None, str | None]]:
    """Run many cells; failures are reported per cell instead of aborting."""
    priors = {}
    for cfg in configs:
        if cfg.model_access in (LEARNED_PREVIOUS, LEARNED):
            try:
                priors[id(cfg)] = warmup_belief(cfg)
            except Exception:
                priors[id(cfg)] = None
    args = [(cfg, priors.get(id(cfg))) for cfg in configs]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            outs = list(pool.map(_cell_job, args))
    else:
        outs = [_cell_job(a) for a in args]
    return [(cfg, res, err) for cfg, (res, err) in zip(configs, outs)]


def matrix_configs(base: ScenarioConfig, envs=ENVIRONMENTS, p_values=P_GRID, columns=TABLE1_COLUMNS
                   ) -> list[ScenarioConfig]:
    return [dataclasses.replace(base, env_name=env, p_new=p, planner=planner, model_access=access)
            for env in envs for p in p_values for planner, access in columns]


def run_table1(base: ScenarioConfig, envs=ENVIRONMENTS, p_values=P_GRID, jobs: int = 1):
    return run_matrix(matrix_configs(base, envs, p_values, TABLE1_COLUMNS), jobs)


def run_ablation(base: ScenarioConfig, envs=ENVIRONMENTS, p_values=P_GRID, jobs: int = 1):
    return run_matrix(matrix_configs(base, envs, p_values, ABLATION_COLUMNS), jobs)


@dataclass
class TimingRow:
    env_name: str
    planner: str
    decisions: int
    mean_seconds: float
    std_seconds: float


def run_timing(base: ScenarioConfig, envs=ENVIRONMENTS, decisions: int = 30, simulations: int = 30_000,
               depth: int = 3) -> list[TimingRow]:
    """Per-decision wall time of the adaptive planner and the minimax baseline.

    Both plan from the same states: the non-terminal states of the new MDP,
    visited in index order. The adaptive planner uses the learned beliefs of
    the scenario; the baseline uses the learned model of the old MDP.
    """
    rows = []
    for env_name in envs:
        cfg = dataclasses.replace(base, env_name=env_name, planner="ada-mcts", model_access=LEARNED)
        prev = warmup_belief(cfg)
        current = init_from_previous(prev, np.random.default_rng(cfg.seed_base), cfg.belief.transfer)
        states = np.flatnonzero(~prev.table.terminal)
        scfg = dataclasses.replace(cfg.search, simulations=simulations, mode=ADAPTIVE)
        rcfg = dataclasses.replace(cfg.rats, depth=depth)
        # compile both engines outside the timed region
        plan(int(states[0]), current, prev, dataclasses.replace(scfg, simulations=10))
        rats_plan(int(states[0]), prev, dataclasses.replace(rcfg, depth=1, leaf_rollouts=1))
        for name in ("ada-mcts", "rats"):
            times = []
            for i in range(decisions):
                s = int(states[i % len(states)])
                t0 = time.perf_counter()
                if name == "ada-mcts":
                    plan(s, current, prev, dataclasses.replace(scfg, seed=cfg.seed_base + i))
                else:
                    rats_plan(s, prev, dataclasses.replace(rcfg, seed=cfg.seed_base + i))
                times.append(time.perf_counter() - t0)
            t = np.array(times)
            rows.append(TimingRow(env_name, name, decisions, float(t.mean()), float(t.std(ddof=1))))
    return rows


def speedup(rows: list[TimingRow]) -> dict[str, float]:
    """Relative speed-up (RATS - ADA) / RATS per environment."""
    by = {(r.env_name, r.planner): r.mean_seconds for r in rows}
    envs = sorted({r.env_name for r in rows})
    return {e: (by[(e, "rats")] - by[(e, "ada-mcts")]) / by[(e, "rats")] for e in envs}
