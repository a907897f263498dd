"""Run configuration: an INI file with one section per component, overridden by command-line flags.

Unknown sections or keys are errors, so a typo never silently falls back to a default.
"""
from __future__ import annotations

import configparser
import dataclasses
from pathlib import Path

from .belief import TuneConfig
from .gridworld import RewardScale, make_env
from .harness import ENVIRONMENTS, LEARNED, LEARNED_PREVIOUS, P_GRID, BeliefConfig, ScenarioConfig, WarmupConfig
from .rats import RatsConfig
from .search import SearchConfig


class ConfigError(ValueError):
    pass


# section -> (ScenarioConfig attribute or None for the top level, dataclass type)
SECTIONS = {
    "scenario": None,
    "rewards": ("rewards", RewardScale),
    "search": ("search", SearchConfig),
    "rats": ("rats", RatsConfig),
    "tune": ("tune", TuneConfig),
    "warmup": ("warmup", WarmupConfig),
    "belief": ("belief", BeliefConfig),
    "matrix": None,
}
SCENARIO_KEYS = {"env": "env_name", "p_old": "p_old", "p_new": "p_new", "planner": "planner",
                 "model_access": "model_access", "episodes": "episodes", "max_steps": "max_steps", "seed": "seed_base",
                 "gamma": "gamma"}
MATRIX_KEYS = ("envs", "p_values")
# model each planner uses when none is given
DEFAULT_ACCESS = {"mcts": LEARNED_PREVIOUS, "ra-mcts": LEARNED_PREVIOUS, "rats": LEARNED_PREVIOUS, "ada-mcts": LEARNED}
# the search seed and mode are set per decision by the harness
_SKIP = {"search": {"seed", "mode"}, "rats": {"seed"}}


def _coerce(value: str, like):
    if isinstance(like, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value.strip()


def _fields(cls):
    return {f.name: f for f in dataclasses.fields(cls)}


def read_config(path) -> dict:
    """Parse a config file into ``{section: {key: raw string}}``, rejecting unknown names."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    out = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]; expected one of {', '.join(SECTIONS)}")
        allowed = _allowed_keys(section)
        for key in parser[section]:
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{section}]; expected one of {', '.join(sorted(allowed))}")
        out[section] = dict(parser[section])
    return out


def _allowed_keys(section: str) -> set[str]:
    if section == "scenario":
        return set(SCENARIO_KEYS)
    if section == "matrix":
        return set(MATRIX_KEYS)
    _, cls = SECTIONS[section]
    return set(_fields(cls)) - _SKIP.get(section, set())


def build_scenario(raw: dict, overrides: dict | None = None) -> ScenarioConfig:
    """Combine defaults, file values and flag overrides (same ``section -> key`` layout, typed values)."""
    merged: dict = {s: dict(v) for s, v in raw.items()}
    for section, values in (overrides or {}).items():
        for key, val in values.items():
            if val is not None:
                merged.setdefault(section, {})[key] = val
    base = ScenarioConfig("frozen_lake_4x4", 0.9)
    kwargs = {}
    for key, value in merged.get("scenario", {}).items():
        attr = SCENARIO_KEYS[key]
        like = getattr(base, attr)
        kwargs[attr] = _coerce(value, like) if isinstance(value, str) else value
    if "model_access" not in kwargs:
        kwargs["model_access"] = DEFAULT_ACCESS[kwargs.get("planner", base.planner)] \
            if kwargs.get("planner", base.planner) in DEFAULT_ACCESS else base.model_access
    for section, spec in SECTIONS.items():
        if spec is None or section not in merged:
            continue
        attr, cls = spec
        if attr == "rewards":
            # partial reward sections start from the environment's own scale
            env = kwargs.get("env_name", base.env_name)
            current = make_env(env).rewards if env in ENVIRONMENTS else RewardScale()
        else:
            current = getattr(base, attr)
        vals = {}
        for key, value in merged[section].items():
            like = getattr(current, key)
            vals[key] = _coerce(value, like) if isinstance(value, str) else value
        kwargs[attr] = dataclasses.replace(current, **vals)
    try:
        return dataclasses.replace(base, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def matrix_axes(raw: dict, envs=None, p_values=None) -> tuple[tuple[str, ...], tuple[float, ...]]:
    m = raw.get("matrix", {})
    env_list = envs or ([e.strip() for e in m["envs"].split(",")] if "envs" in m else ENVIRONMENTS)
    p_list = p_values or ([float(p) for p in m["p_values"].split(",")] if "p_values" in m else P_GRID)
    for e in env_list:
        if e not in ENVIRONMENTS:
            raise ConfigError(f"unknown environment {e!r}; choose from {', '.join(ENVIRONMENTS)}")
    for p in p_list:
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"slip probability must lie in [0, 1], got {p}")
    return tuple(env_list), tuple(p_list)


def default_config_text() -> str:
    """A complete config file holding every default, with the reference budgets noted."""
    s = ScenarioConfig("frozen_lake_4x4", 0.9)
    lines = ["# desk-scale defaults; the reference budget is search.simulations = 30000", "[scenario]"]
    for key, attr in SCENARIO_KEYS.items():
        lines.append(f"{key} = {getattr(s, attr)}")
    for section, spec in SECTIONS.items():
        if spec is None:
            continue
        attr, cls = spec
        if attr == "rewards":
            # each environment brings its own reward scale; uncomment to override
            lines += ["", "# [rewards]", "# goal = 1.0", "# hole = -1.0", "# step = 0.0"]
            continue
        obj = getattr(s, attr)
        lines.append("")
        lines.append(f"[{section}]")
        for name in _fields(cls):
            if name in _SKIP.get(section, set()):
                continue
            lines.append(f"{name} = {getattr(obj, name)}")
    lines += ["", "[matrix]", "envs = frozen_lake_4x4, cliff_walking, ns_bridge",
              "p_values = " + ", ".join(f"{p:g}" for p in P_GRID), ""]
    return "\n".join(lines)
