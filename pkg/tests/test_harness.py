import dataclasses
import math

import numpy as np
import pytest

from adamcts import harness
from adamcts.harness import (ABLATION_COLUMNS, GT_CURRENT, LEARNED, LEARNED_PREVIOUS, TABLE1_COLUMNS, ScenarioConfig,
                             TimingRow, WarmupConfig, column_label, matrix_configs, run_matrix, run_scenario, speedup)
from adamcts.report import write_results
from adamcts.search import SearchConfig

TINY = dict(episodes=3, max_steps=30, search=SearchConfig(simulations=60), warmup=WarmupConfig(episodes=3,
                                                                                                 simulations=30))


def tiny(**kw):
    return ScenarioConfig(**{"env_name": "frozen_lake_4x4", "p_new": 0.9, **TINY, **kw})


def test_labels():
    labels = [column_label(p, a) for p, a in TABLE1_COLUMNS]
    assert labels == ["MCTS-P_k", "RATS-P_k", "MCTS-Phat_k-1", "RATS-P_k-1", "RATS-Phat_k-1", "ADA-MCTS"]
    assert [column_label(p, a) for p, a in ABLATION_COLUMNS] == ["MCTS-Phat_k-1", "RA-MCTS-Phat_k-1", "ADA-MCTS"]


def test_matrix_shape():
    cfgs = matrix_configs(tiny())
    assert len(cfgs) == 3 * 6 * 6
    assert len({(c.env_name, c.p_new) for c in cfgs}) == 18
    assert len({c.label for c in cfgs}) == 6


def test_config_validation():
    with pytest.raises(ValueError):
        tiny(planner="ada-mcts", model_access=GT_CURRENT)
    with pytest.raises(ValueError):
        tiny(planner="mcts", model_access=LEARNED)
    with pytest.raises(ValueError):
        tiny(p_new=1.3)
    with pytest.raises(ValueError):
        tiny(env_name="moon")
    with pytest.raises(ValueError):
        tiny(planner="dqn", model_access=GT_CURRENT)


def test_single_episode_has_no_stderr():
    res = run_scenario(tiny(planner="mcts", model_access=GT_CURRENT, episodes=1))
    assert len(res.episodes) == 1 and res.stderr is None
    assert math.isfinite(res.mean)


@pytest.mark.parametrize("planner,access", list(TABLE1_COLUMNS) + [("ra-mcts", LEARNED_PREVIOUS)])
def test_every_column_runs_and_repeats(planner, access):
    cfg = tiny(planner=planner, model_access=access)
    a = run_scenario(cfg)
    b = run_scenario(cfg)
    np.testing.assert_array_equal(a.returns, b.returns)
    assert [e.outcome for e in a.episodes] == [e.outcome for e in b.episodes]
    for e in a.episodes:
        assert e.outcome in ("goal", "hole", "timeout") and 1 <= e.steps <= cfg.max_steps
        assert len(e.decision_seconds) == e.steps
    if planner == "rats":
        assert np.all(np.isnan(a.mode_trace))
    elif planner == "ada-mcts":
        assert np.all((a.mode_trace >= 0) & (a.mode_trace <= 1))


def test_regular_only_planner_traces_one():
    res = run_scenario(tiny(planner="mcts", model_access=GT_CURRENT))
    assert np.all(res.mode_trace == 1.0)
    res = run_scenario(tiny(planner="ra-mcts", model_access=LEARNED_PREVIOUS))
    assert np.all(res.mode_trace == 0.0)


def test_episode_seeds_do_not_depend_on_episode_count():
    short = run_scenario(tiny(planner="mcts", model_access=GT_CURRENT, episodes=2))
    long = run_scenario(tiny(planner="mcts", model_access=GT_CURRENT, episodes=4))
    np.testing.assert_array_equal(short.returns, long.returns[:2])


def test_matrix_records_failures_per_cell(monkeypatch):
    real = harness.run_scenario

    def flaky(cfg, jobs=1, prev_belief=None):
        if cfg.planner == "rats":
            raise RuntimeError("boom")
        return real(cfg, jobs, prev_belief)

    monkeypatch.setattr(harness, "run_scenario", flaky)
    out = run_matrix([tiny(planner="rats", model_access=GT_CURRENT), tiny(planner="mcts", model_access=GT_CURRENT)])
    assert out[0][1] is None and "boom" in out[0][2]
    assert out[1][1] is not None and out[1][2] is None


def test_speedup_definition():
    rows = [TimingRow("a", "rats", 30, 4.0, 0.1), TimingRow("a", "ada-mcts", 30, 1.0, 0.1)]
    assert speedup(rows) == {"a": 0.75}


def test_timing_rows():
    rows = harness.run_timing(tiny(), envs=("frozen_lake_4x4",), decisions=3, simulations=50, depth=2)
    assert [r.planner for r in rows] == ["ada-mcts", "rats"]
    assert all(r.mean_seconds > 0 and math.isfinite(r.std_seconds) for r in rows)


def test_result_files_and_byte_identical_raw(tmp_path):
    cfgs = [tiny(planner="mcts", model_access=GT_CURRENT), tiny()]
    for run in ("a", "b"):
        results = [(c, run_scenario(c), None) for c in cfgs]
        write_results(tmp_path / run, results, figures=(run == "a"))
    assert (tmp_path / "a" / "raw.csv").read_bytes() == (tmp_path / "b" / "raw.csv").read_bytes()
    assert (tmp_path / "a" / "summary.csv").exists() and (tmp_path / "a" / "summary.json").exists()
    assert (tmp_path / "a" / "returns_frozen_lake_4x4.svg").exists()
    assert (tmp_path / "a" / "mode_occupancy.svg").exists()
    header = (tmp_path / "a" / "raw.csv").read_text().splitlines()[0]
    assert "seconds" not in header


def test_ensemble_backend_scenario():
    cfg = tiny(belief=dataclasses.replace(harness.BeliefConfig(), backend="ensemble"))
    res = run_scenario(cfg)
    assert len(res.episodes) == 3
