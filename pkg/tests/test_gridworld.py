import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adamcts.gridworld import (OPPOSITE, PERPENDICULAR, GridLayout, SlipModel, build_mdp, load_instance, make_env,
                               optimal_deterministic_return, render, save_instance, shortest_path_length,
                               standard_layouts, step, structural_support)
from adamcts.mdp import Action

FL = make_env("frozen_lake_4x4")


def test_standard_layouts():
    envs = standard_layouts()
    assert set(envs) == {"frozen_lake_4x4", "cliff_walking", "ns_bridge"}
    lay = envs["frozen_lake_4x4"].layout
    assert lay.start == 0 and lay.goals == {lay.n_states - 1}
    assert envs["cliff_walking"].rewards.step < 0
    assert envs["ns_bridge"].slip.kind == OPPOSITE
    assert envs["frozen_lake_4x4"].slip.kind == PERPENDICULAR


def test_every_bridge_cell_borders_a_hole():
    lay = make_env("ns_bridge").layout
    holes = lay.states_of("H")
    free = [s for s in range(lay.n_states) if lay.cell(s) in "SF"]
    assert free
    for s in free:
        assert any(lay.neighbour(s, a) in holes for a in Action), s


def test_deterministic_limit_is_one_hot():
    for env in standard_layouts(1.0).values():
        mdp = build_mdp(env)
        live = ~mdp.terminal
        assert np.all(mdp.transitions[live].max(axis=-1) == 1.0)
        lay = env.layout
        for s in np.flatnonzero(live):
            for a in Action:
                assert mdp.transitions[s, a, lay.neighbour(s, a)] == 1.0


def test_perpendicular_slip_interior_cell():
    mdp = build_mdp(FL)
    s = FL.layout.state(2, 2)
    row = mdp.transitions[s, Action.UP]
    assert row[FL.layout.state(1, 2)] == pytest.approx(0.7)
    assert row[FL.layout.state(2, 1)] == pytest.approx(0.15)
    assert row[FL.layout.state(2, 3)] == pytest.approx(0.15)
    assert np.count_nonzero(row) == 3


def test_opposite_slip_on_bridge():
    env = make_env("ns_bridge", 0.4)
    mdp = build_mdp(env)
    s = env.layout.state(1, 3)
    row = mdp.transitions[s, Action.RIGHT]
    assert row[env.layout.state(1, 4)] == pytest.approx(0.4)
    assert row[env.layout.state(1, 2)] == pytest.approx(0.6)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0))
def test_bridge_mirror_symmetry(p):
    a_p = build_mdp(make_env("ns_bridge", p)).transitions
    a_q = build_mdp(make_env("ns_bridge", 1.0 - p)).transitions
    opposite = [Action.DOWN, Action.UP, Action.RIGHT, Action.LEFT]
    for a in Action:
        np.testing.assert_allclose(a_p[:, a], a_q[:, opposite[a]], atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["frozen_lake_4x4", "cliff_walking", "ns_bridge"]), st.floats(0.0, 1.0))
def test_rows_are_distributions_and_support_is_bounded(name, p):
    mdp = build_mdp(make_env(name, p))
    np.testing.assert_allclose(mdp.transitions.sum(-1), 1.0)
    width = 3 if name != "ns_bridge" else 2
    assert mdp.support.sum(-1).max() <= width
    assert np.all(mdp.support <= structural_support(make_env(name)))


def test_step_frequencies_within_three_sigma():
    rng = np.random.default_rng(123)
    s = FL.layout.state(2, 2)
    targets = {FL.layout.state(1, 2): 0.7, FL.layout.state(2, 1): 0.15, FL.layout.state(2, 3): 0.15}
    n = 100_000
    counts = {t: 0 for t in targets}
    for _ in range(n):
        counts[step(FL, s, Action.UP, rng)[0]] += 1
    for t, p in targets.items():
        assert abs(counts[t] / n - p) <= 3 * np.sqrt(p * (1 - p) / n)


def test_step_rules():
    rng = np.random.default_rng(0)
    env = make_env("frozen_lake_4x4", 1.0)
    assert step(env, env.layout.state(1, 0), Action.UP, rng)[0] == 0
    assert step(env, 0, Action.UP, rng) == (0, 0.0, False)
    assert step(env, 0, Action.LEFT, rng)[0] == 0
    s_next, r, done = step(env, env.layout.state(3, 2), Action.RIGHT, rng)
    assert (s_next, r, done) == (15, 1.0, True)
    with pytest.raises(ValueError):
        step(env, 15, Action.UP, rng)


def test_shortest_paths():
    assert shortest_path_length(FL.layout) == 6
    assert shortest_path_length(make_env("cliff_walking").layout) == 13
    cliff = make_env("cliff_walking", 1.0)
    expect = sum(-0.01 * 0.95**t for t in range(12)) + 0.95**12
    assert optimal_deterministic_return(cliff) == pytest.approx(expect)


def test_layout_validation():
    with pytest.raises(ValueError):
        GridLayout(("SF", "F"))
    with pytest.raises(ValueError):
        GridLayout(("FF", "FG"))
    with pytest.raises(ValueError):
        GridLayout(("SX", "FG"))
    with pytest.raises(ValueError):
        SlipModel(PERPENDICULAR, 1.5)
    with pytest.raises(KeyError):
        make_env("mars")


def test_instance_round_trip(tmp_path):
    env = make_env("cliff_walking", 0.8)
    save_instance(env, tmp_path / "env.json", 0.9)
    back, gamma = load_instance(tmp_path / "env.json")
    assert back == env and gamma == 0.9
    np.testing.assert_array_equal(build_mdp(back, gamma).transitions, build_mdp(env, 0.9).transitions)


def test_render_matches_layout():
    assert render(FL.layout).replace(" ", "") == "\n".join(FL.layout.rows)
