import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adamcts.gridworld import build_mdp, make_env, optimal_deterministic_return
from adamcts.mdp import (MdpSnapshot, NonStationarySchedule, SuccessorTable, TransitionRecord, discounted_return,
                         exact_q_values, exact_value_iteration, pessimistic_q_values, pessimistic_value_iteration)
from conftest import make_mdp, risky_safe

GOLDEN = json.loads((Path(__file__).parent / "data" / "frozen_lake_values.json").read_text())


def test_discounted_return_examples():
    assert discounted_return([1.0], 0.95) == 1.0
    assert discounted_return([0, 0, 1.0], 0.5) == 0.25
    assert discounted_return([], 0.9) == 0.0
    recs = [TransitionRecord(0, 1, 0.0, 1), TransitionRecord(1, 1, 2.0, 2)]
    assert discounted_return(recs, 0.5) == 1.0


def test_discounted_return_of_shortest_frozen_lake_path():
    env = make_env("frozen_lake_4x4", 1.0)
    assert optimal_deterministic_return(env) == pytest.approx(0.95**5)
    assert discounted_return([0.0] * 5 + [1.0], 0.95) == pytest.approx(0.95**5)


rewards = st.lists(st.floats(-10, 10, allow_nan=False), max_size=30)


@given(rewards, rewards, st.floats(-3, 3), st.floats(0.0, 0.99))
def test_discounted_return_is_linear(a, b, k, gamma):
    n = min(len(a), len(b))
    a, b = a[:n], b[:n]
    combo = [k * x + y for x, y in zip(a, b)]
    expect = k * discounted_return(a, gamma) + discounted_return(b, gamma)
    assert discounted_return(combo, gamma) == pytest.approx(expect, abs=1e-6)


@given(st.lists(st.floats(0, 10, allow_nan=False), max_size=30), st.floats(0.0, 0.98), st.floats(0.0, 0.98))
def test_discounted_return_monotone_in_gamma_for_nonnegative_rewards(r, g1, g2):
    lo, hi = sorted((g1, g2))
    assert discounted_return(r, lo) <= discounted_return(r, hi) + 1e-9


def test_snapshot_validation():
    P = np.zeros((2, 1, 2))
    P[:, 0, 0] = 1.0
    R = np.zeros_like(P)
    with pytest.raises(ValueError):
        MdpSnapshot(P * 0.5, R, np.zeros(2, bool), 0.9)
    with pytest.raises(ValueError):
        MdpSnapshot(P, R, np.zeros(2, bool), 1.0)
    R2 = R.copy()
    R2[0, 0, 0] = np.inf
    with pytest.raises(ValueError):
        MdpSnapshot(P, R2, np.zeros(2, bool), 0.9)
    mdp = MdpSnapshot(P, R, np.zeros(2, bool), 0.9)
    with pytest.raises(ValueError):
        mdp.transitions[0, 0, 0] = 0.5


def test_schedule_switches_at_change_times():
    a = build_mdp(make_env("frozen_lake_4x4", 0.7))
    b = build_mdp(make_env("frozen_lake_4x4", 0.9))
    sched = NonStationarySchedule([a, b], [10])
    assert sched.snapshot_at(9) is a and sched.snapshot_at(10) is b
    assert sched.change_signal(10) and not sched.change_signal(11)
    with pytest.raises(ValueError):
        NonStationarySchedule([a, b], [0])
    with pytest.raises(ValueError):
        NonStationarySchedule([a, b, a], [5, 5])
    cliff = build_mdp(make_env("cliff_walking", 0.7))
    with pytest.raises(ValueError):
        NonStationarySchedule([a, cliff], [3])


def test_pessimistic_trivial_cases():
    single = make_mdp(1, 1, {})
    for h in (1, 5, 20):
        assert pessimistic_value_iteration(single, h)[0] == 0.0
    chain = make_mdp(2, 1, {(0, 0): [(1, 1.0, 1.0)]}, terminal=(1,), gamma=0.9)
    assert pessimistic_value_iteration(chain, 2)[0] == pytest.approx(1.0)
    # reward on entering the goal is collected on the first step, so the value is 1
    chain2 = make_mdp(3, 1, {(0, 0): [(1, 1.0, 0.0)], (1, 0): [(2, 1.0, 1.0)]}, terminal=(2,), gamma=0.9)
    assert pessimistic_value_iteration(chain2, 2)[0] == pytest.approx(0.9)
    assert exact_value_iteration(chain2)[0] == pytest.approx(0.9)
    with pytest.raises(ValueError):
        pessimistic_value_iteration(single, 0)


def test_exact_value_iteration_expectation_at_zero_discount():
    mdp = make_mdp(3, 1, {(0, 0): [(1, 0.5, 0.0), (2, 0.5, 1.0)]}, terminal=(1, 2), gamma=0.0)
    assert exact_value_iteration(mdp)[0] == pytest.approx(0.5)


def _enumerate_pessimistic(mdp, s, h):
    """Worst case over every one-hot successor choice, by explicit recursion."""
    if h == 0 or mdp.terminal[s]:
        return 0.0
    best = -np.inf
    for a in range(mdp.n_actions):
        worst = min(mdp.rewards[s, a, j] + mdp.gamma * _enumerate_pessimistic(mdp, j, h - 1)
                    for j in np.flatnonzero(mdp.transitions[s, a]))
        best = max(best, worst)
    return best


def test_pessimistic_matches_enumeration_on_risky_safe(risky_safe_mdp):
    for h in (1, 2, 3, 4):
        V = pessimistic_value_iteration(risky_safe_mdp, h)
        for s in range(5):
            assert V[s] == pytest.approx(_enumerate_pessimistic(risky_safe_mdp, s, h))
    Q = pessimistic_q_values(risky_safe_mdp, 10)
    assert Q[0] == pytest.approx([0.45, 0.405])
    assert exact_q_values(risky_safe_mdp)[0] == pytest.approx([0.45, 0.6525])


def test_exact_values_match_frozen_golden_table():
    for p in ("0.7", "1"):
        mdp = build_mdp(make_env("frozen_lake_4x4", float(p)), GOLDEN["gamma"])
        np.testing.assert_allclose(exact_value_iteration(mdp), GOLDEN["values"][p]["V"], atol=1e-8)
        np.testing.assert_allclose(exact_q_values(mdp), GOLDEN["values"][p]["Q"], atol=1e-8)


@st.composite
def random_mdps(draw):
    n = draw(st.integers(2, 5))
    A = draw(st.integers(1, 3))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    mask = rng.random((n, A, n)) < 0.5
    mask[np.arange(n), :, rng.integers(n, size=n)] = True
    P = np.where(mask, rng.random((n, A, n)) + 0.05, 0.0)
    P /= P.sum(axis=2, keepdims=True)
    R = rng.normal(size=(n, A, n))
    term = rng.random(n) < 0.3
    P[term] = 0.0
    R[term] = 0.0
    for s in np.flatnonzero(term):
        P[s, :, s] = 1.0
    return MdpSnapshot(P, R, term, float(draw(st.floats(0.0, 0.95))))


@settings(max_examples=60, deadline=None)
@given(random_mdps())
def test_pessimistic_is_a_lower_bound(mdp):
    assert np.all(pessimistic_value_iteration(mdp, 400) <= exact_value_iteration(mdp) + 1e-9)


@settings(max_examples=40, deadline=None)
@given(random_mdps())
def test_deterministic_mdps_make_both_oracles_agree(mdp):
    idx = mdp.transitions.argmax(axis=2)
    P = np.zeros_like(mdp.transitions)
    np.put_along_axis(P, idx[..., None], 1.0, axis=2)
    det = MdpSnapshot(P, mdp.rewards, mdp.terminal, mdp.gamma)
    np.testing.assert_allclose(pessimistic_value_iteration(det, 2000), exact_value_iteration(det), atol=1e-9)


def test_successor_table_round_trip(risky_safe_mdp):
    t = SuccessorTable.from_mdp(risky_safe_mdp)
    assert t.succ.shape == (5, 2, 2)
    assert list(t.succ[2, 0]) == [3, 4] and list(t.succ[0, 0]) == [1, -1]
    np.testing.assert_allclose(t.expand(t.compact(risky_safe_mdp.transitions)), risky_safe_mdp.transitions)
    assert t.same_structure(SuccessorTable.from_mdp(risky_safe()))
