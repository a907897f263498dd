import numpy as np
import pytest

from adamcts.mdp import MdpSnapshot


def make_mdp(n_states, n_actions, edges, terminal=(), gamma=0.9, name="toy"):
    """Build a snapshot from ``{(s, a): [(s_next, prob, reward), ...]}``; missing pairs self-loop."""
    P = np.zeros((n_states, n_actions, n_states))
    R = np.zeros_like(P)
    term = np.zeros(n_states, dtype=bool)
    term[list(terminal)] = True
    for s in range(n_states):
        for a in range(n_actions):
            for s2, prob, r in edges.get((s, a), [(s, 1.0, 0.0)]):
                P[s, a, s2] += prob
                R[s, a, s2] = r
    return MdpSnapshot(P, R, term, gamma, name=name)


def risky_safe(gamma=0.9):
    """Five states: a safe detour worth 0.5 and a risky branch that pays more on average.

    0 start, 1 safe cell, 2 risky cell, 3 goal, 4 hole. Action 0 at the start goes
    safe, action 1 goes risky. At the risky cell, action 0 gambles (0.8 goal, 0.2
    hole) and action 1 either finishes (0.5) or falls back to the safe cell.
    """
    edges = {
        (0, 0): [(1, 1.0, 0.0)],
        (0, 1): [(2, 1.0, 0.0)],
        (1, 0): [(3, 1.0, 0.5)],
        (1, 1): [(3, 1.0, 0.4)],
        (2, 0): [(3, 0.8, 1.0), (4, 0.2, -1.0)],
        (2, 1): [(3, 0.5, 1.0), (1, 0.5, 0.0)],
    }
    return make_mdp(5, 2, edges, terminal=(3, 4), gamma=gamma, name="risky_safe")


def two_arm_bandit(gamma=0.9):
    """Arm 0 pays 1, arm 1 pays 0, both end the episode."""
    return make_mdp(3, 2, {(0, 0): [(1, 1.0, 1.0)], (0, 1): [(2, 1.0, 0.0)]}, terminal=(1, 2), gamma=gamma,
                    name="bandit")


def random_bandit(rng, n_arms=3, gamma=0.9):
    """One decision, each arm a random two-outcome lottery over four terminal payoffs."""
    payoffs = [1.0, 0.5, 0.0, -1.0]
    edges = {}
    for a in range(n_arms):
        outs = rng.choice(4, size=2, replace=False)
        q = float(rng.uniform(0.2, 0.8))
        edges[(0, a)] = [(1 + int(outs[0]), q, payoffs[outs[0]]), (1 + int(outs[1]), 1 - q, payoffs[outs[1]])]
    return make_mdp(5, n_arms, edges, terminal=(1, 2, 3, 4), gamma=gamma, name="lottery")


@pytest.fixture
def risky_safe_mdp():
    return risky_safe()


@pytest.fixture
def bandit():
    return two_arm_bandit()


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
