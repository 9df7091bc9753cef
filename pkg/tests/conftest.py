import numpy as np
import pytest

from qpolicy import qmdp


@pytest.fixture
def eval_bandit():
    """Bandit used for policy evaluation: reward 0 with probability 0.55 (left) / 0.65 (right)."""
    return qmdp.TwoArmedBandit(0.55, 0.65)


@pytest.fixture
def search_bandit():
    """Deterministic bandit: left always pays 0, right always pays 1."""
    return qmdp.TwoArmedBandit(1.0, 0.0)


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int, n_rewards: int,
               horizon: int, sparse: bool = True) -> qmdp.Mdp:
    p = rng.random((n_states, n_actions, n_rewards, n_states))
    if sparse:
        p[rng.random(p.shape) < 0.3] = 0.0
        # every (s, a) keeps at least one outcome
        p[:, :, 0, 0] += 1e-3
    p /= p.sum(axis=(2, 3), keepdims=True)
    rewards = tuple(np.round(rng.uniform(-1, 2, n_rewards) * 4) / 4)
    gamma = float(rng.choice([1.0, 0.5, 0.75]))
    return qmdp.Mdp(p, rewards, gamma=gamma, horizon=horizon,
                    initial_state=int(rng.integers(n_states)))


def random_policy(rng: np.random.Generator, n_states: int, n_actions: int) -> qmdp.Policy:
    t = rng.random((n_states, n_actions))
    t[rng.random(t.shape) < 0.2] = 0.0
    t[:, 0] += 1e-3
    return qmdp.Policy(t / t.sum(axis=1, keepdims=True))


# Lines recorded by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
