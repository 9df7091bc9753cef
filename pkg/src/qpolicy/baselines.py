"""Classical Monte-Carlo policy evaluation and the QPE-vs-MC comparison."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from . import ae, qmdp


@dataclass(frozen=True)
class McConfig:
    sample_count: int
    seed: int | np.random.SeedSequence | None = None

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("sample_count must be at least 1")


def sample_returns(mdp: qmdp.Mdp, policy: qmdp.Policy, count: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Discounted returns of ``count`` independently simulated trajectories."""
    policy.check(mdp)
    n_r, n_s = mdp.n_rewards, mdp.n_states
    rewards = np.asarray(mdp.rewards)
    pol_cdf = np.cumsum(policy.table, axis=1)
    dyn_cdf = np.cumsum(mdp.dynamics.reshape(n_s, mdp.n_actions, n_r * n_s), axis=2)
    states = np.full(count, mdp.initial_state)
    returns = np.zeros(count)
    for h in range(mdp.horizon):
        a = _draw(pol_cdf[states], rng)
        joint = _draw(dyn_cdf[states, a], rng)
        r, states = np.divmod(joint, n_s)
        returns += mdp.gamma**h * rewards[r]
    return returns


def _draw(cdf: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # inverse-CDF sampling, one row per sample; clip guards against cdf[-1] < 1 by rounding
    u = rng.random(cdf.shape[0])[:, None]
    return np.minimum((u >= cdf).sum(axis=1), cdf.shape[1] - 1)


def mc_evaluate(mdp: qmdp.Mdp, policy: qmdp.Policy, config: McConfig) -> float:
    """Mean discounted return over ``config.sample_count`` simulated trajectories."""
    rng = np.random.default_rng(config.seed)
    return float(sample_returns(mdp, policy, config.sample_count, rng).mean())


class ComparisonRow(NamedTuple):
    n: int
    qsamples: int
    qpe_median_err: float
    mc_median_err: float
    epsilon_bound: float


def matched_comparison(mdp: qmdp.Mdp, policy: qmdp.Policy, n_range: Iterable[int],
                       trials: int = 201, seed: int | None = 0, delta: float = 0.05,
                       encoding: qmdp.ReturnEncoding | None = None) -> list[ComparisonRow]:
    """Median absolute errors of QPE (``t = n``) and MC with the same sample budget.

    For each ``n`` and trial, one child seed is split into a QPE stream and an
    MC stream, so both columns are reproducible from ``seed`` alone.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    encoding = encoding or qmdp.ReturnEncoding.for_mdp(mdp)
    truth = qmdp.exact_value(mdp, policy)
    n_values = list(n_range)
    per_n = np.random.SeedSequence(seed).spawn(len(n_values))
    rows = []
    for n, ss in zip(n_values, per_n):
        config = ae.QpeConfig(n, delta, encoding.g, encoding.g_bar, median_mode=True)
        dist = ae.qpe_distribution(mdp, policy, config, encoding)
        decoded = ae.decode_values(config)
        qpe_err, mc_err = [], []
        for child in ss.spawn(trials):
            q_ss, m_ss = child.spawn(2)
            x = dist.sample(np.random.default_rng(q_ss))
            qpe_err.append(abs(decoded[x] - truth))
            mc = mc_evaluate(mdp, policy, McConfig(config.qsamples, m_ss))
            mc_err.append(abs(mc - truth))
        rows.append(ComparisonRow(n, config.qsamples, float(np.median(qpe_err)),
                                  float(np.median(mc_err)), config.epsilon))
    return rows
