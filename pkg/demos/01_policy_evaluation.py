"""Evaluate one bandit policy by phase estimation and show the output distribution.

The bandit pays reward 1 with probability 0.45 (left) or 0.35 (right); the
policy picks each arm half the time and plays two rounds, so its value is 0.8.
"""

from qpolicy import ae, qmdp

bandit = qmdp.TwoArmedBandit(p0_left=0.55, p0_right=0.65)
mdp = bandit.to_mdp(horizon=2)
policy = qmdp.Policy.bandit(0.5)
value = qmdp.exact_value(mdp, policy)

config = ae.config_for(epsilon_target=0.025, delta=0.05, g=0.0, g_bar=2.0)
print(f"exact value {value:.3f}; n={config.n}, t={config.t}, epsilon={config.epsilon:.4f}")

dist = ae.qpe_distribution(mdp, policy, config)
decoded = ae.decode_values(config)

# Fold x and 2^t - x together and print the most likely estimates.
by_value: dict[float, float] = {}
for x, p in enumerate(dist.probs):
    by_value[decoded[x]] = by_value.get(decoded[x], 0.0) + p
top = sorted(by_value.items(), key=lambda kv: -kv[1])[:8]
for v, p in sorted(top):
    print(f"  estimate {v:.4f}  probability {p:.4f}  {'#' * int(60 * p)}")

print(f"mass within epsilon of the true value: {ae.mass_within(dist, config, value):.4f}")
