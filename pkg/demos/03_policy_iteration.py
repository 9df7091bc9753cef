"""One run of quantum policy iteration on a deterministic bandit.

Left always pays 0 and right always pays 1. The policy set holds 64 policies
with left-arm probabilities 0, 1/63, ..., 1; the run starts from the policy
that always pulls left.
"""

import numpy as np

from qpolicy import ae, qmdp, qpi

mdp = qmdp.TwoArmedBandit(1.0, 0.0).to_mdp(horizon=1)
policies = qpi.PolicySet.bandit(64)
encoding = qmdp.ReturnEncoding.for_mdp(mdp)
config = ae.config_for(0.0125, 0.07, encoding.g, encoding.g_bar)
search = qpi.build_search_distribution(mdp, policies, config, encoding)

start = len(policies) - 1
result = qpi.quantum_policy_iteration(search, start, qpi.GroverSearchConfig(lam=8 / 7, patience=30),
                                      np.random.default_rng(1))

print(f"start: {policies.labels[start]}, estimated value {result.initial_value:.4f}")
for r in result.trace.records:
    flag = "accepted" if r.accepted else ""
    print(f"k={r.k:>3}  v_k={r.value:.4f}  candidate={r.candidate_value:.4f}  j={r.rotations:>2}  "
          f"m={r.m:6.2f}  {flag}")
print(f"result: {policies.labels[result.policy]}, estimate {result.value:.4f}, "
      f"true value {qmdp.exact_value(mdp, policies[result.policy]):.4f}")
print(f"Grover rotations: {result.trace.total_rotations} total, "
      f"{result.trace.non_patience_rotations} before the final patience window")
