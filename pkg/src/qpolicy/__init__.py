"""Quantum policy evaluation and iteration on a state-vector simulator.

Modules:

- :mod:`qpolicy.statevec` -- dense state-vector simulator
- :mod:`qpolicy.qmdp` -- MDPs, their quantum realization and classical oracles
- :mod:`qpolicy.ae` -- policy evaluation by amplitude (phase) estimation
- :mod:`qpolicy.qpi` -- Grover search over policies and policy iteration
- :mod:`qpolicy.baselines` -- Monte-Carlo evaluation and QPE-vs-MC comparison
- :mod:`qpolicy.cli` -- experiment runner
"""

__version__ = "0.1.0"
