"""Quantum policy improvement and quantum policy iteration.

The default backend works on the joint distribution ``P(pi, x)`` of the search
state. Amplitude amplification only rotates within the span of its marked and
unmarked parts, so ``j`` Grover rotations are sampled exactly by choosing the
class with probability ``sin^2((2j+1) theta_a)`` and then drawing from the
(unchanged) conditional distribution inside that class.

:class:`StatevectorQpi` builds the literal circuits instead and is used to
check the structured backend on small instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import ae, qmdp
from .statevec import (
    Circuit,
    Gate,
    Register,
    StateVector,
    complete_to_unitary,
    global_phase,
    hadamard,
    measure_probabilities,
    new_zero_state,
)


@dataclass(frozen=True)
class PolicySet:
    policies: tuple[qmdp.Policy, ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(self.policies))
        if len(self.policies) < 1:
            raise ValueError("policy set is empty")

    def __len__(self):
        return len(self.policies)

    def __getitem__(self, i: int) -> qmdp.Policy:
        return self.policies[i]

    @classmethod
    def bandit(cls, n: int) -> PolicySet:
        """``N`` bandit policies with ``pi(left) = (k - 1) / (N - 1)``, ``k = 1 .. N``.

        Index ``k - 1`` holds ``pi^k``: index 0 never pulls the left arm and the
        last index always does.
        """
        if n < 2:
            raise ValueError("need at least two policies")
        lefts = [(k - 1) / (n - 1) for k in range(1, n + 1)]
        return cls(tuple(qmdp.Policy.bandit(p) for p in lefts),
                   tuple(f"pi(left)={p:.6g}" for p in lefts))


@dataclass(frozen=True)
class GroverSearchConfig:
    lam: float = 8 / 7
    patience: int = 30
    max_iterations: int | None = None
    reestimate: bool = False

    def __post_init__(self):
        if not self.lam > 1:
            raise ValueError("lambda must exceed 1")
        if self.patience < 0:
            raise ValueError("patience must be non-negative")

    def iteration_cap(self, n_policies: int) -> int:
        if self.max_iterations is not None:
            return self.max_iterations
        return max(100, math.ceil(10 * (self.patience + 1) * math.sqrt(n_policies)))


# ---------------------------------------------------------------------------
# Structured backend
# ---------------------------------------------------------------------------


class SearchDistribution:
    """Measurement distribution of the QPI search state, ``joint[pi, x]``."""

    def __init__(self, joint: np.ndarray, config: ae.QpeConfig):
        joint = np.asarray(joint, dtype=np.float64)
        if joint.shape[1] != 2**config.t:
            raise ValueError("joint distribution width does not match t")
        self.joint = joint
        self.config = config
        self.decoded = ae.decode_values(config)

    @property
    def n_policies(self) -> int:
        return self.joint.shape[0]

    def policy_distribution(self, index: int) -> np.ndarray:
        row = self.joint[index]
        return row / row.sum()

    def marked(self, threshold: float) -> np.ndarray:
        return ae.marked_outcomes(threshold, self.config)

    def p_good(self, threshold: float) -> float:
        return float(self.joint[:, self.marked(threshold)].sum() / self.joint.sum())

    def amplified(self, threshold: float, rotations: int) -> np.ndarray:
        """Joint distribution after ``rotations`` Grover iterations."""
        mask = self.marked(threshold)
        total = self.joint.sum()
        good = self.joint[:, mask].sum() / total
        p_good = success_probability(good, rotations)
        out = np.zeros_like(self.joint)
        if good > 0:
            out[:, mask] = self.joint[:, mask] / (good * total) * p_good
        if good < 1:
            out[:, ~mask] = self.joint[:, ~mask] / ((1 - good) * total) * (1 - p_good)
        return out


def success_probability(p_good: float, rotations: int) -> float:
    theta = math.asin(math.sqrt(min(max(p_good, 0.0), 1.0)))
    return math.sin((2 * rotations + 1) * theta) ** 2


def _policy_key(policy: qmdp.Policy) -> bytes:
    return policy.table.tobytes()


def build_search_distribution(mdp: qmdp.Mdp, policy_set: PolicySet, config: ae.QpeConfig,
                              encoding: qmdp.ReturnEncoding | None = None) -> SearchDistribution:
    """``P(pi, x) = P_pi(x) / |P|`` from each policy's phase-estimation output.

    Policies with identical tables share one simulation.
    """
    encoding = encoding or config.encoding_for(mdp)
    cache: dict[bytes, np.ndarray] = {}
    rows = []
    for policy in policy_set.policies:
        key = _policy_key(policy)
        if key not in cache:
            cache[key] = ae.qpe_distribution(mdp, policy, config, encoding).probs
        rows.append(cache[key])
    return SearchDistribution(np.array(rows) / len(rows), config)


def grover_amplified_sample(search: SearchDistribution, threshold: float, rotations: int,
                            rng: np.random.Generator) -> tuple[int, int]:
    """Measure ``(pi, x)`` after ``rotations`` Grover iterations marking values above ``threshold``."""
    if rotations < 0:
        raise ValueError("rotations must be non-negative")
    mask = search.marked(threshold)
    x_marginal = search.joint.sum(axis=0)
    total = x_marginal.sum()
    good_mass = x_marginal[mask].sum() / total
    if good_mass <= 0:
        good = False
    elif good_mass >= 1:
        good = True
    else:
        good = bool(rng.random() < success_probability(good_mass, rotations))
    weights = np.where(mask == good, x_marginal, 0.0)
    x = int(rng.choice(weights.size, p=weights / weights.sum()))
    column = search.joint[:, x]
    pi = int(rng.choice(column.size, p=column / column.sum()))
    return pi, x


class QpiStep(NamedTuple):
    policy: int
    x: int
    value: float
    rotations: int
    m: float
    new_m: float
    improved: bool


def exponential_qpi_step(search: SearchDistribution, threshold: float, m: float,
                         search_config: GroverSearchConfig, rng: np.random.Generator) -> QpiStep:
    """One exponential-search step: ``j ~ U{0, ..., ceil(m - 1)}``, then measure."""
    if m < 1:
        raise ValueError("m must be at least 1")
    j = int(rng.integers(0, math.ceil(m - 1) + 1))
    pi, x = grover_amplified_sample(search, threshold, j, rng)
    value = float(search.decoded[x])
    improved = ae.is_improvement(value, threshold, search.config)
    new_m = 1.0 if improved else m * search_config.lam
    return QpiStep(pi, x, value, j, m, new_m, improved)


@dataclass
class IterationRecord:
    k: int
    value: float
    policy: int
    candidate_value: float
    candidate_policy: int
    rotations: int
    m: float
    accepted: bool


@dataclass
class IterationTrace:
    records: list[IterationRecord] = field(default_factory=list)
    patience: int = 0
    t: int = 1

    def __len__(self):
        return len(self.records)

    @property
    def total_rotations(self) -> int:
        return sum(r.rotations for r in self.records)

    @property
    def non_patience_rotations(self) -> int:
        """Rotations excluding the last ``patience`` iterations."""
        keep = len(self.records) - self.patience
        return sum(r.rotations for r in self.records[:max(keep, 0)])

    @property
    def a_qpi_applications(self) -> int:
        # each rotation applies the search-state preparation and its inverse
        return sum(2 * r.rotations + 1 for r in self.records)

    @property
    def qsamples(self) -> int:
        return self.a_qpi_applications * ae.qsample_count(self.t)


@dataclass
class QpiResult:
    policy: int
    value: float
    trace: IterationTrace
    initial_policy: int
    initial_value: float
    complete: bool = True


def quantum_policy_iteration(search: SearchDistribution, initial_policy: int,
                             search_config: GroverSearchConfig, rng: np.random.Generator,
                             initial_value: float | None = None) -> QpiResult:
    """Repeat QPI until ``patience + 1`` consecutive steps fail to improve.

    Without ``initial_value`` the start estimate is one QPE sample of the
    initial policy. A run that reaches the iteration cap is returned with
    ``complete=False``.
    """
    n_pol = search.n_policies
    if not 0 <= initial_policy < n_pol:
        raise ValueError("initial policy not in the policy set")
    if initial_value is None:
        dist = search.policy_distribution(initial_policy)
        x0 = int(rng.choice(dist.size, p=dist))
        initial_value = float(search.decoded[x0])
    trace = IterationTrace(patience=search_config.patience, t=search.config.t)
    cap = search_config.iteration_cap(n_pol)
    policy, value = initial_policy, initial_value
    c, m, k = 0, 1.0, 0
    complete = True
    while c <= search_config.patience:
        if k >= cap:
            complete = False
            break
        k += 1
        step = exponential_qpi_step(search, value, m, search_config, rng)
        if step.improved:
            policy, value, c = step.policy, step.value, 0
            if search_config.reestimate:
                dist = search.policy_distribution(policy)
                value = float(search.decoded[int(rng.choice(dist.size, p=dist))])
        else:
            c += 1
        m = step.new_m
        trace.records.append(IterationRecord(k, value, policy, step.value, step.policy,
                                             step.rotations, step.m, step.improved))
    return QpiResult(policy, value, trace, initial_policy, initial_value, complete)


def run_qpi(mdp: qmdp.Mdp, policy_set: PolicySet, initial_policy: int, qpe_config: ae.QpeConfig,
            search_config: GroverSearchConfig, rng: np.random.Generator,
            encoding: qmdp.ReturnEncoding | None = None) -> QpiResult:
    """Convenience wrapper building the search distribution first."""
    search = build_search_distribution(mdp, policy_set, qpe_config, encoding)
    return quantum_policy_iteration(search, initial_policy, search_config, rng)


def is_epsilon_optimal(mdp: qmdp.Mdp, policy_set: PolicySet, index: int, epsilon: float,
                       values: Sequence[float] | None = None) -> bool:
    if values is None:
        values = [qmdp.exact_value(mdp, p) for p in policy_set.policies]
    return bool(values[index] >= max(values) - epsilon)


# ---------------------------------------------------------------------------
# State-vector backend
# ---------------------------------------------------------------------------


class StatevectorQpi:
    """Literal search-state circuit on ``policy (x) phase (x) system`` qubits.

    Policy register preparation is a Hadamard transform when ``|P|`` is a power
    of two, otherwise a completed uniform isometry. Each policy-controlled QPE
    applies ``Q`` by repetition, so this path shares no phase-estimation
    shortcut with the structured backend.
    """

    def __init__(self, mdp: qmdp.Mdp, policy_set: PolicySet, config: ae.QpeConfig,
                 encoding: qmdp.ReturnEncoding | None = None, max_qubits: int = 16):
        encoding = encoding or config.encoding_for(mdp)
        self.config = config
        n_pol = len(policy_set)
        pbits = max(1, qmdp.num_bits(n_pol))
        system = qmdp.trajectory_layout(mdp, encoding)
        layout = system.extended([Register("policy", pbits, "policy"),
                                  Register("phase", config.t, "phase")], prepend=True)
        if layout.num_qubits > max_qubits:
            from .statevec import ResourceError
            raise ResourceError(f"state-vector QPI needs {layout.num_qubits} qubits, budget {max_qubits}")
        self.layout = layout
        self.n_policies = n_pol
        pol_qs = layout.qubits("policy")

        circ = Circuit(layout)
        if n_pol == 2**pbits:
            circ.extend(hadamard(q) for q in pol_qs)
        else:
            col = np.zeros(2**pbits)
            col[:n_pol] = 1 / math.sqrt(n_pol)
            circ.append(Gate(complete_to_unitary([col], 2**pbits), pol_qs, name="UNIFORM"))
        for i, policy in enumerate(policy_set.policies):
            a = qmdp.a_qpe(mdp, policy, encoding, system)
            q = ae.q_qpe_operator(a)
            qpe = ae.phase_estimation_circuit(a, q, config.t, layout, method="repeat")
            bits = [(i >> (pbits - 1 - b)) & 1 for b in range(pbits)]
            circ.extend(qpe.controlled(pol_qs, bits).gates)
        self.a_qpi = circ
        self.state = new_zero_state(layout).apply(circ)

    def grover_operator(self, threshold: float) -> Circuit:
        """``-A S0 A^dagger O`` with ``O`` the value oracle on the phase register."""
        layout = self.layout
        gates = [ae.value_phase_oracle(threshold, self.config, layout)]
        gates += self.a_qpi.inverse().gates
        gates.append(ae.s0_oracle(layout))
        gates += self.a_qpi.gates
        gates.append(global_phase(-1.0))
        return Circuit(layout, gates)

    def joint(self, state: StateVector | None = None) -> np.ndarray:
        state = state or self.state
        probs = measure_probabilities(state, ["policy", "phase"]).probs
        return probs.reshape(-1, 2**self.config.t)[: self.n_policies]

    def search_distribution(self) -> SearchDistribution:
        return SearchDistribution(self.joint(), self.config)

    def amplified(self, threshold: float, rotations: int) -> np.ndarray:
        q = self.grover_operator(threshold)
        state = self.state.copy()
        for _ in range(rotations):
            state.apply(q)
        return self.joint(state)


def statevector_qpi_backend(mdp: qmdp.Mdp, policy_set: PolicySet, config: ae.QpeConfig,
                            encoding: qmdp.ReturnEncoding | None = None) -> StatevectorQpi:
    return StatevectorQpi(mdp, policy_set, config, encoding)
