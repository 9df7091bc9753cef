"""Policy evaluation by amplitude estimation.

The value of a policy is encoded as ``P(anc = 1)`` after :func:`qpolicy.qmdp.a_qpe`;
phase estimation on the Grover operator :func:`q_qpe_operator` reads it out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import qmdp
from .statevec import (
    Circuit,
    DiagonalGate,
    Gate,
    OutcomeDistribution,
    Register,
    RegisterLayout,
    check_budget,
    global_phase,
    hadamard,
    inverse_qft,
    measure_probabilities,
    new_zero_state,
    pauli_z,
    sample_and_collapse,
)

TIE_TOL = 1e-12


@dataclass(frozen=True)
class QpeConfig:
    """Phase-register size and value bounds for one QPE run.

    ``t`` defaults to ``n + ceil(log2(1/(2 delta) + 1/2))``, or to ``n`` in
    median mode. An explicit ``t`` overrides both.
    """

    n: int
    delta: float
    g: float
    g_bar: float
    median_mode: bool = False
    t: int | None = field(default=None)

    def __post_init__(self):
        if self.n < 1:
            object.__setattr__(self, "n", 1)
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.delta > 1:
            object.__setattr__(self, "delta", 1.0)
        if not self.g_bar > self.g:
            raise ValueError("upper return bound must exceed the lower bound")
        if self.t is None:
            t = self.n if self.median_mode else self.n + extra_qubits(self.delta)
            object.__setattr__(self, "t", t)
        elif self.t < 1:
            raise ValueError("t must be at least 1")

    @property
    def epsilon(self) -> float:
        return epsilon_for(self.n, self.g, self.g_bar)

    @property
    def span(self) -> float:
        return self.g_bar - self.g

    @property
    def qsamples(self) -> int:
        return qsample_count(self.t)

    def encoding_for(self, mdp: qmdp.Mdp, frac_bits: int | None = None) -> qmdp.ReturnEncoding:
        return qmdp.ReturnEncoding.for_mdp(mdp, frac_bits=frac_bits, g=self.g, g_bar=self.g_bar)


def extra_qubits(delta: float) -> int:
    return math.ceil(math.log2(1.0 / (2.0 * delta) + 0.5))


def epsilon_for(n: int, g: float, g_bar: float) -> float:
    """Guaranteed value error for ``n`` precision bits."""
    return (g_bar - g) * (math.pi / 2 ** (n + 1) + math.pi**2 / 2 ** (2 * n + 2))


def config_for(epsilon_target: float, delta: float, g: float, g_bar: float,
               median_mode: bool = False) -> QpeConfig:
    """Smallest ``n`` (at least 1) whose error bound meets ``epsilon_target``."""
    if not epsilon_target > 0:
        raise ValueError("epsilon must be positive")
    n = 1
    while epsilon_for(n, g, g_bar) > epsilon_target:
        n += 1
    return QpeConfig(n, delta, g, g_bar, median_mode=median_mode)


def qsample_count(t: int) -> int:
    """Applications of the state preparation or its inverse in one phase estimation."""
    return 2 ** (t + 1) - 1


def sin_squared_bound(mu: float, a: float) -> float:
    """Bound on ``|sin^2(alpha') - sin^2(alpha)|`` when ``|alpha' - alpha| <= a``."""
    return 2 * a * math.sqrt(max(mu * (1 - mu), 0.0)) + a * a


# ---------------------------------------------------------------------------
# Decoding and oracles
# ---------------------------------------------------------------------------


def _fold(x, t: int):
    # x and 2^t - x decode identically; folding keeps them bitwise equal
    x = np.asarray(x)
    return np.minimum(x, 2**t - x)


def decode_value(x: int, config: QpeConfig) -> float:
    if not 0 <= x < 2**config.t:
        raise ValueError(f"outcome {x} outside [0, 2**{config.t})")
    return float(decode_values(config)[x])


def decode_values(config: QpeConfig) -> np.ndarray:
    """Decoded value for every outcome ``x`` of the phase register."""
    x = _fold(np.arange(2**config.t), config.t)
    return config.g + config.span * np.sin(np.pi * x / 2**config.t) ** 2


def marked_outcomes(threshold: float, config: QpeConfig) -> np.ndarray:
    """Outcomes whose decoded value strictly exceeds ``threshold``."""
    return decode_values(config) > threshold + TIE_TOL * config.span


def is_improvement(value: float, threshold: float, config: QpeConfig) -> bool:
    return bool(value > threshold + TIE_TOL * config.span)


def s0_oracle(layout: RegisterLayout) -> Gate:
    """-1 on the all-zero basis state of ``layout``, +1 elsewhere."""
    qs = tuple(range(layout.num_qubits))
    return global_phase(-1.0, qs, (0,) * len(qs))


def value_phase_oracle(threshold: float, config: QpeConfig, layout: RegisterLayout | None = None,
                       register: str = "phase") -> DiagonalGate:
    """-1 on phase outcomes decoding strictly above ``threshold``."""
    if layout is None:
        layout = RegisterLayout([Register(register, config.t, "phase")])
    diag = np.where(marked_outcomes(threshold, config), -1.0, 1.0)
    return DiagonalGate(diag, layout.qubits(register), name="O")


# ---------------------------------------------------------------------------
# Phase estimation
# ---------------------------------------------------------------------------


def q_qpe_operator(a_circuit: Circuit, ancilla: str = "anc") -> Circuit:
    """Grover operator ``-A S0 A^dagger Z_anc`` on the layout of ``a_circuit``."""
    layout = a_circuit.layout
    (anc,) = layout.qubits(ancilla)
    gates = [pauli_z(anc)]
    gates += a_circuit.inverse().gates
    gates.append(s0_oracle(layout))
    gates += a_circuit.gates
    gates.append(global_phase(-1.0))
    return Circuit(layout, gates)


def phase_estimation_circuit(a_circuit: Circuit, q_circuit: Circuit, t: int,
                             layout: RegisterLayout | None = None, register: str = "phase",
                             method: str = "power") -> Circuit:
    """Phase-estimation unitary (no measurement) on ``layout``.

    ``layout`` must contain ``register`` with ``t`` qubits and every register
    of the system circuits. ``method="power"`` applies each controlled
    ``Q**(2**k)`` as one dense gate from repeated squaring; ``"repeat"``
    applies the controlled gates of ``Q`` ``2**k`` times.
    """
    if layout is None:
        layout = a_circuit.layout.extended([Register(register, t, "phase")], prepend=True)
    phase_qs = layout.qubits(register)
    if len(phase_qs) != t:
        raise ValueError("phase register size does not match t")
    a_on = a_circuit.on(layout)
    circ = Circuit(layout, a_on.gates)
    circ.extend(hadamard(q) for q in phase_qs)
    if method == "power":
        sys_qs = layout.qubits(*q_circuit.layout.names)
        power = q_circuit.to_matrix()
        for k in range(t):
            ctrl = phase_qs[t - 1 - k]
            circ.append(Gate(power, sys_qs, (ctrl,), name=f"Q^{2**k}", check=False))
            if k + 1 < t:
                power = power @ power
    elif method == "repeat":
        q_on = q_circuit.on(layout)
        for k in range(t):
            ctrl = phase_qs[t - 1 - k]
            controlled = q_on.controlled((ctrl,)).gates
            for _ in range(2**k):
                circ.extend(controlled)
    else:
        raise ValueError(f"unknown method {method!r}")
    circ.extend(inverse_qft(layout, register))
    return circ


def phase_estimation(a_circuit: Circuit, q_circuit: Circuit, t: int, method: str = "power",
                     max_qubits: int | None = None) -> OutcomeDistribution:
    """Exact distribution of the measured phase register."""
    layout = a_circuit.layout.extended([Register("phase", t, "phase")], prepend=True)
    check_budget(layout.num_qubits, max_qubits)
    circ = phase_estimation_circuit(a_circuit, q_circuit, t, layout, method=method)
    state = new_zero_state(layout, max_qubits).apply(circ)
    return measure_probabilities(state, ["phase"])


def kernel_distribution(theta: float, t: int) -> OutcomeDistribution:
    """Closed-form phase-estimation output for eigenphases ``+theta`` and ``-theta``.

    Equal-weight mixture of the two Fejer kernels; independent of any circuit.
    """
    N = 2**t
    x = np.arange(N)

    def kernel(y):
        s = np.sin(np.pi * y)
        out = np.ones_like(y)
        nz = np.abs(s) > 1e-14
        out[nz] = np.sin(N * np.pi * y[nz]) ** 2 / (N**2 * s[nz] ** 2)
        return out

    return OutcomeDistribution(0.5 * (kernel(theta - x / N) + kernel(theta + x / N)), t)


def good_probability(a_circuit: Circuit, ancilla: str = "anc") -> float:
    state = new_zero_state(a_circuit.layout).apply(a_circuit)
    return measure_probabilities(state, [ancilla])[1]


# ---------------------------------------------------------------------------
# Policy evaluation
# ---------------------------------------------------------------------------


def qpe_circuits(mdp: qmdp.Mdp, policy: qmdp.Policy, config: QpeConfig,
                 encoding: qmdp.ReturnEncoding | None = None) -> tuple[Circuit, Circuit]:
    encoding = encoding or config.encoding_for(mdp)
    if (encoding.g, encoding.g_bar) != (config.g, config.g_bar):
        raise ValueError("encoding bounds differ from the QPE config bounds")
    a = qmdp.a_qpe(mdp, policy, encoding)
    return a, q_qpe_operator(a)


def qpe_distribution(mdp: qmdp.Mdp, policy: qmdp.Policy, config: QpeConfig,
                     encoding: qmdp.ReturnEncoding | None = None,
                     method: str = "power") -> OutcomeDistribution:
    a, q = qpe_circuits(mdp, policy, config, encoding)
    return phase_estimation(a, q, config.t, method=method)


def qpe_estimate(mdp: qmdp.Mdp, policy: qmdp.Policy, config: QpeConfig, rng: np.random.Generator,
                 encoding: qmdp.ReturnEncoding | None = None,
                 distribution: OutcomeDistribution | None = None,
                 shots: bool = False) -> tuple[float, int]:
    """One QPE run: measured outcome ``x`` and its decoded value.

    By default ``x`` is drawn from the exact output distribution (computed
    once, or passed in). With ``shots=True`` the full circuit is simulated and
    the phase register is measured directly.
    """
    if shots:
        a, q = qpe_circuits(mdp, policy, config, encoding)
        layout = a.layout.extended([Register("phase", config.t, "phase")], prepend=True)
        state = new_zero_state(layout).apply(phase_estimation_circuit(a, q, config.t, layout))
        x, _ = sample_and_collapse(state, ["phase"], rng)
    else:
        if distribution is None:
            distribution = qpe_distribution(mdp, policy, config, encoding)
        x = int(distribution.sample(rng))
    return decode_value(x, config), x


def mass_within(distribution: OutcomeDistribution, config: QpeConfig, value: float,
                epsilon: float | None = None) -> float:
    """Probability that the decoded estimate lies within ``epsilon`` of ``value``."""
    eps = config.epsilon if epsilon is None else epsilon
    ok = np.abs(decode_values(config) - value) <= eps
    return float(distribution.probs[ok].sum())
