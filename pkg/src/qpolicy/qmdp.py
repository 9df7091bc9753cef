"""Quantum realization of finite-horizon MDPs.

The trajectory register holds ``s0, (a1, r1, s1), ..., (aH, rH, sH)``, followed
by the return register ``g`` and one ancilla ``anc``. States, actions and
reward values are stored by index in binary; a set of size one takes no qubits.

All prepared amplitudes are real and non-negative (``sqrt(p)``).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .statevec import (
    ATOL,
    Circuit,
    Gate,
    PermutationGate,
    Register,
    RegisterLayout,
    embed_isometry,
    pauli_x,
    ry,
)

ENUMERATION_BUDGET = 10**6


def num_bits(n: int) -> int:
    """Qubits needed to index ``n`` items."""
    return max(0, math.ceil(math.log2(n))) if n > 1 else 0


class EncodingError(ValueError):
    """A return does not fit the configured fixed-point register."""


# ---------------------------------------------------------------------------
# Problem description
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Mdp:
    """Finite MDP with known dynamics ``dynamics[s, a, r, s'] = p(r, s' | s, a)``.

    ``rewards[r]`` is the real value of reward index ``r``.
    """

    dynamics: np.ndarray
    rewards: tuple[float, ...]
    gamma: float = 1.0
    horizon: int = 1
    initial_state: int = 0

    def __post_init__(self):
        p = np.asarray(self.dynamics, dtype=np.float64)
        object.__setattr__(self, "dynamics", p)
        object.__setattr__(self, "rewards", tuple(float(r) for r in self.rewards))
        if p.ndim != 4 or p.shape[0] != p.shape[3]:
            raise ValueError(f"dynamics must have shape (S, A, R, S), got {p.shape}")
        if p.shape[2] != len(self.rewards):
            raise ValueError("dynamics reward axis does not match the reward list")
        if np.any(p < 0):
            raise ValueError("dynamics contain negative probabilities")
        sums = p.sum(axis=(2, 3))
        if np.max(np.abs(sums - 1.0)) > ATOL:
            raise ValueError("p(r, s'|s, a) does not sum to 1 for some (s, a)")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not 0 <= self.initial_state < p.shape[0]:
            raise ValueError("initial_state out of range")

    @property
    def n_states(self) -> int:
        return self.dynamics.shape[0]

    @property
    def n_actions(self) -> int:
        return self.dynamics.shape[1]

    @property
    def n_rewards(self) -> int:
        return len(self.rewards)

    @property
    def state_bits(self) -> int:
        return num_bits(self.n_states)

    @property
    def action_bits(self) -> int:
        return num_bits(self.n_actions)

    @property
    def reward_bits(self) -> int:
        return num_bits(self.n_rewards)

    def with_(self, **changes) -> Mdp:
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Policy:
    """Stochastic policy table ``table[s, a] = pi(a | s)``."""

    table: np.ndarray

    def __post_init__(self):
        t = np.atleast_2d(np.asarray(self.table, dtype=np.float64))
        object.__setattr__(self, "table", t)
        if np.any(t < 0) or np.max(np.abs(t.sum(axis=1) - 1.0)) > ATOL:
            raise ValueError("policy rows must be probability vectors")

    def check(self, mdp: Mdp) -> None:
        if self.table.shape != (mdp.n_states, mdp.n_actions):
            raise ValueError(
                f"policy shape {self.table.shape} does not match MDP "
                f"({mdp.n_states} states, {mdp.n_actions} actions)"
            )

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> Policy:
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def bandit(cls, left: float) -> Policy:
        """Two-armed bandit policy choosing the left arm with probability ``left``."""
        left = float(left)
        return cls(np.array([[left, 1.0 - left]]))


@dataclass(frozen=True)
class TwoArmedBandit:
    """One state, actions (left, right), rewards (0, 1).

    ``p0_left`` and ``p0_right`` are the probabilities of reward 0.
    """

    p0_left: float
    p0_right: float

    def __post_init__(self):
        for p in (self.p0_left, self.p0_right):
            if not 0.0 <= p <= 1.0:
                raise ValueError("bandit probabilities must lie in [0, 1]")

    def to_mdp(self, horizon: int = 1, gamma: float = 1.0) -> Mdp:
        p = np.zeros((1, 2, 2, 1))
        p[0, 0, :, 0] = [self.p0_left, 1.0 - self.p0_left]
        p[0, 1, :, 0] = [self.p0_right, 1.0 - self.p0_right]
        return Mdp(p, (0.0, 1.0), gamma=gamma, horizon=horizon)

    def optimal_value(self, horizon: int = 1, gamma: float = 1.0) -> float:
        best = max(1.0 - self.p0_left, 1.0 - self.p0_right)
        return best * sum(gamma**h for h in range(horizon))


@dataclass(frozen=True)
class ReturnEncoding:
    """Unsigned fixed-point return register with bounds for the value rescaling.

    Code ``c`` stands for ``offset + c / 2**frac_bits``. Discounted sums that are
    not exactly representable are truncated toward ``offset`` so each stored
    return is low by less than ``2**-frac_bits``.
    """

    int_bits: int
    frac_bits: int
    g: float
    g_bar: float
    offset: float = 0.0

    def __post_init__(self):
        if self.int_bits < 0 or self.frac_bits < 0 or self.width < 1:
            raise ValueError("return register needs at least one qubit")
        if not self.g_bar > self.g:
            raise ValueError("upper return bound must exceed the lower bound")

    @property
    def width(self) -> int:
        return self.int_bits + self.frac_bits

    @property
    def truncation_error(self) -> float:
        return 2.0**-self.frac_bits if self.frac_bits else 0.0

    def code(self, value: float) -> int:
        scaled = (value - self.offset) * 2**self.frac_bits
        c = math.floor(scaled + 1e-9)
        if c < 0 or c >= 2**self.width:
            raise EncodingError(f"return {value} does not fit {self.width} bits "
                                f"({self.int_bits} integer, {self.frac_bits} fractional)")
        return c

    def value(self, code: int) -> float:
        return self.offset + code / 2**self.frac_bits

    def phi(self, value):
        """Affine map of returns onto [0, 1]."""
        return (np.asarray(value, dtype=np.float64) - self.g) / (self.g_bar - self.g)

    def phi_inverse(self, mu):
        return self.g + (self.g_bar - self.g) * np.asarray(mu, dtype=np.float64)

    @classmethod
    def for_mdp(cls, mdp: Mdp, frac_bits: int | None = None, g: float | None = None,
                g_bar: float | None = None, max_frac_bits: int = 10) -> ReturnEncoding:
        """Smallest register holding every return of ``mdp``.

        Default bounds are the smallest and largest discounted reward sums; a
        degenerate range is widened to ``[g, g + 1]``.
        """
        returns = sorted(set(all_returns(mdp)))
        lo, hi = returns[0], returns[-1]
        offset = min(0.0, lo)
        if frac_bits is None:
            frac_bits = max_frac_bits
            for f in range(max_frac_bits + 1):
                if all(abs((r - offset) * 2**f - round((r - offset) * 2**f)) < 1e-9 for r in returns):
                    frac_bits = f
                    break
        top = math.floor((hi - offset) + 1e-9)
        int_bits = max(1, math.ceil(math.log2(top + 1))) if top > 0 else (0 if frac_bits else 1)
        g = lo if g is None else g
        g_bar = hi if g_bar is None else g_bar
        if g_bar <= g:
            g_bar = g + 1.0
        return cls(int_bits, frac_bits, float(g), float(g_bar), offset)


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    return float(sum(gamma**h * r for h, r in enumerate(rewards)))


def all_returns(mdp: Mdp) -> list[float]:
    """Return of every reward string of length H (reachable or not)."""
    return [discounted_return(rs, mdp.gamma)
            for rs in itertools.product(mdp.rewards, repeat=mdp.horizon)]


# ---------------------------------------------------------------------------
# Classical oracles
# ---------------------------------------------------------------------------


def enumerate_trajectories(mdp: Mdp, policy: Policy,
                           budget: int = ENUMERATION_BUDGET) -> Iterator[tuple[tuple, float]]:
    """Yield ``((a1, r1, s1, ..., aH, rH, sH), probability)`` for nonzero-probability paths."""
    policy.check(mdp)
    branching = mdp.n_actions * mdp.n_rewards * mdp.n_states
    if branching**mdp.horizon > budget:
        raise ValueError(f"{branching}**{mdp.horizon} trajectories exceed the enumeration budget {budget}")

    def rec(s, h, prefix, prob):
        if h == mdp.horizon:
            yield prefix, prob
            return
        for a in range(mdp.n_actions):
            pa = policy.table[s, a]
            if pa == 0:
                continue
            for r in range(mdp.n_rewards):
                for s2 in range(mdp.n_states):
                    p = mdp.dynamics[s, a, r, s2]
                    if p == 0:
                        continue
                    yield from rec(s2, h + 1, prefix + (a, r, s2), prob * pa * p)

    yield from rec(mdp.initial_state, 0, (), 1.0)


def trajectory_return(mdp: Mdp, trajectory: tuple) -> float:
    return discounted_return([mdp.rewards[r] for r in trajectory[1::3]], mdp.gamma)


def exact_value(mdp: Mdp, policy: Policy, budget: int = ENUMERATION_BUDGET) -> float:
    """Expected discounted return from the initial state, by full enumeration."""
    return float(sum(p * trajectory_return(mdp, tr) for tr, p in enumerate_trajectories(mdp, policy, budget)))


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


def trajectory_layout(mdp: Mdp, encoding: ReturnEncoding | None = None,
                      ancilla: bool = True) -> RegisterLayout:
    regs = [Register("s0", mdp.state_bits, "state")]
    for h in range(1, mdp.horizon + 1):
        regs += [
            Register(f"a{h}", mdp.action_bits, "action"),
            Register(f"r{h}", mdp.reward_bits, "reward"),
            Register(f"s{h}", mdp.state_bits, "state"),
        ]
    if encoding is not None:
        regs.append(Register("g", encoding.width, "return"))
    if ancilla:
        regs.append(Register("anc", 1, "ancilla"))
    return RegisterLayout(regs)


def build_policy_operator(mdp: Mdp, policy: Policy) -> Gate:
    """Unitary on (state, action) qubits with ``|s>|0> -> sum_a sqrt(pi(a|s)) |s>|a>``."""
    policy.check(mdp)
    sb, ab = mdp.state_bits, mdp.action_bits
    dim = 2 ** (sb + ab)
    inputs, outputs = [], []
    for s in range(mdp.n_states):
        col = np.zeros(dim, dtype=np.complex128)
        for a in range(mdp.n_actions):
            col[(s << ab) | a] = math.sqrt(policy.table[s, a])
        inputs.append(s << ab)
        outputs.append(col)
    return Gate(embed_isometry(inputs, outputs, dim), range(sb + ab), name="PI")


def build_environment_operator(mdp: Mdp) -> Gate:
    """Unitary on (s, a, r, s') qubits preparing ``sum sqrt(p(r, s'|s, a)) |r>|s'>``."""
    sb, ab, rb = mdp.state_bits, mdp.action_bits, mdp.reward_bits
    low = rb + sb
    dim = 2 ** (sb + ab + low)
    inputs, outputs = [], []
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            base = ((s << ab) | a) << low
            col = np.zeros(dim, dtype=np.complex128)
            for r in range(mdp.n_rewards):
                for s2 in range(mdp.n_states):
                    col[base | (r << sb) | s2] = math.sqrt(mdp.dynamics[s, a, r, s2])
            inputs.append(base)
            outputs.append(col)
    return Gate(embed_isometry(inputs, outputs, dim), range(sb + ab + low), name="E")


def step_operator(mdp: Mdp, policy: Policy) -> Gate:
    """``E @ (PI x id)`` on (s, a, r, s') qubits."""
    pi = build_policy_operator(mdp, policy)
    env = build_environment_operator(mdp)
    rest = 2 ** (mdp.reward_bits + mdp.state_bits)
    m = env.matrix @ np.kron(pi.matrix, np.eye(rest))
    return Gate(m, env.targets, name="S")


def initial_state_preparation(mdp: Mdp, layout: RegisterLayout) -> list[Gate]:
    qs = layout.qubits("s0")
    n = len(qs)
    return [pauli_x(q) for i, q in enumerate(qs) if (mdp.initial_state >> (n - 1 - i)) & 1]


def mdp_operator(mdp: Mdp, policy: Policy, layout: RegisterLayout | None = None) -> Circuit:
    """H local steps; maps ``|s0>|0...0>`` to the qsample of length-H trajectories."""
    layout = layout or trajectory_layout(mdp, ancilla=False)
    pi = build_policy_operator(mdp, policy)
    env = build_environment_operator(mdp)
    circ = Circuit(layout)
    for h in range(1, mdp.horizon + 1):
        prev = f"s{h - 1}"
        circ.append(pi.on(layout.qubits(prev, f"a{h}")))
        circ.append(env.on(layout.qubits(prev, f"a{h}", f"r{h}", f"s{h}")))
    return circ


def return_operator(mdp: Mdp, encoding: ReturnEncoding) -> PermutationGate:
    """Reversible adder on (r1, ..., rH, g): ``|r>|y> -> |r>|y + code(G(r)) mod 2^w>``.

    Padding reward indices (beyond the reward list) leave ``g`` untouched.
    """
    rb, w, H = mdp.reward_bits, encoding.width, mdp.horizon
    size = 2 ** (rb * H)
    perm = np.empty(size * 2**w, dtype=np.int64)
    ys = np.arange(2**w)
    for idx in range(size):
        rs = [(idx >> (rb * (H - 1 - h))) & (2**rb - 1) for h in range(H)] if rb else [0] * H
        if all(r < mdp.n_rewards for r in rs):
            shift = encoding.code(discounted_return([mdp.rewards[r] for r in rs], mdp.gamma))
        else:
            shift = 0
        perm[idx * 2**w + ys] = idx * 2**w + (ys + shift) % 2**w
    return PermutationGate(perm, range(rb * H + w), name="G")


def phi_operator(encoding: ReturnEncoding, achievable: Sequence[float] | None = None) -> Gate:
    """Rotate the ancilla so that ``P(anc = 1 | g = x) = phi(value(x))``.

    ``achievable`` lists returns the MDP can produce; each must lie in
    ``[g, g_bar]``. Codes outside the bounds that are not achievable have
    ``phi`` clipped to [0, 1].
    """
    if achievable is not None:
        bad = [v for v in achievable if not encoding.g - 1e-12 <= v <= encoding.g_bar + 1e-12]
        if bad:
            raise ValueError(f"returns {sorted(set(bad))} fall outside [{encoding.g}, {encoding.g_bar}]")
    w = encoding.width
    m = np.zeros((2 ** (w + 1),) * 2, dtype=np.complex128)
    for c in range(2**w):
        mu = float(np.clip(encoding.phi(encoding.value(c)), 0.0, 1.0))
        angle = 2 * math.asin(math.sqrt(mu))
        m[2 * c:2 * c + 2, 2 * c:2 * c + 2] = ry(angle).matrix
    return Gate(m, range(w + 1), name="PHI")


def a_qpe(mdp: Mdp, policy: Policy, encoding: ReturnEncoding | None = None,
          layout: RegisterLayout | None = None) -> Circuit:
    """State preparation ``Phi . G . M`` from the all-zero state (including ``s0``)."""
    encoding = encoding or ReturnEncoding.for_mdp(mdp)
    layout = layout or trajectory_layout(mdp, encoding)
    circ = Circuit(layout, initial_state_preparation(mdp, layout))
    circ.extend(mdp_operator(mdp, policy, layout).gates)
    rewards = [f"r{h}" for h in range(1, mdp.horizon + 1)]
    circ.append(return_operator(mdp, encoding).on(layout.qubits(*rewards, "g")))
    circ.append(phi_operator(encoding, all_returns(mdp)).on(layout.qubits("g", "anc")))
    return circ


def bandit_step_circuit(bandit: TwoArmedBandit, policy_left_prob: float) -> Circuit:
    """Step operator of the two-armed bandit as three Y rotations.

    One rotation on the action qubit, then a reward rotation for each arm
    controlled on the action value.
    """
    if not 0.0 <= policy_left_prob <= 1.0:
        raise ValueError("policy probability must lie in [0, 1]")
    layout = RegisterLayout([Register("a", 1, "action"), Register("r", 1, "reward")])
    a, r = layout.qubits("a", "r")
    theta_pi = 2 * math.acos(math.sqrt(policy_left_prob))
    theta_left = 2 * math.acos(math.sqrt(bandit.p0_left))
    theta_right = 2 * math.acos(math.sqrt(bandit.p0_right))
    return Circuit(layout, [
        ry(theta_pi, a),
        ry(theta_left, r, controls=(a,), control_values=(0,)),
        ry(theta_right, r, controls=(a,), control_values=(1,)),
    ])


# ---------------------------------------------------------------------------
# JSON problem files
# ---------------------------------------------------------------------------


def problem_from_dict(d: dict) -> Mdp | TwoArmedBandit:
    """Build a problem from its JSON form (see README for the schema)."""
    d = dict(d)
    kind = d.pop("kind", "mdp")
    if kind == "bandit":
        # horizon and discount are experiment parameters for a bandit
        extra = set(d) - {"p0_left", "p0_right"}
        if extra:
            raise ValueError(f"unknown bandit fields: {sorted(extra)}")
        return TwoArmedBandit(float(d["p0_left"]), float(d["p0_right"]))
    if kind != "mdp":
        raise ValueError(f"unknown problem kind {kind!r}")
    allowed = {"dynamics", "rewards", "gamma", "horizon", "initial_state"}
    extra = set(d) - allowed
    if extra:
        raise ValueError(f"unknown mdp fields: {sorted(extra)}")
    return Mdp(np.asarray(d["dynamics"], dtype=np.float64), tuple(d["rewards"]),
               gamma=float(d.get("gamma", 1.0)), horizon=int(d.get("horizon", 1)),
               initial_state=int(d.get("initial_state", 0)))


def load_problem(path: str | Path) -> Mdp | TwoArmedBandit:
    return problem_from_dict(json.loads(Path(path).read_text()))
