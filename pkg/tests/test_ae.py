import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpolicy import ae, qmdp
from qpolicy import statevec as sv
from qpolicy.statevec import Circuit, Register, RegisterLayout


def one_qubit_a(theta):
    """State preparation with P(anc = 1) = sin^2(pi * theta)."""
    lay = RegisterLayout([Register("anc", 1)])
    return Circuit(lay, [sv.ry(2 * math.pi * theta, 0)])


def circuit_vs_kernel(theta, t, method="power"):
    a = one_qubit_a(theta)
    dist = ae.phase_estimation(a, ae.q_qpe_operator(a), t, method=method)
    return float(np.max(np.abs(dist.probs - ae.kernel_distribution(theta, t).probs)))


class TestConfig:
    def test_reference_parameters(self):
        cfg = ae.config_for(0.025, 0.05, 0.0, 2.0)
        assert (cfg.n, cfg.t) == (7, 11)
        assert cfg.epsilon <= 0.025 < ae.epsilon_for(6, 0.0, 2.0)

    def test_extra_qubits(self):
        assert ae.extra_qubits(0.05) == 4
        assert ae.extra_qubits(0.07) == 3
        assert ae.extra_qubits(0.5) == 1
        assert ae.extra_qubits(1.0) == 0

    def test_median_mode(self):
        assert ae.QpeConfig(5, 0.05, 0, 1, median_mode=True).t == 5

    def test_explicit_t(self):
        assert ae.QpeConfig(5, 0.05, 0, 1, t=9).t == 9

    def test_clamping_and_errors(self):
        assert ae.QpeConfig(0, 0.05, 0, 1).n == 1
        assert ae.QpeConfig(3, 2.0, 0, 1).delta == 1.0
        with pytest.raises(ValueError):
            ae.QpeConfig(3, 0.0, 0, 1)
        with pytest.raises(ValueError):
            ae.QpeConfig(3, 0.1, 1, 1)
        with pytest.raises(ValueError):
            ae.config_for(0.0, 0.1, 0, 1)

    def test_epsilon_formula(self):
        assert ae.epsilon_for(1, 0, 1) == pytest.approx(math.pi / 4 + math.pi**2 / 16)
        assert ae.epsilon_for(3, -1, 1) == pytest.approx(2 * (math.pi / 16 + math.pi**2 / 256))

    def test_qsamples(self):
        assert ae.qsample_count(5) == 63
        assert ae.QpeConfig(7, 0.05, 0, 2).qsamples == 2**12 - 1


class TestDecoding:
    def test_values(self):
        cfg = ae.QpeConfig(3, 0.5, 0.0, 2.0, t=3)
        v = ae.decode_values(cfg)
        assert v[0] == 0.0
        assert v[4] == pytest.approx(2.0)
        assert v[2] == pytest.approx(1.0)

    def test_symmetric_outcomes_bitwise_equal(self):
        cfg = ae.QpeConfig(6, 0.5, -1.0, 3.0, t=6)
        v = ae.decode_values(cfg)
        for x in range(1, 64):
            assert v[x] == v[64 - x]

    def test_decode_value_range(self):
        cfg = ae.QpeConfig(3, 0.5, 0, 1, t=3)
        with pytest.raises(ValueError):
            ae.decode_value(8, cfg)

    def test_marked_outcomes_strict(self):
        # t = 3, [0, 1]: decoded values {0, .146, .5, .854, 1}; threshold 0.5 marks only above
        cfg = ae.QpeConfig(3, 0.5, 0.0, 1.0, t=3)
        marked = ae.marked_outcomes(0.5, cfg)
        assert set(np.flatnonzero(marked)) == {3, 4, 5}
        # a threshold equal to a decoded value never marks that value
        thr = ae.decode_value(3, cfg)
        assert not ae.marked_outcomes(thr, cfg)[3]
        assert not ae.is_improvement(thr, thr, cfg)

    def test_value_oracle_diagonal(self):
        cfg = ae.QpeConfig(3, 0.5, 0.0, 1.0, t=3)
        o = ae.value_phase_oracle(0.5, cfg)
        assert np.array_equal(o.diagonal, [1, 1, 1, -1, -1, -1, 1, 1])

    def test_s0_oracle(self):
        lay = RegisterLayout([Register("a", 2), Register("b", 1)])
        m = Circuit(lay, [ae.s0_oracle(lay)]).to_matrix()
        assert np.allclose(m, np.diag([-1] + [1] * 7))


class TestPhaseEstimation:
    @pytest.mark.parametrize("theta", [0.0, 0.1, 0.25, 0.37, 0.5])
    @pytest.mark.parametrize("t", [1, 3, 5])
    def test_matches_kernel(self, theta, t):
        assert circuit_vs_kernel(theta, t) <= 1e-10

    @pytest.mark.parametrize("t", [1, 2, 4])
    def test_power_and_repeat_agree(self, t):
        assert circuit_vs_kernel(0.137, t, "repeat") <= 1e-10

    def test_unknown_method(self):
        a = one_qubit_a(0.1)
        with pytest.raises(ValueError):
            ae.phase_estimation(a, ae.q_qpe_operator(a), 2, method="magic")

    def test_exact_phase_is_deterministic(self):
        # theta = 1/8 lies on the t = 3 grid, so the outcome is x = 1 or 7 only
        d = ae.kernel_distribution(1 / 8, 3)
        assert d.as_dict(1e-12) == {1: pytest.approx(0.5), 7: pytest.approx(0.5)}

    def test_budget(self):
        a = one_qubit_a(0.1)
        with pytest.raises(sv.ResourceError):
            ae.phase_estimation(a, ae.q_qpe_operator(a), 6, max_qubits=5)

    def test_grover_operator_eigenphases(self):
        theta = 0.21
        a = one_qubit_a(theta)
        eig = np.linalg.eigvals(ae.q_qpe_operator(a).to_matrix())
        phases = np.sort(np.angle(eig) / (2 * math.pi))
        assert np.allclose(phases, [-theta, theta])


class TestPolicyEvaluation:
    def test_reference_distribution(self, eval_bandit):
        mdp = eval_bandit.to_mdp(horizon=2)
        pol = qmdp.Policy.bandit(0.5)
        cfg = ae.config_for(0.025, 0.05, 0.0, 2.0)
        dist = ae.qpe_distribution(mdp, pol, cfg)
        assert dist.total() == pytest.approx(1.0, abs=1e-9)
        assert ae.mass_within(dist, cfg, 0.8) >= 0.975

    def test_distribution_matches_kernel(self, eval_bandit):
        mdp = eval_bandit.to_mdp(horizon=1)
        pol = qmdp.Policy.bandit(0.3)
        enc = qmdp.ReturnEncoding.for_mdp(mdp)
        cfg = ae.QpeConfig(4, 0.5, enc.g, enc.g_bar, t=5)
        mu = enc.phi(qmdp.exact_value(mdp, pol))
        theta = math.asin(math.sqrt(mu)) / math.pi
        dist = ae.qpe_distribution(mdp, pol, cfg, enc)
        assert np.max(np.abs(dist.probs - ae.kernel_distribution(theta, 5).probs)) <= 1e-10

    def test_shot_mode_matches_distribution(self, eval_bandit):
        mdp = eval_bandit.to_mdp()
        pol = qmdp.Policy.bandit(0.5)
        enc = qmdp.ReturnEncoding.for_mdp(mdp)
        cfg = ae.QpeConfig(3, 0.5, enc.g, enc.g_bar, t=3)
        dist = ae.qpe_distribution(mdp, pol, cfg, enc)
        rng = np.random.default_rng(5)
        xs = [ae.qpe_estimate(mdp, pol, cfg, rng, enc, shots=True)[1] for _ in range(3000)]
        freq = np.bincount(xs, minlength=8) / 3000
        assert np.max(np.abs(freq - dist.probs)) < 0.04

    def test_estimate_is_decoded_outcome(self, eval_bandit):
        mdp = eval_bandit.to_mdp()
        pol = qmdp.Policy.bandit(0.5)
        enc = qmdp.ReturnEncoding.for_mdp(mdp)
        cfg = ae.QpeConfig(3, 0.5, enc.g, enc.g_bar)
        v, x = ae.qpe_estimate(mdp, pol, cfg, np.random.default_rng(0), enc)
        assert v == ae.decode_value(x, cfg)

    def test_encoding_bounds_must_match(self, eval_bandit):
        mdp = eval_bandit.to_mdp()
        enc = qmdp.ReturnEncoding.for_mdp(mdp, g=-1.0, g_bar=1.0)
        cfg = ae.QpeConfig(3, 0.5, 0.0, 1.0)
        with pytest.raises(ValueError):
            ae.qpe_circuits(mdp, qmdp.Policy.bandit(0.5), cfg, enc)

    def test_value_at_lower_bound(self, search_bandit):
        mdp = search_bandit.to_mdp()
        cfg = ae.QpeConfig(4, 0.5, 0.0, 1.0, t=4)
        dist = ae.qpe_distribution(mdp, qmdp.Policy.bandit(1.0), cfg)
        assert dist[0] == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(theta=st.floats(0.0, 0.5), t=st.integers(1, 8))
def test_circuit_matches_kernel_property(theta, t):
    assert circuit_vs_kernel(theta, t) <= 1e-8


@settings(max_examples=200, deadline=None)
@given(alpha=st.floats(0, 2 * math.pi), alpha_t=st.floats(0, 2 * math.pi))
def test_sin_squared_perturbation_bound(alpha, alpha_t):
    mu = math.sin(alpha) ** 2
    a = abs(alpha_t - alpha)
    assert abs(math.sin(alpha_t) ** 2 - mu) <= ae.sin_squared_bound(mu, a) + 1e-12


def epsilon_chain_violations(t_max=8, points=9):
    """Largest excess of decoded-value error over epsilon(n) for phases in the success window."""
    worst = -np.inf
    for t in range(1, t_max + 1):
        for n in range(1, t + 1):
            cfg = ae.QpeConfig(n, 0.5, 0.0, 1.0, t=t)
            decoded = ae.decode_values(cfg)
            x = np.arange(2**t)[:, None]
            offsets = np.linspace(-1, 1, points)[None, :] / 2 ** (n + 1)
            for sign in (1, -1):
                theta = sign * (x / 2**t + offsets)
                mu = np.sin(np.pi * theta) ** 2
                err = np.abs(decoded[:, None] - mu)
                # intermediate step: the mu-dependent bound, then its mu-free relaxation
                mid = np.pi * np.sqrt(mu * (1 - mu)) / 2**n + np.pi**2 / 2 ** (2 * n + 2)
                worst = max(worst, float(np.max(err - mid)), float(np.max(mid - cfg.epsilon)))
    return worst


def test_epsilon_chain():
    assert epsilon_chain_violations() <= 1e-12
