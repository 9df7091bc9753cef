import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpolicy import statevec as sv
from qpolicy.statevec import Circuit, Register, RegisterLayout


def layout(n):
    return RegisterLayout([Register("q", n)])


def dense(gate, n):
    """Reference full-space matrix of ``gate`` built from basis vectors one by one."""
    return Circuit(layout(n), [gate]).to_matrix()


def kron_all(ms):
    out = np.eye(1)
    for m in ms:
        out = np.kron(out, m)
    return out


X = np.array([[0, 1], [1, 0]])
I2 = np.eye(2)
H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)


class TestLayout:
    def test_qubit_indices_follow_register_order(self):
        lay = RegisterLayout([Register("a", 2), Register("b", 0), Register("c", 3)])
        assert lay.num_qubits == 5
        assert lay.qubits("a") == (0, 1)
        assert lay.qubits("b") == ()
        assert lay.qubits("c", "a") == (2, 3, 4, 0, 1)

    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError):
            RegisterLayout([Register("a", 1), Register("a", 1)])

    def test_unknown_role_rejected(self):
        with pytest.raises(ValueError):
            Register("a", 1, "bogus")

    def test_extended_prepend(self):
        lay = layout(2).extended([Register("p", 3, "phase")], prepend=True)
        assert lay.names == ["p", "q"]
        assert lay.qubits("q") == (3, 4)


class TestGates:
    def test_big_endian_single_qubit(self):
        # X on qubit 0 of two qubits flips the most significant bit
        assert np.allclose(dense(sv.pauli_x(0), 2), np.kron(X, I2))
        assert np.allclose(dense(sv.pauli_x(1), 2), np.kron(I2, X))

    def test_cnot_matrix(self):
        expected = np.eye(4)[[0, 1, 3, 2]]
        assert np.allclose(dense(sv.cnot(0, 1), 2), expected)
        # reversed roles
        expected = np.eye(4)[[0, 3, 2, 1]]
        assert np.allclose(dense(sv.cnot(1, 0), 2), expected)

    def test_control_on_zero(self):
        g = sv.pauli_x(1, controls=(0,), control_values=(0,))
        assert np.allclose(dense(g, 2), np.eye(4)[[1, 0, 2, 3]])

    def test_toffoli_and_swap(self):
        assert np.allclose(dense(sv.toffoli(0, 1, 2), 3), np.eye(8)[[0, 1, 2, 3, 4, 5, 7, 6]])
        assert np.allclose(dense(sv.swap(0, 1), 2), np.eye(4)[[0, 2, 1, 3]])

    def test_controlled_global_phase_is_relative_phase(self):
        g = sv.global_phase(-1.0, (0, 1), (0, 0))
        assert np.allclose(dense(g, 2), np.diag([-1, 1, 1, 1]))

    def test_ry_amplitudes(self):
        theta = 0.7
        state = sv.new_zero_state(layout(1)).apply(sv.ry(theta))
        assert np.allclose(state.amplitudes, [np.cos(theta / 2), np.sin(theta / 2)])

    def test_nonunitary_rejected(self):
        with pytest.raises(ValueError):
            sv.Gate(np.array([[1, 1], [0, 1]]), [0])

    def test_overlapping_wires_rejected(self):
        with pytest.raises(ValueError):
            sv.Gate(np.eye(2), [0], controls=(0,))

    def test_gate_outside_register_rejected(self):
        with pytest.raises(ValueError):
            sv.new_zero_state(layout(1)).apply(sv.cnot(0, 1))

    def test_permutation_gate(self):
        perm = [2, 0, 3, 1]
        g = sv.PermutationGate(perm, [0, 1])
        m = dense(g, 2)
        for i, j in enumerate(perm):
            assert m[j, i] == 1
        assert np.allclose(dense(g.inverse(), 2), m.T)

    def test_permutation_gate_rejects_non_permutation(self):
        with pytest.raises(ValueError):
            sv.PermutationGate([0, 0, 1, 2], [0, 1])

    def test_diagonal_gate_with_control(self):
        g = sv.DiagonalGate([1, 1j], [1], controls=(0,))
        assert np.allclose(dense(g, 2), np.diag([1, 1, 1, 1j]))

    def test_gate_on_mapping(self):
        g = sv.cnot(0, 1).on([2, 0])
        assert g.controls == (2,) and g.targets == (0,)


class TestCircuit:
    def test_to_matrix_matches_kron(self):
        c = Circuit(layout(3), [sv.hadamard(0), sv.pauli_x(2)])
        assert np.allclose(c.to_matrix(), kron_all([H, I2, X]))

    def test_inverse(self):
        c = Circuit(layout(2), [sv.hadamard(0), sv.cnot(0, 1), sv.ry(0.3, 1), sv.phase(0.4, 0)])
        m = c.to_matrix()
        assert np.allclose(c.inverse().to_matrix(), m.conj().T)

    def test_controlled_circuit(self):
        inner = Circuit(layout(3), [sv.hadamard(1), sv.cnot(1, 2)])
        m = inner.controlled((0,)).to_matrix()
        sub = Circuit(layout(2), [sv.hadamard(0), sv.cnot(0, 1)]).to_matrix()
        expected = np.block([[np.eye(4), np.zeros((4, 4))], [np.zeros((4, 4)), sub]])
        assert np.allclose(m, expected)

    def test_on_layout_remaps_by_name(self):
        small = RegisterLayout([Register("a", 1), Register("b", 1)])
        big = RegisterLayout([Register("b", 1), Register("x", 1), Register("a", 1)])
        c = Circuit(small, [sv.pauli_x(0)]).on(big)
        assert c.gates[0].targets == (2,)


class TestMeasurement:
    def test_register_order_defines_integer(self):
        lay = RegisterLayout([Register("a", 1), Register("b", 2)])
        state = sv.basis_state(lay, 0b1_10)
        assert measure(state, ["a", "b"]) == {0b110: 1.0}
        assert measure(state, ["b", "a"]) == {0b101: 1.0}
        assert measure(state, ["b"]) == {0b10: 1.0}

    def test_marginal(self):
        lay = RegisterLayout([Register("a", 1), Register("b", 1)])
        state = sv.new_zero_state(lay).apply([sv.hadamard(0), sv.cnot(0, 1)])
        assert np.allclose(sv.measure_probabilities(state, ["b"]).probs, [0.5, 0.5])

    def test_sample_and_collapse(self):
        lay = RegisterLayout([Register("a", 1), Register("b", 1)])
        state = sv.new_zero_state(lay).apply([sv.hadamard(0), sv.cnot(0, 1)])
        out, post = sv.sample_and_collapse(state, ["a"], np.random.default_rng(1))
        assert sv.measure_probabilities(post, ["b"])[out] == pytest.approx(1.0)
        assert post.norm() == pytest.approx(1.0)

    def test_budget(self):
        with pytest.raises(sv.ResourceError):
            sv.new_zero_state(layout(5), max_qubits=4)

    def test_zero_qubit_state_rejected(self):
        with pytest.raises(ValueError):
            sv.new_zero_state(RegisterLayout([Register("e", 0)]))


def measure(state, regs):
    return {k: round(v, 12) for k, v in sv.measure_probabilities(state, regs).as_dict(1e-12).items()}


class TestQft:
    @pytest.mark.parametrize("n", [1, 2, 3, 5])
    def test_qft_is_dft(self, n):
        N = 2**n
        dft = np.exp(2j * np.pi * np.outer(np.arange(N), np.arange(N)) / N) / np.sqrt(N)
        assert np.allclose(Circuit(layout(n), sv.qft(layout(n), "q")).to_matrix(), dft, atol=1e-12)
        inv = Circuit(layout(n), sv.inverse_qft(layout(n), "q")).to_matrix()
        assert np.allclose(inv, dft.conj().T, atol=1e-12)


class TestCompletion:
    def test_completion_keeps_columns(self):
        col = np.array([1, 1, 1, 0]) / np.sqrt(3)
        u = sv.complete_to_unitary([col], 4)
        assert sv.is_unitary(u)
        assert np.allclose(u[:, 0], col)

    def test_non_orthonormal_rejected(self):
        with pytest.raises(ValueError):
            sv.complete_to_unitary([np.array([1.0, 1.0])], 2)

    def test_embed_isometry(self):
        out = np.array([0, 0.6, 0.8, 0])
        u = sv.embed_isometry([2], [out], 4)
        assert sv.is_unitary(u)
        assert np.allclose(u[:, 2], out)

    def test_deterministic(self):
        col = np.array([0.6, 0, 0.8, 0])
        assert np.array_equal(sv.complete_to_unitary([col], 4), sv.complete_to_unitary([col], 4))


gate_strategy = st.sampled_from(["h", "x", "ry", "cnot", "phase", "cry0"])


@settings(max_examples=60, deadline=None)
@given(ops=st.lists(st.tuples(gate_strategy, st.integers(0, 3), st.integers(0, 3),
                              st.floats(-6, 6)), min_size=1, max_size=12))
def test_random_circuits_are_unitary_and_invertible(ops):
    n = 4
    gates = []
    for name, a, b, theta in ops:
        if name == "h":
            gates.append(sv.hadamard(a))
        elif name == "x":
            gates.append(sv.pauli_x(a))
        elif name == "ry":
            gates.append(sv.ry(theta, a))
        elif name == "phase":
            gates.append(sv.phase(theta, a))
        elif a != b:
            if name == "cnot":
                gates.append(sv.cnot(a, b))
            else:
                gates.append(sv.ry(theta, b, controls=(a,), control_values=(0,)))
    c = Circuit(layout(n), gates)
    m = c.to_matrix()
    assert sv.is_unitary(m, 1e-9)
    state = sv.new_zero_state(layout(n)).apply(c)
    assert state.norm() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(state.apply(c.inverse()).amplitudes, np.eye(16)[0], atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(targets=st.permutations(range(3)), theta=st.floats(-3, 3), ctrl_val=st.integers(0, 1))
def test_controlled_gate_matches_block_construction(targets, theta, ctrl_val):
    """Controlled R_y built by the simulator vs an explicit projector sum."""
    c, t, _ = targets
    g = sv.ry(theta, t, controls=(c,), control_values=(ctrl_val,))
    proj = [np.diag([1, 0]), np.diag([0, 1])]
    ops_on = [I2] * 3
    ops_on[c] = proj[ctrl_val]
    ops_on[t] = sv.ry_matrix(theta)
    ops_off = [I2] * 3
    ops_off[c] = proj[1 - ctrl_val]
    expected = kron_all(ops_on) + kron_all(ops_off)
    assert np.allclose(dense(g, 3), expected)


def test_all_basis_states_roundtrip_through_measurement():
    lay = RegisterLayout([Register("a", 2), Register("b", 1)])
    for i, (x, y) in enumerate(itertools.product(range(4), range(2))):
        state = sv.basis_state(lay, i)
        assert measure(state, ["a"]) == {x: 1.0}
        assert measure(state, ["b"]) == {y: 1.0}
