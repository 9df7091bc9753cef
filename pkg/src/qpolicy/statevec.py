"""Dense state-vector simulation over named qubit registers.

Qubit ``0`` is the most significant bit of the amplitude index. Registers are
laid out in order and each register is read big-endian, so the integer held by
a register is the concatenation of its qubits from first to last.

Gates are applied by tensor contraction on the ``(2,) * n`` view of the
amplitude array; no ``2**n x 2**n`` operator is ever formed. The kernels also
accept trailing batch axes, which is how circuits are turned into matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

ATOL = 1e-10
MAX_QUBITS = 26

ROLES = ("state", "action", "reward", "return", "ancilla", "phase", "policy")


class ResourceError(RuntimeError):
    """Raised when a simulation would exceed the qubit budget."""


def check_budget(num_qubits: int, max_qubits: int | None = None) -> None:
    limit = MAX_QUBITS if max_qubits is None else max_qubits
    if num_qubits > limit:
        raise ResourceError(
            f"requested {num_qubits} qubits, budget is {limit} "
            f"({16 * 2**num_qubits / 2**20:.0f} MiB of amplitudes)"
        )


# ---------------------------------------------------------------------------
# Layout
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Register:
    name: str
    size: int
    role: str = "ancilla"

    def __post_init__(self):
        if self.size < 0:
            raise ValueError(f"register {self.name!r} has negative size")
        if self.role not in ROLES:
            raise ValueError(f"unknown register role {self.role!r}")


class RegisterLayout:
    """Ordered, non-overlapping named registers.

    Zero-width registers are allowed; they occupy no qubits, which is how a
    one-state MDP drops its state register.
    """

    def __init__(self, registers: Iterable[Register | tuple]):
        regs = [r if isinstance(r, Register) else Register(*r) for r in registers]
        names = [r.name for r in regs]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate register names in {names}")
        self.registers: tuple[Register, ...] = tuple(regs)
        self._slices: dict[str, tuple[int, ...]] = {}
        offset = 0
        for r in regs:
            self._slices[r.name] = tuple(range(offset, offset + r.size))
            offset += r.size
        self.num_qubits = offset

    def __contains__(self, name: str) -> bool:
        return name in self._slices

    def __iter__(self):
        return iter(self.registers)

    def __eq__(self, other) -> bool:
        return isinstance(other, RegisterLayout) and self.registers == other.registers

    def __hash__(self) -> int:
        return hash(self.registers)

    def __repr__(self) -> str:
        inner = ", ".join(f"{r.name}:{r.size}" for r in self.registers)
        return f"RegisterLayout({inner})"

    @property
    def names(self) -> list[str]:
        return [r.name for r in self.registers]

    def register(self, name: str) -> Register:
        for r in self.registers:
            if r.name == name:
                return r
        raise KeyError(f"unknown register {name!r}")

    def qubits(self, *names: str) -> tuple[int, ...]:
        """Global qubit indices of the named registers, concatenated in order."""
        out: list[int] = []
        for name in names:
            if name not in self._slices:
                raise KeyError(f"unknown register {name!r}")
            out.extend(self._slices[name])
        return tuple(out)

    def extended(self, registers: Iterable[Register | tuple], prepend: bool = False) -> RegisterLayout:
        new = list(RegisterLayout(registers).registers)
        return RegisterLayout(new + list(self.registers) if prepend else list(self.registers) + new)


# ---------------------------------------------------------------------------
# Gates
# ---------------------------------------------------------------------------


def _control_index(ndim: int, controls: Sequence[int], values: Sequence[int]):
    idx: list = [slice(None)] * ndim
    for q, v in zip(controls, values):
        idx[q] = int(v)
    return tuple(idx)


def _sub_axes(targets: Sequence[int], controls: Sequence[int]) -> list[int]:
    # position of each target axis once the control axes are indexed away
    return [t - sum(1 for c in controls if c < t) for t in targets]


class _GateBase:
    targets: tuple[int, ...]
    controls: tuple[int, ...]
    control_values: tuple[int, ...]

    def _init_wires(self, targets, controls, control_values):
        self.targets = tuple(int(q) for q in targets)
        self.controls = tuple(int(q) for q in controls)
        if control_values is None:
            control_values = (1,) * len(self.controls)
        self.control_values = tuple(int(v) for v in control_values)
        if len(self.control_values) != len(self.controls):
            raise ValueError("control_values must match controls")
        if any(v not in (0, 1) for v in self.control_values):
            raise ValueError("control values must be 0 or 1")
        wires = self.targets + self.controls
        if len(set(wires)) != len(wires):
            raise ValueError(f"overlapping target/control qubits: {wires}")
        if any(q < 0 for q in wires):
            raise ValueError("qubit indices must be non-negative")

    @property
    def qubits(self) -> tuple[int, ...]:
        return self.targets + self.controls

    @property
    def num_targets(self) -> int:
        return len(self.targets)

    def _mapped(self, mapping):
        if callable(mapping):
            f = mapping
        elif isinstance(mapping, dict):
            f = mapping.__getitem__
        else:
            seq = tuple(mapping)
            f = seq.__getitem__
        return tuple(f(q) for q in self.targets), tuple(f(q) for q in self.controls)

    def controlled(self, controls: Sequence[int], values: Sequence[int] | None = None):
        """Return this gate with extra controls prepended."""
        controls = tuple(controls)
        values = (1,) * len(controls) if values is None else tuple(values)
        return self._rewire(self.targets, controls + self.controls, values + self.control_values)

    def on(self, mapping):
        """Move the gate onto other qubits.

        ``mapping`` is a sequence (local index -> qubit), a dict or a callable.
        """
        t, c = self._mapped(mapping)
        return self._rewire(t, c, self.control_values)

    def _check_fits(self, ndim: int) -> None:
        if any(q >= ndim for q in self.qubits):
            raise ValueError(f"gate on qubits {self.qubits} does not fit {ndim} qubits")


class Gate(_GateBase):
    """A dense unitary on ``targets``, optionally controlled.

    ``matrix`` is indexed big-endian over the targets in the order given.
    """

    def __init__(self, matrix, targets: Sequence[int], controls: Sequence[int] = (),
                 control_values: Sequence[int] | None = None, *, name: str = "U",
                 check: bool = True):
        self.matrix = np.asarray(matrix, dtype=np.complex128)
        self._init_wires(targets, controls, control_values)
        self.name = name
        dim = 2 ** len(self.targets)
        if self.matrix.shape != (dim, dim):
            raise ValueError(f"matrix shape {self.matrix.shape} does not match {len(self.targets)} targets")
        if check and not is_unitary(self.matrix):
            raise ValueError(f"gate {name!r} is not unitary")

    def __repr__(self):
        return f"Gate({self.name}, targets={self.targets}, controls={self.controls})"

    def _rewire(self, targets, controls, values):
        return Gate(self.matrix, targets, controls, values, name=self.name, check=False)

    def inverse(self) -> Gate:
        return Gate(self.matrix.conj().T, self.targets, self.controls, self.control_values,
                    name=self.name + "†", check=False)

    def apply_to(self, psi: np.ndarray, nq: int) -> None:
        self._check_fits(nq)
        idx = _control_index(psi.ndim, self.controls, self.control_values)
        k = len(self.targets)
        if k == 0:
            psi[idx] = psi[idx] * self.matrix[0, 0]
            return
        sub = psi[idx]
        axes = _sub_axes(self.targets, self.controls)
        u = self.matrix.reshape((2,) * (2 * k))
        out = np.tensordot(u, sub, axes=(list(range(k, 2 * k)), axes))
        psi[idx] = np.moveaxis(out, list(range(k)), axes)


class DiagonalGate(_GateBase):
    """A diagonal unitary given by its phases over the target basis."""

    def __init__(self, diagonal, targets: Sequence[int], controls: Sequence[int] = (),
                 control_values: Sequence[int] | None = None, *, name: str = "D",
                 check: bool = True):
        self.diagonal = np.asarray(diagonal, dtype=np.complex128).ravel()
        self._init_wires(targets, controls, control_values)
        self.name = name
        if self.diagonal.size != 2 ** len(self.targets):
            raise ValueError("diagonal length does not match targets")
        if check and not np.allclose(np.abs(self.diagonal), 1.0, atol=ATOL, rtol=0):
            raise ValueError(f"gate {name!r} is not unitary")

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.diagonal)

    def _rewire(self, targets, controls, values):
        return DiagonalGate(self.diagonal, targets, controls, values, name=self.name, check=False)

    def inverse(self) -> DiagonalGate:
        return DiagonalGate(self.diagonal.conj(), self.targets, self.controls, self.control_values,
                            name=self.name + "†", check=False)

    def apply_to(self, psi: np.ndarray, nq: int) -> None:
        self._check_fits(nq)
        idx = _control_index(psi.ndim, self.controls, self.control_values)
        k = len(self.targets)
        if k == 0:
            psi[idx] = psi[idx] * self.diagonal[0]
            return
        sub_ndim = psi.ndim - len(self.controls)
        axes = _sub_axes(self.targets, self.controls)
        order = np.argsort(axes)
        d = self.diagonal.reshape((2,) * k).transpose(order)
        shape = [1] * sub_ndim
        for a in axes:
            shape[a] = 2
        psi[idx] = psi[idx] * d.reshape(shape)


class PermutationGate(_GateBase):
    """Basis permutation: target basis state ``i`` goes to ``perm[i]``."""

    def __init__(self, perm, targets: Sequence[int], controls: Sequence[int] = (),
                 control_values: Sequence[int] | None = None, *, name: str = "P",
                 check: bool = True):
        self.perm = np.asarray(perm, dtype=np.int64).ravel()
        self._init_wires(targets, controls, control_values)
        self.name = name
        if self.perm.size != 2 ** len(self.targets):
            raise ValueError("permutation length does not match targets")
        if check and not np.array_equal(np.sort(self.perm), np.arange(self.perm.size)):
            raise ValueError(f"gate {name!r} is not a permutation")

    @property
    def matrix(self) -> np.ndarray:
        m = np.zeros((self.perm.size,) * 2, dtype=np.complex128)
        m[self.perm, np.arange(self.perm.size)] = 1.0
        return m

    def _rewire(self, targets, controls, values):
        return PermutationGate(self.perm, targets, controls, values, name=self.name, check=False)

    def inverse(self) -> PermutationGate:
        return PermutationGate(np.argsort(self.perm), self.targets, self.controls,
                               self.control_values, name=self.name + "†", check=False)

    def apply_to(self, psi: np.ndarray, nq: int) -> None:
        self._check_fits(nq)
        idx = _control_index(psi.ndim, self.controls, self.control_values)
        k = len(self.targets)
        sub = psi[idx]
        axes = _sub_axes(self.targets, self.controls)
        moved = np.moveaxis(sub, axes, list(range(k)))
        flat = moved.reshape(2**k, -1)
        out = np.empty_like(flat)
        out[self.perm] = flat
        psi[idx] = np.moveaxis(out.reshape(moved.shape), list(range(k)), axes)


AnyGate = Gate | DiagonalGate | PermutationGate


def is_unitary(matrix: np.ndarray, atol: float = ATOL) -> bool:
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return bool(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])), initial=0.0) <= atol)


def _finite(theta: float) -> float:
    theta = float(theta)
    if not np.isfinite(theta):
        raise ValueError(f"rotation angle must be finite, got {theta}")
    return theta


def ry_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def ry(theta: float, target: int = 0, controls: Sequence[int] = (),
       control_values: Sequence[int] | None = None) -> Gate:
    return Gate(ry_matrix(_finite(theta)), (target,), controls, control_values, name="RY", check=False)


def hadamard(target: int = 0) -> Gate:
    return Gate(np.array([[1, 1], [1, -1]]) / np.sqrt(2), (target,), name="H", check=False)


def pauli_x(target: int = 0, controls: Sequence[int] = (),
            control_values: Sequence[int] | None = None) -> Gate:
    return Gate(np.array([[0, 1], [1, 0]]), (target,), controls, control_values, name="X", check=False)


def pauli_z(target: int = 0) -> Gate:
    return Gate(np.diag([1, -1]), (target,), name="Z", check=False)


def phase(lam: float, target: int = 0, controls: Sequence[int] = ()) -> Gate:
    return Gate(np.diag([1, np.exp(1j * _finite(lam))]), (target,), controls, name="P", check=False)


def cnot(control: int = 0, target: int = 1) -> Gate:
    return pauli_x(target, (control,))


def toffoli(control1: int = 0, control2: int = 1, target: int = 2) -> Gate:
    return pauli_x(target, (control1, control2))


def swap(q1: int = 0, q2: int = 1) -> Gate:
    m = np.eye(4)[[0, 2, 1, 3]]
    return Gate(m, (q1, q2), name="SWAP", check=False)


def global_phase(factor: complex, controls: Sequence[int] = (),
                 control_values: Sequence[int] | None = None) -> Gate:
    """Scalar gate; becomes a relative phase once controlled."""
    return Gate(np.array([[factor]]), (), controls, control_values, name="GPHASE")


# ---------------------------------------------------------------------------
# Circuits
# ---------------------------------------------------------------------------


class Circuit:
    """An ordered gate list on a fixed layout. Gates run first to last."""

    def __init__(self, layout: RegisterLayout, gates: Iterable[AnyGate] = ()):
        self.layout = layout
        self.gates: list[AnyGate] = []
        self.extend(gates)

    def __len__(self):
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def __repr__(self):
        return f"Circuit({self.layout!r}, {len(self.gates)} gates)"

    def append(self, gate: AnyGate) -> Circuit:
        gate._check_fits(self.layout.num_qubits)
        self.gates.append(gate)
        return self

    def extend(self, gates: Iterable[AnyGate]) -> Circuit:
        for g in gates:
            self.append(g)
        return self

    def __add__(self, other: Circuit) -> Circuit:
        if other.layout != self.layout:
            raise ValueError("cannot compose circuits on different layouts")
        return Circuit(self.layout, self.gates + other.gates)

    def inverse(self) -> Circuit:
        return Circuit(self.layout, [g.inverse() for g in reversed(self.gates)])

    def controlled(self, controls: Sequence[int], values: Sequence[int] | None = None) -> Circuit:
        return Circuit(self.layout, [g.controlled(controls, values) for g in self.gates])

    def on(self, layout: RegisterLayout) -> Circuit:
        """Re-express the circuit on a larger layout, matching registers by name."""
        mapping: dict[int, int] = {}
        for reg in self.layout:
            src = self.layout.qubits(reg.name)
            dst = layout.qubits(reg.name)
            if len(src) != len(dst):
                raise ValueError(f"register {reg.name!r} changes size")
            mapping.update(zip(src, dst))
        return Circuit(layout, [g.on(mapping) for g in self.gates])

    def to_matrix(self) -> np.ndarray:
        """Unitary of the whole circuit on its own layout (small layouts only)."""
        n = self.layout.num_qubits
        check_budget(2 * n, max_qubits=28)
        dim = 2**n
        psi = np.eye(dim, dtype=np.complex128).reshape((2,) * n + (dim,))
        for g in self.gates:
            g.apply_to(psi, n)
        return psi.reshape(dim, dim)


# ---------------------------------------------------------------------------
# States and measurement
# ---------------------------------------------------------------------------


class OutcomeDistribution:
    """Exact probabilities over the integers ``0 .. 2**num_bits - 1``."""

    def __init__(self, probs, num_bits: int | None = None):
        p = np.asarray(probs, dtype=np.float64).ravel()
        if num_bits is None:
            num_bits = int(round(np.log2(p.size))) if p.size > 1 else 0
        if p.size != 2**num_bits:
            raise ValueError("probability vector length must be a power of two")
        if np.any(p < -ATOL):
            raise ValueError("negative probability")
        self.probs = np.clip(p, 0.0, None)
        self.num_bits = num_bits

    def __len__(self):
        return self.probs.size

    def __getitem__(self, x: int) -> float:
        return float(self.probs[x])

    def __repr__(self):
        return f"OutcomeDistribution({self.as_dict(1e-12)})"

    def total(self) -> float:
        return float(self.probs.sum())

    def as_dict(self, tol: float = 0.0) -> dict[int, float]:
        return {int(i): float(p) for i, p in enumerate(self.probs) if p > tol}

    def sample(self, rng: np.random.Generator, size: int | None = None):
        p = self.probs / self.probs.sum()
        return rng.choice(p.size, size=size, p=p)


class StateVector:
    """Normalized amplitudes over a register layout."""

    def __init__(self, amplitudes, layout: RegisterLayout, *, copy: bool = True):
        amps = np.array(amplitudes, dtype=np.complex128) if copy else np.asarray(amplitudes, dtype=np.complex128)
        amps = amps.ravel()
        if amps.size != 2**layout.num_qubits:
            raise ValueError(f"expected {2**layout.num_qubits} amplitudes, got {amps.size}")
        self.amplitudes = amps
        self.layout = layout

    @property
    def num_qubits(self) -> int:
        return self.layout.num_qubits

    @property
    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.num_qubits)

    def copy(self) -> StateVector:
        return StateVector(self.amplitudes, self.layout)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def apply(self, op: AnyGate | Circuit | Iterable[AnyGate]) -> StateVector:
        """Apply a gate or circuit in place and return ``self``."""
        gates = [op] if isinstance(op, _GateBase) else op
        psi = self.tensor
        n = self.num_qubits
        for g in gates:
            g.apply_to(psi, n)
        return self


def new_zero_state(layout: RegisterLayout, max_qubits: int | None = None) -> StateVector:
    if layout.num_qubits < 1:
        raise ValueError("layout must contain at least one qubit")
    check_budget(layout.num_qubits, max_qubits)
    amps = np.zeros(2**layout.num_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(amps, layout, copy=False)


def basis_state(layout: RegisterLayout, index: int) -> StateVector:
    state = new_zero_state(layout)
    state.amplitudes[0] = 0.0
    state.amplitudes[index] = 1.0
    return state


def apply_gate(state: StateVector, gate: AnyGate) -> StateVector:
    """Pure variant of :meth:`StateVector.apply` for a single gate."""
    return state.copy().apply(gate)


def _register_qubits(layout: RegisterLayout, registers) -> tuple[int, ...]:
    if isinstance(registers, str):
        registers = [registers]
    return layout.qubits(*registers)


def measure_probabilities(state: StateVector, registers) -> OutcomeDistribution:
    """Marginal distribution of the named registers, read as one big-endian integer."""
    qs = _register_qubits(state.layout, registers)
    n = state.num_qubits
    p = np.abs(state.tensor) ** 2
    rest = tuple(q for q in range(n) if q not in qs)
    marg = p.sum(axis=rest) if rest else p
    # remaining axes are in ascending qubit order; reorder to the requested order
    kept = sorted(qs)
    marg = np.transpose(marg, [kept.index(q) for q in qs]) if qs else marg
    return OutcomeDistribution(np.ravel(marg), len(qs))


def sample_and_collapse(state: StateVector, registers, rng: np.random.Generator):
    """Measure the named registers; return the outcome and the post-measurement state."""
    qs = _register_qubits(state.layout, registers)
    dist = measure_probabilities(state, registers)
    outcome = int(dist.sample(rng))
    bits = [(outcome >> (len(qs) - 1 - i)) & 1 for i in range(len(qs))]
    post = np.zeros_like(state.tensor)
    idx = _control_index(state.num_qubits, qs, bits)
    post[idx] = state.tensor[idx]
    post /= np.sqrt(dist[outcome])
    return outcome, StateVector(post.ravel(), state.layout, copy=False)


# ---------------------------------------------------------------------------
# QFT and unitary completion
# ---------------------------------------------------------------------------


def qft(layout: RegisterLayout, register: str) -> list[Gate]:
    """Gates mapping ``|x>`` to ``sum_y exp(2 pi i x y / 2**n) |y> / sqrt(2**n)``."""
    qs = layout.qubits(register)
    n = len(qs)
    gates: list[Gate] = []
    for i in range(n):
        gates.append(hadamard(qs[i]))
        for j in range(i + 1, n):
            gates.append(phase(2 * np.pi / 2 ** (j - i + 1), qs[i], controls=(qs[j],)))
    for i in range(n // 2):
        gates.append(swap(qs[i], qs[n - 1 - i]))
    return gates


def inverse_qft(layout: RegisterLayout, register: str) -> list[Gate]:
    return [g.inverse() for g in reversed(qft(layout, register))]


def complete_to_unitary(columns: Sequence[np.ndarray], dimension: int,
                        tol: float = 1e-8) -> np.ndarray:
    """Extend orthonormal ``columns`` to a unitary by Gram-Schmidt on e_0, e_1, ...

    The first ``len(columns)`` columns of the result are the inputs.
    """
    cols = [np.asarray(c, dtype=np.complex128).ravel() for c in columns]
    if any(c.size != dimension for c in cols):
        raise ValueError("column length does not match dimension")
    if len(cols) > dimension:
        raise ValueError("more columns than dimension")
    if cols:
        g = np.array(cols).T
        if np.max(np.abs(g.conj().T @ g - np.eye(len(cols)))) > ATOL:
            raise ValueError("input columns are not orthonormal")
    basis = list(cols)
    for i in range(dimension):
        if len(basis) == dimension:
            break
        v = np.zeros(dimension, dtype=np.complex128)
        v[i] = 1.0
        for _ in range(2):  # re-orthogonalize once for stability
            for b in basis:
                v = v - np.vdot(b, v) * b
        nv = np.linalg.norm(v)
        if nv > tol:
            basis.append(v / nv)
    return np.array(basis).T


def embed_isometry(inputs: Sequence[int], outputs: Sequence[np.ndarray], dimension: int) -> np.ndarray:
    """Unitary mapping basis vector ``e_inputs[i]`` to ``outputs[i]``.

    Basis vectors not listed are sent, in increasing order, to the completion
    columns from :func:`complete_to_unitary`.
    """
    v = complete_to_unitary(outputs, dimension)
    u = np.empty((dimension, dimension), dtype=np.complex128)
    inputs = list(inputs)
    others = [i for i in range(dimension) if i not in set(inputs)]
    u[:, inputs] = v[:, : len(inputs)]
    u[:, others] = v[:, len(inputs):]
    return u
