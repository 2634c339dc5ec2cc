"""Dense complex statevector simulation.

Amplitude index ``b`` uses the package bit convention: bit ``q`` of ``b`` is
the computational-basis value of qubit (vertex) ``q``. Every rotation is
``exp(-i * angle / 2 * P)`` for its Pauli generator ``P``; ``ZZ`` uses
``P = Z (x) Z`` and ``CRX`` on qubits ``(control, target)`` applies
``RX(angle)`` to the target when the control is ``|1>``.

All kernels accept arrays of shape ``(..., 2**n)`` so a batch of states can be
pushed through one call.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

GATE_KINDS = ("RX", "RY", "RZ", "ZZ", "CRX")
DIAGONAL_KINDS = frozenset({"RZ", "ZZ"})

PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class GateOp:
    kind: str
    qubits: tuple[int, ...]
    angle: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        want = 2 if self.kind in ("ZZ", "CRX") else 1
        if len(self.qubits) != want:
            raise ValueError(f"{self.kind} acts on {want} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"repeated qubit in {self.qubits}")

    def inverse(self) -> "GateOp":
        return GateOp(self.kind, self.qubits, -self.angle)


def n_qubits_of(state: np.ndarray) -> int:
    dim = state.shape[-1]
    n = dim.bit_length() - 1
    if dim != 1 << n:
        raise ValueError(f"state length {dim} is not a power of two")
    return n


def rotation_matrix(pauli: str, angle: float) -> np.ndarray:
    """``exp(-i angle/2 P)`` as a 2x2 matrix."""
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    if pauli == "X":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if pauli == "Y":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if pauli == "Z":
        return np.array([[np.exp(-0.5j * angle), 0], [0, np.exp(0.5j * angle)]])
    raise ValueError(f"unknown Pauli {pauli!r}")


def apply_1q(state: np.ndarray, matrix: np.ndarray, qubit: int) -> np.ndarray:
    """Return ``matrix`` applied to ``qubit`` (new array, same shape)."""
    shape = state.shape
    lo = 1 << qubit
    out = np.matmul(matrix, state.reshape(-1, 2, lo))
    return out.reshape(shape)


@lru_cache(maxsize=None)
def z_diag(n: int, qubit: int) -> np.ndarray:
    """Eigenvalues of ``Z_qubit`` on every basis index."""
    b = np.arange(1 << n)
    d = 1.0 - 2.0 * ((b >> qubit) & 1)
    d.setflags(write=False)
    return d


@lru_cache(maxsize=None)
def zz_diag(n: int, i: int, j: int) -> np.ndarray:
    d = z_diag(n, i) * z_diag(n, j)
    d.setflags(write=False)
    return d


@lru_cache(maxsize=None)
def controlled_pairs(n: int, control: int, target: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices with control=1, target=0 and their target-flipped partners."""
    b = np.arange(1 << n)
    i0 = b[((b >> control) & 1 == 1) & ((b >> target) & 1 == 0)]
    i1 = i0 | (1 << target)
    i0.setflags(write=False)
    i1.setflags(write=False)
    return i0, i1


def apply_crx(state: np.ndarray, control: int, target: int, angle: float) -> np.ndarray:
    """CRX in place on ``state``; returns it."""
    n = n_qubits_of(state)
    i0, i1 = controlled_pairs(n, control, target)
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    a0 = state[..., i0]
    a1 = state[..., i1]
    state[..., i0] = c * a0 - 1j * s * a1
    state[..., i1] = c * a1 - 1j * s * a0
    return state


def gate_diagonal(kind: str, qubits: Sequence[int], n: int) -> np.ndarray:
    """Generator eigenvalues of a diagonal gate (``Z`` or ``Z(x)Z``)."""
    if kind == "RZ":
        return z_diag(n, qubits[0])
    if kind == "ZZ":
        return zz_diag(n, qubits[0], qubits[1])
    raise ValueError(f"{kind} is not diagonal")


def apply_gate(state: np.ndarray, gate: GateOp) -> np.ndarray:
    """Apply ``gate`` to ``state`` in place and return it."""
    n = n_qubits_of(state)
    if any(not 0 <= q < n for q in gate.qubits):
        raise ValueError(f"gate {gate.kind} on qubits {gate.qubits} outside 0..{n - 1}")
    if gate.kind in DIAGONAL_KINDS:
        state *= np.exp(-0.5j * gate.angle * gate_diagonal(gate.kind, gate.qubits, n))
    elif gate.kind == "CRX":
        apply_crx(state, gate.qubits[0], gate.qubits[1], gate.angle)
    else:
        m = rotation_matrix(gate.kind[1], gate.angle)
        state[...] = apply_1q(state, m, gate.qubits[0])
    return state


def zero_state(n: int, batch: tuple[int, ...] = ()) -> np.ndarray:
    state = np.zeros(batch + (1 << n,), dtype=np.complex128)
    state[..., 0] = 1.0
    return state


def euler_qubit(euler: Sequence[float]) -> np.ndarray:
    """``RX(a2) RZ(a1) RX(a0) |0>`` for Euler angles ``(a0, a1, a2)``."""
    a0, a1, a2 = (float(x) for x in euler)
    v = np.array([1.0, 0.0], dtype=complex)
    for pauli, a in (("X", a0), ("Z", a1), ("X", a2)):
        v = rotation_matrix(pauli, a) @ v
    return v


def init_product_state(n: int, euler: Sequence[float]) -> np.ndarray:
    """``|psi>^{(x) n}`` with ``|psi>`` from :func:`euler_qubit`."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    state = zero_state(n)
    for pauli, a in zip("XZX", euler):
        m = rotation_matrix(pauli, float(a))
        for q in range(n):
            state = apply_1q(state, m, q)
    return state


def probabilities(state: np.ndarray) -> np.ndarray:
    return state.real ** 2 + state.imag ** 2


def marginals(state: np.ndarray) -> np.ndarray:
    """Probability of reading ``1`` on every qubit, shape ``(..., n)``."""
    n = n_qubits_of(state)
    p = probabilities(state)
    return np.stack([p[..., z_diag(n, q) < 0].sum(axis=-1) for q in range(n)], axis=-1)


def marginal_one(state: np.ndarray, qubit: int) -> float:
    n = n_qubits_of(state)
    if not 0 <= qubit < n:
        raise ValueError(f"qubit {qubit} outside 0..{n - 1}")
    p = probabilities(state)
    return float(p[z_diag(n, qubit) < 0].sum())


def expectation_diag(state: np.ndarray, eigenvalues: np.ndarray) -> float:
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    if eigenvalues.shape[-1] != state.shape[-1]:
        raise ValueError(
            f"eigenvalue array of length {eigenvalues.shape[-1]} does not match "
            f"state length {state.shape[-1]}"
        )
    return float(probabilities(state) @ eigenvalues)
