"""Qubit-chain Hamiltonians and the QFT target gate.

Frequencies are stored as given in configs (GHz for transitions, MHz for
couplings and carriers) and converted to angular units rad/ns on use.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * np.pi
GHZ = TWO_PI          # GHz -> rad/ns
MHZ = TWO_PI * 1e-3   # MHz -> rad/ns

# single-qubit lowering matrix
_LOWER = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)


@dataclass(frozen=True)
class SystemSpec:
    """Linear chain of two-level systems in a rotating frame.

    Qubit 0 is the leftmost Kronecker factor.
    """

    num_qubits: int
    freq_ghz: tuple[float, ...]
    coupling_mhz: tuple[float, ...]
    carrier_mhz: tuple[tuple[float, ...], ...]
    rot_freq_ghz: float | None = None
    # optional full coupling matrix J[j][k] (MHz); overrides the chain when set
    coupling_matrix_mhz: tuple[tuple[float, ...], ...] | None = field(default=None)

    def __post_init__(self):
        q = self.num_qubits
        if q < 1:
            raise ValueError("num_qubits must be >= 1")
        object.__setattr__(self, "freq_ghz", tuple(float(x) for x in self.freq_ghz))
        object.__setattr__(self, "coupling_mhz", tuple(float(x) for x in self.coupling_mhz))
        object.__setattr__(self, "carrier_mhz",
                           tuple(tuple(float(x) for x in c) for c in self.carrier_mhz))
        if len(self.freq_ghz) != q:
            raise ValueError(f"freq_ghz needs {q} entries, got {len(self.freq_ghz)}")
        if len(self.coupling_mhz) != q - 1:
            raise ValueError(f"coupling_mhz needs {q - 1} entries, got {len(self.coupling_mhz)}")
        if len(self.carrier_mhz) != q:
            raise ValueError(f"carrier_mhz needs {q} lists, got {len(self.carrier_mhz)}")
        if self.rot_freq_ghz is None:
            object.__setattr__(self, "rot_freq_ghz", sum(self.freq_ghz) / q)

    @property
    def dim(self) -> int:
        return 2 ** self.num_qubits

    @property
    def omega(self) -> np.ndarray:
        return GHZ * np.asarray(self.freq_ghz)

    @property
    def omega_rot(self) -> float:
        return GHZ * self.rot_freq_ghz

    @property
    def carriers(self) -> list[np.ndarray]:
        """Angular carrier frequencies per qubit, rad/ns."""
        return [MHZ * np.asarray(c, dtype=float) for c in self.carrier_mhz]

    def coupling(self) -> np.ndarray:
        """Upper-triangular coupling matrix J[j, k] (k > j) in rad/ns."""
        q = self.num_qubits
        J = np.zeros((q, q))
        if self.coupling_matrix_mhz is not None:
            J[:] = MHZ * np.triu(np.asarray(self.coupling_matrix_mhz, dtype=float), 1)
        else:
            for j, c in enumerate(self.coupling_mhz):
                J[j, j + 1] = MHZ * c
        return J

    @cached_property
    def lowering_ops(self) -> np.ndarray:
        return build_lowering_ops(self)

    @cached_property
    def system_hamiltonian(self) -> np.ndarray:
        return build_system_hamiltonian(self)


def build_lowering_ops(spec: SystemSpec) -> np.ndarray:
    """Stack of lowering matrices, shape (q, n, n)."""
    q = spec.num_qubits
    ops = []
    for j in range(q):
        A = np.eye(1, dtype=complex)
        for k in range(q):
            A = np.kron(A, _LOWER if k == j else np.eye(2))
        ops.append(A)
    return np.array(ops)


def build_system_hamiltonian(spec: SystemSpec) -> np.ndarray:
    A = build_lowering_ops(spec)
    n = spec.dim
    Hs = np.zeros((n, n), dtype=complex)
    detuning = spec.omega - spec.omega_rot
    J = spec.coupling()
    for j in range(spec.num_qubits):
        Hs += detuning[j] * (A[j].conj().T @ A[j])
        for k in range(j + 1, spec.num_qubits):
            if J[j, k] != 0.0:
                Hs += J[j, k] * (A[k].conj().T @ A[j] + A[k] @ A[j].conj().T)
    return Hs


def assemble_hamiltonian(spec: SystemSpec, controls) -> np.ndarray:
    """H = H_s + sum_j (d_j A_j + conj(d_j) A_j^dagger) for control values d_j."""
    A = spec.lowering_ops
    d = np.asarray(controls, dtype=complex)
    Hc = np.tensordot(d, A, axes=1)
    return spec.system_hamiltonian + Hc + Hc.conj().T


def qft_target(n: int) -> np.ndarray:
    if n < 2:
        raise ValueError("QFT dimension must be >= 2")
    jk = np.outer(np.arange(n), np.arange(n)) % n
    return np.exp(2j * np.pi * jk / n) / np.sqrt(n)
