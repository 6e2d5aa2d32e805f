"""Dense density matrices and superoperators on up to four qubits.

Density matrices are vectorized column by column, so the map
``rho -> U rho U^dag`` is the matrix ``kron(conj(U), U)``.  Qubit 0 is the
most significant bit of a computational-basis index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from nepec.config import TOL
from nepec.errors import NumericalConsistencyError, ValidationError

MAX_QUBITS = 4


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=complex)
    arr.setflags(write=False)
    return arr


def _num_qubits(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise ValidationError(f"dimension {dim} is not a power of two")
    return n


def vec(m: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(m).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape(dim, dim, order="F")


@dataclass(frozen=True)
class DensityMatrix:
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data))
        if self.data.ndim != 2 or self.data.shape[0] != self.data.shape[1]:
            raise ValidationError(f"density matrix must be square, got {self.data.shape}")
        _num_qubits(self.data.shape[0])
        self.validate()

    @classmethod
    def unchecked(cls, data) -> "DensityMatrix":
        """Wrap ``data`` without physicality checks (e.g. output of a non-CP map)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "data", _frozen(data))
        return obj

    @classmethod
    def basis_state(cls, num_qubits: int, index: int = 0) -> "DensityMatrix":
        d = 2**num_qubits
        rho = np.zeros((d, d), dtype=complex)
        rho[index, index] = 1.0
        return cls(rho)

    @classmethod
    def from_pure(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def num_qubits(self) -> int:
        return _num_qubits(self.dim)

    def validate(self, atol: float = TOL.physical) -> None:
        herm = np.max(np.abs(self.data - self.data.conj().T))
        if herm > atol:
            raise ValidationError(f"density matrix not Hermitian (deviation {herm:.3e})")
        tr = np.trace(self.data)
        if abs(tr - 1.0) > atol:
            raise ValidationError(f"density matrix trace is {tr.real:.12g}, expected 1")
        lo = np.linalg.eigvalsh(0.5 * (self.data + self.data.conj().T)).min()
        if lo < TOL.psd_floor:
            raise ValidationError(f"density matrix has negative eigenvalue {lo:.3e}")


@dataclass(frozen=True)
class Observable:
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data))
        if self.data.ndim != 2 or self.data.shape[0] != self.data.shape[1]:
            raise ValidationError(f"observable must be square, got {self.data.shape}")
        herm = np.max(np.abs(self.data - self.data.conj().T))
        if herm > TOL.physical:
            raise ValidationError(f"observable not Hermitian (deviation {herm:.3e})")

    @classmethod
    def projector(cls, num_qubits: int, index: int = 0) -> "Observable":
        d = 2**num_qubits
        a = np.zeros((d, d), dtype=complex)
        a[index, index] = 1.0
        return cls(a)

    @property
    def dim(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class Superoperator:
    """Linear map on ``dim x dim`` matrices stored as a ``dim**2 x dim**2`` matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError(f"superoperator must be square, got {m.shape}")
        d = int(round(np.sqrt(m.shape[0])))
        if d * d != m.shape[0]:
            raise ValidationError(f"superoperator size {m.shape[0]} is not a square")
        _num_qubits(d)

    @classmethod
    def identity(cls, dim: int) -> "Superoperator":
        return cls(np.eye(dim * dim))

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.matrix.shape[0])))

    @property
    def num_qubits(self) -> int:
        return _num_qubits(self.dim)

    def choi(self) -> np.ndarray:
        """Choi matrix ``sum_ab |a><b| (x) S(|a><b|)``."""
        d = self.dim
        # column a + b*d of the matrix is vec(S(|a><b|))
        t = self.matrix.T.reshape(d, d, d, d)  # [b, a, j, i] = S(|a><b|)[i, j]
        return t.transpose(1, 3, 0, 2).reshape(d * d, d * d)

    def is_trace_preserving(self, atol: float = TOL.physical) -> bool:
        v = vec(np.eye(self.dim))
        return bool(np.max(np.abs(v @ self.matrix - v)) <= atol)

    def is_completely_positive(self, atol: float = TOL.physical) -> bool:
        j = self.choi()
        if np.max(np.abs(j - j.conj().T)) > atol:
            return False
        return bool(np.linalg.eigvalsh(0.5 * (j + j.conj().T)).min() >= -atol)

    def is_channel(self, atol: float = TOL.physical) -> bool:
        return self.is_trace_preserving(atol) and self.is_completely_positive(atol)

    def pauli_transfer_matrix(self) -> np.ndarray:
        """Real matrix ``R_ij = tr[P_i S(P_j)] / d`` over lexicographic Pauli strings."""
        from nepec.noise import pauli_strings  # local import: noise depends on this module

        d = self.dim
        paulis = [p for _, p in pauli_strings(self.num_qubits, include_identity=True)]
        vp = np.array([vec(p) for p in paulis])
        out = np.einsum("ik,kl,jl->ij", vp.conj(), self.matrix, vp) / d
        return out.real

    def allclose(self, other: "Superoperator", atol: float = TOL.algebra) -> bool:
        return self.dim == other.dim and bool(np.allclose(self.matrix, other.matrix, rtol=0, atol=atol))


def unitary_to_superop(u) -> Superoperator:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValidationError(f"unitary must be square, got {u.shape}")
    dev = np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0]))
    if dev > TOL.unitary:
        raise ValidationError(f"matrix is not unitary: ||U^dag U - I|| = {dev:.3e}")
    return Superoperator(np.kron(u.conj(), u))


def kraus_to_superop(kraus: Sequence) -> Superoperator:
    ks = [np.asarray(k, dtype=complex) for k in kraus]
    if not ks:
        raise ValidationError("empty Kraus list")
    d = ks[0].shape[0]
    completeness = sum(k.conj().T @ k for k in ks)
    resid = np.linalg.norm(completeness - np.eye(d))
    if resid > TOL.kraus_completeness:
        raise ValidationError(f"Kraus operators are not trace preserving: residual {resid:.3e}")
    return Superoperator(sum(np.kron(k.conj(), k) for k in ks))


def compose(second: Superoperator, first: Superoperator) -> Superoperator:
    """``second o first``: apply ``first`` then ``second``."""
    if second.dim != first.dim:
        raise ValidationError(f"dimension mismatch: {second.dim} vs {first.dim}")
    return Superoperator(second.matrix @ first.matrix)


def compose_all(ops: Sequence[Superoperator], dim: int) -> Superoperator:
    """Compose ``ops`` in time order (``ops[0]`` acts first)."""
    m = np.eye(dim * dim, dtype=complex)
    for op in ops:
        if op.dim != dim:
            raise ValidationError(f"dimension mismatch: {op.dim} vs {dim}")
        m = op.matrix @ m
    return Superoperator(m)


def apply(s: Superoperator, rho: DensityMatrix) -> DensityMatrix:
    if s.dim != rho.dim:
        raise ValidationError(f"dimension mismatch: superoperator {s.dim} vs state {rho.dim}")
    return DensityMatrix.unchecked(unvec(s.matrix @ vec(rho.data), rho.dim))


def expectation(a: Observable, rho: DensityMatrix) -> float:
    if a.dim != rho.dim:
        raise ValidationError(f"dimension mismatch: observable {a.dim} vs state {rho.dim}")
    val = np.trace(a.data @ rho.data)
    if abs(val.imag) > TOL.imag_residue:
        raise NumericalConsistencyError(f"expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


def _local_action(local: np.ndarray, targets: Sequence[int], n: int, xs: np.ndarray) -> np.ndarray:
    """Apply a k-qubit superoperator to a stack of n-qubit matrices ``xs`` (m, D, D)."""
    k = len(targets)
    dk = 2**k
    # local[i', j', i, j] = coefficient of X[i, j] in the output entry [i', j']
    lt = local.reshape(dk, dk, dk, dk).transpose(1, 0, 3, 2).reshape([2] * (4 * k))
    m = xs.shape[0]
    xt = xs.reshape([m] + [2] * (2 * n))
    row = list(range(1, n + 1))
    col = list(range(n + 1, 2 * n + 1))
    new_r = list(range(2 * n + 1, 2 * n + 1 + k))
    new_c = list(range(2 * n + 1 + k, 2 * n + 1 + 2 * k))
    out_row, out_col = row.copy(), col.copy()
    for i, q in enumerate(targets):
        out_row[q] = new_r[i]
        out_col[q] = new_c[i]
    l_labels = new_r + new_c + [row[q] for q in targets] + [col[q] for q in targets]
    out = np.einsum(lt, l_labels, xt, [0] + row + col, [0] + out_row + out_col)
    d = 2**n
    return out.reshape(m, d, d)


def embed(s: Superoperator, targets: Sequence[int], n: int) -> Superoperator:
    """Extend ``s`` to ``n`` qubits, acting on ``targets`` and as identity elsewhere."""
    targets = list(targets)
    k = s.num_qubits
    if n > MAX_QUBITS:
        raise ValidationError(f"at most {MAX_QUBITS} qubits are supported, got {n}")
    if len(targets) != k:
        raise ValidationError(f"{k}-qubit superoperator needs {k} targets, got {len(targets)}")
    if len(set(targets)) != len(targets):
        raise ValidationError(f"duplicate targets {targets}")
    if any(q < 0 or q >= n for q in targets):
        raise ValidationError(f"targets {targets} out of range for {n} qubits")
    if k == n and targets == list(range(n)):
        return s
    d = 2**n
    basis = np.zeros((d * d, d, d), dtype=complex)
    r = np.arange(d * d)
    basis[r, r % d, r // d] = 1.0
    out = _local_action(s.matrix, targets, n, basis)
    return Superoperator(out.transpose(0, 2, 1).reshape(d * d, d * d).T)


def partial_trace(rho: np.ndarray, keep: Sequence[int], n: int) -> np.ndarray:
    """Reduced density matrix on qubits ``keep``."""
    keep = list(keep)
    t = np.asarray(rho).reshape([2] * (2 * n))
    labels_in = list(range(2 * n))
    for q in range(n):
        if q not in keep:
            labels_in[n + q] = labels_in[q]
    out = [q for q in keep] + [n + q for q in keep]
    dk = 2 ** len(keep)
    return np.einsum(t, labels_in, out).reshape(dk, dk)
