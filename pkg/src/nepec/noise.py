"""Parametric noise channels with a scale-by-lambda action.

A noisy implementable operation is ``E^(lam) o G`` for an ideal unitary
``G``; ``E^(0)`` is the identity and ``E^(1)`` the hardware noise.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from nepec.config import TOL
from nepec.errors import ValidationError
from nepec.superop import (
    Superoperator,
    compose,
    embed,
    kraus_to_superop,
    unitary_to_superop,
)

PAULI_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# slack on lambda_max comparisons so that lam = (1 - 4**-k) / p itself is admissible
_LAMBDA_SLACK = 1e-12


@lru_cache(maxsize=None)
def _pauli_strings(k: int, include_identity: bool):
    out = []
    for labels in itertools.product("IXYZ", repeat=k):
        name = "".join(labels)
        if not include_identity and set(name) == {"I"}:
            continue
        m = np.array([[1.0 + 0j]])
        for ch in labels:
            m = np.kron(m, PAULI_1Q[ch])
        m.setflags(write=False)
        out.append((name, m))
    return tuple(out)


def pauli_strings(k: int, include_identity: bool = False) -> tuple[tuple[str, np.ndarray], ...]:
    """Pauli strings on ``k`` qubits in lexicographic I<X<Y<Z order."""
    return _pauli_strings(k, include_identity)


class NoiseKind(str, Enum):
    DEPOLARIZING = "depolarizing"
    AMPLITUDE_DAMPING = "amplitude_damping"


def _check_prob(p: float, name: str = "p") -> None:
    if not (0.0 <= p <= 1.0):
        raise ValidationError(f"{name} must be a probability in [0, 1], got {p}")


@dataclass(frozen=True)
class NoiseModel:
    kind: NoiseKind
    p: float
    num_qubits: int = 1
    # amplitude damping only: scale p' = 1 - sqrt(1 - p) instead of p
    scale_on_p_prime: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        _check_prob(self.p)
        if self.num_qubits < 1:
            raise ValidationError(f"num_qubits must be >= 1, got {self.num_qubits}")

    @classmethod
    def depolarizing(cls, p: float, num_qubits: int = 1) -> "NoiseModel":
        return cls(NoiseKind.DEPOLARIZING, p, num_qubits)

    @classmethod
    def amplitude_damping(cls, p: float, scale_on_p_prime: bool = False) -> "NoiseModel":
        return cls(NoiseKind.AMPLITUDE_DAMPING, p, 1, scale_on_p_prime)

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        return cls(
            NoiseKind(d["kind"]),
            float(d["p"]),
            int(d.get("qubits", 1)),
            bool(d.get("scale_on_p_prime", False)),
        )

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "p": self.p, "qubits": self.num_qubits}

    @property
    def p_prime(self) -> float:
        return 1.0 - np.sqrt(1.0 - self.p)

    def with_rate(self, p: float) -> "NoiseModel":
        return NoiseModel(self.kind, p, self.num_qubits, self.scale_on_p_prime)

    def lambda_max(self) -> float:
        """Largest admissible scale factor.

        Depolarizing: the output becomes maximally mixed at ``(1 - 4**-k) / p``.
        Amplitude damping: ``1 / p`` (or ``1 / p'`` when scaling on ``p'``).
        """
        if self.p == 0:
            return np.inf
        if self.kind is NoiseKind.DEPOLARIZING:
            return (1.0 - 4.0 ** (-self.num_qubits)) / self.p
        if self.scale_on_p_prime:
            return 1.0 / self.p_prime
        return 1.0 / self.p

    def scaled_rate(self, lam: float) -> float:
        """Physical error rate after scaling by ``lam``."""
        if self.kind is NoiseKind.AMPLITUDE_DAMPING and self.scale_on_p_prime:
            return 1.0 - (1.0 - lam * self.p_prime) ** 2
        return lam * self.p


def depolarizing_superop(p: float, k: int = 1) -> Superoperator:
    """``(1-p) Id + p * mean over non-identity Pauli conjugations``."""
    _check_prob(p)
    paulis = pauli_strings(k)
    d = 2**k
    mix = sum(np.kron(m.conj(), m) for _, m in paulis) / len(paulis)
    return Superoperator((1.0 - p) * np.eye(d * d) + p * mix)


def amplitude_damping_superop(p: float) -> Superoperator:
    _check_prob(p)
    k0 = np.array([[1.0, 0.0], [0.0, np.sqrt(1.0 - p)]])
    k1 = np.array([[0.0, np.sqrt(p)], [0.0, 0.0]])
    return kraus_to_superop([k0, k1])


def scaled_noise(model: NoiseModel, lam: float) -> Superoperator:
    """The noise channel ``E^(lam)`` of ``model``."""
    if not lam >= 0:
        raise ValidationError(f"scale factor must be non-negative, got {lam}")
    # lam = 1 is the hardware channel itself and always admissible
    lmax = max(model.lambda_max(), 1.0)
    if lam > lmax * (1 + _LAMBDA_SLACK):
        raise ValidationError(
            f"scale factor {lam} exceeds the physical bound lambda_max = {lmax:.12g} "
            f"for {model.kind.value} noise with p = {model.p}"
        )
    rate = min(model.scaled_rate(lam), 1.0)
    k = model.num_qubits
    if model.kind is NoiseKind.DEPOLARIZING:
        return depolarizing_superop(rate, k)
    single = amplitude_damping_superop(rate)
    if k == 1:
        return single
    out = Superoperator.identity(2**k)
    for q in range(k):
        out = compose(embed(single, [q], k), out)
    return out


@dataclass(frozen=True, eq=False)
class NoisyOperation:
    """An implementable operation, possibly noise-scaled.

    ``gate`` is the ideal unitary channel applied before the noise.  It lets
    the same operation be re-realized under a different (actual) noise model
    than the one used to build ``superop``.  Operations with ``gate=None``
    are fixed channels (e.g. convex mixtures) and ignore the model.
    """

    label: str
    superop: Superoperator
    lam: float = 1.0
    gate: Superoperator | None = None
    scaling: str = "parametric"  # "parametric" | "folding" | "fixed"
    description: str = ""

    def __post_init__(self):
        if self.scaling not in ("parametric", "folding", "fixed"):
            raise ValidationError(f"unknown scaling mode {self.scaling!r}")

    @property
    def dim(self) -> int:
        return self.superop.dim

    def under(self, model: NoiseModel | None) -> Superoperator:
        """Superoperator of this operation when the hardware noise is ``model``."""
        if model is None or self.gate is None or self.scaling == "fixed":
            return self.superop
        if self.scaling == "folding":
            base = noisy_gate(self.gate, model, 1.0)
            dagger = noisy_gate(Superoperator(self.gate.matrix.conj().T), model, 1.0)
            return fold_gate(base, self.lam, dagger)
        return noisy_gate(self.gate, model, self.lam).superop


def _as_unitary_superop(g) -> Superoperator:
    if isinstance(g, Superoperator):
        return g
    return unitary_to_superop(g)


def noisy_gate(g, model: NoiseModel, lam: float = 1.0, label: str = "G") -> NoisyOperation:
    """``E^(lam) o G`` where ``g`` is a unitary matrix or its superoperator."""
    gs = _as_unitary_superop(g)
    noise = scaled_noise(model, lam)
    if noise.dim != gs.dim:
        raise ValidationError(f"noise acts on dim {noise.dim}, gate on dim {gs.dim}")
    return NoisyOperation(
        label=label,
        superop=compose(noise, gs),
        lam=float(lam),
        gate=gs,
        scaling="parametric",
        description=f"{model.kind.value}(p={model.p:g}, lambda={lam:g}) o {label}",
    )


def fold_gate(noisy_g: NoisyOperation, lam: int, dagger_noisy: NoisyOperation) -> Superoperator:
    """Unitary folding ``G1 o (Gdag1 o G1)^((lam-1)/2)`` with base-noise factors."""
    if isinstance(lam, (float, np.floating)):
        if not float(lam).is_integer():
            raise ValidationError(f"folding scale factor must be an odd integer, got {lam}")
        lam = int(lam)
    if lam < 1 or lam % 2 == 0:
        raise ValidationError(f"folding scale factor must be an odd integer >= 1, got {lam}")
    if abs(noisy_g.lam - 1.0) > TOL.algebra or abs(dagger_noisy.lam - 1.0) > TOL.algebra:
        raise ValidationError("folding expects operations at the base noise level (lambda = 1)")
    pair = dagger_noisy.superop.matrix
    g1 = noisy_g.superop.matrix
    loop = np.linalg.matrix_power(pair @ g1, (lam - 1) // 2)
    return Superoperator(g1 @ loop)
