"""Gate-list circuits and single-qubit randomized-benchmarking sequences."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from nepec.config import TOL
from nepec.errors import ValidationError
from nepec.noise import NoiseModel, noisy_gate
from nepec.superop import MAX_QUBITS, Superoperator, compose, embed, unitary_to_superop

H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S = np.array([[1, 0], [0, 1j]], dtype=complex)


@dataclass(frozen=True, eq=False)
class GateSpec:
    label: str
    unitary: np.ndarray
    targets: tuple[int, ...] = (0,)

    def __post_init__(self):
        u = np.array(self.unitary, dtype=complex)
        u.setflags(write=False)
        object.__setattr__(self, "unitary", u)
        object.__setattr__(self, "targets", tuple(int(q) for q in self.targets))
        if u.shape != (2 ** len(self.targets),) * 2:
            raise ValidationError(f"gate {self.label}: {u.shape} matrix for {len(self.targets)} targets")
        dev = np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0]))
        if dev > TOL.unitary:
            raise ValidationError(f"gate {self.label} is not unitary: deviation {dev:.3e}")

    @property
    def superop(self) -> Superoperator:
        return unitary_to_superop(self.unitary)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in self.unitary],
            "targets": list(self.targets),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GateSpec":
        m = np.array([[complex(re, im) for re, im in row] for row in d["matrix"]])
        return cls(d["label"], m, tuple(d.get("targets", [0])))


@dataclass(frozen=True, eq=False)
class Circuit:
    num_qubits: int
    gates: tuple[GateSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if not (1 <= self.num_qubits <= MAX_QUBITS):
            raise ValidationError(f"num_qubits must be in [1, {MAX_QUBITS}], got {self.num_qubits}")
        for g in self.gates:
            if any(q < 0 or q >= self.num_qubits for q in g.targets):
                raise ValidationError(f"gate {g.label} targets {g.targets} out of range")
            if len(set(g.targets)) != len(g.targets):
                raise ValidationError(f"gate {g.label} has duplicate targets {g.targets}")

    def __len__(self) -> int:
        return len(self.gates)

    @property
    def dim(self) -> int:
        return 2**self.num_qubits

    def to_dict(self) -> dict:
        return {"qubits": self.num_qubits, "gates": [g.to_dict() for g in self.gates]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Circuit":
        return cls(int(d["qubits"]), tuple(GateSpec.from_dict(g) for g in d["gates"]))

    @classmethod
    def from_json(cls, text: str) -> "Circuit":
        return cls.from_dict(json.loads(text))


def ideal_superop(c: Circuit) -> Superoperator:
    out = Superoperator.identity(c.dim)
    for g in c.gates:
        out = compose(embed(g.superop, g.targets, c.num_qubits), out)
    return out


def noisy_circuit_superop(c: Circuit, model: NoiseModel, lambdas: Sequence[float]) -> Superoperator:
    """Every gate followed by its own noise, scaled by the matching entry of ``lambdas``."""
    if len(lambdas) != len(c.gates):
        raise ValidationError(f"{len(c.gates)} gates but {len(lambdas)} scale factors")
    out = Superoperator.identity(c.dim)
    for g, lam in zip(c.gates, lambdas):
        gate_model = model if model.num_qubits == len(g.targets) else model_for_qubits(model, len(g.targets))
        op = noisy_gate(g.unitary, gate_model, lam, label=g.label)
        out = compose(embed(op.superop, g.targets, c.num_qubits), out)
    return out


def model_for_qubits(model: NoiseModel, k: int) -> NoiseModel:
    return NoiseModel(model.kind, model.p, k, model.scale_on_p_prime)


def _phase_key(u: np.ndarray) -> tuple:
    flat = u.ravel()
    pivot = flat[np.argmax(np.abs(flat) > 1e-9)]
    v = flat * (abs(pivot) / pivot)
    return tuple(np.round(np.concatenate([v.real, v.imag]), 8) + 0.0)


@lru_cache(maxsize=1)
def clifford_group() -> tuple[np.ndarray, ...]:
    """The 24 single-qubit Cliffords (mod phase), generated breadth-first from H and S."""
    start = np.eye(2, dtype=complex)
    seen = {_phase_key(start): 0}
    elems = [start]
    frontier = [start]
    while frontier:
        nxt = []
        for u in frontier:
            for gen in (H, S):
                w = gen @ u
                key = _phase_key(w)
                if key not in seen:
                    seen[key] = len(elems)
                    elems.append(w)
                    nxt.append(w)
        frontier = nxt
    if len(elems) != 24:
        raise AssertionError(f"generated {len(elems)} Cliffords, expected 24")
    for e in elems:
        e.setflags(write=False)
    return tuple(elems)


@lru_cache(maxsize=1)
def _clifford_lookup() -> dict:
    return {_phase_key(u): i for i, u in enumerate(clifford_group())}


def clifford_index(u: np.ndarray) -> int:
    return _clifford_lookup()[_phase_key(np.asarray(u))]


@lru_cache(maxsize=1)
def clifford_inverse_table() -> tuple[int, ...]:
    group = clifford_group()
    return tuple(clifford_index(u.conj().T) for u in group)


def rb_circuit(depth: int, seed=None) -> Circuit:
    """``depth - 1`` uniformly random Cliffords closed by the inverse of their product."""
    if depth < 1:
        raise ValidationError(f"RB depth must be >= 1, got {depth}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    group = clifford_group()
    idx = rng.integers(0, len(group), size=depth - 1)
    total = np.eye(2, dtype=complex)
    gates = []
    for i in idx:
        total = group[i] @ total
        gates.append(GateSpec(f"C{i}", group[i]))
    inv = clifford_inverse_table()[clifford_index(total)]
    gates.append(GateSpec(f"C{inv}", group[inv]))
    return Circuit(1, tuple(gates))
