from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nepec.circuits import (
    Circuit,
    GateSpec,
    clifford_group,
    clifford_index,
    clifford_inverse_table,
    ideal_superop,
    noisy_circuit_superop,
    rb_circuit,
)
from nepec.errors import ValidationError
from nepec.noise import NoiseModel
from nepec.superop import DensityMatrix, Observable, Superoperator, apply, expectation, unitary_to_superop

X = np.array([[0, 1], [1, 0]], dtype=complex)
P0 = Observable.projector(1, 0)
RHO0 = DensityMatrix.basis_state(1, 0)


def _phase_equal(a, b):
    overlap = np.trace(a.conj().T @ b)
    return abs(abs(overlap) - a.shape[0]) < 1e-9


def test_empty_and_xx_circuits_are_identity():
    assert ideal_superop(Circuit(1)).allclose(Superoperator.identity(2))
    xx = Circuit(1, (GateSpec("X", X), GateSpec("X", X)))
    assert ideal_superop(xx).allclose(Superoperator.identity(2))


def test_gate_validation():
    with pytest.raises(ValidationError):
        GateSpec("bad", np.diag([1.0, 0.5]))
    with pytest.raises(ValidationError):
        GateSpec("X", X, targets=(0, 1))
    with pytest.raises(ValidationError):
        Circuit(1, (GateSpec("X", X, targets=(1,)),))
    with pytest.raises(ValidationError):
        Circuit(5)


def test_two_qubit_circuit_embedding():
    c = Circuit(2, (GateSpec("X", X, targets=(1,)),))
    out = apply(ideal_superop(c), DensityMatrix.basis_state(2, 0))
    assert np.allclose(out.data, DensityMatrix.basis_state(2, 1).data)


def test_clifford_group_structure():
    group = clifford_group()
    assert len(group) == 24
    assert np.allclose(group[0], np.eye(2))
    # closure under multiplication, checked by brute-force search up to phase
    for a in group:
        for b in group:
            assert any(_phase_equal(a @ b, c) for c in group)
    inv = clifford_inverse_table()
    for i, u in enumerate(group):
        assert _phase_equal(group[inv[i]] @ u, np.eye(2))
        assert clifford_index(u * np.exp(0.3j)) == i


def test_rb_circuit_examples():
    c1 = rb_circuit(1, seed=0)
    assert len(c1) == 1 and _phase_equal(c1.gates[0].unitary, np.eye(2))
    c14 = rb_circuit(14, seed=3)
    assert len(c14) == 14
    assert expectation(P0, apply(ideal_superop(c14), RHO0)) == pytest.approx(1.0, abs=1e-10)
    c46 = rb_circuit(46, seed=3)
    assert len(c46) == 46
    assert ideal_superop(c46).allclose(Superoperator.identity(2), atol=1e-10)
    with pytest.raises(ValidationError):
        rb_circuit(0)


def test_depth14_noisy_value_matches_depolarizing_decay():
    p = 0.01
    c = rb_circuit(14, seed=0)
    val = expectation(P0, apply(noisy_circuit_superop(c, NoiseModel.depolarizing(p), [1.0] * 14), RHO0))
    expected = 0.5 + 0.5 * (1 - 4 * p / 3) ** 14
    assert val == pytest.approx(expected, abs=1e-12)
    assert val == pytest.approx(0.914340, abs=1e-6)


def test_uniform_scaling_equals_rate_scaling():
    c = rb_circuit(10, seed=1)
    a = noisy_circuit_superop(c, NoiseModel.depolarizing(0.01), [3.0] * 10)
    b = noisy_circuit_superop(c, NoiseModel.depolarizing(0.03), [1.0] * 10)
    assert a.allclose(b, atol=1e-12)


def test_noisy_circuit_length_mismatch():
    with pytest.raises(ValidationError):
        noisy_circuit_superop(rb_circuit(3, 0), NoiseModel.depolarizing(0.01), [1.0])


def test_circuit_json_roundtrip():
    c = rb_circuit(7, seed=4)
    back = Circuit.from_json(c.to_json())
    assert back.num_qubits == 1 and [g.label for g in back.gates] == [g.label for g in c.gates]
    for g, h in zip(c.gates, back.gates):
        assert np.array_equal(g.unitary, h.unitary)
    d = c.to_dict()
    assert d["qubits"] == 1
    assert d["gates"][0]["targets"] == [0]
    assert len(d["gates"][0]["matrix"][0][0]) == 2  # (re, im) pairs, row-major


# ---- invariants ----------------------------------------------------------


@pytest.mark.invariant
@given(depth=st.integers(1, 60), seed=st.integers(0, 2**32 - 1))
def test_rb_is_deterministic(depth, seed):
    assert rb_circuit(depth, seed).to_json() == rb_circuit(depth, seed).to_json()


@pytest.mark.invariant
@given(depth=st.integers(1, 100), seed=st.integers(0, 2**32 - 1))
def test_rb_composes_to_identity(depth, seed):
    assert ideal_superop(rb_circuit(depth, seed)).allclose(Superoperator.identity(2), atol=1e-10)


@pytest.mark.invariant
@given(depth=st.integers(1, 30), seed=st.integers(0, 2**32 - 1), p=st.floats(0, 0.75),
       kind=st.sampled_from(["depolarizing", "amplitude_damping"]))
def test_zero_scaling_is_ideal(depth, seed, p, kind):
    c = rb_circuit(depth, seed)
    noisy = noisy_circuit_superop(c, NoiseModel(kind, p), [0.0] * depth)
    assert np.array_equal(noisy.matrix, ideal_superop(c).matrix)


def test_gate_superop_property():
    g = GateSpec("X", X)
    assert g.superop.allclose(unitary_to_superop(X))
