from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nepec.circuits import Circuit, GateSpec, noisy_circuit_superop, rb_circuit
from nepec.errors import ValidationError
from nepec.estimators import (
    Budget,
    batch_statistics,
    exact_mitigated_value,
    extrapolation_weights,
    gate_extrapolation_reps,
    merge_results,
    monte_carlo_estimate,
    per_estimate,
    per_reps,
    sample_instance,
    virtual_zne,
    zne_extrapolate,
)
from nepec.noise import NoiseModel
from nepec.quasiprob import QuasiProbRep, depolarizing_per_rep, pauli_twisted_basis
from nepec.superop import DensityMatrix, Observable, apply, expectation

P0 = Observable.projector(1, 0)
RHO0 = DensityMatrix.basis_state(1, 0)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def _unmitigated(c, p):
    s = noisy_circuit_superop(c, NoiseModel.depolarizing(p), [1.0] * len(c))
    return expectation(P0, apply(s, RHO0))


# ---- batch statistics ----------------------------------------------------


def test_batch_statistics_examples():
    mean, se, means = batch_statistics([0.3] * 100, 10)
    assert mean == pytest.approx(0.3) and se == pytest.approx(0.0, abs=1e-15)
    assert len(batch_statistics(np.zeros(50_000), 25)[2]) == 25
    mean, _, means = batch_statistics([1, -1] * 10, 2)
    assert mean == 0.0 and means.tolist() == [0.0, 0.0]


def test_batch_statistics_uneven_and_single():
    mean, se, means = batch_statistics([1, 2, 3, 4, 5], 2)
    # contiguous [1, 2] and [3, 4], remainder 5 goes to the first batch
    assert means.tolist() == pytest.approx([8 / 3, 3.5])
    assert mean == 3.0
    _, se1, _ = batch_statistics([1.0, 2.0, 3.0], 1)
    assert se1 == pytest.approx(np.std([1, 2, 3], ddof=1) / math.sqrt(3))
    with pytest.raises(ValidationError):
        batch_statistics([1.0], 2)


# ---- sampling ------------------------------------------------------------


def test_sampler_positive_rep_has_positive_sign():
    rep = depolarizing_per_rep(H, 0.01, 1.0)
    for s in range(20):
        inst = sample_instance([rep, rep], rng=s)
        assert inst.sign == 1 and inst.op_choices == (0, 0)


def test_identity_branch_probability():
    rep = depolarizing_per_rep(H, 0.01, 0.0)
    prob = abs(rep.etas[0]) / rep.one_norm
    assert prob == pytest.approx(1.0101351351351351 / 1.0202702702702702, abs=1e-12)
    assert prob == pytest.approx(0.990066, abs=1e-6)


def test_branch_frequencies_match_quasi_probabilities():
    rep = depolarizing_per_rep(H, 0.1, 0.0)
    gen = np.random.default_rng(123)
    n = 100_000
    counts = np.zeros(4)
    for _ in range(n // 1000):
        for inst in (sample_instance([rep], gen) for _ in range(1000)):
            counts[inst.op_choices[0]] += 1
    probs = np.abs(rep.etas) / rep.one_norm
    sigma = np.sqrt(n * probs * (1 - probs))
    assert np.all(np.abs(counts - n * probs) < 4 * sigma)


# ---- exact evaluation ----------------------------------------------------


def test_single_gate_cancellation_is_exact():
    c = Circuit(1, (GateSpec("H", H),))
    val = exact_mitigated_value(per_reps(c, 0.05, 0.0), NoiseModel.depolarizing(0.05), Observable(np.diag([1.0, -1.0])), RHO0)
    assert val == pytest.approx(expectation(Observable(np.diag([1.0, -1.0])), apply(c.gates[0].superop, RHO0)), abs=1e-12)


def test_exact_pec_on_rb3():
    c = rb_circuit(3, seed=0)
    val = exact_mitigated_value(per_reps(c, 0.05, 0.0), NoiseModel.depolarizing(0.05), P0, RHO0)
    assert val == pytest.approx(1.0, abs=1e-9)


def test_exact_pec_brute_force_enumeration():
    # independent oracle: loop over all 4^3 operation strings by hand
    import itertools

    c = rb_circuit(3, seed=2)
    p = 0.05
    reps = per_reps(c, p, 0.0)
    total = 0.0
    for combo in itertools.product(range(4), repeat=3):
        rho = RHO0.data.copy()
        w = 1.0
        for rep, a in zip(reps, combo):
            eta, op = rep.terms[a]
            w *= eta
            m = op.superop.matrix
            rho = (m @ rho.reshape(-1, order="F")).reshape(2, 2, order="F")
        total += w * rho[0, 0].real
    assert total == pytest.approx(exact_mitigated_value(reps, NoiseModel.depolarizing(p), P0, RHO0), abs=1e-12)


def test_exact_linear_gate_extrapolation_on_rb3():
    c = rb_circuit(3, seed=1)
    m = NoiseModel.depolarizing(0.05)
    val = exact_mitigated_value(gate_extrapolation_reps(c, m, [1, 3], scaling_mode="parametric"), m, P0, RHO0)
    assert val == pytest.approx(1.0, abs=1e-9)
    # folding multiplies the decay, (1 - eps)^lam, which is not affine in lam
    folded = exact_mitigated_value(gate_extrapolation_reps(c, m, [1, 3], scaling_mode="folding"), m, P0, RHO0)
    eps = 4 * 0.05 / 3
    per_gate = 1.5 * (1 - eps) - 0.5 * (1 - eps) ** 3
    assert folded == pytest.approx(0.5 + 0.5 * per_gate**3, abs=1e-12)


def test_exact_guard_on_term_count():
    c = rb_circuit(14, seed=0)
    with pytest.raises(ValidationError):
        exact_mitigated_value(per_reps(c, 0.01, 0.0), NoiseModel.depolarizing(0.01), P0, RHO0)


# ---- Monte Carlo ---------------------------------------------------------


def test_zero_noise_collapses_to_ideal():
    c = rb_circuit(10, seed=2)
    res = monte_carlo_estimate(per_reps(c, 0.0, 0.0), NoiseModel.depolarizing(0.0), P0, RHO0, 100, None, 4, rng=0)
    assert res.estimate == pytest.approx(1.0, abs=1e-12) and res.gamma == 1.0


def test_depth14_pec_is_unbiased_at_matched_noise():
    c = rb_circuit(14, seed=0)
    res = monte_carlo_estimate(per_reps(c, 0.01, 0.0), NoiseModel.depolarizing(0.01), P0, RHO0, 5000, None, 10, rng=1)
    assert abs(res.estimate - 1.0) < 5 * res.std_error
    assert res.gamma == pytest.approx(1.0202702702702702**14, rel=1e-12)


def test_results_do_not_depend_on_worker_count():
    c = rb_circuit(8, seed=3)
    reps = per_reps(c, 0.02, 0.0)
    m = NoiseModel.depolarizing(0.02)
    a = monte_carlo_estimate(reps, m, P0, RHO0, 4000, 1, 8, rng=5, workers=1)
    b = monte_carlo_estimate(reps, m, P0, RHO0, 4000, 1, 8, rng=5, workers=4)
    assert np.array_equal(a.samples, b.samples)


def test_shot_mode_values_are_eigenvalue_averages():
    c = rb_circuit(4, seed=0)
    m = NoiseModel.depolarizing(0.05)
    res = monte_carlo_estimate(per_reps(c, 0.05, 1.0), m, P0, RHO0, 1000, 3, 1, rng=0)
    assert set(np.round(res.samples * 3).astype(int)) <= {0, 1, 2, 3}
    assert abs(res.estimate - _unmitigated(c, 0.05)) < 5 * res.std_error


def test_per_batch_variance_below_pec_on_fig3_setup():
    c = rb_circuit(46, seed=0)
    m = NoiseModel.depolarizing(0.015)
    b = Budget(50_000, 1, 25)
    pec = per_estimate(c, m, None, 0.0, b, rng=0)
    per = per_estimate(c, m, None, 0.2, b, rng=0)
    assert len(pec.batch_means) == 25
    assert np.var(per.batch_means, ddof=1) < np.var(pec.batch_means, ddof=1)
    assert per.std_error < pec.std_error


def test_per_estimate_endpoints():
    c = rb_circuit(5, seed=0)
    m = NoiseModel.depolarizing(0.02)
    unm = per_estimate(c, m, P0, 1.0, Budget(200, None, 2), rng=0)
    assert unm.gamma == 1.0
    assert unm.estimate == pytest.approx(_unmitigated(c, 0.02), abs=1e-12)
    pec = per_estimate(c, m, P0, 0.0, Budget(200, None, 2), rng=0)
    assert pec.gamma == pytest.approx(depolarizing_per_rep(H, 0.02, 0.0).one_norm ** 5, rel=1e-12)
    with pytest.raises(ValidationError):
        per_estimate(c, m, P0, 1.5, Budget(10))


def test_per_gamma_follows_affine_law():
    c = rb_circuit(46, seed=0)
    m = NoiseModel.depolarizing(0.015)
    g = depolarizing_per_rep(H, 0.015, 0.0).one_norm
    for lam in (0.0, 0.25, 0.5, 0.75, 1.0):
        res = per_estimate(c, m, None, lam, Budget(10), rng=0)
        assert res.gamma == pytest.approx((g - lam * (g - 1)) ** 46, rel=1e-12)


def test_per_with_general_pec_reps_matches_closed_form():
    c = rb_circuit(3, seed=0)
    m = NoiseModel.depolarizing(0.05)
    closed = per_reps(c, 0.05, 0.0)
    a = per_estimate(c, m, P0, 0.5, Budget(3000, None, 3), rng=9)
    b = per_estimate(c, m, P0, 0.5, Budget(3000, None, 3), rng=9, pec_reps=closed)
    assert a.gamma == pytest.approx(b.gamma, rel=1e-12)
    assert abs(a.estimate - b.estimate) < 5 * math.hypot(a.std_error, b.std_error)


def test_virtual_zne_examples():
    c = rb_circuit(6, seed=0)
    noiseless = NoiseModel.depolarizing(0.0)
    for s in ([0.2, 1.0], [0.5, 0.75, 1.0]):
        res = virtual_zne(c, noiseless, P0, s, Budget(100, None, 2), rng=0)
        assert res.estimate == pytest.approx(1.0, abs=1e-12)
    m = NoiseModel.depolarizing(0.02)
    single = virtual_zne(c, m, P0, [1.0], Budget(100, None, 2), rng=0)
    assert single.estimate == pytest.approx(_unmitigated(c, 0.02), abs=1e-12)
    with pytest.raises(ValidationError):
        virtual_zne(c, m, P0, [0.0, 1.0], Budget(10))


def test_virtual_zne_fig3b_setup():
    c = rb_circuit(46, seed=0)
    m = NoiseModel.depolarizing(0.015)
    b = Budget(50_000, 1, 25)
    vz = virtual_zne(c, m, None, [0.2, 1.0], b, rng=0)
    unm = _unmitigated(c, 0.015)
    assert abs(vz.estimate - 1.0) < abs(unm - 1.0)
    w = vz.details["weights"]
    assert w == pytest.approx([1.25, -0.25])
    parts = vz.details["components"]
    assert vz.std_error == pytest.approx(math.sqrt(sum((wi * r.std_error) ** 2 for wi, r in zip(w, parts))))
    assert vz.batch_means.mean() == pytest.approx(vz.estimate, abs=1e-12)


# ---- extrapolation -------------------------------------------------------


def test_zne_examples():
    assert zne_extrapolate([(1, 0.7), (3, 0.7)]) == pytest.approx(0.7)
    assert zne_extrapolate([(1, 2.0 + 0.5), (3, 2.0 + 1.5)]) == pytest.approx(2.0)
    assert zne_extrapolate([(1, 1.0), (2, 2.0), (3, 3.0)], method="poly", degree=1) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValidationError):
        extrapolation_weights([1.0, 1.0])
    with pytest.raises(ValidationError):
        extrapolation_weights([1.0, 2.0], method="poly")


def test_zne_on_rb_decay_curve_has_known_bias():
    p, d = 0.01, 14

    def e(lam):
        return 0.5 + 0.5 * (1 - 4 * lam * p / 3) ** d

    est = zne_extrapolate([(1, e(1)), (3, e(3))])
    # independent: the line through (1, e1), (3, e3) evaluated at 0
    slope = (e(3) - e(1)) / 2
    assert est - 1.0 == pytest.approx(e(1) - slope - 1.0, abs=1e-14)
    assert est - 1.0 < 0


# ---- invariants ----------------------------------------------------------


@pytest.mark.invariant
@given(
    s=st.lists(st.floats(0.05, 5), min_size=2, max_size=4, unique=True),
    a=st.lists(st.floats(-10, 10), min_size=4, max_size=4),
    b=st.lists(st.floats(-10, 10), min_size=4, max_size=4),
    alpha=st.floats(-5, 5),
    beta=st.floats(-5, 5),
)
def test_zne_is_linear(s, a, b, alpha, beta):
    from hypothesis import assume

    assume(min(np.diff(sorted(s))) > 0.05)
    n = len(s)
    a, b = np.array(a[:n]), np.array(b[:n])
    combo = alpha * a + beta * b
    lhs = zne_extrapolate(list(zip(s, combo)))
    rhs = alpha * zne_extrapolate(list(zip(s, a))) + beta * zne_extrapolate(list(zip(s, b)))
    w = np.abs(extrapolation_weights(s)).sum()
    assert abs(lhs - rhs) < 1e-10 * w * (1 + np.abs(combo).max() + abs(alpha) * np.abs(a).max() + abs(beta) * np.abs(b).max())


@pytest.mark.invariant
@given(
    values=st.lists(st.floats(-100, 100), min_size=1, max_size=40),
    n_batches=st.integers(1, 8),
)
def test_batch_means_average_to_grand_mean(values, n_batches):
    from hypothesis import assume

    size = max(1, len(values) // n_batches)
    v = np.array((values * n_batches)[: size * n_batches])
    assume(v.size >= n_batches)
    mean, _, means = batch_statistics(v, n_batches)
    assert abs(means.mean() - mean) < 1e-12 * max(1.0, np.abs(v).max())


@pytest.mark.invariant
@given(seed_a=st.integers(0, 2**32 - 1), seed_b=st.integers(0, 2**32 - 1), n=st.integers(2, 60))
def test_merging_equals_pooled_run(seed_a, seed_b, n):
    c = rb_circuit(3, seed=0)
    reps = per_reps(c, 0.05, 0.0)
    m = NoiseModel.depolarizing(0.05)
    a = monte_carlo_estimate(reps, m, P0, RHO0, n, None, 2, rng=[seed_a, 0])
    b = monte_carlo_estimate(reps, m, P0, RHO0, n + 3, None, 1, rng=[seed_b, 1])
    merged = merge_results(a, b)
    union = np.concatenate([a.samples, b.samples])
    assert abs(merged.estimate - union.mean()) < 1e-12
    assert merged.n_samples == union.size


@pytest.mark.invariant
@given(seed=st.integers(0, 2**32 - 1), depth=st.integers(1, 6), p=st.floats(0.001, 0.2), lam=st.floats(0, 1))
def test_per_sample_variance_bounded_by_gamma_squared(seed, depth, p, lam):
    c = rb_circuit(depth, seed)
    res = per_estimate(c, NoiseModel.depolarizing(p), P0, lam, Budget(400, None, 1), rng=seed)
    assert np.var(res.samples) <= res.gamma**2 + 1e-12
    assert np.all(np.abs(res.samples) <= res.gamma + 1e-12)


def test_unbiasedness_on_three_gate_circuit():
    c = rb_circuit(3, seed=0)
    m = NoiseModel.depolarizing(0.05)
    reps = per_reps(c, 0.05, 0.0)
    exact = exact_mitigated_value(reps, m, P0, RHO0)
    n = 100_000
    res = monte_carlo_estimate(reps, m, P0, RHO0, n, None, 10, rng=0)
    assert abs(res.estimate - exact) <= 4 * res.gamma / math.sqrt(n)


def test_variance_decreases_with_virtual_noise_level():
    # one-sided 3 sigma over 20 seed replicates of the per-sample variance
    c = rb_circuit(20, seed=0)
    m = NoiseModel.depolarizing(0.02)
    diffs = []
    for s in range(20):
        lo = per_estimate(c, m, P0, 0.3, Budget(2000), rng=[s, 0])
        hi = per_estimate(c, m, P0, 0.7, Budget(2000), rng=[s, 1])
        diffs.append(np.var(lo.samples, ddof=1) - np.var(hi.samples, ddof=1))
    diffs = np.array(diffs)
    assert diffs.mean() - 3 * diffs.std(ddof=1) / math.sqrt(len(diffs)) > 0


def test_budget_validation():
    with pytest.raises(ValidationError):
        Budget(10, None, 20)
    with pytest.raises(ValidationError):
        Budget(10, 0)


def test_rep_requires_matching_targets_dimension():
    basis = pauli_twisted_basis(H, NoiseModel.depolarizing(0.01))
    rep = QuasiProbRep(((1.0, basis[0]),))
    assert rep.targets == (0,)
