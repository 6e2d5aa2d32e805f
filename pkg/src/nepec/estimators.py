"""Exact and Monte Carlo estimators for mitigated expectation values.

Each gate of a circuit carries a quasi-probability representation.  The
Monte Carlo estimator samples one operation per gate with probability
``|eta| / gamma_i``, runs the sampled noisy circuit and reweights the result
by ``gamma * sign``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from nepec.circuits import Circuit, model_for_qubits
from nepec.config import TOL
from nepec.errors import DegenerateSplit, NumericalConsistencyError, ValidationError
from nepec.noise import NoiseKind, NoiseModel, fold_gate  # noqa: F401  (fold_gate re-exported)
from nepec.quasiprob import (
    QuasiProbRep,
    canonical_scaled_rep,
    canonical_split,
    depolarizing_per_rep,
    gate_extrapolation_rep,
    polyfit_coefficients,
    richardson_coefficients,
)
from nepec.superop import DensityMatrix, Observable, embed, vec

MAX_EXACT_TERMS = 10**6
_CHUNK_ROWS = 20_000


@dataclass(frozen=True)
class Budget:
    n_samples: int
    shots_per_sample: int | None = None  # None: exact expectation per sampled circuit
    n_batches: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.n_batches < 1 or self.n_samples < self.n_batches:
            raise ValidationError(
                f"need n_samples >= n_batches >= 1, got {self.n_samples} and {self.n_batches}"
            )
        if self.shots_per_sample is not None and self.shots_per_sample < 1:
            raise ValidationError(f"shots_per_sample must be >= 1, got {self.shots_per_sample}")


@dataclass(frozen=True)
class SampledInstance:
    op_choices: tuple[int, ...]
    lambda_choices: tuple[float, ...]
    sign: int
    gamma: float


@dataclass(frozen=True, eq=False)
class EstimatorResult:
    estimate: float
    std_error: float
    gamma: float
    n_samples: int
    shots_per_sample: int | str
    batch_means: np.ndarray
    samples: np.ndarray | None = field(default=None, repr=False)
    details: dict = field(default_factory=dict, repr=False)


def batch_statistics(values: Sequence[float], n_batches: int) -> tuple[float, float, np.ndarray]:
    """Grand mean, standard error from batch means, and the batch means.

    Values are cut into ``n_batches`` contiguous batches; a trailing remainder
    is dealt round-robin to the first batches.  With one batch the standard
    error falls back to the per-sample estimate.
    """
    if n_batches <= 0:
        raise ValidationError(f"n_batches must be positive, got {n_batches}")
    v = np.asarray(values, dtype=float)
    if v.size < n_batches:
        raise ValidationError(f"{v.size} values cannot fill {n_batches} batches")
    size = v.size // n_batches
    sums = v[: size * n_batches].reshape(n_batches, size).sum(axis=1)
    counts = np.full(n_batches, size)
    for j, x in enumerate(v[size * n_batches :]):
        sums[j % n_batches] += x
        counts[j % n_batches] += 1
    means = sums / counts
    mean = float(v.mean())
    if n_batches == 1:
        se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    else:
        se = float(means.std(ddof=1) / math.sqrt(n_batches))
    return mean, se, means


def _seed_sequence(rng) -> np.random.SeedSequence:
    if isinstance(rng, np.random.SeedSequence):
        return rng
    if isinstance(rng, np.random.Generator):
        return np.random.SeedSequence(int(rng.integers(2**63)))
    return np.random.SeedSequence(rng)


def _generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True, eq=False)
class _Compiled:
    """Per-gate operation matrices realized under the hardware noise, on the full register."""

    mats: list[np.ndarray]  # gate g: (n_terms, D, D)
    cum: list[np.ndarray]  # cumulative sampling probabilities
    signs: list[np.ndarray]
    lams: list[np.ndarray]
    gamma: float
    dim: int


def _gate_model(model: NoiseModel | None, k: int) -> NoiseModel | None:
    if model is None or model.num_qubits == k:
        return model
    return model_for_qubits(model, k)


def _compile(reps: Sequence[QuasiProbRep], model: NoiseModel | None, n: int) -> _Compiled:
    if not reps:
        raise ValidationError("need at least one gate representation")
    mats, cum, signs, lams = [], [], [], []
    gamma = 1.0
    for rep in reps:
        gm = _gate_model(model, len(rep.targets))
        mats.append(np.array([embed(op.under(gm), rep.targets, n).matrix for op in rep.ops]))
        w = np.abs(rep.etas)
        g = w.sum()
        gamma *= g
        c = np.cumsum(w / g)
        c[-1] = 1.0
        cum.append(c)
        signs.append(np.where(rep.etas < 0, -1, 1))
        lams.append(np.array([op.lam for op in rep.ops]))
    return _Compiled(mats, cum, signs, lams, gamma, 4**n)


def _choose(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)


def sample_instance(reps: Sequence[QuasiProbRep], rng=None) -> SampledInstance:
    """Draw one operation per gate with probability ``|eta| / gamma_i``."""
    if not reps:
        raise ValidationError("need at least one gate representation")
    gen = _generator(rng)
    u = gen.random(len(reps))
    choices, lams = [], []
    sign, gamma = 1, 1.0
    for rep, x in zip(reps, u):
        w = np.abs(rep.etas)
        g = w.sum()
        c = np.cumsum(w / g)
        c[-1] = 1.0
        a = int(_choose(c, x))
        choices.append(a)
        lams.append(rep.ops[a].lam)
        sign *= -1 if rep.etas[a] < 0 else 1
        gamma *= g
    return SampledInstance(tuple(choices), tuple(lams), sign, gamma)


class _Measurement:
    """Exact expectation or simulated projective shots for an observable."""

    def __init__(self, obs: Observable, shots: int | None):
        self.shots = shots
        self.readout = vec(obs.data.T)
        evals, evecs = np.linalg.eigh(obs.data)
        self.evals = evals
        # row k: vec(P_k^T) so that states @ row = tr[P_k rho]
        self.proj = np.array([vec(np.outer(v, v.conj()).T) for v in evecs.T])

    def values(self, states: np.ndarray, gen: np.random.Generator) -> np.ndarray:
        if self.shots is None:
            ev = states @ self.readout
            if np.max(np.abs(ev.imag), initial=0.0) > TOL.imag_residue:
                raise NumericalConsistencyError("complex expectation value in sampled circuit")
            return ev.real
        q = np.clip((states @ self.proj.T).real, 0.0, None)
        q /= q.sum(axis=1, keepdims=True)
        cum = np.cumsum(q, axis=1)
        u = gen.random((states.shape[0], self.shots))
        outcome = (u[:, :, None] > cum[:, None, :-1]).sum(axis=2)
        return self.evals[outcome].mean(axis=1)


def _run_chunk(comp: _Compiled, meas: _Measurement, rho0: np.ndarray, m: int, seed) -> np.ndarray:
    gen = np.random.default_rng(seed)
    out = []
    for start in range(0, m, _CHUNK_ROWS):
        rows = min(_CHUNK_ROWS, m - start)
        u = gen.random((rows, len(comp.mats)))
        states = np.tile(rho0, (rows, 1))
        sign = np.ones(rows)
        for g, mats in enumerate(comp.mats):
            idx = _choose(comp.cum[g], u[:, g])
            sign *= comp.signs[g][idx]
            for a in np.unique(idx):
                mask = idx == a
                states[mask] = states[mask] @ mats[a].T
        out.append(comp.gamma * sign * meas.values(states, gen))
    return np.concatenate(out)


def monte_carlo_estimate(
    reps: Sequence[QuasiProbRep],
    model: NoiseModel | None,
    obs: Observable,
    rho0: DensityMatrix,
    n_samples: int,
    shots_per_sample: int | str | None = None,
    n_batches: int = 1,
    rng=None,
    workers: int = 1,
) -> EstimatorResult:
    """Average of ``gamma * sign * <A>_noisy`` over sampled circuits.

    ``model`` is the noise the hardware actually has; operations are realized
    under it (``None`` uses each operation's stored superoperator).  Each batch
    draws from its own child stream of ``rng``, so results do not depend on
    ``workers``.
    """
    shots = None if shots_per_sample in (None, "exact") else int(shots_per_sample)
    budget = Budget(n_samples, shots, n_batches, workers)
    n = rho0.num_qubits
    if obs.dim != rho0.dim:
        raise ValidationError(f"observable dim {obs.dim} does not match state dim {rho0.dim}")
    comp = _compile(reps, model, n)
    meas = _Measurement(obs, shots)
    r0 = vec(rho0.data)
    sizes = [len(a) for a in np.array_split(np.arange(n_samples), n_batches)]
    seeds = _seed_sequence(rng).spawn(n_batches)
    jobs = list(zip(sizes, seeds))
    if budget.workers > 1:
        with ThreadPoolExecutor(max_workers=budget.workers) as pool:
            parts = list(pool.map(lambda job: _run_chunk(comp, meas, r0, *job), jobs))
    else:
        parts = [_run_chunk(comp, meas, r0, *job) for job in jobs]
    values = np.concatenate(parts)
    mean, se, means = batch_statistics(values, n_batches)
    return EstimatorResult(
        estimate=mean,
        std_error=se,
        gamma=comp.gamma,
        n_samples=n_samples,
        shots_per_sample="exact" if shots is None else shots,
        batch_means=means,
        samples=values,
    )


def merge_results(a: EstimatorResult, b: EstimatorResult) -> EstimatorResult:
    """Pool two runs of the same configuration drawn from disjoint streams."""
    if abs(a.gamma - b.gamma) > TOL.algebra * max(1.0, a.gamma) or a.shots_per_sample != b.shots_per_sample:
        raise ValidationError("can only merge results of the same configuration")
    n = a.n_samples + b.n_samples
    means = np.concatenate([a.batch_means, b.batch_means])
    est = (a.estimate * a.n_samples + b.estimate * b.n_samples) / n
    se = float(means.std(ddof=1) / math.sqrt(means.size)) if means.size > 1 else 0.0
    samples = None
    if a.samples is not None and b.samples is not None:
        samples = np.concatenate([a.samples, b.samples])
    return EstimatorResult(est, se, a.gamma, n, a.shots_per_sample, means, samples)


def exact_mitigated_value(
    reps: Sequence[QuasiProbRep],
    model: NoiseModel | None,
    obs: Observable,
    rho0: DensityMatrix,
    max_terms: int = MAX_EXACT_TERMS,
) -> float:
    """Sum ``eta_vec * <A>_noisy`` over every combination of per-gate operations."""
    n_terms = math.prod(len(r) for r in reps)
    if n_terms > max_terms:
        raise ValidationError(
            f"exact evaluation needs {n_terms} noisy circuits (limit {max_terms}); "
            "use monte_carlo_estimate instead"
        )
    comp = _compile(reps, model, rho0.num_qubits)
    states = vec(rho0.data)[None, :]
    weights = np.ones(1)
    for rep, mats in zip(reps, comp.mats):
        states = np.einsum("aij,nj->nai", mats, states).reshape(-1, comp.dim)
        weights = (weights[:, None] * rep.etas[None, :]).ravel()
    vals = states @ vec(obs.data.T)
    total = weights @ vals
    if abs(total.imag) > TOL.imag_residue:
        raise NumericalConsistencyError(f"mitigated value has imaginary part {total.imag:.3e}")
    return float(total.real)


def zne_extrapolate(
    points: Sequence[tuple[float, float]],
    method: str = "richardson",
    degree: int | None = None,
) -> float:
    """Zero-noise value as a fixed linear combination of the measured points."""
    lams = np.array([float(l) for l, _ in points])
    vals = np.array([float(v) for _, v in points])
    return float(extrapolation_weights(lams, method, degree) @ vals)


def extrapolation_weights(lams: Sequence[float], method: str = "richardson", degree: int | None = None) -> np.ndarray:
    lams = np.asarray(lams, dtype=float)
    if lams.size < 2:
        raise ValidationError("extrapolation needs at least two scale factors")
    if len(np.unique(lams)) != lams.size:
        raise ValidationError(f"duplicate scale factors {list(lams)}")
    if method == "richardson":
        return richardson_coefficients(lams)
    if method == "poly":
        if degree is None:
            raise ValidationError("polynomial extrapolation needs a degree")
        return polyfit_coefficients(lams, degree)
    raise ValidationError(f"unknown extrapolation method {method!r}")


def per_reps(circuit: Circuit, p: float, lam: float) -> list[QuasiProbRep]:
    """Closed-form depolarizing representations of every gate at virtual level ``lam``."""
    reps = []
    for g in circuit.gates:
        if len(g.targets) != 1:
            raise ValidationError("closed-form depolarizing representations are single-qubit")
        reps.append(depolarizing_per_rep(g.unitary, p, lam, label=g.label).with_targets(g.targets))
    return reps


def gate_extrapolation_reps(
    circuit: Circuit,
    model: NoiseModel,
    scale_factors: Sequence[float],
    coefficients: Sequence[float] | None = None,
    scaling_mode: str = "folding",
) -> list[QuasiProbRep]:
    """Noise-agnostic representations: each gate extrapolated over its own noise levels."""
    if coefficients is None:
        coefficients = richardson_coefficients(scale_factors)
    reps = []
    for g in circuit.gates:
        gm = _gate_model(model, len(g.targets))
        rep = gate_extrapolation_rep(
            g.label, scale_factors, coefficients, scaling_mode, gate=g.unitary, model=gm
        )
        reps.append(rep.with_targets(g.targets))
    return reps


def canonical_reps(pec_reps: Sequence[QuasiProbRep], lam: float) -> list[QuasiProbRep]:
    """Canonically scale arbitrary PEC representations to virtual level ``lam``."""
    out = []
    for rep in pec_reps:
        try:
            scaled = canonical_scaled_rep(canonical_split(rep), lam)
        except DegenerateSplit:
            scaled = rep  # already a probability distribution: nothing to scale
        out.append(scaled.with_targets(rep.targets))
    return out


def _default_state_and_obs(circuit: Circuit, obs, rho0):
    n = circuit.num_qubits
    if rho0 is None:
        rho0 = DensityMatrix.basis_state(n, 0)
    if obs is None:
        obs = Observable.projector(n, 0)
    return obs, rho0


def per_estimate(
    circuit: Circuit,
    model: NoiseModel,
    obs: Observable | None,
    lambda_virtual: float,
    budget: Budget,
    rng=None,
    *,
    rho0: DensityMatrix | None = None,
    assumed_p: float | None = None,
    pec_reps: Sequence[QuasiProbRep] | None = None,
    allow_amplification: bool = False,
) -> EstimatorResult:
    """Probabilistic error reduction: estimate at virtual noise level ``lambda_virtual``.

    ``lambda_virtual = 0`` is PEC and ``1`` is the unmitigated circuit.  With
    ``pec_reps`` the representations are scaled canonically; otherwise the
    closed-form depolarizing representation built for ``assumed_p`` (default:
    the model's own rate) is used.
    """
    lam = float(lambda_virtual)
    if not (0.0 <= lam <= 1.0):
        if not allow_amplification or lam < 0:
            raise ValidationError(
                f"virtual scale factor must lie in [0, 1], got {lam} "
                "(pass allow_amplification=True for lambda > 1)"
            )
    obs, rho0 = _default_state_and_obs(circuit, obs, rho0)
    if pec_reps is not None:
        reps = canonical_reps(pec_reps, lam)
    else:
        if model.kind is not NoiseKind.DEPOLARIZING:
            raise ValidationError("closed-form PER needs depolarizing noise; pass pec_reps otherwise")
        reps = per_reps(circuit, model.p if assumed_p is None else assumed_p, lam)
    res = monte_carlo_estimate(
        reps, model, obs, rho0, budget.n_samples, budget.shots_per_sample,
        budget.n_batches, rng, budget.workers,
    )
    res.details["lambda"] = lam
    return res


def virtual_zne(
    circuit: Circuit,
    model: NoiseModel,
    obs: Observable | None,
    s_virtual: Sequence[float],
    budget: Budget,
    method: str = "richardson",
    degree: int | None = None,
    rng=None,
    **per_kwargs,
) -> EstimatorResult:
    """PER at each virtual level in ``s_virtual`` followed by zero-noise extrapolation.

    Each level uses its own child stream of ``rng`` and its own ``budget``; the
    standard error is propagated as ``sqrt(sum eta^2 se^2)``.  ``rng`` may also
    be a list with one seed per level.
    """
    lams = [float(x) for x in s_virtual]
    if any(not (0.0 < x <= 1.0) for x in lams):
        raise ValidationError(f"virtual scale factors must lie in (0, 1], got {lams}")
    if len(set(lams)) != len(lams):
        raise ValidationError(f"duplicate virtual scale factors {lams}")
    if isinstance(rng, (list, tuple)):
        if len(rng) != len(lams):
            raise ValidationError(f"{len(rng)} seeds for {len(lams)} scale factors")
        seeds = list(rng)
    else:
        seeds = _seed_sequence(rng).spawn(len(lams))
    parts = [
        per_estimate(circuit, model, obs, lam, budget, seed, **per_kwargs)
        for lam, seed in zip(lams, seeds)
    ]
    weights = np.ones(1) if len(lams) == 1 else extrapolation_weights(lams, method, degree)
    est = float(weights @ np.array([r.estimate for r in parts]))
    se = float(np.sqrt(np.sum(weights**2 * np.array([r.std_error for r in parts]) ** 2)))
    means = np.tensordot(weights, np.array([r.batch_means for r in parts]), axes=1)
    gamma = float(np.sum(np.abs(weights) * np.array([r.gamma for r in parts])))
    return EstimatorResult(
        estimate=est,
        std_error=se,
        gamma=gamma,
        n_samples=sum(r.n_samples for r in parts),
        shots_per_sample=parts[0].shots_per_sample,
        batch_means=means,
        details={"scale_factors": lams, "weights": weights, "components": parts},
    )
