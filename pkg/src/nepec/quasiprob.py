"""Quasi-probability representations of ideal gates.

A representation writes an ideal gate as ``sum_a eta_a O_a`` over
implementable (possibly noise-scaled) operations ``O_a`` with real
coefficients that sum to one.  Its one-norm ``sum |eta_a|`` sets the Monte
Carlo sampling overhead.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import linprog, minimize

from nepec.config import TOL
from nepec.errors import (
    DegenerateSplit,
    InfeasibleRepresentation,
    NumericalConsistencyError,
    ValidationError,
)
from nepec.noise import (
    NoiseModel,
    NoisyOperation,
    _as_unitary_superop,
    fold_gate,
    noisy_gate,
    pauli_strings,
)
from nepec.superop import Superoperator, compose, unitary_to_superop

_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


def _solve_lp(c, a_eq, b_eq):
    """HiGHS with tight tolerances.  Presolve occasionally declares feasible
    problems with nearly parallel columns infeasible, so an infeasible verdict
    is re-checked without presolve."""
    kw = dict(A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    res = linprog(c, options=_HIGHS_OPTIONS, **kw)
    if res.status == 2:
        res = linprog(c, options={**_HIGHS_OPTIONS, "presolve": False}, **kw)
    return res


@dataclass(frozen=True, eq=False)
class QuasiProbRep:
    terms: tuple[tuple[float, NoisyOperation], ...]
    target_label: str = "G"
    bias_note: str | None = None
    # qubits the represented gate acts on; defaults to 0..k-1
    targets: tuple[int, ...] | None = None

    def __post_init__(self):
        terms = tuple((float(eta), op) for eta, op in self.terms)
        if not terms:
            raise ValidationError("a quasi-probability representation needs at least one term")
        dims = {op.dim for _, op in terms}
        if len(dims) != 1:
            raise ValidationError(f"operations have mismatched dimensions {sorted(dims)}")
        object.__setattr__(self, "terms", terms)
        if self.targets is None:
            object.__setattr__(self, "targets", tuple(range(terms[0][1].superop.num_qubits)))
        else:
            object.__setattr__(self, "targets", tuple(int(q) for q in self.targets))
        if all(op.superop.is_trace_preserving() for _, op in terms):
            total = sum(eta for eta, _ in terms)
            if abs(total - 1.0) > TOL.normalization:
                raise ValidationError(
                    f"coefficients over trace-preserving operations must sum to 1, got {total:.12g}"
                )

    @property
    def etas(self) -> np.ndarray:
        return np.array([eta for eta, _ in self.terms])

    @property
    def ops(self) -> list[NoisyOperation]:
        return [op for _, op in self.terms]

    @property
    def dim(self) -> int:
        return self.terms[0][1].dim

    @property
    def one_norm(self) -> float:
        return one_norm(self)

    @property
    def signs(self) -> np.ndarray:
        return np.where(self.etas < 0, -1, 1)

    def with_targets(self, targets: Sequence[int]) -> "QuasiProbRep":
        return replace(self, targets=tuple(targets))

    def __len__(self) -> int:
        return len(self.terms)


def one_norm(rep: QuasiProbRep) -> float:
    return float(np.sum(np.abs(rep.etas)))


def reconstruct(rep: QuasiProbRep, model: NoiseModel | None = None) -> Superoperator:
    """``sum_a eta_a O_a``; with ``model`` the operations are realized under that noise."""
    mats = [op.under(model).matrix for op in rep.ops]
    if len({m.shape for m in mats}) != 1:
        raise ValidationError("operations have mismatched dimensions")
    return Superoperator(np.tensordot(rep.etas, np.array(mats), axes=1))


def pauli_twisted_basis(gate, model: NoiseModel, label: str = "G") -> list[NoisyOperation]:
    """Noisy operations ``E o (P o G)`` for every Pauli string ``P`` (identity first)."""
    gs = _as_unitary_superop(gate)
    k = gs.num_qubits
    basis = []
    for name, pm in pauli_strings(k, include_identity=True):
        twisted = compose(unitary_to_superop(pm), gs)
        op_label = label if set(name) == {"I"} else f"{name}.{label}"
        basis.append(noisy_gate(twisted, model, 1.0, label=op_label))
    return basis


def depolarizing_per_rep(gate, p: float, lam: float, label: str = "G") -> QuasiProbRep:
    """Four-term representation of ``D_{lam p} o G`` over ``{D_p o P o G}``.

    ``lam = 0`` is the PEC representation of the ideal gate, ``lam = 1`` the
    bare noisy gate.  Single-qubit only.
    """
    eps = 4.0 * p / 3.0
    if not (0.0 <= p and eps < 1.0):
        raise ValidationError(f"need 0 <= 4p/3 < 1, got p = {p}")
    if lam < 0 or (p > 0 and lam > 1.0 / p * (1 + 1e-12)):
        raise ValidationError(f"lambda must lie in [0, 1/p], got {lam}")
    gs = _as_unitary_superop(gate)
    if gs.dim != 2:
        raise ValidationError("the closed-form depolarizing representation is single-qubit")
    c = 0.25 * eps * (1.0 - lam) / (1.0 - eps)
    etas = [1.0 + 3.0 * c, -c, -c, -c]
    basis = pauli_twisted_basis(gs, NoiseModel.depolarizing(p), label)
    return QuasiProbRep(tuple(zip(etas, basis)), target_label=f"{label}^({lam:g})")


def _stack_real(mats: Sequence[np.ndarray]) -> np.ndarray:
    """Columns = real and imaginary parts of each flattened matrix."""
    cols = [np.concatenate([m.real.ravel(), m.imag.ravel()]) for m in mats]
    return np.array(cols).T


def _lp_system(target: Superoperator, basis: Sequence[NoisyOperation]):
    if not basis:
        raise ValidationError("basis must be non-empty")
    dims = {op.dim for op in basis} | {target.dim}
    if len(dims) != 1:
        raise ValidationError(f"mismatched dimensions {sorted(dims)}")
    a = _stack_real([op.superop.matrix for op in basis])
    b = _stack_real([target.matrix])[:, 0]
    keep = (np.abs(a).max(axis=1) > 0) | (np.abs(b) > 0)
    return a[keep], b[keep]


def _residual(a: np.ndarray, x: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a @ x - b))) if len(b) else 0.0


def _polish(a: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Least-squares refinement on the LP support; kept only if it helps."""
    support = np.abs(x) > 1e-12
    if not support.any():
        return x
    xs, *_ = np.linalg.lstsq(a[:, support], b, rcond=None)
    y = np.zeros_like(x)
    y[support] = xs
    same_signs = np.all(np.sign(y[support]) == np.sign(x[support]))
    if (
        same_signs
        and _residual(a, y, b) < _residual(a, x, b)
        and np.abs(y).sum() <= np.abs(x).sum() + 1e-12
    ):
        return y
    return x


def optimal_representation(
    target: Superoperator,
    basis: Sequence[NoisyOperation],
    target_label: str = "G",
) -> QuasiProbRep:
    """Minimum one-norm representation of ``target`` over ``basis`` (linear program).

    Raises :class:`InfeasibleRepresentation` when no exact representation exists.
    """
    a, b = _lp_system(target, basis)
    n = a.shape[1]
    res = _solve_lp(np.ones(2 * n), np.hstack([a, -a]), b)
    if res.status == 2:
        raise InfeasibleRepresentation(f"no representation of {target_label} over {n} operations: {res.message}")
    if res.status != 0:
        raise NumericalConsistencyError(f"linear program failed: {res.message}")
    x = _polish(a, b, res.x[:n] - res.x[n:])
    resid = _residual(a, x, b)
    if resid > TOL.lp_feasibility:
        raise InfeasibleRepresentation(
            f"no representation of {target_label} within tolerance (residual {resid:.3e})"
        )
    terms = tuple((float(eta), op) for eta, op in zip(x, basis) if eta != 0.0)
    return QuasiProbRep(terms, target_label=target_label, bias_note=f"LP residual {resid:.3e}")


def representation_residual(rep: QuasiProbRep, target: Superoperator, model: NoiseModel | None = None) -> float:
    """Largest entry of ``target - reconstruct(rep)``."""
    return float(np.max(np.abs(target.matrix - reconstruct(rep, model).matrix)))


def richardson_coefficients(scale_factors: Sequence[float]) -> np.ndarray:
    """Lagrange weights that evaluate the interpolating polynomial at zero."""
    s = np.asarray(scale_factors, dtype=float)
    if s.size == 0:
        raise ValidationError("need at least one scale factor")
    if len(np.unique(s)) != s.size:
        raise ValidationError(f"scale factors must be distinct, got {list(s)}")
    if np.any(s == 0):
        raise ValidationError("scale factors must be non-zero")
    eta = np.ones(s.size)
    for i, lam in enumerate(s):
        for j, other in enumerate(s):
            if i != j:
                eta[i] *= other / (other - lam)
    return eta


def polyfit_coefficients(scale_factors: Sequence[float], degree: int) -> np.ndarray:
    """Weights ``w`` such that ``w @ y`` is the intercept of a least-squares polynomial fit.

    The weights are the first row of the normal-equation solution
    ``(V^T V)^-1 V^T`` for the Vandermonde matrix ``V``, so they depend only on
    the scale factors and the degree.  With ``V = QR`` this equals
    ``R^-1 Q^T``, which avoids squaring the condition number.
    """
    s = np.asarray(scale_factors, dtype=float)
    if degree < 0 or degree >= s.size:
        raise ValidationError(f"degree must be in [0, {s.size - 1}], got {degree}")
    if len(np.unique(s)) < degree + 1:
        raise ValidationError(f"scale factors {list(s)} cannot determine a degree-{degree} fit")
    v = np.vander(s, degree + 1, increasing=True)
    q, r = np.linalg.qr(v)
    return np.linalg.solve(r, q.T)[0]


def gate_extrapolation_rep(
    gate_label: str,
    scale_factors: Sequence[float],
    coefficients: Sequence[float],
    scaling_mode: str = "parametric",
    *,
    gate,
    model: NoiseModel,
) -> QuasiProbRep:
    """Represent a gate by the same noisy gate at several noise levels.

    The coefficients do not depend on the noise model; ``model`` only fixes
    the reference realization stored on each operation (used by
    :func:`reconstruct` and the bias note).  Estimators re-realize the
    operations under whatever noise the hardware actually has.
    """
    s = [float(x) for x in scale_factors]
    coeffs = [float(c) for c in coefficients]
    if len(s) != len(coeffs):
        raise ValidationError(f"{len(s)} scale factors but {len(coeffs)} coefficients")
    if any(x < 1 for x in s):
        raise ValidationError(f"implementable scale factors must be >= 1, got {s}")
    gs = _as_unitary_superop(gate)
    ops = []
    if scaling_mode == "parametric":
        for lam in s:
            ops.append(noisy_gate(gs, model, lam, label=f"{gate_label}^({lam:g})"))
    elif scaling_mode == "folding":
        base = noisy_gate(gs, model, 1.0, label=gate_label)
        dagger = noisy_gate(Superoperator(gs.matrix.conj().T), model, 1.0, label=f"{gate_label}^dag")
        for lam in s:
            if not float(lam).is_integer() or int(lam) % 2 == 0:
                raise ValidationError(f"folding needs odd integer scale factors, got {lam}")
            ops.append(
                NoisyOperation(
                    label=f"{gate_label}^({lam:g})",
                    superop=fold_gate(base, int(lam), dagger),
                    lam=lam,
                    gate=gs,
                    scaling="folding",
                    description=f"{gate_label} folded to lambda={lam:g}",
                )
            )
    else:
        raise ValidationError(f"unknown scaling mode {scaling_mode!r}")
    rep = QuasiProbRep(tuple(zip(coeffs, ops)), target_label=gate_label)
    bias = representation_residual(rep, gs)
    return replace(rep, bias_note=f"extrapolation bias max|Delta| = {bias:.3e} under {model.kind.value} p={model.p:g}")


@dataclass(frozen=True, eq=False)
class CanonicalSplit:
    gamma_plus: float
    gamma_minus: float
    phi_plus: Superoperator
    phi_minus: Superoperator
    p_tilde: float
    ideal: Superoperator
    target_label: str = "G"

    @property
    def gamma(self) -> float:
        return self.gamma_plus + self.gamma_minus

    @property
    def lambda_max(self) -> float:
        """``gamma+ / gamma-`` = ``(gamma + 1) / (gamma - 1)``."""
        return self.gamma_plus / self.gamma_minus

    def canonical_channel(self, p: float) -> Superoperator:
        """``(1 - p) G + p Phi-``."""
        return Superoperator((1.0 - p) * self.ideal.matrix + p * self.phi_minus.matrix)


def canonical_split(rep: QuasiProbRep) -> CanonicalSplit:
    etas = rep.etas
    mats = np.array([op.superop.matrix for op in rep.ops])
    pos, neg = etas > 0, etas < 0
    g_plus = float(etas[pos].sum())
    g_minus = float(-etas[neg].sum())
    if not neg.any():
        raise DegenerateSplit(f"representation of {rep.target_label} has no negative coefficients")
    if abs(g_plus - g_minus - 1.0) > TOL.normalization:
        raise ValidationError(f"gamma+ - gamma- = {g_plus - g_minus:.12g}, expected 1")
    phi_plus = Superoperator(np.tensordot(etas[pos], mats[pos], axes=1) / g_plus)
    phi_minus = Superoperator(np.tensordot(-etas[neg], mats[neg], axes=1) / g_minus)
    return CanonicalSplit(
        gamma_plus=g_plus,
        gamma_minus=g_minus,
        phi_plus=phi_plus,
        phi_minus=phi_minus,
        p_tilde=g_minus / g_plus,
        ideal=reconstruct(rep),
        target_label=rep.target_label,
    )


def canonical_scaled_rep(split: CanonicalSplit, lam: float) -> QuasiProbRep:
    """Two-term representation of the canonically scaled gate ``Lambda_{lam p~}``."""
    if lam < 0 or lam > split.lambda_max * (1 + 1e-12):
        raise ValidationError(f"lambda must lie in [0, {split.lambda_max:.12g}], got {lam}")
    plus = NoisyOperation("Phi+", split.phi_plus, lam=1.0, scaling="fixed", description="positive part")
    minus = NoisyOperation("Phi-", split.phi_minus, lam=1.0, scaling="fixed", description="negative part")
    etas = (split.gamma_plus - lam * split.gamma_minus, -(1.0 - lam) * split.gamma_minus)
    return QuasiProbRep(
        ((etas[0], plus), (etas[1], minus)),
        target_label=f"{split.target_label}^({lam:g})",
    )


@dataclass(frozen=True, eq=False)
class ConvexityResult:
    feasible: bool
    mu: np.ndarray | None
    residual: float


def convexity_test(scaled_op: Superoperator, basis: Sequence[NoisyOperation]) -> ConvexityResult:
    """Is ``scaled_op`` a convex mixture of ``basis``?

    When every noise-scaled operation passes, scaling cannot lower the
    optimal one-norm.
    """
    a, b = _lp_system(scaled_op, basis)
    n = a.shape[1]
    res = _solve_lp(np.zeros(n), np.vstack([a, np.ones((1, n))]), np.concatenate([b, [1.0]]))
    if res.status != 0:
        return ConvexityResult(False, None, np.inf)
    mu = np.clip(res.x, 0.0, None)
    mu = mu / mu.sum()
    resid = _residual(a, mu, b)
    return ConvexityResult(resid <= TOL.lp_feasibility, mu, resid)


def depolarizing_convex_weights(p: float, lam: float, k: int = 1) -> np.ndarray:
    """Mixture weights of ``D_{lam p} o G`` over ``{D_p o P o G}`` (identity string first).

    ``D_{lam p} = D_p o D_{p'}`` with ``p' = (lam - 1) p / (1 - c p)``,
    ``c = 4**k / (4**k - 1)``.
    """
    c = 4.0**k / (4.0**k - 1.0)
    pp = (lam - 1.0) * p / (1.0 - c * p)
    n_err = 4**k - 1
    return np.array([1.0 - pp] + [pp / n_err] * n_err)


@dataclass(frozen=True, eq=False)
class AmpDampExtrapolation:
    p: float
    p_prime: float
    scale_factors: np.ndarray
    coefficients: np.ndarray
    gamma: float
    rep: QuasiProbRep


def ampdamp_gamma(p: float) -> float:
    """Optimal three-point gate-extrapolation one-norm under amplitude damping."""
    pp = 1.0 - np.sqrt(1.0 - p)
    return (1.0 + 6.0 * pp + pp**2) / (1.0 - pp) ** 2


def ampdamp_exact_extrapolation(p: float, gate=None, label: str = "G") -> AmpDampExtrapolation:
    """Exact three-point extrapolation of an amplitude-damped gate.

    In ``p' = 1 - sqrt(1 - p)`` the channel is quadratic, so Richardson
    extrapolation over three scale factors of ``p'`` is exact.  The scale
    factors ``[1, (1 + 1/p')/2, 1/p']`` minimize the one-norm.
    """
    if not (0.0 < p < 1.0):
        raise ValidationError(f"p must lie strictly between 0 and 1, got {p}")
    pp = 1.0 - np.sqrt(1.0 - p)
    s = np.array([1.0, 0.5 * (1.0 + 1.0 / pp), 1.0 / pp])
    coeffs = richardson_coefficients(s)
    model = NoiseModel.amplitude_damping(p, scale_on_p_prime=True)
    g = np.eye(2) if gate is None else gate
    rep = gate_extrapolation_rep(label, s, coeffs, "parametric", gate=g, model=model)
    return AmpDampExtrapolation(p, pp, s, coeffs, ampdamp_gamma(p), rep)


def optimize_scale_factors(lam_max: float, n_points: int = 3, grid: int = 40) -> tuple[np.ndarray, float]:
    """Numerically minimize the Richardson one-norm over ``n_points`` factors in ``[1, lam_max]``.

    Coarse grid search followed by a bounded local refinement.
    """
    if n_points < 2:
        raise ValidationError("need at least two scale factors")
    axis = np.linspace(1.0, lam_max, grid)
    best, best_val = None, np.inf
    for combo in itertools.combinations(axis, n_points):
        val = np.abs(richardson_coefficients(combo)).sum()
        if val < best_val:
            best, best_val = np.array(combo), val

    def cost(x):
        x = np.clip(x, 1.0, lam_max)
        if np.min(np.diff(np.sort(x))) < 1e-9:
            return 1e12
        return float(np.abs(richardson_coefficients(x)).sum())

    res = minimize(cost, best, method="L-BFGS-B", bounds=[(1.0, lam_max)] * n_points,
                   options={"ftol": 1e-15, "gtol": 1e-12})
    x = np.sort(np.clip(res.x, 1.0, lam_max))
    val = cost(x)
    if val > best_val:
        return np.sort(best), float(best_val)
    return x, val

