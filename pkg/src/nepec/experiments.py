"""Experiment runners behind the command-line interface.

Every runner takes an :class:`ExperimentConfig` and returns a
:class:`ResultTable` whose CSV form has the fixed header in ``CSV_HEADER``.
For the analytic experiments (``ampdamp``, ``nogo``) the ``estimate`` column
holds the row's primary scalar (a one-norm, or 1/0 for feasible/infeasible)
and ``std_error`` holds the numerical residual of that row.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

from nepec.circuits import Circuit, clifford_group, noisy_circuit_superop, rb_circuit
from nepec.errors import ConfigError, InfeasibleRepresentation
from nepec.estimators import (
    Budget,
    EstimatorResult,
    gate_extrapolation_reps,
    monte_carlo_estimate,
    per_estimate,
    per_reps,
    virtual_zne,
)
from nepec.noise import NoiseKind, NoiseModel, NoisyOperation, noisy_gate
from nepec.quasiprob import (
    ampdamp_exact_extrapolation,
    ampdamp_gamma,
    canonical_split,
    convexity_test,
    depolarizing_convex_weights,
    optimal_representation,
    optimize_scale_factors,
    pauli_twisted_basis,
    representation_residual,
)
from nepec.superop import DensityMatrix, Observable, Superoperator, apply, expectation, unitary_to_superop

CSV_HEADER = ("x", "estimate", "std_error", "gamma", "technique", "n_samples", "shots", "seed")
EXPERIMENTS = ("fig2", "fig3a", "fig3b", "ampdamp", "nogo")

GATES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
}

_NUM_LIST = {"type": "array", "items": {"type": "number"}}
CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "noise": {
            "type": "object",
            "required": ["kind", "p"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": [k.value for k in NoiseKind]},
                "p": {"type": "number", "minimum": 0, "maximum": 1},
                "qubits": {"type": "integer", "minimum": 1, "maximum": 4},
            },
        },
        "rb_depth": {"type": "integer", "minimum": 1},
        "circuit": {"type": "string"},
        "gate": {"enum": list(GATES)},
        "seed": {"type": "integer", "minimum": 0},
        "samples": {"type": "integer", "minimum": 1},
        "shots": {"type": ["integer", "null"], "minimum": 1},
        "batches": {"type": "integer", "minimum": 1},
        "workers": {"type": "integer", "minimum": 1},
        "replicates": {"type": "integer", "minimum": 1},
        "assumed_p": {"type": "number", "minimum": 0, "maximum": 0.75},
        "p_grid": _NUM_LIST,
        "scale_factors": _NUM_LIST,
        "lambda_grid": _NUM_LIST,
        "virtual_scale_factors": _NUM_LIST,
        "out": {"type": "string"},
    },
}

# per-experiment defaults; fig2 and fig3 follow the published setups
DEFAULTS = {
    "fig2": dict(
        noise={"kind": "depolarizing", "p": 0.01}, rb_depth=14, samples=5000, shots=None,
        batches=10, assumed_p=0.01, scale_factors=[1, 51],
        p_grid=[round(0.002 * i, 3) for i in range(11)],
    ),
    "fig3a": dict(
        noise={"kind": "depolarizing", "p": 0.015}, rb_depth=46, samples=50_000, shots=1,
        batches=25, lambda_grid=[0.0, 0.25, 0.5, 0.75, 1.0],
    ),
    "fig3b": dict(
        noise={"kind": "depolarizing", "p": 0.015}, rb_depth=46, samples=50_000, shots=1,
        batches=25, lambda_grid=[0.2], virtual_scale_factors=[0.2, 1.0],
    ),
    "ampdamp": dict(
        noise={"kind": "amplitude_damping", "p": 0.19}, p_grid=[0.01, 0.05, 0.1, 0.19],
        scale_factors=[1, 2, 3], gate="H",
    ),
    "nogo": dict(
        noise={"kind": "depolarizing", "p": 0.01}, lambda_grid=[1.5, 2.0, 5.0, 75.0],
        gate="H",
    ),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    noise: NoiseModel = field(default_factory=lambda: NoiseModel.depolarizing(0.01))
    rb_depth: int = 14
    circuit: str | None = None
    gate: str = "H"
    seed: int = 0
    samples: int = 5000
    shots: int | None = None
    batches: int = 10
    workers: int = 1
    replicates: int = 1
    assumed_p: float = 0.01
    p_grid: tuple[float, ...] = ()
    scale_factors: tuple[float, ...] = ()
    lambda_grid: tuple[float, ...] = ()
    virtual_scale_factors: tuple[float, ...] = ()
    out: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        for name in ("p_grid", "scale_factors", "lambda_grid", "virtual_scale_factors"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not all(math.isfinite(v) for v in vals):
                raise ConfigError(f"{name} must be finite, got {vals}")
            object.__setattr__(self, name, vals)
        if any(not (0 <= p <= 1) for p in self.p_grid):
            raise ConfigError(f"p_grid entries must be probabilities, got {self.p_grid}")
        if any(lam < 0 for lam in self.lambda_grid):
            raise ConfigError(f"lambda_grid entries must be non-negative, got {self.lambda_grid}")
        if self.samples < self.batches:
            raise ConfigError(f"samples ({self.samples}) must be >= batches ({self.batches})")
        if self.gate not in GATES:
            raise ConfigError(f"unknown gate {self.gate!r}")

    @classmethod
    def from_dict(cls, d: dict, **overrides) -> "ExperimentConfig":
        """Merge experiment defaults, ``d`` and non-None ``overrides`` (highest priority)."""
        try:
            jsonschema.validate(d, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"invalid config: {exc.message}") from None
        experiment = overrides.get("experiment") or d.get("experiment")
        if experiment not in DEFAULTS:
            raise ConfigError(f"unknown experiment {experiment!r}")
        merged = {**DEFAULTS[experiment], **d}
        merged.update({k: v for k, v in overrides.items() if v is not None})
        merged["experiment"] = experiment
        try:
            merged["noise"] = NoiseModel.from_dict(merged["noise"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"invalid noise model: {exc}") from None
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in merged.items() if k in known})

    @classmethod
    def from_file(cls, path: str | Path | None, **overrides) -> "ExperimentConfig":
        d = {}
        if path is not None:
            try:
                d = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(d, **overrides)

    @property
    def budget(self) -> Budget:
        return Budget(self.samples, self.shots, self.batches, self.workers)

    def load_circuit(self) -> Circuit:
        if self.circuit is not None:
            try:
                return Circuit.from_json(Path(self.circuit).read_text())
            except (OSError, json.JSONDecodeError, KeyError) as exc:
                raise ConfigError(f"cannot read circuit {self.circuit}: {exc}") from None
        return rb_circuit(self.rb_depth, self.seed)


@dataclass(frozen=True)
class ResultRow:
    x: float
    estimate: float
    std_error: float
    gamma: float
    technique: str
    n_samples: int = 0
    shots: int | str = "exact"
    seed: int = 0


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


@dataclass
class ResultTable:
    rows: list[ResultRow] = field(default_factory=list)
    # (x, technique, batch index, batch mean) for the violin-style distributions
    batches: list[tuple[float, str, int, float]] = field(default_factory=list)
    # full estimator results keyed by (x, technique); kept in memory only
    results: dict[tuple[float, str], EstimatorResult] = field(default_factory=dict, repr=False)

    def add(self, row: ResultRow) -> None:
        self.rows.append(row)

    def add_result(self, x: float, technique: str, res: EstimatorResult, seed: int) -> None:
        self.add(ResultRow(x, res.estimate, res.std_error, res.gamma, technique,
                           res.n_samples, res.shots_per_sample, seed))
        self.batches.extend((x, technique, i, float(m)) for i, m in enumerate(res.batch_means))
        self.results[(x, technique)] = res

    def select(self, technique: str) -> list[ResultRow]:
        return [r for r in self.rows if r.technique == technique]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_HEADER])
        return buf.getvalue()

    def batches_to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("x", "technique", "batch", "batch_mean"))
        for x, tech, i, m in self.batches:
            w.writerow([_fmt(float(x)), tech, i, _fmt(m)])
        return buf.getvalue()

    def write(self, path: str | Path) -> None:
        path = Path(path)
        path.write_text(self.to_csv())
        if self.batches:
            path.with_name(path.stem + "_batches.csv").write_text(self.batches_to_csv())


def _stream(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, *key])


def _unmitigated(circuit: Circuit, model: NoiseModel) -> float:
    n = circuit.num_qubits
    s = noisy_circuit_superop(circuit, model, [1.0] * len(circuit))
    return expectation(Observable.projector(n, 0), apply(s, DensityMatrix.basis_state(n, 0)))


def run_fig2(cfg: ExperimentConfig) -> ResultTable:
    """Unmitigated vs PEC (fixed assumed rate) vs folding-based gate extrapolation."""
    circuit = cfg.load_circuit()
    n = circuit.num_qubits
    obs, rho0 = Observable.projector(n, 0), DensityMatrix.basis_state(n, 0)
    pec = per_reps(circuit, cfg.assumed_p, 0.0)
    table = ResultTable()
    for i, p in enumerate(cfg.p_grid):
        actual = NoiseModel.depolarizing(p)
        table.add(ResultRow(p, _unmitigated(circuit, actual), 0.0, 1.0, "unmitigated", 0, "exact", cfg.seed))
        res = monte_carlo_estimate(pec, actual, obs, rho0, cfg.samples, cfg.shots, cfg.batches,
                                   _stream(cfg.seed, 1, i), cfg.workers)
        table.add_result(p, "pec", res, cfg.seed)
        nepec = gate_extrapolation_reps(circuit, actual, cfg.scale_factors, scaling_mode="folding")
        res = monte_carlo_estimate(nepec, actual, obs, rho0, cfg.samples, cfg.shots, cfg.batches,
                                   _stream(cfg.seed, 2, i), cfg.workers)
        table.add_result(p, "nepec", res, cfg.seed)
    return table


def run_fig3a(cfg: ExperimentConfig) -> ResultTable:
    """PER over a grid of virtual noise levels; all levels share the same seed."""
    circuit = cfg.load_circuit()
    table = ResultTable()
    for lam in cfg.lambda_grid:
        res = per_estimate(circuit, cfg.noise, None, lam, cfg.budget, cfg.seed)
        table.add_result(lam, "per", res, cfg.seed)
    return table


def run_fig3b(cfg: ExperimentConfig) -> ResultTable:
    """Unmitigated, PEC, PER and virtual ZNE on identical budgets and seeds."""
    circuit = cfg.load_circuit()
    b = cfg.budget
    table = ResultTable()
    table.add_result(1.0, "unmitigated", per_estimate(circuit, cfg.noise, None, 1.0, b, cfg.seed), cfg.seed)
    table.add_result(0.0, "pec", per_estimate(circuit, cfg.noise, None, 0.0, b, cfg.seed), cfg.seed)
    for lam in cfg.lambda_grid:
        table.add_result(lam, "per", per_estimate(circuit, cfg.noise, None, lam, b, cfg.seed), cfg.seed)
    s = cfg.virtual_scale_factors
    # first level shares the seed of the other techniques, the rest get independent streams
    seeds = [cfg.seed] + [_stream(cfg.seed, 3, i) for i in range(1, len(s))]
    table.add_result(0.0, "virtual_zne", virtual_zne(circuit, cfg.noise, None, s, b, rng=seeds), cfg.seed)
    return table


def clifford_basis(model: NoiseModel, lam: float = 1.0) -> list[NoisyOperation]:
    return [noisy_gate(c, model, lam, label=f"C{i}") for i, c in enumerate(clifford_group())]


def reset_operation() -> NoisyOperation:
    """Ideal RESET to |0>, i.e. full amplitude damping."""
    from nepec.noise import amplitude_damping_superop

    return NoisyOperation("RESET", amplitude_damping_superop(1.0), scaling="fixed")


def _lp_gamma(target: Superoperator, basis: Sequence[NoisyOperation]) -> tuple[float, float]:
    """(one-norm, residual) of the LP optimum, or (inf, 0) when infeasible."""
    try:
        rep = optimal_representation(target, basis)
    except InfeasibleRepresentation:
        return math.inf, 0.0
    return rep.one_norm, representation_residual(rep, target)


def run_ampdamp(cfg: ExperimentConfig) -> ResultTable:
    """Amplitude damping: infeasibility without scaling, feasibility with it, and the
    optimal three-point gate extrapolation."""
    g = GATES[cfg.gate]
    target = unitary_to_superop(g)
    table = ResultTable()
    for p in cfg.p_grid:
        if not (0 < p < 1):
            raise ConfigError(f"amplitude damping experiment needs 0 < p < 1, got {p}")
        ext = ampdamp_exact_extrapolation(p, gate=g)
        resid = representation_residual(ext.rep, target)
        table.add(ResultRow(p, ext.rep.one_norm, resid, ext.rep.one_norm, "gate_extrapolation", seed=cfg.seed))
        table.add(ResultRow(p, ext.gamma, abs(ext.gamma - ext.rep.one_norm), ext.gamma, "closed_form", seed=cfg.seed))
        _, g_num = optimize_scale_factors(1.0 / ext.p_prime)
        table.add(ResultRow(p, g_num, abs(g_num - ext.gamma), g_num, "numerical_scale_factors", seed=cfg.seed))

        model = NoiseModel.amplitude_damping(p)
        base = clifford_basis(model)
        lams = [lam for lam in cfg.scale_factors if lam <= model.lambda_max()]
        extended = [op for lam in lams for op in clifford_basis(model, lam)]
        for name, basis in (
            ("lp_unscaled", base),
            ("lp_scaled", extended),
            ("lp_reset", base + [reset_operation()]),
            ("lp_reset_scaled", extended + [reset_operation()]),
        ):
            gamma, resid = _lp_gamma(target, basis)
            flag = 0.0 if math.isinf(gamma) else 1.0
            table.add(ResultRow(p, flag, resid, gamma, name, seed=cfg.seed))
    return table


def run_nogo(cfg: ExperimentConfig) -> ResultTable:
    """Convexity test of noise-scaled depolarizing gates and the resulting equality of
    optimal one-norms; amplitude damping as the counter-example."""
    g = GATES[cfg.gate]
    target = unitary_to_superop(g)
    model = cfg.noise if cfg.noise.kind is NoiseKind.DEPOLARIZING else NoiseModel.depolarizing(cfg.noise.p)
    p = model.p
    base = pauli_twisted_basis(g, model)
    table = ResultTable()
    extended = list(base)
    for lam in cfg.lambda_grid:
        lam = min(lam, model.lambda_max())
        scaled = noisy_gate(g, model, lam).superop
        res = convexity_test(scaled, base)
        dev = float(np.max(np.abs(res.mu - depolarizing_convex_weights(p, lam)))) if res.feasible else math.inf
        table.add(ResultRow(lam, float(res.feasible), dev, 1.0 if res.feasible else math.inf,
                            "convexity_depolarizing", seed=cfg.seed))
        extended += [noisy_gate(op.gate, model, lam, label=f"{op.label}@{lam:g}") for op in base]
    g_base, r_base = _lp_gamma(target, base)
    g_ext, r_ext = _lp_gamma(target, extended)
    table.add(ResultRow(0.0, g_base, r_base, g_base, "lp_base", seed=cfg.seed))
    table.add(ResultRow(0.0, g_ext, abs(g_ext - g_base), g_ext, "lp_extended", seed=cfg.seed))

    ad = NoiseModel.amplitude_damping(cfg.noise.p if cfg.noise.kind is NoiseKind.AMPLITUDE_DAMPING else p)
    lam = min(2.0, ad.lambda_max())
    res = convexity_test(noisy_gate(g, ad, lam).superop, clifford_basis(ad))
    table.add(ResultRow(lam, float(res.feasible), res.residual if res.feasible else 0.0,
                        1.0 if res.feasible else math.inf, "convexity_amplitude_damping", seed=cfg.seed))
    return table


RUNNERS = {
    "fig2": run_fig2,
    "fig3a": run_fig3a,
    "fig3b": run_fig3b,
    "ampdamp": run_ampdamp,
    "nogo": run_nogo,
}


def run(cfg: ExperimentConfig) -> ResultTable:
    return RUNNERS[cfg.experiment](cfg)


# ---- superoperator / representation JSON ---------------------------------


def superop_to_dict(s: Superoperator, label: str | None = None) -> dict:
    d = {"dim": s.dim, "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in s.matrix]}
    if label is not None:
        d["label"] = label
    return d


def superop_from_dict(d: dict) -> Superoperator:
    try:
        m = np.array([[complex(re, im) for re, im in row] for row in d["matrix"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed superoperator JSON: {exc}") from None
    s = Superoperator(m)
    if "dim" in d and int(d["dim"]) != s.dim:
        raise ConfigError(f"declared dim {d['dim']} does not match matrix of dim {s.dim}")
    return s


def _read_superop(path: str | Path) -> tuple[Superoperator, str]:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return superop_from_dict(d), d.get("label", Path(path).stem)


def run_decompose(target_path, basis_paths: Sequence, out_path=None) -> dict:
    """LP-optimal representation of a target superoperator over basis files, as JSON."""
    target, target_label = _read_superop(target_path)
    basis = []
    for path in basis_paths:
        s, label = _read_superop(path)
        basis.append(NoisyOperation(label, s, scaling="fixed"))
    rep = optimal_representation(target, basis, target_label=target_label)
    try:
        split = canonical_split(rep)
        g_plus, g_minus = split.gamma_plus, split.gamma_minus
    except Exception:  # all-positive representation
        g_plus, g_minus = rep.one_norm, 0.0
    out = {
        "target": target_label,
        "gamma": rep.one_norm,
        "residual": representation_residual(rep, target),
        "gamma_plus": g_plus,
        "gamma_minus": g_minus,
        "terms": [{"label": op.label, "eta": eta} for eta, op in rep.terms],
    }
    if out_path is not None:
        Path(out_path).write_text(json.dumps(out, indent=2))
    return out
