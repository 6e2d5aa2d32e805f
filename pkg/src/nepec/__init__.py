"""Noise-extended probabilistic error cancellation.

Quasi-probability representations of ideal gates over noise-scaled noisy
operations, with exact and Monte Carlo estimators and a small dense
density-matrix simulator.
"""

from nepec.config import TOL, Tolerances
from nepec.errors import (
    ConfigError,
    DegenerateSplit,
    InfeasibleRepresentation,
    NepecError,
    NumericalConsistencyError,
    ValidationError,
)
from nepec.superop import (
    DensityMatrix,
    Observable,
    Superoperator,
    apply,
    compose,
    embed,
    expectation,
    kraus_to_superop,
    unitary_to_superop,
)
from nepec.noise import (
    NoiseModel,
    NoisyOperation,
    amplitude_damping_superop,
    depolarizing_superop,
    fold_gate,
    noisy_gate,
    scaled_noise,
)
from nepec.quasiprob import (
    CanonicalSplit,
    ConvexityResult,
    QuasiProbRep,
    ampdamp_exact_extrapolation,
    canonical_scaled_rep,
    canonical_split,
    convexity_test,
    depolarizing_per_rep,
    gate_extrapolation_rep,
    one_norm,
    optimal_representation,
    polyfit_coefficients,
    reconstruct,
    richardson_coefficients,
)
from nepec.circuits import Circuit, GateSpec, ideal_superop, noisy_circuit_superop, rb_circuit
from nepec.estimators import (
    Budget,
    EstimatorResult,
    SampledInstance,
    batch_statistics,
    exact_mitigated_value,
    merge_results,
    monte_carlo_estimate,
    per_estimate,
    sample_instance,
    virtual_zne,
    zne_extrapolate,
)

__version__ = "0.1.0"
