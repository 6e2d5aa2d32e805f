"""Numerical tolerances shared by every module."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    physical: float = 1e-9  # hermiticity, trace, CPTP checks
    algebra: float = 1e-12
    psd_floor: float = -1e-9  # smallest eigenvalue still accepted as PSD
    unitary: float = 1e-9
    kraus_completeness: float = 1e-8
    normalization: float = 1e-8  # sum of quasi-probabilities
    lp_feasibility: float = 1e-8
    imag_residue: float = 1e-9


TOL = Tolerances()
