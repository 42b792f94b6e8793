"""Numerical tolerances and physical constants shared across the package."""

from dataclasses import dataclass
import math


@dataclass(frozen=True)
class Tolerances:
    # single-step structural checks (unitarity, hermiticity, trace, norm)
    structural: float = 1e-12
    # long compositions and accumulated floating point error
    accumulated: float = 1e-9
    # smallest eigenvalue still accepted as a valid density matrix
    eigenvalue_floor: float = -1e-10
    # gate calibration check |J_zz t_e - pi|
    gate_calibration: float = 1e-9


TOL = Tolerances()

# NV electron gyromagnetic ratio, 28.024 GHz/T (CODATA free-electron value with g = 2.0028).
GAMMA_E = 2 * math.pi * 28.024e9  # rad s^-1 T^-1

# 13C nuclear gyromagnetic ratio, 10.7084 MHz/T.
GAMMA_13C = 2 * math.pi * 10.7084e6  # rad s^-1 T^-1

# Unit token for "per root hertz" normalisations (1 Hz = 1 s^-1).
HZ = 1.0

GAUSS = 1e-4  # tesla
