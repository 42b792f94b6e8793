"""Dense linear algebra on the two-qubit {0, 1} subspace of a pair of NV centres.

Every object in this module is four dimensional and uses the fixed basis order

    index 0: |1,1>    index 1: |1,0>    index 2: |0,1>    index 3: |0,0>

where the first label is NV a and the second is NV b. Arrays held by the value
types are copied on construction and marked read-only, so instances can be
shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import TOL

DIM = 4
BASIS_LABELS = ("11", "10", "01", "00")


class InvalidStateError(ValueError):
    """Raised for vectors or density matrices that violate normalisation or hermiticity."""


class InvalidOperatorError(ValueError):
    """Raised when an operator expected to be unitary is not."""


def _frozen(a, shape):
    arr = np.array(a, dtype=complex, copy=True)
    if arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("entries must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _frozen(self.amplitudes, (DIM,))
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > TOL.accumulated:
            raise InvalidStateError(f"state norm^2 is {norm!r}, expected 1")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, label: str) -> "PureState":
        """Computational basis ket, e.g. ``PureState.basis("00")``."""
        v = np.zeros(DIM, dtype=complex)
        v[BASIS_LABELS.index(label)] = 1.0
        return cls(v)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))

    def overlap(self, other: "PureState") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def equals_up_to_phase(self, other: "PureState", atol: float = TOL.structural) -> bool:
        return abs(abs(self.overlap(other)) - 1.0) < atol


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        rho = _frozen(self.entries, (DIM, DIM))
        if np.abs(rho - rho.conj().T).max() > TOL.structural:
            raise InvalidStateError("density matrix is not Hermitian")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > TOL.structural:
            raise InvalidStateError(f"density matrix trace is {tr!r}, expected 1")
        if np.linalg.eigvalsh(rho).min() < TOL.eigenvalue_floor:
            raise InvalidStateError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "entries", rho)

    @classmethod
    def maximally_mixed(cls) -> "DensityMatrix":
        return cls(np.eye(DIM) / DIM)

    def populations(self) -> np.ndarray:
        return self.entries.diagonal().real.copy()

    def is_pure(self, atol: float = TOL.accumulated) -> bool:
        return abs(np.trace(self.entries @ self.entries).real - 1.0) < atol


@dataclass(frozen=True, eq=False)
class UnitaryOp:
    entries: np.ndarray

    def __post_init__(self):
        u = _frozen(self.entries, (DIM, DIM))
        err = np.abs(u.conj().T @ u - np.eye(DIM)).max()
        if err > TOL.structural:
            raise InvalidOperatorError(f"operator is not unitary (max |U^H U - I| = {err:.3e})")
        object.__setattr__(self, "entries", u)

    def __matmul__(self, other):
        if isinstance(other, UnitaryOp):
            return UnitaryOp(self.entries @ other.entries)
        if isinstance(other, PureState):
            return apply(self, other)
        return NotImplemented

    @property
    def dagger(self) -> "UnitaryOp":
        return UnitaryOp(self.entries.conj().T)

    @classmethod
    def identity(cls) -> "UnitaryOp":
        return cls(np.eye(DIM))


def apply(U: UnitaryOp, s: PureState) -> PureState:
    """Return ``U @ s``. Both arguments are validated on construction."""
    if not isinstance(U, UnitaryOp):
        raise InvalidOperatorError("apply expects a UnitaryOp")
    out = U.entries @ s.amplitudes
    # renormalise away the rounding drift so long gate chains stay valid
    return PureState(out / np.linalg.norm(out))


def evolve_density(U: UnitaryOp, rho: DensityMatrix) -> DensityMatrix:
    m = U.entries @ rho.entries @ U.entries.conj().T
    return DensityMatrix((m + m.conj().T) / 2)


def fidelity(rho_target: DensityMatrix, rho: DensityMatrix) -> float:
    """Overlap ``Tr[rho_target rho]`` with a pure target state.

    Any charge-state prefactor is left to the caller.
    """
    for r in (rho_target, rho):
        if not isinstance(r, DensityMatrix):
            raise InvalidStateError("fidelity expects DensityMatrix arguments")
    if not rho_target.is_pure():
        raise InvalidStateError("target density matrix must be pure")
    f = float(np.trace(rho_target.entries @ rho.entries).real)
    return float(np.clip(f, 0.0, 1.0))


def measure_populations(s: PureState) -> np.ndarray:
    """Basis populations ``|c_i|^2`` in the fixed basis order."""
    p = np.abs(s.amplitudes) ** 2
    return p / p.sum()
