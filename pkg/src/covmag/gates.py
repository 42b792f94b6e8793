"""Pulse-sequence propagators for a dipolar-coupled NV pair.

Pulses are instantaneous. Rotations use spin-1/2 operators ``I = sigma / 2`` on
each NV, with the rotation axis in the xy plane at angle ``phase`` from x. The
dipolar term acts on the ``m_s = 1`` projectors, ``exp(-i J n_a n_b t)``, which
is ``exp(-i J I_z1 I_z2 t)`` dressed with local z rotations and a global phase.
That form reproduces the entangling and disentangling matrices including their
global phase; the bare spin-1/2 form is available with ``convention="spin_half"``.

Operators compose right to left: the first pulse of a sequence is the
rightmost factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .constants import TOL
from .hilbert import UnitaryOp

_SX = np.array([[0, 1], [1, 0]], dtype=complex) / 2
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
_SZ = np.array([[1, 0], [0, -1]], dtype=complex) / 2
_N1 = np.array([[1, 0], [0, 0]], dtype=complex)  # projector on |1>, first basis element
_I2 = np.eye(2, dtype=complex)


class MiscalibratedGateError(ValueError):
    """Raised when an entangling gate is requested with J_zz t_e != pi."""


@dataclass(frozen=True)
class CouplingSpec:
    """NV-NV coupling ``J_zz`` (rad/s) and entangling time ``t_e`` (s).

    ``t_e`` defaults to ``pi / J_zz``, the maximally entangling duration.
    """

    J_zz: float
    t_e: float | None = None

    def __post_init__(self):
        if not (self.J_zz > 0 and math.isfinite(self.J_zz)):
            raise ValueError("J_zz must be a positive finite angular frequency")
        if self.t_e is None:
            object.__setattr__(self, "t_e", math.pi / self.J_zz)
        elif not self.t_e > 0:
            raise ValueError("t_e must be positive")

    @classmethod
    def from_frequency(cls, f_zz_hz: float) -> "CouplingSpec":
        return cls(J_zz=2 * math.pi * f_zz_hz)

    def check_calibrated(self) -> None:
        err = abs(self.J_zz * self.t_e - math.pi)
        if err > TOL.gate_calibration * math.pi:
            raise MiscalibratedGateError(
                f"J_zz * t_e = {self.J_zz * self.t_e!r} differs from pi by {err:.3e}"
            )


@dataclass(frozen=True)
class PhasePair:
    """Phases accumulated by NV a and NV b during one sensing window."""

    phi_a: float
    phi_b: float

    def __post_init__(self):
        if not (math.isfinite(self.phi_a) and math.isfinite(self.phi_b)):
            raise ValueError("phases must be finite")

    def __add__(self, other: "PhasePair") -> "PhasePair":
        return PhasePair(self.phi_a + other.phi_a, self.phi_b + other.phi_b)

    def __neg__(self) -> "PhasePair":
        return PhasePair(-self.phi_a, -self.phi_b)


def _axis(phase: float) -> np.ndarray:
    return math.cos(phase) * _SX + math.sin(phase) * _SY


def single_qubit_rotation(theta: float, phase: float = 0.0) -> np.ndarray:
    """2x2 rotation ``exp(-i theta (I_x cos phase + I_y sin phase))`` in basis (|1>, |0>)."""
    return expm(-1j * theta * _axis(phase))


def pulse(theta: float, phase: float = 0.0, target: str = "ab") -> UnitaryOp:
    """Rotation by ``theta`` about the axis at ``phase`` applied to ``target``.

    ``target`` is ``"a"``, ``"b"`` or ``"ab"`` (both NVs, same axis).
    """
    r = single_qubit_rotation(theta, phase)
    if target == "a":
        m = np.kron(r, _I2)
    elif target == "b":
        m = np.kron(_I2, r)
    elif target == "ab":
        m = np.kron(r, r)
    else:
        raise ValueError(f"unknown pulse target {target!r}")
    return UnitaryOp(m)


def rotation_global(phi: float, phase: float = 0.0) -> UnitaryOp:
    """``exp[-i (I_x1 + I_x2) phi]``; ``phase`` rotates the drive axis in the xy plane."""
    return pulse(phi, phase, "ab")


def rotation_relative(phi: float, phase: float = 0.0) -> UnitaryOp:
    """``exp[-i (I_x1 - I_x2) phi]``, the two NVs rotated in opposite senses."""
    r = single_qubit_rotation(phi, phase)
    return UnitaryOp(np.kron(r, r.conj().T))


def ising_evolution(J_zz: float, t: float, convention: str = "ms01") -> UnitaryOp:
    """Free evolution under the NV-NV dipolar coupling for a time ``t``.

    ``convention="ms01"`` couples the ``m_s = 1`` projectors, so only ``|1,1>``
    acquires the phase ``exp(-i J t)``. ``convention="spin_half"`` uses
    ``exp(-i J I_z1 I_z2 t)`` with phases ``-/+ J t / 4`` for even/odd parity.
    """
    if t < 0:
        raise ValueError("evolution time must be non-negative")
    if convention == "ms01":
        diag = np.array([np.exp(-1j * J_zz * t), 1, 1, 1])
    elif convention == "spin_half":
        q = J_zz * t / 4
        diag = np.exp(-1j * q * np.array([1, -1, -1, 1]))
    else:
        raise ValueError(f"unknown coupling convention {convention!r}")
    return UnitaryOp(np.diag(diag))


def _block(spec: CouplingSpec, first: UnitaryOp, last: UnitaryOp, phase: float,
           convention: str) -> UnitaryOp:
    spec.check_calibrated()
    half = ising_evolution(spec.J_zz, spec.t_e / 2, convention)
    echo = rotation_global(math.pi, phase)
    return last @ half @ echo @ half @ first


def entangle_phi(spec: CouplingSpec, convention: str = "ms01") -> UnitaryOp:
    """``R_{pi/2} U_zz(t_e/2) R_pi U_zz(t_e/2) R_{pi/2}``: maps |0,0> to the Phi Bell state."""
    return _block(spec, rotation_global(math.pi / 2), rotation_global(math.pi / 2), 0.0, convention)


def entangle_psi(spec: CouplingSpec, convention: str = "ms01") -> UnitaryOp:
    """As :func:`entangle_phi` with the final pulse replaced by a relative rotation."""
    return _block(spec, rotation_global(math.pi / 2), rotation_relative(math.pi / 2), 0.0, convention)


def disentangle_phi(spec: CouplingSpec, phase: float = 0.0, convention: str = "ms01") -> UnitaryOp:
    """``R_{-pi/2} U_zz R_pi U_zz R_{-pi/2}``; ``phase`` advances every pulse axis."""
    return _block(spec, rotation_global(-math.pi / 2, phase), rotation_global(-math.pi / 2, phase),
                  phase, convention)


def disentangle_psi(spec: CouplingSpec, phase: float = 0.0, convention: str = "ms01") -> UnitaryOp:
    """``R_{pi/2} U_zz R_pi U_zz Rbar_{-pi/2}``; ``phase`` advances every pulse axis."""
    return _block(spec, rotation_relative(-math.pi / 2, phase), rotation_global(math.pi / 2, phase),
                  phase, convention)


def disentangle_tppi(spec: CouplingSpec, phi_tppi: float, variant: str = "phi") -> UnitaryOp:
    """Disentangling block with each pulse phase advanced by ``phi_tppi``."""
    if _kind(variant) == "phi":
        return disentangle_phi(spec, phi_tppi)
    return disentangle_psi(spec, phi_tppi)


def external_phase_diagonal(phi_a, phi_b) -> np.ndarray:
    """Diagonal of the field propagator; broadcasts over arrays of phases.

    Returns an array of shape ``(..., 4)``.
    """
    phi_a = np.asarray(phi_a, dtype=float)
    phi_b = np.asarray(phi_b, dtype=float)
    phi_a, phi_b = np.broadcast_arrays(phi_a, phi_b)
    return np.stack(
        [np.exp(-1j * (phi_a + phi_b)), np.exp(-1j * phi_a), np.exp(-1j * phi_b),
         np.ones_like(phi_a, dtype=complex)],
        axis=-1,
    )


def external_phase(p: PhasePair) -> UnitaryOp:
    """Field propagator: ``|1,1> -> e^{-i(phi_a+phi_b)}``, ``|1,0> -> e^{-i phi_a}``, ``|0,1> -> e^{-i phi_b}``."""
    return UnitaryOp(np.diag(external_phase_diagonal(p.phi_a, p.phi_b)))


def controlled_z() -> UnitaryOp:
    """Ising evolution for ``t = pi / J``: a sign flip on |1,1>."""
    return UnitaryOp(np.diag([-1, 1, 1, 1]).astype(complex))


def cnot(control: str, omit_final_half_pulse: bool = False) -> UnitaryOp:
    """CNOT built as ``R_t(pi/2, -y) . CZ . R_t(pi/2, y)`` on the target NV.

    With ``omit_final_half_pulse`` the closing target pulse is dropped; callers
    use this only when the next operation starts with the inverse pulse.
    """
    if control not in ("a", "b"):
        raise ValueError("control must be 'a' or 'b'")
    target = "b" if control == "a" else "a"
    op = controlled_z() @ pulse(math.pi / 2, math.pi / 2, target)
    if not omit_final_half_pulse:
        op = pulse(math.pi / 2, -math.pi / 2, target) @ op
    return op


def swap_from_cnots(sign: int = +1) -> UnitaryOp:
    """Transfer the state of NV a onto NV b, assuming NV b starts in |0>.

    Two CNOTs (a -> b, then b -> a) suffice under that assumption. The transfer
    ends with a pair of NV b half pulses about x whose second pulse carries the
    alternating sign: for ``+1`` the pair cancels; for ``-1`` it completes a
    pi rotation, which conjugates the transferred coherence.
    """
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    pair = pulse(math.pi / 2, 0.0 if sign < 0 else math.pi, "b") @ pulse(math.pi / 2, 0.0, "b")
    return pair @ cnot("b") @ cnot("a")


def entangle(kind: str, spec: CouplingSpec) -> UnitaryOp:
    return {"phi": entangle_phi, "psi": entangle_psi}[_kind(kind)](spec)


def readout_disentangle(kind: str, spec: CouplingSpec, phase: float = 0.0,
                        sign: int = +1) -> UnitaryOp:
    """Disentangling block used before photon readout.

    For Psi this is :func:`disentangle_psi`. For Phi the opening half pulse is
    ``R_{+pi/2}``, so that the zero-field round trip returns |0,0> (the
    ``R_{-pi/2}`` form of :func:`disentangle_phi` returns |1,1>). ``phase``
    advances every pulse axis; ``sign=-1`` reverses the closing half pulse,
    which swaps the roles of the bright and dark readout states.
    """
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    if _kind(kind) == "phi":
        return _block(spec, rotation_global(math.pi / 2, phase),
                      rotation_global(-sign * math.pi / 2, phase), phase, "ms01")
    return _block(spec, rotation_relative(-math.pi / 2, phase),
                  rotation_global(sign * math.pi / 2, phase), phase, "ms01")


def _kind(kind: str) -> str:
    k = kind.lower()
    if k in ("phi", "φ"):
        return "phi"
    if k in ("psi", "ψ"):
        return "psi"
    raise ValueError(f"unknown Bell variant {kind!r}")
