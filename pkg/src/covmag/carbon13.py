"""Conditional NV dynamics under a single hyperfine-coupled 13C nuclear spin.

The NV is driven by an XY-type train of ``N`` pi pulses with spacing ``tau``
(``tau/2 - pi - tau - ... - pi - tau/2``). In the NV ``m_s = 0`` branch the
nucleus precesses at the Larmor frequency ``omega_L`` about z; in the
``m_s = 1`` branch about the tilted axis ``(A_perp, 0, A_par + omega_L)``. The
NV coherence left after the train is

    S = 1 - Nc(tau) sin^2(N phi / 2)

and the probability that the readout population is flipped is ``(1 - S) / 2``.
The closed form assumes an even number of pulses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize_scalar
from scipy.signal import argrelmax

from .constants import GAMMA_13C

_SX = np.array([[0, 1], [1, 0]], dtype=complex) / 2
_SZ = np.array([[1, 0], [0, -1]], dtype=complex) / 2
_SING = 1e-9


class ResonanceNotFoundError(RuntimeError):
    """No coherent-flip resonance in the search window."""


class NotResonantError(ValueError):
    """The requested spacing cannot produce a full conditional flip."""


@dataclass(frozen=True)
class HyperfineCoupling:
    """Hyperfine constants and nuclear Larmor frequency, all in rad/s."""

    A_par: float
    A_perp: float
    omega_L: float

    def __post_init__(self):
        if not self.omega_L > 0:
            raise ValueError("omega_L must be positive")
        if not self.omega_tilde > 0:
            raise ValueError("coupled-branch precession frequency vanishes")

    @classmethod
    def from_khz(cls, A_par_khz: float, A_perp_khz: float, B_gauss: float) -> "HyperfineCoupling":
        tp = 2 * math.pi
        return cls(tp * A_par_khz * 1e3, tp * A_perp_khz * 1e3, GAMMA_13C * B_gauss * 1e-4)

    @classmethod
    def default_fixture(cls) -> "HyperfineCoupling":
        """2 pi (0.5, 0.3) MHz coupling at 1769 G."""
        tp = 2 * math.pi
        return cls(tp * 0.5e6, tp * 0.3e6, GAMMA_13C * 0.1769)

    @classmethod
    def strong_field_fixture(cls) -> "HyperfineCoupling":
        """Weak coupling 2 pi 20 kHz, Larmor 2 pi 2 MHz (omega_L / A = 100)."""
        tp = 2 * math.pi
        return cls(tp * 20e3, tp * 20e3, tp * 2e6)

    @property
    def omega_tilde(self) -> float:
        return math.hypot(self.A_par + self.omega_L, self.A_perp)

    @property
    def a_x(self) -> float:
        return self.A_perp / self.omega_tilde

    @property
    def a_z(self) -> float:
        return (self.A_par + self.omega_L) / self.omega_tilde


def _angles(h: HyperfineCoupling, tau):
    tau = np.asarray(tau, dtype=float)
    return h.omega_tilde * tau / 2, h.omega_L * tau / 2


def rotation_angle(h: HyperfineCoupling, tau) -> np.ndarray:
    """Nuclear rotation angle ``phi`` per pulse pair: ``cos phi = cos a cos b - a_z sin a sin b``."""
    a, b = _angles(h, tau)
    c = np.cos(a) * np.cos(b) - h.a_z * np.sin(a) * np.sin(b)
    return np.arccos(np.clip(c, -1.0, 1.0))


def _depth_raw(h: HyperfineCoupling, tau):
    a, b = _angles(h, tau)
    num = h.a_x**2 * (1 - np.cos(a)) * (1 - np.cos(b))
    den = 1 + np.cos(a) * np.cos(b) - h.a_z * np.sin(a) * np.sin(b)
    return num, den


def depth(h: HyperfineCoupling, tau) -> np.ndarray:
    """Modulation depth ``Nc(tau)``; ranges over [0, 2]."""
    tau = np.asarray(tau, dtype=float)
    num, den = _depth_raw(h, tau)
    small = np.abs(den) < _SING
    out = num / np.where(small, 1.0, den)
    if np.any(small):
        # den -> 0 only where both branch rotations are by pi about nearly
        # parallel axes; num vanishes there too. Take the mean of the ratio
        # just either side of the point, moving further out until it is
        # well defined.
        fixed = np.zeros(np.shape(tau))
        todo = np.broadcast_to(small, np.shape(tau)).copy()
        for rel in (1e-7, 1e-5, 1e-3):
            eps = rel * np.maximum(np.abs(tau), 1e-15)
            nl, dl = _depth_raw(h, tau - eps)
            nh, dh = _depth_raw(h, tau + eps)
            ok = todo & (np.abs(dl) >= _SING) & (np.abs(dh) >= _SING)
            vals = 0.5 * (nl / np.where(ok, dl, 1.0) + nh / np.where(ok, dh, 1.0))
            fixed = np.where(ok, vals, fixed)
            todo &= ~ok
        out = np.where(small, fixed, out)
    return np.clip(out, 0.0, 2.0)


def xy_signal(h: HyperfineCoupling, tau, n_pulses) -> np.ndarray:
    """Normalised NV signal ``1 - Nc sin^2(N phi / 2)`` in [-1, 1]."""
    n = np.asarray(n_pulses)
    if np.any(n < 2) or np.any(n % 2):
        raise ValueError("the closed form holds for an even number of pulses >= 2")
    if np.any(np.asarray(tau) <= 0):
        raise ValueError("tau must be positive")
    phi = rotation_angle(h, tau)
    out = 1.0 - depth(h, tau) * np.sin(n * phi / 2) ** 2
    return np.clip(out, -1.0, 1.0)


def flip_probability(h: HyperfineCoupling, tau, n_pulses) -> np.ndarray:
    return (1.0 - xy_signal(h, tau, n_pulses)) / 2


# --------------------------------------------------------- full propagator


def branch_propagators(h: HyperfineCoupling, tau: float, n_pulses: int):
    """Nuclear propagators for the NV starting in ``m_s = 0`` and in ``m_s = 1``."""
    H = (h.omega_L * _SZ, (h.A_par + h.omega_L) * _SZ + h.A_perp * _SX)
    half = [expm(-1j * Hk * tau / 2) for Hk in H]
    full = [expm(-1j * Hk * tau) for Hk in H]
    out = []
    for start in (0, 1):
        b = start
        U = half[b]
        for _ in range(n_pulses - 1):
            b ^= 1
            U = full[b] @ U
        b ^= 1
        U = half[b] @ U
        out.append(U)
    return out


def xy_signal_propagator(h: HyperfineCoupling, tau: float, n_pulses: int) -> float:
    """Same quantity as :func:`xy_signal` from explicit propagation, unpolarised nucleus."""
    V0, V1 = branch_propagators(h, tau, n_pulses)
    return float(np.real(np.trace(V0.conj().T @ V1)) / 2)


def flip_probability_propagator(h: HyperfineCoupling, tau: float, n_pulses: int,
                                nuclear_state: str) -> float:
    """NV flip probability for a nucleus prepared in ``"up"`` or ``"down"``."""
    k = {"up": 0, "down": 1}[nuclear_state]
    V0, V1 = branch_propagators(h, tau, n_pulses)
    return float((1.0 - np.real((V0.conj().T @ V1)[k, k])) / 2)


# --------------------------------------------------------- resonance search


def strong_field_resonance(h: HyperfineCoupling) -> float:
    """First coherent-flip spacing in the strong-field limit, ``2 pi / (2 omega_L + A_par)``."""
    return 2 * math.pi / (2 * h.omega_L + h.A_par)


def first_resonance_tau(h: HyperfineCoupling, n_grid: int = 10_000,
                        min_depth: float = 0.5) -> float:
    """Smallest spacing at which ``Nc`` has a local maximum above ``min_depth``.

    Scans ``tau in (0, 4 pi / omega_L]`` and refines the first qualifying peak.
    """
    taus = np.linspace(4 * math.pi / h.omega_L / n_grid, 4 * math.pi / h.omega_L, n_grid)
    d = depth(h, taus)
    peaks = [i for i in argrelmax(d)[0] if d[i] > min_depth]
    if not peaks:
        raise ResonanceNotFoundError(
            f"no resonance with depth > {min_depth} for tau <= {taus[-1]:.4g} s"
        )
    i = peaks[0]
    res = minimize_scalar(lambda t: -float(depth(h, t)), bounds=(taus[i - 1], taus[i + 1]),
                          method="bounded", options={"xatol": taus[0] * 1e-9})
    return float(res.x)


def flip_pulse_count(h: HyperfineCoupling, tau_res: float, threshold: float = 0.99,
                     step: int = 2, n_max: int = 100_000) -> int:
    """Smallest pulse count whose flip probability reaches ``threshold``.

    ``step=2`` keeps to even counts, where the closed form holds.
    """
    reach = float(depth(h, tau_res)) / 2
    if reach < threshold:
        raise NotResonantError(
            f"maximum flip probability {reach:.4f} at tau={tau_res:.4g} s is below {threshold}"
        )
    return pulse_count_for_angle(float(rotation_angle(h, tau_res)), threshold / reach, step, n_max)


def pulse_count_for_angle(phi: float, threshold: float = 0.99, step: int = 1,
                          n_max: int = 100_000) -> int:
    """Smallest ``N`` (multiple of ``step``) with ``sin^2(N phi / 2) >= threshold``."""
    if step not in (1, 2):
        raise ValueError("step must be 1 or 2")
    n = np.arange(step, n_max + 1, step)
    ok = np.sin(n * phi / 2) ** 2 >= threshold - 1e-12
    if not ok.any():
        raise NotResonantError(f"no pulse count up to {n_max} reaches {threshold}")
    return int(n[np.argmax(ok)])


def spectrum(h: HyperfineCoupling, taus, n_pulses: int) -> np.ndarray:
    """Rows ``(tau, N, signal)`` for a spacing sweep."""
    taus = np.asarray(taus, dtype=float)
    return np.column_stack([taus, np.full_like(taus, n_pulses), xy_signal(h, taus, n_pulses)])
