"""Field phase sampling, filter functions and decoherence exponents.

Conventions
-----------
A decoupling sequence is described by its toggling function ``y(t) = +-1`` on
``[start, start + duration]``. The phase picked up by an NV from a field with
precession rate ``b(t) = gamma B(t)`` (rad/s) is ``phi = int y(t) b(t) dt``.
With ``G(w) = int y(t) exp(i w t) dt`` the filter function is normalised as
``F(w) = w**2 |G(w)|**2 / 2`` so that for a stationary Gaussian field with
two-sided power spectrum ``S(w)``

    chi = <phi**2> / 2 = (1/pi) int_0^inf F(w) / w**2 S(w) dw

holds exactly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .gates import PhasePair

_BATCH = 2048
_FAMILY_UNIT = {"hahn": 1, "cpmg": 1, "xy4": 4, "xy8": 8, "xy16": 16}


class IntegrationError(RuntimeError):
    """Raised when the decoherence quadrature does not converge."""


@dataclass(frozen=True)
class SequenceTiming:
    """Pulse timing of one phase-accumulation window.

    ``tau`` is the interpulse spacing. XY-type and CPMG windows place ``n_pulses``
    pi pulses at ``start + (k - 1/2) tau`` and last ``n_pulses * tau``. A Hahn
    echo is ``tau - pi - tau`` and lasts ``2 tau``. Both have their first
    filter peak near ``w = pi / tau``.
    """

    family: str
    tau: float
    n_pulses: int | None = None
    start: float = 0.0

    def __post_init__(self):
        fam = self.family.lower()
        if fam not in _FAMILY_UNIT:
            raise ValueError(f"unknown sequence family {self.family!r}")
        object.__setattr__(self, "family", fam)
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        n = self.n_pulses if self.n_pulses is not None else _FAMILY_UNIT[fam]
        if fam == "hahn" and n != 1:
            raise ValueError("a Hahn echo has exactly one pi pulse")
        if n < 1 or n % _FAMILY_UNIT[fam]:
            raise ValueError(f"{fam} needs a pulse count that is a multiple of {_FAMILY_UNIT[fam]}")
        object.__setattr__(self, "n_pulses", int(n))

    @property
    def duration(self) -> float:
        if self.family == "hahn":
            return 2 * self.tau
        return self.n_pulses * self.tau

    @property
    def end(self) -> float:
        return self.start + self.duration

    def pulse_times(self) -> np.ndarray:
        if self.family == "hahn":
            return np.array([self.start + self.tau])
        k = np.arange(1, self.n_pulses + 1)
        return self.start + (k - 0.5) * self.tau

    def edges(self) -> np.ndarray:
        """Segment boundaries: window start, every pulse, window end."""
        return np.concatenate([[self.start], self.pulse_times(), [self.end]])

    def signs(self) -> np.ndarray:
        """Toggling sign of each segment between consecutive edges."""
        return np.where(np.arange(len(self.edges()) - 1) % 2 == 0, 1.0, -1.0)

    def shifted(self, start: float) -> "SequenceTiming":
        return SequenceTiming(self.family, self.tau, self.n_pulses, start)

    def toggling(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        e = self.edges()
        idx = np.searchsorted(e, t, side="right") - 1
        out = np.where(idx % 2 == 0, 1.0, -1.0)
        return np.where((t < e[0]) | (t > e[-1]), 0.0, out)

    def response(self, omega) -> np.ndarray:
        """``G(w) = int y(t) exp(i w t) dt`` evaluated in closed form."""
        w = np.atleast_1d(np.asarray(omega, dtype=float))
        e = self.edges()
        s = self.signs()
        out = np.empty(w.shape, dtype=complex)
        small = np.abs(w) * self.duration < 1e-6
        # exact segment integrals; Taylor form near w = 0
        ws = w[~small][:, None]
        seg = (np.exp(1j * ws * e[None, 1:]) - np.exp(1j * ws * e[None, :-1])) / (1j * ws)
        out[~small] = seg @ s
        if small.any():
            wz = w[small][:, None]
            dt = np.diff(e)[None, :]
            mid = 0.5 * (e[1:] + e[:-1])[None, :]
            out[small] = (np.exp(1j * wz * mid) * dt) @ s
        return out if np.ndim(omega) else out[0]


def filter_function(seq: SequenceTiming) -> Callable[[np.ndarray], np.ndarray]:
    """Return ``F(w) = w**2 |G(w)|**2 / 2`` for the given window."""

    def F(omega):
        w = np.asarray(omega, dtype=float)
        return 0.5 * w**2 * np.abs(seq.response(w)) ** 2

    return F


def filter_function_for(family: str, tau: float, n_pulses: int | None = None):
    return filter_function(SequenceTiming(family, tau, n_pulses))


# ---------------------------------------------------------------- spectra


@dataclass(frozen=True)
class SpectralDensity:
    """Two-sided classical noise spectrum ``S(w)`` in rad^2/s, symmetric in ``w``.

    Build with :meth:`flat`, :meth:`lorentzian` or :meth:`tabulated`.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("zero", "flat", "lorentzian", "tabulated"):
            raise ValueError(f"unknown spectral density kind {self.kind!r}")
        if self.kind == "tabulated":
            w = np.asarray(self.params["omega"], dtype=float)
            s = np.asarray(self.params["S"], dtype=float)
            if w.ndim != 1 or w.shape != s.shape or np.any(np.diff(w) <= 0):
                raise ValueError("tabulated spectrum needs increasing omega and matching S")
            if np.any(s < 0):
                raise ValueError("spectral density must be non-negative")
        elif self.kind == "flat" and self.params["level"] < 0:
            raise ValueError("spectral density must be non-negative")

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def flat(cls, level: float, band: tuple[float, float] | None = None):
        """Constant ``level`` for ``lo <= |w| <= hi`` (everywhere if ``band`` is None)."""
        return cls("flat", {"level": float(level), "band": None if band is None else tuple(band)})

    @classmethod
    def from_field_rms(cls, sigma_B: float, gamma: float, band=None):
        """Flat-band level ``gamma**2 sigma_B**2 / Hz`` for a field noise density ``sigma_B`` (T/sqrt(Hz))."""
        return cls.flat(gamma**2 * sigma_B**2, band)

    @classmethod
    def lorentzian(cls, amplitude: float, center: float, width: float):
        return cls("lorentzian", {"amplitude": float(amplitude), "center": float(center),
                                  "width": float(width)})

    @classmethod
    def tabulated(cls, omega: Sequence[float], S: Sequence[float]):
        return cls("tabulated", {"omega": tuple(map(float, omega)), "S": tuple(map(float, S))})

    @classmethod
    def from_table_file(cls, path) -> "SpectralDensity":
        """Read a whitespace separated two-column ``omega S`` table; ``#`` starts a comment."""
        data = np.loadtxt(path, comments="#", ndmin=2)
        return cls.tabulated(data[:, 0], data[:, 1])

    def __call__(self, omega) -> np.ndarray:
        w = np.abs(np.asarray(omega, dtype=float))
        p = self.params
        if self.kind == "zero":
            return np.zeros_like(w)
        if self.kind == "flat":
            out = np.full_like(w, p["level"])
            if p["band"] is not None:
                lo, hi = p["band"]
                out = np.where((w >= lo) & (w <= hi), out, 0.0)
            return out
        if self.kind == "lorentzian":
            g = p["width"]
            return p["amplitude"] * 0.5 * (g**2 / ((w - p["center"]) ** 2 + g**2)
                                           + g**2 / ((w + p["center"]) ** 2 + g**2))
        tw = np.asarray(p["omega"])
        return np.interp(w, tw, np.asarray(p["S"]), left=0.0, right=0.0)

    def support(self) -> tuple[float, float] | None:
        """Frequency interval outside which ``S`` vanishes, if bounded."""
        if self.kind == "flat" and self.params["band"] is not None:
            return tuple(self.params["band"])
        if self.kind == "tabulated":
            return (max(self.params["omega"][0], 0.0), self.params["omega"][-1])
        return None

    def breakpoints(self) -> list[float]:
        p = self.params
        if self.kind == "flat" and p["band"] is not None:
            return list(p["band"])
        if self.kind == "lorentzian":
            return [abs(p["center"])]
        if self.kind == "tabulated":
            return [w for w in p["omega"] if w > 0]
        return []


def chi_from_spectrum(S: SpectralDensity, seq: SequenceTiming, rtol: float = 1e-6) -> float:
    """Decoherence exponent ``chi = (1/pi) int_0^inf F(w)/w**2 S(w) dw`` for window ``seq``.

    The integrand is split into panels on a log-spaced grid refined around the
    filter harmonics and the spectrum's breakpoints; each panel is integrated
    adaptively. For spectra that do not vanish at high frequency an analytic
    tail ``S(w_max) * sum(jumps**2) / w_max`` is added, where the jumps of the
    toggling function set the mean of ``|G|**2 w**2``.
    """
    if S.kind == "zero":
        return 0.0
    T = seq.duration
    w_peak = math.pi / seq.tau
    w_lo = 1e-4 / T
    support = S.support()
    w_hi = 400.0 * w_peak
    if support is not None:
        w_hi = min(w_hi, support[1])
        w_lo = max(w_lo, support[0]) if support[0] > 0 else w_lo
    if w_hi <= w_lo:
        return 0.0

    # panels: log grid plus dense linear grid through the first filter lobes
    n_harm = int(min(w_hi / w_peak, 400))
    lin = w_peak * np.arange(0.5, n_harm + 0.5, 0.25 / max(1, seq.n_pulses // 8))
    grid = np.unique(np.concatenate([
        np.geomspace(w_lo, w_hi, 120), lin, np.asarray(S.breakpoints(), dtype=float), [w_lo, w_hi],
    ]))
    grid = grid[(grid >= w_lo) & (grid <= w_hi)]

    def integrand(w):
        return 0.5 * np.abs(seq.response(w)) ** 2 * S(w)

    # absolute tolerance per panel from a coarse first pass over the grid
    fine = np.unique(np.concatenate([grid, 0.5 * (grid[1:] + grid[:-1])]))
    rough = float(np.trapezoid(integrand(fine), fine))
    epsabs = rtol * 1e-2 * max(rough, 1e-300) / len(grid)
    total = 0.0
    err = 0.0
    with warnings.catch_warnings():
        # convergence is judged from the summed error estimate below
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(grid[:-1], grid[1:]):
            val, e = integrate.quad(integrand, a, b, epsrel=rtol * 1e-2, epsabs=epsabs, limit=200)
            total += val
            err += e
    # low-frequency piece below w_lo: |G|^2 ~ (net area)^2, bounded by T^2
    total += 0.5 * abs(seq.response(0.0)) ** 2 * float(S(0.0)) * w_lo
    if support is None:
        jumps2 = 2.0 + 4.0 * seq.n_pulses
        total += 0.5 * float(S(w_hi)) * jumps2 / w_hi
    chi = total / math.pi
    if not math.isfinite(chi) or err / math.pi > max(rtol * abs(chi), 1e-300) * 10:
        raise IntegrationError(
            f"decoherence quadrature did not converge: chi={chi!r}, error estimate={err / math.pi!r}"
        )
    return chi


def chi_narrowband(S: SpectralDensity, seq: SequenceTiming) -> float:
    """Narrowband estimate ``(t/pi) S(pi/tau)`` for a window of length ``t``."""
    return seq.duration / math.pi * float(S(math.pi / seq.tau))


def correlated_sin_moment(chi_C):
    """``<sin phi_a sin phi_b> = exp(-2 chi_C) sinh(2 chi_C)`` for identical Gaussian phases."""
    chi_C = np.asarray(chi_C, dtype=float)
    if np.any(chi_C < 0):
        raise ValueError("chi_C must be non-negative")
    out = -0.5 * np.expm1(-4.0 * chi_C)
    return float(out) if out.ndim == 0 else out


# ------------------------------------------------------------ test fields


@dataclass(frozen=True)
class AcToneSpec:
    """Global AC test field seen by both NVs with a random start phase per shot.

    ``amp_a`` and ``amp_b`` are the precession-rate amplitudes ``gamma B_i`` of the
    field projected on each NV (rad/s). Their signs encode which spin transition
    is addressed. With ``phase_noise_bw > 0`` the tone carries a random phase
    modulation that is flat within ``+-phase_noise_bw`` (Hz) with RMS deviation
    ``phase_noise_rms`` (rad), redrawn each shot.
    """

    f0: float
    amp_a: float
    amp_b: float
    phase_noise_bw: float = 0.0
    phase_noise_rms: float = 1.0
    phase_noise_modes: int = 16

    def __post_init__(self):
        if not self.f0 > 0:
            raise ValueError("f0 must be positive")
        if self.phase_noise_bw < 0 or self.phase_noise_rms < 0:
            raise ValueError("phase noise parameters must be non-negative")

    @property
    def omega0(self) -> float:
        return 2 * math.pi * self.f0

    def with_amplitudes(self, amp_a: float, amp_b: float) -> "AcToneSpec":
        return AcToneSpec(self.f0, amp_a, amp_b, self.phase_noise_bw, self.phase_noise_rms,
                          self.phase_noise_modes)


@dataclass(frozen=True)
class CorrelatedNoiseSpec:
    """Gaussian phase noise shared by both NVs within one window.

    Each shot draws ``phi_C ~ N(0, 2 chi_C)``; NV ``i`` sees ``sign_i * phi_C``.
    """

    chi_C: float
    sign_a: float = 1.0
    sign_b: float = 1.0

    def __post_init__(self):
        if self.chi_C < 0:
            raise ValueError("chi_C must be non-negative")

    @classmethod
    def from_spectrum(cls, S: SpectralDensity, seq: SequenceTiming, sign_b: float = 1.0):
        return cls(chi_from_spectrum(S, seq), 1.0, sign_b)


def _tone_unit_phases(spec: AcToneSpec, windows: Sequence[SequenceTiming], n: int,
                      rng: np.random.Generator, nodes_per_cycle: int = 24) -> np.ndarray:
    """Phases for unit amplitude, shape ``(n, len(windows))``; shared field across windows."""
    theta = rng.uniform(0.0, 2 * math.pi, size=n)
    w0 = spec.omega0
    if spec.phase_noise_bw == 0 or spec.phase_noise_rms == 0:
        G = np.array([w.response(w0) for w in windows])
        return np.real(np.exp(1j * theta)[:, None] * G[None, :])

    K = spec.phase_noise_modes
    wk = rng.uniform(0.0, 2 * math.pi * spec.phase_noise_bw, size=(n, K))
    psik = rng.uniform(0.0, 2 * math.pi, size=(n, K))
    ak = spec.phase_noise_rms * math.sqrt(2.0 / K)
    fmax = spec.f0 + spec.phase_noise_bw * (1 + spec.phase_noise_rms)
    gl_x, gl_w = np.polynomial.legendre.leggauss(8)
    out = np.empty((n, len(windows)))
    for j, win in enumerate(windows):
        t_nodes, w_nodes = [], []
        e, s = win.edges(), win.signs()
        for a, b, sg in zip(e[:-1], e[1:], s):
            m = max(1, int(math.ceil((b - a) * fmax * nodes_per_cycle / 8)))
            sub = np.linspace(a, b, m + 1)
            for lo, hi in zip(sub[:-1], sub[1:]):
                t_nodes.append(0.5 * (hi - lo) * gl_x + 0.5 * (hi + lo))
                w_nodes.append(0.5 * (hi - lo) * gl_w * sg)
        t = np.concatenate(t_nodes)
        wts = np.concatenate(w_nodes)
        # the modulation is band-limited, so evaluate it on Chebyshev nodes and interpolate
        c, M = _chebyshev_interpolator(e[0], e[-1], 2 * math.pi * spec.phase_noise_bw, t)
        for a in range(0, n, _BATCH):
            b = min(a + _BATCH, n)
            xi = (ak * np.cos(wk[a:b, :, None] * c + psik[a:b, :, None]).sum(axis=1)) @ M.T
            out[a:b, j] = np.cos(w0 * t + theta[a:b, None] + xi) @ wts
    return out


def _chebyshev_interpolator(a: float, b: float, omega_max: float, t: np.ndarray):
    """Chebyshev nodes on ``[a, b]`` and the matrix mapping values there to values at ``t``.

    The node count resolves any signal with frequencies up to ``omega_max`` to
    near machine precision.
    """
    half = 0.5 * (b - a)
    m = int(math.ceil(1.3 * omega_max * half)) + 20
    k = np.arange(m)
    x = np.cos(math.pi * (k + 0.5) / m)
    wb = (-1.0) ** k * np.sin(math.pi * (k + 0.5) / m)
    u = (np.asarray(t) - 0.5 * (a + b)) / half
    d = u[:, None] - x[None, :]
    hit = d == 0
    d[hit] = 1.0
    M = wb / d
    M /= M.sum(axis=1, keepdims=True)
    rows = hit.any(axis=1)
    M[rows] = hit[rows].astype(float)
    return 0.5 * (a + b) + half * x, M


def sample_window_phases(signal, windows: Sequence[SequenceTiming], n: int,
                         rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Phases for NV a and NV b in each window, arrays of shape ``(n, len(windows))``.

    One field realisation per shot is shared by both NVs and all windows.
    ``signal`` is an :class:`AcToneSpec`, a :class:`CorrelatedNoiseSpec`, or None.
    """
    windows = list(windows)
    if signal is None:
        z = np.zeros((n, len(windows)))
        return z, z.copy()
    if isinstance(signal, AcToneSpec):
        u = _tone_unit_phases(signal, windows, n, rng)
        return signal.amp_a * u, signal.amp_b * u
    if isinstance(signal, CorrelatedNoiseSpec):
        if any(w != windows[0] for w in windows[1:]):
            raise ValueError("correlated Gaussian noise is defined for a single window")
        u = np.repeat(rng.normal(0.0, math.sqrt(2.0 * signal.chi_C), size=(n, 1)), len(windows), axis=1)
        return signal.sign_a * u, signal.sign_b * u
    raise TypeError(f"unsupported signal type {type(signal).__name__}")


def sample_phases(signal, seq: SequenceTiming, n: int, rng: np.random.Generator):
    """Vectorised phases ``(phi_a, phi_b)`` for ``n`` shots of a single window."""
    a, b = sample_window_phases(signal, [seq], n, rng)
    return a[:, 0], b[:, 0]


def sample_phase_pair(signal, seq: SequenceTiming, rng: np.random.Generator) -> PhasePair:
    a, b = sample_phases(signal, seq, 1, rng)
    return PhasePair(float(a[0]), float(b[0]))


def max_tone_phase(spec: AcToneSpec, seq: SequenceTiming) -> tuple[float, float]:
    """Largest phase over start phases: ``amp_i |G(w0)|``."""
    g = abs(seq.response(spec.omega0))
    return abs(spec.amp_a) * g, abs(spec.amp_b) * g


# ---------------------------------------------------------- decoherence


@dataclass(frozen=True)
class DecoherenceModel:
    """Per-NV decoherence exponents ``chi(t) = (t / T2)**stretch``.

    Separate coherence times can be given for entangling gates and idle delays;
    they default to the sensing values. ``T2 = inf`` switches an NV's
    decoherence off.
    """

    T2_a: float = math.inf
    T2_b: float = math.inf
    stretch: float = 1.0
    T2_ent_a: float | None = None
    T2_ent_b: float | None = None
    T2_delay_a: float | None = None
    T2_delay_b: float | None = None

    def __post_init__(self):
        for name in ("T2_a", "T2_b", "T2_ent_a", "T2_ent_b", "T2_delay_a", "T2_delay_b"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")
        if not self.stretch > 0:
            raise ValueError("stretch exponent must be positive")

    @classmethod
    def none(cls) -> "DecoherenceModel":
        return cls()

    def _chi(self, t, T2):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("interval length must be non-negative")
        if math.isinf(T2):
            out = np.zeros_like(t)
        else:
            out = (t / T2) ** self.stretch
        return float(out) if out.ndim == 0 else out

    def chi_sense(self, t) -> tuple:
        return self._chi(t, self.T2_a), self._chi(t, self.T2_b)

    def chi_ent(self, t) -> tuple:
        Ta = self.T2_ent_a if self.T2_ent_a is not None else self.T2_a
        Tb = self.T2_ent_b if self.T2_ent_b is not None else self.T2_b
        return self._chi(t, Ta), self._chi(t, Tb)

    def chi_delay(self, t) -> tuple:
        Ta = self.T2_delay_a if self.T2_delay_a is not None else self.T2_a
        Tb = self.T2_delay_b if self.T2_delay_b is not None else self.T2_b
        return self._chi(t, Ta), self._chi(t, Tb)

    def sense_coherence(self, t) -> float:
        """``exp(-chi_a(t) - chi_b(t))``: joint attenuation of the two sensing windows."""
        ca, cb = self.chi_sense(t)
        return float(np.exp(-ca - cb))

    def gate_coherence(self, t_gates) -> float:
        """Arithmetic mean of per-NV gate coherences over a total gate time ``t_gates``."""
        ca, cb = self.chi_ent(t_gates)
        return float(0.5 * (np.exp(-ca) + np.exp(-cb)))
