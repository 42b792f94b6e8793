"""Closed-form SNR, sensitivity and spectrum-reconstruction calculators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import GAMMA_E, HZ
from .noisefield import DecoherenceModel, correlated_sin_moment
from .readout import ReadoutModel, sigma_r_poisson


class InfeasibleBudgetError(ValueError):
    """The requested measurement cannot resolve any signal with the given budget."""


class DegenerateCoherenceError(ValueError):
    """Coherence product is zero, so the correlation carries no information."""


# ------------------------------------------------------------------ SNR


def snr_entangled(r_ideal, sigma_R, chi_e=0.0, N=1):
    """Difference-signal SNR for ``N`` total Bell-pair experiments (half Phi, half Psi)."""
    _check_sigma(sigma_R)
    return np.sqrt(2 * N) * np.exp(-chi_e) / np.sqrt(1 + np.square(sigma_R)) * r_ideal


def snr_noninteracting(r_ideal, sigma_R, N=1):
    """Covariance SNR of two separately read NVs after ``N`` experiments."""
    _check_sigma(sigma_R)
    return np.sqrt(N) / np.square(sigma_R) * r_ideal


def snr_variance_based(r_ideal, sigma_R, N=1):
    """Phase-cycled variance SNR; ``N`` experiments in each of the four cycles."""
    _check_sigma(sigma_R)
    return np.sqrt(2 * N) / (r_ideal + np.square(sigma_R)) * r_ideal


def snr_gain(sigma_R, chi_e=0.0, exact: bool = False):
    """Entangled over non-interacting SNR at equal ``N``.

    The approximate form ``sqrt(2) sigma_R exp(-chi_e)`` holds for ``sigma_R >> 1``.
    """
    _check_sigma(sigma_R)
    s = np.asarray(sigma_R, dtype=float)
    if exact:
        out = np.sqrt(2) * s**2 * np.exp(-chi_e) / np.sqrt(1 + s**2)
    else:
        out = np.sqrt(2) * s * np.exp(-chi_e)
    return float(out) if out.ndim == 0 else out


def _check_sigma(sigma_R):
    if np.any(np.asarray(sigma_R) < 1):
        raise ValueError("readout noise sigma_R is at least 1")


# ------------------------------------------------------------------ sensitivity


@dataclass(frozen=True)
class ExperimentBudget:
    """Timing of a repeated measurement; ``N`` is derived from the total time ``T``."""

    t: float
    t_e: float
    t_R: float
    T: float
    T2: float

    def __post_init__(self):
        for k in ("t", "t_R", "T", "T2"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")
        if self.t_e < 0:
            raise ValueError("t_e must be non-negative")

    @property
    def cycle(self) -> float:
        return self.t + 2 * self.t_e + self.t_R

    @property
    def N(self) -> float:
        return self.T / self.cycle

    def classical(self) -> "ExperimentBudget":
        """Same budget without entangling gates."""
        return ExperimentBudget(self.t, 0.0, self.t_R, self.T, self.T2)


def _ln_term(x: np.ndarray, label: str) -> np.ndarray:
    if np.any(x >= 1):
        bad = float(np.max(x))
        raise InfeasibleBudgetError(
            f"{label} = {bad:.4g} >= 1: readout noise times decay exceeds sqrt(N); "
            "increase T or reduce sigma_R"
        )
    return np.log1p(-x)


def sensitivity_min(budget: ExperimentBudget, sigma_R: float, exact: bool = True,
                    gamma: float = GAMMA_E):
    """Minimum detectable variance of a flat-spectrum correlated field (T^2 per Hz).

    ``exact=False`` returns the leading term for ``N >> 1``.
    """
    _check_sigma(sigma_R)
    t = budget.t
    x = math.sqrt(2) * sigma_R * np.exp(2 * (t + 2 * budget.t_e) / budget.T2) / np.sqrt(budget.N)
    pref = math.pi * HZ / (4 * gamma**2 * t)
    if not exact:
        return pref * x
    return -pref * _ln_term(x, "sqrt(2) sigma_R exp(2(t+2t_e)/T2) / sqrt(N)")


def sensitivity_min_classical(budget: ExperimentBudget, sigma_R: float, exact: bool = True,
                              gamma: float = GAMMA_E):
    """Same quantity for non-interacting covariance magnetometry (no gates, quadratic in sigma_R)."""
    _check_sigma(sigma_R)
    t = budget.t
    n = budget.T / (t + budget.t_R)
    x = 2 * sigma_R**2 * np.exp(2 * t / budget.T2) / np.sqrt(n)
    pref = math.pi * HZ / (4 * gamma**2 * t)
    if not exact:
        return pref * x
    return -pref * _ln_term(x, "2 sigma_R^2 exp(2t/T2) / sqrt(N)")


@dataclass(frozen=True)
class CurveSpec:
    label: str
    scheme: str  # "entangled" or "classical"
    sigma_R: float
    t_R: float


def default_curves(sigma_R_conventional: float = 35.0, sigma_R_scc: float | None = None):
    """Entangled and classical conventional readout, and classical SCC readout."""
    if sigma_R_scc is None:
        m = ReadoutModel.scc()
        sigma_R_scc = sigma_r_poisson(m.alpha0, m.alpha1)
    return (
        CurveSpec("entangled_conventional", "entangled", sigma_R_conventional, 300e-9),
        CurveSpec("classical_conventional", "classical", sigma_R_conventional, 300e-9),
        CurveSpec("classical_scc", "classical", sigma_R_scc, 1e-3),
    )


def sensitivity_curves(T_grid, t: float = 25e-6, t_e: float = 2e-6, T2: float = 100e-6,
                       curves=None, gamma: float = GAMMA_E) -> dict:
    """Minimum detectable field amplitude ``sigma_B`` (T per sqrt Hz) versus total time.

    Budgets too short for a curve give NaN at those points.
    """
    T_grid = np.asarray(T_grid, dtype=float)
    out = {"T": T_grid}
    for c in curves or default_curves():
        vals = np.full(T_grid.shape, np.nan)
        for i, T in enumerate(T_grid):
            b = ExperimentBudget(t, t_e, c.t_R, T, T2)
            try:
                if c.scheme == "entangled":
                    v = sensitivity_min(b, c.sigma_R, gamma=gamma)
                else:
                    v = sensitivity_min_classical(b.classical(), c.sigma_R, gamma=gamma)
            except InfeasibleBudgetError:
                continue
            vals[i] = math.sqrt(v)
        out[c.label] = vals
    return out


# ------------------------------------------------------------------ spectra


def spectrum_forward(S_C: float, t: float, chi_local_a: float = 0.0, chi_local_b: float = 0.0):
    """Correlation and coherences produced by a flat correlated spectrum ``S_C``.

    Returns ``(r_ideal, C1, C2)`` where ``C_i = exp(-chi_local_i - chi_C)`` and
    ``chi_C = t S_C / pi``.
    """
    chi_C = t * S_C / math.pi
    C1 = math.exp(-chi_local_a - chi_C)
    C2 = math.exp(-chi_local_b - chi_C)
    r = math.exp(-chi_local_a - chi_local_b) * correlated_sin_moment(chi_C)
    return r, C1, C2


def spectrum_reconstruct(r_ideal, C1, C2, t: float):
    """Correlated spectral density ``(pi / 2t) asinh(r / (C1 C2))``."""
    C1 = np.asarray(C1, dtype=float)
    C2 = np.asarray(C2, dtype=float)
    if np.any(C1 * C2 == 0):
        raise DegenerateCoherenceError("C1 * C2 == 0")
    if np.any((C1 < 0) | (C1 > 1) | (C2 < 0) | (C2 > 1)):
        raise ValueError("coherences must lie in (0, 1]")
    out = math.pi / (2 * t) * np.arcsinh(np.asarray(r_ideal) / (C1 * C2))
    return float(out) if np.ndim(out) == 0 else out


# ------------------------------------------------------------------ fidelity


def fidelity_form_sensitivity(T2_a: float, T2_b: float, t_e: float) -> list[dict]:
    """Expected Bell fidelity (per p^2) under alternative gate-decoherence forms."""
    rows = []
    for label, stretch, interval in (("exp over t_e", 1.0, t_e), ("exp over 2 t_e", 1.0, 2 * t_e),
                                     ("gaussian over t_e", 2.0, t_e),
                                     ("gaussian over 2 t_e", 2.0, 2 * t_e)):
        d = DecoherenceModel(T2_a=T2_a, T2_b=T2_b, stretch=stretch)
        ca, cb = (math.exp(-c) for c in d.chi_ent(interval))
        rows.append({"form": label, "stretch": stretch, "interval": interval,
                     "sigma_ab": ca + cb, "pi_ab": ca * cb, "F_over_p2": (1 + ca + cb + ca * cb) / 4})
    return rows
