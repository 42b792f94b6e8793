"""Photon-counting readout of one or two NV centres."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

log = logging.getLogger(__name__)

# spin state of each NV for the four basis entries (|11>, |10>, |01>, |00>)
_SPIN_A = np.array([1, 1, 0, 0])
_SPIN_B = np.array([1, 0, 1, 0])


class DegenerateContrastError(ValueError):
    """Raised when the two spin states give the same mean photon number."""


@dataclass(frozen=True)
class ReadoutModel:
    """Photon statistics of a single-NV readout.

    ``sigma0_sq`` and ``sigma1_sq`` default to the Poisson values ``alpha0`` and
    ``alpha1``. ``p_nv_minus`` is the probability that the NV starts in the
    negative charge state; otherwise it emits spin-independent counts with mean
    ``alpha1``.
    """

    alpha0: float
    alpha1: float
    sigma0_sq: float | None = None
    sigma1_sq: float | None = None
    p_nv_minus: float = 1.0
    mode: str = "conventional"
    t_R: float = 300e-9

    def __post_init__(self):
        if self.alpha0 < 0 or self.alpha1 < 0:
            raise ValueError("mean photon numbers must be non-negative")
        if self.alpha0 == self.alpha1:
            raise DegenerateContrastError("alpha0 == alpha1: readout has no spin contrast")
        if self.sigma0_sq is None:
            object.__setattr__(self, "sigma0_sq", float(self.alpha0))
        if self.sigma1_sq is None:
            object.__setattr__(self, "sigma1_sq", float(self.alpha1))
        if self.sigma0_sq < 0 or self.sigma1_sq < 0:
            raise ValueError("photon variances must be non-negative")
        if not 0 < self.p_nv_minus <= 1:
            raise ValueError("p_nv_minus must lie in (0, 1]")
        if self.mode not in ("conventional", "scc"):
            raise ValueError("mode must be 'conventional' or 'scc'")
        if not self.t_R > 0:
            raise ValueError("t_R must be positive")

    @classmethod
    def conventional(cls, **kw) -> "ReadoutModel":
        """Typical room-temperature fluorescence readout (sigma_R about 31.6)."""
        return cls(**{"alpha0": 0.02, "alpha1": 0.012, "t_R": 300e-9, **kw})

    @classmethod
    def scc(cls, **kw) -> "ReadoutModel":
        """Spin-to-charge conversion preset: contrast 0.48 photons, 1 ms readout."""
        return cls(**{"alpha0": 1.0, "alpha1": 0.52, "mode": "scc", "t_R": 1e-3, **kw})

    @property
    def contrast(self) -> float:
        return self.alpha0 - self.alpha1

    @property
    def is_poisson(self) -> bool:
        return self.sigma0_sq == self.alpha0 and self.sigma1_sq == self.alpha1

    def scaled(self, factor: float) -> "ReadoutModel":
        """Scale both means (and Poisson variances) by ``factor``."""
        if self.is_poisson:
            return replace(self, alpha0=self.alpha0 * factor, alpha1=self.alpha1 * factor,
                           sigma0_sq=None, sigma1_sq=None)
        return replace(self, alpha0=self.alpha0 * factor, alpha1=self.alpha1 * factor,
                       sigma0_sq=self.sigma0_sq * factor**2, sigma1_sq=self.sigma1_sq * factor**2)


def sigma_r_general(m: ReadoutModel) -> float:
    """Readout noise ``sqrt(1 + 2 (s0^2 + s1^2) / (a0 - a1)^2)``."""
    d = m.alpha0 - m.alpha1
    if d == 0:
        raise DegenerateContrastError("alpha0 == alpha1")
    return math.sqrt(1.0 + 2.0 * (m.sigma0_sq + m.sigma1_sq) / d**2)


def sigma_r_poisson(alpha0: float, alpha1: float) -> float:
    d = alpha0 - alpha1
    if d == 0:
        raise DegenerateContrastError("alpha0 == alpha1")
    return math.sqrt(1.0 + 2.0 * (alpha0 + alpha1) / d**2)


def poisson_for_sigma_r(sigma_R: float, ratio: float = 0.6) -> ReadoutModel:
    """Poisson model with ``alpha1 = ratio * alpha0`` and the requested readout noise."""
    if sigma_R <= 1:
        raise ValueError("a Poisson readout always has sigma_R > 1")
    # sigma_R^2 - 1 = 2 (1 + ratio) / (alpha0 (1 - ratio)^2)
    a0 = 2 * (1 + ratio) / ((sigma_R**2 - 1) * (1 - ratio) ** 2)
    return ReadoutModel(alpha0=a0, alpha1=ratio * a0)


def mixture_variance(m: ReadoutModel, p0) -> np.ndarray | float:
    """Photon variance of one NV found in spin 0 with probability ``p0``."""
    p0 = np.asarray(p0, dtype=float)
    if np.any((p0 < 0) | (p0 > 1)):
        raise ValueError("p0 must lie in [0, 1]")
    p1 = 1.0 - p0
    out = p0 * m.sigma0_sq + p1 * m.sigma1_sq + p0 * p1 * (m.alpha0 - m.alpha1) ** 2
    return float(out) if out.ndim == 0 else out


def mean_photons(m: ReadoutModel, p0) -> np.ndarray | float:
    p0 = np.asarray(p0, dtype=float)
    out = p0 * m.alpha0 + (1 - p0) * m.alpha1
    return float(out) if out.ndim == 0 else out


def baseline_variance_from_mean(m: ReadoutModel, mu) -> np.ndarray | float:
    """Variance expected for a single NV whose mean photon number is ``mu``.

    ``mu`` outside the interval spanned by ``alpha0`` and ``alpha1`` is clamped
    to it with a logged warning.
    """
    mu = np.asarray(mu, dtype=float)
    lo, hi = sorted((m.alpha0, m.alpha1))
    if np.any((mu < lo) | (mu > hi)):
        log.warning("mean photon number outside [%g, %g]; clamping", lo, hi)
        mu = np.clip(mu, lo, hi)
    d = m.alpha0 - m.alpha1
    out = ((mu - m.alpha1) / d) * m.sigma0_sq + ((m.alpha0 - mu) / d) * m.sigma1_sq \
        + (mu - m.alpha1) * (m.alpha0 - mu)
    return float(out) if out.ndim == 0 else out


def phase_cycled_baseline(m: ReadoutModel, mu_A, mu_B, mu_C, mu_D) -> float:
    """Variance bias left by unequal cycle means, to subtract from the raw covariance.

    Each ``mu`` is the mean two-NV signal of a cycle, split equally between the
    NVs.
    """
    s = [float(baseline_variance_from_mean(m, mu / 2)) for mu in (mu_A, mu_B, mu_C, mu_D)]
    return (s[0] - s[1] - s[2] + s[3]) / 4


# ---------------------------------------------------------------- sampling


def _counts(mean, var_ratio, rng: np.random.Generator) -> np.ndarray:
    """Integer counts with the given means and variance/mean ratio (scalar)."""
    if var_ratio == 1.0:
        return rng.poisson(mean)
    if var_ratio < 1.0:
        raise ValueError("sub-Poisson photon variance cannot be sampled")
    # negative binomial with mean mu and variance r * mu
    n = np.asarray(mean) / (var_ratio - 1.0)
    p = 1.0 / var_ratio
    out = np.zeros(np.shape(mean), dtype=np.int64)
    pos = n > 0
    out[pos] = rng.negative_binomial(n[pos], p)
    return out


def sample_single(m: ReadoutModel, spin0: np.ndarray, rng: np.random.Generator,
                  brightness=1.0) -> np.ndarray:
    """Photon counts of one NV given boolean ``spin0`` per shot (True for m_s=0)."""
    spin0 = np.asarray(spin0, dtype=bool)
    n = spin0.shape[0]
    if m.p_nv_minus < 1.0:
        charged = rng.random(n) < m.p_nv_minus
    else:
        charged = np.ones(n, dtype=bool)
    bright = charged & spin0
    mean = np.where(bright, m.alpha0, m.alpha1) * brightness
    out = np.empty(n, dtype=np.int64)
    r0 = m.sigma0_sq / m.alpha0 if m.alpha0 > 0 else 1.0
    r1 = m.sigma1_sq / m.alpha1 if m.alpha1 > 0 else 1.0
    if r0 == r1:
        return _counts(mean, r0, rng)
    out[bright] = _counts(mean[bright], r0, rng)
    out[~bright] = _counts(mean[~bright], r1, rng)
    return out


def sample_outcomes(p_state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Basis index per shot from per-shot probabilities of shape ``(n, 4)`` (or ``(4,)``)."""
    p = np.asarray(p_state, dtype=float)
    if p.ndim == 1:
        p = np.broadcast_to(p, (1, 4))
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > 1e-9):
        raise ValueError("outcome probabilities must sum to 1")
    c = np.cumsum(p, axis=-1)
    u = rng.random(c.shape[0])[:, None]
    return np.minimum((u > c).sum(axis=-1), 3)


def sample_photons(m: ReadoutModel, p_state: np.ndarray, rng: np.random.Generator,
                   n: int | None = None, brightness=1.0) -> np.ndarray:
    """Total photons from both NVs for each shot.

    ``p_state`` holds basis probabilities, either one row shared by ``n`` shots
    or one row per shot.
    """
    p = np.asarray(p_state, dtype=float)
    if p.ndim == 1:
        if n is None:
            n = 1
        p = np.broadcast_to(p, (n, 4))
    idx = sample_outcomes(p, rng)
    spin0_a = _SPIN_A[idx] == 0
    spin0_b = _SPIN_B[idx] == 0
    return sample_single(m, spin0_a, rng, brightness) + sample_single(m, spin0_b, rng, brightness)


def expected_total(m: ReadoutModel, p_state) -> np.ndarray:
    """Mean total photons for basis probabilities ``p_state``."""
    p = np.asarray(p_state, dtype=float)
    n1 = p @ (_SPIN_A + _SPIN_B)  # number of NVs in m_s = 1
    q = m.p_nv_minus
    # a charge-failed NV emits alpha1 regardless of spin
    bright = q * m.alpha0 + (1 - q) * m.alpha1
    return (2 - n1) * bright + n1 * m.alpha1


@dataclass(frozen=True)
class ShotRecord:
    shot: int
    cycle_tag: str
    photons: int
    seed_index: int

    def __post_init__(self):
        if self.photons < 0:
            raise ValueError("photon count must be non-negative")
