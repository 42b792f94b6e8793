"""Estimators that turn photon records into correlation values.

The classes follow the scikit-learn estimator conventions (constructor stores
hyper-parameters verbatim, ``fit`` returns ``self`` and sets trailing
underscore attributes) so they compose with ``get_params``/``clone``.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import readout as ro


# ------------------------------------------------------------ block stats


def run_ids(tags: np.ndarray) -> np.ndarray:
    """Index of the contiguous run of equal tags that each shot belongs to."""
    tags = np.asarray(tags)
    if tags.size == 0:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate([[0], np.cumsum(tags[1:] != tags[:-1])])


def unit_sums(x: np.ndarray, units: np.ndarray, max_units: int) -> np.ndarray:
    """Per-unit ``(count, sum, sum of squares)``; consecutive units merged to at most ``max_units``."""
    x = np.asarray(x, dtype=float)
    _, inv = np.unique(units, return_inverse=True)
    k = inv.max() + 1 if inv.size else 0
    if k > max_units:
        inv = inv * max_units // k
        k = max_units
    out = np.zeros((k, 3))
    np.add.at(out[:, 0], inv, 1.0)
    np.add.at(out[:, 1], inv, x)
    np.add.at(out[:, 2], inv, x * x)
    return out


def _mean_var(tot):
    n, s1, s2 = tot[..., 0], tot[..., 1], tot[..., 2]
    mean = s1 / n
    var = (s2 - n * mean**2) / (n - 1)
    return mean, var


def bootstrap_totals(units: dict, n_resamples: int, rng: np.random.Generator,
                     batch: int = 500) -> dict:
    """Resampled per-tag totals, each of shape ``(n_resamples, 3)``.

    Units of each tag are redrawn with replacement (multinomial counts).
    """
    out = {t: np.empty((n_resamples, 3)) for t in units}
    for t in sorted(units):
        u = units[t]
        k = u.shape[0]
        for a in range(0, n_resamples, batch):
            b = min(a + batch, n_resamples)
            w = rng.multinomial(k, np.full(k, 1.0 / k), size=b - a)
            out[t][a:b] = w @ u
    return out


def percentile_interval(samples: np.ndarray, level: float = 0.95) -> tuple[float, float]:
    q = (1 - level) / 2
    lo, hi = np.percentile(samples, [100 * q, 100 * (1 - q)])
    return float(lo), float(hi)


class _BootstrapMixin:
    def _bootstrap(self, units, stat):
        rng = np.random.Generator(np.random.Philox(key=[int(self.random_state) & (2**64 - 1), 0xB007]))
        tot = bootstrap_totals(units, self.n_resamples, rng)
        samples = stat(tot)
        self.bootstrap_samples_ = samples
        self.stderr_ = float(np.std(samples, ddof=1))
        self.interval_ = percentile_interval(samples, self.confidence)


# ------------------------------------------------------------ phase cycle


class PhaseCycleCovariance(_BootstrapMixin, BaseEstimator):
    """Covariance of two unresolved NVs from the variances of four phase cycles.

    ``fit(photons, tags)`` takes the summed photon count of each shot and its
    cycle label (``"A"`` .. ``"D"``). The estimate is
    ``(var_A - var_B - var_C + var_D) / 8`` minus the baseline implied by the
    cycle means.
    """

    def __init__(self, readout: ro.ReadoutModel | None = None, n_resamples: int = 10_000,
                 max_units: int = 2000, confidence: float = 0.95, random_state: int = 0):
        self.readout = readout
        self.n_resamples = n_resamples
        self.max_units = max_units
        self.confidence = confidence
        self.random_state = random_state

    def _stat(self, tot):
        mv = {t: _mean_var(tot[t]) for t in "ABCD"}
        cov = (mv["A"][1] - mv["B"][1] - mv["C"][1] + mv["D"][1]) / 8
        if self.readout is None:
            base = 0.0
        else:
            base = np.vectorize(lambda a, b, c, d: ro.phase_cycled_baseline(self.readout, a, b, c, d))(
                mv["A"][0], mv["B"][0], mv["C"][0], mv["D"][0])
        return cov, base, mv

    def fit(self, photons, tags):
        x = check_array(np.asarray(photons, dtype=float).reshape(-1, 1), ensure_min_samples=8).ravel()
        tags = np.asarray(tags).astype(str)
        if set(np.unique(tags)) != set("ABCD"):
            raise ValueError("tags must contain all four cycles A, B, C, D")
        runs = run_ids(tags)
        units = {t: unit_sums(x[tags == t], runs[tags == t], self.max_units) for t in "ABCD"}
        totals = {t: units[t].sum(axis=0) for t in "ABCD"}
        cov, base, mv = self._stat(totals)
        self.var_ = {t: float(mv[t][1]) for t in "ABCD"}
        self.mean_ = {t: float(mv[t][0]) for t in "ABCD"}
        self.n_ = {t: int(totals[t][0]) for t in "ABCD"}
        self.cov_raw_ = float(cov)
        self.baseline_ = float(base)
        self.cov_ = float(cov - base)
        res = self.mean_["A"] - self.mean_["B"] - self.mean_["C"] + self.mean_["D"]
        self.mean_residual_ = float(res)
        self.mean_residual_se_ = float(math.sqrt(sum(self.var_[t] / self.n_[t] for t in "ABCD")))
        if self.n_resamples:
            def stat(tot):
                c, b, _ = self._stat(tot)
                return np.asarray(c - b, dtype=float)
            self._bootstrap(units, stat)
        return self


# ------------------------------------------------------------ Bell pair


class BellCorrelation(_BootstrapMixin, BaseEstimator):
    """Correlation from alternating Phi/Psi shots.

    Tags are ``"Phi"``/``"Psi"``, or ``"Phi+"``, ``"Phi-"``, ``"Psi+"``,
    ``"Psi-"`` in contrast mode (``+`` signal, ``-`` reference). ``r_e_`` is
    ``(S_Psi - S_Phi) / 2`` in photons (or contrast units) and ``r_`` is the
    same value divided by the readout contrast, an estimate of the ideal
    correlation.
    """

    def __init__(self, readout: ro.ReadoutModel | None = None, contrast: bool = False,
                 n_resamples: int = 10_000, max_units: int = 2000, confidence: float = 0.95,
                 random_state: int = 0):
        self.readout = readout
        self.contrast = contrast
        self.n_resamples = n_resamples
        self.max_units = max_units
        self.confidence = confidence
        self.random_state = random_state

    def _tags(self):
        return ("Phi+", "Phi-", "Psi+", "Psi-") if self.contrast else ("Phi", "Psi")

    def _scale(self):
        if self.readout is None:
            return 1.0
        m = self.readout
        q = m.p_nv_minus
        d = q * (m.alpha0 - m.alpha1)
        if self.contrast:
            return d / (q * m.alpha0 + (2 - q) * m.alpha1)
        return d

    def _stat(self, tot):
        mean = {t: tot[t][..., 1] / tot[t][..., 0] for t in tot}
        if self.contrast:
            c = {k: (mean[k + "+"] - mean[k + "-"]) / (mean[k + "+"] + mean[k + "-"]) for k in ("Phi", "Psi")}
            return (c["Psi"] - c["Phi"]) / 2
        return (mean["Psi"] - mean["Phi"]) / 2

    def fit(self, photons, tags):
        x = check_array(np.asarray(photons, dtype=float).reshape(-1, 1), ensure_min_samples=2).ravel()
        tags = np.asarray(tags).astype(str)
        need = self._tags()
        missing = [t for t in need if not np.any(tags == t)]
        if missing:
            raise ValueError(f"missing shots for tags {missing}")
        runs = run_ids(tags)
        units = {t: unit_sums(x[tags == t], runs[tags == t], self.max_units) for t in need}
        totals = {t: units[t].sum(axis=0) for t in need}
        self.signal_ = {t: float(totals[t][1] / totals[t][0]) for t in need}
        self.r_e_ = float(self._stat(totals))
        self.r_ = self.r_e_ / self._scale()
        var = {t: float(_mean_var(totals[t])[1]) for t in need}
        self.photon_std_ = {t: math.sqrt(var[t]) for t in need}
        if not self.contrast:
            self.stderr_analytic_ = 0.5 * math.sqrt(sum(var[t] / totals[t][0] for t in need))
        if self.n_resamples:
            self._bootstrap(units, lambda tot: self._stat(tot) / self._scale())
        return self


# ------------------------------------------------------------ resolvable pair


class ResolvablePairCovariance(BaseEstimator):
    """Normalised photon covariance of two separately detected NVs.

    ``fit(X)`` takes an ``(n, 2)`` array of per-NV counts. ``r_`` is the sample
    covariance divided by ``(alpha0 - alpha1)^2 / 4``; ``stderr_`` is the
    standard error of the mean of the centred products.
    """

    def __init__(self, readout: ro.ReadoutModel | None = None):
        self.readout = readout

    def fit(self, X, y=None):
        X = check_array(X, dtype=float, ensure_min_samples=2)
        if X.shape[1] != 2:
            raise ValueError("expected two columns of photon counts")
        d = X - X.mean(axis=0)
        prod = d[:, 0] * d[:, 1]
        scale = 1.0 if self.readout is None else (self.readout.alpha0 - self.readout.alpha1) ** 2 / 4
        n = X.shape[0]
        self.cov_ = float(prod.sum() / (n - 1))
        self.r_ = self.cov_ / scale
        self.stderr_ = float(prod.std(ddof=1) / math.sqrt(n) / scale)
        return self


# ------------------------------------------------------------ sinusoid fit


class PoorFitError(RuntimeError):
    """The sinusoid model does not describe the data."""


class TPPIFit(BaseEstimator):
    """Least-squares fit of ``y = A sin(k x - phase) + c`` at a fixed multiple ``k``.

    ``envelope`` (optional, passed to ``fit``) multiplies the oscillating
    regressors, for sweeps whose amplitude decays in a known way. With
    ``max_reduced_chi2`` set and per-point errors supplied, a fit whose reduced
    chi-square exceeds the limit raises :class:`PoorFitError`.
    """

    def __init__(self, harmonic: float = 2.0, max_reduced_chi2: float | None = 25.0):
        self.harmonic = harmonic
        self.max_reduced_chi2 = max_reduced_chi2

    def _design(self, x, envelope, k):
        env = np.ones_like(x) if envelope is None else np.asarray(envelope, dtype=float)
        return np.column_stack([env * np.sin(k * x), env * np.cos(k * x), np.ones_like(x)])

    def fit(self, X, y, sigma=None, envelope=None):
        x = check_array(np.asarray(X, dtype=float).reshape(-1, 1), ensure_min_samples=4).ravel()
        y = np.asarray(y, dtype=float)
        w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
        D = self._design(x, envelope, self.harmonic)
        coef, *_ = np.linalg.lstsq(D * w[:, None], y * w, rcond=None)
        s, c, off = coef
        # A sin(kx - p) = A cos p sin kx - A sin p cos kx
        self.amplitude_ = float(math.hypot(s, c))
        self.phase_ = float(math.atan2(-c, s))
        self.offset_ = float(off)
        resid = y - D @ coef
        self.residual_rms_ = float(np.sqrt(np.mean(resid**2)))
        dof = max(len(y) - 3, 1)
        self.reduced_chi2_ = float(np.sum((resid * w) ** 2) / dof) if sigma is not None else float("nan")
        if sigma is not None and self.max_reduced_chi2 is not None and self.reduced_chi2_ > self.max_reduced_chi2:
            raise PoorFitError(f"reduced chi-square {self.reduced_chi2_:.3g} exceeds {self.max_reduced_chi2}")
        return self

    def predict(self, X, envelope=None):
        check_is_fitted(self, "amplitude_")
        x = np.asarray(X, dtype=float)
        env = 1.0 if envelope is None else np.asarray(envelope)
        return env * self.amplitude_ * np.sin(self.harmonic * x - self.phase_) + self.offset_


def scan_frequency(x, y, grid) -> tuple[float, np.ndarray]:
    """Frequency in ``grid`` that best fits ``y ~ a sin(f x) + b cos(f x) + c``.

    Returns the refined best frequency and the residual sum of squares on the grid.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    grid = np.asarray(grid, dtype=float)

    def rss(f):
        D = np.column_stack([np.sin(f * x), np.cos(f * x), np.ones_like(x)])
        coef, *_ = np.linalg.lstsq(D, y, rcond=None)
        return float(np.sum((y - D @ coef) ** 2))

    r = np.array([rss(f) for f in grid])
    i = int(np.argmin(r))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    from scipy.optimize import minimize_scalar

    best = minimize_scalar(rss, bounds=(lo, hi), method="bounded",
                           options={"xatol": 1e-10 * max(abs(grid[i]), 1.0)})
    return float(best.x), r
