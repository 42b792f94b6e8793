import math

import numpy as np
import pytest
from sklearn.base import clone

from covmag import readout as ro
from covmag.estimators import (BellCorrelation, PhaseCycleCovariance, PoorFitError,
                               ResolvablePairCovariance, TPPIFit, run_ids, scan_frequency,
                               unit_sums)
from covmag.rng import substream


def test_run_ids():
    assert run_ids(np.array(list("AABBBA"))).tolist() == [0, 0, 1, 1, 1, 2]


def test_unit_sums_merge_preserves_totals():
    x = np.arange(100.0)
    u = unit_sums(x, np.arange(100) // 2, 7)
    assert u.shape == (7, 3)
    assert u[:, 0].sum() == 100
    assert u[:, 1].sum() == pytest.approx(x.sum())
    assert u[:, 2].sum() == pytest.approx((x**2).sum())


def _interleave(columns, block):
    """Stack equal-length per-tag arrays as alternating blocks, like the runners do."""
    names = list(columns)
    n = len(columns[names[0]])
    xs, tags = [], []
    for a in range(0, n, block):
        for t in names:
            chunk = columns[t][a:a + block]
            xs.append(chunk)
            tags += [t] * len(chunk)
    return np.concatenate(xs), np.array(tags)


def _cycle_data(cov_true, n=40_000, seed=0, block=100):
    """Gaussian two-NV sums with known covariance and opposite-sign cycles."""
    rng = substream(seed, "est")
    cols = {}
    for t, s in zip("ABCD", (1, -1, -1, 1)):
        c = np.array([[1.0, s * cov_true], [s * cov_true, 1.0]])
        cols[t] = rng.multivariate_normal([0, 0], c, size=n).sum(axis=1)
    return _interleave(cols, block)


def test_phase_cycle_covariance_recovers_known_value():
    x, tags = _cycle_data(0.3)
    est = PhaseCycleCovariance(n_resamples=500, random_state=1).fit(x, tags)
    # var(A) - var(B) = 4 cov, and the cycle sum counts it twice
    assert est.cov_ == pytest.approx(0.3, abs=4 * est.stderr_)
    # analytic SE of a variance difference: sqrt(sum 2 var^2 / n) / 8
    se = math.sqrt(sum(2 * v**2 / est.n_[t] for t, v in est.var_.items())) / 8
    assert est.stderr_ == pytest.approx(se, rel=0.15)
    lo, hi = est.interval_
    assert lo < est.cov_ < hi


def test_phase_cycle_requires_all_cycles():
    with pytest.raises(ValueError):
        PhaseCycleCovariance().fit(np.ones(20), np.array(["A"] * 10 + ["B"] * 10))


def test_bootstrap_is_deterministic():
    x, tags = _cycle_data(0.1, n=5000)
    a = PhaseCycleCovariance(n_resamples=200, random_state=3).fit(x, tags)
    b = clone(a).fit(x, tags)
    assert a.stderr_ == b.stderr_


def test_bell_correlation_sign_and_scale():
    m = ro.ReadoutModel(1.0, 0.5)
    rng = substream(0, "bell")
    n = 100_000
    # Phi has fewer bright NVs than Psi when correlated
    x, tags = _interleave({"Phi": rng.poisson(1.2, n), "Psi": rng.poisson(1.6, n)}, 1)
    est = BellCorrelation(readout=m, n_resamples=200).fit(x, tags)
    assert est.r_e_ == pytest.approx(0.2, abs=0.02)
    assert est.r_ == pytest.approx(0.4, abs=0.04)
    assert est.stderr_ == pytest.approx(est.stderr_analytic_ / 0.5, rel=0.2)


def test_resolvable_pair():
    rng = substream(0, "pair")
    X = rng.multivariate_normal([0, 0], [[1, 0.25], [0.25, 1]], size=200_000)
    est = ResolvablePairCovariance().fit(X)
    assert est.cov_ == pytest.approx(0.25, abs=4 * est.stderr_)


def test_tppi_fit_recovers_parameters():
    x = np.linspace(0, 4 * math.pi, 64)
    y = 0.3 * np.sin(2 * x + 0.4) + 0.05
    f = TPPIFit().fit(x, y)
    assert f.amplitude_ == pytest.approx(0.3)
    assert f.phase_ == pytest.approx(-0.4)
    assert f.offset_ == pytest.approx(0.05)
    assert np.allclose(f.predict(x), y)


def test_tppi_poor_fit_raises():
    x = np.linspace(0, 4 * math.pi, 64)
    y = np.sin(3 * x)
    with pytest.raises(PoorFitError):
        TPPIFit(max_reduced_chi2=5).fit(x, y, sigma=np.full(64, 0.01))


def test_scan_frequency():
    x = np.linspace(0, 10, 200)
    f, rss = scan_frequency(x, np.cos(2.0 * x), np.linspace(1, 3, 201))
    assert f == pytest.approx(2.0, rel=1e-4)
