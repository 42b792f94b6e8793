import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
from covmag import noisefield as nf
from covmag.rng import substream


def test_xy8_timing():
    s = nf.SequenceTiming("xy8", 500e-9, 8)
    assert s.duration == pytest.approx(4e-6)
    assert np.allclose(s.pulse_times(), (np.arange(8) + 0.5) * 500e-9)
    h = nf.SequenceTiming("hahn", 1e-6)
    assert h.duration == pytest.approx(2e-6)


@pytest.mark.parametrize("fam,n", [("xy8", 12), ("hahn", 2), ("xy4", 6)])
def test_bad_pulse_counts(fam, n):
    with pytest.raises(ValueError):
        nf.SequenceTiming(fam, 1e-6, n)


def test_response_matches_numeric_integral():
    s = nf.SequenceTiming("xy8", 300e-9, 16, start=1e-6)
    t = np.linspace(s.start, s.end, 400_001)
    for w in (1e5, math.pi / s.tau, 3.3e7):
        ref = np.trapezoid(s.toggling(t) * np.exp(1j * w * t), t)
        assert abs(s.response(w) - ref) < 1e-4 * s.duration


def test_filter_peak_at_pi_over_tau():
    s = nf.SequenceTiming("xy8", 500e-9, 32)
    w = np.linspace(0.5, 1.5, 2001) * math.pi / s.tau
    F = nf.filter_function(s)(w)
    assert w[np.argmax(F)] == pytest.approx(math.pi / s.tau, rel=2e-3)


def test_chi_flat_spectrum_matches_variance_identity():
    # for white noise, <phi^2> = S * duration, so chi = S t / 2
    s = nf.SequenceTiming("xy8", 500e-9, 8)
    S = nf.SpectralDensity.flat(1e5)
    assert nf.chi_from_spectrum(S, s) == pytest.approx(1e5 * s.duration / 2, rel=1e-4)


def test_chi_narrowband_band_around_fundamental():
    s = nf.SequenceTiming("xy8", 500e-9, 64)
    w0 = math.pi / s.tau
    S = nf.SpectralDensity.flat(2e4, band=(0.9 * w0, 1.1 * w0))
    exact = nf.chi_from_spectrum(S, s)
    assert exact == pytest.approx(4 / math.pi * nf.chi_narrowband(S, s), rel=0.05)


def test_correlated_sin_moment_closed_form():
    chi = np.array([0.0, 0.01, 0.1, 0.5, 3.0])
    assert np.allclose(nf.correlated_sin_moment(chi), np.exp(-2 * chi) * np.sinh(2 * chi))
    assert nf.correlated_sin_moment(50.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        nf.correlated_sin_moment(-0.1)


def test_correlated_phases_are_gaussian_with_variance_two_chi():
    rng = substream(1, "t")
    pa, pb = nf.sample_phases(nf.CorrelatedNoiseSpec(0.3, 1.0, -1.0), nf.SequenceTiming("hahn", 1e-6), 200_000, rng)
    assert np.allclose(pa, -pb)
    assert pa.var() == pytest.approx(0.6, rel=0.02)


def test_tone_phases_match_response():
    s = nf.SequenceTiming("xy8", 500e-9, 8)
    tone = nf.AcToneSpec(1e6, 1e6, 5e5)
    pa, pb = nf.sample_phases(tone, s, 50_000, substream(2, "t"))
    G = abs(s.response(tone.omega0))
    assert np.max(np.abs(pa)) == pytest.approx(1e6 * G, rel=1e-3)
    assert np.allclose(pb, pa / 2)
    assert np.mean(np.sin(pa) * np.sin(pb)) == pytest.approx(O.tone_sin_moment(1e6, 5e5, G), abs=0.01)


def test_phase_noise_keeps_amplitude_bounded():
    s = nf.SequenceTiming("xy8", 500e-9, 8)
    tone = nf.AcToneSpec(1e6, 1e6, 1e6, phase_noise_bw=1e6)
    pa, _ = nf.sample_phases(tone, s, 5000, substream(3, "t"))
    assert np.max(np.abs(pa)) <= 1e6 * s.duration + 1e-9
    assert np.std(pa) > 0


def test_window_phases_share_one_realisation():
    s1 = nf.SequenceTiming("xy8", 500e-9, 8)
    s2 = s1.shifted(s1.duration)
    tone = nf.AcToneSpec(1e6, 1.0e6, 1.0e6)
    pa, pb = nf.sample_window_phases(tone, [s1, s2], 20_000, substream(4, "t"))
    # window length is 4 periods, so both windows see the same phase
    assert np.allclose(pa[:, 0], pa[:, 1], atol=1e-9)


def test_decoherence_model():
    d = nf.DecoherenceModel(T2_a=6e-6, T2_b=12e-6)
    assert d.chi_ent(6e-6) == pytest.approx((1.0, 0.5))
    assert d.gate_coherence(6e-6) == pytest.approx((math.exp(-1) + math.exp(-0.5)) / 2)
    assert nf.DecoherenceModel().sense_coherence(1.0) == 1.0
    with pytest.raises(ValueError):
        nf.DecoherenceModel(T2_a=-1)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-8, 1e-5), st.floats(1e-7, 1e-3))
def test_chi_monotone_in_time(t, T2):
    d = nf.DecoherenceModel(T2_a=T2, T2_b=T2)
    assert d.chi_sense(2 * t)[0] > d.chi_sense(t)[0]


def test_spectrum_table_file(tmp_path):
    p = tmp_path / "s.txt"
    p.write_text("# omega S\n0 1\n10 1\n20 0\n")
    S = nf.SpectralDensity.from_table_file(p)
    assert S(5.0) == pytest.approx(1.0)
    assert S(15.0) == pytest.approx(0.5)
    assert S(30.0) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 2 * math.pi))
def test_chebyshev_interpolation_of_band_limited_signal(frac, phase):
    a, b, wmax = 1e-6, 4.2e-6, 2 * math.pi * 3e6
    t = np.linspace(a, b, 500)
    c, M = nf._chebyshev_interpolator(a, b, wmax, t)
    f = lambda x: np.cos(frac * wmax * x + phase)  # noqa: E731
    assert np.max(np.abs(M @ f(c) - f(t))) < 1e-12
