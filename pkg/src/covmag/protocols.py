"""Monte Carlo simulators of the correlation-sensing experiments.

Every runner samples the test field shot by shot, converts phases to spin
populations (applying decoherence as an attenuation of the coherent part), and
draws photon counts. Shots are generated in fixed-size chunks, each with its
own counter-based random stream, so a run is a deterministic function of its
arguments and ``seed`` regardless of ``threads``.

Normalised correlations are reported with the sign convention that a field
seen identically by both NVs gives a positive value.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import carbon13 as c13
from . import gates
from . import noisefield as nf
from . import readout as ro
from .engine import DEFAULT_CHUNK, run_chunked
from .estimators import (BellCorrelation, PhaseCycleCovariance, ResolvablePairCovariance,
                         TPPIFit)
from .hilbert import DensityMatrix, PureState, fidelity
from .rng import substream

N_UP = np.array([2, 1, 1, 0])  # NVs in m_s = 1 for each basis entry
_BLOCK = 100


class SystematicDriftWarning(UserWarning):
    """Cycle means differ by more than expected from shot noise."""


# ------------------------------------------------------------ results


@dataclass
class ShotTable:
    """Per-shot photon record of a run."""

    photons: np.ndarray
    tag: np.ndarray
    labels: tuple
    seed_index: np.ndarray
    point: np.ndarray | None = None

    def tags(self) -> np.ndarray:
        return np.asarray(self.labels)[self.tag]

    @staticmethod
    def concat(parts: Sequence["ShotTable"]) -> "ShotTable":
        pt = None if parts[0].point is None else np.concatenate([p.point for p in parts])
        return ShotTable(np.concatenate([p.photons for p in parts]),
                         np.concatenate([p.tag for p in parts]), parts[0].labels,
                         np.concatenate([p.seed_index for p in parts]), pt)


@dataclass
class PhaseCycleResult:
    var: dict
    mean: dict
    n_shots: dict
    cov_raw: float
    baseline: float
    cov: float
    stderr: float
    interval: tuple
    mean_residual: float
    mean_residual_se: float
    oracle_cov: float
    shots: ShotTable = field(repr=False)

    def summary(self) -> dict:
        return {"var": self.var, "mean": self.mean, "n_shots": self.n_shots,
                "cov_raw": self.cov_raw, "baseline": self.baseline, "cov": self.cov,
                "stderr": self.stderr, "interval": list(self.interval),
                "mean_residual": self.mean_residual, "mean_residual_se": self.mean_residual_se,
                "oracle_cov": self.oracle_cov}


@dataclass
class BellRunResult:
    signal: dict
    r_e: float
    r: float
    bootstrap_err: float
    interval: tuple
    oracle_r: float
    contrast: bool
    shots: ShotTable = field(repr=False)
    photon_std: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"signal": self.signal, "r_e": self.r_e, "r": self.r,
                "bootstrap_err": self.bootstrap_err, "interval": list(self.interval),
                "oracle_r": self.oracle_r, "contrast": self.contrast,
                "photon_std": self.photon_std}


@dataclass
class SweepResult:
    """One row per sweep point: ``x``, estimate, error, oracle."""

    x_name: str
    x: np.ndarray
    value: np.ndarray
    err: np.ndarray
    oracle: np.ndarray
    shots: ShotTable = field(repr=False)
    extra: dict = field(default_factory=dict)

    def rows(self):
        return [{self.x_name: float(a), "value": float(b), "err": float(c), "oracle": float(d)}
                for a, b, c, d in zip(self.x, self.value, self.err, self.oracle)]

    def summary(self) -> dict:
        return {"x_name": self.x_name, "points": self.rows(), **self.extra}


@dataclass
class FidelityReport:
    a0_fit: float
    phi_a_fit: float
    F_bound: float
    F_expected: float
    F_true: float
    sigma_ab: float
    delta_ab: float
    pi_ab: float
    p_nv_minus: float
    fit_frequency: float
    psi_amplitude: float
    sweep: SweepResult = field(repr=False)

    def summary(self) -> dict:
        return {"a0_fit": self.a0_fit, "phi_a_fit": self.phi_a_fit, "F_bound": self.F_bound,
                "F_expected": self.F_expected, "F_true": self.F_true, "sigma_ab": self.sigma_ab,
                "delta_ab": self.delta_ab, "pi_ab": self.pi_ab, "p_nv_minus": self.p_nv_minus,
                "fit_frequency": self.fit_frequency, "psi_amplitude": self.psi_amplitude}


# ------------------------------------------------------------ helpers


def _block_cycle(start: int, stop: int, n_tags: int, block: int) -> np.ndarray:
    return (np.arange(start, stop) // block) % n_tags


def _mix(amps_before: np.ndarray, L: np.ndarray, coherence) -> np.ndarray:
    """Populations after ``L`` with only a fraction ``coherence`` of the coherences surviving.

    ``amps_before`` has shape ``(n, 4)``. The incoherent part keeps the basis
    populations of ``amps_before`` and drops all coherences.
    """
    coh = np.abs(amps_before @ L.T) ** 2
    inc = (np.abs(amps_before) ** 2) @ (np.abs(L) ** 2).T
    D = np.asarray(coherence, dtype=float)
    if D.ndim:
        D = D[:, None]
    p = D * coh + (1 - D) * inc
    return p / p.sum(axis=1, keepdims=True)


def _phase_moment(signal, windows, n, seed, stream="oracle") -> float:
    """``<sin phi_a sin phi_b>`` for the given windows (a in the first, b in the last)."""
    if signal is None:
        return 0.0
    if isinstance(signal, nf.CorrelatedNoiseSpec):
        return signal.sign_a * signal.sign_b * nf.correlated_sin_moment(signal.chi_C)
    acc = 0.0
    done = 0
    for k, a, b in _chunks(n):
        pa, pb = nf.sample_window_phases(signal, windows, b - a, substream(seed, stream, k))
        acc += float(np.sum(np.sin(pa[:, 0]) * np.sin(pb[:, -1])))
        done += b - a
    return acc / done


def _chunks(n, size=DEFAULT_CHUNK):
    from .rng import chunk_bounds
    return chunk_bounds(n, size)


def phase_moment_oracle(signal, seq: nf.SequenceTiming, n: int = 1_000_000, seed: int = 12345) -> float:
    """Noise-free Monte Carlo value of ``<sin phi_a sin phi_b>`` for one window."""
    return _phase_moment(signal, [seq], n, seed)


# ------------------------------------------------------------ phase cycling


_CYCLES = ("A", "B", "C", "D")
_SIGNS = {"A": (1, 1), "B": (1, -1), "C": (-1, 1), "D": (-1, -1)}


def _drift_factor(block_index: np.ndarray, amplitude: float, period_blocks: float) -> np.ndarray:
    if amplitude == 0:
        return np.ones(block_index.shape)
    return 1.0 + amplitude * np.sin(2 * math.pi * block_index / period_blocks)


def _phase_cycle_core(signal, sense, m, deco, n_shots, seed, threads, block_size, drift,
                      flip_probs, n_resamples, oracle_shots, attenuation):
    C_a, C_b = (math.exp(-c) for c in deco.chi_sense(sense.duration))
    total = 4 * n_shots
    chunk = max(block_size * 4, (DEFAULT_CHUNK // (4 * block_size)) * 4 * block_size)

    def work(k, a, b, rng):
        n = b - a
        cyc = _block_cycle(a, b, 4, block_size)
        pa, pb = nf.sample_phases(signal, sense, n, rng)
        s_a = np.array([_SIGNS[c][0] for c in _CYCLES])[cyc]
        s_b = np.array([_SIGNS[c][1] for c in _CYCLES])[cyc].astype(float)
        if flip_probs is not None:
            # cycles B and C flip NV b through the 13C, A and D leak
            pf = np.array([flip_probs[1], flip_probs[0], flip_probs[0], flip_probs[1]])[cyc]
            flipped = rng.random(n) < pf
            # B and C reach their sign only through a flip; A and D keep it unless leaked
            base = s_a  # global cycle sign, carried by b unless flipped
            s_b = np.where(flipped, -base, base).astype(float)
        p0a = 0.5 * (1 + s_a * C_a * np.sin(pa))
        p0b = 0.5 * (1 + s_b * C_b * np.sin(pb))
        bright = _drift_factor((np.arange(a, b) // block_size), *drift)
        ua, ub = rng.random(n), rng.random(n)
        photons = ro.sample_single(m, ua < p0a, rng, bright) + ro.sample_single(m, ub < p0b, rng, bright)
        return ShotTable(photons, cyc.astype(np.int8), _CYCLES, np.full(n, k, dtype=np.int32))

    shots = ShotTable.concat(run_chunked(work, total, seed, "phase-cycle", threads, chunk))
    est = PhaseCycleCovariance(readout=m, n_resamples=n_resamples, random_state=seed).fit(
        shots.photons, shots.tags())
    if abs(est.mean_residual_) > 5 * est.mean_residual_se_:
        warnings.warn(f"cycle means differ by {est.mean_residual_:.3g} "
                      f"({est.mean_residual_ / est.mean_residual_se_:.1f} sigma)", SystematicDriftWarning)
    r = C_a * C_b * _phase_moment(signal, [sense], oracle_shots, seed)
    d = m.p_nv_minus * (m.alpha0 - m.alpha1)
    oracle = d**2 / 4 * r * attenuation
    return PhaseCycleResult(est.var_, est.mean_, est.n_, est.cov_raw_, est.baseline_, est.cov_,
                            getattr(est, "stderr_", float("nan")),
                            getattr(est, "interval_", (float("nan"), float("nan"))),
                            est.mean_residual_, est.mean_residual_se_, oracle, shots)


def run_phase_cycle(signal, sense: nf.SequenceTiming, m: ro.ReadoutModel,
                    deco: nf.DecoherenceModel | None = None, n_shots: int = 100_000,
                    seed: int = 0, threads: int = 1, block_size: int = _BLOCK,
                    drift: tuple = (0.0, 40.0), n_resamples: int = 10_000,
                    oracle_shots: int = 200_000) -> PhaseCycleResult:
    """Four-cycle variance measurement on two optically unresolved NVs.

    ``n_shots`` is the number of shots per cycle. Cycles rotate every
    ``block_size`` shots in the order A, B, C, D. ``drift`` is
    ``(amplitude, period in blocks)`` of a common sinusoidal brightness drift.
    """
    deco = deco or nf.DecoherenceModel()
    return _phase_cycle_core(signal, sense, m, deco, n_shots, seed, threads, block_size, drift,
                             None, n_resamples, oracle_shots, 1.0)


def run_c13_phase_cycle(signal, sense: nf.SequenceTiming, m: ro.ReadoutModel,
                        deco: nf.DecoherenceModel | None, h: c13.HyperfineCoupling,
                        tau0: float, tau1: float, n_flip: int, n_shots: int = 100_000,
                        seed: int = 0, threads: int = 1, block_size: int = _BLOCK,
                        drift: tuple = (0.0, 40.0), n_resamples: int = 10_000,
                        oracle_shots: int = 200_000, force_flip: bool = False,
                        flip_probability: float | None = None) -> PhaseCycleResult:
    """Phase cycling where NV b's orientation is alternated by a 13C-selective flip.

    Cycles B and C apply ``n_flip`` pulses at spacing ``tau1`` (flip), cycles A
    and D apply them at ``tau0`` (no flip). The per-shot flip probabilities come
    from the closed-form signal; ``force_flip`` makes them exactly 1 and 0 and
    ``flip_probability`` overrides the flip-cycle value.
    """
    deco = deco or nf.DecoherenceModel()
    if force_flip:
        pf, pl = 1.0, 0.0
    else:
        pf = float(c13.flip_probability(h, tau1, n_flip))
        pl = float(c13.flip_probability(h, tau0, n_flip))
    if flip_probability is not None:
        pf = float(flip_probability)
    res = _phase_cycle_core(signal, sense, m, deco, n_shots, seed, threads, block_size, drift,
                            (pf, pl), n_resamples, oracle_shots, pf - pl)
    return res


# ------------------------------------------------------------ Bell pair


def bell_amplitudes(kind: str, phi_a, phi_b, spec: gates.CouplingSpec) -> np.ndarray:
    """State after entangling and field accumulation, shape ``(n, 4)``."""
    v = gates.entangle(kind, spec).entries[:, 3]
    return nf_diag(phi_a, phi_b) * v


def nf_diag(phi_a, phi_b):
    return np.atleast_2d(gates.external_phase_diagonal(phi_a, phi_b))


def bell_probabilities(kind: str, phi_a, phi_b, spec: gates.CouplingSpec, coherence=1.0,
                       phase: float = 0.0, sign: int = +1) -> np.ndarray:
    """Readout populations for Bell sensing with deterministic phases."""
    L = gates.readout_disentangle(kind, spec, phase, sign).entries
    return _mix(bell_amplitudes(kind, phi_a, phi_b, spec), L, coherence)


def ideal_signal(p: np.ndarray) -> np.ndarray:
    """Expected number of NVs in ``m_s = 1``."""
    return p @ N_UP


def bell_coherence(deco: nf.DecoherenceModel, spec: gates.CouplingSpec, t_sense: float) -> float:
    return deco.gate_coherence(2 * spec.t_e) * deco.sense_coherence(t_sense)


def run_bell_covariance(signal, sense: nf.SequenceTiming, m: ro.ReadoutModel,
                        deco: nf.DecoherenceModel | None, spec: gates.CouplingSpec,
                        n_shots: int = 100_000, seed: int = 0, contrast: bool = False,
                        threads: int = 1, block_size: int = 1, n_resamples: int = 10_000,
                        oracle_shots: int = 200_000) -> BellRunResult:
    """Alternating Phi/Psi sensing with the entangled pair.

    ``n_shots`` is the total number of shots. Preparations alternate every
    ``block_size`` shots (Phi, Psi, or Phi+, Phi-, Psi+, Psi- in contrast mode,
    where ``-`` is the reference readout).
    """
    deco = deco or nf.DecoherenceModel()
    labels = ("Phi+", "Phi-", "Psi+", "Psi-") if contrast else ("Phi", "Psi")
    D = bell_coherence(deco, spec, sense.duration)
    Ls = {}
    for lab in labels:
        kind = lab[:3].lower()
        sgn = -1 if lab.endswith("-") else 1
        Ls[lab] = gates.readout_disentangle(kind, spec, 0.0, sgn).entries
    vs = {k: gates.entangle(k, spec).entries[:, 3] for k in ("phi", "psi")}

    def work(k, a, b, rng):
        n = b - a
        tag = _block_cycle(a, b, len(labels), block_size)
        pa, pb = nf.sample_phases(signal, sense, n, rng)
        diag = nf_diag(pa, pb)
        p = np.empty((n, 4))
        for i, lab in enumerate(labels):
            sel = tag == i
            if sel.any():
                p[sel] = _mix(diag[sel] * vs[lab[:3].lower()], Ls[lab], D)
        photons = ro.sample_photons(m, p, rng)
        return ShotTable(photons, tag.astype(np.int8), labels, np.full(n, k, dtype=np.int32))

    shots = ShotTable.concat(run_chunked(work, n_shots, seed, "bell", threads))
    est = BellCorrelation(readout=m, contrast=contrast, n_resamples=n_resamples,
                          random_state=seed).fit(shots.photons, shots.tags())
    oracle = D * _phase_moment(signal, [sense], oracle_shots, seed)
    return BellRunResult(est.signal_, est.r_e_, est.r_, getattr(est, "stderr_", float("nan")),
                         getattr(est, "interval_", (float("nan"),) * 2), oracle, contrast, shots,
                         est.photon_std_)


# ------------------------------------------------------------ resolvable pair


@dataclass
class PairRunResult:
    r: float
    stderr: float
    oracle_r: float
    counts: np.ndarray = field(repr=False)


def run_resolvable_pair(signal, sense: nf.SequenceTiming, m: ro.ReadoutModel,
                        deco: nf.DecoherenceModel | None = None, n_shots: int = 100_000,
                        seed: int = 0, threads: int = 1, oracle_shots: int = 200_000) -> PairRunResult:
    """Two separately detected NVs sensing the same field; photon covariance."""
    deco = deco or nf.DecoherenceModel()
    C_a, C_b = (math.exp(-c) for c in deco.chi_sense(sense.duration))

    def work(k, a, b, rng):
        n = b - a
        pa, pb = nf.sample_phases(signal, sense, n, rng)
        na = ro.sample_single(m, rng.random(n) < 0.5 * (1 + C_a * np.sin(pa)), rng)
        nb = ro.sample_single(m, rng.random(n) < 0.5 * (1 + C_b * np.sin(pb)), rng)
        return np.column_stack([na, nb])

    X = np.concatenate(run_chunked(work, n_shots, seed, "pair", threads))
    est = ResolvablePairCovariance(readout=m).fit(X)
    oracle = C_a * C_b * m.p_nv_minus**2 * _phase_moment(signal, [sense], oracle_shots, seed)
    return PairRunResult(est.r_, est.stderr_, oracle, X)


# ------------------------------------------------------------ TPPI fidelity


@dataclass(frozen=True)
class GenericState:
    """Two-NV density matrix in the parametrisation used for fidelity bounds.

    ``rho = M / 2`` with diagonal ``(D0, C0, B0, A0)`` on ``(|11>, |10>, |01>, |00>)``
    and coherences ``x0 exp(-i coh_phase_x)`` above the diagonal: ``a`` couples
    |11> and |00>, ``d`` couples |10> and |01>.
    """

    A0: float = 1.0
    B0: float = 0.0
    C0: float = 0.0
    D0: float = 1.0
    a0: float = 1.0
    b0: float = 0.0
    c0: float = 0.0
    d0: float = 0.0
    e0: float = 0.0
    f0: float = 0.0
    coh_phase_a: float = -math.pi / 2
    coh_phase_b: float = 0.0
    coh_phase_c: float = 0.0
    coh_phase_d: float = 0.0
    coh_phase_e: float = 0.0
    coh_phase_f: float = 0.0

    def matrix(self) -> np.ndarray:
        M = np.diag([self.D0, self.C0, self.B0, self.A0]).astype(complex)
        up = {(0, 1): ("f0", "coh_phase_f"), (0, 2): ("e0", "coh_phase_e"),
              (0, 3): ("a0", "coh_phase_a"), (1, 2): ("d0", "coh_phase_d"),
              (1, 3): ("b0", "coh_phase_b"), (2, 3): ("c0", "coh_phase_c")}
        for (i, j), (amp, ph) in up.items():
            M[i, j] = getattr(self, amp) * np.exp(-1j * getattr(self, ph))
            M[j, i] = np.conj(M[i, j])
        return M / 2

    def density(self) -> DensityMatrix:
        return DensityMatrix(self.matrix())


def bell_density(kind: str = "phi") -> DensityMatrix:
    """Target Bell state ``(|00> + i|11>)/sqrt 2`` (Phi) or ``(|01> + i|10>)/sqrt 2`` (Psi)."""
    v = np.zeros(4, dtype=complex)
    if kind == "phi":
        v[3], v[0] = 1, 1j
    else:
        v[2], v[1] = 1, 1j
    return PureState(v / math.sqrt(2)).density()


def _dephase(rho: np.ndarray, ca: float, cb: float) -> np.ndarray:
    za = np.array([1, 1, 0, 0])
    zb = np.array([1, 0, 1, 0])
    fa = np.where(za[:, None] != za[None, :], ca, 1.0)
    fb = np.where(zb[:, None] != zb[None, :], cb, 1.0)
    return rho * fa * fb


def _gate_with_dephasing(rho, first, last, phase, spec, ca, cb):
    """Hahn-echo gate block with each NV's dephasing applied at the echo pulse."""
    half = gates.ising_evolution(spec.J_zz, spec.t_e / 2).entries
    echo = gates.rotation_global(math.pi, phase).entries
    pre = half @ first
    rho = pre @ rho @ pre.conj().T
    rho = _dephase(rho, ca, cb)
    post = last @ half @ echo
    return post @ rho @ post.conj().T


def prepare_with_decoherence(kind: str, spec: gates.CouplingSpec, ca: float, cb: float) -> np.ndarray:
    """Bell preparation from |0,0> with per-NV gate coherences ``ca``, ``cb``."""
    rho = np.zeros((4, 4), dtype=complex)
    rho[3, 3] = 1
    last = gates.rotation_global(math.pi / 2) if kind == "phi" else gates.rotation_relative(math.pi / 2)
    return _gate_with_dephasing(rho, gates.rotation_global(math.pi / 2).entries, last.entries,
                                0.0, spec, ca, cb)


def tppi_populations(rho: np.ndarray, kind: str, spec: gates.CouplingSpec, phase: float,
                     sign: int, ca: float, cb: float) -> np.ndarray:
    """Populations after the phase-advanced readout block applied to ``rho``."""
    if kind == "phi":
        first = gates.rotation_global(math.pi / 2, phase).entries
        last = gates.rotation_global(-sign * math.pi / 2, phase).entries
    else:
        first = gates.rotation_relative(-math.pi / 2, phase).entries
        last = gates.rotation_global(sign * math.pi / 2, phase).entries
    out = _gate_with_dephasing(rho, first, last, phase, spec, ca, cb)
    p = np.clip(out.diagonal().real, 0, None)
    return p / p.sum()


def decoherence_combinations(deco: nf.DecoherenceModel, t_e: float) -> tuple[float, float, float]:
    """``(sigma_ab, delta_ab, pi_ab)`` from per-NV gate coherences over ``t_e``."""
    ca, cb = (math.exp(-c) for c in deco.chi_ent(t_e))
    return ca + cb, ca - cb, ca * cb


def expected_fidelity(deco: nf.DecoherenceModel, t_e: float, p_nv_minus: float = 1.0) -> float:
    s, _, p = decoherence_combinations(deco, t_e)
    return p_nv_minus**2 / 4 * (1 + s + p)


def fidelity_bound(a0: float, phi_a: float, p_nv_minus: float = 1.0) -> float:
    return p_nv_minus**2 * a0 / 2 * (1 - math.sin(phi_a))


def run_tppi_fidelity(m: ro.ReadoutModel, deco: nf.DecoherenceModel | None,
                      spec: gates.CouplingSpec, omega_tppi: float, taus, p_nv_minus: float = 1.0,
                      n_shots: int | None = 20_000, seed: int = 0, threads: int = 1,
                      rho_gen: GenericState | None = None, kind: str = "phi",
                      max_reduced_chi2: float | None = 25.0) -> FidelityReport:
    """TPPI sweep of the readout-block phase and Bell-fidelity estimates.

    For each ``tau`` the readout block's pulse phases advance by
    ``omega_tppi * tau``; signal and reference readouts give a contrast that
    is fitted at twice the advance. ``n_shots`` per point and readout sign;
    ``None`` uses the exact expectation instead of sampled photons.
    ``rho_gen`` replaces the simulated preparation by a given state.
    """
    deco = deco or nf.DecoherenceModel()
    taus = np.asarray(taus, dtype=float)
    phis = omega_tppi * taus
    ca, cb = (math.exp(-c) for c in deco.chi_ent(spec.t_e))
    rho = rho_gen.matrix() if rho_gen is not None else prepare_with_decoherence(kind, spec, ca, cb)
    readout = ro.ReadoutModel(m.alpha0, m.alpha1, m.sigma0_sq, m.sigma1_sq, p_nv_minus, m.mode, m.t_R)

    P = np.array([[tppi_populations(rho, kind, spec, ph, s, ca, cb) for s in (1, -1)] for ph in phis])
    exp_S = np.einsum("kst,t->ks", P, np.array([ro.expected_total(readout, np.eye(4)[j])
                                                for j in range(4)]))
    if n_shots is None:
        S = exp_S
        err = None
        shots = ShotTable(np.zeros(0, np.int64), np.zeros(0, np.int8), ("+", "-"), np.zeros(0, np.int32))
    else:
        n_pts = len(phis)

        def work(k, a, b, rng):
            idx = np.arange(a, b)
            pt, sg = idx // (2 * n_shots), (idx // n_shots) % 2
            photons = ro.sample_photons(readout, P[pt, sg], rng)
            return ShotTable(photons, sg.astype(np.int8), ("+", "-"), np.full(b - a, k, np.int32), pt)

        shots = ShotTable.concat(run_chunked(work, 2 * n_shots * n_pts, seed, "tppi", threads))
        sums = np.zeros((n_pts, 2))
        sq = np.zeros((n_pts, 2))
        np.add.at(sums, (shots.point, shots.tag), shots.photons)
        np.add.at(sq, (shots.point, shots.tag), shots.photons.astype(float) ** 2)
        S = sums / n_shots
        var = (sq - n_shots * S**2) / (n_shots - 1)
        tot = S[:, 0] + S[:, 1]
        # delta-method error of (S+ - S-)/(S+ + S-)
        err = np.sqrt((2 * S[:, 1] / tot**2) ** 2 * var[:, 0] / n_shots
                      + (2 * S[:, 0] / tot**2) ** 2 * var[:, 1] / n_shots)
    cont = (S[:, 0] - S[:, 1]) / (S[:, 0] + S[:, 1])
    q = p_nv_minus
    kfac = q * (m.alpha0 - m.alpha1) / (q * m.alpha0 + (2 - q) * m.alpha1)
    fit = TPPIFit(harmonic=2.0, max_reduced_chi2=max_reduced_chi2).fit(phis, cont, sigma=err)
    a0_fit = fit.amplitude_ / kfac
    phi_fit = fit.phase_
    s_ab, d_ab, p_ab = decoherence_combinations(deco, spec.t_e)
    exact = (exp_S[:, 0] - exp_S[:, 1]) / (exp_S[:, 0] + exp_S[:, 1])
    from .estimators import scan_frequency
    grid = np.linspace(0.5, 4.0, 351)
    f_best, _ = scan_frequency(phis, cont, grid)
    F_true = p_nv_minus**2 * fidelity(bell_density("phi"), DensityMatrix(rho))
    sweep = SweepResult("phi_tppi", phis, cont, np.zeros_like(cont) if err is None else err, exact, shots,
                        {"tau": taus.tolist()})
    return FidelityReport(a0_fit, phi_fit, fidelity_bound(a0_fit, phi_fit, p_nv_minus),
                          expected_fidelity(deco, spec.t_e, p_nv_minus), float(F_true),
                          s_ab, d_ab, p_ab, p_nv_minus, f_best,
                          tppi_psi_amplitude(spec, readout, phis)[1], sweep)


def tppi_psi_amplitude(spec: gates.CouplingSpec, m: ro.ReadoutModel, phis) -> tuple[float, float]:
    """Fitted 2x-advance amplitudes of the Phi and Psi contrast for ideal preparation."""
    out = []
    for kind in ("phi", "psi"):
        rho = prepare_with_decoherence(kind, spec, 1.0, 1.0)
        c = []
        for ph in phis:
            S = [ro.expected_total(m, tppi_populations(rho, kind, spec, ph, s, 1.0, 1.0)) for s in (1, -1)]
            c.append((S[0] - S[1]) / (S[0] + S[1]))
        out.append(TPPIFit(2.0, None).fit(phis, np.array(c)).amplitude_)
    return out[0], out[1]


# ------------------------------------------------------------ two-time SWAP


def swap_probabilities(phi_a, phi_b, sign: int, coherence=1.0) -> np.ndarray:
    """Readout populations of the SWAP two-time sequence for phases on each NV."""
    v = np.zeros(4, dtype=complex)
    v[3] = 1
    v = gates.pulse(math.pi / 2, math.pi / 2, "a").entries @ v
    amps = nf_diag(phi_a, 0.0) * v
    amps = amps @ gates.swap_from_cnots(sign).entries.T
    amps = amps * nf_diag(0.0, phi_b)
    L = gates.pulse(math.pi / 2, math.pi / 2, "b").entries
    return _mix(amps, L, coherence)


def run_two_time_swap(signal, sense: nf.SequenceTiming, delays, m: ro.ReadoutModel,
                      deco: nf.DecoherenceModel | None, spec: gates.CouplingSpec,
                      n_shots: int = 20_000, seed: int = 0, threads: int = 1,
                      same_window: bool = False, opposite: bool = False,
                      oracle_shots: int = 100_000) -> SweepResult:
    """Two-time correlator: NV a senses the first window, its state is swapped onto NV b,
    which senses the second window ``delay`` later.

    ``n_shots`` per delay point, alternating the sign of the SWAP's closing
    half pulse. The value is ``<sin phi_a(0) sin phi_b(delay)>`` times the
    coherence factors. ``opposite`` addresses the opposite spin transition on
    NV b, which reverses the sign of its phase.
    """
    deco = deco or nf.DecoherenceModel()
    delays = np.asarray(delays, dtype=float)
    if np.any(delays < 0):
        raise ValueError("delays must be non-negative")
    D_base = deco.gate_coherence(2 * spec.t_e) * deco.sense_coherence(sense.duration)
    labels = ("+x", "-x")
    rows_v, rows_e, rows_o, parts = [], [], [], []
    scale = m.p_nv_minus * (m.alpha0 - m.alpha1)
    sb = -1.0 if opposite else 1.0
    for j, dly in enumerate(delays):
        w1 = sense.shifted(0.0)
        w2 = w1 if same_window else sense.shifted(sense.duration + dly)
        D = D_base * math.exp(-deco.chi_delay(dly)[1])

        def work(k, a, b, rng, w2=w2, D=D):
            n = b - a
            tag = _block_cycle(a, b, 2, 1)
            pa, pb = nf.sample_window_phases(signal, [w1, w2], n, rng)
            p = np.empty((n, 4))
            for i, s in enumerate((1, -1)):
                sel = tag == i
                p[sel] = swap_probabilities(pa[sel, 0], sb * pb[sel, -1], s, D)
            photons = ro.sample_photons(m, p, rng)
            return ShotTable(photons, tag.astype(np.int8), labels, np.full(n, k, np.int32),
                             np.full(n, j, np.int32))

        sh = ShotTable.concat(run_chunked(work, n_shots, seed, f"swap/{j}", threads))
        parts.append(sh)
        x = sh.photons.astype(float)
        mp, mm = x[sh.tag == 0], x[sh.tag == 1]
        rows_v.append((mp.mean() - mm.mean()) / scale)
        rows_e.append(math.sqrt(mp.var(ddof=1) / mp.size + mm.var(ddof=1) / mm.size) / scale)
        rows_o.append(sb * D * _phase_moment(signal, [w1, w2], oracle_shots, seed, f"oracle/{j}"))
    return SweepResult("delay", delays, np.array(rows_v), np.array(rows_e), np.array(rows_o),
                       ShotTable.concat(parts))


# ------------------------------------------------------------ overlapping windows


def overlap_prepared_state(spec: gates.CouplingSpec) -> np.ndarray:
    """``(|00> + |11> + i|01> + i|10>) / 2`` from a global y half pulse after the Phi gate."""
    v = gates.entangle("phi", spec).entries[:, 3]
    return gates.pulse(math.pi / 2, math.pi / 2, "ab").entries @ v


def overlap_readout(kind: str, spec: gates.CouplingSpec) -> np.ndarray:
    """Local correction followed by the Phi disentangling block."""
    k = gates._kind(kind)
    r = gates.single_qubit_rotation
    a = r(math.pi / 2, 0.0) @ r(math.pi / 2, math.pi / 2)
    b = r(math.pi, 0.0) @ r(math.pi, math.pi / 2) if k == "phi" else r(math.pi, math.pi / 2)
    return gates.disentangle_phi(spec).entries @ np.kron(a, b)


def overlap_amplitudes(kind: str, a1, a2, b1, b2, spec: gates.CouplingSpec) -> np.ndarray:
    """Final state of the overlapping-window sequence (before the readout block is mixed).

    Sequence: prepared state, phases ``(a1, b1)``, half pulse on NV b (x for
    Phi, -x for Psi), phase ``b2`` on NV b, half pulse about -x on NV a, phase
    ``a2`` on NV a, readout block.
    """
    pre = _overlap_pre(kind, a1, a2, b1, b2, spec)
    return pre @ overlap_readout(kind, spec).T


def _overlap_pre(kind, a1, a2, b1, b2, spec):
    k = gates._kind(kind)
    v = overlap_prepared_state(spec)
    Ub = gates.pulse(math.pi / 2, 0.0 if k == "phi" else math.pi, "b").entries
    Ua = gates.pulse(-math.pi / 2, 0.0, "a").entries
    amps = nf_diag(a1, b1) * v
    amps = (amps @ Ub.T) * nf_diag(0.0, b2)
    amps = (amps @ Ua.T) * nf_diag(a2, 0.0)
    return amps


def overlap_probabilities(kind, a1, a2, b1, b2, spec, coherence=1.0) -> np.ndarray:
    return _mix(_overlap_pre(kind, a1, a2, b1, b2, spec), overlap_readout(kind, spec), coherence)


def run_two_time_overlap(signal, sense: nf.SequenceTiming, offsets, m: ro.ReadoutModel,
                         deco: nf.DecoherenceModel | None, spec: gates.CouplingSpec,
                         n_shots: int = 20_000, seed: int = 0, threads: int = 1,
                         oracle_shots: int = 100_000) -> SweepResult:
    """Entangled two-time correlator with overlapping windows.

    NV a senses ``[0, t]`` and NV b senses ``[offset, offset + t]``. The phases
    each NV picks up outside its own window come from local noise only, drawn
    as Gaussians with variance ``2 chi_delay(offset)``.
    """
    deco = deco or nf.DecoherenceModel()
    offsets = np.asarray(offsets, dtype=float)
    if np.any(offsets < 0):
        raise ValueError("offsets must be non-negative")
    D = deco.gate_coherence(2 * spec.t_e) * deco.sense_coherence(sense.duration)
    labels = ("Phi", "Psi")
    scale = m.p_nv_minus * (m.alpha0 - m.alpha1)
    vals, errs, orcs, parts = [], [], [], []
    for j, off in enumerate(offsets):
        wa = sense.shifted(0.0)
        wb = sense.shifted(off)
        chi_da, chi_db = deco.chi_delay(off)

        def work(k, a, b, rng, wb=wb, chi_da=chi_da, chi_db=chi_db):
            n = b - a
            tag = _block_cycle(a, b, 2, 1)
            pa, pb = nf.sample_window_phases(signal, [wa, wb], n, rng)
            a2 = rng.normal(0.0, math.sqrt(2 * chi_da), n)
            b1 = rng.normal(0.0, math.sqrt(2 * chi_db), n)
            p = np.empty((n, 4))
            for i, kind in enumerate(("phi", "psi")):
                sel = tag == i
                p[sel] = overlap_probabilities(kind, pa[sel, 0], a2[sel], b1[sel], pb[sel, 1], spec, D)
            photons = ro.sample_photons(m, p, rng)
            return ShotTable(photons, tag.astype(np.int8), labels, np.full(n, k, np.int32),
                             np.full(n, j, np.int32))

        sh = ShotTable.concat(run_chunked(work, n_shots, seed, f"overlap/{j}", threads))
        parts.append(sh)
        x = sh.photons.astype(float)
        mphi, mpsi = x[sh.tag == 0], x[sh.tag == 1]
        # photons fall as S_ideal rises, so (S_Psi_ideal - S_Phi_ideal)/2 = (S_Phi - S_Psi)/(2 scale)
        vals.append((mphi.mean() - mpsi.mean()) / (2 * scale))
        errs.append(0.5 * math.sqrt(mphi.var(ddof=1) / mphi.size + mpsi.var(ddof=1) / mpsi.size) / scale)
        delay_fac = 0.5 * (math.exp(-chi_da) + math.exp(-chi_db))
        orcs.append(D * delay_fac * _phase_moment(signal, [wa, wb], oracle_shots, seed, f"oracle/{j}"))
    return SweepResult("offset", offsets, np.array(vals), np.array(errs), np.array(orcs),
                       ShotTable.concat(parts))
