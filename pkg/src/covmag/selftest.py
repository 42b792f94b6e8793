"""Fast invariant suite: gate goldens, unitarity, formula identities.

``run(faults=...)`` accepts fault names used to check that the suite catches
broken builds: ``"gate"`` perturbs a gate matrix and ``"sigma_r"`` perturbs
the readout-noise formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import carbon13 as c13
from . import gates
from . import metrology
from . import noisefield as nf
from . import readout as ro
from .constants import TOL

_W = np.exp(-1j * math.pi / 4) / math.sqrt(2)

# reference matrices in the (|11>, |10>, |01>, |00>) basis
GOLDEN = {
    "entangle_phi": _W * np.array([[1, 0, 0, 1j], [0, 1, -1j, 0], [0, -1j, 1, 0], [1j, 0, 0, 1]]),
    "entangle_psi": _W * np.array([[0, 1j, 1, 0], [1j, 0, 0, -1], [-1, 0, 0, 1j], [0, 1, 1j, 0]]),
    "disentangle_phi": _W * np.array([[1, 0, 0, 1j], [0, 1, -1j, 0], [0, -1j, 1, 0], [1j, 0, 0, 1]]),
    "disentangle_psi": _W * np.array([[0, -1, 1j, 0], [1, 0, 0, 1j], [1j, 0, 0, 1], [0, 1j, -1, 0]]),
}


@dataclass
class Check:
    id: str
    passed: bool
    detail: str


def _gate_set(spec, faults):
    ops = {
        "entangle_phi": gates.entangle_phi(spec).entries,
        "entangle_psi": gates.entangle_psi(spec).entries,
        "disentangle_phi": gates.disentangle_phi(spec).entries,
        "disentangle_psi": gates.disentangle_psi(spec).entries,
        "cnot_a": gates.cnot("a").entries,
        "cnot_b": gates.cnot("b").entries,
        "swap": gates.swap_from_cnots(+1).entries,
    }
    if "gate" in faults:
        ops["entangle_phi"] = ops["entangle_phi"].copy()
        ops["entangle_phi"][0, 0] += 1e-3
    return ops


def _sigma_r(faults):
    if "sigma_r" in faults:
        return lambda a0, a1: ro.sigma_r_poisson(a0, a1) * (1 + 1e-3)
    return ro.sigma_r_poisson


def run(faults=()) -> list[Check]:
    faults = set(faults)
    unknown = faults - {"gate", "sigma_r"}
    if unknown:
        raise ValueError(f"unknown faults {sorted(unknown)}")
    out = []
    spec = gates.CouplingSpec.from_frequency(183e3)
    ops = _gate_set(spec, faults)

    for name, U in ops.items():
        err = float(np.max(np.abs(U.conj().T @ U - np.eye(4))))
        out.append(Check(f"unitary/{name}", err < TOL.structural, f"max |U'U - I| = {err:.2e}"))
    for name, G in GOLDEN.items():
        err = float(np.max(np.abs(ops[name] - G)))
        out.append(Check(f"golden/{name}", err < TOL.structural, f"max deviation {err:.2e}"))

    # zero-field round trip returns |0,0>
    for kind in ("phi", "psi"):
        v = gates.readout_disentangle(kind, spec).entries @ gates.entangle(kind, spec).entries[:, 3]
        err = abs(abs(v[3]) - 1)
        out.append(Check(f"roundtrip/{kind}", err < TOL.structural, f"|<00|psi>| - 1 = {err:.2e}"))

    # readout noise: general formula equals the Poisson one for Poisson statistics
    sr = _sigma_r(faults)
    m = ro.ReadoutModel.conventional()
    a, b = ro.sigma_r_general(m), sr(m.alpha0, m.alpha1)
    out.append(Check("identity/sigma_r", abs(a - b) < 1e-12 * a, f"{a!r} vs {b!r}"))
    m2 = ro.poisson_for_sigma_r(30.0)
    c = sr(m2.alpha0, m2.alpha1)
    out.append(Check("identity/sigma_r_inverse", abs(c - 30.0) < 1e-9, f"{c!r}"))

    chis = np.array([0.01, 0.1, 0.5, 2.0])
    lhs = nf.correlated_sin_moment(chis)
    rhs = np.exp(-2 * chis) * np.sinh(2 * chis)
    err = float(np.max(np.abs(lhs - rhs)))
    out.append(Check("identity/sin_moment", err < 1e-14, f"max deviation {err:.2e}"))

    g = metrology.snr_gain(1.0, 0.0, exact=True)
    out.append(Check("identity/snr_gain_unit", abs(g - 1) < 1e-12, f"{g!r}"))

    for chi in (0.01, 0.1, 0.5):
        r, C1, C2 = metrology.spectrum_forward(chi * math.pi, 1.0)
        back = metrology.spectrum_reconstruct(r, C1, C2, 1.0)
        rel = abs(back - chi * math.pi) / (chi * math.pi)
        out.append(Check(f"identity/spectrum_roundtrip/{chi}", rel < 1e-12, f"relative error {rel:.2e}"))

    h = c13.HyperfineCoupling.default_fixture()
    errs = [abs(float(c13.xy_signal(h, t, n)) - c13.xy_signal_propagator(h, t, n))
            for t in (150e-9, 232e-9, 358e-9) for n in (2, 8, 24)]
    out.append(Check("identity/xy_signal", max(errs) < 1e-9, f"max deviation {max(errs):.2e}"))
    return out


def report(checks: list[Check]) -> str:
    lines = [f"{'PASS' if c.passed else 'FAIL'} {c.id}: {c.detail}" for c in checks]
    bad = [c.id for c in checks if not c.passed]
    lines.append(f"{len(checks) - len(bad)}/{len(checks)} passed" + (f"; failing: {', '.join(bad)}" if bad else ""))
    return "\n".join(lines)
