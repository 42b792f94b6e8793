import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
from covmag import gates
from covmag.hilbert import PureState, apply
from covmag.selftest import GOLDEN

phases = st.floats(-2 * math.pi, 2 * math.pi, allow_nan=False)


@pytest.mark.parametrize("name", sorted(GOLDEN))
def test_reference_matrices(spec, name):
    U = getattr(gates, name)(spec).entries
    assert np.max(np.abs(U - GOLDEN[name])) < 1e-12


def test_gates_match_hamiltonian_construction(spec):
    J, te = spec.J_zz, spec.t_e
    r = O.rot
    cases = {
        "entangle_phi": O.echo_block(J, te, r(math.pi / 2), r(math.pi / 2)),
        "entangle_psi": O.echo_block(J, te, r(math.pi / 2), r(math.pi / 2, 0, "rel")),
        "disentangle_phi": O.echo_block(J, te, r(-math.pi / 2), r(-math.pi / 2)),
        "disentangle_psi": O.echo_block(J, te, r(-math.pi / 2, 0, "rel"), r(math.pi / 2)),
    }
    for name, ref in cases.items():
        assert np.max(np.abs(getattr(gates, name)(spec).entries - ref)) < 1e-12, name


def test_prepared_bell_states(spec):
    w = np.exp(-1j * math.pi / 4) / math.sqrt(2)
    phi = apply(gates.entangle_phi(spec), PureState.basis("00")).amplitudes
    psi = apply(gates.entangle_psi(spec), PureState.basis("00")).amplitudes
    assert np.allclose(phi, w * np.array([1j, 0, 0, 1]), atol=1e-12)
    assert np.allclose(psi, np.conj(w) * np.array([0, 1j, 1, 0]), atol=1e-12)


def test_spin_half_convention_differs_by_global_phase(spec):
    a = gates.entangle_phi(spec, "ms01").entries
    b = gates.entangle_phi(spec, "spin_half").entries
    ratio = b[np.abs(a) > 0.1] / a[np.abs(a) > 0.1]
    assert np.allclose(ratio, ratio[0])
    assert np.max(np.abs(a - b)) > 0.1


def test_coupling_period():
    J = 2 * math.pi * 100e3
    assert np.allclose(gates.ising_evolution(J, 2 * math.pi / J).entries, np.eye(4))
    U = gates.ising_evolution(J, 4 * math.pi / J, "spin_half").entries
    assert np.allclose(U, U[0, 0] * np.eye(4))


def test_miscalibrated_gate_raises():
    spec = gates.CouplingSpec(2 * math.pi * 183e3, t_e=2e-6)
    with pytest.raises(gates.MiscalibratedGateError):
        gates.entangle_phi(spec)


def test_cnot_truth_tables():
    # basis (|11>, |10>, |01>, |00>); control a flips b when a = 1
    cnot_a = np.zeros((4, 4))
    cnot_a[1, 0] = cnot_a[0, 1] = cnot_a[2, 2] = cnot_a[3, 3] = 1
    cnot_b = np.zeros((4, 4))
    cnot_b[2, 0] = cnot_b[0, 2] = cnot_b[1, 1] = cnot_b[3, 3] = 1
    assert np.allclose(gates.cnot("a").entries, cnot_a, atol=1e-12)
    assert np.allclose(gates.cnot("b").entries, cnot_b, atol=1e-12)


def test_swap_transfers_state_onto_b():
    rng = np.random.default_rng(1)
    c = rng.normal(size=2) + 1j * rng.normal(size=2)
    c /= np.linalg.norm(c)
    v = np.kron(c, [0, 1])  # NV b in |0>
    out = gates.swap_from_cnots(+1).entries @ v
    assert np.allclose(out, np.kron([0, 1], c), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(phases, phases)
def test_round_trip_difference_is_sin_product(pa, pb):
    spec = gates.CouplingSpec.from_frequency(183e3)
    E = gates.external_phase_diagonal(pa, pb)
    S = {}
    for kind in ("phi", "psi"):
        v = gates.readout_disentangle(kind, spec).entries @ (E * gates.entangle(kind, spec).entries[:, 3])
        S[kind] = np.abs(v) ** 2 @ [2, 1, 1, 0]
    ref_phi, ref_psi = O.ideal_bell_signals(pa, pb)
    assert S["phi"] == pytest.approx(ref_phi, abs=1e-12)
    assert S["psi"] == pytest.approx(ref_psi, abs=1e-12)
    assert (S["phi"] - S["psi"]) / 2 == pytest.approx(math.sin(pa) * math.sin(pb), abs=1e-12)


def test_zero_field_round_trip_returns_ground(spec):
    for kind in ("phi", "psi"):
        v = gates.readout_disentangle(kind, spec).entries @ gates.entangle(kind, spec).entries[:, 3]
        assert abs(v[3]) == pytest.approx(1.0, abs=1e-12)


def test_reference_phi_disentangler_returns_upper_state(spec):
    v = gates.disentangle_phi(spec).entries @ gates.entangle_phi(spec).entries[:, 3]
    assert abs(v[0]) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(phases, phases)
def test_external_phase_is_diagonal_unitary(pa, pb):
    U = gates.external_phase(gates.PhasePair(pa, pb)).entries
    assert np.allclose(np.abs(np.diag(U)), 1)
    assert np.allclose(U - np.diag(np.diag(U)), 0)


def test_unknown_variant_rejected(spec):
    with pytest.raises(ValueError):
        gates.entangle("chi", spec)
