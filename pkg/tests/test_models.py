import math

import numpy as np
import pytest

from mlpurcell import hilbert
from mlpurcell.errors import InvalidDimensionError
from mlpurcell.models import DimerParams, JCParams, build_dimer, build_jc, exciton_transform
from mlpurcell.units import bose_occupation, kT, rate_convert, rate_to_ps

import oracles


def test_rate_convert_picosecond():
    assert rate_convert(1.0) == pytest.approx(5.31, abs=0.01)
    assert rate_convert(1.0) == pytest.approx(1.0 / oracles.RAD_PS_PER_CM, rel=1e-12)


def test_rate_convert_zero_and_nanosecond():
    assert rate_convert(0.0) == 0.0
    assert rate_convert(1 / 500.0) == pytest.approx(0.0106, abs=5e-5)


def test_rate_round_trip():
    for v in (0.0, 0.3, 17.0):
        assert rate_to_ps(rate_convert(v)) == pytest.approx(v, rel=1e-14)
    with pytest.raises(ValueError):
        rate_convert(-1.0)


def test_kT_room_temperature():
    assert kT(300.0) == pytest.approx(208.5, abs=0.1)


def test_bose_occupation():
    assert bose_occupation(1111.0, 0.0) == 0.0
    assert bose_occupation(1e6, 300.0) < 1e-300
    n = bose_occupation(1111.0, 300.0)
    assert n == pytest.approx(4.9e-3, abs=1e-4)
    assert n == pytest.approx(oracles.bose(1111.0, 300.0), rel=1e-9)
    with pytest.raises(ValueError):
        bose_occupation(0.0, 300.0)


def test_table_one_gap_and_cavity():
    p = DimerParams.table_one()
    assert p.delta_E == pytest.approx(1058.2, abs=0.1)
    assert p.cavity_frequency == pytest.approx(18529.06, abs=0.01)
    assert p.kappa == pytest.approx(370.58, abs=0.01)
    assert p.zeta == pytest.approx(2 * 92 / 1042)


def test_exciton_transform_limits():
    ex = exciton_transform(DimerParams(V=0.0))
    assert ex.theta == 0.0
    np.testing.assert_allclose(np.abs(ex.x1), [0, 1], atol=1e-15)
    ex = exciton_transform(DimerParams(e1=18000.0, e2=18000.0, V=50.0))
    assert ex.theta == pytest.approx(math.pi / 4)
    np.testing.assert_allclose(np.abs(ex.x1), [2 ** -0.5] * 2, atol=1e-15)


def test_exciton_transform_unitary_and_energies():
    p = DimerParams()
    ex = exciton_transform(p)
    U = ex.transform
    np.testing.assert_allclose(U @ U.conj().T, np.eye(2), atol=1e-12)
    assert math.tan(2 * ex.theta) == pytest.approx(2 * p.V / p.delta_eps)
    x1, x2 = oracles.site_amplitudes(ex.theta)
    np.testing.assert_allclose(ex.x1, x1, atol=1e-15)
    np.testing.assert_allclose(ex.x2, x2, atol=1e-15)
    h = np.array([[p.e1, -p.V], [-p.V, p.e2]])
    upper, lower = oracles.dimer_single_excitation_energies(p.e1, p.e2, p.V)
    assert x1 @ h @ x1 == pytest.approx(upper)
    assert x2 @ h @ x2 == pytest.approx(lower)


def test_params_validation():
    with pytest.raises(ValueError):
        DimerParams(gamma=-1.0)
    with pytest.raises(ValueError):
        DimerParams(L_v=1)
    with pytest.raises(ValueError):
        DimerParams(e1=1.0, e2=1.0, V=0.0)
    with pytest.raises(ValueError):
        JCParams(kappa=0.0)
    with pytest.raises(InvalidDimensionError):
        JCParams(L_c=1)


def test_from_delocalisation_keeps_gap():
    base = DimerParams()
    for zeta in (0.1, 0.5, 1.0):
        p = DimerParams.from_delocalisation(zeta, delta_E=base.delta_E)
        assert p.zeta == pytest.approx(zeta)
        assert p.delta_E == pytest.approx(base.delta_E, rel=1e-13)
        assert p.E == pytest.approx(base.E)


def test_jc_uncoupled_spectrum():
    p = JCParams(omega0=1.0, omega_c=1.3, g_c=0.0, L_c=4)
    s = build_jc(p)
    ev = np.sort(np.linalg.eigvalsh(s.hamiltonian))
    expect = np.sort([sgn * 0.5 + n * 1.3 for sgn in (-1, 1) for n in range(4)])
    np.testing.assert_allclose(ev, expect, atol=1e-12)


def test_jc_vacuum_rabi_splitting():
    g = 0.07
    s = build_jc(JCParams(omega0=1.0, omega_c=1.0, g_c=g, L_c=3))
    idx = [s.layout.index((1, 0)), s.layout.index((0, 1))]
    ground = s.hamiltonian[0, 0].real
    block = s.hamiltonian[np.ix_(idx, idx)] - ground * np.eye(2)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(block)), [1 - g, 1 + g], atol=1e-13)
    assert hilbert.is_hermitian(s.hamiltonian)


@pytest.fixture(scope="module")
def dimer():
    return build_dimer(DimerParams.table_one(g_c=2.65))


def test_dimer_dimension_and_hermiticity(dimer):
    assert dimer.dim == 225
    assert dimer.layout.labels == ("el", "vib1", "vib2", "cav")
    assert np.max(np.abs(dimer.hamiltonian - dimer.hamiltonian.conj().T)) < 1e-10


def test_dimer_four_level_dimension():
    s = build_dimer(DimerParams(include_double_excited=True, L_v=2, L_c=2))
    assert s.layout.dims == (4, 2, 2, 2)
    assert "P_D" in s.operators


def test_named_states_orthonormal(dimer):
    V = np.array(list(dimer.named_states.values())).T
    np.testing.assert_allclose(V.conj().T @ V, np.eye(V.shape[1]), atol=1e-12)


def test_named_state_energies_at_zero_coupling():
    p = DimerParams(g=0.0)
    s = build_dimer(p)
    H = s.hamiltonian
    upper, lower = oracles.dimer_single_excitation_energies(p.e1, p.e2, p.V)
    e = {k: float(np.real(v.conj() @ H @ v)) for k, v in s.named_states.items()}
    assert e["X1,0,0,0"] == pytest.approx(upper)
    assert e["X2,1rd,0,0"] == pytest.approx(lower + p.omega_vib)
    assert e["X2,0,1com,0"] == pytest.approx(lower + p.omega_vib)
    assert e["G,0,0,1"] == pytest.approx(p.cavity_frequency)
    # default cavity is on resonance with the upper exciton
    assert e["G,0,0,1"] == pytest.approx(e["X1,0,0,0"], abs=1e-9)


def test_excitation_number_conserved(dimer):
    N = np.diag(dimer.excitation)
    assert np.max(np.abs(dimer.hamiltonian @ N - N @ dimer.hamiltonian)) < 1e-9


def test_zero_cavity_coupling_blocks_photon_sectors():
    s = build_dimer(DimerParams(g_c=0.0))
    n_cav = s.layout.levels()[:, 3]
    off = n_cav[:, None] != n_cav[None, :]
    assert np.max(np.abs(s.hamiltonian[off])) < 1e-12


def test_normal_modes_match_local_without_vibronic_coupling():
    # both truncations are boxes of L_v x L_v levels, so at g = 0 the spectra coincide
    p = DimerParams(L_v=3, L_c=2, g_c=3.0, g=0.0)
    a = np.linalg.eigvalsh(build_dimer(p).hamiltonian)
    b = np.linalg.eigvalsh(build_dimer(p, vib_modes="normal").hamiltonian)
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_frozen_com_layout():
    s = build_dimer(DimerParams(L_v=2, L_c=2), vib_modes="normal", com_levels=1)
    assert s.layout.dims == (3, 2, 1, 2)
    assert "X2,0,1com,0" not in s.named_states
    with pytest.raises(InvalidDimensionError):
        build_dimer(DimerParams(), vib_modes="normal", com_levels=0)


def test_dimension_guard():
    with pytest.raises(InvalidDimensionError):
        build_dimer(DimerParams(), max_dim=100)
