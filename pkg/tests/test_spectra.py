import csv
import json

import numpy as np
import pytest

from mlpurcell import spectra
from mlpurcell.dissipators import jc_channels, standard_channels
from mlpurcell.models import DimerParams, JCParams, build_dimer, build_jc
from mlpurcell.spectra import (
    composed_rates,
    cooperativity,
    dimer_anchors,
    dimer_builder,
    effective_hamiltonian,
    g_for_cooperativity,
    jc_builder,
    jc_doublet,
    purcell_rate,
    sweep_branches,
)

import oracles

KAPPA, GAMMA = 2 * np.pi * 20.0, 2 * np.pi * 0.02


def test_heff_without_channels_is_hamiltonian():
    s = build_dimer(DimerParams(L_v=2, L_c=2, g_c=10.0))
    np.testing.assert_array_equal(effective_hamiltonian(s), s.hamiltonian)


def test_jc_block_entries():
    p = JCParams(omega0=1.0, omega_c=1.1, g_c=0.3, L_c=3)
    block = spectra.jc_single_excitation_block(p)
    np.testing.assert_allclose(block, oracles.jc_block(1.0, 1.1, 0.3, p.kappa, p.gamma), atol=1e-12)


def test_decay_is_non_positive_imaginary():
    s = build_dimer(DimerParams(L_v=2, L_c=2, g_c=60.0))
    ev = np.linalg.eigvals(effective_hamiltonian(s, standard_channels(s)))
    assert ev.imag.max() <= 1e-10


def test_doublet_uncoupled_limit():
    p = JCParams(omega0=1.0, omega_c=1.3, g_c=0.0)
    plus, minus = jc_doublet(p)
    assert plus == pytest.approx(1.0 - 0.5j * p.gamma, abs=1e-12)
    assert minus == pytest.approx(1.3 - 0.5j * p.kappa, abs=1e-12)


@pytest.mark.parametrize("g", [0.0, 0.5, 5.0, 20.0, 80.0])
@pytest.mark.parametrize("delta", [0.0, 3.0])
def test_doublet_matches_block_eigenvalues(g, delta):
    p = JCParams(omega0=1.0, omega_c=1.0 + delta, g_c=g)
    closed = np.sort_complex(np.array(jc_doublet(p)))
    ref = np.sort_complex(oracles.jc_block_eigs(1.0, 1.0 + delta, g, p.kappa, p.gamma))
    np.testing.assert_allclose(closed, ref, atol=1e-12 * max(1.0, abs(ref).max()))


def test_cooperativity_and_purcell_rate():
    assert cooperativity(2.0, 4.0, 0.5) == pytest.approx(2.0)
    assert purcell_rate(0.5, 2.0) == pytest.approx(4.5)
    with pytest.raises(ValueError):
        cooperativity(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        purcell_rate(1.0, -1.0)
    g = g_for_cooperativity(200.0, KAPPA, GAMMA)
    assert cooperativity(g, KAPPA, GAMMA) == pytest.approx(200.0)


def test_weak_coupling_purcell_agreement():
    g = g_for_cooperativity(0.1, KAPPA, GAMMA)
    assert spectra.relative_purcell_error(JCParams(g_c=g)) < 1e-3


def test_atom_branch_tracked_matches_closed_form():
    p = JCParams()
    grid = np.linspace(0, g_for_cooperativity(5.0, KAPPA, GAMMA), 41)
    s = build_jc(p)
    anchors = {"e,0": s.named_states["e,0"], "g,1": s.named_states["g,1"]}
    br = sweep_branches(jc_builder(p), "g_c", grid, anchors)
    ground = s.hamiltonian[0, 0]
    for k, g in enumerate(grid):
        closed = jc_doublet(JCParams(g_c=g))
        assert br[0].values[k] - ground == pytest.approx(closed[0], abs=1e-9)


def test_branch_continuity_under_grid_halving():
    p = DimerParams(L_v=2, L_c=2)
    s = build_dimer(p)
    anchors = dimer_anchors(s)
    coarse = np.linspace(0, 100, 11)
    fine = np.linspace(0, 100, 21)
    b1 = sweep_branches(dimer_builder(p), "g_c", coarse, anchors)
    b2 = sweep_branches(dimer_builder(p), "g_c", fine, anchors)
    for x, y in zip(b1, b2):
        np.testing.assert_allclose(x.values, y.values[::2], atol=1e-9)


def test_single_point_sweep():
    p = DimerParams(L_v=2, L_c=2)
    s = build_dimer(p)
    br = sweep_branches(dimer_builder(p), "g_c", [0.0], dimer_anchors(s))
    assert all(len(b.values) == 1 for b in br)
    # the cavity is decoupled at g_c = 0; the vibronic anchors are mixed
    cav = next(b for b in br if b.label == "G,0,0,1")
    assert cav.overlaps[0] == pytest.approx(1.0)
    assert len({complex(b.values[0]) for b in br}) == len(br)


def test_sweep_input_validation():
    p = JCParams()
    s = build_jc(p)
    a = {"e,0": s.named_states["e,0"]}
    with pytest.raises(ValueError):
        sweep_branches(jc_builder(p), "g_c", [0.0, 1.0, 0.5], a)
    with pytest.raises(ValueError):
        sweep_branches(jc_builder(p), "g_c", [], a)
    with pytest.raises(ValueError):
        sweep_branches(jc_builder(p), "g_c", [0.0], {"a": a["e,0"], "b": a["e,0"]})


def test_trace_sum_rule():
    # the eigenvalues of H_eff sum to its trace at every grid point
    p = DimerParams(L_v=2, L_c=2, g_c=40.0)
    s = build_dimer(p)
    heff = effective_hamiltonian(s, standard_channels(s))
    anchors = {str(i): np.eye(s.dim)[:, i] for i in range(s.dim)}
    br = sweep_branches(lambda x: heff, "g_c", [40.0], anchors)
    assert sum(b.values[0] for b in br) == pytest.approx(np.trace(heff), rel=1e-12)


def test_tie_and_low_overlap_flags():
    H = np.diag([0.0, 1.0]).astype(complex)
    a = {"x": np.array([1.0, 1.0]) / np.sqrt(2), "y": np.array([1.0, -1.0]) / np.sqrt(2)}
    br = sweep_branches(lambda x: H, "p", [0.0], a)
    reasons = [why for b in br for _, why in b.flags]
    assert any("tie" in r for r in reasons)
    assert any("low overlap" in r for r in reasons)


def test_composed_rates_bare_limit():
    p = DimerParams(L_v=2, L_c=2, g_c=0.0)
    s = build_dimer(p)
    rates = composed_rates(s, standard_channels(s), dimer_anchors(s, ("G,0,0,1",)))
    # cavity loss plus the G -> X1 pump and thermal vibrational exchange
    n = oracles.bose(p.omega_vib, p.temperature)
    expected = p.kappa + p.P_X1 + 2 * p.Gamma_th * n
    assert rates["G,0,0,1"] == pytest.approx(expected, rel=1e-3)


def test_exports(tmp_path):
    p = JCParams()
    s = build_jc(p)
    br = sweep_branches(jc_builder(p), "g_c", [0.0, 1.0], {"e,0": s.named_states["e,0"]},
                        keep_vectors=True)
    rows = spectra.branches_to_rows(br, source="full")
    spectra.write_branches_csv(tmp_path / "b.csv", rows)
    with open(tmp_path / "b.csv", newline="") as fh:
        read = list(csv.DictReader(fh))
    assert list(read[0])[:5] == ["param", "branch_label", "re_cm1", "im_cm1", "overlap"]
    assert float(read[1]["im_cm1"]) == pytest.approx(br[0].values[1].imag, rel=1e-11)
    spectra.write_branches_json(tmp_path / "b.json", br, include_vectors=True)
    data = json.loads((tmp_path / "b.json").read_text())
    assert data[0]["label"] == "e,0" and len(data[0]["vectors"]) == 2
    assert br[0].population_rate[0] == pytest.approx(p.gamma)
