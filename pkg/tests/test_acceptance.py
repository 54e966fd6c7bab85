"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line through the ``acceptance`` fixture; the
lines are printed at the end of the pytest run. Criteria that the model
cannot meet at the stated tolerance are marked ``xfail(strict=True)`` and
still report their measured numbers.

Run standalone with ``python tests/test_acceptance.py``.
"""

import math
import time

import numpy as np
import pytest

from mlpurcell import reduced
from mlpurcell.dissipators import standard_channels
from mlpurcell.dynamics import exciton_observables, fit_purcell, generator, ground_growth, initial_state, propagate, purcell_scan
from mlpurcell.models import DimerParams, JCParams, build_dimer
from mlpurcell.spectra import (
    composed_rates,
    cooperativity,
    dimer_anchors,
    dimer_builder,
    g_for_cooperativity,
    jc_doublet,
    jc_single_excitation_block,
    purcell_rate,
    sweep_branches,
)
from mlpurcell.units import rate_convert

import oracles

REFERENCE = DimerParams.table_one()
#: g_c sweep for the branch criteria (contains the X1/RD rate crossover)
BRANCH_GRID = np.linspace(0.0, 100.0, 21)
MOLECULAR = reduced.REDUCED_LABELS[:2]


def set_distance(a, b):
    """Largest distance from a value in ``a`` to its nearest value in ``b``, both ways."""
    a, b = np.asarray(a), np.asarray(b)
    d = np.abs(a[:, None] - b[None, :])
    return max(d.min(axis=1).max(), d.min(axis=0).max())


def tracked(params, grid, **build_kw):
    s = build_dimer(params, **build_kw)
    br = sweep_branches(dimer_builder(params, **build_kw), "g_c", grid, dimer_anchors(s))
    return {b.label: b for b in br}


@pytest.mark.xfail(strict=True, reason="first-order Purcell law drifts past 5% above C ~ 11.5")
def test_criterion_1_jc_purcell_law(acceptance):
    t0 = time.perf_counter()
    base = JCParams(omega0=1.0, omega_c=1.0, kappa=2 * math.pi * 20.0, gamma=2 * math.pi * 0.02)
    Cs = np.linspace(0.0, 50.0, 101)
    worst_law, worst_closed, worst_C = 0.0, 0.0, 0.0
    for C in Cs:
        p = JCParams(**{**base.__dict__, "g_c": g_for_cooperativity(C, base.kappa, base.gamma)})
        closed = jc_doublet(p)
        target = purcell_rate(p.gamma, cooperativity(p.g_c, p.kappa, p.gamma))
        err = abs(-2 * closed[0].imag - target) / target
        if err > worst_law:
            worst_law, worst_C = err, C
        numeric = np.linalg.eigvals(jc_single_excitation_block(p))
        ref = oracles.jc_block_eigs(p.omega0, p.omega_c, p.g_c, p.kappa, p.gamma)
        scale = max(1.0, np.abs(ref).max())
        worst_closed = max(worst_closed, set_distance(closed, numeric) / scale, set_distance(numeric, ref) / scale)
    elapsed = time.perf_counter() - t0
    ok = worst_law < 0.05 and worst_closed < 1e-12 and elapsed < 1.0
    acceptance(1, ok, f"max rel err {worst_law:.3f} at C = {worst_C:.1f} (bound 0.05); "
                      f"closed form vs eig {worst_closed:.1e}; {elapsed:.2f} s")
    assert worst_closed < 1e-12
    assert worst_law < 0.05


@pytest.mark.slow
def test_criterion_2_lindblad_validity(acceptance):
    s = build_dimer(REFERENCE)
    assert s.dim == 225
    gen = generator(s, standard_channels(s))
    obs = {
        "trace": lambda r: np.trace(r).real,
        "herm": lambda r: np.abs(r - r.conj().T).max(),
        "mineig": lambda r: np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min(),
    }
    t0 = time.perf_counter()
    tr = propagate(initial_state(s), gen, np.linspace(0.0, 50.0, 501), obs)
    elapsed = time.perf_counter() - t0
    o = tr.observables
    drift = np.abs(o["trace"] - 1.0).max()
    herm, mineig = o["herm"].max(), o["mineig"].min()
    ok = drift < 1e-8 and herm < 1e-10 and mineig > -1e-8 and elapsed < 60
    acceptance(2, ok, f"trace drift {drift:.1e}, hermiticity {herm:.1e}, min eig {mineig:.1e}; {elapsed:.0f} s")
    assert ok


@pytest.mark.slow
def test_criterion_3_purcell_scaling(acceptance):
    t0 = time.perf_counter()
    scan = purcell_scan(REFERENCE, np.arange(0.5, 3.01, 0.5), duration=25.0, dt=0.25, window=(5.0, None))
    a, r2 = scan.quadratic_fit()
    # F(0): the g_c = 0 trajectory refit on a coarser time grid against the scan's gamma0
    _, traj0 = ground_growth(REFERENCE.replace(g_c=0.0), 25.0, 0.25)
    F0 = fit_purcell(traj0.subsample(2), scan.gamma0, window=(5.0, None)).purcell_factor
    elapsed = time.perf_counter() - t0
    n_nonzero = int(np.count_nonzero(scan.g_c))
    ok = n_nonzero >= 6 and r2 > 0.99 and abs(F0) <= 0.05 and elapsed < 600
    acceptance(3, ok, f"F = {a:.4f} g_c^2, R^2 {r2:.5f} over {n_nonzero} couplings; F(0) {F0:+.1e}; "
                      f"{elapsed:.0f} s")
    assert ok


@pytest.fixture(scope="module")
def branch_runs():
    t0 = time.perf_counter()
    full = {Lv: tracked(REFERENCE.replace(L_v=Lv), BRANCH_GRID) for Lv in (2, 5)}
    pred = reduced.predict_branch_rates(REFERENCE, BRANCH_GRID)
    return full, pred, time.perf_counter() - t0


def test_criterion_4a_bare_rates(acceptance, branch_runs):
    full, _, elapsed = branch_runs
    s = build_dimer(REFERENCE.replace(g_c=0.0))
    composed = composed_rates(s, standard_channels(s), dimer_anchors(s))
    errs = {lab: abs(-2 * full[5][lab].values[0].imag - r) / r for lab, r in composed.items()}
    worst = max(errs.values())
    ok = len(errs) == 4 and worst < 0.01 and elapsed < 300
    acceptance("4a", ok, f"four branches at g_c = 0 vs composed rates, max rel err {worst:.1e}; "
                         f"sweeps {elapsed:.0f} s")
    assert ok


@pytest.mark.xfail(strict=True, reason="COM branch picks up the cavity through its vibrational-vacuum overlap")
def test_criterion_4b_com_branch_flat(acceptance, branch_runs):
    full, _, _ = branch_runs
    change = {lab: np.ptp(np.abs(full[5][lab].values.imag)) for lab in ("X2,0,1com,0", "X1,0,0,0")}
    ratio = change["X2,0,1com,0"] / change["X1,0,0,0"]
    acceptance("4b", ratio < 0.05, f"COM |Im| change / X1 |Im| change = {ratio:.3f} (bound 0.05)")
    assert ratio < 0.05


def test_criterion_4c_one_quantum_closer_to_reduced(acceptance, branch_runs):
    full, pred, _ = branch_runs
    rms = {}
    for Lv in (2, 5):
        dev = [full[Lv][lab].values.imag - pred.purcell[i] for i, lab in enumerate(MOLECULAR)]
        rms[Lv] = float(np.sqrt(np.mean(np.square(dev))))
    ok = rms[2] < rms[5]
    acceptance("4c", ok, f"RMS |Im| deviation from Purcell estimates: L_v = 2 {rms[2]:.3f}, "
                         f"L_v = 5 {rms[5]:.3f} cm^-1")
    assert ok


def test_criterion_5_reduced_equivalence(acceptance):
    t0 = time.perf_counter()
    q = REFERENCE.replace(L_v=2, L_c=2)
    full = tracked(q, BRANCH_GRID, vib_modes="normal", com_levels=1)
    pred = reduced.predict_branch_rates(REFERENCE, BRANCH_GRID)
    lower = BRANCH_GRID <= 0.5 * BRANCH_GRID[-1]
    errs = {}
    for i, lab in enumerate(reduced.REDUCED_LABELS):
        f, e = full[lab].values.imag[lower], pred.exact[i].imag[lower]
        errs[lab] = float(np.max(np.abs(f - e) / np.abs(e)))
    elapsed = time.perf_counter() - t0
    ok = max(errs.values()) < 0.2 and elapsed < 60
    detail = ", ".join(f"{lab} {v:.3f}" for lab, v in errs.items())
    acceptance(5, ok, f"max rel Im error for g_c <= {BRANCH_GRID[-1] / 2:g}: {detail}; {elapsed:.1f} s")
    assert ok


def test_criterion_6_delocalisation(acceptance):
    t0 = time.perf_counter()
    gc = 2.65
    gaps, ident = {}, 0.0
    for g in (50.0, 100.0, 267.1):
        base = REFERENCE.replace(g=g, g_c=gc)
        for z in np.linspace(0.05, 1.0, 20):
            ident = max(ident, reduced.coupling_identity_error(reduced.delocalisation_params(float(z), base)))
        for z in (0.1, 0.5):
            pz = reduced.delocalisation_params(z, base)
            br = tracked(pz, [gc])
            gaps[g, z] = abs(br[MOLECULAR[0]].values[0].imag - br[MOLECULAR[1]].values[0].imag)
    elapsed = time.perf_counter() - t0
    shrink = all(gaps[g, 0.5] < gaps[g, 0.1] for g in (50.0, 100.0, 267.1))
    ok = shrink and ident <= 1e-12 and elapsed < 600
    detail = "; ".join(f"g {g:g}: {gaps[g, 0.1]:.3f} -> {gaps[g, 0.5]:.3f}" for g in (50.0, 100.0, 267.1))
    acceptance(6, ok, f"decay-rate gap zeta 0.1 -> 0.5 ({detail}); identity err {ident:.1e}; {elapsed:.1f} s")
    assert ok


def test_criterion_7_parameter_fidelity(acceptance):
    dE = REFERENCE.delta_E
    unit = rate_convert(1.0)
    ok = abs(dE - 1058.2) <= 0.1 and abs(unit - 5.31) <= 0.01
    acceptance(7, ok, f"delta_E {dE:.2f} cm^-1 (1058.2 +- 0.1); (1 ps)^-1 = {unit:.4f} cm^-1 (5.31 +- 0.01)")
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
