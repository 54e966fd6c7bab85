"""Non-Hermitian effective Hamiltonians and tracked eigenvalue branches.

Decay always appears as a negative imaginary part: ``H_eff = H - i/2 sum_k
r_k L_k^+ L_k``. An eigenvalue ``lam`` has amplitude decay rate ``-Im(lam)``
and population decay rate ``-2 Im(lam)``; exports carry both.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import hilbert
from .dissipators import jc_channels, standard_channels
from .dynamics import Lindbladian
from .models import build_dimer, build_jc

#: consecutive-overlap threshold below which a branch assignment is flagged
OVERLAP_WARN = 0.5
#: overlaps closer than this count as a tie
TIE_TOL = 1e-6


def effective_hamiltonian(system, channels=()):
    """``H - i/2 sum_k r_k L_k^+ L_k`` in the units of ``system.hamiltonian``."""
    return Lindbladian(system.hamiltonian, channels, energy_to_rate=1.0).heff


def cooperativity(g_c, kappa, gamma):
    """``C = g_c^2 / (kappa gamma)``."""
    if not kappa > 0 or not gamma > 0:
        raise ValueError("kappa and gamma must be positive")
    return g_c ** 2 / (kappa * gamma)


def purcell_rate(gamma, C):
    """Purcell-enhanced rate ``gamma (1 + 4 C)``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if C < 0:
        raise ValueError("cooperativity must be non-negative")
    return gamma * (1.0 + 4.0 * C)


def jc_doublet(params):
    """Closed-form single-excitation eigenvalues of the JC effective Hamiltonian.

    Energies are measured from the ground state ``|g, 0>``. Returns
    ``(omega_plus, omega_minus)`` where ``omega_plus`` is the branch that
    continues to the bare atom ``omega0 - i gamma/2`` as ``g_c -> 0``::

        omega_pm = (omega0 + omega_c)/2 - i (gamma + kappa)/4
                   +- sqrt(g_c^2 + ((omega0 - omega_c)/2 - i (gamma - kappa)/4)^2)

    Past the exceptional point both roots share the imaginary part and the
    labelling follows the principal square root.
    """
    mean = 0.5 * (params.omega0 + params.omega_c) - 0.25j * (params.gamma + params.kappa)
    half = 0.5 * (params.omega0 - params.omega_c) - 0.25j * (params.gamma - params.kappa)
    root = np.sqrt(complex(params.g_c ** 2 + half ** 2))
    if (root * np.conj(half)).real < 0:
        root = -root
    return complex(mean + root), complex(mean - root)


def jc_single_excitation_block(params):
    """The 2x2 block of the JC ``H_eff`` on ``{|e,0>, |g,1>}``, shifted by the ground energy."""
    system = build_jc(params)
    heff = effective_hamiltonian(system, jc_channels(system))
    idx = [system.layout.index((1, 0)), system.layout.index((0, 1))]
    ground = system.layout.index((0, 0))
    return heff[np.ix_(idx, idx)] - heff[ground, ground] * np.eye(2)


def jc_atom_branch(params):
    """Atom-anchored JC eigenvalue (closed form)."""
    return jc_doublet(params)[0]


@dataclass
class SpectralBranch:
    """One eigenvalue followed along a parameter sweep.

    ``overlaps[k]`` is ``|<v_{k-1}|v_k>|^2`` between normalised right
    eigenvectors at consecutive points (``|<anchor|v_0>|^2`` at ``k = 0``).
    ``flags`` lists ``(index, reason)`` for low-confidence assignments.
    """

    label: str
    parameter: str
    grid: np.ndarray
    values: np.ndarray
    anchor_state: np.ndarray
    overlaps: np.ndarray
    flags: list = field(default_factory=list)
    vectors: list | None = None

    def __post_init__(self):
        if not (len(self.grid) == len(self.values) == len(self.overlaps)):
            raise ValueError("branch series must match the grid length")

    @property
    def amplitude_rate(self):
        return -self.values.imag

    @property
    def population_rate(self):
        return -2.0 * self.values.imag

    @property
    def confident(self):
        return not self.flags


def _assign(weights):
    """Maximum-weight matching rows -> columns; also reports near ties per row."""
    rows, cols = linear_sum_assignment(-weights)
    ties = []
    for r, c in zip(rows, cols):
        others = np.delete(weights[r], c)
        if others.size and weights[r, c] - others.max() < TIE_TOL:
            ties.append(r)
    return cols[np.argsort(rows)], ties


def _overlaps(a, b):
    """``|<a_i|b_j>|^2`` for column sets of unit vectors."""
    return np.abs(a.conj().T @ b) ** 2


def sweep_branches(builder, parameter, grid, anchors, keep_vectors=False):
    """Follow the eigenvalues anchored to labelled states along a sweep.

    Parameters
    ----------
    builder : callable
        ``builder(value) -> H_eff`` (square complex matrix).
    parameter : str
        Name of the swept variable (for exports).
    grid : array_like
        Monotone grid of parameter values.
    anchors : dict
        Label to state vector. Anchors must be orthonormal; at the first
        grid point each anchor claims the eigenvector it overlaps most
        (jointly optimal assignment).
    keep_vectors : bool
        Store the tracked eigenvectors on each branch.

    Each later point assigns eigenvectors by maximal overlap with the
    branch's previous eigenvector. Near ties (overlaps within 1e-6) are
    broken by the smallest eigenvalue jump and flagged, as are assignments
    with overlap below 0.5.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0:
        raise ValueError("grid must be a non-empty 1-D array")
    steps = np.diff(grid)
    if len(grid) > 1 and not (np.all(steps > 0) or np.all(steps < 0)):
        raise ValueError("grid must be strictly monotone")
    labels = list(anchors)
    A = np.array([np.asarray(anchors[k], dtype=complex) for k in labels]).T
    gram = A.conj().T @ A
    if np.max(np.abs(gram - np.eye(len(labels))), initial=0.0) > 1e-10:
        raise ValueError("anchor states must be orthonormal")

    nb, npts = len(labels), len(grid)
    values = np.zeros((nb, npts), dtype=complex)
    overlaps = np.zeros((nb, npts))
    flags = [[] for _ in labels]
    kept = [[] for _ in labels] if keep_vectors else None
    prev_vecs = A
    prev_vals = None
    for k, x in enumerate(grid):
        heff = np.asarray(builder(x), dtype=complex)
        dec = hilbert.eig_complex(heff)
        W = _overlaps(prev_vecs, dec.vectors)
        cols, ties = _assign(W)
        for r in ties:
            if prev_vals is None:
                flags[r].append((k, "tied anchor overlap"))
                continue
            # tie: choose among near-maximal columns by eigenvalue continuity
            near = np.flatnonzero(W[r] >= W[r, cols[r]] - TIE_TOL)
            free = [c for c in near if c == cols[r] or c not in cols]
            best = min(free, key=lambda c: abs(dec.values[c] - prev_vals[r]))
            cols[r] = best
            flags[r].append((k, "overlap tie broken by eigenvalue continuity"))
        for r, c in enumerate(cols):
            overlaps[r, k] = W[r, c]
            values[r, k] = dec.values[c]
            if W[r, c] < OVERLAP_WARN:
                flags[r].append((k, f"low overlap {W[r, c]:.3f}"))
            if keep_vectors:
                kept[r].append(dec.vectors[:, c])
        prev_vecs = dec.vectors[:, cols]
        prev_vals = values[:, k]
    return [
        SpectralBranch(
            label=lab,
            parameter=parameter,
            grid=grid.copy(),
            values=values[r],
            anchor_state=A[:, r],
            overlaps=overlaps[r],
            flags=flags[r],
            vectors=kept[r] if keep_vectors else None,
        )
        for r, lab in enumerate(labels)
    ]


def jc_builder(params, parameter="g_c"):
    """``value -> H_eff`` for the JC model with one field of ``params`` swept."""
    from dataclasses import replace

    def build(value):
        p = replace(params, **{parameter: float(value)})
        s = build_jc(p)
        return effective_hamiltonian(s, jc_channels(s))

    return build


def dimer_builder(params, parameter="g_c", **build_kw):
    """``value -> H_eff`` for the dimer with the standard channel set.

    The polariton emission channels are rebuilt at every point.
    """

    def build(value):
        p = params.replace(**{parameter: float(value)})
        s = build_dimer(p, **build_kw)
        return effective_hamiltonian(s, standard_channels(s))

    return build


SINGLE_EXCITATION_ANCHORS = ("X1,0,0,0", "X2,1rd,0,0", "G,0,0,1", "X2,0,1com,0")


def dimer_anchors(system, labels=SINGLE_EXCITATION_ANCHORS):
    """Named single-excitation states used as branch anchors (those present in ``system``)."""
    return {lab: system.named_states[lab] for lab in labels if lab in system.named_states}


def decay_operator(system, channels):
    """``sum_k r_k L_k^+ L_k``, so that ``H_eff = H - i/2 * decay_operator``."""
    gen = Lindbladian(system.hamiltonian, channels, energy_to_rate=1.0)
    return gen.decay_dense + gen.decay_rank_one


def composed_rates(system, channels, anchors):
    """Population decay rate of each anchor's coherent eigenstate.

    For every anchor the Hermitian eigenvector of ``H`` with the largest
    overlap is taken and ``<v| sum_k r_k L_k^+ L_k |v>`` returned: the
    dephasing, thermal, pump, cavity and emission rates composed on that
    state. At weak damping this is the first-order value of ``-2 Im``
    of the corresponding ``H_eff`` eigenvalue.
    """
    H = np.asarray(system.hamiltonian)
    Gam = decay_operator(system, channels)
    _, vecs = np.linalg.eigh(H)
    labels = list(anchors)
    A = np.array([np.asarray(anchors[k], dtype=complex) for k in labels]).T
    cols, _ = _assign(_overlaps(A, vecs))
    out = {}
    for lab, c in zip(labels, cols):
        v = vecs[:, c]
        out[lab] = float(np.real(v.conj() @ Gam @ v))
    return out


# -- export -------------------------------------------------------------------

def branches_to_rows(branches, source=None):
    rows = []
    for br in branches:
        for k, x in enumerate(br.grid):
            lam = br.values[k]
            row = {
                "param": float(x),
                "branch_label": br.label,
                "re_cm1": float(lam.real),
                "im_cm1": float(lam.imag),
                "population_rate_cm1": float(-2 * lam.imag),
                "overlap": float(br.overlaps[k]),
            }
            if source is not None:
                row["source"] = source
            rows.append(row)
    return rows


def write_branches_csv(path, rows):
    """CSV with columns ``param, branch_label, re_cm1, im_cm1, overlap`` (plus extras)."""
    base = ["param", "branch_label", "re_cm1", "im_cm1", "overlap"]
    extra = [k for k in rows[0] if k not in base] if rows else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(base + extra)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in base + extra])


def _fmt(v):
    return f"{v:.12g}" if isinstance(v, float) else str(v)


def branches_to_json(branches, include_vectors=False):
    out = []
    for br in branches:
        item = {
            "label": br.label,
            "parameter": br.parameter,
            "grid": br.grid.tolist(),
            "re_cm1": br.values.real.tolist(),
            "im_cm1": br.values.imag.tolist(),
            "overlap": br.overlaps.tolist(),
            "flags": [[int(k), why] for k, why in br.flags],
        }
        if include_vectors and br.vectors is not None:
            item["vectors"] = [[[float(z.real), float(z.imag)] for z in v] for v in br.vectors]
        out.append(item)
    return out


def write_branches_json(path, branches, include_vectors=False):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(branches_to_json(branches, include_vectors), fh, indent=1)


def relative_purcell_error(params):
    """``|-2 Im(atom branch) - gamma (1 + 4C)| / (gamma (1 + 4C))`` for JC parameters."""
    C = cooperativity(params.g_c, params.kappa, params.gamma)
    target = purcell_rate(params.gamma, C)
    return abs(-2.0 * jc_atom_branch(params).imag - target) / target


def g_for_cooperativity(C, kappa, gamma):
    """Coupling that gives cooperativity ``C``."""
    return math.sqrt(C * kappa * gamma)
