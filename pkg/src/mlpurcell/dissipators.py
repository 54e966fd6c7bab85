"""GKSL jump channels for the dimer model.

Radiative emission is written in the eigenbasis of the coherent Hamiltonian:
each channel takes a polariton ``|F_nu>`` to a ground state ``|G, l>`` with
amplitude ``F_{nu,l} = sum_m <m, l|F_nu>`` (unit site dipoles). The amplitude
is absorbed into the rate as ``gamma * |F_{nu,l}|**2`` so every rate is
non-negative. Such channels are rank one and are stored in factored form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components

from .errors import AmbiguityError, UnsupportedConfigurationError
from .hilbert import fix_phase
from .models import DOUBLE, SITE1, SITE2

PRUNE_REL = 1e-14
GROUND_TOL = 1e-8


@dataclass(frozen=True)
class RankOne:
    """The operator ``|ket><bra|`` without forming the matrix."""

    ket: np.ndarray
    bra: np.ndarray

    @property
    def shape(self):
        return (len(self.ket), len(self.bra))

    def toarray(self):
        return np.outer(self.ket, self.bra.conj())


@dataclass(frozen=True)
class JumpChannel:
    """A jump operator with its rate (cm^-1).

    ``operator`` is a dense array or a :class:`RankOne` factorisation.
    """

    operator: object
    rate: float
    label: str

    def __post_init__(self):
        if not (np.isfinite(self.rate) and self.rate >= 0):
            raise ValueError(f"channel {self.label!r}: rate must be finite and >= 0, got {self.rate}")

    @property
    def dim(self):
        return self.operator.shape[0]

    def dense(self):
        op = self.operator
        return op.toarray() if isinstance(op, RankOne) else np.asarray(op)

    def ldag_l(self):
        """``L^dagger L`` as a dense matrix."""
        op = self.operator
        if isinstance(op, RankOne):
            return np.vdot(op.ket, op.ket).real * np.outer(op.bra, op.bra.conj())
        op = np.asarray(op)
        return op.conj().T @ op


@dataclass(frozen=True)
class PolaritonBasis:
    """Eigenbasis of the coherent Hamiltonian.

    ``states[:, k]`` has energy ``energies[k]``; ``ground_manifold`` lists the
    columns with no electronic excitation (weight below 1e-8).
    """

    states: np.ndarray
    energies: np.ndarray
    ground_manifold: np.ndarray
    excited_weight: np.ndarray

    @property
    def excited(self):
        mask = np.ones(len(self.energies), dtype=bool)
        mask[self.ground_manifold] = False
        return np.flatnonzero(mask)


def _blocks(h):
    """Connected components of the non-zero pattern of ``h``."""
    n_comp, labels = connected_components(np.abs(h) > 0, directed=False)
    return [np.flatnonzero(labels == k) for k in range(n_comp)]


def polariton_basis(system):
    """Diagonalise the coherent Hamiltonian of ``system``.

    The matrix is split into its decoupled blocks first, so exact
    degeneracies between uncoupled sectors (e.g. a resonant cavity photon and
    an exciton at ``g_c = 0``) never mix in the returned vectors.

    Raises
    ------
    AmbiguityError
        If a degenerate cluster mixes pure ground states with states carrying
        electronic excitation, making the ground manifold basis-dependent.
    """
    H = np.asarray(system.hamiltonian)
    if np.max(np.abs(H - H.conj().T), initial=0.0) > 1e-10:
        raise ValueError("polariton basis needs a Hermitian Hamiltonian")
    D = H.shape[0]
    states = np.zeros((D, D), dtype=complex)
    energies = np.zeros(D)
    col = 0
    for idx in _blocks(H):
        e, v = scipy.linalg.eigh(H[np.ix_(idx, idx)])
        k = len(idx)
        energies[col:col + k] = e
        states[idx, col:col + k] = v
        col += k
    order = np.argsort(energies, kind="stable")
    energies, states = energies[order], fix_phase(states[:, order])

    p_ground = np.real(np.diag(system.operators["P_G"])) if "P_G" in system.operators else None
    if p_ground is None:
        raise UnsupportedConfigurationError("system has no ground-state projector 'P_G'")
    ground_weight = np.einsum("i,ik->k", p_ground, np.abs(states) ** 2)
    excited_weight = 1.0 - ground_weight
    ground = np.flatnonzero(excited_weight < GROUND_TOL)

    scale = max(1.0, float(np.max(np.abs(energies))))
    mixed = np.flatnonzero((excited_weight >= GROUND_TOL) & (excited_weight < 1 - GROUND_TOL))
    bad = set()
    for k in mixed:
        near = np.flatnonzero(np.abs(energies - energies[k]) < 1e-10 * scale)
        pure_ground = [j for j in near if j in set(ground)]
        if pure_ground:
            bad.update([int(k), *map(int, pure_ground)])
    if bad:
        raise AmbiguityError(f"ground manifold ambiguous at states {sorted(bad)}", sorted(bad))
    return PolaritonBasis(states=states, energies=energies, ground_manifold=ground, excited_weight=excited_weight)


def _single_to_ground(system):
    """``sum_m |G><m|`` on the full space, single-excitation manifold only."""
    ops = system.operators
    P_G = ops["P_G"]
    return P_G @ (ops["sigma1"] + ops["sigma2"])


def ground_labels(system):
    """Basis indices of the ground-manifold product states ``|G, l>``."""
    return np.flatnonzero(np.real(np.diag(system.operators["P_G"])) > 0.5)


def emission_amplitudes(basis, system):
    """Matrix ``F[l, nu] = sum_m <m, l|F_nu>`` over ground labels ``l``."""
    A = _single_to_ground(system)
    gl = ground_labels(system)
    return (A @ basis.states)[gl, :]


def emission_channels(basis, system, gamma, prune=True):
    """Radiative decay of excited polaritons into ``|G, l>``.

    One channel per (excited ``nu``, ground label ``l``) with operator
    ``|G, l><F_nu|`` and rate ``gamma * |F_{nu,l}|**2``. With ``prune``,
    channels slower than ``1e-14 * gamma`` are dropped.
    """
    F = emission_amplitudes(basis, system)
    gl = ground_labels(system)
    D = system.dim
    kets = {}
    channels = []
    for nu in basis.excited:
        bra = basis.states[:, nu]
        for j, l in enumerate(gl):
            rate = gamma * abs(F[j, nu]) ** 2
            if prune and rate < PRUNE_REL * gamma:
                continue
            if l not in kets:
                ket = np.zeros(D, dtype=complex)
                ket[l] = 1.0
                kets[l] = ket
            channels.append(JumpChannel(RankOne(kets[l], bra), float(rate), f"emit[nu={nu},l={l}]"))
    return channels


def site_exciton_weights(system):
    """``a[m, i] = <m|X_i>`` for sites m = 1, 2 and excitons i = 1, 2."""
    ex = system.info["exciton"]
    return ex.transform.T.copy()


def double_excited_channels(basis, system, gamma, prune=True):
    """Decay of the doubly excited manifold into single excitations.

    For each site ``m`` the dipole transition ``|1,2> -> |m>`` is resolved in
    the eigenbasis: a channel ``|F_nu><F_mu|`` (``mu`` doubly excited, ``nu``
    singly excited) with amplitude ``<F_nu| (|m><1,2| x I) |F_mu>``. Writing
    ``|m> = sum_i a_m(i) |X_i>`` this equals
    ``sum_{i,l} c*_{i,l}(nu) a_m(i) <1,2,l|F_mu>``.
    """
    if "P_D" not in system.operators:
        raise UnsupportedConfigurationError("system built without the doubly excited state")
    ops = system.operators
    P_D = ops["P_D"]
    # |m><1,2| on the full space: sigma_{other} restricted to the double manifold
    lowering = {1: ops["sigma2"] @ P_D, 2: ops["sigma1"] @ P_D}
    d_weight = np.real(np.einsum("i,ik->k", np.real(np.diag(P_D)), np.abs(basis.states) ** 2))
    doubly = np.flatnonzero(d_weight > 1 - GROUND_TOL)
    singly = np.flatnonzero((basis.excited_weight > GROUND_TOL) & (d_weight < GROUND_TOL))
    channels = []
    for m, op in lowering.items():
        amp = basis.states[:, singly].conj().T @ op @ basis.states[:, doubly]
        for jj, mu in enumerate(doubly):
            bra = basis.states[:, mu]
            for ii, nu in enumerate(singly):
                rate = gamma * abs(amp[ii, jj]) ** 2
                if prune and rate < PRUNE_REL * gamma:
                    continue
                channels.append(
                    JumpChannel(RankOne(basis.states[:, nu], bra), float(rate), f"emit2[m={m},mu={mu},nu={nu}]")
                )
    return channels


def standard_channels(system, basis=None, prune=True):
    """Full dissipator set of the dimer with rates from ``system.params``.

    Site dephasing, vibrational relaxation and absorption on both local
    modes, polariton emission, incoherent pumping of X1 and cavity loss at
    ``kappa = omega_c / Q``. Doubly excited decay is added when the model
    carries that state.
    """
    p = system.params
    ops = system.operators
    n = p.n_vib
    chans = [
        JumpChannel(ops["n1"], p.gamma_pd, "dephasing[1]"),
        JumpChannel(ops["n2"], p.gamma_pd, "dephasing[2]"),
        JumpChannel(ops["d1"], p.Gamma_th * (n + 1), "relax[d1]"),
        JumpChannel(ops["d2"], p.Gamma_th * (n + 1), "relax[d2]"),
        JumpChannel(ops["d1"].conj().T, p.Gamma_th * n, "absorb[d1]"),
        JumpChannel(ops["d2"].conj().T, p.Gamma_th * n, "absorb[d2]"),
    ]
    if basis is None:
        basis = polariton_basis(system)
    chans.extend(emission_channels(basis, system, p.gamma, prune=prune))
    if "P_D" in ops:
        chans.extend(double_excited_channels(basis, system, p.gamma, prune=prune))
    chans.append(JumpChannel(ops["sigma_X1_dag"], p.P_X1, "pump[X1]"))
    chans.append(JumpChannel(ops["b"], p.kappa, "cavity"))
    return chans


def jc_channels(system):
    """Atomic and cavity decay for the Jaynes-Cummings model."""
    p = system.params
    return [
        JumpChannel(system.operators["sigma_minus"], p.gamma, "atom"),
        JumpChannel(system.operators["a"], p.kappa, "cavity"),
    ]


__all__ = [
    "JumpChannel",
    "RankOne",
    "PolaritonBasis",
    "polariton_basis",
    "emission_amplitudes",
    "emission_channels",
    "double_excited_channels",
    "standard_channels",
    "jc_channels",
    "site_exciton_weights",
    "ground_labels",
    "SITE1",
    "SITE2",
    "DOUBLE",
]
