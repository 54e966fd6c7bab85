"""Analytic reduced model of the near-resonant single-excitation subspace.

The local modes are recombined into relative-displacement (RD) and
centre-of-mass (COM) modes ``(d1 -+ d2)/sqrt(2)``. Only RD couples the two
excitons, with strength ``g_x = -g sin(2 theta)/sqrt(2)``; COM shifts both
excitons alike and is treated at mean-field level. Near the vibronic
resonance ``dE ~ omega_vib`` the states ``|X1,0,0,0>`` and ``|X2,1rd,0,0>``
mix through the angle ``tan(2 phi) = 2 g_x / (dE - omega_vib)``, and the
cavity photon ``|G,0,0,1>`` couples to the two vibronic states with

    g_c1 = g_c(theta) cos(phi),   g_c2 = g_c(theta) sin(phi),
    g_c(theta) = (g_c / 2)(cos(theta) - sin(theta)).

Each vibronic state then has its own cooperativity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedConfigurationError
from .models import DimerParams


@dataclass(frozen=True)
class ReducedModel:
    """Reduced-model quantities for one parameter set (energies and rates in cm^-1).

    ``h_real`` is the 4x4 coherent block on ``(|X1,0,0,0>, |X2,1rd,0,0>,
    |X2,0,1com,0>, |G,0,0,1>)``; ``h_imag`` the matching decay matrix (the
    effective Hamiltonian is ``h_real - i/2 h_imag``).
    """

    theta: float
    phi: float
    g_x: float
    delta_vib: float
    E_mf: float
    h_real: np.ndarray
    h_imag: np.ndarray
    g_c1: float
    g_c2: float
    C1: float
    C2: float
    gamma1_prime: float
    gamma2_prime: float
    Gamma_c_prime: float
    vibronic_energies: tuple
    degenerate: bool = False
    notes: list = field(default_factory=list)

    @property
    def g_c_theta(self):
        return math.hypot(self.g_c1, self.g_c2)

    @property
    def couplings(self):
        return self.g_c1, self.g_c2

    @property
    def cooperativities(self):
        return self.C1, self.C2

    @property
    def dressed_rates(self):
        return self.gamma1_prime, self.gamma2_prime, self.Gamma_c_prime


def rd_com_transform(system):
    """Relative-displacement and centre-of-mass ladder operators of a built dimer.

    Returns ``(d_rd, d_com)`` on the full space and checks that the
    exciton-vibration coupling splits as
    ``(g/sqrt2)[(n1 + n2)(d_com + h.c.) + (n1 - n2)(d_rd + h.c.)]``.

    Raises
    ------
    UnsupportedConfigurationError
        If the two local modes have different frequencies.
    """
    w1, w2 = system.info.get("mode_frequencies", (None, None))
    if w1 is None or not math.isclose(w1, w2, rel_tol=1e-12):
        raise UnsupportedConfigurationError(f"RD/COM modes need equal local frequencies, got {w1}, {w2}")
    ops = system.operators
    d_rd, d_com = ops["d_rd"], ops["d_com"]
    g = system.params.g
    n1, n2 = ops["n1"], ops["n2"]
    expect = (g / math.sqrt(2)) * ((n1 + n2) @ (d_com + d_com.conj().T) + (n1 - n2) @ (d_rd + d_rd.conj().T))
    if system.info.get("vib_modes") == "local" and np.max(np.abs(expect - ops["H_el_vib"]), initial=0) > 1e-9:
        raise UnsupportedConfigurationError("exciton-vibration coupling does not split into RD and COM parts")
    return d_rd, d_com


def vibronic_angle(g_x, delta_vib, tol=1e-9):
    """``phi = arctan(2 g_x / delta_vib) / 2`` in [-pi/4, pi/4]; flags the fully degenerate case.

    Both inputs below ``tol`` (cm^-1) in magnitude count as degenerate.
    """
    if abs(delta_vib) <= tol and abs(g_x) <= tol:
        return 0.0, True
    if delta_vib == 0:
        return math.copysign(math.pi / 4, g_x), False
    return 0.5 * math.atan(2 * g_x / delta_vib), False


def bare_rates(params):
    """Bare population rates of ``|X1,0,0,0>``, ``|X2,1rd,0,0>`` and ``|G,0,0,1>`` (no emission)."""
    n = params.n_vib
    g1 = params.gamma_pd + 2 * params.Gamma_th * n
    g2 = params.gamma_pd + params.Gamma_th * (4 * n + 1)
    g3 = params.P_X1 + params.kappa + 2 * params.Gamma_th * n
    return g1, g2, g3


def emission_weights(theta, phi):
    """``sum_l |F_{nu,l}|^2`` for the two vibronic states.

    ``|X1,0>`` emits to ``|G,0>`` with amplitude ``cos t - sin t`` and
    ``|X2,1rd>`` to ``|G,1rd>`` with ``cos t + sin t``; the ground labels are
    orthogonal so the weights add incoherently.
    """
    c, s = math.cos(theta), math.sin(theta)
    amp = np.array([c - s, c + s])
    rot = np.array([[math.cos(phi), math.sin(phi)], [-math.sin(phi), math.cos(phi)]])
    return tuple(float(w) for w in np.sum((rot * amp) ** 2, axis=1))


def build_reduced(params: DimerParams, com_shift=0.0):
    """Assemble the reduced model for ``params``.

    ``com_shift`` replaces ``E`` by ``E_mf = E + com_shift`` (mean-field COM
    displacement; 0 for an undisplaced thermal mode).
    """
    theta = params.theta
    c, s = math.cos(theta), math.sin(theta)
    dE = params.delta_E
    E_mf = params.E + com_shift
    w = params.omega_vib
    g_x = -params.g * math.sin(2 * theta) / math.sqrt(2)
    delta_vib = dE - w
    phi, degenerate = vibronic_angle(g_x, delta_vib)
    g_c_theta = 0.5 * params.g_c * (c - s)
    g_c1 = g_c_theta * math.cos(phi)
    g_c2 = g_c_theta * math.sin(phi)
    wc = params.cavity_frequency

    h = np.zeros((4, 4))
    h[0, 0] = E_mf + dE / 2
    h[1, 1] = E_mf - dE / 2 + w
    h[2, 2] = E_mf - dE / 2 + w
    h[3, 3] = wc
    h[0, 1] = h[1, 0] = g_x
    h[0, 3] = h[3, 0] = g_c_theta

    g1v, g2v, g3 = bare_rates(params)
    gamma = params.gamma
    # bare-state emission: X1 through (c - s), both one-quantum X2 states through (c + s)
    decay = np.diag([g1v + gamma * (c - s) ** 2, g2v + gamma * (c + s) ** 2, g2v + gamma * (c + s) ** 2, g3])

    # vibronic energies of the X1/RD pair
    t = math.tan(phi)
    eps1 = h[0, 0] + g_x * t
    eps2 = h[1, 1] - g_x * t

    n = params.n_vib
    # dressed rates keep the emission at the full gamma; note the RD thermal factor (3n + 1) differs from the bare (4n + 1)
    gamma1p = params.gamma_pd + gamma + 2 * params.Gamma_th * n
    gamma2p = params.gamma_pd + gamma + params.Gamma_th * (3 * n + 1)
    gamma_cp = params.P_X1 + params.kappa + 2 * params.Gamma_th * n
    notes = ["vibronic angle undefined (delta_vib = g_x = 0); phi set to 0"] if degenerate else []
    return ReducedModel(
        theta=theta,
        phi=phi,
        g_x=g_x,
        delta_vib=delta_vib,
        E_mf=E_mf,
        h_real=h,
        h_imag=decay,
        g_c1=g_c1,
        g_c2=g_c2,
        C1=g_c1 ** 2 / (gamma1p * gamma_cp),
        C2=g_c2 ** 2 / (gamma2p * gamma_cp),
        gamma1_prime=gamma1p,
        gamma2_prime=gamma2p,
        Gamma_c_prime=gamma_cp,
        vibronic_energies=(eps1, eps2),
        degenerate=degenerate,
        notes=notes,
    )


def decay_matrix(model, params):
    """3x3 decay matrix on (vibronic 1, vibronic 2, cavity).

    The bare X1/RD rates rotate with ``phi``; polariton emission is diagonal
    in the vibronic states with the weights of :func:`emission_weights`.
    """
    g1v, g2v, g3 = bare_rates(params)
    cp, sp = math.cos(model.phi), math.sin(model.phi)
    w1, w2 = emission_weights(model.theta, model.phi)
    G1 = g1v * cp ** 2 + g2v * sp ** 2 + params.gamma * w1
    G2 = g1v * sp ** 2 + g2v * cp ** 2 + params.gamma * w2
    G12 = (g1v - g2v) * sp * cp
    return np.array([[G1, G12, 0.0], [G12, G2, 0.0], [0.0, 0.0, g3]])


def reduced_nonhermitian(model, params):
    """The 3x3 effective Hamiltonian in the vibronic basis (cm^-1)."""
    e1, e2 = model.vibronic_energies
    gt = model.g_c_theta
    cp, sp = math.cos(model.phi), math.sin(model.phi)
    h = np.array(
        [
            [e1, 0.0, gt * cp],
            [0.0, e2, -gt * sp],
            [gt * cp, -gt * sp, params.cavity_frequency],
        ]
    )
    return h - 0.5j * decay_matrix(model, params)


def effective_cooperativities(model, params=None):
    """``(C1, C2)`` of the two vibronic states."""
    return model.C1, model.C2


@dataclass
class BranchPrediction:
    """Reduced-model branch series over a ``g_c`` grid.

    ``purcell`` holds ``-gamma'_i (1 + 4 C_i) / 2`` for the two vibronic
    states and ``-Gamma'_c / 2`` for the cavity; ``exact`` the eigenvalues of
    the 3x3 effective Hamiltonian matched to the same states.
    """

    grid: np.ndarray
    labels: tuple
    purcell: np.ndarray
    exact: np.ndarray


REDUCED_LABELS = ("X1,0,0,0", "X2,1rd,0,0", "G,0,0,1")


def predict_branch_rates(params, g_c_grid, com_shift=0.0):
    """Purcell estimates and exact 3x3 eigenvalues along ``g_c_grid``."""
    from .spectra import sweep_branches

    grid = np.asarray(g_c_grid, dtype=float)
    purcell = np.zeros((3, len(grid)))
    for k, gc in enumerate(grid):
        m = build_reduced(params.replace(g_c=float(gc)), com_shift)
        purcell[0, k] = -0.5 * m.gamma1_prime * (1 + 4 * m.C1)
        purcell[1, k] = -0.5 * m.gamma2_prime * (1 + 4 * m.C2)
        purcell[2, k] = -0.5 * m.Gamma_c_prime

    def builder(gc):
        p = params.replace(g_c=float(gc))
        return reduced_nonhermitian(build_reduced(p, com_shift), p)

    anchors = {lab: np.eye(3)[i] for i, lab in enumerate(REDUCED_LABELS)}
    branches = sweep_branches(builder, "g_c", grid, anchors)
    exact = np.array([b.values for b in branches])
    return BranchPrediction(grid=grid, labels=REDUCED_LABELS, purcell=purcell, exact=exact)


def delocalisation_params(zeta, base=None, **overrides):
    """Parameters at mixing ``zeta = 2V/dEps`` with ``dE``, ``E`` and ``omega_vib`` of ``base`` held."""
    base = DimerParams() if base is None else base
    kw = {k: getattr(base, k) for k in ("omega_vib", "g", "g_c", "Q", "gamma", "gamma_pd", "Gamma_th", "P_X1",
                                         "temperature", "L_v", "L_c", "include_double_excited")}
    kw["omega_c"] = base.cavity_frequency
    kw.update(overrides)
    return DimerParams.from_delocalisation(zeta, delta_E=base.delta_E, E=base.E, **kw)


def coupling_identity_error(params, com_shift=0.0):
    """``|g_c1^2 + g_c2^2 - g_c(theta)^2|`` relative to ``max(g_c(theta)^2, tiny)``.

    ``g_c(theta) = (g_c/2)(cos t - sin t)`` is recomputed here from the
    parameters rather than taken from the model.
    """
    m = build_reduced(params, com_shift)
    gt = 0.5 * params.g_c * (math.cos(params.theta) - math.sin(params.theta))
    return abs(m.g_c1 ** 2 + m.g_c2 ** 2 - gt ** 2) / max(gt ** 2, np.finfo(float).tiny)


def vibronic_gap(params, com_shift=0.0):
    """``eps1 - eps2`` of the X1/RD vibronic pair (the splitting at ``g_c = 0``)."""
    e1, e2 = build_reduced(params, com_shift).vibronic_energies
    return e1 - e2


__all__ = [
    "ReducedModel",
    "BranchPrediction",
    "REDUCED_LABELS",
    "rd_com_transform",
    "vibronic_angle",
    "bare_rates",
    "emission_weights",
    "build_reduced",
    "decay_matrix",
    "reduced_nonhermitian",
    "effective_cooperativities",
    "predict_branch_rates",
    "delocalisation_params",
    "coupling_identity_error",
    "vibronic_gap",
]
