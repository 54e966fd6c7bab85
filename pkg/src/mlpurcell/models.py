"""Parameter records and Hamiltonian builders.

Two models are provided: the Jaynes-Cummings atom-cavity model and a
vibronic dimer (two pigments, one vibrational mode per pigment, one cavity
mode). The dimer's tensor order is always (electronic, vib1, vib2, cavity);
the electronic levels are G, site 1, site 2 and optionally the doubly
excited state.

Sign convention: the inter-site hopping enters as ``-V``. With ``V >= 0``
and site 2 the higher site this makes ``cos(t)|2> - sin(t)|1>`` the upper
exciton X1 with energy ``E + dE/2``, which is the labelling the reduced
model and the cavity couplings ``(g_c/2)(cos t - sin t)`` rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import hilbert
from .errors import InvalidDimensionError
from .hilbert import SpaceLayout
from .units import bose_occupation, rate_convert

MAX_DIM = 4096

# electronic basis indices of the dimer
G, SITE1, SITE2, DOUBLE = 0, 1, 2, 3


@dataclass(frozen=True)
class JCParams:
    """Jaynes-Cummings parameters (arbitrary but consistent units)."""

    omega0: float = 1.0
    omega_c: float = 1.0
    g_c: float = 0.0
    kappa: float = 2 * math.pi * 20.0
    gamma: float = 2 * math.pi * 0.02
    L_c: int = 3

    def __post_init__(self):
        if not self.kappa > 0 or not self.gamma > 0:
            raise ValueError("kappa and gamma must be positive")
        if self.g_c < 0:
            raise ValueError("g_c must be non-negative")
        if self.L_c < 2:
            raise InvalidDimensionError("L_c must be >= 2")

    @property
    def Q(self):
        return self.omega_c / self.kappa

    @property
    def detuning(self):
        """Cavity detuning omega_c - omega0."""
        return self.omega_c - self.omega0


@dataclass(frozen=True)
class DimerParams:
    """Dimer parameters. Energies and rates in cm^-1, temperature in K.

    ``omega_c=None`` puts the cavity on resonance with the upper exciton.
    The cavity loss rate is ``kappa = omega_c / Q``.
    """

    e1: float = 17479.0
    e2: float = 18521.0
    V: float = 92.0
    omega_vib: float = 1111.0
    g: float = 267.1
    g_c: float = 0.0
    omega_c: float | None = None
    Q: float = 50.0
    gamma: float = field(default_factory=lambda: rate_convert(1 / 500.0))
    gamma_pd: float = field(default_factory=lambda: rate_convert(1.0))
    Gamma_th: float = field(default_factory=lambda: rate_convert(1.0))
    P_X1: float = field(default_factory=lambda: rate_convert(1 / 600.0))
    temperature: float = 300.0
    L_v: int = 5
    L_c: int = 3
    include_double_excited: bool = False

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(msg for _, msg in problems))

    def problems(self):
        """List of ``(field, message)`` invariant violations."""
        out = []
        for name in ("gamma", "gamma_pd", "Gamma_th", "P_X1", "g_c"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                out.append((name, f"{name} must be a finite rate >= 0, got {v}"))
        if not self.Q > 0:
            out.append(("Q", f"Q must be positive, got {self.Q}"))
        if not self.omega_vib > 0:
            out.append(("omega_vib", f"omega_vib must be positive, got {self.omega_vib}"))
        if self.temperature < 0:
            out.append(("temperature", f"temperature must be >= 0, got {self.temperature}"))
        if self.L_v < 2:
            out.append(("L_v", f"L_v must be >= 2, got {self.L_v}"))
        if self.L_c < 2:
            out.append(("L_c", f"L_c must be >= 2, got {self.L_c}"))
        if self.e1 == self.e2 and self.V == 0:
            out.append(("V", "site energies degenerate and V = 0: excitons undefined"))
        if self.omega_c is not None and not self.omega_c > 0:
            out.append(("omega_c", f"omega_c must be positive, got {self.omega_c}"))
        return out

    @classmethod
    def table_one(cls, **overrides):
        """Prototype dimer parameters (PE545-like): E = 18000, dEps = 1042, V = 92."""
        return cls(**overrides)

    @classmethod
    def from_delocalisation(cls, zeta, delta_E=None, E=None, **overrides):
        """Parameters with mixing ``zeta = 2V/dEps`` at fixed exciton gap ``delta_E``.

        Keeps the vibrational resonance condition while varying delocalisation.
        """
        base = cls(**overrides)
        delta_E = base.delta_E if delta_E is None else delta_E
        E = base.E if E is None else E
        two_theta = math.atan(zeta)
        V = 0.5 * delta_E * math.sin(two_theta)
        d_eps = delta_E * math.cos(two_theta)
        kw = dict(overrides)
        kw.update(e1=E - d_eps / 2, e2=E + d_eps / 2, V=V)
        if base.omega_c is None:
            kw["omega_c"] = None
        return cls(**kw)

    @property
    def E(self):
        return 0.5 * (self.e1 + self.e2)

    @property
    def delta_eps(self):
        return abs(self.e1 - self.e2)

    @property
    def delta_E(self):
        return math.hypot(self.delta_eps, 2 * self.V)

    @property
    def theta(self):
        return 0.5 * math.atan2(2 * self.V, self.delta_eps)

    @property
    def zeta(self):
        return math.tan(2 * self.theta)

    @property
    def cavity_frequency(self):
        return self.E + 0.5 * self.delta_E if self.omega_c is None else self.omega_c

    @property
    def kappa(self):
        return self.cavity_frequency / self.Q

    @property
    def n_vib(self):
        return bose_occupation(self.omega_vib, self.temperature)

    def replace(self, **changes):
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return type(self)(**kw)


@dataclass(frozen=True)
class ExcitonTransform:
    theta: float
    delta_E: float
    #: rows are X1, X2 in the (site1, site2) basis
    transform: np.ndarray

    @property
    def x1(self):
        return self.transform[0]

    @property
    def x2(self):
        return self.transform[1]


@dataclass
class ModelSystem:
    """A built model: Hamiltonian (cm^-1 or model units) with its layout.

    ``operators`` holds the named building blocks (ladder operators, site
    projectors, ...). ``excitation`` is the diagonal of the conserved number
    of electronic plus cavity quanta, used to block the dynamics.
    """

    hamiltonian: np.ndarray
    layout: SpaceLayout
    params: object
    named_states: dict
    operators: dict = field(default_factory=dict)
    excitation: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.layout.total


def exciton_transform(params):
    """Excitonic mixing angle, gap and site-to-exciton rotation.

    The upper exciton is ``X1 = cos(t)|hi> - sin(t)|lo>`` and the lower
    ``X2 = cos(t)|lo> + sin(t)|hi>``, where ``hi`` is the higher-energy
    site (site 2 when the sites are degenerate).
    """
    d_eps = params.delta_eps
    if d_eps == 0 and params.V == 0:
        raise ValueError("site energies degenerate and V = 0: excitons undefined")
    theta = 0.5 * math.atan2(2 * params.V, d_eps)
    c, s = math.cos(theta), math.sin(theta)
    hi, lo = (0, 1) if params.e1 > params.e2 else (1, 0)
    u = np.zeros((2, 2))
    u[0, hi], u[0, lo] = c, -s
    u[1, lo], u[1, hi] = c, s
    return ExcitonTransform(theta=theta, delta_E=params.delta_E, transform=u)


def build_jc(params):
    """Jaynes-Cummings model on layout (atom, cavity); atom level 1 is excited."""
    layout = SpaceLayout((2, params.L_c), ("atom", "cavity"))
    sm = hilbert.embed(hilbert.annihilation(2), 0, layout)
    a = hilbert.embed(hilbert.annihilation(params.L_c), 1, layout)
    sz = hilbert.embed(np.diag([-1.0, 1.0]).astype(complex), 0, layout)
    H = 0.5 * params.omega0 * sz + params.omega_c * a.conj().T @ a
    H = H + params.g_c * (sm.conj().T @ a + sm @ a.conj().T)
    named = {}
    for atom, a_lab in ((0, "g"), (1, "e")):
        for n in range(params.L_c):
            named[f"{a_lab},{n}"] = hilbert.basis(layout.total, layout.index((atom, n)))
    excitation = np.real(np.diag(sm.conj().T @ sm + a.conj().T @ a))
    return ModelSystem(
        hamiltonian=H,
        layout=layout,
        params=params,
        named_states=named,
        operators={"sigma_minus": sm, "a": a, "sigma_z": sz},
        excitation=excitation,
    )


def _electronic_operators(n_el):
    """Site lowering operators on the electronic space (hard-core bosons)."""
    s1 = np.zeros((n_el, n_el), dtype=complex)
    s2 = np.zeros((n_el, n_el), dtype=complex)
    s1[G, SITE1] = 1.0
    s2[G, SITE2] = 1.0
    if n_el == 4:
        s1[SITE2, DOUBLE] = 1.0
        s2[SITE1, DOUBLE] = 1.0
    return s1, s2


def build_dimer(params, *, vib_modes="local", com_levels=None, max_dim=MAX_DIM):
    """Vibronic dimer coupled to a single cavity mode.

    Parameters
    ----------
    params : DimerParams
    vib_modes : {"local", "normal"}
        ``"local"`` truncates each pigment's mode at ``L_v`` levels.
        ``"normal"`` instead truncates the relative-displacement and
        centre-of-mass combinations ``(d1 -+ d2)/sqrt(2)``.
    com_levels : int, optional
        Only for ``vib_modes="normal"``: levels kept in the centre-of-mass
        mode (default ``L_v``). ``1`` freezes it in its vacuum.
    max_dim : int
        Guard against accidentally huge spaces.
    """
    n_el = 4 if params.include_double_excited else 3
    L_v, L_c = params.L_v, params.L_c
    if vib_modes == "local":
        layout = SpaceLayout((n_el, L_v, L_v, L_c), ("el", "vib1", "vib2", "cav"))
    elif vib_modes == "normal":
        n_com = L_v if com_levels is None else int(com_levels)
        if n_com < 1:
            raise InvalidDimensionError("com_levels must be >= 1")
        layout = SpaceLayout((n_el, L_v, n_com, L_c), ("el", "rd", "com", "cav"))
    else:
        raise ValueError(f"vib_modes must be 'local' or 'normal', got {vib_modes!r}")
    if layout.total > max_dim:
        raise InvalidDimensionError(f"space dimension {layout.total} exceeds limit {max_dim}")

    def lower(dim):
        return hilbert.annihilation(dim) if dim > 1 else np.zeros((1, 1), dtype=complex)

    s1_el, s2_el = _electronic_operators(n_el)
    s1 = hilbert.embed(s1_el, 0, layout)
    s2 = hilbert.embed(s2_el, 0, layout)
    n1 = s1.conj().T @ s1
    n2 = s2.conj().T @ s2
    mode_a = hilbert.embed(lower(layout.dims[1]), 1, layout)
    mode_b = hilbert.embed(lower(layout.dims[2]), 2, layout)
    b = hilbert.embed(hilbert.annihilation(L_c), 3, layout)
    if vib_modes == "local":
        d1, d2 = mode_a, mode_b
        d_rd = (d1 - d2) / math.sqrt(2)
        d_com = (d1 + d2) / math.sqrt(2)
    else:
        d_rd, d_com = mode_a, mode_b
        d1 = (d_com + d_rd) / math.sqrt(2)
        d2 = (d_com - d_rd) / math.sqrt(2)

    def dag(m):
        return m.conj().T

    w = params.omega_vib
    H_el = params.e1 * n1 + params.e2 * n2 - params.V * (dag(s1) @ s2 + dag(s2) @ s1)
    if vib_modes == "local":
        H_vib = w * (dag(d1) @ d1 + dag(d2) @ d2)
        H_el_vib = params.g * (n1 @ (d1 + dag(d1)) + n2 @ (d2 + dag(d2)))
    else:
        # written directly in the normal modes so a truncated COM mode stays exact
        H_vib = w * (dag(d_rd) @ d_rd + dag(d_com) @ d_com)
        gs = params.g / math.sqrt(2)
        H_el_vib = gs * ((n1 + n2) @ (d_com + dag(d_com)) + (n1 - n2) @ (d_rd + dag(d_rd)))
    H_c = params.cavity_frequency * dag(b) @ b
    H_el_c = 0.5 * params.g_c * ((s1 + s2) @ dag(b) + dag(s1 + s2) @ b)
    H = H_el + H_vib + H_el_vib + H_c + H_el_c

    ex = exciton_transform(params)
    el_dim = n_el

    def el_state(coeffs):
        v = np.zeros(el_dim, dtype=complex)
        for idx, c in coeffs.items():
            v[idx] = c
        return v

    x1_el = el_state({SITE1: ex.x1[0], SITE2: ex.x1[1]})
    x2_el = el_state({SITE1: ex.x2[0], SITE2: ex.x2[1]})
    g_el = el_state({G: 1.0})

    def vib(n1_, n2_):
        return np.kron(hilbert.basis(layout.dims[1], n1_), hilbert.basis(layout.dims[2], n2_))

    if vib_modes == "local":
        vac = vib(0, 0)
        one_rd = (vib(1, 0) - vib(0, 1)) / math.sqrt(2)
        one_com = (vib(1, 0) + vib(0, 1)) / math.sqrt(2)
    else:
        vac = vib(0, 0)
        one_rd = vib(1, 0)
        one_com = vib(0, 1) if layout.dims[2] > 1 else None
    cav0 = hilbert.basis(L_c, 0)
    cav1 = hilbert.basis(L_c, 1)

    named = {
        "G,0,0,0": np.kron(np.kron(g_el, vac), cav0),
        "G,0,0,1": np.kron(np.kron(g_el, vac), cav1),
        "X1,0,0,0": np.kron(np.kron(x1_el, vac), cav0),
        "X2,0,0,0": np.kron(np.kron(x2_el, vac), cav0),
        "X2,1rd,0,0": np.kron(np.kron(x2_el, one_rd), cav0),
        "X1,1rd,0,0": np.kron(np.kron(x1_el, one_rd), cav0),
    }
    if one_com is not None:
        named["X2,0,1com,0"] = np.kron(np.kron(x2_el, one_com), cav0)

    x1_proj = np.outer(x1_el, x1_el.conj())
    x2_proj = np.outer(x2_el, x2_el.conj())
    g_proj = np.outer(g_el, g_el.conj())
    ops = {
        "sigma1": s1,
        "sigma2": s2,
        "n1": n1,
        "n2": n2,
        "d1": d1,
        "d2": d2,
        "d_rd": d_rd,
        "d_com": d_com,
        "b": b,
        "P_G": hilbert.embed(g_proj, 0, layout),
        "P_X1": hilbert.embed(x1_proj, 0, layout),
        "P_X2": hilbert.embed(x2_proj, 0, layout),
        "sigma_X1_dag": hilbert.embed(np.outer(x1_el, g_el.conj()), 0, layout),
        "H_el": H_el,
        "H_vib": H_vib,
        "H_el_vib": H_el_vib,
        "H_c": H_c,
        "H_el_c": H_el_c,
    }
    if n_el == 4:
        d_el = np.zeros(4, dtype=complex)
        d_el[DOUBLE] = 1.0
        ops["P_D"] = hilbert.embed(np.outer(d_el, d_el), 0, layout)
    el_quanta = np.array([0, 1, 1, 2][:n_el], dtype=float)
    levels = layout.levels()
    excitation = el_quanta[levels[:, 0]] + levels[:, 3]
    return ModelSystem(
        hamiltonian=H,
        layout=layout,
        params=params,
        named_states=named,
        operators=ops,
        excitation=excitation,
        info={
            "vib_modes": vib_modes,
            "mode_frequencies": (w, w),
            "exciton": ex,
            "electronic_states": {"G": g_el, "X1": x1_el, "X2": x2_el},
        },
    )
