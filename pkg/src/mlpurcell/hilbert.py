"""Composite Hilbert spaces, ladder operators and complex eigendecomposition.

Operators are plain dense ``numpy`` arrays (complex128). The tensor layout of
a composite space lives in :class:`SpaceLayout`; the model builders keep the
layout next to the operators they produce.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.linalg

from .errors import InvalidDimensionError, NumericalError
from .units import kT

HERMITIAN_TOL = 1e-12
EIG_RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class SpaceLayout:
    """Ordered subsystem dimensions of a tensor-product space.

    Parameters
    ----------
    dims : tuple of int
        Subsystem dimensions, slowest-varying index first.
    labels : tuple of str
        Unique subsystem names, same length as ``dims``.
    """

    dims: tuple
    labels: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        labels = tuple(str(s) for s in self.labels)
        if len(dims) != len(labels):
            raise InvalidDimensionError(f"{len(dims)} dims but {len(labels)} labels")
        if any(d < 1 for d in dims):
            raise InvalidDimensionError(f"dimensions must be >= 1, got {dims}")
        if len(set(labels)) != len(labels):
            raise InvalidDimensionError(f"labels must be unique, got {labels}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)

    @property
    def total(self) -> int:
        return int(np.prod(self.dims))

    def slot(self, label) -> int:
        """Index of a subsystem given its label (ints pass through)."""
        if isinstance(label, (int, np.integer)):
            if not 0 <= label < len(self.dims):
                raise InvalidDimensionError(f"slot {label} out of range for {len(self.dims)} subsystems")
            return int(label)
        try:
            return self.labels.index(label)
        except ValueError:
            raise InvalidDimensionError(f"unknown subsystem {label!r}; have {self.labels}") from None

    def index(self, occupations) -> int:
        """Flat basis index of a product state given per-subsystem levels."""
        return int(np.ravel_multi_index(tuple(occupations), self.dims))

    def levels(self) -> np.ndarray:
        """Array of shape (total, n_subsystems) with the level of each subsystem per basis state."""
        grids = np.indices(self.dims).reshape(len(self.dims), -1)
        return grids.T.copy()


@dataclass(frozen=True)
class EigenDecomposition:
    """Right eigenpairs; ``vectors[:, k]`` belongs to ``values[k]``."""

    values: np.ndarray
    vectors: np.ndarray

    def __len__(self):
        return len(self.values)


def annihilation(dim):
    """Truncated bosonic lowering operator on ``dim`` levels."""
    if dim < 2:
        raise InvalidDimensionError(f"ladder operator needs dim >= 2, got {dim}")
    return np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(complex)


def number(dim):
    return np.diag(np.arange(dim)).astype(complex)


def basis(dim, n):
    v = np.zeros(dim, dtype=complex)
    v[n] = 1.0
    return v


def kron(*ops):
    return reduce(np.kron, ops)


def product_state(layout, vectors):
    """Tensor product of per-subsystem state vectors (one per slot)."""
    if len(vectors) != len(layout.dims):
        raise InvalidDimensionError(f"need {len(layout.dims)} factors, got {len(vectors)}")
    for d, v in zip(layout.dims, vectors):
        if len(v) != d:
            raise InvalidDimensionError(f"factor of length {len(v)} in slot of dimension {d}")
    return kron(*[np.asarray(v, dtype=complex) for v in vectors])


def embed(local, slot, layout):
    """Place ``local`` into subsystem ``slot`` of ``layout`` (identity elsewhere)."""
    k = layout.slot(slot)
    local = np.asarray(local, dtype=complex)
    if local.shape != (layout.dims[k], layout.dims[k]):
        raise InvalidDimensionError(
            f"operator of shape {local.shape} does not fit slot {k} of dimension {layout.dims[k]}"
        )
    left = int(np.prod(layout.dims[:k]))
    right = int(np.prod(layout.dims[k + 1:]))
    out = np.kron(np.eye(left), local)
    return np.kron(out, np.eye(right))


def is_hermitian(m, tol=HERMITIAN_TOL):
    m = np.asarray(m)
    return m.shape[0] == m.shape[1] and float(np.max(np.abs(m - m.conj().T), initial=0.0)) < tol


def fix_phase(vectors):
    """Make the largest-magnitude component of each column real and positive."""
    vectors = np.array(vectors, dtype=complex, copy=True)
    if vectors.ndim == 1:
        return fix_phase(vectors[:, None])[:, 0]
    idx = np.argmax(np.abs(vectors), axis=0)
    pivots = vectors[idx, np.arange(vectors.shape[1])]
    phases = np.ones_like(pivots)
    nz = np.abs(pivots) > 0
    phases[nz] = np.abs(pivots[nz]) / pivots[nz]
    return vectors * phases


def eig_complex(m, tol=EIG_RESIDUAL_TOL):
    """General (non-Hermitian) eigendecomposition with a residual check.

    Eigenvalues come back sorted by real part (then imaginary part); vectors
    are unit-normalised with the phase convention of :func:`fix_phase`.

    Raises
    ------
    NumericalError
        If any pair violates ``|M v - l v| <= tol * |M|_F`` or the input is
        not finite.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidDimensionError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericalError("matrix has non-finite entries")
    try:
        values, vectors = scipy.linalg.eig(m, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver did not converge: {exc}") from exc
    vectors = vectors / np.linalg.norm(vectors, axis=0)
    vectors = fix_phase(vectors)
    order = np.lexsort((values.imag, values.real))
    values, vectors = values[order], vectors[:, order]
    scale = max(np.linalg.norm(m), np.finfo(float).tiny)
    residual = np.linalg.norm(m @ vectors - vectors * values, axis=0).max(initial=0.0) / scale
    if not residual <= tol:
        raise NumericalError(f"eigen-residual {residual:.3e} exceeds {tol:.1e}", residual=residual)
    return EigenDecomposition(values, vectors)


def thermal_state(dim, freq, temperature):
    """Boltzmann density matrix of a truncated harmonic mode."""
    if freq <= 0:
        raise ValueError(f"mode frequency must be positive, got {freq}")
    if temperature < 0:
        raise ValueError(f"temperature must be non-negative, got {temperature}")
    if dim < 1:
        raise InvalidDimensionError(f"dim must be >= 1, got {dim}")
    if temperature == 0:
        p = np.zeros(dim)
        p[0] = 1.0
    else:
        p = np.exp(-np.arange(dim) * freq / kT(temperature))
        p /= p.sum()
    return np.diag(p).astype(complex)
