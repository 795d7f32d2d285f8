"""Dense linear-algebra kernels and subspace geometry.

Matrices are plain ``numpy.ndarray`` values.  A :class:`Subspace` wraps a
column-orthonormal basis; everything downstream compares subspaces through
their projectors, so the sign of individual basis vectors never matters
beyond making results reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateInputError, InvalidInputError

ORTHONORMAL_TOL = 1e-10
SYMMETRY_TOL = 1e-8


def _as_finite_matrix(m, name="matrix") -> np.ndarray:
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


def _sign_flips(vecs: np.ndarray) -> np.ndarray:
    """+-1 per column making each column's largest-magnitude coordinate positive."""
    if vecs.size == 0:
        return np.ones(vecs.shape[1])
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    return vecs * _sign_flips(vecs)


@dataclass(frozen=True, eq=False)
class Subspace:
    """A ``dim``-dimensional subspace of R^ambient_dim given by an orthonormal basis."""

    basis: np.ndarray

    def __post_init__(self):
        b = _as_finite_matrix(self.basis, "basis")
        if b.shape[1] > b.shape[0]:
            raise InvalidInputError(f"basis has more columns than rows: {b.shape}")
        gram = b.T @ b
        if b.shape[1] and np.max(np.abs(gram - np.eye(b.shape[1]))) > ORTHONORMAL_TOL:
            raise InvalidInputError("basis is not column-orthonormal")
        b = b.copy()
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def __repr__(self):
        return f"Subspace(ambient_dim={self.ambient_dim}, dim={self.dim})"


class SvdResult(NamedTuple):
    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.singular_values) @ self.v.T


def thin_svd(m, k: int) -> SvdResult:
    """Top-``k`` singular triplets of ``m``.

    Left singular vectors follow the largest-coordinate-positive sign rule and
    the right vectors are flipped to match, so ``u @ diag(s) @ v.T`` is unchanged.
    """
    m = _as_finite_matrix(m)
    if not 1 <= k <= min(m.shape):
        raise InvalidInputError(f"k={k} outside [1, {min(m.shape)}]")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    u, s, v = u[:, :k], s[:k], vt[:k].T
    flips = _sign_flips(u)
    return SvdResult(u * flips, s.copy(), v * flips)


def top_eigvecs_sym(m, k: int) -> Subspace:
    """Span of the eigenvectors of the ``k`` largest eigenvalues of a symmetric matrix."""
    m = _as_finite_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"matrix must be square, got {m.shape}")
    if np.max(np.abs(m - m.T), initial=0.0) > SYMMETRY_TOL:
        raise InvalidInputError("matrix is not symmetric")
    if not 0 <= k <= m.shape[0]:
        raise InvalidInputError(f"k={k} outside [0, {m.shape[0]}]")
    _, vecs = np.linalg.eigh(0.5 * (m + m.T))
    top = vecs[:, ::-1][:, :k]
    return Subspace(_fix_signs(top))


def sym_eigvals_desc(m) -> np.ndarray:
    m = _as_finite_matrix(m)
    return np.linalg.eigvalsh(0.5 * (m + m.T))[::-1]


def alignment(p1, p2) -> float:
    """``trace(p1 @ p2)`` for two projectors; the sum of squared cosines of their principal angles."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if p1.shape != p2.shape or p1.ndim != 2 or p1.shape[0] != p1.shape[1]:
        raise InvalidInputError(f"projector shapes differ: {p1.shape} vs {p2.shape}")
    # trace(AB) = sum(A * B^T); projectors are symmetric
    return float(np.sum(p1 * p2.T))


def subspace_alignment(s1: Subspace, s2: Subspace) -> float:
    """Same quantity as :func:`alignment`, computed from bases in O(p * d1 * d2)."""
    if s1.ambient_dim != s2.ambient_dim:
        raise InvalidInputError(
            f"ambient dimensions differ: {s1.ambient_dim} vs {s2.ambient_dim}"
        )
    c = s1.basis.T @ s2.basis
    return float(np.sum(c * c))


def orthonormalize(m, rtol: float = 1e-12) -> Subspace:
    """Orthonormal basis for the column span of ``m`` (QR with positive R diagonal)."""
    m = _as_finite_matrix(m)
    if m.shape[1] > m.shape[0]:
        raise DegenerateInputError(f"{m.shape[1]} columns cannot be independent in R^{m.shape[0]}")
    if m.shape[1] == 0:
        return Subspace(np.zeros((m.shape[0], 0)))
    q, r = np.linalg.qr(m)
    diag = np.abs(np.diag(r))
    if diag.min() <= rtol * max(diag.max(), np.finfo(float).tiny):
        raise DegenerateInputError("columns are linearly dependent")
    signs = np.sign(np.diag(r))
    q = q * signs
    # one re-orthogonalization pass keeps basis^T basis within 1e-10 for ill-conditioned input
    q, r2 = np.linalg.qr(q)
    q = q * np.sign(np.diag(r2))
    return Subspace(q)
