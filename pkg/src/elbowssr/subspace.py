"""Shape matrices, shape subspaces and canonical-angle similarity.

A shape subspace is the column space of a centered K x 3 landmark matrix.
It does not change under invertible affine maps of the points, so
comparing subspaces compares configurations up to translation, rotation,
scaling and shear.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateShapeError,
    DimensionMismatchError,
    InvalidConfigurationError,
    InvalidInputError,
)

DEFAULT_RANK_TOL = 1e-8
MAX_DIM = 3


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ShapeMatrix:
    """K x 3 landmark coordinates; row i is landmark i."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != 3:
            raise InvalidInputError(f"shape matrix must be K x 3, got {rows.shape}")
        if rows.shape[0] < 3:
            raise InvalidInputError(f"shape matrix needs K >= 3 points, got {rows.shape[0]}")
        if not np.all(np.isfinite(rows)):
            raise InvalidInputError("shape matrix has non-finite entries")
        object.__setattr__(self, "rows", _frozen(rows))

    @classmethod
    def from_points(cls, points) -> "ShapeMatrix":
        """Build from (K, 2) planar points (z = 0) or (K, 3) points."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 2 and pts.shape[1] == 2:
            pts = np.column_stack([pts, np.zeros(len(pts))])
        return cls(pts)

    @property
    def K(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True)
class SubspaceBasis:
    vectors: np.ndarray  # (K, N), orthonormal columns
    singular_values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2 or not 1 <= vectors.shape[1] <= MAX_DIM:
            raise InvalidInputError(f"basis must be K x N with 1 <= N <= 3, got {vectors.shape}")
        sv = np.asarray(self.singular_values, dtype=np.float64)
        if sv.shape != (vectors.shape[1],):
            raise InvalidInputError("one singular value per basis vector required")
        object.__setattr__(self, "vectors", _frozen(vectors))
        object.__setattr__(self, "singular_values", _frozen(sv))

    @property
    def K(self) -> int:
        return self.vectors.shape[0]

    @property
    def effective_dim(self) -> int:
        return self.vectors.shape[1]

    def projection(self) -> np.ndarray:
        return self.vectors @ self.vectors.T


def center_shape_matrix(m: ShapeMatrix) -> ShapeMatrix:
    rows = m.rows - m.rows.mean(axis=0)
    # ShapeMatrix is immutable; bypass validation for the trusted result
    out = object.__new__(ShapeMatrix)
    object.__setattr__(out, "rows", _frozen(rows))
    return out


def shape_subspace_basis(m: ShapeMatrix, rank_tolerance: float = DEFAULT_RANK_TOL) -> SubspaceBasis:
    """Left singular vectors of the centered matrix, truncated at numerical rank.

    Vectors whose singular value is at most ``rank_tolerance * sigma_max`` are
    dropped, so planar inputs (z = 0) give at most two vectors.
    """
    if not rank_tolerance > 0:
        raise InvalidConfigurationError("rank_tolerance must be > 0")
    xc = center_shape_matrix(m).rows
    u, s, _ = np.linalg.svd(xc, full_matrices=False)
    if s[0] == 0.0:
        raise DegenerateShapeError("all points coincide; the shape subspace is empty")
    keep = int(np.count_nonzero(s > rank_tolerance * s[0]))
    keep = min(keep, MAX_DIM)
    return SubspaceBasis(u[:, :keep], s[:keep])


def _check_compatible(a: SubspaceBasis, b: SubspaceBasis):
    if a.K != b.K:
        raise DimensionMismatchError(f"point counts differ: {a.K} vs {b.K}")
    if a.effective_dim != b.effective_dim:
        raise DimensionMismatchError(
            f"subspace dimensions differ: {a.effective_dim} vs {b.effective_dim}"
        )


def subspace_similarity(a: SubspaceBasis, b: SubspaceBasis) -> float:
    """Mean squared cosine of the canonical angles between two subspaces.

    Evaluated as ``||A^T B||_F^2 / N``, which equals ``trace(P_a P_b) / N``
    for the projection matrices of the two subspaces.
    """
    _check_compatible(a, b)
    g = a.vectors.T @ b.vectors
    return float(np.sum(g * g)) / a.effective_dim


def canonical_angles(a: SubspaceBasis, b: SubspaceBasis) -> np.ndarray:
    """Canonical angles in radians, ascending."""
    _check_compatible(a, b)
    s = np.linalg.svd(a.vectors.T @ b.vectors, compute_uv=False)
    return np.arccos(np.clip(s, 0.0, 1.0))


def mean_similarity(test: SubspaceBasis, bank) -> float:
    bank = list(bank)
    if not bank:
        raise InvalidConfigurationError("reference bank is empty")
    return sum(subspace_similarity(test, b) for b in bank) / len(bank)
