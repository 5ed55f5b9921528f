"""Weighted rigid alignment via a fixed-size 3x3 SVD.

The cross-covariance of weighted correspondences is only ever 3x3, so a
one-sided Jacobi sweep beats calling into a general decomposition: a
handful of plane rotations orthogonalizes the columns, the column norms
are the singular values, and no workspace or pivoting logic is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PointCloud, RigidTransform

JACOBI_MAX_SWEEPS = 30
JACOBI_TOL = 1e-12
DEGENERACY_RATIO = 1e-12
# singular values this far below the largest get a rebuilt basis vector
_NULL_RATIO = 1e-13


@dataclass(frozen=True)
class Svd3Result:
    """A = u @ diag(s) @ v.T with s descending and u, v orthogonal."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


def _orthogonal_unit(u0: np.ndarray) -> np.ndarray:
    """A unit vector orthogonal to u0 (which need not be normalized)."""
    basis = np.eye(3)[np.argmin(np.abs(u0))]
    v = basis - u0 * (basis @ u0)
    return v / np.linalg.norm(v)


def svd3(a) -> Svd3Result:
    """Singular value decomposition of a 3x3 matrix by one-sided Jacobi.

    Plane rotations applied on the right orthogonalize the columns of the
    working copy M, accumulating into V so that M = A V throughout; then
    A = (M / ||cols||) diag(||cols||) V^T. Rank-deficient inputs get their
    missing U columns rebuilt from cross products.
    """
    m = np.array(a, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")

    v = np.eye(3)
    for _ in range(JACOBI_MAX_SWEEPS):
        converged = True
        for p, q in ((0, 1), (0, 2), (1, 2)):
            cp = m[:, p]
            cq = m[:, q]
            app = cp @ cp
            aqq = cq @ cq
            apq = cp @ cq
            if abs(apq) <= JACOBI_TOL * np.sqrt(app * aqq):
                continue
            converged = False
            theta = 0.5 * np.arctan2(2.0 * apq, app - aqq)
            c = np.cos(theta)
            s = np.sin(theta)
            m[:, p], m[:, q] = c * cp + s * cq, -s * cp + c * cq
            vp = v[:, p].copy()
            vq = v[:, q].copy()
            v[:, p] = c * vp + s * vq
            v[:, q] = -s * vp + c * vq
        if converged:
            break

    sv = np.sqrt((m * m).sum(axis=0))
    order = np.argsort(-sv, kind="stable")
    sv = sv[order]
    m = m[:, order]
    v = v[:, order]

    u = np.empty((3, 3))
    cutoff = sv[0] * _NULL_RATIO
    for i in range(3):
        if sv[i] > cutoff and sv[i] > 0.0:
            u[:, i] = m[:, i] / sv[i]
        elif i == 0:
            u[:] = np.eye(3)
            break
        elif i == 1:
            u[:, 1] = _orthogonal_unit(u[:, 0])
        else:
            u[:, 2] = np.cross(u[:, 0], u[:, 1])
    return Svd3Result(u=u, s=sv, v=v)


def weighted_procrustes(src: PointCloud, targets: PointCloud, w) -> RigidTransform:
    """Best-fit rotation and translation minimizing sum w_i |R x_i + t - y_i|^2.

    Zero-weight pairs are ignored entirely; the reflection case of the
    unconstrained optimum is folded back to a proper rotation by flipping
    the smallest singular direction.
    """
    x = src.points
    y = targets.points
    weights = np.asarray(w, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"cloud sizes differ: {x.shape} vs {y.shape}")
    if weights.shape != (x.shape[0],):
        raise ValueError(f"need one weight per point, got shape {weights.shape}")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ValueError("weights must be finite and nonnegative")
    total = weights.sum()
    if total <= 0:
        raise ValueError("weight sum is zero; no usable correspondences")
    if int((weights > 0).sum()) < 3:
        raise ValueError("fewer than 3 positively weighted correspondences")

    xbar = weights @ x / total
    ybar = weights @ y / total
    h = ((weights[:, None] * (x - xbar)).T @ (y - ybar)) / total

    dec = svd3(h)
    if dec.s[0] <= 0 or dec.s[2] < DEGENERACY_RATIO * dec.s[0]:
        raise ValueError(
            "degenerate correspondence geometry (collinear or rank-deficient "
            "weighted support); rotation is not determined"
        )
    det = np.linalg.det(dec.v @ dec.u.T)
    r = (dec.v * np.array([1.0, 1.0, det])) @ dec.u.T
    t = ybar - r @ xbar
    return RigidTransform(rotation=r, translation=t)
