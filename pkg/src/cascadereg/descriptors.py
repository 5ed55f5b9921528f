"""Oriented point-pair descriptors and normal estimation.

Two layouts share a common 4-entry angle block (three pairwise angles
and the neighbor distance):

    dim10_baseline: angles | absolute neighbor position | relative offset
    dim7_cascade:   angles | relative offset

Angles use atan2(|a x b|, a.b), so they land in [0, pi] without
normalizing the inputs; a zero offset contributes zero angles by
convention instead of NaN.
"""

from __future__ import annotations

import numpy as np

from .geometry import PointCloud
from .knn import build_index, knn_batch

DIM10_BASELINE = "dim10_baseline"
DIM7_CASCADE = "dim7_cascade"

VARIANT_DIMS = {DIM10_BASELINE: 10, DIM7_CASCADE: 7}


def estimate_normals(cloud: PointCloud, k: int = 16) -> PointCloud:
    """Per-point unit normals from the covariance of each k-neighborhood.

    The normal is the eigenvector of the smallest covariance eigenvalue,
    flipped to point away from the global centroid (outward for convex
    shapes). Requires N >= k >= 3.
    """
    pts = cloud.points
    n = pts.shape[0]
    if not 3 <= k <= n:
        raise ValueError(f"need N >= k >= 3, got N={n}, k={k}")

    idx = build_index(pts, "auto")
    nbr, _ = knn_batch(idx, pts, k)
    hoods = pts[nbr]  # (N, k, 3)
    centered = hoods - hoods.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k

    spread = np.abs(cov).reshape(n, 9).max(axis=1)
    degenerate = np.flatnonzero(spread <= 0.0)
    if degenerate.size:
        raise ValueError(
            f"degenerate neighborhood at point index {int(degenerate[0])}: "
            "all neighbors identical"
        )

    # eigh returns ascending eigenvalues; column 0 is the normal direction
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    flip = (normals * (pts.mean(axis=0) - pts)).sum(axis=1) > 0
    normals[flip] *= -1.0
    return PointCloud(points=pts, normals=normals)


def _angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Angle between the last-axis vectors of a and b, in [0, pi]."""
    cross = np.cross(a, b)
    return np.arctan2(
        np.sqrt((cross * cross).sum(axis=-1)), (a * b).sum(axis=-1)
    )


def _pair_descriptors(x, n_x, y, n_y, variant: str) -> np.ndarray:
    """Descriptor rows for neighbors y of a base point x (leading dims free)."""
    d = y - x
    dist = np.sqrt((d * d).sum(axis=-1))
    a_xd = _angle(np.broadcast_to(n_x, d.shape), d)
    a_yd = _angle(n_y, d)
    a_xy = _angle(np.broadcast_to(n_x, n_y.shape), n_y)
    zero = dist == 0.0
    a_xd[zero] = 0.0
    a_yd[zero] = 0.0
    angles = np.stack([a_xd, a_yd, a_xy, dist], axis=-1)
    if variant == DIM7_CASCADE:
        return np.concatenate([angles, d], axis=-1)
    if variant == DIM10_BASELINE:
        return np.concatenate([angles, y, d], axis=-1)
    raise ValueError(f"unknown descriptor variant {variant!r}")


def descriptor_batch(
    cloud: PointCloud, neighbor_ids: np.ndarray, variant: str
) -> np.ndarray:
    """Descriptors for every point at once.

    Row i of neighbor_ids (shape (N, K)) lists the neighbors of point i;
    returns (N, K, dim).
    """
    if cloud.normals is None:
        raise ValueError("descriptors require normals; run estimate_normals first")
    nbr = np.asarray(neighbor_ids)
    if nbr.ndim != 2 or nbr.shape[0] != len(cloud):
        raise ValueError(f"neighbor_ids must be (N, K), got shape {nbr.shape}")
    return _pair_descriptors(
        cloud.points[:, None, :],
        cloud.normals[:, None, :],
        cloud.points[nbr],
        cloud.normals[nbr],
        variant,
    )


def local_descriptors(
    cloud: PointCloud, i: int, neighbor_ids, variant: str
) -> np.ndarray:
    """Descriptors of point i against each listed neighbor, as (K, dim)."""
    if cloud.normals is None:
        raise ValueError("descriptors require normals; run estimate_normals first")
    ids = np.asarray(neighbor_ids, dtype=np.int64).reshape(-1)
    if ids.size < 1:
        raise ValueError("neighbor list must not be empty")
    return _pair_descriptors(
        cloud.points[i],
        cloud.normals[i],
        cloud.points[ids],
        cloud.normals[ids],
        variant,
    )


def self_descriptors(cloud: PointCloud, k: int, variant: str) -> np.ndarray:
    """(N, K, dim) descriptors over each point's own k-neighborhood."""
    if k > len(cloud):
        raise ValueError(f"k={k} exceeds cloud size {len(cloud)}")
    idx = build_index(cloud.points, "auto")
    nbr, _ = knn_batch(idx, cloud.points, k)
    return descriptor_batch(cloud, nbr, variant)
