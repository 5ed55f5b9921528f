"""Rigid 3D transforms, point clouds, and registration error metrics.

Conventions used throughout the package:

* points are float64 arrays of shape ``(3,)``, clouds are ``(N, 3)``;
* Euler angles follow the intrinsic Z-Y-X convention,
  ``R = Rz(a) @ Ry(b) @ Rx(c)``, so seeded transforms reproduce
  bit-identically everywhere;
* all arithmetic is 64-bit IEEE floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ORTHONORMAL_TOL = 1e-9
NORMAL_UNIT_TOL = 1e-6


def _frozen_array(a, shape, name: str) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PointCloud:
    """Ordered set of 3D points with optional unit normals.

    Arrays are copied and marked read-only: a cloud never changes after
    construction, which makes sharing across threads safe.
    """

    points: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError(f"points must have shape (N, 3) with N >= 1, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain non-finite values")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = _frozen_array(self.normals, pts.shape, "normals")
            lengths = np.linalg.norm(nrm, axis=1)
            if np.any(np.abs(lengths - 1.0) > NORMAL_UNIT_TOL):
                worst = int(np.argmax(np.abs(lengths - 1.0)))
                raise ValueError(f"normal {worst} has norm {lengths[worst]:.9f}, expected 1")
            object.__setattr__(self, "normals", nrm)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def has_normals(self) -> bool:
        return self.normals is not None


@dataclass(frozen=True)
class RigidTransform:
    """Rotation (proper orthogonal 3x3) plus translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _frozen_array(self.rotation, (3, 3), "rotation")
        t = _frozen_array(self.translation, (3,), "translation")
        defect = np.abs(r.T @ r - np.eye(3)).max()
        if defect > ORTHONORMAL_TOL:
            raise ValueError(f"rotation is not orthonormal (defect {defect:.3e})")
        det = np.linalg.det(r)
        if abs(det - 1.0) > ORTHONORMAL_TOL:
            raise ValueError(f"rotation must have det +1, got {det:.12f}")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))


@dataclass(frozen=True)
class Metrics:
    """Registration errors: rotation (degrees), translation, chamfer."""

    re_deg: float
    te: float
    cd: float


def rot_x(deg: float) -> np.ndarray:
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(deg: float) -> np.ndarray:
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(deg: float) -> np.ndarray:
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_zyx(z_deg: float, y_deg: float, x_deg: float) -> np.ndarray:
    """Intrinsic Z-Y-X rotation matrix."""
    return rot_z(z_deg) @ rot_y(y_deg) @ rot_x(x_deg)


def apply_transform(transform: RigidTransform, cloud: PointCloud) -> PointCloud:
    """Map every point p to R p + t; normals rotate, order is preserved."""
    r, t = transform.rotation, transform.translation
    pts = cloud.points @ r.T + t
    normals = None if cloud.normals is None else cloud.normals @ r.T
    return PointCloud(pts, normals)


def compose(second: RigidTransform, first: RigidTransform) -> RigidTransform:
    """Transform equivalent to applying `first`, then `second`."""
    r = second.rotation @ first.rotation
    t = second.rotation @ first.translation + second.translation
    return RigidTransform(r, t)


def inverse(transform: RigidTransform) -> RigidTransform:
    rt = transform.rotation.T
    return RigidTransform(rt, -rt @ transform.translation)


def sample_random_transform(max_rot_deg: float, max_trans: float, seed: int) -> RigidTransform:
    """Random rigid transform: Euler angles uniform in [0, max_rot_deg],
    translation components uniform in [-max_trans, max_trans].
    """
    if not 0.0 <= max_rot_deg <= 180.0:
        raise ValueError(f"max_rot_deg must be in [0, 180], got {max_rot_deg}")
    if max_trans < 0.0:
        raise ValueError(f"max_trans must be >= 0, got {max_trans}")
    rng = np.random.default_rng(seed)
    z, y, x = rng.uniform(0.0, max_rot_deg, size=3)
    t = rng.uniform(-max_trans, max_trans, size=3)
    return RigidTransform(euler_zyx(z, y, x), t)


def _min_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-point squared distance from each row of `a` to its nearest row of `b`."""
    out = np.empty(a.shape[0])
    # block to bound the (block, M) temporary
    block = max(1, int(4_000_000 // max(1, b.shape[0])))
    bb = (b * b).sum(axis=1)
    for start in range(0, a.shape[0], block):
        chunk = a[start:start + block]
        sq = (chunk * chunk).sum(axis=1)[:, None] + bb[None, :] - 2.0 * chunk @ b.T
        np.maximum(sq, 0.0, out=sq)
        out[start:start + block] = sq.min(axis=1)
    return out


def chamfer_distance(a: PointCloud, b: PointCloud) -> float:
    """Symmetric chamfer: mean squared nearest-neighbor distance, averaged
    over both directions."""
    pa, pb = a.points, b.points
    fwd = _min_sq_dists(pa, pb).mean()
    bwd = _min_sq_dists(pb, pa).mean()
    return 0.5 * (fwd + bwd)


def metrics(
    t_est: RigidTransform,
    t_gt: RigidTransform,
    src: PointCloud,
    ref: PointCloud | None = None,
) -> Metrics:
    """Errors of an estimated transform against ground truth.

    Rotation error is the angle of the relative rotation R_est R_gt^T.
    Chamfer compares the two transforms applied to the same source cloud,
    so `ref` is accepted only for call-site symmetry and not used.
    """
    rel = t_est.rotation @ t_gt.rotation.T
    cos_angle = np.clip(0.5 * (np.trace(rel) - 1.0), -1.0, 1.0)
    re_deg = math.degrees(math.acos(cos_angle))
    te = float(np.linalg.norm(t_est.translation - t_gt.translation))
    cd = chamfer_distance(apply_transform(t_est, src), apply_transform(t_gt, src))
    return Metrics(re_deg=re_deg, te=te, cd=float(cd))
