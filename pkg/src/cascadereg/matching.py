"""Soft correspondence machinery.

Feature distances become match strengths m_ij = exp(-beta (d_ij^2 - alpha)),
which alternating column/row normalization (Sinkhorn) drives toward a
doubly stochastic assignment. An optional slack row and column absorbs
the mass of points without a partner, so their row sums (and hence
correspondence weights) fall toward zero instead of being forced to 1.

Two Sinkhorn implementations are kept side by side on purpose: the
direct normalization used by the pipeline and a log-domain variant.
They agree to high relative precision on well-scaled inputs, while the
direct form avoids the exp/log traffic per pass; tests and the self
test pit one against the other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PointCloud

SIMILARITY_FLOOR = 1e-300
WEIGHT_FLOOR = 1e-12


@dataclass(frozen=True)
class AnnealingParams:
    """alpha: squared-distance threshold; beta: inverse temperature."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")


@dataclass(frozen=True)
class CorrespondenceMatrix:
    """Nonnegative match strengths, optionally bordered by slack.

    With slack on, values is (N+1, M+1): the last row and column soak up
    unmatched mass and are never normalized as a unit themselves.
    """

    values: np.ndarray
    slack: bool

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"values must be 2-d, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("values must be finite and nonnegative")
        inner = (v.shape[0] - 1, v.shape[1] - 1) if self.slack else v.shape
        if min(inner) < 1:
            raise ValueError(f"no inner entries in shape {v.shape} (slack={self.slack})")
        object.__setattr__(self, "values", v)

    @property
    def inner(self) -> np.ndarray:
        """View of the real (non-slack) block."""
        if self.slack:
            return self.values[:-1, :-1]
        return self.values


def pairwise_distances(fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
    """Euclidean distances between feature rows, via the norm expansion.

    Cross terms use one matrix product; tiny negative squared distances
    from rounding are clamped to zero.
    """
    a = np.asarray(fx, dtype=np.float64)
    b = np.asarray(fy, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"feature dims do not match: {a.shape} vs {b.shape}")
    sq = (
        (a * a).sum(axis=1)[:, None]
        + (b * b).sum(axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.sqrt(sq)


def similarity_matrix(
    d: np.ndarray, p: AnnealingParams, slack: bool = False
) -> CorrespondenceMatrix:
    """m_ij = exp(-beta (d_ij^2 - alpha)); slack border filled with 1."""
    dist = np.asarray(d, dtype=np.float64)
    if dist.ndim != 2 or np.any(dist < 0) or not np.all(np.isfinite(dist)):
        raise ValueError("distance matrix must be 2-d, finite, nonnegative")
    m = np.exp(-p.beta * (dist * dist - p.alpha))
    np.maximum(m, SIMILARITY_FLOOR, out=m)
    if slack:
        bordered = np.ones((m.shape[0] + 1, m.shape[1] + 1))
        bordered[:-1, :-1] = m
        m = bordered
    return CorrespondenceMatrix(values=m, slack=slack)


def sinkhorn_standard(m: CorrespondenceMatrix, l: int) -> CorrespondenceMatrix:
    """l passes of (columns /= column sums, then rows /= row sums).

    Only real columns and rows are normalized; slack entries rescale
    with whichever real line they sit on, and the corner never moves.
    """
    if l < 0:
        raise ValueError(f"iteration count must be >= 0, got {l}")
    v = m.values.copy()
    rows = v.shape[0] - 1 if m.slack else v.shape[0]
    cols = v.shape[1] - 1 if m.slack else v.shape[1]
    for _ in range(l):
        s = v[:, :cols].sum(axis=0)
        if np.any(s == 0.0):
            raise ValueError("column sum vanished during normalization")
        v[:, :cols] /= s
        s = v[:rows, :].sum(axis=1, keepdims=True)
        if np.any(s == 0.0):
            raise ValueError("row sum vanished during normalization")
        v[:rows, :] /= s
    return CorrespondenceMatrix(values=v, slack=m.slack)


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = a.max(axis=axis, keepdims=True)
    return m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))


def sinkhorn_log(logits: np.ndarray, l: int) -> CorrespondenceMatrix:
    """Log-domain Sinkhorn: subtract column then row log-sum-exp, l times.

    Equivalent to sinkhorn_standard on exp(logits) (no slack), traded
    against extra exp/log work per pass for overflow safety.
    """
    if l < 0:
        raise ValueError(f"iteration count must be >= 0, got {l}")
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2 or not np.all(np.isfinite(z)):
        raise ValueError("logits must be a finite 2-d array")
    z = z.copy()
    for _ in range(l):
        z -= _logsumexp(z, axis=0)
        z -= _logsumexp(z, axis=1)
    return CorrespondenceMatrix(values=np.exp(z), slack=False)


def adaptive_sinkhorn_iters(registration_iter: int, cap: int) -> int:
    """Spend as many normalization passes as the registration iteration, capped."""
    if registration_iter < 1:
        raise ValueError(f"registration iteration is 1-based, got {registration_iter}")
    return min(registration_iter, cap)


def sinkhorn_op_count(m: CorrespondenceMatrix, l: int) -> int:
    """Scalar operations per run: each pass reads and rescales every entry twice."""
    return int(4 * l * m.values.size)


def soft_correspondences(
    m: CorrespondenceMatrix, ref: PointCloud
) -> tuple[PointCloud, np.ndarray]:
    """Per-source expected target point and total match weight.

    Row sums over real columns give weights w_i; targets are the
    weight-normalized combinations of ref points. Rows with w_i below
    1e-12 get weight exactly 0 and a zero target (ignored downstream).
    """
    inner = m.inner
    if inner.shape[1] != len(ref):
        raise ValueError(
            f"matrix has {inner.shape[1]} reference columns, cloud has {len(ref)}"
        )
    w = inner.sum(axis=1)
    targets = inner @ ref.points
    ok = w >= WEIGHT_FLOOR
    targets[ok] /= w[ok, None]
    targets[~ok] = 0.0
    w = np.where(ok, w, 0.0)
    return PointCloud(points=targets), w
