"""Iterative registration loop.

Each iteration matches per-point features of the moving source against
the static reference, extracts soft correspondences, fits a weighted
rigid transform, and moves the source. Three feature backends:

    baseline:    neighborhood descriptors through the full encoder,
                 recomputed from scratch every iteration
    cascade:     full encoder once, then one fused linear+relu step per
                 iteration that reuses the previous features and injects
                 the current point positions
    handcrafted: max-pooled raw descriptors, weight-free (exists so the
                 loop is testable end to end without trained weights)

Inverse temperature beta grows geometrically across iterations, so early
matches stay soft while late ones approach hard assignment. Every stage
is timed and op-counted per iteration for the benchmark harness.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import matching
from .alignment import weighted_procrustes
from .descriptors import DIM7_CASCADE, descriptor_batch, estimate_normals
from .geometry import PointCloud, RigidTransform, compose
from .knn import build_index, knn_batch
from .network import CascadeWeights, mlp_forward, qmlp_forward

MODES = ("baseline", "cascade", "handcrafted")
SINKHORN_POLICIES = ("fixed", "adaptive")


@dataclass(frozen=True)
class RegistrationConfig:
    mode: str = "cascade"
    l_iters: int = 5
    k: int = 64
    d: int = 96
    slack: bool = True
    sinkhorn_policy: str = "adaptive"
    sinkhorn_l: int = 10  # pass count when fixed, cap when adaptive
    alpha0: float | None = None  # None: set from iteration-1 feature distances
    beta0: float = 1.0
    beta_growth: float = 2.0
    normal_k: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.sinkhorn_policy not in SINKHORN_POLICIES:
            raise ValueError(
                f"sinkhorn_policy must be one of {SINKHORN_POLICIES}, "
                f"got {self.sinkhorn_policy!r}"
            )
        if self.l_iters < 1 or self.k < 1 or self.d < 1 or self.sinkhorn_l < 1:
            raise ValueError("l_iters, k, d, sinkhorn_l must all be >= 1")
        if not self.beta0 > 0:
            raise ValueError(f"beta0 must be positive, got {self.beta0}")
        if not self.beta_growth >= 1:
            raise ValueError(f"beta_growth must be >= 1, got {self.beta_growth}")
        if self.alpha0 is not None and not self.alpha0 >= 0:
            raise ValueError(f"alpha0 must be nonnegative, got {self.alpha0}")


@dataclass(frozen=True)
class AnnealingSchedule:
    """Per-iteration (alpha, beta), fixed before the loop starts."""

    params: tuple[matching.AnnealingParams, ...]

    def __post_init__(self):
        params = tuple(self.params)
        betas = [p.beta for p in params]
        if any(b2 < b1 for b1, b2 in zip(betas, betas[1:])):
            raise ValueError("beta must be non-decreasing across iterations")
        object.__setattr__(self, "params", params)

    def __len__(self) -> int:
        return len(self.params)

    def __getitem__(self, i: int) -> matching.AnnealingParams:
        return self.params[i]


@dataclass(frozen=True)
class FeatureSet:
    """Per-point feature rows for one iteration."""

    values: np.ndarray
    iteration: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"features must be (N, D), got shape {v.shape}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class IterationStats:
    index: int
    t_knn_ms: float
    t_feat_ms: float
    t_match_ms: float
    t_sinkhorn_ms: float
    t_procrustes_ms: float
    ops_feat: int
    ops_sinkhorn: int
    sinkhorn_iters: int
    residual: float
    mean_weight: float


@dataclass(frozen=True)
class RegistrationResult:
    transform: RigidTransform
    iterations: tuple[IterationStats, ...]
    t_setup_ms: float
    t_total_ms: float
    schedule: AnnealingSchedule

    @property
    def ops_feat(self) -> int:
        return sum(it.ops_feat for it in self.iterations)

    @property
    def ops_sinkhorn(self) -> int:
        return sum(it.ops_sinkhorn for it in self.iterations)


def make_schedule(cfg: RegistrationConfig) -> AnnealingSchedule:
    """beta_i = beta0 * growth^(i-1), alpha_i = alpha0, for i = 1..L.

    cfg.alpha0 must be resolved; register() fills it from the median
    nearest feature distance of iteration 1 when left as None.
    """
    if cfg.alpha0 is None:
        raise ValueError("alpha0 is unresolved; supply it or let register() derive it")
    return AnnealingSchedule(
        params=tuple(
            matching.AnnealingParams(
                alpha=cfg.alpha0, beta=cfg.beta0 * cfg.beta_growth ** i
            )
            for i in range(cfg.l_iters)
        )
    )


def _extract_full(
    points: np.ndarray, normals: np.ndarray, cfg: RegistrationConfig,
    weights: CascadeWeights | None,
) -> tuple[np.ndarray, float, float, int]:
    """Full extraction at given positions: (features, t_knn, t_feat, macs)."""
    t0 = time.perf_counter()
    index = build_index(points, "auto")
    nbr, _ = knn_batch(index, points, cfg.k)
    t1 = time.perf_counter()
    cloud = PointCloud(points=points, normals=normals)
    descs = descriptor_batch(cloud, nbr, DIM7_CASCADE)
    n = points.shape[0]
    if weights is None:  # handcrafted: pad or cut raw descriptors to D
        pooled = descs.max(axis=1)
        feats = np.zeros((n, cfg.d))
        width = min(cfg.d, pooled.shape[1])
        feats[:, :width] = pooled[:, :width]
        macs = 0
    else:
        # chunked so the (chunk, K, D) activations stay small
        feats = np.empty((n, weights.iter0.out_dim))
        chunk = max(1, 4_000_000 // (cfg.k * weights.iter0.out_dim))
        for lo in range(0, n, chunk):
            hi = min(n, lo + chunk)
            feats[lo:hi] = mlp_forward(weights.iter0, descs[lo:hi]).max(axis=1)
        macs = n * cfg.k * weights.iter0.macs
    t2 = time.perf_counter()
    return feats, t1 - t0, t2 - t1, macs


def extract_features_iter0(
    cloud: PointCloud, cfg: RegistrationConfig, weights: CascadeWeights | None = None
) -> FeatureSet:
    """First-iteration features: k-NN, descriptors, encoder, max-pool.

    Normals are estimated on the fly if the cloud has none. In
    handcrafted mode (weights None) the raw descriptors, zero-padded or
    truncated to D, replace the encoder output.
    """
    if cfg.k > len(cloud):
        raise ValueError(f"k={cfg.k} exceeds cloud size {len(cloud)}")
    if cloud.normals is None:
        cloud = estimate_normals(cloud, min(cfg.normal_k, len(cloud)))
    feats, _, _, _ = _extract_full(cloud.points, cloud.normals, cfg, weights)
    return FeatureSet(values=feats, iteration=0)


def extract_features_cascade(
    prev: FeatureSet, cloud_current: PointCloud, q
) -> FeatureSet:
    """One fused step: features advance one iteration at the current positions."""
    pts = cloud_current.points if isinstance(cloud_current, PointCloud) else np.asarray(cloud_current)
    if pts.shape[0] != prev.values.shape[0]:
        raise ValueError(
            f"feature rows {prev.values.shape[0]} vs points {pts.shape[0]}"
        )
    return FeatureSet(
        values=qmlp_forward(q, prev.values, pts), iteration=prev.iteration + 1
    )


def _require_weights(cfg: RegistrationConfig, weights: CascadeWeights | None):
    if cfg.mode == "handcrafted":
        return None
    if weights is None:
        raise ValueError(f"{cfg.mode} mode requires weights")
    if weights.feature_dim != cfg.d:
        raise ValueError(
            f"weights have feature dim {weights.feature_dim}, config wants {cfg.d}"
        )
    if cfg.mode == "cascade" and weights.iterations < cfg.l_iters:
        raise ValueError(
            f"weights cover {weights.iterations} iterations, need {cfg.l_iters}"
        )
    return weights


def register(
    src: PointCloud,
    ref: PointCloud,
    cfg: RegistrationConfig,
    weights: CascadeWeights | None = None,
) -> RegistrationResult:
    """Align src onto ref; returns the accumulated transform and diagnostics.

    The annealing schedule is fixed up front: when cfg.alpha0 is None it
    is set to 0.1 * (median nearest feature distance)^2 measured on the
    iteration-1 distance matrix, before any normalization happens.
    """
    if len(src) < cfg.k or len(ref) < cfg.k:
        raise ValueError(
            f"both clouds need at least k={cfg.k} points, "
            f"got {len(src)} and {len(ref)}"
        )
    weights = _require_weights(cfg, weights)
    mlp_weights = None if cfg.mode == "handcrafted" else weights

    t_start = time.perf_counter()
    if src.normals is None:
        src = estimate_normals(src, min(cfg.normal_k, len(src)))
    if ref.normals is None:
        ref = estimate_normals(ref, min(cfg.normal_k, len(ref)))
    t_setup = time.perf_counter() - t_start

    cur_pts = src.points.copy()
    cur_normals = src.normals.copy()
    ref_pts = ref.points
    total = RigidTransform.identity()
    schedule: AnnealingSchedule | None = (
        make_schedule(cfg) if cfg.alpha0 is not None else None
    )
    f_src = f_ref = None  # cascade carries these across iterations
    stats = []

    for i in range(1, cfg.l_iters + 1):
        t_knn = t_feat = 0.0
        ops_feat = 0
        if cfg.mode != "cascade" or i == 1:
            fs, tk, tf, macs = _extract_full(cur_pts, cur_normals, cfg, mlp_weights)
            t_knn += tk
            t_feat += tf
            ops_feat += macs
            fr, tk, tf, macs = _extract_full(ref_pts, ref.normals, cfg, mlp_weights)
            t_knn += tk
            t_feat += tf
            ops_feat += macs
            f_src, f_ref = fs, fr
        else:
            q = weights.qmlps[i - 2]
            t0 = time.perf_counter()
            f_src = qmlp_forward(q, f_src, cur_pts)
            f_ref = qmlp_forward(q, f_ref, ref_pts)
            t_feat += time.perf_counter() - t0
            ops_feat += (cur_pts.shape[0] + ref_pts.shape[0]) * q.macs
        if not (np.all(np.isfinite(f_src)) and np.all(np.isfinite(f_ref))):
            raise ValueError(f"non-finite features at iteration {i}")

        t0 = time.perf_counter()
        dists = matching.pairwise_distances(f_src, f_ref)
        if schedule is None:
            alpha0 = 0.1 * float(np.median(dists.min(axis=1))) ** 2
            schedule = make_schedule(replace(cfg, alpha0=alpha0))
        sim = matching.similarity_matrix(dists, schedule[i - 1], cfg.slack)
        t_match = time.perf_counter() - t0

        if cfg.sinkhorn_policy == "adaptive":
            l_sink = matching.adaptive_sinkhorn_iters(i, cfg.sinkhorn_l)
        else:
            l_sink = cfg.sinkhorn_l
        t0 = time.perf_counter()
        sim = matching.sinkhorn_standard(sim, l_sink)
        t_sinkhorn = time.perf_counter() - t0
        ops_sinkhorn = matching.sinkhorn_op_count(sim, l_sink)

        t0 = time.perf_counter()
        targets, w = matching.soft_correspondences(sim, ref)
        t_match += time.perf_counter() - t0
        if not np.all(np.isfinite(w)):
            raise ValueError(f"non-finite correspondence weights at iteration {i}")

        t0 = time.perf_counter()
        step = weighted_procrustes(PointCloud(points=cur_pts), targets, w)
        t_procrustes = time.perf_counter() - t0

        moved = cur_pts @ step.rotation.T + step.translation
        err = moved - targets.points
        wsum = w.sum()
        residual = float(np.sqrt((w * (err * err).sum(axis=1)).sum() / wsum))
        cur_pts = moved
        cur_normals = cur_normals @ step.rotation.T
        total = compose(step, total)

        stats.append(
            IterationStats(
                index=i,
                t_knn_ms=t_knn * 1e3,
                t_feat_ms=t_feat * 1e3,
                t_match_ms=t_match * 1e3,
                t_sinkhorn_ms=t_sinkhorn * 1e3,
                t_procrustes_ms=t_procrustes * 1e3,
                ops_feat=ops_feat,
                ops_sinkhorn=ops_sinkhorn,
                sinkhorn_iters=l_sink,
                residual=residual,
                mean_weight=float(w.mean()),
            )
        )

    return RegistrationResult(
        transform=total,
        iterations=tuple(stats),
        t_setup_ms=t_setup * 1e3,
        t_total_ms=(time.perf_counter() - t_start) * 1e3,
        schedule=schedule,
    )
