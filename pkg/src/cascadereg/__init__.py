"""Fast iterative 3D point-cloud registration.

Soft-assignment registration with deterministic annealing: per-point
features are matched through Sinkhorn-normalized similarities and the
alignment is solved in closed form each iteration. The expensive
neighborhood feature extraction runs once; later iterations advance the
features with a single fused linear step per point, which is what makes
the loop cheap.
"""

from .alignment import Svd3Result, svd3, weighted_procrustes
from .descriptors import (
    DIM7_CASCADE,
    DIM10_BASELINE,
    descriptor_batch,
    estimate_normals,
    local_descriptors,
)
from .geometry import (
    Metrics,
    PointCloud,
    RigidTransform,
    apply_transform,
    chamfer_distance,
    compose,
    euler_zyx,
    inverse,
    metrics,
    rot_x,
    rot_y,
    rot_z,
    sample_random_transform,
)
from .io_synth import (
    SynthConfig,
    WeightFileError,
    load_weights,
    make_base_shape,
    read_cloud,
    read_transform,
    save_weights,
    synth_pair,
    write_cloud,
    write_transform,
)
from .knn import NeighborIndex, build_index, knn, knn_batch
from .matching import (
    AnnealingParams,
    CorrespondenceMatrix,
    adaptive_sinkhorn_iters,
    pairwise_distances,
    similarity_matrix,
    sinkhorn_log,
    sinkhorn_standard,
    soft_correspondences,
)
from .network import (
    CascadeWeights,
    LinearLayer,
    MlpSpec,
    OpCount,
    Qmlp,
    flop_estimate,
    fold_cascade,
    init_random,
    linear_forward,
    mlp_forward,
    pointnet_feature,
    qmlp_forward,
)
from .pipeline import (
    AnnealingSchedule,
    FeatureSet,
    IterationStats,
    RegistrationConfig,
    RegistrationResult,
    extract_features_cascade,
    extract_features_iter0,
    make_schedule,
    register,
)

__version__ = "0.1.0"

__all__ = [
    "AnnealingParams",
    "AnnealingSchedule",
    "CascadeWeights",
    "CorrespondenceMatrix",
    "DIM10_BASELINE",
    "DIM7_CASCADE",
    "FeatureSet",
    "IterationStats",
    "LinearLayer",
    "Metrics",
    "MlpSpec",
    "NeighborIndex",
    "OpCount",
    "PointCloud",
    "Qmlp",
    "RegistrationConfig",
    "RegistrationResult",
    "RigidTransform",
    "Svd3Result",
    "SynthConfig",
    "WeightFileError",
    "adaptive_sinkhorn_iters",
    "apply_transform",
    "build_index",
    "chamfer_distance",
    "compose",
    "descriptor_batch",
    "estimate_normals",
    "euler_zyx",
    "extract_features_cascade",
    "extract_features_iter0",
    "flop_estimate",
    "fold_cascade",
    "init_random",
    "inverse",
    "knn",
    "knn_batch",
    "linear_forward",
    "load_weights",
    "local_descriptors",
    "make_base_shape",
    "make_schedule",
    "metrics",
    "mlp_forward",
    "pairwise_distances",
    "pointnet_feature",
    "qmlp_forward",
    "read_cloud",
    "read_transform",
    "register",
    "rot_x",
    "rot_y",
    "rot_z",
    "sample_random_transform",
    "save_weights",
    "similarity_matrix",
    "sinkhorn_log",
    "sinkhorn_standard",
    "soft_correspondences",
    "svd3",
    "synth_pair",
    "weighted_procrustes",
    "write_cloud",
    "write_transform",
]
