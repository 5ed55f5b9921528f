"""Inference-only neural blocks.

The registration features come from two paths that are algebraically
interchangeable for nonnegative hidden vectors:

    full:    descriptors -> small MLP -> coordinatewise max (per point)
    cascade: f_next = relu(A' f_prev + B x + bias), with A' = A D folded
             from the stacked matrix C = [A | B] of the deep path

`fold_cascade` performs that folding; `flop_estimate` itemizes the
multiply-accumulate counts of both paths so measured counters can be
checked against the analytic claim that the cascade replaces a per-step
factor of K (neighbors) with a one-time cost plus L-1 cheap steps.

Optional per-layer group normalization exists for experiments but
defaults off: the folding identity is exact only without it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_FEATURE_DIM = 96
DEFAULT_DESCRIPTOR_DIM = 7
POINT_DIM = 3
_GROUP_NORM_EPS = 1e-5


def _check_finite(name: str, a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class LinearLayer:
    """Dense layer y = weight @ v + bias; weight is (out, in)."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = _check_finite("weight", self.weight)
        b = _check_finite("bias", self.bias)
        if w.ndim != 2:
            raise ValueError(f"weight must be 2-d, got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise ValueError(
                f"bias shape {b.shape} does not match weight rows {w.shape[0]}"
            )
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def macs(self) -> int:
        """Multiply-accumulates per input vector (bias adds excluded)."""
        return self.weight.shape[0] * self.weight.shape[1]


def _group_norm(x: np.ndarray, groups: int) -> np.ndarray:
    dim = x.shape[-1]
    if dim % groups:
        raise ValueError(f"feature dim {dim} not divisible into {groups} groups")
    g = x.reshape(*x.shape[:-1], groups, dim // groups)
    mean = g.mean(axis=-1, keepdims=True)
    var = g.var(axis=-1, keepdims=True)
    return ((g - mean) / np.sqrt(var + _GROUP_NORM_EPS)).reshape(x.shape)


def linear_forward(layer: LinearLayer, v: np.ndarray, relu: bool = False) -> np.ndarray:
    """weight @ v + bias (batched over leading axes), optionally clamped at 0."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != layer.in_dim:
        raise ValueError(
            f"input dim {v.shape[-1]} does not match layer in_dim {layer.in_dim}"
        )
    out = v @ layer.weight.T + layer.bias
    if relu:
        np.maximum(out, 0.0, out=out)
    return out


@dataclass(frozen=True)
class MlpSpec:
    """Chain of LinearLayers with per-layer ReLU flags.

    norm="group" inserts group normalization between each linear map and
    its ReLU; default "none" keeps the chain a pure affine+clamp stack.
    """

    layers: tuple[LinearLayer, ...]
    relu: tuple[bool, ...]
    norm: str = "none"
    groups: int = 8

    def __post_init__(self):
        layers = tuple(self.layers)
        relu = tuple(bool(r) for r in self.relu)
        if not layers:
            raise ValueError("MlpSpec needs at least one layer")
        if len(relu) != len(layers):
            raise ValueError("one relu flag per layer required")
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(
                    f"layer dims do not chain: {a.out_dim} -> {b.in_dim}"
                )
        if self.norm not in ("none", "group"):
            raise ValueError(f"unknown norm {self.norm!r}")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "relu", relu)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def macs(self) -> int:
        """Multiply-accumulates per input vector through the whole chain."""
        return sum(layer.macs for layer in self.layers)


def mlp_forward(mlp: MlpSpec, v: np.ndarray) -> np.ndarray:
    """Run the chain on v (batched over leading axes)."""
    out = np.asarray(v, dtype=np.float64)
    for layer, relu in zip(mlp.layers, mlp.relu):
        out = linear_forward(layer, out)
        if mlp.norm == "group":
            out = _group_norm(out, mlp.groups)
        if relu:
            np.maximum(out, 0.0, out=out)
    return out


def pointnet_feature(mlp: MlpSpec, descs: np.ndarray) -> np.ndarray:
    """Coordinatewise max of MLP outputs over a descriptor set (K, in)."""
    d = np.asarray(descs, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] < 1:
        raise ValueError(f"need a non-empty (K, in) descriptor array, got {d.shape}")
    return mlp_forward(mlp, d).max(axis=0)


@dataclass(frozen=True)
class Qmlp:
    """One cascade step: f_next = relu(a_prime @ f + b @ x + bias)."""

    a_prime: np.ndarray
    b: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        a = _check_finite("a_prime", self.a_prime)
        b = _check_finite("b", self.b)
        bias = _check_finite("bias", self.bias)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"a_prime must be square, got shape {a.shape}")
        d = a.shape[0]
        if b.shape != (d, POINT_DIM):
            raise ValueError(f"b must be ({d}, {POINT_DIM}), got {b.shape}")
        if bias.shape != (d,):
            raise ValueError(f"bias must be ({d},), got {bias.shape}")
        object.__setattr__(self, "a_prime", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "bias", bias)

    @property
    def dim(self) -> int:
        return self.a_prime.shape[0]

    @property
    def macs(self) -> int:
        """Multiply-accumulates per (feature, point) pair."""
        return self.a_prime.size + self.b.size


def qmlp_forward(q: Qmlp, f_prev: np.ndarray, x: np.ndarray) -> np.ndarray:
    """relu(a_prime @ f_prev + b @ x + bias), batched over leading axes."""
    f = np.asarray(f_prev, dtype=np.float64)
    pts = np.asarray(x, dtype=np.float64)
    if f.shape[-1] != q.dim:
        raise ValueError(f"feature dim {f.shape[-1]} does not match qmlp dim {q.dim}")
    if pts.shape[-1] != POINT_DIM:
        raise ValueError(f"points must have last dim {POINT_DIM}, got {pts.shape}")
    out = f @ q.a_prime.T + pts @ q.b.T + q.bias
    np.maximum(out, 0.0, out=out)
    return out


def fold_cascade(c_next: np.ndarray, d_curr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fold the stacked matrix C = [A | B] with D into (A_prime, B).

    C's first `dim` columns multiply the hidden vector, the last 3 the
    point; A_prime = A @ D makes relu(A_prime u + B x) equal the deep
    path relu(C [D u; x]) for every nonnegative hidden u.
    """
    c = _check_finite("c_next", c_next)
    d = _check_finite("d_curr", d_curr)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"d_curr must be square, got shape {d.shape}")
    dim = d.shape[0]
    if c.ndim != 2 or c.shape != (dim, dim + POINT_DIM):
        raise ValueError(
            f"c_next must be ({dim}, {dim + POINT_DIM}), got shape {c.shape}"
        )
    return c[:, :dim] @ d, c[:, dim:].copy()


@dataclass(frozen=True)
class CascadeWeights:
    """iter0 encoder plus one Qmlp per later iteration (length L - 1)."""

    iter0: MlpSpec
    qmlps: tuple[Qmlp, ...] = field(default_factory=tuple)

    def __post_init__(self):
        qmlps = tuple(self.qmlps)
        d = self.iter0.out_dim
        for i, q in enumerate(qmlps):
            if q.dim != d:
                raise ValueError(
                    f"qmlp {i + 1} dim {q.dim} does not match encoder output {d}"
                )
        object.__setattr__(self, "qmlps", qmlps)

    @property
    def iterations(self) -> int:
        return len(self.qmlps) + 1

    @property
    def feature_dim(self) -> int:
        return self.iter0.out_dim


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], a: float) -> np.ndarray:
    return rng.uniform(-a, a, shape)


def init_random(
    seed: int,
    l_iters: int,
    d: int = DEFAULT_FEATURE_DIM,
    in_dim: int = DEFAULT_DESCRIPTOR_DIM,
) -> CascadeWeights:
    """Deterministic synthetic weights, uniform in [-a, a], a = sqrt(6/(in+out))."""
    if l_iters < 1:
        raise ValueError(f"need at least one iteration, got {l_iters}")
    rng = np.random.default_rng(seed)
    a1 = np.sqrt(6.0 / (in_dim + d))
    a2 = np.sqrt(6.0 / (d + d))
    layers = (
        LinearLayer(_uniform(rng, (d, in_dim), a1), _uniform(rng, (d,), a1)),
        LinearLayer(_uniform(rng, (d, d), a2), _uniform(rng, (d,), a2)),
    )
    iter0 = MlpSpec(layers=layers, relu=(True, True))
    aq = np.sqrt(6.0 / (d + POINT_DIM + d))
    qmlps = []
    for _ in range(l_iters - 1):
        fused = _uniform(rng, (d, d + POINT_DIM), aq)
        qmlps.append(Qmlp(fused[:, :d], fused[:, d:], _uniform(rng, (d,), aq)))
    return CascadeWeights(iter0=iter0, qmlps=tuple(qmlps))


@dataclass(frozen=True)
class OpCount:
    """Itemized multiply-accumulate estimate for one cloud's feature path.

    `total` sums the exact per-layer terms; `proxy` is the headline
    D^2-level figure (N D^2 K L for the full path, N D^2 (K + L - 1)
    for the cascade) used for order-of-magnitude comparisons.
    """

    mode: str
    n: int
    k: int
    l_iters: int
    d: int
    terms: dict[str, int]
    total: int
    proxy: int


def flop_estimate(
    weights: CascadeWeights, n: int, k: int, l_iters: int, mode: str
) -> OpCount:
    """Analytic feature-path MAC count for one cloud of n points."""
    if mode not in ("baseline", "cascade"):
        raise ValueError(f"unknown mode {mode!r}")
    if min(n, k, l_iters) < 1:
        raise ValueError("n, k, l_iters must all be positive")
    d = weights.feature_dim
    full_pass = n * k * weights.iter0.macs
    terms: dict[str, int]
    if mode == "baseline":
        terms = {"full_extractions": l_iters * full_pass}
        proxy = n * d * d * k * l_iters
    else:
        if weights.iterations < l_iters:
            raise ValueError(
                f"weights cover {weights.iterations} iterations, need {l_iters}"
            )
        steps = sum(q.macs for q in weights.qmlps[: l_iters - 1])
        terms = {"full_extractions": full_pass, "cascade_steps": n * steps}
        proxy = n * d * d * (k + l_iters - 1)
    return OpCount(
        mode=mode,
        n=n,
        k=k,
        l_iters=l_iters,
        d=d,
        terms=terms,
        total=sum(terms.values()),
        proxy=proxy,
    )
