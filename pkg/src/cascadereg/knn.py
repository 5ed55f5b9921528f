"""Exact k-nearest-neighbor search: brute force and a uniform spatial grid.

Both strategies return bit-identical results (same distance arithmetic,
ties broken by ascending point index); the grid only buys speed at scale
by visiting expanding shells of cells instead of every point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import PointCloud

AUTO_GRID_MIN_POINTS = 2048
MAX_GRID_CELLS = 1_000_000


def _shell_cells(c0, r: int, dims) -> np.ndarray | None:
    """Grid cells at Chebyshev distance exactly r from c0, clipped to the box.

    Enumerated face by face so cost scales with the clipped surface, never
    with r^3; c0 may lie outside the box (queries outside the cloud).
    """
    nx, ny, nz = dims
    x0, y0, z0 = int(c0[0]), int(c0[1]), int(c0[2])
    faces: list[np.ndarray] = []

    def rect(xr, yr, zr):
        xs = np.arange(max(xr[0], 0), min(xr[1], nx - 1) + 1, dtype=np.int64)
        ys = np.arange(max(yr[0], 0), min(yr[1], ny - 1) + 1, dtype=np.int64)
        zs = np.arange(max(zr[0], 0), min(zr[1], nz - 1) + 1, dtype=np.int64)
        if xs.size and ys.size and zs.size:
            gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
            faces.append(np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1))

    if r == 0:
        rect((x0, x0), (y0, y0), (z0, z0))
    else:
        full_y = (y0 - r, y0 + r)
        full_z = (z0 - r, z0 + r)
        inner_x = (x0 - r + 1, x0 + r - 1)
        inner_y = (y0 - r + 1, y0 + r - 1)
        rect((x0 - r, x0 - r), full_y, full_z)
        rect((x0 + r, x0 + r), full_y, full_z)
        rect(inner_x, (y0 - r, y0 - r), full_z)
        rect(inner_x, (y0 + r, y0 + r), full_z)
        rect(inner_x, inner_y, (z0 - r, z0 - r))
        rect(inner_x, inner_y, (z0 + r, z0 + r))
    if not faces:
        return None
    return faces[0] if len(faces) == 1 else np.concatenate(faces)


# shells that fit inside the box are a pure function of r; cache the small
# ones (bounded memory) since interior queries dominate
_SHELL_CACHE: dict[int, np.ndarray] = {}
_SHELL_CACHE_MAX_R = 32


def _shell_offsets(r: int) -> np.ndarray:
    offs = _SHELL_CACHE.get(r)
    if offs is None:
        side = 2 * r + 1
        offs = _shell_cells((r, r, r), r, (side, side, side)) - r
        offs.flags.writeable = False
        _SHELL_CACHE[r] = offs
    return offs


@dataclass
class NeighborIndex:
    """Queryable snapshot of one cloud; immutable after build."""

    points: np.ndarray
    strategy: str  # "brute" or "grid"
    cell_size: float = 0.0
    origin: np.ndarray | None = None
    dims: tuple[int, int, int] = (0, 0, 0)
    buckets: dict[int, np.ndarray] = field(default_factory=dict, repr=False)


def _as_points(cloud) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.points
    pts = np.asarray(cloud, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (N, 3) points, got shape {pts.shape}")
    return pts


def build_index(cloud, strategy: str = "auto") -> NeighborIndex:
    """Build a neighbor index. `auto` uses the grid from 2048 points up."""
    pts = _as_points(cloud)
    n = pts.shape[0]
    if n < 1:
        raise ValueError("cannot index an empty cloud")
    if strategy not in ("brute", "grid", "auto"):
        raise ValueError(f"unknown strategy {strategy!r}")
    if strategy == "auto":
        strategy = "grid" if n >= AUTO_GRID_MIN_POINTS else "brute"
    if strategy == "brute":
        return NeighborIndex(points=pts, strategy="brute")

    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    cell = diag / n ** (1.0 / 3.0) if diag > 0 else 1.0
    dims = np.maximum(np.ceil((hi - lo) / cell), 1).astype(np.int64)
    # keep the table bounded for pathological aspect ratios
    while int(dims.prod()) > MAX_GRID_CELLS:
        cell *= (float(dims.prod()) / MAX_GRID_CELLS) ** (1.0 / 3.0) * 1.0001
        dims = np.maximum(np.ceil((hi - lo) / cell), 1).astype(np.int64)

    coords = np.floor((pts - lo) / cell).astype(np.int64)
    np.clip(coords, 0, dims - 1, out=coords)
    ny, nz = int(dims[1]), int(dims[2])
    lin = (coords[:, 0] * ny + coords[:, 1]) * nz + coords[:, 2]
    order = np.lexsort((np.arange(n), lin))
    lin_sorted = lin[order]
    starts = np.flatnonzero(np.r_[True, lin_sorted[1:] != lin_sorted[:-1]])
    bounds = np.r_[starts, n]
    buckets = {
        int(lin_sorted[s]): order[s:e]
        for s, e in zip(bounds[:-1], bounds[1:])
    }
    return NeighborIndex(
        points=pts,
        strategy="grid",
        cell_size=cell,
        origin=lo,
        dims=(int(dims[0]), ny, nz),
        buckets=buckets,
    )


def _top_k(cand: np.ndarray, dist: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((cand, dist))[:k]
    return cand[order], dist[order]


def _brute_query(pts: np.ndarray, q: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    diff = pts - q
    dist = np.sqrt((diff * diff).sum(axis=1))
    return _top_k(np.arange(pts.shape[0]), dist, k)


def _grid_query(index: NeighborIndex, q: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    pts = index.points
    h = index.cell_size
    nx, ny, nz = index.dims
    c0 = np.floor((q - index.origin) / h).astype(np.int64)
    # shells beyond r_cover cannot contain any cell of the grid
    r_cover = int(
        max(
            max(c0[0], nx - 1 - c0[0]),
            max(c0[1], ny - 1 - c0[1]),
            max(c0[2], nz - 1 - c0[2]),
        )
    )
    # shells below r_min cannot intersect the box when c0 lies outside it
    r_min = int(
        max(
            0,
            -c0[0], c0[0] - (nx - 1),
            -c0[1], c0[1] - (ny - 1),
            -c0[2], c0[2] - (nz - 1),
        )
    )
    buckets = index.buckets
    chunks: list[np.ndarray] = []
    n_cand = 0
    for r in range(r_min, r_cover + 1):
        if (
            r <= _SHELL_CACHE_MAX_R
            and c0[0] >= r and c0[0] + r < nx
            and c0[1] >= r and c0[1] + r < ny
            and c0[2] >= r and c0[2] + r < nz
        ):
            cells = c0 + _shell_offsets(r)
        else:
            cells = _shell_cells(c0, r, index.dims)
        if cells is not None:
            ids = (cells[:, 0] * ny + cells[:, 1]) * nz + cells[:, 2]
            for lid in ids.tolist():
                bucket = buckets.get(lid)
                if bucket is not None:
                    chunks.append(bucket)
                    n_cand += bucket.shape[0]
        if n_cand >= k:
            cand = np.concatenate(chunks)
            diff = pts[cand] - q
            dist = np.sqrt((diff * diff).sum(axis=1))
            idx, dst = _top_k(cand, dist, k)
            # every unvisited point is farther than r*h from the query
            if dst[-1] <= r * h or r == r_cover:
                return idx, dst
            chunks = [cand]
            # distances recomputed on the next check; candidates kept
    raise AssertionError("grid search exhausted without k candidates")


def knn(index: NeighborIndex, query, k: int) -> tuple[np.ndarray, np.ndarray]:
    """k nearest stored points to `query`.

    Returns (indices, distances), sorted by ascending distance with ties
    broken by ascending point index.
    """
    q = np.asarray(query, dtype=np.float64).reshape(3)
    n = index.points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if index.strategy == "brute":
        return _brute_query(index.points, q, k)
    return _grid_query(index, q, k)


def knn_batch(index: NeighborIndex, queries, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized `knn` over many queries; same results row by row.

    Returns (Q, k) index and distance arrays.
    """
    qs = np.asarray(queries, dtype=np.float64)
    if qs.ndim != 2 or qs.shape[1] != 3:
        raise ValueError(f"queries must have shape (Q, 3), got {qs.shape}")
    n = index.points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")

    nq = qs.shape[0]
    out_i = np.empty((nq, k), dtype=np.int64)
    out_d = np.empty((nq, k))
    if index.strategy == "grid":
        for row in range(nq):
            out_i[row], out_d[row] = _grid_query(index, qs[row], k)
        return out_i, out_d

    pts = index.points
    col = np.broadcast_to(np.arange(n), (1, n))
    block = max(1, int(2_500_000 // n))
    for start in range(0, nq, block):
        chunk = qs[start:start + block]
        diff = chunk[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff * diff).sum(axis=2))
        order = np.lexsort((np.broadcast_to(col, dist.shape), dist), axis=1)[:, :k]
        out_i[start:start + chunk.shape[0]] = order
        out_d[start:start + chunk.shape[0]] = np.take_along_axis(dist, order, axis=1)
    return out_i, out_d
