"""File formats, parametric test shapes, and the pair corruption protocol.

Formats (all ASCII, newline-terminated):

    .xyz   one point per line: x y z [nx ny nz]; '#' starts a comment
    .ply   ascii 1.0 with a vertex element carrying x,y,z[,nx,ny,nz]
    .txt   rigid transform: 12 whitespace-separated decimals, row-major
           rotation then translation
    weights: header line "NTW 1", then per tensor a line
           "tensor <name> <rows> <cols>" followed by <rows> lines of
           <cols> decimals; 17 significant digits round-trip float64
           exactly

synth_pair reproduces the evaluation protocol: subsample, crop each copy
to a keep fraction with an independent random half-space, add Gaussian
noise, and rigidly transform the reference copy. Two 0.7 crops of the
same sample always share at least 40% of it, which is where the
"about 40% overlap" regime comes from.
"""

from __future__ import annotations

import numpy as np

from .geometry import PointCloud, RigidTransform, apply_transform, sample_random_transform
from .network import CascadeWeights, LinearLayer, MlpSpec, Qmlp


class WeightFileError(ValueError):
    """Structural problem in a weight file (version, names, dimensions)."""


# ---------------------------------------------------------------- clouds

def _parse_floats(tokens: list[str], path: str, line_no: int) -> list[float]:
    try:
        values = [float(t) for t in tokens]
    except ValueError:
        raise ValueError(f"{path}:{line_no}: malformed number in {tokens!r}") from None
    if not all(np.isfinite(values)):
        raise ValueError(f"{path}:{line_no}: non-finite coordinate")
    return values


def _read_xyz(path: str) -> PointCloud:
    rows = []
    width = None
    with open(path, "r", encoding="ascii") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) not in (3, 6):
                raise ValueError(
                    f"{path}:{line_no}: expected 3 or 6 values, got {len(tokens)}"
                )
            if width is None:
                width = len(tokens)
            elif len(tokens) != width:
                raise ValueError(
                    f"{path}:{line_no}: inconsistent column count "
                    f"({len(tokens)} after {width})"
                )
            rows.append(_parse_floats(tokens, path, line_no))
    if not rows:
        raise ValueError(f"{path}: no points found")
    data = np.array(rows)
    if width == 3:
        return PointCloud(points=data)
    return PointCloud(points=data[:, :3], normals=data[:, 3:])


def _read_ply(path: str) -> PointCloud:
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ValueError(f"{path}:1: not a ply file (missing 'ply' magic)")
    n_vertex = None
    properties: list[str] = []
    in_vertex = False
    body_at = None
    for line_no, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            if tokens[1:2] != ["ascii"]:
                raise ValueError(f"{path}:{line_no}: only ascii ply is supported")
        elif tokens[0] == "element":
            name, count = tokens[1], int(tokens[2])
            if name == "vertex":
                n_vertex = count
                in_vertex = True
            elif count > 0:
                raise ValueError(f"{path}:{line_no}: unsupported ply element '{name}'")
            else:
                in_vertex = False
        elif tokens[0] == "property":
            if in_vertex:
                properties.append(tokens[-1])
        elif tokens[0] == "end_header":
            body_at = line_no
            break
        else:
            raise ValueError(f"{path}:{line_no}: unexpected header line {line!r}")
    if body_at is None or n_vertex is None:
        raise ValueError(f"{path}: ply header has no vertex element or no end_header")
    for coord in ("x", "y", "z"):
        if coord not in properties:
            raise ValueError(f"{path}: vertex element lacks property '{coord}'")
    has_normals = all(p in properties for p in ("nx", "ny", "nz"))
    body = lines[body_at : body_at + n_vertex]
    if len(body) < n_vertex:
        raise ValueError(f"{path}: expected {n_vertex} vertex lines, got {len(body)}")
    data = np.empty((n_vertex, len(properties)))
    for row, line in enumerate(body):
        tokens = line.split()
        if len(tokens) != len(properties):
            raise ValueError(
                f"{path}:{body_at + 1 + row}: expected {len(properties)} values, "
                f"got {len(tokens)}"
            )
        data[row] = _parse_floats(tokens, path, body_at + 1 + row)
    cols = {p: data[:, i] for i, p in enumerate(properties)}
    points = np.stack([cols["x"], cols["y"], cols["z"]], axis=1)
    if has_normals:
        normals = np.stack([cols["nx"], cols["ny"], cols["nz"]], axis=1)
        return PointCloud(points=points, normals=normals)
    return PointCloud(points=points)


def read_cloud(path: str) -> PointCloud:
    """Load a point cloud; format chosen by extension (.xyz or .ply)."""
    low = str(path).lower()
    if low.endswith(".xyz"):
        return _read_xyz(str(path))
    if low.endswith(".ply"):
        return _read_ply(str(path))
    raise ValueError(f"unsupported cloud format: {path} (use .xyz or .ply)")


def write_cloud(cloud: PointCloud, path: str) -> None:
    """Write a cloud as .xyz or ascii .ply; normals included when present."""
    low = str(path).lower()
    n = len(cloud)
    rows = (
        np.hstack([cloud.points, cloud.normals])
        if cloud.normals is not None
        else cloud.points
    )
    if low.endswith(".xyz"):
        with open(path, "w", encoding="ascii") as fh:
            for row in rows:
                fh.write(" ".join(f"{v:.10g}" for v in row) + "\n")
        return
    if low.endswith(".ply"):
        names = ("x", "y", "z", "nx", "ny", "nz")[: rows.shape[1]]
        with open(path, "w", encoding="ascii") as fh:
            fh.write("ply\nformat ascii 1.0\n")
            fh.write(f"element vertex {n}\n")
            for name in names:
                fh.write(f"property double {name}\n")
            fh.write("end_header\n")
            for row in rows:
                fh.write(" ".join(f"{v:.10g}" for v in row) + "\n")
        return
    raise ValueError(f"unsupported cloud format: {path} (use .xyz or .ply)")


# ------------------------------------------------------------ transforms

def write_transform(transform: RigidTransform, path: str) -> None:
    """12 decimals, row-major rotation then translation, one line each."""
    with open(path, "w", encoding="ascii") as fh:
        for row in transform.rotation:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
        fh.write(" ".join(f"{v:.17g}" for v in transform.translation) + "\n")


def read_transform(path: str) -> RigidTransform:
    """Parse the 12-number transform format; '#' comments are skipped."""
    values: list[float] = []
    with open(path, "r", encoding="ascii") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                values.extend(_parse_floats(line.split(), str(path), line_no))
    if len(values) != 12:
        raise ValueError(f"{path}: expected 12 numbers, found {len(values)}")
    data = np.array(values)
    return RigidTransform(rotation=data[:9].reshape(3, 3), translation=data[9:])


# --------------------------------------------------------------- weights

def _tensor_lines(name: str, a: np.ndarray) -> list[str]:
    mat = np.atleast_2d(np.asarray(a, dtype=np.float64))
    lines = [f"tensor {name} {mat.shape[0]} {mat.shape[1]}"]
    lines.extend(" ".join(f"{v:.17g}" for v in row) for row in mat)
    return lines


def save_weights(weights: CascadeWeights, path: str) -> None:
    """Serialize weights in the NTW 1 text format."""
    lines = ["NTW 1"]
    for i, layer in enumerate(weights.iter0.layers, start=1):
        lines += _tensor_lines(f"iter0.layer{i}.weight", layer.weight)
        lines += _tensor_lines(f"iter0.layer{i}.bias", layer.bias)
    for i, q in enumerate(weights.qmlps, start=1):
        lines += _tensor_lines(f"qmlp{i}.A", q.a_prime)
        lines += _tensor_lines(f"qmlp{i}.B", q.b)
        lines += _tensor_lines(f"qmlp{i}.bias", q.bias)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_weight_tensors(path: str) -> dict[str, np.ndarray]:
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise WeightFileError(f"{path}: empty file")
    if lines[0].strip() != "NTW 1":
        raise WeightFileError(
            f"{path}:1: unsupported version (expected 'NTW 1', got {lines[0].strip()!r})"
        )
    tensors: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        tokens = line.split()
        if tokens[0] != "tensor" or len(tokens) != 4:
            raise WeightFileError(f"{path}:{i}: expected 'tensor <name> <rows> <cols>'")
        name = tokens[1]
        try:
            rows, cols = int(tokens[2]), int(tokens[3])
        except ValueError:
            raise WeightFileError(f"{path}:{i}: non-integer tensor dims") from None
        if name in tensors:
            raise WeightFileError(f"{path}:{i}: duplicate tensor '{name}'")
        if rows < 1 or cols < 1 or i + rows > len(lines):
            raise WeightFileError(f"{path}:{i}: tensor '{name}' dims exceed file")
        mat = np.empty((rows, cols))
        for r in range(rows):
            vals = lines[i + r].split()
            if len(vals) != cols:
                raise WeightFileError(
                    f"{path}:{i + r + 1}: tensor '{name}' row has {len(vals)} "
                    f"values, header declares {cols}"
                )
            mat[r] = _parse_floats(vals, path, i + r + 1)
        tensors[name] = mat
        i += rows
    return tensors


def load_weights(path: str) -> CascadeWeights:
    """Parse an NTW 1 file back into CascadeWeights."""
    tensors = _parse_weight_tensors(str(path))

    def take(name: str) -> np.ndarray:
        if name not in tensors:
            raise WeightFileError(f"{path}: missing tensor '{name}'")
        return tensors.pop(name)

    layers = []
    depth = 1
    while f"iter0.layer{depth}.weight" in tensors:
        w = take(f"iter0.layer{depth}.weight")
        b = take(f"iter0.layer{depth}.bias")
        try:
            layers.append(LinearLayer(w, b.reshape(-1)))
        except ValueError as exc:
            raise WeightFileError(f"{path}: iter0.layer{depth}: {exc}") from None
        depth += 1
    if not layers:
        raise WeightFileError(f"{path}: missing tensor 'iter0.layer1.weight'")
    qmlps = []
    step = 1
    while f"qmlp{step}.A" in tensors:
        a = take(f"qmlp{step}.A")
        b = take(f"qmlp{step}.B")
        bias = take(f"qmlp{step}.bias")
        try:
            qmlps.append(Qmlp(a, b, bias.reshape(-1)))
        except ValueError as exc:
            raise WeightFileError(f"{path}: qmlp{step}: {exc}") from None
        step += 1
    if tensors:
        raise WeightFileError(
            f"{path}: unknown tensors {sorted(tensors)} (expected iter0.layer*/qmlp*)"
        )
    try:
        return CascadeWeights(
            iter0=MlpSpec(layers=tuple(layers), relu=(True,) * len(layers)),
            qmlps=tuple(qmlps),
        )
    except ValueError as exc:
        raise WeightFileError(f"{path}: {exc}") from None


# ---------------------------------------------------------------- shapes

def _max_pairwise_distance(pts: np.ndarray) -> float:
    best = 0.0
    block = max(1, 2_000_000 // max(1, pts.shape[0]))
    for lo in range(0, pts.shape[0], block):
        chunk = pts[lo : lo + block]
        d = chunk[:, None, :] - pts[None, :, :]
        best = max(best, float(np.sqrt((d * d).sum(axis=2)).max()))
    return best


def _unit_diameter(pts: np.ndarray) -> np.ndarray:
    diam = _max_pairwise_distance(pts)
    if diam <= 0:
        raise ValueError("degenerate shape: all points coincide")
    return pts / diam


def _cube_grid(n: int) -> np.ndarray:
    side = int(np.ceil(n ** (1.0 / 3.0)))
    axis = np.linspace(0.0, 1.0, side) if side > 1 else np.zeros(1)
    grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)
    return grid.reshape(-1, 3)[:n]


def _sphere(n: int) -> np.ndarray:
    # Fibonacci directions, then re-center so every point sits at exactly
    # radius 0.5 from the empirical centroid
    i = np.arange(n)
    golden = (1 + np.sqrt(5.0)) / 2
    z = 1 - (2 * i + 1) / n
    r = np.sqrt(np.maximum(1 - z * z, 0.0))
    phi = 2 * np.pi * i / golden
    pts = 0.5 * np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    for _ in range(200):
        c = pts.mean(axis=0)
        offs = pts - c
        norms = np.linalg.norm(offs, axis=1, keepdims=True)
        pts = c + 0.5 * offs / norms
        if np.abs(pts.mean(axis=0) - c).max() < 1e-14:
            break
    return pts


def _two_planes(n: int) -> np.ndarray:
    half = n // 2
    out = []
    for count, z in ((half, -0.15), (n - half, 0.15)):
        side = int(np.ceil(np.sqrt(count)))
        axis = np.linspace(0.0, 0.6, side) if side > 1 else np.zeros(1)
        gx, gy = np.meshgrid(axis, axis, indexing="ij")
        plane = np.stack([gx.ravel(), gy.ravel(), np.full(side * side, z)], axis=1)
        out.append(plane[:count])
    return np.vstack(out)


def _helix(n: int) -> np.ndarray:
    # conical: the radius grows along the curve, so no screw motion maps
    # the shape onto itself
    t = np.linspace(0.0, 1.0, n)
    turns = 3.0
    radius = 0.08 + 0.42 * t
    angle = 2 * np.pi * turns * t
    return np.stack(
        [radius * np.cos(angle), radius * np.sin(angle), 0.9 * t], axis=1
    )


_SHAPES = {
    "cube_grid": _cube_grid,
    "sphere": _sphere,
    "two_planes": _two_planes,
    "helix": _helix,
}


def make_base_shape(shape: str, n: int, seed: int = 0) -> PointCloud:
    """Deterministic unit-diameter test shape in a seeded random orientation."""
    maker = _SHAPES.get(shape)
    if maker is None:
        raise ValueError(f"unknown shape {shape!r} (choose from {sorted(_SHAPES)})")
    if n < 8:
        raise ValueError(f"need at least 8 points, got {n}")
    pts = maker(n)
    if shape != "sphere":  # sphere construction already pins the diameter
        pts = _unit_diameter(pts)
    spin = sample_random_transform(180.0, 0.0, seed)
    return PointCloud(points=pts @ spin.rotation.T)


# ------------------------------------------------------------ corruption

class SynthConfig:
    """Parameters of the pair corruption protocol."""

    def __init__(
        self,
        n_points: int,
        keep_fraction: float = 0.7,
        noise_sigma: float = 0.0,
        max_rot_deg: float = 45.0,
        max_trans: float = 0.5,
        seed: int = 0,
    ):
        if n_points < 1:
            raise ValueError(f"n_points must be positive, got {n_points}")
        if not 0.0 < keep_fraction <= 1.0:
            raise ValueError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
        if noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
        self.n_points = n_points
        self.keep_fraction = keep_fraction
        self.noise_sigma = noise_sigma
        self.max_rot_deg = max_rot_deg
        self.max_trans = max_trans
        self.seed = seed


def _crop(pts: np.ndarray, normals, keep: int, direction: np.ndarray):
    """Keep the `keep` points on the low side of a plane normal to direction."""
    order = np.argsort(pts @ direction, kind="stable")[:keep]
    order.sort()  # preserve original ordering among the kept points
    return pts[order], None if normals is None else normals[order]


def synth_pair(
    cfg: SynthConfig, base: PointCloud
) -> tuple[PointCloud, PointCloud, RigidTransform]:
    """Build a (src, ref, ground truth) evaluation pair from a base cloud."""
    if len(base) < cfg.n_points:
        raise ValueError(f"base has {len(base)} points, need {cfg.n_points}")
    rng = np.random.default_rng(cfg.seed)
    chosen = np.sort(rng.choice(len(base), size=cfg.n_points, replace=False))
    pts = base.points[chosen]
    normals = base.normals[chosen] if base.normals is not None else None

    keep = max(1, int(round(cfg.keep_fraction * cfg.n_points)))
    halves = []
    for _ in range(2):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        halves.append(_crop(pts, normals, keep, direction))
    (src_pts, src_nrm), (ref_pts, ref_nrm) = halves

    if cfg.noise_sigma > 0:
        src_pts = src_pts + rng.normal(0.0, cfg.noise_sigma, src_pts.shape)
        ref_pts = ref_pts + rng.normal(0.0, cfg.noise_sigma, ref_pts.shape)
        src_nrm = ref_nrm = None  # noise invalidates carried normals

    t_gt = sample_random_transform(
        cfg.max_rot_deg, cfg.max_trans, seed=int(rng.integers(2**62))
    )
    src = PointCloud(points=src_pts, normals=src_nrm)
    ref = apply_transform(t_gt, PointCloud(points=ref_pts, normals=ref_nrm))
    return src, ref, t_gt
