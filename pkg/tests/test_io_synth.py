import numpy as np
import pytest

from cascadereg.geometry import (
    PointCloud,
    RigidTransform,
    apply_transform,
    chamfer_distance,
    inverse,
    rot_z,
)
from cascadereg.io_synth import (
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
from cascadereg.network import (
    CascadeWeights,
    LinearLayer,
    MlpSpec,
    Qmlp,
    init_random,
    mlp_forward,
    qmlp_forward,
)


def _tiny_weights():
    rng = np.random.default_rng(0)
    l1 = LinearLayer(rng.normal(size=(4, 3)), rng.normal(size=4))
    l2 = LinearLayer(rng.normal(size=(5, 4)), rng.normal(size=5))
    q1 = Qmlp(rng.normal(size=(5, 5)), rng.normal(size=(5, 3)), rng.normal(size=5))
    q2 = Qmlp(rng.normal(size=(5, 5)), rng.normal(size=(5, 3)), rng.normal(size=5))
    return CascadeWeights(
        iter0=MlpSpec(layers=(l1, l2), relu=(True, True)), qmlps=(q1, q2)
    )


def _strip_tensor(text: str, name: str) -> str:
    lines = text.splitlines()
    out = []
    i = 0
    while i < len(lines):
        toks = lines[i].split()
        if len(toks) == 4 and toks[:2] == ["tensor", name]:
            i += 1 + int(toks[2])
            continue
        out.append(lines[i])
        i += 1
    return "\n".join(out) + "\n"


class TestXyz:
    def test_three_point_file(self, tmp_path):
        p = tmp_path / "tri.xyz"
        p.write_text("0 0 0\n1 0 0\n0 1 0\n")
        cloud = read_cloud(str(p))
        assert cloud.points.shape == (3, 3)
        assert cloud.normals is None

    def test_round_trip_points_only(self, tmp_path):
        rng = np.random.default_rng(0)
        cloud = PointCloud(points=rng.normal(size=(40, 3)))
        p = tmp_path / "c.xyz"
        write_cloud(cloud, str(p))
        back = read_cloud(str(p))
        assert np.abs(back.points - cloud.points).max() < 1e-6
        assert back.normals is None

    def test_round_trip_with_normals(self, tmp_path):
        rng = np.random.default_rng(1)
        normals = rng.normal(size=(20, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        cloud = PointCloud(points=rng.normal(size=(20, 3)), normals=normals)
        p = tmp_path / "c.xyz"
        write_cloud(cloud, str(p))
        back = read_cloud(str(p))
        assert np.abs(back.points - cloud.points).max() < 1e-6
        assert np.abs(back.normals - cloud.normals).max() < 1e-6

    def test_comments_and_blanks_skipped(self, tmp_path):
        p = tmp_path / "c.xyz"
        p.write_text("# header\n\n1 2 3   # inline\n\n4 5 6\n")
        cloud = read_cloud(str(p))
        assert np.array_equal(cloud.points, [[1, 2, 3], [4, 5, 6]])

    def test_malformed_number_names_line(self, tmp_path):
        p = tmp_path / "bad.xyz"
        p.write_text("0 0 0\n1 oops 0\n")
        with pytest.raises(ValueError, match="malformed number") as err:
            read_cloud(str(p))
        assert ":2:" in str(err.value)

    def test_inconsistent_column_count(self, tmp_path):
        p = tmp_path / "bad.xyz"
        p.write_text("0 0 0\n1 1 1 0 0 1\n")
        with pytest.raises(ValueError, match="inconsistent column count"):
            read_cloud(str(p))

    def test_wrong_token_count(self, tmp_path):
        p = tmp_path / "bad.xyz"
        p.write_text("0 0 0 0\n")
        with pytest.raises(ValueError, match="expected 3 or 6 values"):
            read_cloud(str(p))

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.xyz"
        p.write_text("# nothing here\n")
        with pytest.raises(ValueError, match="no points"):
            read_cloud(str(p))

    def test_unknown_extension(self, tmp_path):
        with pytest.raises(ValueError, match="unsupported cloud format"):
            read_cloud(str(tmp_path / "c.csv"))
        with pytest.raises(ValueError, match="unsupported cloud format"):
            write_cloud(PointCloud(points=np.eye(3)), str(tmp_path / "c.csv"))


class TestPly:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        normals = rng.normal(size=(15, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        cloud = PointCloud(points=rng.normal(size=(15, 3)), normals=normals)
        p = tmp_path / "c.ply"
        write_cloud(cloud, str(p))
        back = read_cloud(str(p))
        assert np.abs(back.points - cloud.points).max() < 1e-6
        assert np.abs(back.normals - cloud.normals).max() < 1e-6

    def test_points_only_round_trip(self, tmp_path):
        cloud = PointCloud(points=np.eye(3) * 2.0)
        p = tmp_path / "c.ply"
        write_cloud(cloud, str(p))
        back = read_cloud(str(p))
        assert back.normals is None
        assert np.abs(back.points - cloud.points).max() < 1e-6

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.ply"
        p.write_text("obj\nend_header\n")
        with pytest.raises(ValueError, match="missing 'ply' magic"):
            read_cloud(str(p))

    def test_binary_format_rejected(self, tmp_path):
        p = tmp_path / "bad.ply"
        p.write_text(
            "ply\nformat binary_little_endian 1.0\nelement vertex 1\n"
            "property double x\nproperty double y\nproperty double z\n"
            "end_header\n0 0 0\n"
        )
        with pytest.raises(ValueError, match="only ascii"):
            read_cloud(str(p))

    def test_unsupported_element(self, tmp_path):
        p = tmp_path / "bad.ply"
        p.write_text(
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property double x\nproperty double y\nproperty double z\n"
            "element face 12\nproperty list uchar int vertex_indices\n"
            "end_header\n0 0 0\n"
        )
        with pytest.raises(ValueError, match="unsupported ply element 'face'"):
            read_cloud(str(p))

    def test_empty_foreign_element_tolerated(self, tmp_path):
        p = tmp_path / "ok.ply"
        p.write_text(
            "ply\nformat ascii 1.0\nelement vertex 2\n"
            "property double x\nproperty double y\nproperty double z\n"
            "element face 0\n"
            "end_header\n0 0 0\n1 1 1\n"
        )
        cloud = read_cloud(str(p))
        assert len(cloud) == 2

    def test_missing_coordinate_property(self, tmp_path):
        p = tmp_path / "bad.ply"
        p.write_text(
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property double y\nproperty double z\n"
            "end_header\n0 0\n"
        )
        with pytest.raises(ValueError, match="lacks property 'x'"):
            read_cloud(str(p))

    def test_vertex_count_mismatch(self, tmp_path):
        p = tmp_path / "bad.ply"
        p.write_text(
            "ply\nformat ascii 1.0\nelement vertex 5\n"
            "property double x\nproperty double y\nproperty double z\n"
            "end_header\n0 0 0\n1 1 1\n"
        )
        with pytest.raises(ValueError, match="expected 5 vertex lines"):
            read_cloud(str(p))

    def test_row_width_mismatch(self, tmp_path):
        p = tmp_path / "bad.ply"
        p.write_text(
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property double x\nproperty double y\nproperty double z\n"
            "end_header\n0 0\n"
        )
        with pytest.raises(ValueError, match="expected 3 values"):
            read_cloud(str(p))


class TestTransformIo:
    def test_round_trip_exact(self, tmp_path):
        t = RigidTransform(rotation=rot_z(37.0), translation=np.array([0.1, -2.0, 3.5]))
        p = tmp_path / "t.txt"
        write_transform(t, str(p))
        back = read_transform(str(p))
        assert np.array_equal(back.rotation, t.rotation)
        assert np.array_equal(back.translation, t.translation)

    def test_comments_skipped(self, tmp_path):
        t = RigidTransform(rotation=np.eye(3), translation=np.zeros(3))
        p = tmp_path / "t.txt"
        write_transform(t, str(p))
        p.write_text("# estimated transform\n" + p.read_text())
        back = read_transform(str(p))
        assert np.array_equal(back.rotation, np.eye(3))

    def test_wrong_count(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("1 0 0 0 1 0 0 0 1 0 0\n")
        with pytest.raises(ValueError, match="expected 12 numbers, found 11"):
            read_transform(str(p))

    def test_non_rotation_rejected(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("2 0 0 0 1 0 0 0 1 0 0 0\n")
        with pytest.raises(ValueError):
            read_transform(str(p))


class TestWeightIo:
    def test_round_trip_bit_identical(self, tmp_path):
        w = _tiny_weights()
        p = tmp_path / "w.ntw"
        save_weights(w, str(p))
        back = load_weights(str(p))
        for a, b in zip(w.iter0.layers, back.iter0.layers):
            assert np.array_equal(a.weight, b.weight)
            assert np.array_equal(a.bias, b.bias)
        for qa, qb in zip(w.qmlps, back.qmlps):
            assert np.array_equal(qa.a_prime, qb.a_prime)
            assert np.array_equal(qa.b, qb.b)
            assert np.array_equal(qa.bias, qb.bias)

    def test_round_trip_forward_identical(self, tmp_path):
        w = init_random(5, 3)
        p = tmp_path / "w.ntw"
        save_weights(w, str(p))
        back = load_weights(str(p))
        rng = np.random.default_rng(3)
        descs = rng.uniform(0, 1, size=(9, 7))
        assert np.array_equal(mlp_forward(w.iter0, descs), mlp_forward(back.iter0, descs))
        f = rng.uniform(0, 1, size=(6, 96))
        x = rng.normal(size=(6, 3))
        assert np.array_equal(
            qmlp_forward(w.qmlps[0], f, x), qmlp_forward(back.qmlps[0], f, x)
        )

    def test_unsupported_version(self, tmp_path):
        p = tmp_path / "w.ntw"
        p.write_text("NTW 2\ntensor iter0.layer1.weight 1 1\n0.5\n")
        with pytest.raises(WeightFileError, match="unsupported version"):
            load_weights(str(p))

    def test_missing_tensor(self, tmp_path):
        w = _tiny_weights()
        p = tmp_path / "w.ntw"
        save_weights(w, str(p))
        p.write_text(_strip_tensor(p.read_text(), "qmlp2.B"))
        with pytest.raises(WeightFileError, match="missing tensor 'qmlp2.B'"):
            load_weights(str(p))

    def test_missing_encoder(self, tmp_path):
        p = tmp_path / "w.ntw"
        p.write_text("NTW 1\ntensor qmlp1.A 2 2\n1 0\n0 1\n")
        with pytest.raises(WeightFileError, match="iter0.layer1.weight"):
            load_weights(str(p))

    def test_duplicate_tensor(self, tmp_path):
        p = tmp_path / "w.ntw"
        p.write_text(
            "NTW 1\n"
            "tensor iter0.layer1.weight 1 1\n2\n"
            "tensor iter0.layer1.weight 1 1\n3\n"
        )
        with pytest.raises(WeightFileError, match="duplicate tensor"):
            load_weights(str(p))

    def test_row_width_mismatch(self, tmp_path):
        p = tmp_path / "w.ntw"
        p.write_text("NTW 1\ntensor iter0.layer1.weight 1 3\n1 2\n")
        with pytest.raises(WeightFileError, match="header declares 3"):
            load_weights(str(p))

    def test_dims_exceed_file(self, tmp_path):
        p = tmp_path / "w.ntw"
        p.write_text("NTW 1\ntensor iter0.layer1.weight 5 3\n1 2 3\n")
        with pytest.raises(WeightFileError, match="dims exceed file"):
            load_weights(str(p))

    def test_unknown_tensor_names(self, tmp_path):
        w = _tiny_weights()
        p = tmp_path / "w.ntw"
        save_weights(w, str(p))
        p.write_text(p.read_text() + "tensor extra.thing 1 1\n7\n")
        with pytest.raises(WeightFileError, match="unknown tensors"):
            load_weights(str(p))

    def test_inconsistent_shapes_wrapped(self, tmp_path):
        p = tmp_path / "w.ntw"
        # encoder chain 3 -> 4 declared, but second layer expects width 9
        p.write_text(
            "NTW 1\n"
            "tensor iter0.layer1.weight 4 3\n"
            + "\n".join("1 0 0" for _ in range(4))
            + "\ntensor iter0.layer1.bias 1 4\n0 0 0 0\n"
            "tensor iter0.layer2.weight 4 9\n"
            + "\n".join("1 0 0 0 0 0 0 0 0" for _ in range(4))
            + "\ntensor iter0.layer2.bias 1 4\n0 0 0 0\n"
        )
        with pytest.raises(WeightFileError):
            load_weights(str(p))


class TestShapes:
    def test_known_shapes_unit_diameter(self):
        for shape in ("cube_grid", "helix", "two_planes"):
            cloud = make_base_shape(shape, 64, seed=1)
            pts = cloud.points
            d = np.sqrt(((pts[:, None] - pts[None, :]) ** 2).sum(axis=2))
            assert abs(d.max() - 1.0) < 1e-9

    def test_sphere_radius(self):
        cloud = make_base_shape("sphere", 100, seed=2)
        offs = cloud.points - cloud.points.mean(axis=0)
        r = np.linalg.norm(offs, axis=1)
        assert np.abs(r - 0.5).max() < 1e-9

    def test_seed_determinism(self):
        a = make_base_shape("helix", 50, seed=3)
        b = make_base_shape("helix", 50, seed=3)
        c = make_base_shape("helix", 50, seed=4)
        assert np.array_equal(a.points, b.points)
        assert not np.array_equal(a.points, c.points)

    def test_helix_not_rotation_symmetric(self):
        cloud = make_base_shape("helix", 200, seed=0)
        centered = cloud.points - cloud.points.mean(axis=0)
        spun = centered @ rot_z(90.0).T
        d = chamfer_distance(PointCloud(points=centered), PointCloud(points=spun))
        assert d > 1e-3

    def test_unknown_shape(self):
        with pytest.raises(ValueError, match="unknown shape"):
            make_base_shape("torus", 100)

    def test_too_few_points(self):
        with pytest.raises(ValueError, match="at least 8"):
            make_base_shape("helix", 4)


class TestSynthPair:
    def test_clean_full_overlap_is_exact_copy(self):
        base = make_base_shape("helix", 128, seed=0)
        cfg = SynthConfig(
            n_points=128, keep_fraction=1.0, noise_sigma=0.0,
            max_rot_deg=0.0, max_trans=0.0, seed=1,
        )
        src, ref, t_gt = synth_pair(cfg, base)
        assert np.array_equal(src.points, base.points)
        assert np.array_equal(ref.points, base.points)
        assert np.array_equal(t_gt.rotation, np.eye(3))
        assert np.array_equal(t_gt.translation, np.zeros(3))

    def test_crop_sizes(self):
        base = make_base_shape("helix", 400, seed=1)
        cfg = SynthConfig(n_points=200, keep_fraction=0.7, seed=2)
        src, ref, _ = synth_pair(cfg, base)
        assert len(src) == 140
        assert len(ref) == 140

    def test_seed_determinism(self):
        base = make_base_shape("sphere", 300, seed=2)
        cfg = SynthConfig(n_points=250, keep_fraction=0.8, noise_sigma=0.01, seed=5)
        a = synth_pair(cfg, base)
        b = synth_pair(cfg, base)
        assert np.array_equal(a[0].points, b[0].points)
        assert np.array_equal(a[1].points, b[1].points)
        assert np.array_equal(a[2].rotation, b[2].rotation)

    def test_overlap_bound(self):
        base = make_base_shape("helix", 500, seed=3)
        for seed in range(10):
            cfg = SynthConfig(n_points=400, keep_fraction=0.7, seed=seed)
            src, ref, t_gt = synth_pair(cfg, base)
            undone = apply_transform(inverse(t_gt), ref)
            d = np.sqrt(
                ((src.points[:, None] - undone.points[None, :]) ** 2).sum(axis=2)
            )
            shared = (d.min(axis=1) < 1e-9).mean()
            assert shared >= 0.4

    def test_noise_drops_normals(self):
        rng = np.random.default_rng(4)
        normals = rng.normal(size=(200, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        base = PointCloud(points=rng.normal(size=(200, 3)), normals=normals)
        clean = synth_pair(SynthConfig(n_points=150, seed=1), base)
        noisy = synth_pair(SynthConfig(n_points=150, noise_sigma=0.01, seed=1), base)
        assert clean[0].normals is not None
        assert clean[1].normals is not None
        assert noisy[0].normals is None
        assert noisy[1].normals is None

    def test_ground_truth_maps_ref_back(self):
        base = make_base_shape("cube_grid", 216, seed=5)
        cfg = SynthConfig(n_points=180, keep_fraction=0.9, seed=6)
        src, ref, t_gt = synth_pair(cfg, base)
        # the reference crop was rigidly moved by t_gt; undoing it must put
        # every ref point exactly onto some subsampled base point
        undone = apply_transform(inverse(t_gt), ref).points
        d = np.sqrt(((undone[:, None] - base.points[None, :]) ** 2).sum(axis=2))
        assert d.min(axis=1).max() < 1e-9

    def test_base_too_small(self):
        base = make_base_shape("helix", 50, seed=7)
        with pytest.raises(ValueError, match="need 100"):
            synth_pair(SynthConfig(n_points=100), base)

    def test_config_validation(self):
        with pytest.raises(ValueError, match="keep_fraction"):
            SynthConfig(n_points=10, keep_fraction=0.0)
        with pytest.raises(ValueError, match="keep_fraction"):
            SynthConfig(n_points=10, keep_fraction=1.5)
        with pytest.raises(ValueError, match="noise_sigma"):
            SynthConfig(n_points=10, noise_sigma=-0.1)
        with pytest.raises(ValueError, match="n_points"):
            SynthConfig(n_points=0)
