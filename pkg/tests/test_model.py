import numpy as np
import pytest

from rcsmatch.geometry import Pose, Scan, quat_from_rotvec
from rcsmatch.model import (
    BuildConfig,
    EIGEN_ABS_FLOOR,
    EmptyModelError,
    ModelFormatError,
    build_model,
    fit_gaussian,
    fit_sh_coefficients,
    load_model,
    merge_scans,
    rcs_statistics,
    save_model,
    voxel_partition,
)
from rcsmatch.shbasis import eval_sh_basis, eval_sh_basis_many


def hemisphere_dirs(rng, n):
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    v[v[:, 0] > 0] *= -1.0
    return v


def scan_of(points, rcs=None, timestamp=0.0):
    points = np.asarray(points, dtype=float)
    rcs = np.zeros(len(points)) if rcs is None else np.asarray(rcs, dtype=float)
    return Scan(points, np.zeros(len(points)), rcs, timestamp)


class TestMergeScans:
    def test_identity_pose_unchanged(self):
        scan = scan_of([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], rcs=[1.0, 2.0])
        pts, rcs, src = merge_scans([scan], [Pose.identity()])
        assert np.array_equal(pts, scan.positions)
        assert np.array_equal(rcs, scan.rcs)
        assert np.array_equal(src, [0, 0])

    def test_translated_pose(self):
        scan = scan_of([[1.0, 0.0, 0.0]])
        pts, _, _ = merge_scans([scan], [Pose(t=np.array([0.0, 0.0, 5.0]))])
        assert np.allclose(pts[0], [1.0, 0.0, 5.0], atol=0)

    def test_same_physical_point_coincides(self):
        # each scan observes the same world target from a different pose
        rng = np.random.default_rng(0)
        target = np.array([2.0, -1.0, 0.5])
        poses = [Pose(quat_from_rotvec(rng.normal(size=3)), rng.normal(size=3))
                 for _ in range(2)]
        scans = [scan_of([pose.rotation_matrix().T @ (target - pose.t)])
                 for pose in poses]
        pts, _, src = merge_scans(scans, poses)
        assert np.max(np.abs(pts[0] - pts[1])) < 1e-12
        assert np.array_equal(src, [0, 1])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            merge_scans([scan_of([[1.0, 0.0, 0.0]])], [])


class TestVoxelPartition:
    def test_same_cell(self):
        cells = voxel_partition([[0.1, 0.1, 0.1], [0.9, 0.9, 0.9]], 1.0)
        assert set(cells) == {(0, 0, 0)}
        assert sorted(cells[(0, 0, 0)]) == [0, 1]

    def test_floor_not_truncate(self):
        cells = voxel_partition([[-0.1, 0.0, 0.0]], 1.0)
        assert set(cells) == {(-1, 0, 0)}

    def test_random_against_direct_floor(self):
        rng = np.random.default_rng(1)
        pts = rng.uniform(-5.0, 5.0, size=(10_000, 3))
        cells = voxel_partition(pts, 1.0)
        total = sum(len(v) for v in cells.values())
        assert total == 10_000
        for cell, members in cells.items():
            expected = np.floor(pts[members] / 1.0).astype(int)
            assert np.all(expected == np.array(cell))

    def test_bad_voxel(self):
        with pytest.raises(ValueError):
            voxel_partition([[0.0, 0.0, 0.0]], 0.0)


class TestFitGaussian:
    def test_degenerate_cluster(self):
        pts = np.tile([1.0, 2.0, 3.0], (10, 1))
        mean, cov = fit_gaussian(pts)
        assert np.array_equal(mean, [1.0, 2.0, 3.0])
        w = np.linalg.eigvalsh(cov)
        assert np.allclose(w, EIGEN_ABS_FLOOR, rtol=1e-9)

    def test_line_segment_moments(self):
        ts = np.arange(10) * 0.1
        pts = np.stack([ts, np.zeros(10), np.zeros(10)], axis=1)
        mean, cov = fit_gaussian(pts, eigen_floor=1e-3)
        assert np.allclose(mean, [0.45, 0.0, 0.0], atol=1e-15)
        var_x = np.sum((ts - 0.45) ** 2) / 9.0
        w = np.sort(np.linalg.eigvalsh(cov))
        assert w[2] == pytest.approx(var_x, rel=1e-12)
        assert np.allclose(w[:2], 1e-3 * var_x, rtol=1e-9)

    def test_monte_carlo_isotropic(self):
        rng = np.random.default_rng(2)
        pts = rng.normal(0.0, 0.3, size=(10_000, 3))
        _, cov = fit_gaussian(pts)
        assert np.max(np.abs(cov - 0.09 * np.eye(3))) < 0.1 * 0.09

    def test_spd_cholesky(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            pts = rng.normal(size=(rng.integers(2, 50), 3)) * rng.uniform(1e-6, 10)
            _, cov = fit_gaussian(pts)
            np.linalg.cholesky(cov)  # must not raise


class TestRcsStatistics:
    def test_worked_example(self):
        stats = rcs_statistics([1.0, 2.0, 3.0, 10.0])
        assert stats.median == 2.5
        assert stats.scale == 1.5
        assert np.array_equal(stats.inlier_mask, [True, True, True, False])
        assert np.allclose(stats.normalized, [-1.0, -1.0 / 3.0, 1.0 / 3.0], atol=1e-15)

    def test_constant_input(self):
        stats = rcs_statistics([5.0, 5.0, 5.0])
        assert stats.median == 5.0
        assert stats.scale == 1.0
        assert stats.inlier_mask.all()
        assert np.array_equal(stats.normalized, [0.0, 0.0, 0.0])

    def test_symmetric_input(self):
        stats = rcs_statistics([-2.0, 0.0, 2.0])
        assert stats.median == 0.0
        assert stats.scale == 2.0
        assert stats.inlier_mask.all()
        assert np.array_equal(stats.normalized, [-1.0, 0.0, 1.0])

    def test_normalized_bounded_random(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            vals = rng.normal(rng.uniform(-30, 30), rng.uniform(0.1, 10),
                              size=rng.integers(1, 60))
            stats = rcs_statistics(vals)
            if stats.scale > 1e-6:
                assert np.all(np.abs(stats.normalized) <= 1.0 + 1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            rcs_statistics([])


class TestFitShCoefficients:
    def test_single_sample_degree_zero(self):
        d = np.array([[-1.0, 0.0, 0.0]])
        coeffs, degree = fit_sh_coefficients(d, [0.5])
        assert degree == 0
        assert np.all(coeffs[1:] == 0.0)
        assert coeffs @ eval_sh_basis(d[0]) == pytest.approx(0.5, abs=1e-6)

    def test_plant_and_recover_noiseless(self):
        rng = np.random.default_rng(5)
        planted = rng.normal(size=16)
        dirs = hemisphere_dirs(rng, 200)
        targets = eval_sh_basis_many(dirs) @ planted
        coeffs, degree = fit_sh_coefficients(dirs, targets, max_degree=3)
        assert degree == 3
        assert np.max(np.abs(coeffs - planted)) < 1e-6

    def test_degree_reduction_rule(self):
        rng = np.random.default_rng(6)
        dirs = hemisphere_dirs(rng, 30)  # N/2 = 15 -> degree 2 (9 <= 15 < 16)
        _, degree = fit_sh_coefficients(dirs, np.zeros(30), max_degree=3)
        assert degree == 2

    def test_noisy_fit_ridge_objective(self):
        rng = np.random.default_rng(7)
        planted = rng.normal(size=16)
        dirs = hemisphere_dirs(rng, 500)
        a = eval_sh_basis_many(dirs)
        targets = a @ planted + rng.normal(0.0, 0.1, size=500)
        coeffs, degree = fit_sh_coefficients(dirs, targets, max_degree=3)
        assert degree == 3
        resid = a @ coeffs - targets
        assert np.sqrt(np.mean(resid ** 2)) <= 0.12

        # independent convex-objective oracle: lstsq on the ridge-augmented system
        lam = 1e-8
        aug = np.vstack([a, np.sqrt(lam) * np.eye(16)])
        rhs = np.concatenate([targets, np.zeros(16)])
        oracle, *_ = np.linalg.lstsq(aug, rhs, rcond=None)

        def objective(c):
            return np.sum((a @ c - targets) ** 2) + lam * np.sum(c ** 2)

        assert objective(coeffs) <= objective(oracle) + 1e-9
        for _ in range(20):
            step = rng.normal(size=16)
            step *= 1e-3 / np.linalg.norm(step)
            assert objective(coeffs + step) >= objective(coeffs)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            fit_sh_coefficients(np.zeros((0, 3)), [])


class TestBuildModel:
    def _cluster_scan(self, rng, center, n=40, spread=0.25, rcs_mu=5.0):
        pts = center + rng.normal(0.0, spread, size=(n, 3))
        return scan_of(pts, rcs=rng.normal(rcs_mu, 1.0, size=n))

    def test_single_cluster(self):
        rng = np.random.default_rng(8)
        scan = self._cluster_scan(rng, np.array([3.2, 3.2, 3.2]))
        model = build_model([scan], [Pose.identity()],
                            BuildConfig(voxel_size=4.0, min_points_per_gaussian=10))
        assert len(model) == 1
        assert model.gaussians[0].point_count == 40

    def test_two_separated_clusters(self):
        rng = np.random.default_rng(9)
        a = self._cluster_scan(rng, np.array([1.5, 1.5, 1.5]))
        b = self._cluster_scan(rng, np.array([10.5, 10.5, 10.5]))
        scan = scan_of(np.vstack([a.positions, b.positions]),
                       np.concatenate([a.rcs, b.rcs]))
        model = build_model([scan], [Pose.identity()],
                            BuildConfig(voxel_size=3.0, min_points_per_gaussian=10))
        assert len(model) == 2
        for g in model.gaussians:
            cell = tuple(int(c) for c in np.floor(g.mean / model.voxel_size))
            hits = [model.gaussians[i] for i in model.spatial_index[cell]]
            assert any(np.array_equal(h.mean, g.mean) for h in hits)

    def test_empty_model_error(self):
        scan = scan_of([[1.0, 1.0, 1.0]])
        with pytest.raises(EmptyModelError):
            build_model([scan], [Pose.identity()],
                        BuildConfig(min_points_per_gaussian=10))

    def test_synth_scene_cell_means(self):
        from rcsmatch.synth import TrajectorySpec, demo_scene, generate_trajectory, render_sequence

        scene = demo_scene()
        traj = generate_trajectory(TrajectorySpec(speed=1.0, duration=5.0, scan_rate=2.0))
        scans, _ = render_sequence(scene, traj, n_points=150, seed=10)
        poses = [p for p, _ in traj]
        config = BuildConfig(voxel_size=1.0, min_points_per_gaussian=10)
        model = build_model(scans, poses, config)
        assert len(model) > 5
        pts, _, _ = merge_scans(scans, poses)
        cells = voxel_partition(pts, config.voxel_size)
        for g in model.gaussians:
            cell = tuple(int(c) for c in np.floor(g.mean / config.voxel_size))
            centroid = pts[cells[cell]].mean(axis=0)
            assert np.linalg.norm(g.mean - centroid) < config.voxel_size / 2

    def test_invariants_on_built_model(self):
        rng = np.random.default_rng(11)
        scans = [self._cluster_scan(rng, rng.uniform(0, 8, size=3), n=60)
                 for _ in range(5)]
        poses = [Pose.identity()] * 5
        config = BuildConfig(voxel_size=2.0, min_points_per_gaussian=10)
        model = build_model(scans, poses, config)
        pts, rcs, _ = merge_scans(scans, poses)
        cells = voxel_partition(pts, config.voxel_size)
        for g in model.gaussians:
            np.linalg.cholesky(g.covariance)  # SPD
            assert g.rcs_scale > 0
            assert np.all(g.sh_coeffs[(g.fitted_degree + 1) ** 2:] == 0.0)
            cell = tuple(int(c) for c in np.floor(g.mean / config.voxel_size))
            stats = rcs_statistics(rcs[cells[cell]])
            assert np.all(np.abs(stats.normalized) <= 1.0 + 1e-12)

    def test_sh_fit_optimality_on_built_model(self):
        from rcsmatch.synth import TrajectorySpec, demo_scene, generate_trajectory, render_sequence
        from rcsmatch.shbasis import incidence_direction, DegenerateDirectionError

        scene = demo_scene()
        traj = generate_trajectory(TrajectorySpec(speed=1.0, duration=5.0, scan_rate=2.0))
        scans, _ = render_sequence(scene, traj, n_points=150, seed=12)
        poses = [p for p, _ in traj]
        config = BuildConfig(voxel_size=1.5, min_points_per_gaussian=10)
        model = build_model(scans, poses, config)
        pts, rcs, src = merge_scans(scans, poses)
        cells = voxel_partition(pts, config.voxel_size)
        rng = np.random.default_rng(13)
        for g in model.gaussians[:10]:
            cell = tuple(int(c) for c in np.floor(g.mean / config.voxel_size))
            members = cells[cell]
            stats = rcs_statistics(rcs[members])
            dirs, targets = [], []
            for idx, val in zip(members[stats.inlier_mask], stats.normalized):
                try:
                    inc = incidence_direction(pts[idx], g.mean, poses[src[idx]])
                except DegenerateDirectionError:
                    continue
                dirs.append(inc.dir)
                targets.append(val)
            a = eval_sh_basis_many(np.array(dirs))[:, :(g.fitted_degree + 1) ** 2]
            y = np.array(targets)
            c0 = g.sh_coeffs[:(g.fitted_degree + 1) ** 2]

            def objective(c):
                return np.sum((a @ c - y) ** 2) + 1e-8 * np.sum(c ** 2)

            base = objective(c0)
            for _ in range(20):
                step = rng.normal(size=len(c0))
                step *= 1e-3 / np.linalg.norm(step)
                assert objective(c0 + step) >= base


class TestSerialization:
    def _model(self, seed=14):
        rng = np.random.default_rng(seed)
        scans = [scan_of(rng.uniform(0, 6, size=(80, 3)),
                         rcs=rng.normal(0, 4, size=80)) for _ in range(3)]
        return build_model(scans, [Pose.identity()] * 3,
                           BuildConfig(voxel_size=2.0, min_points_per_gaussian=5)), scans

    def test_round_trip_exact(self, tmp_path):
        model, _ = self._model()
        path = tmp_path / "model.txt"
        save_model(model, path)
        back = load_model(path)
        assert back.voxel_size == model.voxel_size
        assert len(back) == len(model)
        for a, b in zip(model.gaussians, back.gaussians):
            assert np.array_equal(a.mean, b.mean)
            assert np.array_equal(a.covariance, b.covariance)
            assert a.point_count == b.point_count
            assert a.rcs_median == b.rcs_median
            assert a.rcs_scale == b.rcs_scale
            assert a.fitted_degree == b.fitted_degree
            assert np.array_equal(a.sh_coeffs, b.sh_coeffs)

    def test_rebuild_bit_identical(self, tmp_path):
        rng = np.random.default_rng(15)
        pts = rng.uniform(0, 6, size=(200, 3))
        rcs = rng.normal(0, 4, size=200)
        config = BuildConfig(voxel_size=2.0, min_points_per_gaussian=5)
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        save_model(build_model([scan_of(pts, rcs)], [Pose.identity()], config), p1)
        save_model(build_model([scan_of(pts.copy(), rcs.copy())], [Pose.identity()], config), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_and_field_errors(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("gaussmodel v2 voxel=1\n")
        with pytest.raises(ModelFormatError):
            load_model(bad)
        bad.write_text("gaussmodel v1 voxel=1\n1 2 3\n")
        with pytest.raises(ModelFormatError):
            load_model(bad)
