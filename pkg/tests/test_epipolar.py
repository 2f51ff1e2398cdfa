import numpy as np
import pytest

from edgeslam import epipolar as ep
from edgeslam import geometry as geo
from edgeslam.errors import (
    BehindCameraError,
    CheiralityError,
    DegenerateConfigurationError,
    InsufficientMatchesError,
    LowParallaxError,
)
from helpers import K_DEFAULT, translation_angle_deg, two_view_scene


def normalized(intr, px):
    return geo.normalized_coords(intr, px)


class TestEssentialRansac:
    def test_noiseless_all_inliers(self):
        s = two_view_scene(n_points=50, seed=1)
        E, mask = ep.estimate_essential_ransac(s["pts_i"], s["pts_j"], s["intr"], seed=4)
        assert mask.all()
        hi = np.concatenate([normalized(s["intr"], s["pts_i"]), np.ones((len(mask), 1))], axis=1)
        hj = np.concatenate([normalized(s["intr"], s["pts_j"]), np.ones((len(mask), 1))], axis=1)
        residuals = np.abs(np.sum(hj * (hi @ E.m.T), axis=1))
        assert residuals.max() < 1e-9

    def test_outliers_rejected(self):
        s = two_view_scene(n_points=50, noise_px=0.5, outlier_frac=0.2, seed=2)
        E, mask = ep.estimate_essential_ransac(s["pts_i"], s["pts_j"], s["intr"],
                                               threshold=1.5, seed=7)
        assert mask.sum() >= 38
        # every true inlier recovered
        assert (mask & s["inlier_mask"]).sum() == s["inlier_mask"].sum()

    def test_insufficient_matches(self):
        s = two_view_scene(n_points=30, seed=3)
        with pytest.raises(InsufficientMatchesError):
            ep.estimate_essential_ransac(s["pts_i"][:7], s["pts_j"][:7], s["intr"])

    def test_pure_rotation_degenerate(self):
        rng = np.random.default_rng(5)
        pts = np.column_stack([rng.uniform(-1, 1, 40), rng.uniform(-1, 1, 40),
                               rng.uniform(2, 5, 40)])
        R = geo.euler_to_rotation(0.0, 0.02, 0.05)
        px_i = geo.project(K_DEFAULT, pts)
        px_j = geo.project(K_DEFAULT, pts @ R.T)
        with pytest.raises(DegenerateConfigurationError):
            ep.estimate_essential_ransac(px_i, px_j, K_DEFAULT, seed=1)

    def test_deterministic_for_fixed_seed(self):
        s = two_view_scene(n_points=60, noise_px=0.5, outlier_frac=0.15, seed=11)
        E1, m1 = ep.estimate_essential_ransac(s["pts_i"], s["pts_j"], s["intr"], seed=42)
        E2, m2 = ep.estimate_essential_ransac(s["pts_i"], s["pts_j"], s["intr"], seed=42)
        assert np.array_equal(E1.m, E2.m)
        assert np.array_equal(m1, m2)

    def test_inliers_satisfy_sampson_gate(self):
        s = two_view_scene(n_points=80, noise_px=0.5, outlier_frac=0.1, seed=13)
        thr = 1.5
        E, mask = ep.estimate_essential_ransac(s["pts_i"], s["pts_j"], s["intr"],
                                               threshold=thr, seed=3)
        ni = normalized(s["intr"], s["pts_i"])
        nj = normalized(s["intr"], s["pts_j"])
        f_mean = (s["intr"].fx + s["intr"].fy) / 2
        d = ep.sampson_sq(E.m, ni, nj)
        assert (d[mask] <= (thr / f_mean) ** 2 + 1e-15).all()


class TestFundamentalToEssential:
    def test_zero_matrix_degenerate(self):
        with pytest.raises(DegenerateConfigurationError):
            ep.fundamental_to_essential(np.zeros((3, 3)), K_DEFAULT)

    def test_algebraic_inverse(self):
        s = two_view_scene(seed=9)
        E_true = ep.essential_from_pose(s["rel_unit"])
        Kinv = s["intr"].inverse_matrix
        F = Kinv.T @ E_true @ Kinv
        E = ep.fundamental_to_essential(F, s["intr"])
        Et = E_true / np.linalg.norm(E_true)
        diff = min(np.abs(E.m - Et).max(), np.abs(E.m + Et).max())
        assert diff < 1e-9

    def test_identity_K_is_manifold_projection(self):
        rng = np.random.default_rng(21)
        # random rank-2 matrix
        A = rng.normal(size=(3, 3))
        U, sv, Vt = np.linalg.svd(A)
        F = U @ np.diag([sv[0], sv[1], 0.0]) @ Vt
        K1 = geo.CameraIntrinsics(1.0, 1.0, 0.0, 0.0)
        E = ep.fundamental_to_essential(F, K1)
        sigma = (sv[0] + sv[1]) / 2
        expected = U @ np.diag([sigma, sigma, 0.0]) @ Vt
        expected /= np.linalg.norm(expected)
        diff = min(np.abs(E.m - expected).max(), np.abs(E.m + expected).max())
        assert diff < 1e-12

    def test_rank3_rejected(self):
        with pytest.raises(ValueError):
            ep.fundamental_to_essential(np.eye(3), K_DEFAULT)


class TestDecomposeEssential:
    def test_recovers_small_yaw(self):
        t = np.array([1.0, 0, 0])
        R = geo.euler_to_rotation(0, np.deg2rad(5), 0)
        rel = geo.Pose(R, t / np.linalg.norm(t))
        rng = np.random.default_rng(3)
        pts = np.column_stack([rng.uniform(-1, 1, 30), rng.uniform(-1, 1, 30),
                               rng.uniform(2, 5, 30)])
        px_i = geo.project(K_DEFAULT, pts)
        px_j = geo.project(K_DEFAULT, pts @ rel.rotation.T + rel.translation)
        E = ep.EssentialMatrix(ep.essential_from_pose(rel))
        rec = ep.decompose_essential(E, px_i, px_j, K_DEFAULT)
        assert geo.rotation_angle_between(rec.pose.rotation, R) < 1e-6
        assert translation_angle_deg(rec.pose.translation, rel.translation) < np.rad2deg(1e-6)

    def test_pure_sideways(self):
        rel = geo.Pose(np.eye(3), [1.0, 0, 0])
        rng = np.random.default_rng(8)
        pts = np.column_stack([rng.uniform(-1, 1, 30), rng.uniform(-1, 1, 30),
                               rng.uniform(2, 5, 30)])
        px_i = geo.project(K_DEFAULT, pts)
        px_j = geo.project(K_DEFAULT, pts + rel.translation)
        E = ep.EssentialMatrix(ep.essential_from_pose(rel))
        rec = ep.decompose_essential(E, px_i, px_j, K_DEFAULT)
        assert geo.rotation_angle_between(rec.pose.rotation, np.eye(3)) < 1e-6

    def test_mirrored_points_fail_cheirality(self):
        # Half the correspondences live in the true world, half in its mirror
        # (antipodal pixels), so no factorization can win a majority.
        rel = geo.Pose(np.eye(3), [1.0, 0, 0])
        rng = np.random.default_rng(2)
        pts = np.column_stack([rng.uniform(-1, 1, 20), rng.uniform(-1, 1, 20),
                               rng.uniform(2, 5, 20)])
        px_i = geo.project(K_DEFAULT, pts)
        px_j_true = geo.project(K_DEFAULT, pts + rel.translation)
        px_j_mirror = geo.project(K_DEFAULT, pts - rel.translation)
        px_j = np.where(np.arange(20)[:, None] < 10, px_j_true, px_j_mirror)
        E = ep.EssentialMatrix(ep.essential_from_pose(rel))
        with pytest.raises(CheiralityError):
            ep.decompose_essential(E, px_i, px_j, K_DEFAULT)

    def test_rebuilt_essential_matches(self):
        s = two_view_scene(n_points=40, seed=17)
        E = ep.EssentialMatrix(ep.essential_from_pose(s["rel_unit"]))
        rec = ep.decompose_essential(E, s["pts_i"], s["pts_j"], s["intr"])
        E2 = ep.essential_from_pose(rec.pose)
        E2 = E2 / np.linalg.norm(E2)
        diff = min(np.linalg.norm(E.m - E2), np.linalg.norm(E.m + E2))
        assert diff < 1e-6


class TestTriangulate:
    def test_exact_inverse(self):
        s = two_view_scene(n_points=20, seed=5)
        for k in range(len(s["points_3d"])):
            P = ep.triangulate(s["pts_i"][k], s["pts_j"][k], s["rel"], s["intr"])
            assert np.abs(P - s["points_3d"][k]).max() < 1e-9

    def test_identical_pixels_low_parallax(self):
        with pytest.raises(LowParallaxError):
            ep.triangulate([320, 240], [320, 240], geo.Pose.identity(), K_DEFAULT)

    def test_behind_camera(self):
        # Rays crossing behind camera i: opposite pixels with a sideways baseline
        rel = geo.Pose(np.eye(3), [-1.0, 0.0, 0.0])
        # point at (0.5, 0, -2) behind both cameras: fabricate pixels directly
        P = np.array([0.5, 0.0, -2.0])
        px_i = geo.project(K_DEFAULT, -P)  # mirror trick to get finite pixels
        px_j = geo.project(K_DEFAULT, -(P @ rel.rotation.T + rel.translation))
        with pytest.raises((BehindCameraError, LowParallaxError)):
            ep.triangulate(px_i, px_j, rel, K_DEFAULT)

    def test_noise_monte_carlo_5mm(self):
        # 60 degree parallax at 2 m depth, 0.5 px noise
        rng = np.random.default_rng(77)
        depth = 2.0
        ang = np.deg2rad(60)
        # camera j center chosen so both rays to (0, 0, depth) subtend 60 deg,
        # with its optical axis aimed at the point
        cj = np.array([depth * np.sin(ang), 0.0, depth - depth * np.cos(ang)])
        R = geo.euler_to_rotation(0, ang, 0)  # world-to-camera-j
        t = -R @ cj
        rel = geo.Pose(R, t)
        errs = []
        for _ in range(1000):
            P = np.array([0, 0, depth]) + rng.uniform(-0.1, 0.1, 3)
            pj = P @ R.T + t
            # matching-noise model: the reference detection defines the
            # point, the matched view carries the 0.5 px localization noise
            px_i = geo.project(K_DEFAULT, P)
            px_j = geo.project(K_DEFAULT, pj) + rng.normal(0, 0.5, 2)
            X = ep.triangulate(px_i, px_j, rel, K_DEFAULT)
            errs.append(np.linalg.norm(X - P))
        assert np.percentile(errs, 95) < 0.005

    def test_reprojection_bounded_by_noise(self):
        s = two_view_scene(n_points=30, noise_px=0.5, seed=31)
        X, _ = ep.triangulate_many(s["pts_i"], s["pts_j"], s["rel"], s["intr"])
        pi = geo.project(s["intr"], X)
        pj = geo.project(s["intr"], X @ s["rel"].rotation.T + s["rel"].translation)
        err = np.concatenate([np.linalg.norm(pi - s["pts_i"], axis=1),
                              np.linalg.norm(pj - s["pts_j"], axis=1)])
        assert err.max() < 3 * 0.5 + 1e-6


class TestChainEquivalence:
    def test_ransac_matches_exhaustive_fit(self):
        for seed in range(5):
            s = two_view_scene(n_points=20, seed=seed + 40)
            E_r, mask = ep.estimate_essential_ransac(s["pts_i"], s["pts_j"], s["intr"],
                                                     seed=seed)
            rec_r = ep.decompose_essential(E_r, s["pts_i"][mask], s["pts_j"][mask], s["intr"])
            ni = normalized(s["intr"], s["pts_i"])
            nj = normalized(s["intr"], s["pts_j"])
            E_x = ep.eight_point(ni, nj)
            rec_x = ep.decompose_essential(E_x, s["pts_i"], s["pts_j"], s["intr"])
            ang = geo.rotation_angle_between(rec_r.pose.rotation, rec_x.pose.rotation)
            assert ang < 1e-6
