"""Shared synthetic-scene builders for the test suite.

These generators are the independent side of most oracle checks: scenes
are constructed from known ground truth and the code under test has to
recover it.
"""

import numpy as np

from edgeslam import geometry as geo

K_DEFAULT = geo.CameraIntrinsics(525.0, 525.0, 319.5, 239.5)


def two_view_scene(n_points=50, baseline=(0.2, 0.0, 0.0), yaw_deg=10.0,
                   noise_px=0.0, outlier_frac=0.0, seed=0, intr=K_DEFAULT,
                   box=(4.0, 4.0, 4.0), z_offset=2.0):
    """Random points in a box seen by two cameras.

    Camera i sits at the origin looking down +z; camera j is displaced by
    `baseline` with `yaw_deg` relative yaw. Returns a dict with pixel
    correspondences, the ground-truth relative pose (frame i -> j, unit
    translation), 3D points in frame i, and the true-inlier mask.
    """
    rng = np.random.default_rng(seed)
    bx, by, bz = box
    pts = np.column_stack([
        rng.uniform(-bx / 2, bx / 2, n_points),
        rng.uniform(-by / 2, by / 2, n_points),
        rng.uniform(z_offset, z_offset + bz, n_points),
    ])

    R = geo.euler_to_rotation(0.0, 0.0, np.deg2rad(yaw_deg))
    t = -R @ np.asarray(baseline, dtype=float)  # camera j center at `baseline`
    rel = geo.Pose(R, t)

    pts_j3 = pts @ R.T + t
    keep = (pts[:, 2] > 0.1) & (pts_j3[:, 2] > 0.1)
    pts = pts[keep]
    pts_j3 = pts_j3[keep]
    n = len(pts)

    px_i = geo.project(intr, pts)
    px_j = geo.project(intr, pts_j3)
    if noise_px > 0:
        px_i = px_i + rng.normal(0, noise_px, px_i.shape)
        px_j = px_j + rng.normal(0, noise_px, px_j.shape)

    inlier_mask = np.ones(n, dtype=bool)
    n_out = int(round(outlier_frac * n))
    if n_out > 0:
        out_idx = rng.choice(n, n_out, replace=False)
        px_j[out_idx] = np.column_stack([
            rng.uniform(0, 2 * intr.cx, n_out),
            rng.uniform(0, 2 * intr.cy, n_out),
        ])
        inlier_mask[out_idx] = False

    scale = np.linalg.norm(t)
    rel_unit = geo.Pose(R, t / scale) if scale > 0 else rel
    return {
        "pts_i": px_i,
        "pts_j": px_j,
        "points_3d": pts,
        "rel": rel,
        "rel_unit": rel_unit,
        "scale": scale,
        "inlier_mask": inlier_mask,
        "intr": intr,
    }


def translation_angle_deg(t_est, t_true):
    a = np.asarray(t_est, dtype=float)
    b = np.asarray(t_true, dtype=float)
    c = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return np.rad2deg(np.arccos(np.clip(c, -1, 1)))
