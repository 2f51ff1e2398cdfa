"""Two-view geometry: essential-matrix estimation, pose recovery, triangulation.

The relative pose convention throughout: (R, t) maps frame-i camera
coordinates into frame j, P_j = R @ P_i + t. Translation from an essential
matrix is recovered up to scale and returned unit-norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BehindCameraError,
    CheiralityError,
    DegenerateConfigurationError,
    InsufficientMatchesError,
    LowParallaxError,
)
from .geometry import CameraIntrinsics, Pose, normalized_coords

MIN_SAMPLE = 8
RANSAC_CONFIDENCE = 0.99
MIN_PARALLAX_RAD = np.deg2rad(0.1)
# A rotation-only model explaining (almost) every essential-matrix inlier
# means the baseline is unobservable.
ROTATION_ONLY_FRACTION = 0.97


@dataclass(frozen=True)
class EssentialMatrix:
    """Rank-2 essential matrix, unit Frobenius norm, sign-normalized."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"essential matrix must be 3x3, got {m.shape}")
        norm = np.linalg.norm(m)
        if norm < 1e-15:
            raise DegenerateConfigurationError("essential matrix is numerically zero")
        m = m / norm
        flat = m.ravel()
        if flat[np.argmax(np.abs(flat))] < 0:
            m = -m
        s = np.linalg.svd(m, compute_uv=False)
        if s[2] > 1e-6 * s[0]:
            raise ValueError("essential matrix is not rank 2 within tolerance")
        if abs(s[0] - s[1]) > 1e-6 * s[0]:
            raise ValueError("essential matrix singular values are not equal within tolerance")
        object.__setattr__(self, "m", m)


@dataclass(frozen=True)
class RelativePose:
    """Scale-ambiguous relative pose: unit-norm translation direction."""

    pose: Pose
    inlier_mask: np.ndarray

    def __post_init__(self):
        if abs(np.linalg.norm(self.pose.translation) - 1.0) > 1e-9:
            raise ValueError("relative pose translation must be unit-norm")


def _homogeneous(pts: np.ndarray) -> np.ndarray:
    return np.concatenate([pts, np.ones((*pts.shape[:-1], 1))], axis=-1)


def _hartley_normalize(pts: np.ndarray):
    """Similarity transform taking points to zero centroid and RMS sqrt(2)."""
    centroid = pts.mean(axis=0)
    rms = np.sqrt(np.mean(np.sum((pts - centroid) ** 2, axis=1)))
    scale = np.sqrt(2.0) / max(rms, 1e-12)
    T = np.array([[scale, 0, -scale * centroid[0]],
                  [0, scale, -scale * centroid[1]],
                  [0, 0, 1.0]])
    return (pts - centroid) * scale, T


def _project_to_essential(M: np.ndarray) -> np.ndarray:
    U, s, Vt = np.linalg.svd(M)
    sigma = (s[0] + s[1]) / 2.0
    return U @ np.diag([sigma, sigma, 0.0]) @ Vt


def eight_point(norm_i: np.ndarray, norm_j: np.ndarray) -> EssentialMatrix:
    """Linear essential-matrix fit on >= 8 normalized correspondences.

    Applies Hartley conditioning, solves the homogeneous system by SVD,
    and projects the result onto the essential manifold.
    """
    norm_i = np.asarray(norm_i, dtype=float)
    norm_j = np.asarray(norm_j, dtype=float)
    n = len(norm_i)
    if n < MIN_SAMPLE:
        raise InsufficientMatchesError(f"eight-point needs >= 8 correspondences, got {n}")
    pi, Ti = _hartley_normalize(norm_i)
    pj, Tj = _hartley_normalize(norm_j)
    hi = _homogeneous(pi)
    hj = _homogeneous(pj)
    # Row k: vec constraint hj_k^T E' hi_k = 0, E' row-major.
    A = (hj[:, :, None] * hi[:, None, :]).reshape(n, 9)
    _, _, Vt = np.linalg.svd(A)
    Ec = Vt[-1].reshape(3, 3)
    E = Tj.T @ Ec @ Ti
    return EssentialMatrix(_project_to_essential(E))


def sampson_sq(E: np.ndarray, norm_i: np.ndarray, norm_j: np.ndarray) -> np.ndarray:
    """Squared Sampson distance in normalized-coordinate units."""
    hi = _homogeneous(np.asarray(norm_i, dtype=float))
    hj = _homogeneous(np.asarray(norm_j, dtype=float))
    Ei = hi @ E.T          # (N, 3): E @ hi_k
    Etj = hj @ E           # (N, 3): E.T @ hj_k
    err = np.sum(hj * Ei, axis=1)
    denom = Ei[:, 0] ** 2 + Ei[:, 1] ** 2 + Etj[:, 0] ** 2 + Etj[:, 1] ** 2
    return err ** 2 / np.maximum(denom, 1e-300)


def _rotation_only_inliers(norm_i, norm_j, angular_tol) -> int:
    """Inlier count of the best pure-rotation model (Procrustes on bearings)."""
    bi = _homogeneous(norm_i)
    bj = _homogeneous(norm_j)
    bi = bi / np.linalg.norm(bi, axis=1, keepdims=True)
    bj = bj / np.linalg.norm(bj, axis=1, keepdims=True)
    H = bi.T @ bj
    U, _, Vt = np.linalg.svd(H)
    S = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
    R = Vt.T @ S @ U.T
    residual = np.linalg.norm(bi @ R.T - bj, axis=1)  # chord length ~ angle
    return int(np.count_nonzero(residual < angular_tol))


def estimate_essential_ransac(pts_i: np.ndarray, pts_j: np.ndarray,
                              intr: CameraIntrinsics, threshold: float = 1.0,
                              max_iters: int = 1000, seed: int = 0):
    """RANSAC essential-matrix estimation from pixel correspondences.

    threshold is the Sampson-distance gate in pixels (converted to
    normalized units by the mean focal length). Iteration count adapts to
    the running inlier ratio at 99% confidence, capped at max_iters.

    Returns (EssentialMatrix, inlier_mask).
    """
    pts_i = np.asarray(pts_i, dtype=float)
    pts_j = np.asarray(pts_j, dtype=float)
    n = len(pts_i)
    if n < MIN_SAMPLE:
        raise InsufficientMatchesError(f"RANSAC needs >= {MIN_SAMPLE} matches, got {n}")
    if len(pts_j) != n:
        raise ValueError("correspondence lists differ in length")

    ni = normalized_coords(intr, pts_i)
    nj = normalized_coords(intr, pts_j)
    f_mean = (intr.fx + intr.fy) / 2.0
    thr = threshold / f_mean
    thr_sq = thr * thr

    rng = np.random.default_rng(seed)
    best_mask = None
    best_count = 0
    iters_needed = max_iters
    it = 0
    while it < min(iters_needed, max_iters):
        it += 1
        idx = rng.choice(n, MIN_SAMPLE, replace=False)
        try:
            E = eight_point(ni[idx], nj[idx])
        except (DegenerateConfigurationError, np.linalg.LinAlgError):
            continue
        mask = sampson_sq(E.m, ni, nj) <= thr_sq
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
            ratio = count / n
            if ratio > 0:
                denom = np.log1p(-min(ratio ** MIN_SAMPLE, 1 - 1e-12))
                iters_needed = int(np.ceil(np.log(1 - RANSAC_CONFIDENCE) / denom)) if denom < 0 else max_iters

    if best_mask is None or best_count < MIN_SAMPLE:
        raise DegenerateConfigurationError(
            f"RANSAC found only {best_count} inliers (< {MIN_SAMPLE})")

    # Refit on the consensus set and rescore once.
    E = eight_point(ni[best_mask], nj[best_mask])
    mask = sampson_sq(E.m, ni, nj) <= thr_sq
    if int(mask.sum()) < MIN_SAMPLE:
        raise DegenerateConfigurationError("consensus refit lost its inliers")

    # Baseline observability: if a pure rotation explains the same matches,
    # the translation is too small to decompose.
    rot_count = _rotation_only_inliers(ni, nj, max(2.0 * thr, 1e-9))
    if rot_count >= ROTATION_ONLY_FRACTION * int(mask.sum()):
        raise DegenerateConfigurationError(
            "near-zero translation: a rotation-only model explains the matches")
    return E, mask


def fundamental_to_essential(F: np.ndarray, intr: CameraIntrinsics) -> EssentialMatrix:
    """E = K^T F K followed by projection onto the essential manifold."""
    F = np.asarray(F, dtype=float)
    s = np.linalg.svd(F, compute_uv=False)
    if s[0] < 1e-15:
        raise DegenerateConfigurationError("fundamental matrix is numerically zero")
    if s[2] > 1e-9 * s[0]:
        raise ValueError("fundamental matrix must be rank 2")
    K = intr.matrix
    return EssentialMatrix(_project_to_essential(K.T @ F @ K))


def triangulate_many(pts_i: np.ndarray, pts_j: np.ndarray, rel: Pose,
                     intr: CameraIntrinsics, refine: bool = True):
    """Batched DLT triangulation with one Gauss-Newton refinement step.

    Returns (points (N, 3) in frame i, parallax angles (N,) in radians).
    No cheirality filtering here; callers inspect z as needed.
    """
    pts_i = np.asarray(pts_i, dtype=float).reshape(-1, 2)
    pts_j = np.asarray(pts_j, dtype=float).reshape(-1, 2)
    n = len(pts_i)
    K = intr.matrix
    P1 = K @ np.hstack([np.eye(3), np.zeros((3, 1))])
    P2 = K @ np.hstack([rel.rotation, rel.translation.reshape(3, 1)])

    A = np.empty((n, 4, 4))
    A[:, 0] = pts_i[:, 0, None] * P1[2] - P1[0]
    A[:, 1] = pts_i[:, 1, None] * P1[2] - P1[1]
    A[:, 2] = pts_j[:, 0, None] * P2[2] - P2[0]
    A[:, 3] = pts_j[:, 1, None] * P2[2] - P2[1]
    _, _, Vt = np.linalg.svd(A)
    Xh = Vt[:, -1, :]
    w = Xh[:, 3]
    w = np.where(np.abs(w) < 1e-300, 1e-300, w)
    X = Xh[:, :3] / w[:, None]

    if refine:
        X = _gauss_newton_step(X, pts_i, pts_j, rel, intr)

    # Parallax: angle between the two viewing rays expressed in frame i.
    ri = _homogeneous(normalized_coords(intr, pts_i))
    rj = _homogeneous(normalized_coords(intr, pts_j)) @ rel.rotation  # R^T applied row-wise
    cosang = np.sum(ri * rj, axis=1) / (np.linalg.norm(ri, axis=1) * np.linalg.norm(rj, axis=1))
    parallax = np.arccos(np.clip(cosang, -1.0, 1.0))
    return X, parallax


def _gauss_newton_step(X, pts_i, pts_j, rel: Pose, intr: CameraIntrinsics):
    """One GN step on the two-view pixel reprojection objective."""
    R, t = rel.rotation, rel.translation
    fx, fy = intr.fx, intr.fy

    def proj_jac(P):
        z = P[:, 2]
        ok = z > 1e-9
        zs = np.where(ok, z, 1.0)
        u = fx * P[:, 0] / zs + intr.cx
        v = fy * P[:, 1] / zs + intr.cy
        J = np.zeros((len(P), 2, 3))
        J[:, 0, 0] = fx / zs
        J[:, 0, 2] = -fx * P[:, 0] / zs ** 2
        J[:, 1, 1] = fy / zs
        J[:, 1, 2] = -fy * P[:, 1] / zs ** 2
        return np.stack([u, v], axis=1), J, ok

    Xj = X @ R.T + t
    pi, Ji, ok_i = proj_jac(X)
    pj, Jj_local, ok_j = proj_jac(Xj)
    Jj = Jj_local @ R  # chain through P_j = R P_i + t
    r = np.concatenate([pts_i - pi, pts_j - pj], axis=1)          # (N, 4)
    J = np.concatenate([-Ji, -Jj], axis=1)                        # (N, 4, 3)
    JtJ = np.einsum("nki,nkj->nij", J, J)
    Jtr = np.einsum("nki,nk->ni", J, r)
    ok = ok_i & ok_j & (np.linalg.det(JtJ) > 1e-18)
    delta = np.zeros_like(X)
    if ok.any():
        delta[ok] = np.linalg.solve(JtJ[ok], -Jtr[ok][..., None])[..., 0]
    return X + np.where(ok[:, None], delta, 0.0)


def triangulate(u_i, u_j, rel: Pose, intr: CameraIntrinsics) -> np.ndarray:
    """Triangulate one correspondence; raises on low parallax or cheirality."""
    X, parallax = triangulate_many(np.asarray(u_i), np.asarray(u_j), rel, intr)
    if parallax[0] <= MIN_PARALLAX_RAD:
        raise LowParallaxError(
            f"triangulation angle {np.rad2deg(parallax[0]):.4f} deg below limit")
    P = X[0]
    if P[2] <= 0:
        raise BehindCameraError("triangulated point is behind the first camera")
    return P


def decompose_essential(E: EssentialMatrix, pts_i: np.ndarray, pts_j: np.ndarray,
                        intr: CameraIntrinsics) -> RelativePose:
    """Recover (R, t) from E via SVD, picking the cheirality-consistent candidate.

    The winning factorization must place more than half the provided
    inlier matches in front of both cameras.
    """
    pts_i = np.asarray(pts_i, dtype=float).reshape(-1, 2)
    pts_j = np.asarray(pts_j, dtype=float).reshape(-1, 2)
    n = len(pts_i)
    if n < 1:
        raise InsufficientMatchesError("decomposition needs at least one inlier match")

    U, _, Vt = np.linalg.svd(E.m)
    if np.linalg.det(U) < 0:
        U = -U
    if np.linalg.det(Vt) < 0:
        Vt = -Vt
    W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    t = U[:, 2]
    t = t / np.linalg.norm(t)
    candidates = [(U @ W @ Vt, t), (U @ W @ Vt, -t),
                  (U @ W.T @ Vt, t), (U @ W.T @ Vt, -t)]

    best = None
    best_count = -1
    for R, tc in candidates:
        pose = Pose(R, tc)
        X, _ = triangulate_many(pts_i, pts_j, pose, intr, refine=False)
        zi = X[:, 2]
        zj = (X @ R.T + tc)[:, 2]
        count = int(np.count_nonzero((zi > 0) & (zj > 0)))
        if count > best_count:
            best_count = count
            best = pose
    if best_count <= n / 2:
        raise CheiralityError(
            f"best factorization puts only {best_count}/{n} points in front of both cameras")
    return RelativePose(best, np.ones(n, dtype=bool))


def essential_from_pose(rel: Pose) -> np.ndarray:
    """E = [t]x R for a relative pose (not normalized)."""
    t = rel.translation
    tx = np.array([[0, -t[2], t[1]], [t[2], 0, -t[0]], [-t[1], t[0], 0]])
    return tx @ rel.rotation
