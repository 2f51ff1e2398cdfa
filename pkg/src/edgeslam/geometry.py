"""Camera model and SE(3)/SO(3) primitives shared by every other module.

Conventions:
  - Camera frame: x right, y down, z forward (optical axis). Points with
    z > 0 are in front of the camera.
  - Pixels are float (u, v) pairs; 3D points are float (x, y, z) triples.
    Both are plain numpy arrays; functions broadcast over leading axes.
  - Euler angles are intrinsic Z-Y-X (yaw, pitch, roll applied in that
    order): R = Rz(yaw) @ Ry(pitch) @ Rx(roll).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveDepthError

MIN_DEPTH = 1e-12

# Orthonormality / determinant tolerance for rotation matrices.
ROTATION_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics: focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    @property
    def inverse_matrix(self) -> np.ndarray:
        return np.array([[1.0 / self.fx, 0.0, -self.cx / self.fx],
                         [0.0, 1.0 / self.fy, -self.cy / self.fy],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Pose:
    """Rigid transform: p_out = rotation @ p_in + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if R.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {R.shape}")
        if np.abs(R.T @ R - np.eye(3)).max() > ROTATION_TOL:
            raise ValueError("rotation is not orthonormal within tolerance")
        if abs(np.linalg.det(R) - 1.0) > ROTATION_TOL:
            raise ValueError("rotation determinant is not +1 within tolerance")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    @property
    def matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix."""
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    @staticmethod
    def from_matrix(T: np.ndarray) -> "Pose":
        T = np.asarray(T, dtype=float)
        return Pose(T[:3, :3], T[:3, 3])


def project(intr: CameraIntrinsics, point) -> np.ndarray:
    """Perspective projection of camera-frame points onto the image plane.

    Accepts a single (3,) point or an (N, 3) array; raises if any depth
    is at or below MIN_DEPTH (cheirality violation).
    """
    p = np.asarray(point, dtype=float)
    z = p[..., 2]
    if np.any(z <= MIN_DEPTH):
        raise NonPositiveDepthError(f"cannot project point(s) with depth <= {MIN_DEPTH}")
    u = intr.fx * p[..., 0] / z + intr.cx
    v = intr.fy * p[..., 1] / z + intr.cy
    return np.stack([u, v], axis=-1)


def backproject(intr: CameraIntrinsics, pixel, depth) -> np.ndarray:
    """Lift pixel(s) to camera-frame 3D points at the given depth(s)."""
    px = np.asarray(pixel, dtype=float)
    d = np.asarray(depth, dtype=float)
    if np.any(d <= 0):
        raise NonPositiveDepthError("backprojection requires positive depth")
    x = (px[..., 0] - intr.cx) / intr.fx
    y = (px[..., 1] - intr.cy) / intr.fy
    return np.stack([d * x, d * y, d * np.ones_like(x)], axis=-1)


def normalized_coords(intr: CameraIntrinsics, pixel) -> np.ndarray:
    """Map pixel(s) to normalized image coordinates (x, y) = ((u-cx)/fx, (v-cy)/fy)."""
    px = np.asarray(pixel, dtype=float)
    return np.stack([(px[..., 0] - intr.cx) / intr.fx,
                     (px[..., 1] - intr.cy) / intr.fy], axis=-1)


def compose(a: Pose, b: Pose) -> Pose:
    """Composition a ∘ b: apply b first, then a."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(p: Pose) -> Pose:
    return Pose(p.rotation.T, -p.rotation.T @ p.translation)


def transform_point(pose: Pose, point) -> np.ndarray:
    """Apply the rigid transform to a (3,) point or (N, 3) array."""
    p = np.asarray(point, dtype=float)
    return p @ pose.rotation.T + pose.translation


def euler_to_rotation(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Rotation matrix Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


GIMBAL_LOCK_TOL = 1e-6


def rotation_to_euler(R: np.ndarray) -> np.ndarray:
    """Recover (roll, pitch, yaw) from a Z-Y-X rotation matrix.

    At |pitch| within GIMBAL_LOCK_TOL of pi/2 the roll/yaw split is
    ambiguous; roll is set to 0 and the remaining rotation goes to yaw.
    """
    R = np.asarray(R, dtype=float)
    sp = -R[2, 0]
    sp = float(np.clip(sp, -1.0, 1.0))
    pitch = np.arcsin(sp)
    if abs(abs(sp) - 1.0) < GIMBAL_LOCK_TOL:
        # Lock: only roll -/+ yaw is observable; put it all into yaw.
        yaw = float(np.arctan2(-R[0, 1], R[1, 1]))
        return np.array([0.0, pitch, yaw])
    roll = float(np.arctan2(R[2, 1], R[2, 2]))
    yaw = float(np.arctan2(R[1, 0], R[0, 0]))
    return np.array([roll, pitch, float(yaw)])


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w) if np.ndim(w) else (np.pi if w == -np.pi else float(w))


def skew(v) -> np.ndarray:
    """Cross-product matrix: skew(v) @ w == v x w."""
    v = np.asarray(v, dtype=float)
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def rotation_from_axis_angle(w) -> np.ndarray:
    """Rodrigues formula; w is the rotation vector (axis * angle)."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        W = skew(w)
        return np.eye(3) + W + 0.5 * (W @ W)
    axis = w / theta
    W = skew(axis)
    return np.eye(3) + np.sin(theta) * W + (1.0 - np.cos(theta)) * (W @ W)


def axis_angle_from_rotation(R: np.ndarray) -> np.ndarray:
    """Inverse of rotation_from_axis_angle (principal branch, angle in [0, pi])."""
    R = np.asarray(R, dtype=float)
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    if theta < 1e-9:
        return np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / 2.0
    if abs(np.pi - theta) < 1e-9:
        # Near pi the off-diagonal difference vanishes; recover axis from R + I.
        M = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diag(M), 0.0))
        # Fix signs using the largest component.
        k = int(np.argmax(axis))
        if axis[k] > 0:
            for i in range(3):
                if i != k and M[k, i] < 0:
                    axis[i] = -axis[i]
        return theta * axis / np.linalg.norm(axis)
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return theta * v / (2.0 * np.sin(theta))


def rotation_angle_between(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Geodesic angle (radians) between two rotations."""
    cos_theta = np.clip((np.trace(Ra.T @ Rb) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.arccos(cos_theta))


def quaternion_to_rotation(qx: float, qy: float, qz: float, qw: float) -> np.ndarray:
    """Hamilton quaternion (scalar-last) to rotation matrix."""
    n = np.sqrt(qx * qx + qy * qy + qz * qz + qw * qw)
    qx, qy, qz, qw = qx / n, qy / n, qz / n, qw / n
    return np.array([
        [1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qz * qw), 2 * (qx * qz + qy * qw)],
        [2 * (qx * qy + qz * qw), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qx * qw)],
        [2 * (qx * qz - qy * qw), 2 * (qy * qz + qx * qw), 1 - 2 * (qx * qx + qy * qy)],
    ])


def rotation_to_quaternion(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to Hamilton quaternion (qx, qy, qz, qw), qw >= 0."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2.0
        qw = 0.25 * s
        qx = (R[2, 1] - R[1, 2]) / s
        qy = (R[0, 2] - R[2, 0]) / s
        qz = (R[1, 0] - R[0, 1]) / s
    else:
        i = int(np.argmax(np.diag(R)))
        if i == 0:
            s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
            qw = (R[2, 1] - R[1, 2]) / s
            qx = 0.25 * s
            qy = (R[0, 1] + R[1, 0]) / s
            qz = (R[0, 2] + R[2, 0]) / s
        elif i == 1:
            s = np.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2]) * 2.0
            qw = (R[0, 2] - R[2, 0]) / s
            qx = (R[0, 1] + R[1, 0]) / s
            qy = 0.25 * s
            qz = (R[1, 2] + R[2, 1]) / s
        else:
            s = np.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2]) * 2.0
            qw = (R[1, 0] - R[0, 1]) / s
            qx = (R[0, 2] + R[2, 0]) / s
            qy = (R[1, 2] + R[2, 1]) / s
            qz = 0.25 * s
    q = np.array([qx, qy, qz, qw])
    if q[3] < 0:
        q = -q
    return q / np.linalg.norm(q)
