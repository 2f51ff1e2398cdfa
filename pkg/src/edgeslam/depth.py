"""File-backed dense depth maps with validity-aware bilinear sampling.

Depth arrives as 16-bit single-channel PNGs (TUM convention: raw value /
5000 = meters, 0 = no measurement). The same loader serves precomputed
monocular-network output saved in that format.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .errors import DepthFormatError, InvalidDepthError, OutOfBoundsError

MAX_VALID_DEPTH = 100.0  # meters; beyond this the sensor/net reading is junk


@dataclass(frozen=True)
class DepthMap:
    """Dense per-pixel depth in meters; 0 marks invalid pixels."""

    values: np.ndarray  # (height, width) float64, meters
    scale_factor: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError(f"depth grid must be 2-D, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def valid_mask(self) -> np.ndarray:
        return self.values > 0

    @property
    def valid_count(self) -> int:
        return int(np.count_nonzero(self.values > 0))


def from_array(depth_m: np.ndarray, scale_factor: float = 5000.0) -> DepthMap:
    """Wrap an in-memory metric depth grid (used by synthetic scenes and tests)."""
    d = np.asarray(depth_m, dtype=float).copy()
    d[~np.isfinite(d)] = 0.0
    d[(d < 0) | (d > MAX_VALID_DEPTH)] = 0.0
    return DepthMap(d, scale_factor)


def load_depth(path: str, scale_factor: float = 5000.0) -> DepthMap:
    """Load a 16-bit single-channel PNG as metric depth.

    Raw zeros stay invalid; raw values map to raw / scale_factor meters.
    """
    if scale_factor <= 0:
        raise ValueError("scale_factor must be positive")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FileNotFoundError(f"depth file not found or unreadable: {path}")
    if raw.ndim != 2:
        raise DepthFormatError(f"{path}: expected single-channel depth, got shape {raw.shape}")
    if raw.dtype != np.uint16:
        raise DepthFormatError(f"{path}: expected 16-bit depth PNG, got dtype {raw.dtype}")
    values = raw.astype(float) / float(scale_factor)
    values[values > MAX_VALID_DEPTH] = 0.0
    return DepthMap(values, float(scale_factor))


def _gather_neighbors(d: DepthMap, px: np.ndarray):
    """Corner indices, weights, values, and validity for bilinear sampling."""
    u, v = px[..., 0], px[..., 1]
    h, w = d.values.shape
    x0 = np.floor(u).astype(int)
    y0 = np.floor(v).astype(int)
    # Queries exactly on the last row/column reuse the previous cell.
    x0 = np.clip(x0, 0, w - 2) if w > 1 else np.zeros_like(x0)
    y0 = np.clip(y0, 0, h - 2) if h > 1 else np.zeros_like(y0)
    fx = u - x0
    fy = v - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)

    vals = np.stack([d.values[y0, x0], d.values[y0, x1],
                     d.values[y1, x0], d.values[y1, x1]], axis=-1)
    weights = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy),
                        (1 - fx) * fy, fx * fy], axis=-1)
    # d(weight)/du and d(weight)/dv per corner
    dw_du = np.stack([-(1 - fy), (1 - fy), -fy, fy], axis=-1)
    dw_dv = np.stack([-(1 - fx), -fx, (1 - fx), fx], axis=-1)
    valid = vals > 0
    return vals, weights, dw_du, dw_dv, valid


def sample_many(d: DepthMap, pixels: np.ndarray):
    """Bilinear depth at (N, 2) pixel locations.

    Invalid (zero) neighbors are dropped and the remaining weights
    renormalized; a query with no valid neighbor yields 0. Out-of-bounds
    queries raise.

    Returns (depths, ok) where ok flags queries with at least one valid
    neighbor.
    """
    px = np.asarray(pixels, dtype=float)
    u, v = px[..., 0], px[..., 1]
    h, w = d.values.shape
    if np.any((u < 0) | (u > w - 1) | (v < 0) | (v > h - 1)):
        raise OutOfBoundsError("depth sample outside the grid")
    vals, weights, _, _, valid = _gather_neighbors(d, px)
    wv = weights * valid
    denom = wv.sum(axis=-1)
    ok = denom > 1e-12
    depths = np.zeros_like(denom)
    np.divide((wv * vals).sum(axis=-1), denom, out=depths, where=ok)
    return depths, ok


def sample(d: DepthMap, pixel) -> float:
    """Depth at one pixel; raises InvalidDepthError when all 4 neighbors are invalid."""
    depths, ok = sample_many(d, np.asarray(pixel, dtype=float).reshape(1, 2))
    if not ok[0]:
        raise InvalidDepthError(f"no valid depth around pixel {tuple(np.asarray(pixel))}")
    return float(depths[0])


def sample_with_gradient(d: DepthMap, pixels: np.ndarray):
    """Bilinear depth plus its gradient w.r.t. the pixel location.

    Differentiates the renormalized weighted average, so the gradient is
    consistent with sample_many even when some neighbors are invalid.
    Returns (depths, grad (N, 2), ok).
    """
    px = np.asarray(pixels, dtype=float)
    u, v = px[..., 0], px[..., 1]
    h, w = d.values.shape
    if np.any((u < 0) | (u > w - 1) | (v < 0) | (v > h - 1)):
        raise OutOfBoundsError("depth sample outside the grid")
    vals, weights, dw_du, dw_dv, valid = _gather_neighbors(d, px)
    m = valid.astype(float)
    num = (weights * m * vals).sum(axis=-1)
    den = (weights * m).sum(axis=-1)
    ok = den > 1e-12
    safe_den = np.where(ok, den, 1.0)
    val = np.where(ok, num / safe_den, 0.0)

    dnum_du = (dw_du * m * vals).sum(axis=-1)
    dden_du = (dw_du * m).sum(axis=-1)
    dnum_dv = (dw_dv * m * vals).sum(axis=-1)
    dden_dv = (dw_dv * m).sum(axis=-1)
    gu = np.where(ok, (dnum_du - val * dden_du) / safe_den, 0.0)
    gv = np.where(ok, (dnum_dv - val * dden_dv) / safe_den, 0.0)
    return val, np.stack([gu, gv], axis=-1), ok
