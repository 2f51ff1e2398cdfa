"""Per-frame feature extraction: keypoints, descriptor matching, edges, junctions.

Keypoints come from the FAST-9 + oriented-BRIEF construction (OpenCV's ORB,
4 pyramid levels); edges from Gaussian-smoothed Canny. Both are standard
plumbing. The Hamming nearest-neighbor index, the ratio/mutual match
filtering, and the L-shape junction detector are implemented here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np

from .errors import EmptyImageError

DESCRIPTOR_BITS = 256
DESCRIPTOR_BYTES = DESCRIPTOR_BITS // 8

# brute force below this many indexed descriptors; VP-tree above
BRUTE_FORCE_LIMIT = 2000

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


@dataclass(frozen=True)
class Keypoint:
    position: np.ndarray      # (u, v) pixels
    response: float
    descriptor: bytes         # 32 bytes = 256 bits
    octave: int = 0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        if len(self.descriptor) != DESCRIPTOR_BYTES:
            raise ValueError(f"descriptor must be {DESCRIPTOR_BYTES} bytes")


@dataclass(frozen=True)
class Match:
    index_i: int
    index_j: int
    hamming_distance: int


@dataclass(frozen=True)
class EdgeMap:
    """Binary edge mask plus cached pixel coordinates."""

    mask: np.ndarray  # (height, width) bool

    def __post_init__(self):
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def pixels(self) -> np.ndarray:
        """(N, 2) integer (u, v) coordinates in scan order."""
        ys, xs = np.nonzero(self.mask)
        return np.column_stack([xs, ys])

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.mask))


@dataclass(frozen=True)
class LShapeJunction:
    corner: np.ndarray          # (2,) pixel, lies on an edge pixel
    dir1: np.ndarray            # unit 2-vector, oriented away from the corner
    dir2: np.ndarray
    pts1: np.ndarray            # (M1, 2) edge pixels along segment 1
    pts2: np.ndarray            # (M2, 2)
    expected_angle: float       # radians in (0, pi)

    def __post_init__(self):
        for name in ("corner", "dir1", "dir2", "pts1", "pts2"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if abs(np.linalg.norm(self.dir1) - 1) > 1e-9 or abs(np.linalg.norm(self.dir2) - 1) > 1e-9:
            raise ValueError("junction directions must be unit vectors")
        if len(self.pts1) < 3 or len(self.pts2) < 3:
            raise ValueError("junction segments need at least 3 sampled points")
        if not (0 < self.expected_angle < np.pi):
            raise ValueError("expected angle must lie in (0, pi)")


# --- keypoints ----------------------------------------------------------------


def detect_keypoints(image: np.ndarray, max_count: int = 1000, *,
                     fast_threshold: int = 20, n_levels: int = 4,
                     scale_factor: float = 1.2, edge_margin: int = 31) -> list[Keypoint]:
    """FAST-9 corners with oriented 256-bit binary descriptors.

    Returns at most max_count keypoints sorted by descending response.
    Deterministic for a fixed image and configuration.
    """
    if image is None or image.size == 0:
        raise EmptyImageError("cannot detect keypoints on an empty image")
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValueError("expected an 8-bit grayscale image")
    if max_count <= 0:
        raise ValueError("max_count must be positive")

    orb = cv2.ORB_create(
        nfeatures=max_count,
        scaleFactor=scale_factor,
        nlevels=n_levels,
        edgeThreshold=edge_margin,
        patchSize=31,
        fastThreshold=fast_threshold,
    )
    kps, descs = orb.detectAndCompute(image, None)
    if not kps or descs is None:
        return []
    out = [Keypoint(position=np.array(kp.pt), response=float(kp.response),
                    descriptor=descs[i].tobytes(), octave=kp.octave & 0xFF)
           for i, kp in enumerate(kps)]
    out.sort(key=lambda k: (-k.response, k.position[1], k.position[0],
                            k.octave, k.descriptor))
    return out[:max_count]


# --- Hamming index ------------------------------------------------------------


def descriptor_matrix(keypoints) -> np.ndarray:
    """(N, 32) uint8 matrix from keypoints or raw descriptor byte strings."""
    if len(keypoints) == 0:
        return np.zeros((0, DESCRIPTOR_BYTES), dtype=np.uint8)
    rows = [np.frombuffer(k.descriptor if isinstance(k, Keypoint) else k, dtype=np.uint8)
            for k in keypoints]
    return np.stack(rows)


def hamming_distances(queries: np.ndarray, index: np.ndarray) -> np.ndarray:
    """(Q, N) Hamming distance matrix, chunked to bound memory."""
    q = np.asarray(queries, dtype=np.uint8)
    x = np.asarray(index, dtype=np.uint8)
    out = np.empty((len(q), len(x)), dtype=np.int32)
    step = max(1, (1 << 24) // max(1, len(x) * DESCRIPTOR_BYTES))
    for s in range(0, len(q), step):
        block = q[s:s + step]
        out[s:s + step] = _POPCOUNT[block[:, None, :] ^ x[None, :, :]].sum(
            axis=2, dtype=np.int32)
    return out


class _VpNode:
    __slots__ = ("index", "radius", "inside", "outside")

    def __init__(self, index, radius, inside, outside):
        self.index = index
        self.radius = radius
        self.inside = inside
        self.outside = outside


class HammingIndex:
    """Exact k-NN over 256-bit descriptors.

    Small sets use a brute-force distance matrix; larger sets a
    vantage-point tree (Hamming is a metric, so triangle-inequality
    pruning is exact). Results are identical either way, including the
    lowest-index tie-break.
    """

    def __init__(self, descriptors: np.ndarray, force: str | None = None):
        self.data = np.ascontiguousarray(descriptors, dtype=np.uint8)
        n = len(self.data)
        if force not in (None, "brute", "vptree"):
            raise ValueError(f"unknown index mode {force!r}")
        use_tree = (force == "vptree") or (force is None and n >= BRUTE_FORCE_LIMIT)
        self._root = self._build(np.arange(n)) if (use_tree and n > 0) else None

    def _build(self, idx: np.ndarray):
        if len(idx) == 0:
            return None
        if len(idx) == 1:
            return _VpNode(int(idx[0]), 0, None, None)
        vantage = int(idx[0])
        rest = idx[1:]
        d = hamming_distances(self.data[vantage][None, :], self.data[rest])[0]
        radius = int(np.median(d))
        inside = rest[d < radius]
        outside = rest[d >= radius]
        if len(inside) == 0 or len(outside) == 0:
            # Degenerate split (many duplicates); fall back to halves.
            half = len(rest) // 2
            inside, outside = rest[:half], rest[half:]
            radius = int(d[half - 1]) + 1 if half > 0 else 0
        return _VpNode(vantage, radius, self._build(inside), self._build(outside))

    def knn(self, queries: np.ndarray, k: int):
        """Distances and indices of the k nearest neighbors per query.

        Missing neighbors (index smaller than k) are padded with distance
        DESCRIPTOR_BITS + 1 and index -1.
        """
        q = np.asarray(queries, dtype=np.uint8)
        nq = len(q)
        dists = np.full((nq, k), DESCRIPTOR_BITS + 1, dtype=np.int32)
        idxs = np.full((nq, k), -1, dtype=np.int64)
        if len(self.data) == 0 or nq == 0:
            return dists, idxs
        if self._root is None:
            D = hamming_distances(q, self.data)
            order = np.argsort(D, axis=1, kind="stable")[:, :k]
            take = min(k, D.shape[1])
            rows = np.arange(nq)[:, None]
            dists[:, :take] = D[rows, order[:, :take]]
            idxs[:, :take] = order[:, :take]
            return dists, idxs
        for qi in range(nq):
            best: list[tuple[int, int]] = []  # (dist, index), size <= k
            self._search(self._root, q[qi], k, best)
            for slot, (d, i) in enumerate(best):
                dists[qi, slot] = d
                idxs[qi, slot] = i
        return dists, idxs

    def _search(self, node, query, k, best):
        if node is None:
            return
        d = int(_POPCOUNT[self.data[node.index] ^ query].sum())
        entry = (d, node.index)
        if len(best) < k:
            best.append(entry)
            best.sort()
        elif entry < best[-1]:
            best[-1] = entry
            best.sort()
        tau = best[-1][0] if len(best) == k else DESCRIPTOR_BITS + 1
        if node.inside is None and node.outside is None:
            return
        if d < node.radius:
            self._search(node.inside, query, k, best)
            tau = best[-1][0] if len(best) == k else DESCRIPTOR_BITS + 1
            if d + tau >= node.radius:
                self._search(node.outside, query, k, best)
        else:
            self._search(node.outside, query, k, best)
            tau = best[-1][0] if len(best) == k else DESCRIPTOR_BITS + 1
            if d - tau < node.radius:
                self._search(node.inside, query, k, best)


def match_descriptors(a, b, max_distance: int = 64, ratio: float = 0.8,
                      force_index: str | None = None) -> list[Match]:
    """One-to-one descriptor matches under Hamming distance.

    A candidate survives when it (1) is within max_distance bits, (2)
    passes the nearest/second-nearest ratio test, and (3) is the mutual
    best match in both directions. Output is sorted by index_i.
    """
    if not (0 < ratio <= 1):
        raise ValueError("ratio must lie in (0, 1]")
    if max_distance > DESCRIPTOR_BITS:
        raise ValueError(f"max_distance cannot exceed {DESCRIPTOR_BITS}")
    da = descriptor_matrix(a)
    db = descriptor_matrix(b)
    if len(da) == 0 or len(db) == 0:
        return []

    fwd = HammingIndex(db, force=force_index)
    d_ab, i_ab = fwd.knn(da, 2)
    rev = HammingIndex(da, force=force_index)
    d_ba, i_ba = rev.knn(db, 1)

    matches = []
    for i in range(len(da)):
        j = int(i_ab[i, 0])
        d1 = int(d_ab[i, 0])
        if j < 0 or d1 > max_distance:
            continue
        d2 = int(d_ab[i, 1])
        if i_ab[i, 1] >= 0 and not (d1 < ratio * d2):
            continue
        if int(i_ba[j, 0]) != i:  # mutual best
            continue
        matches.append(Match(index_i=i, index_j=j, hamming_distance=d1))
    return matches


# --- edges --------------------------------------------------------------------


def detect_edges(image: np.ndarray, low_thresh: float = 50.0,
                 high_thresh: float = 150.0, sigma: float = 1.4) -> EdgeMap:
    """Canny edges after Gaussian smoothing.

    Thresholds act on the 8-bit gradient magnitude (hysteresis linking
    between them); sigma controls the pre-smoothing kernel.
    """
    if image is None or image.size == 0:
        raise EmptyImageError("cannot detect edges on an empty image")
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValueError("expected an 8-bit grayscale image")
    if not (0 < low_thresh < high_thresh):
        raise ValueError("thresholds must satisfy 0 < low < high")
    smoothed = cv2.GaussianBlur(image, (0, 0), sigma) if sigma > 0 else image
    edges = cv2.Canny(smoothed, low_thresh, high_thresh)
    return EdgeMap(edges > 0)


# --- L-shape junctions ----------------------------------------------------------

JUNCTION_WINDOW = 15          # side of the local fitting window, pixels
JUNCTION_INLIER_TOL = 1.5     # point-to-line distance for sampled points, pixels
JUNCTION_ANGLE_MIN = np.deg2rad(30.0)
JUNCTION_ANGLE_MAX = np.deg2rad(150.0)
_RANSAC_DRAWS = 40
# Hypothesis gate: tighter than the sampling gate so a diagonal through the
# corner cannot out-vote a true arm by absorbing the other arm's first pixels.
_RANSAC_TOL = 1.0


def _local_moments(mask: np.ndarray, window: int):
    """Windowed count, centroid, and 2x2 scatter of edge pixels, per pixel."""
    m = mask.astype(np.float32)
    h, w = m.shape
    xs = np.arange(w, dtype=np.float32)[None, :].repeat(h, axis=0)
    ys = np.arange(h, dtype=np.float32)[:, None].repeat(w, axis=1)
    k = (window, window)

    def box(img):
        return cv2.boxFilter(img, -1, k, normalize=False, borderType=cv2.BORDER_CONSTANT)

    n = box(m)
    sx = box(m * xs)
    sy = box(m * ys)
    sxx = box(m * xs * xs)
    syy = box(m * ys * ys)
    sxy = box(m * xs * ys)
    return n, sx, sy, sxx, syy, sxy


def _corner_candidates(edges: EdgeMap, window: int, min_count: int):
    """Edge pixels whose local scatter is 2-dimensional, ranked by the
    smaller eigenvalue of the windowed covariance."""
    n, sx, sy, sxx, syy, sxy = _local_moments(edges.mask, window)
    with np.errstate(invalid="ignore", divide="ignore"):
        mx = sx / n
        my = sy / n
        cxx = sxx / n - mx * mx
        cyy = syy / n - my * my
        cxy = sxy / n - mx * my
    tr = cxx + cyy
    det = cxx * cyy - cxy * cxy
    disc = np.sqrt(np.maximum(tr * tr / 4 - det, 0.0))
    lam1 = tr / 2 + disc
    lam2 = tr / 2 - disc
    ok = edges.mask & (n >= min_count) & (lam2 > 0.08 * np.maximum(lam1, 1e-9)) & (lam2 > 0.5)
    ys, xs = np.nonzero(ok)
    if len(xs) == 0:
        return np.zeros((0, 2), dtype=int), np.zeros(0)
    score = lam2[ys, xs]
    order = np.lexsort((xs, ys, -score))
    return np.column_stack([xs, ys])[order], score[order]


def _nms(candidates: np.ndarray, radius: float, cap: int):
    kept = []
    for c in candidates:
        if all((c[0] - k[0]) ** 2 + (c[1] - k[1]) ** 2 > radius * radius for k in kept):
            kept.append(c)
            if len(kept) >= cap:
                break
    return kept


def _line_distances(points: np.ndarray, origin: np.ndarray, direction: np.ndarray):
    rel = points - origin
    return np.abs(rel[:, 0] * direction[1] - rel[:, 1] * direction[0])


def _ransac_line(points: np.ndarray, rng, tol: float, draws: int):
    """Best 2-point line hypothesis by inlier count (ties: first drawn)."""
    n = len(points)
    if n < 2:
        return None
    ia = rng.integers(0, n, size=draws)
    ib = rng.integers(0, n, size=draws)
    good = ia != ib
    ia, ib = ia[good], ib[good]
    if len(ia) == 0:
        return None
    d = points[ib] - points[ia]
    norm = np.linalg.norm(d, axis=1)
    keep = norm > 1e-9
    ia, d, norm = ia[keep], d[keep], norm[keep]
    if len(ia) == 0:
        return None
    dirs = d / norm[:, None]
    rel = points[None, :, :] - points[ia][:, None, :]
    dist = np.abs(rel[:, :, 0] * dirs[:, 1:2] - rel[:, :, 1] * dirs[:, 0:1])
    counts = (dist <= tol).sum(axis=1)
    best = int(np.argmax(counts))
    return dist[best] <= tol


def _segment_fit(seed_points: np.ndarray, corner: np.ndarray, min_count: int,
                 reach_points: np.ndarray, max_reach: float):
    """Direction and supporting points of one junction arm.

    Starts from the arm's RANSAC inliers, then iterates: total-least-squares
    direction (apex pixels excluded, since corner rounding tilts the fit),
    support regathered from edge pixels within JUNCTION_INLIER_TOL of the
    line through the corner, out to max_reach along the arm. Canny jogs its
    path for a few pixels where the gradient turns at a corner, so direction
    support deliberately reaches past the detection window.
    """
    kept = seed_points
    d = _principal_direction(kept)
    if ((kept - corner) @ d).sum() < 0:
        d = -d
    for _ in range(3):
        proj = (reach_points - corner) @ d
        perp = _line_distances(reach_points, corner, d)
        sel = (perp <= JUNCTION_INLIER_TOL) & (proj > -1.0) & (proj <= max_reach)
        kept = reach_points[sel]
        if len(kept) < min_count:
            return None
        away = kept[np.linalg.norm(kept - corner, axis=1) > 2.0]
        basis = away if len(away) >= 2 else kept
        d_new = _principal_direction(basis)
        if ((kept - corner) @ d_new).sum() < 0:
            d_new = -d_new
        d = d_new
    kept = kept[_line_distances(kept, corner, d) <= JUNCTION_INLIER_TOL]
    if len(kept) < min_count:
        return None
    order = np.argsort((kept - corner) @ d)
    return d, kept[order]


def detect_lshape_junctions(edges: EdgeMap, min_segment_len: int = 5, *,
                            seed: int = 0, max_junctions: int = 64,
                            window: int = JUNCTION_WINDOW) -> list[LShapeJunction]:
    """Find edge corners where two locally straight segments meet.

    A corner candidate is an edge pixel whose windowed neighborhood has
    genuinely 2-D scatter; two line segments are then RANSAC-fit in that
    window (fixed per-pixel seeding, so the result is deterministic and
    independent of scan order), anchored at the corner, and accepted when
    they meet at 30-150 degrees with >= min_segment_len support each.
    """
    if edges.count == 0:
        return []
    half = window // 2
    candidates, _ = _corner_candidates(edges, window, min_count=2 * min_segment_len)
    kept = _nms(candidates, radius=max(3.0, half / 2), cap=4 * max_junctions)

    all_px = edges.pixels
    junctions = []
    for cand in kept:
        cx, cy = int(cand[0]), int(cand[1])
        sel = (np.abs(all_px[:, 0] - cx) <= half) & (np.abs(all_px[:, 1] - cy) <= half)
        local = all_px[sel].astype(float)
        if len(local) < 2 * min_segment_len:
            continue
        rng = np.random.default_rng((seed << 32) ^ (cy * 2654435761 + cx))

        in1 = _ransac_line(local, rng, _RANSAC_TOL, _RANSAC_DRAWS)
        if in1 is None or in1.sum() < min_segment_len:
            continue
        rest = local[~in1]
        if len(rest) < min_segment_len:
            continue
        in2 = _ransac_line(rest, rng, _RANSAC_TOL, _RANSAC_DRAWS)
        if in2 is None or in2.sum() < min_segment_len:
            continue

        seg1 = local[in1]
        seg2 = rest[in2]
        corner = _intersection_corner(seg1, seg2, local)
        if corner is None:
            continue
        if any(np.linalg.norm(corner - j.corner) <= half for j in junctions):
            continue  # another candidate already produced this apex

        reach = float(2.5 * half)
        near = (np.abs(all_px[:, 0] - corner[0]) <= reach + 2) & \
               (np.abs(all_px[:, 1] - corner[1]) <= reach + 2)
        reach_pts = all_px[near].astype(float)
        fit1 = _segment_fit(seg1, corner, max(3, min_segment_len), reach_pts, reach)
        fit2 = _segment_fit(seg2, corner, max(3, min_segment_len), reach_pts, reach)
        if fit1 is None or fit2 is None:
            continue
        (d1, p1), (d2, p2) = fit1, fit2
        angle = float(np.arccos(np.clip(d1 @ d2, -1.0, 1.0)))
        if not (JUNCTION_ANGLE_MIN <= angle <= JUNCTION_ANGLE_MAX):
            continue
        junctions.append(LShapeJunction(corner=corner, dir1=d1, dir2=d2,
                                        pts1=p1, pts2=p2, expected_angle=angle))
        if len(junctions) >= max_junctions:
            break
    junctions.sort(key=lambda j: (j.corner[1], j.corner[0]))
    return junctions


def _intersection_corner(seg1, seg2, local):
    """Edge pixel nearest the intersection of the two best-fit lines."""
    c1, d1 = seg1.mean(axis=0), _principal_direction(seg1)
    c2, d2 = seg2.mean(axis=0), _principal_direction(seg2)
    A = np.column_stack([d1, -d2])
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if abs(det) < 1e-9:
        return None
    s = np.linalg.solve(A, c2 - c1)
    meet = c1 + s[0] * d1
    dist = np.linalg.norm(local - meet, axis=1)
    k = int(np.argmin(dist))
    if dist[k] > 3.0:
        return None
    return local[k].copy()


def _principal_direction(points: np.ndarray):
    rel = points - points.mean(axis=0)
    _, v = np.linalg.eigh(rel.T @ rel)
    d = v[:, -1]
    return d / np.linalg.norm(d)
