# detectors.py
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from sklearn.neighbors import KDTree

from ..core.errors import ImageTooSmall, OutOfBounds
from ..core.imaging import FloatImage, GrayImage, gaussian_blur, sobel_gradients

ORIENTATION_RADIUS = 15

# Bresenham circle of radius 3, clockwise from 12 o'clock, as (dx, dy)
FAST_RING = (
    (0, -3), (1, -3), (2, -2), (3, -1),
    (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1),
    (-3, 0), (-3, -1), (-2, -2), (-1, -3),
)


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    score: float = 0.0
    orientation: float = 0.0
    scale: float = 1.0


class DetectorConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    harris_k: float = Field(default=0.04, gt=0)
    harris_sigma_d: float = Field(default=1.0, gt=0)
    harris_sigma_i: float = Field(default=2.0, gt=0)
    fast_threshold: int = Field(default=20, gt=0)
    fast_arc: int = Field(default=9, ge=9, le=16)
    gftt_quality: float = Field(default=0.01, gt=0, le=1)
    nms_radius: float = Field(default=5, gt=0)
    max_keypoints: int = Field(default=500, gt=0)
    # ceil(31/2 * sqrt(2)) + 1: a rotated 31x31 patch always fits
    border_margin: int = Field(default=22, gt=0)


DEFAULT_CONFIG = DetectorConfig()


def _require_size(img: GrayImage, minimum: int, name: str):
    if img.width < minimum or img.height < minimum:
        raise ImageTooSmall(f"{name} needs at least {minimum}x{minimum} pixels, got {img.width}x{img.height}")


def _ranking_key(kp: Keypoint):
    return (-kp.score, kp.y, kp.x)


# ---------------------------------------------------------------------------
# Selection helpers
# ---------------------------------------------------------------------------

def nms(keypoints: List[Keypoint], radius: float) -> List[Keypoint]:
    """Greedy suppression in descending score order (ties: ascending y, then x).

    A keypoint is dropped when a survivor lies within `radius` of it.
    """
    if not keypoints:
        return []
    ordered = sorted(keypoints, key=_ranking_key)
    points = np.array([[kp.x, kp.y] for kp in ordered], dtype=np.float64)
    neighbours = KDTree(points).query_radius(points, r=radius)

    suppressed = np.zeros(len(ordered), dtype=bool)
    survivors = []
    for i, kp in enumerate(ordered):
        if suppressed[i]:
            continue
        survivors.append(kp)
        suppressed[neighbours[i]] = True
    return survivors


def top_k(keypoints: List[Keypoint], k: int) -> List[Keypoint]:
    if k <= 0:
        return []
    return sorted(keypoints, key=_ranking_key)[:k]


def _margin_mask(shape: Tuple[int, int], margin: int) -> np.ndarray:
    h, w = shape
    mask = np.zeros(shape, dtype=bool)
    if h - 2 * margin > 0 and w - 2 * margin > 0:
        mask[margin:h - margin, margin:w - margin] = True
    return mask


def _local_maxima(response: np.ndarray) -> np.ndarray:
    padded = np.pad(response, 1, mode="constant", constant_values=-np.inf)
    h, w = response.shape
    peak = np.ones(response.shape, dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            peak &= response >= padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
    return peak


def _to_keypoints(mask: np.ndarray, scores: np.ndarray) -> List[Keypoint]:
    ys, xs = np.nonzero(mask)
    return [Keypoint(float(x), float(y), float(scores[y, x])) for y, x in zip(ys, xs)]


def _select_peaks(response: np.ndarray, cfg: DetectorConfig) -> List[Keypoint]:
    peak_value = float(response.max())
    if peak_value <= 0:
        return []
    mask = (
        _local_maxima(response)
        & (response > cfg.gftt_quality * peak_value)
        & _margin_mask(response.shape, cfg.border_margin)
    )
    return top_k(nms(_to_keypoints(mask, response), cfg.nms_radius), cfg.max_keypoints)


# ---------------------------------------------------------------------------
# Harris / GFTT
# ---------------------------------------------------------------------------

def structure_tensor(img: GrayImage, cfg: DetectorConfig = DEFAULT_CONFIG):
    """Gaussian-integrated gradient outer products (Sxx, Syy, Sxy)."""
    gx, gy = sobel_gradients(gaussian_blur(img, cfg.harris_sigma_d))
    ix, iy = gx.data, gy.data
    sxx = gaussian_blur(FloatImage(ix * ix), cfg.harris_sigma_i).data
    syy = gaussian_blur(FloatImage(iy * iy), cfg.harris_sigma_i).data
    sxy = gaussian_blur(FloatImage(ix * iy), cfg.harris_sigma_i).data
    return sxx, syy, sxy


def harris_response(img: GrayImage, cfg: DetectorConfig = DEFAULT_CONFIG) -> np.ndarray:
    sxx, syy, sxy = structure_tensor(img, cfg)
    det = sxx * syy - sxy * sxy
    trace = sxx + syy
    return det - cfg.harris_k * trace * trace


def min_eigenvalue(img: GrayImage, cfg: DetectorConfig = DEFAULT_CONFIG) -> np.ndarray:
    sxx, syy, sxy = structure_tensor(img, cfg)
    det = sxx * syy - sxy * sxy
    trace = sxx + syy
    discriminant = np.maximum(trace * trace - 4.0 * det, 0.0)
    return (trace - np.sqrt(discriminant)) / 2.0


def harris(img: GrayImage, cfg: DetectorConfig = DEFAULT_CONFIG) -> List[Keypoint]:
    _require_size(img, 16, "harris")
    return _select_peaks(harris_response(img, cfg), cfg)


def gftt(img: GrayImage, cfg: DetectorConfig = DEFAULT_CONFIG) -> List[Keypoint]:
    _require_size(img, 16, "gftt")
    return _select_peaks(min_eigenvalue(img, cfg), cfg)


# ---------------------------------------------------------------------------
# FAST
# ---------------------------------------------------------------------------

def segment_test(diff: np.ndarray, threshold: int, arc: int) -> Tuple[np.ndarray, np.ndarray]:
    """Segment test over ring-minus-centre differences.

    `diff` holds the 16 ring positions on axis 0; the remaining axes are
    arbitrary (one ring per column, or a whole image plane). Returns the
    corner mask and the score: the sum of |ring - centre| over the qualifying
    contiguous arc. With arc >= 9 at most one arc can qualify.
    """
    diff = np.asarray(diff, dtype=np.int32)
    corner = np.zeros(diff.shape[1:], dtype=bool)
    score = np.zeros(diff.shape[1:], dtype=np.int64)
    magnitude = np.abs(diff)
    for side in (diff > threshold, diff < -threshold):
        windows = [
            np.logical_and.reduce(side[[(start + k) % 16 for k in range(arc)]], axis=0)
            for start in range(16)
        ]
        for k in range(16):
            member = np.logical_or.reduce([windows[(k - j) % 16] for j in range(arc)], axis=0)
            score += np.where(member, magnitude[k], 0)
        corner |= np.logical_or.reduce(windows, axis=0)
    return corner, score


def fast_corner_map(img: GrayImage, threshold: int, arc: int) -> Tuple[np.ndarray, np.ndarray]:
    """Pre-NMS segment-test result for every pixel at least 3 px from the frame."""
    data = img.data.astype(np.int32)
    h, w = data.shape
    corner = np.zeros((h, w), dtype=bool)
    score = np.zeros((h, w), dtype=np.int64)
    if h < 7 or w < 7:
        return corner, score
    centre = data[3:h - 3, 3:w - 3]
    diff = np.stack([data[3 + dy:h - 3 + dy, 3 + dx:w - 3 + dx] - centre for dx, dy in FAST_RING])
    inner_corner, inner_score = segment_test(diff, threshold, arc)
    corner[3:h - 3, 3:w - 3] = inner_corner
    score[3:h - 3, 3:w - 3] = np.where(inner_corner, inner_score, 0)
    return corner, score


def fast(img: GrayImage, cfg: DetectorConfig = DEFAULT_CONFIG) -> List[Keypoint]:
    _require_size(img, 7, "fast")
    corner, score = fast_corner_map(img, cfg.fast_threshold, cfg.fast_arc)
    mask = corner & _margin_mask(corner.shape, cfg.border_margin)
    return top_k(nms(_to_keypoints(mask, score), cfg.nms_radius), cfg.max_keypoints)


# ---------------------------------------------------------------------------
# Orientation / ORB
# ---------------------------------------------------------------------------

def _disc_offsets(radius: int) -> Tuple[np.ndarray, np.ndarray]:
    v, u = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    inside = u * u + v * v <= radius * radius
    return u * inside, v * inside


def orient_ic(img: GrayImage, kp: Keypoint, radius: int = ORIENTATION_RADIUS) -> float:
    """Intensity-centroid angle atan2(m01, m10) over a centred disc."""
    cx, cy = int(round(kp.x)), int(round(kp.y))
    if cx - radius < 0 or cy - radius < 0 or cx + radius >= img.width or cy + radius >= img.height:
        raise OutOfBounds(f"Disc of radius {radius} at ({cx}, {cy}) leaves the {img.width}x{img.height} image")
    patch = img.data[cy - radius:cy + radius + 1, cx - radius:cx + radius + 1].astype(np.int64)
    u, v = _disc_offsets(radius)
    m10 = int(np.sum(u * patch))
    m01 = int(np.sum(v * patch))
    if m10 == 0 and m01 == 0:
        return 0.0
    return math.atan2(m01, m10)


def orb(img: GrayImage, cfg: DetectorConfig = DEFAULT_CONFIG) -> List[Keypoint]:
    """FAST corners re-scored by the Harris response and oriented by intensity centroid."""
    _require_size(img, 16, "orb")
    corner, _ = fast_corner_map(img, cfg.fast_threshold, cfg.fast_arc)
    margin = max(cfg.border_margin, ORIENTATION_RADIUS)
    mask = corner & _margin_mask(corner.shape, margin)
    response = harris_response(img, cfg)
    selected = top_k(nms(_to_keypoints(mask, response), cfg.nms_radius), cfg.max_keypoints)
    return [
        Keypoint(kp.x, kp.y, kp.score, orient_ic(img, kp), kp.scale)
        for kp in selected
    ]

