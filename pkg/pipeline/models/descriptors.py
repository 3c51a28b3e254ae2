# descriptors.py
import math
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Tuple, Union

import numpy as np

from ..core.errors import EmptyCandidateSet, IncompatibleDistance, OutOfBounds
from ..core.imaging import FloatImage, GrayImage, gaussian_blur
from ..core.rng import Xorshift64
from .detectors import Keypoint

DESCRIPTOR_BITS = 256
DESCRIPTOR_BYTES = DESCRIPTOR_BITS // 8
PATCH_SIZE = 16
PATTERN_SEED = 0x9E3779B97F4A7C15
PATTERN_RADIUS = 15
PATTERN_SIGMA = 31 / 5
BRIEF_SMOOTHING = 2.0
ORIENTATION_BINS = 30

BINARY = "binary"
FLOAT = "float"

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint16)


@dataclass(frozen=True, eq=False)
class SamplingPattern:
    """256 test pairs as integer offsets (dx, dy) in [-15, 15]^2."""

    p: np.ndarray
    q: np.ndarray


@dataclass(eq=False)
class FeatureSet:
    """Keypoints of one image together with their descriptor rows."""

    keypoints: List[Keypoint]
    descriptors: np.ndarray
    kind: str
    xy: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.xy = np.array([[kp.x, kp.y] for kp in self.keypoints], dtype=np.float64).reshape(-1, 2)
        if self.kind not in (BINARY, FLOAT):
            raise ValueError(f"Descriptor kind must be {BINARY!r} or {FLOAT!r}, got {self.kind!r}")
        rows = np.asarray(self.descriptors, dtype=np.uint8 if self.kind == BINARY else np.float64)
        if rows.ndim != 2 or rows.shape[0] != len(self.keypoints):
            raise ValueError(f"{len(self.keypoints)} keypoints but descriptor array of shape {rows.shape}")
        self.descriptors = rows

    def __len__(self):
        return len(self.keypoints)

    @property
    def dim(self) -> int:
        width = self.descriptors.shape[1]
        return width * 8 if self.kind == BINARY else width


# ---------------------------------------------------------------------------
# Sampling pattern
# ---------------------------------------------------------------------------

def make_pattern(seed: int = PATTERN_SEED) -> SamplingPattern:
    generator = Xorshift64(seed)
    points = []
    while len(points) < 2 * DESCRIPTOR_BITS:
        dx = math.floor(generator.next_gaussian(PATTERN_SIGMA) + 0.5)
        dy = math.floor(generator.next_gaussian(PATTERN_SIGMA) + 0.5)
        if abs(dx) <= PATTERN_RADIUS and abs(dy) <= PATTERN_RADIUS:
            points.append((dx, dy))
    pairs = np.array(points, dtype=np.int64).reshape(DESCRIPTOR_BITS, 2, 2)
    p, q = pairs[:, 0, :].copy(), pairs[:, 1, :].copy()
    p.setflags(write=False)
    q.setflags(write=False)
    return SamplingPattern(p, q)


@lru_cache(maxsize=4)
def default_pattern(seed: int = PATTERN_SEED) -> SamplingPattern:
    return make_pattern(seed)


def quantize_angle(theta: float) -> int:
    step = 2.0 * math.pi / ORIENTATION_BINS
    return int(math.floor(theta / step + 0.5)) % ORIENTATION_BINS


def _rotate_offsets(offsets: np.ndarray, angle_bin: int) -> np.ndarray:
    if angle_bin == 0:
        return offsets
    angle = angle_bin * 2.0 * math.pi / ORIENTATION_BINS
    c, s = math.cos(angle), math.sin(angle)
    x, y = offsets[:, 0].astype(np.float64), offsets[:, 1].astype(np.float64)
    rotated = np.column_stack([c * x - s * y, s * x + c * y])
    return np.floor(rotated + 0.5).astype(np.int64)


@lru_cache(maxsize=8)
def _steered_tables(pattern: SamplingPattern) -> Tuple[np.ndarray, np.ndarray]:
    """(30, 256, 2) rotated copies of p and q, one per orientation bin."""
    p = np.stack([_rotate_offsets(pattern.p, b) for b in range(ORIENTATION_BINS)])
    q = np.stack([_rotate_offsets(pattern.q, b) for b in range(ORIENTATION_BINS)])
    return p, q


# ---------------------------------------------------------------------------
# Binary descriptors
# ---------------------------------------------------------------------------

def smooth_for_brief(img: GrayImage) -> FloatImage:
    return gaussian_blur(img, BRIEF_SMOOTHING)


def _as_smoothed(img: Union[GrayImage, FloatImage]) -> np.ndarray:
    # GrayImage input is smoothed here; a FloatImage is taken as already smoothed
    if isinstance(img, GrayImage):
        return smooth_for_brief(img).data
    return img.data


def _centres(keypoints: List[Keypoint]) -> np.ndarray:
    return np.array([[int(round(kp.x)), int(round(kp.y))] for kp in keypoints], dtype=np.int64).reshape(-1, 2)


def _binary_tests(smoothed: np.ndarray, centres: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Packed bits; p and q are (n, 256, 2) offsets or a shared (256, 2) pattern."""
    h, w = smoothed.shape
    px = centres[:, None, 0] + p[..., 0]
    py = centres[:, None, 1] + p[..., 1]
    qx = centres[:, None, 0] + q[..., 0]
    qy = centres[:, None, 1] + q[..., 1]
    for xs, ys in ((px, py), (qx, qy)):
        if np.any(xs < 0) or np.any(ys < 0) or np.any(xs >= w) or np.any(ys >= h):
            raise OutOfBounds("BRIEF sampling pattern leaves the image; keypoint too close to the border")
    bits = smoothed[py, px] < smoothed[qy, qx]
    return np.packbits(bits, axis=-1)


def brief(img: Union[GrayImage, FloatImage], kp: Keypoint, pattern: SamplingPattern = None) -> np.ndarray:
    return describe_brief(img, [kp], pattern)[0]


def steered_brief(img: Union[GrayImage, FloatImage], kp: Keypoint, pattern: SamplingPattern = None) -> np.ndarray:
    return describe_steered(img, [kp], pattern)[0]


def describe_brief(img, keypoints: List[Keypoint], pattern: SamplingPattern = None) -> np.ndarray:
    pattern = pattern or default_pattern()
    if not keypoints:
        return np.zeros((0, DESCRIPTOR_BYTES), dtype=np.uint8)
    return _binary_tests(_as_smoothed(img), _centres(keypoints), pattern.p[None], pattern.q[None])


def describe_steered(img, keypoints: List[Keypoint], pattern: SamplingPattern = None) -> np.ndarray:
    pattern = pattern or default_pattern()
    if not keypoints:
        return np.zeros((0, DESCRIPTOR_BYTES), dtype=np.uint8)
    p_table, q_table = _steered_tables(pattern)
    bins = np.array([quantize_angle(kp.orientation) for kp in keypoints], dtype=np.int64)
    return _binary_tests(_as_smoothed(img), _centres(keypoints), p_table[bins], q_table[bins])


# ---------------------------------------------------------------------------
# Float patch baseline
# ---------------------------------------------------------------------------

def patch_descriptor(img: GrayImage, kp: Keypoint) -> Tuple[np.ndarray, bool]:
    """Mean-subtracted, L2-normalized 16x16 patch; returns (vector, degenerate)."""
    half = PATCH_SIZE // 2
    cx, cy = int(round(kp.x)), int(round(kp.y))
    if cx - half < 0 or cy - half < 0 or cx + half > img.width or cy + half > img.height:
        raise OutOfBounds(f"16x16 patch at ({cx}, {cy}) leaves the {img.width}x{img.height} image")
    patch = img.data[cy - half:cy + half, cx - half:cx + half].astype(np.float64).ravel()
    centred = patch - patch.mean()
    norm = float(np.linalg.norm(centred))
    if norm < 1e-12:
        return np.zeros(PATCH_SIZE * PATCH_SIZE), True
    return centred / norm, False


def describe_patch(img: GrayImage, keypoints: List[Keypoint]) -> np.ndarray:
    if not keypoints:
        return np.zeros((0, PATCH_SIZE * PATCH_SIZE), dtype=np.float64)
    vectors, degenerate = zip(*(patch_descriptor(img, kp) for kp in keypoints))
    flagged = sum(degenerate)
    if flagged:
        logging.warning(f"⚠️ {flagged} of {len(keypoints)} patches have zero variance; described as all-zero vectors")
    return np.stack(vectors)


# ---------------------------------------------------------------------------
# Distances and matching
# ---------------------------------------------------------------------------

def hamming(a: np.ndarray, b: np.ndarray) -> int:
    return int(_POPCOUNT[np.bitwise_xor(np.asarray(a, np.uint8), np.asarray(b, np.uint8))].sum())


def euclidean(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(a, np.float64) - np.asarray(b, np.float64)))


def metric_for(kind: str, requested: str = "auto") -> str:
    if requested == "auto":
        return "hamming" if kind == BINARY else "euclidean"
    if requested == "hamming" and kind != BINARY:
        raise IncompatibleDistance("Hamming distance requested for float descriptors")
    return requested


def distances_to(query: np.ndarray, candidates: np.ndarray, metric: str) -> np.ndarray:
    """Distances from one descriptor to every candidate row."""
    if metric == "hamming":
        xor = np.bitwise_xor(np.asarray(candidates, np.uint8), np.asarray(query, np.uint8)[None, :])
        return _POPCOUNT[xor].sum(axis=1).astype(np.float64)
    query = np.asarray(query)
    candidates = np.asarray(candidates)
    if query.dtype == np.uint8:
        # binary rows compared as 0/1 bit vectors
        query = np.unpackbits(query).astype(np.float64)
        candidates = np.unpackbits(candidates, axis=1).astype(np.float64)
    return np.linalg.norm(candidates.astype(np.float64) - query.astype(np.float64)[None, :], axis=1)


def distance_matrix(queries: np.ndarray, candidates: np.ndarray, metric: str) -> np.ndarray:
    rows = [distances_to(q, candidates, metric) for q in queries]
    if not rows:
        return np.zeros((0, len(candidates)))
    return np.stack(rows)


def match_nn(query: np.ndarray, candidates: np.ndarray, metric: str = None) -> Tuple[int, float]:
    """Nearest candidate by descriptor distance; ties resolve to the lowest index."""
    candidates = np.asarray(candidates)
    if len(candidates) == 0:
        raise EmptyCandidateSet("match_nn needs at least one candidate")
    metric = metric or ("hamming" if candidates.dtype == np.uint8 else "euclidean")
    distances = distances_to(query, candidates, metric)
    index = int(np.argmin(distances))
    return index, float(distances[index])
