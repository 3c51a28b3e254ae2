"""Synthetic sequences for the verification suite."""
import os
import sys

import numpy as np

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from pipeline.core.geometry import Homography, identity
from pipeline.core.imaging import GrayImage, encode_pgm
from pipeline.core.ingestor import Sequence
from pipeline.models.descriptors import FLOAT, FeatureSet
from pipeline.models.detectors import Keypoint


def textured_image(height: int = 160, width: int = 200, seed: int = 0, block: int = 8) -> GrayImage:
    """Ramp + random blocks + a few rectangles: plenty of corners, few repeats."""
    rng = np.random.default_rng(seed)
    coarse = rng.integers(0, 256, size=(height // block + 1, width // block + 1))
    field = np.kron(coarse, np.ones((block, block)))[:height, :width]
    ramp = np.add.outer(np.arange(height), np.arange(width)) * (255.0 / (height + width))
    img = 0.75 * field + 0.25 * ramp
    for _ in range(4):
        y, x = rng.integers(0, height - 20), rng.integers(0, width - 20)
        img[y:y + 16, x:x + 16] = rng.integers(0, 256)
    return GrayImage(np.clip(img, 0, 255).astype(np.uint8))


def translate(img: GrayImage, dx: int, dy: int) -> GrayImage:
    """Content moves by (+dx, +dy); uncovered pixels replicate the edge."""
    data = img.data
    h, w = data.shape
    padded = np.pad(data, ((abs(dy), abs(dy)), (abs(dx), abs(dx))), mode="edge")
    top, left = abs(dy) - dy, abs(dx) - dx
    return GrayImage(padded[top:top + h, left:left + w])


def translation(dx: float, dy: float) -> Homography:
    return Homography(np.array([[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]]))


def brighten(img: GrayImage, delta: int) -> GrayImage:
    return GrayImage(np.clip(img.data.astype(np.int64) + delta, 0, 255).astype(np.uint8))


def illumination_sequence(seq_id: str, seed: int, size=(160, 200)) -> Sequence:
    ref = textured_image(*size, seed=seed)
    images = tuple([ref] + [brighten(ref, 6 * j) for j in range(1, 6)])
    return Sequence(seq_id, "illumination", images, tuple(identity() for _ in range(5)), digest=f"{seq_id}-{seed}")


def viewpoint_sequence(seq_id: str, seed: int, size=(160, 200)) -> Sequence:
    ref = textured_image(*size, seed=seed)
    shifts = [(j, (j + 1) // 2) for j in range(1, 6)]
    images = tuple([ref] + [translate(ref, dx, dy) for dx, dy in shifts])
    homographies = tuple(translation(dx, dy) for dx, dy in shifts)
    return Sequence(seq_id, "viewpoint", images, homographies, digest=f"{seq_id}-{seed}")


def write_sequence(root: str, seq: Sequence, ext: str = "pgm"):
    seq_dir = os.path.join(root, seq.id)
    os.makedirs(seq_dir, exist_ok=True)
    for j, img in enumerate(seq.images, start=1):
        with open(os.path.join(seq_dir, f"{j}.{ext}"), "wb") as f:
            f.write(encode_pgm(img))
    for j, H in enumerate(seq.homographies, start=2):
        with open(os.path.join(seq_dir, f"H_1_{j}"), "w") as f:
            f.write(H.to_text())
    return seq_dir


def write_dataset(root: str, n_illumination: int = 1, n_viewpoint: int = 1, size=(160, 200)) -> str:
    for k in range(n_illumination):
        write_sequence(root, illumination_sequence(f"i_scene{k}", seed=100 + k, size=size))
    for k in range(n_viewpoint):
        write_sequence(root, viewpoint_sequence(f"v_scene{k}", seed=200 + k, size=size))
    return root


def placeholder_sequence(seq_id: str, kind: str, homographies=None) -> Sequence:
    """Sequence whose images are never looked at (features are supplied directly)."""
    blank = GrayImage(np.zeros((4, 4), dtype=np.uint8))
    homographies = homographies or tuple(identity() for _ in range(5))
    return Sequence(seq_id, kind, tuple([blank] * 6), tuple(homographies), digest=seq_id)


def float_features(points, values) -> FeatureSet:
    """FeatureSet of 1-D float descriptors at the given (x, y) points."""
    keypoints = [Keypoint(float(x), float(y)) for x, y in points]
    if not keypoints:
        descriptors = np.zeros((0, 1))
    else:
        descriptors = np.asarray(values, dtype=np.float64).reshape(len(keypoints), -1)
    return FeatureSet(keypoints, descriptors, FLOAT)


def empty_float_features() -> FeatureSet:
    return float_features([], [])
