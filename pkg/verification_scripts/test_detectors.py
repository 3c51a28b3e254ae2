import math
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from fixtures import textured_image
from pipeline.core.errors import ImageTooSmall, OutOfBounds
from pipeline.core.imaging import GrayImage
from pipeline.models.detectors import (
    DetectorConfig,
    Keypoint,
    fast,
    fast_corner_map,
    gftt,
    harris,
    min_eigenvalue,
    nms,
    orb,
    orient_ic,
    segment_test,
    top_k,
)


def _white_square() -> GrayImage:
    data = np.zeros((100, 100), dtype=np.uint8)
    data[30:70, 30:70] = 255
    return GrayImage(data)


# ---------------------------------------------------------------------------
# FAST segment test against a cyclic-run oracle
# ---------------------------------------------------------------------------

def _oracle(ring, threshold, arc):
    """Brute force: walk the doubled ring and mark every member of a long enough run."""
    for side in (1, -1):
        flags = [side * d > threshold for d in ring]
        member = [False] * 16
        if all(flags):
            member = [True] * 16
        else:
            start = flags.index(False)
            run = []
            for step in range(1, 17):
                k = (start + step) % 16
                if flags[k]:
                    run.append(k)
                    continue
                if len(run) >= arc:
                    for m in run:
                        member[m] = True
                run = []
        if any(member):
            return True, sum(abs(ring[k]) for k in range(16) if member[k])
    return False, 0


def test_segment_test_matches_oracle():
    rng = np.random.default_rng(7)
    rings = rng.integers(-60, 61, size=(100_000, 16))
    # a share of fully-bright / fully-dark rings and long arcs
    rings[:500] = np.abs(rings[:500]) + 21
    rings[500:1000] = -np.abs(rings[500:1000]) - 21
    threshold, arc = 20, 9
    corner, score = segment_test(rings.T, threshold, arc)
    for i, ring in enumerate(rings.tolist()):
        expected_corner, expected_score = _oracle(ring, threshold, arc)
        assert bool(corner[i]) == expected_corner, ring
        assert int(score[i]) == expected_score, ring


def test_segment_test_other_arcs():
    rng = np.random.default_rng(8)
    rings = rng.integers(-40, 41, size=(5000, 16))
    for arc in (9, 12, 16):
        corner, score = segment_test(rings.T, 10, arc)
        for i, ring in enumerate(rings.tolist()):
            assert (bool(corner[i]), int(score[i])) == _oracle(ring, 10, arc)


def test_fast_corner_map_centre_pixel():
    data = np.full((7, 7), 100, dtype=np.uint8)
    data[3, 3] = 200
    corner, score = fast_corner_map(GrayImage(data), 20, 9)
    assert corner[3, 3] and corner.sum() == 1
    assert score[3, 3] == 16 * 100


# ---------------------------------------------------------------------------
# Harris / GFTT
# ---------------------------------------------------------------------------

def test_harris_finds_square_corners():
    keypoints = harris(_white_square())
    assert len(keypoints) == 4
    for cx, cy in [(30, 30), (69, 30), (30, 69), (69, 69)]:
        assert any(math.hypot(kp.x - cx, kp.y - cy) <= 2 for kp in keypoints)


def test_gftt_finds_square_corners():
    keypoints = gftt(_white_square())
    assert len(keypoints) == 4


def test_constant_image_has_no_keypoints():
    flat = GrayImage(np.full((64, 64), 128, dtype=np.uint8))
    assert harris(flat) == [] and gftt(flat) == [] and fast(flat) == [] and orb(flat) == []


def test_harris_ignores_straight_edge():
    data = np.zeros((64, 64), dtype=np.uint8)
    data[:, 32:] = 255
    assert harris(GrayImage(data)) == []


def test_min_eigenvalue_is_non_negative():
    data = np.zeros((64, 64), dtype=np.uint8)
    data[:, 32:] = 255
    for img in (textured_image(seed=9), _white_square(), GrayImage(data)):
        assert min_eigenvalue(img).min() >= -1e-9


def _island(dx: int = 0, dy: int = 0) -> GrayImage:
    """Texture pasted on a flat background, away from the frame."""
    data = np.full((160, 200), 128, dtype=np.uint8)
    data[50 + dy:114 + dy, 50 + dx:130 + dx] = textured_image(64, 80, seed=10).data
    return GrayImage(data)


@pytest.mark.parametrize("detector", [harris, gftt, fast, orb])
def test_detection_follows_translation(detector):
    base = detector(_island())
    moved = detector(_island(7, 3))
    assert base
    assert sorted((kp.x + 7, kp.y + 3) for kp in base) == sorted((kp.x, kp.y) for kp in moved)


@pytest.mark.parametrize("detector, size", [(harris, 15), (gftt, 15), (orb, 15), (fast, 6)])
def test_too_small(detector, size):
    with pytest.raises(ImageTooSmall):
        detector(GrayImage(np.zeros((size, size), dtype=np.uint8)))


def test_detectors_respect_margin_and_cap():
    img = textured_image(seed=3)
    cfg = DetectorConfig(max_keypoints=50)
    for detector in (harris, gftt, fast, orb):
        keypoints = detector(img, cfg)
        assert 0 < len(keypoints) <= 50
        for kp in keypoints:
            assert 22 <= kp.x <= img.width - 1 - 22
            assert 22 <= kp.y <= img.height - 1 - 22
        scores = [kp.score for kp in keypoints]
        assert scores == sorted(scores, reverse=True)


def test_detection_is_deterministic():
    img = textured_image(seed=4)
    assert fast(img) == fast(img)
    assert orb(img) == orb(img)


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------

def _nms_oracle(keypoints, radius):
    ordered = sorted(keypoints, key=lambda kp: (-kp.score, kp.y, kp.x))
    kept = []
    for kp in ordered:
        if all(math.hypot(kp.x - k.x, kp.y - k.y) > radius for k in kept):
            kept.append(kp)
    return kept


def test_nms_matches_quadratic_scan():
    rng = np.random.default_rng(9)
    for _ in range(20):
        pts = rng.integers(0, 60, size=(150, 2))
        scores = rng.integers(0, 20, size=150)
        keypoints = [Keypoint(float(x), float(y), float(s)) for (x, y), s in zip(pts, scores)]
        assert nms(keypoints, 5.0) == _nms_oracle(keypoints, 5.0)


def test_nms_survivors_are_separated():
    rng = np.random.default_rng(10)
    keypoints = [Keypoint(float(x), float(y), float(rng.random())) for x, y in rng.uniform(0, 100, size=(300, 2))]
    kept = nms(keypoints, 5.0)
    for i, a in enumerate(kept):
        for b in kept[i + 1:]:
            assert math.hypot(a.x - b.x, a.y - b.y) > 5.0


def test_top_k_ties():
    keypoints = [Keypoint(5, 2, 1.0), Keypoint(1, 2, 1.0), Keypoint(9, 1, 1.0), Keypoint(0, 0, 3.0)]
    assert top_k(keypoints, 3) == [Keypoint(0, 0, 3.0), Keypoint(9, 1, 1.0), Keypoint(1, 2, 1.0)]
    assert top_k(keypoints, 0) == []
    assert len(top_k(keypoints, 10)) == 4


# ---------------------------------------------------------------------------
# Orientation
# ---------------------------------------------------------------------------

def test_orientation_follows_rotation():
    rng = np.random.default_rng(11)
    for _ in range(50):
        patch = rng.integers(0, 256, size=(41, 41), dtype=np.uint8)
        kp = Keypoint(20.0, 20.0)
        theta = orient_ic(GrayImage(patch), kp)
        rotated = orient_ic(GrayImage(np.rot90(patch, k=-1)), kp)
        delta = (rotated - theta - math.pi / 2) % (2 * math.pi)
        assert min(delta, 2 * math.pi - delta) < 1e-9


def test_orientation_of_half_bright_disc():
    data = np.zeros((41, 41), dtype=np.uint8)
    data[:, 21:] = 200
    assert abs(orient_ic(GrayImage(data), Keypoint(20.0, 20.0))) < 1e-12


def test_orientation_out_of_bounds():
    with pytest.raises(OutOfBounds):
        orient_ic(GrayImage(np.zeros((40, 40), dtype=np.uint8)), Keypoint(10.0, 20.0))


def test_orb_keypoints_are_oriented():
    keypoints = orb(textured_image(seed=5))
    assert keypoints
    assert any(kp.orientation != 0.0 for kp in keypoints)
    assert all(-math.pi <= kp.orientation <= math.pi for kp in keypoints)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
