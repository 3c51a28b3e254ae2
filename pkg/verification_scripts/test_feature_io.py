import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from pipeline.core.errors import DimensionMismatch, HeaderMismatch, NonNumericToken, RowArityError
from pipeline.core.feature_io import feature_path, load_feature_set, load_features, write_feature_set, write_features
from pipeline.models.descriptors import BINARY, FLOAT, FeatureSet
from pipeline.models.detectors import Keypoint


def _write(tmp_path, text):
    path = tmp_path / "1.feat"
    path.write_text(text)
    return str(path)


def test_binary_file_layout(tmp_path):
    descriptors = np.zeros((1, 32), dtype=np.uint8)
    descriptors[0, 0] = 0xAB
    path = str(tmp_path / "a.feat")
    write_features(path, [Keypoint(10.5, 20.0, 3.25, -1.5)], descriptors, BINARY, 256)
    lines = open(path).read().splitlines()
    assert lines[0] == "FEATB 1 binary 256"
    assert lines[1] == "10.5 20 3.25 -1.5 ab" + "0" * 62


def test_binary_and_float_reload(tmp_path):
    rng = np.random.default_rng(30)
    keypoints = [Keypoint(float(x), float(y), float(s), float(o))
                 for x, y, s, o in rng.uniform(-3, 300, size=(25, 4))]

    binary = FeatureSet(keypoints, rng.integers(0, 256, size=(25, 32), dtype=np.uint8), BINARY)
    path = feature_path(str(tmp_path), "v_seq", 3)
    write_feature_set(path, binary)
    assert path.endswith(os.path.join("v_seq", "3.feat"))
    loaded = load_feature_set(path)
    assert loaded.kind == BINARY and np.array_equal(loaded.descriptors, binary.descriptors)
    assert np.allclose(loaded.xy, binary.xy, rtol=1e-8)

    floats = FeatureSet(keypoints, rng.normal(size=(25, 16)), FLOAT)
    write_feature_set(path, floats)
    loaded = load_feature_set(path)
    assert loaded.kind == FLOAT and loaded.dim == 16
    assert np.allclose(loaded.descriptors, floats.descriptors, rtol=1e-8)


def test_rewrite_is_byte_identical(tmp_path):
    rng = np.random.default_rng(31)
    keypoints = [Keypoint(float(x), float(y)) for x, y in rng.uniform(0, 100, size=(10, 2))]
    features = FeatureSet(keypoints, rng.normal(size=(10, 8)), FLOAT)
    first, second = str(tmp_path / "a.feat"), str(tmp_path / "b.feat")
    write_feature_set(first, features)
    write_feature_set(second, load_feature_set(first))
    assert open(first, "rb").read() == open(second, "rb").read()


def test_empty_file_body_and_blank_lines(tmp_path):
    keypoints, descriptors, kind = load_features(_write(tmp_path, "FEATB 1 float 4\n\n"))
    assert keypoints == [] and descriptors.shape == (0, 4) and kind == FLOAT
    keypoints, descriptors, _ = load_features(_write(tmp_path, "FEATB 1 binary 16\n1 2 0 0 ffff\n\n"))
    assert len(keypoints) == 1 and descriptors.tolist() == [[255, 255]]


@pytest.mark.parametrize("text, error", [
    ("", HeaderMismatch),
    ("FEATX 1 binary 256\n", HeaderMismatch),
    ("FEATB 2 binary 256\n", HeaderMismatch),
    ("FEATB 1 ternary 256\n", HeaderMismatch),
    ("FEATB 1 binary 12\n", HeaderMismatch),
    ("FEATB 1 float x\n", HeaderMismatch),
    ("FEATB 1 binary 16\n1 2 0 ffff\n", RowArityError),
    ("FEATB 1 binary 16\n1 2 0 0 ffff 00\n", RowArityError),
    ("FEATB 1 binary 16\n1 2 0 0 ffffff\n", DimensionMismatch),
    ("FEATB 1 binary 16\n1 2 0 0 zzzz\n", NonNumericToken),
    ("FEATB 1 float 3\n1 2 0 0 1 2\n", DimensionMismatch),
    ("FEATB 1 float 3\n1 2 0 0 1 2 3 4\n", DimensionMismatch),
    ("FEATB 1 float 2\n1 2 0\n", RowArityError),
    ("FEATB 1 float 2\n1 y 0 0 1 2\n", NonNumericToken),
    ("FEATB 1 float 2\n1 2 0 0 1 two\n", NonNumericToken),
])
def test_malformed_files(tmp_path, text, error):
    with pytest.raises(error):
        load_features(_write(tmp_path, text))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
