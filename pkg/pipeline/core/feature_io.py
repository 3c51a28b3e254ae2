"""FEATB v1: line-oriented text interchange for keypoints and descriptors.

    FEATB 1 <binary|float> <dim>
    x y score orientation <payload>

Binary payloads are dim/4 lowercase hex digits; float payloads are dim
decimals. All real fields use 9 significant digits.
"""
import os
import logging
from typing import List, Tuple

import numpy as np

from ..models.descriptors import BINARY, FLOAT, FeatureSet
from ..models.detectors import Keypoint
from .errors import DimensionMismatch, HeaderMismatch, NonNumericToken, RowArityError

MAGIC = "FEATB"
VERSION = "1"


def feature_path(featdir: str, sequence_id: str, j: int) -> str:
    return os.path.join(featdir, sequence_id, f"{j}.feat")


def _fmt(value: float) -> str:
    return format(float(value), ".9g")


def write_features(path: str, keypoints: List[Keypoint], descriptors: np.ndarray, kind: str, dim: int):
    if kind not in (BINARY, FLOAT):
        raise ValueError(f"Descriptor kind must be {BINARY!r} or {FLOAT!r}, got {kind!r}")
    lines = [f"{MAGIC} {VERSION} {kind} {dim}"]
    rows = np.asarray(descriptors)
    for kp, row in zip(keypoints, rows):
        if kind == BINARY:
            payload = np.asarray(row, dtype=np.uint8).tobytes().hex()
        else:
            payload = " ".join(_fmt(v) for v in row)
        lines.append(f"{_fmt(kp.x)} {_fmt(kp.y)} {_fmt(kp.score)} {_fmt(kp.orientation)} {payload}")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def write_feature_set(path: str, features: FeatureSet):
    write_features(path, features.keypoints, features.descriptors, features.kind, features.dim)


def _parse_header(line: str, path: str) -> Tuple[str, int]:
    parts = line.split()
    if len(parts) != 4 or parts[0] != MAGIC or parts[1] != VERSION or parts[2] not in (BINARY, FLOAT):
        raise HeaderMismatch(f"{path}: expected '{MAGIC} {VERSION} <binary|float> <dim>', found {line.strip()!r}")
    try:
        dim = int(parts[3])
    except ValueError:
        raise HeaderMismatch(f"{path}: descriptor dimension {parts[3]!r} is not an integer") from None
    if dim <= 0 or (parts[2] == BINARY and dim % 8 != 0):
        raise HeaderMismatch(f"{path}: invalid {parts[2]} descriptor dimension {dim}")
    return parts[2], dim


def _floats(tokens: List[str], path: str, line_no: int) -> List[float]:
    try:
        return [float(t) for t in tokens]
    except ValueError as e:
        raise NonNumericToken(f"{path}:{line_no}: {e}") from None


def load_features(path: str) -> Tuple[List[Keypoint], np.ndarray, str]:
    """Returns (keypoints, descriptor rows, kind)."""
    with open(path, "r", encoding="ascii") as f:
        lines = f.read().splitlines()
    if not lines:
        raise HeaderMismatch(f"{path}: empty feature file")
    kind, dim = _parse_header(lines[0], path)

    keypoints, rows = [], []
    for line_no, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        if not tokens:
            continue
        expected = 5 if kind == BINARY else 4 + dim
        if len(tokens) != expected:
            if kind == FLOAT and len(tokens) > 4:
                raise DimensionMismatch(f"{path}:{line_no}: {len(tokens) - 4} values for a {dim}-dim descriptor")
            raise RowArityError(f"{path}:{line_no}: expected {expected} fields, found {len(tokens)}")
        x, y, score, orientation = _floats(tokens[:4], path, line_no)
        keypoints.append(Keypoint(x, y, score, orientation))
        if kind == BINARY:
            payload = tokens[4]
            if len(payload) != dim // 4:
                raise DimensionMismatch(f"{path}:{line_no}: {len(payload)} hex digits for a {dim}-bit descriptor")
            try:
                rows.append(np.frombuffer(bytes.fromhex(payload), dtype=np.uint8))
            except ValueError:
                raise NonNumericToken(f"{path}:{line_no}: payload is not hexadecimal") from None
        else:
            rows.append(np.array(_floats(tokens[4:], path, line_no), dtype=np.float64))

    width = dim // 8 if kind == BINARY else dim
    dtype = np.uint8 if kind == BINARY else np.float64
    descriptors = np.stack(rows) if rows else np.zeros((0, width), dtype=dtype)
    return keypoints, descriptors, kind


def load_feature_set(path: str) -> FeatureSet:
    keypoints, descriptors, kind = load_features(path)
    logging.debug(f"✅ Loaded {len(keypoints)} {kind} features from {path}")
    return FeatureSet(keypoints, descriptors, kind)
