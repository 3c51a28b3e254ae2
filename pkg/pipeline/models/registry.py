"""Name -> implementation tables for detectors and descriptors."""
import logging
from typing import Callable, Dict, List

import numpy as np

from ..core.errors import UnknownDescriptor, UnknownDetector
from ..core.imaging import GrayImage
from . import descriptors as desc
from . import detectors as det
from .descriptors import BINARY, FLOAT, FeatureSet
from .detectors import DEFAULT_CONFIG, DetectorConfig, Keypoint

DETECTORS: Dict[str, Callable[[GrayImage, DetectorConfig], List[Keypoint]]] = {
    "harris": det.harris,
    "gftt": det.gftt,
    "fast": det.fast,
    "orb": det.orb,
}

# name -> (batch extractor, descriptor kind)
DESCRIPTORS: Dict[str, tuple] = {
    "brief": (desc.describe_brief, BINARY),
    "orb": (desc.describe_steered, BINARY),
    "patch": (desc.describe_patch, FLOAT),
}


def get_detector(name: str):
    try:
        return DETECTORS[name]
    except KeyError:
        raise UnknownDetector(
            f"Unknown detector {name!r}; registered: {', '.join(sorted(DETECTORS))}"
        ) from None


def get_descriptor(name: str):
    try:
        return DESCRIPTORS[name]
    except KeyError:
        raise UnknownDescriptor(
            f"Unknown descriptor {name!r}; registered: {', '.join(sorted(DESCRIPTORS))}"
        ) from None


def descriptor_kind(name: str) -> str:
    return get_descriptor(name)[1]


def detect(img: GrayImage, name: str, cfg: DetectorConfig = DEFAULT_CONFIG) -> List[Keypoint]:
    return get_detector(name)(img, cfg)


def describe(img: GrayImage, keypoints: List[Keypoint], name: str) -> np.ndarray:
    extractor, _ = get_descriptor(name)
    return extractor(img, keypoints)


def extract_features(img: GrayImage, detector: str, descriptor: str,
                     cfg: DetectorConfig = DEFAULT_CONFIG) -> FeatureSet:
    """detect followed by describe; keypoints keep the detector's ranking order."""
    kind = descriptor_kind(descriptor)
    keypoints = detect(img, detector, cfg)
    if descriptor == "orb" and detector != "orb":
        # steered BRIEF needs an orientation; non-ORB detectors don't supply one
        keypoints = [
            Keypoint(kp.x, kp.y, kp.score, det.orient_ic(img, kp), kp.scale) for kp in keypoints
        ]
    data = describe(img, keypoints, descriptor)
    if not keypoints:
        logging.debug(f"⚠️ {detector}+{descriptor}: no keypoints on a {img.width}x{img.height} image")
    return FeatureSet(keypoints, data, kind)


def registered() -> Dict[str, List[str]]:
    return {"detectors": sorted(DETECTORS), "descriptors": sorted(DESCRIPTORS)}
