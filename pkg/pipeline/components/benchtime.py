import time
import logging
from typing import Callable, List

import numpy as np
from pydantic import BaseModel

from ..core.errors import BenchError, ClockResolutionError, EmptyDataset, InvalidConfig
from ..core.imaging import GrayImage
from ..core.ingestor import Dataset
from ..models.detectors import DEFAULT_CONFIG, DetectorConfig
from ..models.registry import extract_features, get_descriptor, get_detector

MAX_CLOCK_RESOLUTION = 1e-3


class TimingResult(BaseModel):
    detector: str
    descriptor: str
    images: int
    excluded: int
    warmup: int
    passes: int
    mean_ms: float
    std_ms: float
    min_ms: float
    max_ms: float


def check_clock(name: str = "perf_counter"):
    info = time.get_clock_info(name)
    if not info.monotonic:
        raise ClockResolutionError(f"Clock {name!r} ({info.implementation}) is not monotonic")
    if info.resolution > MAX_CLOCK_RESOLUTION:
        raise ClockResolutionError(
            f"Clock {name!r} resolution {info.resolution * 1e3:.3f} ms exceeds 1 ms; timings would be meaningless"
        )


def time_images(images: List[GrayImage], detector: str, descriptor: str, warmup: int = 2, passes: int = 3,
                cfg: DetectorConfig = DEFAULT_CONFIG,
                clock: Callable[[], int] = time.perf_counter_ns) -> TimingResult:
    """Times detect + describe per image, serially; decoding is not timed."""
    if passes < 1 or warmup < 0:
        raise InvalidConfig(f"need passes >= 1 and warmup >= 0, got passes={passes}, warmup={warmup}")
    get_detector(detector)
    get_descriptor(descriptor)
    check_clock()

    per_image, excluded = [], 0
    for index, img in enumerate(images):
        try:
            for _ in range(warmup):
                extract_features(img, detector, descriptor, cfg)
            samples = []
            for _ in range(passes):
                start = clock()
                extract_features(img, detector, descriptor, cfg)
                samples.append((clock() - start) / 1e6)
        except BenchError as e:
            logging.warning(f"⚠️ Image {index} excluded from timing: {e}")
            excluded += 1
            continue
        per_image.append(float(np.mean(samples)))

    if not per_image:
        raise EmptyDataset(f"No image could be timed for {detector}+{descriptor} ({excluded} excluded)")

    values = np.array(per_image)
    result = TimingResult(
        detector=detector,
        descriptor=descriptor,
        images=len(per_image),
        excluded=excluded,
        warmup=warmup,
        passes=passes,
        mean_ms=float(np.clip(values.mean(), values.min(), values.max())),
        std_ms=float(values.std()),
        min_ms=float(values.min()),
        max_ms=float(values.max()),
    )
    logging.info(f"📊 {detector}+{descriptor}: {result.mean_ms:.3f} ms/image over {result.images} images")
    return result


def time_pipeline(dataset: Dataset, detector: str, descriptor: str, warmup: int = 2, passes: int = 3,
                  cfg: DetectorConfig = DEFAULT_CONFIG) -> TimingResult:
    images = [img for seq in dataset.sequences for img in seq.images]
    if not images:
        raise EmptyDataset("Timing needs a non-empty dataset")
    logging.info(f"🚀 Timing {detector}+{descriptor} on {len(images)} images (warmup {warmup}, passes {passes})")
    return time_images(images, detector, descriptor, warmup, passes, cfg)
