import os
import logging
from concurrent.futures import ThreadPoolExecutor
from functools import partial
from typing import Dict, List, Optional, Tuple

from .. import __version__
from ..config.settings import resolve_workers
from ..core.errors import DimensionMismatch, MissingFeatures
from ..core.feature_io import feature_path, load_feature_set, write_feature_set
from ..core.ingestor import Dataset, Sequence
from ..models.descriptors import FeatureSet, metric_for
from ..models.detectors import DetectorConfig
from ..models.registry import extract_features, get_descriptor, get_detector
from .evaluator import ALL_INDICES, EvalConfig, EvalReport, aggregate, evaluate_sequence

EXTERNAL = "external"


def _map(func, items: list, workers: int) -> list:
    """Ordered map, threaded when more than one worker is requested."""
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(func, items))
    return [func(item) for item in items]


def _extract_one(key: Tuple[str, int], dataset: Dataset, detector: str, descriptor: str,
                 det_cfg: DetectorConfig) -> FeatureSet:
    sequence_id, j = key
    return extract_features(dataset.by_id(sequence_id).image(j), detector, descriptor, det_cfg)


def _load_one(key: Tuple[str, int], featdir: str) -> FeatureSet:
    path = feature_path(featdir, *key)
    if not os.path.isfile(path):
        raise MissingFeatures(f"Feature file {path} not found")
    return load_feature_set(path)


def compute_features(dataset: Dataset, detector: str, descriptor: str, det_cfg: DetectorConfig,
                     workers: int = 1) -> Dict[Tuple[str, int], FeatureSet]:
    """detect + describe once per image; the result is the per-run feature cache."""
    get_detector(detector)
    get_descriptor(descriptor)
    keys = [(seq.id, j) for seq in dataset.sequences for j in ALL_INDICES]
    logging.info(f"🚀 Extracting {detector}+{descriptor} features for {len(keys)} images")
    func = partial(_extract_one, dataset=dataset, detector=detector, descriptor=descriptor, det_cfg=det_cfg)
    features = dict(zip(keys, _map(func, keys, workers)))
    total = sum(len(fs) for fs in features.values())
    logging.info(f"✅ Extracted {total} keypoints ({total / max(len(keys), 1):.1f} per image)")
    return features


def load_external_features(dataset: Dataset, featdir: str, workers: int = 1) -> Dict[Tuple[str, int], FeatureSet]:
    """Reads "<featdir>/<sequence>/<j>.feat" for every image of the dataset."""
    keys = [(seq.id, j) for seq in dataset.sequences for j in ALL_INDICES]
    logging.info(f"🚀 Loading external features for {len(keys)} images from {featdir}")
    features = dict(zip(keys, _map(partial(_load_one, featdir=featdir), keys, workers)))
    shapes = {(fs.kind, fs.dim) for fs in features.values()}
    if len(shapes) > 1:
        raise DimensionMismatch(f"External feature files disagree on descriptor kind/dimension: {sorted(shapes)}")
    return features


def export_features(dataset: Dataset, detector: str, descriptor: str, out_dir: str,
                    det_cfg: DetectorConfig, workers: int = 1) -> int:
    """Writes one FEATB file per image; returns the number of files written."""
    features = compute_features(dataset, detector, descriptor, det_cfg, workers)
    for (sequence_id, j), fs in features.items():
        write_feature_set(feature_path(out_dir, sequence_id, j), fs)
    logging.info(f"✅ Wrote {len(features)} feature files to {out_dir}")
    return len(features)


def _selected(dataset: Dataset, split: str) -> List[Sequence]:
    if split == "all":
        return list(dataset.sequences)
    return dataset.of_kind(split)


def run_evaluation(dataset: Dataset, detector: str, descriptor: str, cfg: EvalConfig,
                   external: Optional[str] = None,
                   features: Optional[Dict[Tuple[str, int], FeatureSet]] = None) -> EvalReport:
    """Runs every requested task over `cfg.reps` repetitions.

    Features come from `features` when given, else from `external` FEATB files,
    else from the named detector and descriptor. Distractors are drawn from the
    whole dataset; `cfg.split` only restricts which sequences are evaluated.
    """
    workers = resolve_workers(cfg.workers)
    det_cfg = DetectorConfig(max_keypoints=cfg.max_keypoints)
    if features is None:
        if external:
            features = load_external_features(dataset, external, workers)
        else:
            features = compute_features(dataset, detector, descriptor, det_cfg, workers)

    kinds = {fs.kind for fs in features.values()}
    metric = metric_for(kinds.pop() if kinds else "binary", cfg.distance)

    sequences = _selected(dataset, cfg.split)
    units = [(rep, seq) for rep in range(1, cfg.reps + 1) for seq in sequences]
    logging.info(
        f"🚀 Evaluating {detector}+{descriptor}: {len(sequences)} sequences x {cfg.reps} reps "
        f"({', '.join(cfg.tasks)}; {metric} distance; {workers} worker(s))"
    )

    def run_unit(unit):
        rep, seq = unit
        return evaluate_sequence(dataset, features, seq, rep, cfg, metric)

    outcomes = _map(run_unit, units, workers)
    results = aggregate(outcomes, cfg)

    config = cfg.echo()
    config["detector_config"] = det_cfg.model_dump(mode="json")
    report = EvalReport(
        detector=detector,
        descriptor=descriptor,
        config=config,
        dataset_digest=dataset.digest,
        version=__version__,
        results=results,
    )
    for r in results:
        if r.split == "mean":
            logging.info(f"📊 {detector}+{descriptor} {r.task}: mAP {r.map:.4f} ± {r.std:.4f}")
    return report


def sweep(dataset: Dataset, detectors: List[str], descriptors: List[str], cfg: EvalConfig) -> List[EvalReport]:
    """Evaluates every DET+DESC combination."""
    for name in detectors:
        get_detector(name)
    for name in descriptors:
        get_descriptor(name)
    reports = []
    for detector in detectors:
        for descriptor in descriptors:
            reports.append(run_evaluation(dataset, detector, descriptor, cfg))
    return reports
