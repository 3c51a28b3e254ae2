"""Keypoint verification, image matching and keypoint retrieval.

Every task builds labeled (query, match, distance, label) tuples from the
reference-image queries K' and scores them with average precision. Labels
come from the ground-truth homographies: a match is positive when no other
keypoint of the same target image lies closer to the query's projection.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Mapping, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..config.settings import IMAGES_PER_SEQUENCE, SPLITS, TASKS
from ..core.errors import EmptyKeypointSet, NoPositives, PointAtInfinity
from ..core.geometry import Homography, project, project_many
from ..core.ingestor import Dataset, Sequence
from ..core.rng import derive_rng
from ..models.descriptors import FeatureSet, distance_matrix
from ..models.detectors import Keypoint

TARGET_INDICES = tuple(range(2, IMAGES_PER_SEQUENCE + 1))
ALL_INDICES = tuple(range(1, IMAGES_PER_SEQUENCE + 1))

# (sequence id, image index) -> features of that image
FeatureMap = Mapping[Tuple[str, int], FeatureSet]


class EvalConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_queries: int = Field(default=100, gt=0)
    n_distractor_images: int = Field(default=5, ge=0)
    n_distractor_keypoints: int = Field(default=1000, ge=0)
    reps: int = Field(default=5, ge=1)
    master_seed: int = Field(default=42, ge=0, lt=2**64)
    max_keypoints: int = Field(default=500, gt=0)
    tasks: Tuple[str, ...] = TASKS
    split: Literal["all", "illumination", "viewpoint"] = "all"
    strict: bool = False
    retrieval_granularity: Literal["sequence", "query"] = "sequence"
    distance: Literal["auto", "hamming", "euclidean"] = "auto"
    workers: int = Field(default=1, ge=0)

    @field_validator("tasks")
    @classmethod
    def _known_tasks(cls, value):
        unknown = [t for t in value if t not in TASKS]
        if unknown:
            raise ValueError(f"unknown task(s) {', '.join(unknown)}; choose from {', '.join(TASKS)}")
        if not value:
            raise ValueError("at least one task is required")
        return tuple(t for t in TASKS if t in value)

    def echo(self) -> dict:
        """Effective configuration as recorded in reports; worker count never changes results."""
        return self.model_dump(mode="json", exclude={"workers"})


class LabeledTuple(NamedTuple):
    query: Keypoint
    match: Keypoint
    s: float
    y: int


class TaskResult(BaseModel):
    task: str
    split: str
    ap_per_rep: List[float]
    map: float
    std: float
    skipped_units: int = 0


class EvalReport(BaseModel):
    detector: str
    descriptor: str
    config: dict
    dataset_digest: str
    version: str
    results: List[TaskResult]
    timing: dict = Field(default_factory=dict)

    def result(self, task: str, split: str) -> Optional[TaskResult]:
        for r in self.results:
            if r.task == task and r.split == split:
                return r
        return None


@dataclass(eq=False)
class TupleBlock:
    """Tuples of a query set against one candidate set, stored as parallel arrays."""

    queries: List[Keypoint]
    candidates: List[Keypoint]
    origins: List[Tuple[str, int]]
    query_index: np.ndarray
    candidate_index: np.ndarray
    s: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.s)

    def labeled(self) -> List[LabeledTuple]:
        return [
            LabeledTuple(self.queries[q], self.candidates[c], float(s), int(y))
            for q, c, s, y in zip(self.query_index, self.candidate_index, self.s, self.y)
        ]


@dataclass
class SequenceOutcome:
    """Scores of one (sequence, rep) evaluation unit."""

    sequence_id: str
    kind: str
    rep: int
    verification_s: np.ndarray = field(default_factory=lambda: np.zeros(0))
    verification_y: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    matching: List[float] = field(default_factory=list)
    retrieval: List[float] = field(default_factory=list)
    skipped: Dict[str, int] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Average precision
# ---------------------------------------------------------------------------

def ap_from_arrays(s: np.ndarray, y: np.ndarray) -> float:
    """AP of a list ranked by ascending distance; equal distances keep input order.

    Entries labeled 0 are not part of the ranking.
    """
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y)
    keep = y != 0
    s, y = s[keep], y[keep]
    order = np.argsort(s, kind="stable")
    hits = y[order] == 1
    n_pos = int(hits.sum())
    if n_pos == 0:
        raise NoPositives("Ranked list contains no positive tuple")
    ranks = np.arange(1, len(hits) + 1, dtype=np.float64)
    precision = np.cumsum(hits) / ranks
    return float(precision[hits].sum() / n_pos)


def average_precision(tuples) -> float:
    """AP over (s, y) pairs with y in {+1, -1}."""
    pairs = np.asarray(list(tuples), dtype=np.float64).reshape(-1, 2)
    return ap_from_arrays(pairs[:, 0], pairs[:, 1].astype(np.int64))


def _unit_score(s: np.ndarray, y: np.ndarray, strict: bool) -> Optional[float]:
    try:
        return ap_from_arrays(s, y)
    except NoPositives:
        return 0.0 if strict else None


# ---------------------------------------------------------------------------
# Queries and labels
# ---------------------------------------------------------------------------

def _sample_indices(keypoints: List[Keypoint], n: int, rng: np.random.Generator) -> List[int]:
    if not keypoints:
        raise EmptyKeypointSet("Reference image has no keypoints")
    if n <= 0:
        return []
    if n >= len(keypoints):
        chosen = range(len(keypoints))
    else:
        chosen = rng.choice(len(keypoints), size=n, replace=False).tolist()
    return sorted(chosen, key=lambda i: (keypoints[i].y, keypoints[i].x, i))


def sample_queries(ref_keypoints: List[Keypoint], n: int, rng: np.random.Generator) -> List[Keypoint]:
    """Uniform sample without replacement, ordered by (y, x)."""
    return [ref_keypoints[i] for i in _sample_indices(ref_keypoints, n, rng)]


def _subset(features: FeatureSet, indices: List[int]) -> FeatureSet:
    return FeatureSet(
        [features.keypoints[i] for i in indices],
        features.descriptors[np.asarray(indices, dtype=np.int64)],
        features.kind,
    )


def reprojection_distances(H: Homography, query_xy: np.ndarray, target_xy: np.ndarray) -> np.ndarray:
    """(n, m) distances from each projected query to each target keypoint.

    Rows of queries that project to infinity are NaN.
    """
    query_xy = np.asarray(query_xy, dtype=np.float64).reshape(-1, 2)
    target_xy = np.asarray(target_xy, dtype=np.float64).reshape(-1, 2)
    try:
        projected = project_many(H, query_xy)
    except PointAtInfinity:
        projected = np.full((len(query_xy), 2), np.nan)
        for row, (x, y) in enumerate(query_xy):
            try:
                projected[row] = project(H, (x, y))
            except PointAtInfinity:
                continue
    return np.hypot(projected[:, 0, None] - target_xy[None, :, 0], projected[:, 1, None] - target_xy[None, :, 1])


def _closest_mask(distances: np.ndarray) -> np.ndarray:
    """True where a target is (one of) the reprojection-closest for its query row."""
    finite = np.where(np.isnan(distances), np.inf, distances)
    nearest = finite.min(axis=1, initial=np.inf)
    return (finite <= nearest[:, None]) & ~np.isnan(distances)


def _nearest_block(queries: FeatureSet, target: FeatureSet, origin: Tuple[str, int],
                   metric: str, H: Optional[Homography]) -> TupleBlock:
    """One tuple per query: its descriptor-nearest keypoint in `target`.

    With H the label follows the reprojection rule, without it every tuple is -1.
    """
    n = len(queries)
    distances = distance_matrix(queries.descriptors, target.descriptors, metric)
    match = np.argmin(distances, axis=1) if n else np.zeros(0, dtype=np.int64)
    rows = np.arange(n)
    s = distances[rows, match] if n else np.zeros(0)
    keep = np.ones(n, dtype=bool)
    if H is None:
        y = np.full(n, -1, dtype=np.int64)
    else:
        reproj = reprojection_distances(H, queries.xy, target.xy)
        keep = ~np.all(np.isnan(reproj), axis=1)
        y = np.where(_closest_mask(reproj)[rows, match], 1, -1).astype(np.int64)
    return TupleBlock(
        queries=queries.keypoints,
        candidates=target.keypoints,
        origins=[origin] * len(target),
        query_index=rows[keep],
        candidate_index=match[keep],
        s=s[keep],
        y=y[keep],
    )


# ---------------------------------------------------------------------------
# Keypoint verification
# ---------------------------------------------------------------------------

def draw_distractor_images(dataset: Dataset, seq: Sequence, rng: np.random.Generator, n: int) -> List[Tuple[str, int]]:
    candidates = [(p.id, l) for p in dataset.sequences if p.id != seq.id for l in ALL_INDICES]
    if not candidates or n <= 0:
        return []
    picks = rng.choice(len(candidates), size=min(n, len(candidates)), replace=False)
    return [candidates[i] for i in sorted(picks.tolist())]


def verification_blocks(dataset: Dataset, features: FeatureMap, seq: Sequence, queries: FeatureSet,
                        rng: np.random.Generator, cfg: EvalConfig, metric: str) -> Tuple[List[TupleBlock], int]:
    blocks, skipped = [], 0
    for j in TARGET_INDICES:
        target = features[(seq.id, j)]
        if len(target) == 0:
            logging.warning(f"⚠️ {seq.id}/{j}: no keypoints, image skipped for verification")
            skipped += 1
            continue
        blocks.append(_nearest_block(queries, target, (seq.id, j), metric, seq.homography(j)))
    for source in draw_distractor_images(dataset, seq, rng, cfg.n_distractor_images):
        target = features[source]
        if len(target) == 0:
            skipped += 1
            continue
        blocks.append(_nearest_block(queries, target, source, metric, None))
    return blocks, skipped


def verification_set(dataset: Dataset, features: FeatureMap, seq: Sequence, queries: FeatureSet,
                     rng: np.random.Generator, cfg: EvalConfig, metric: str) -> List[LabeledTuple]:
    blocks, _ = verification_blocks(dataset, features, seq, queries, rng, cfg, metric)
    return [t for block in blocks for t in block.labeled()]


def verification_ap(s: np.ndarray, y: np.ndarray, strict: bool = False) -> Optional[float]:
    """Single AP over the tuples pooled from every sequence of a split."""
    return _unit_score(s, y, strict)


# ---------------------------------------------------------------------------
# Image matching
# ---------------------------------------------------------------------------

def matching_blocks(seq: Sequence, queries: FeatureSet, features: FeatureMap, metric: str) -> Dict[int, TupleBlock]:
    blocks = {}
    for j in TARGET_INDICES:
        target = features[(seq.id, j)]
        if len(target) == 0:
            continue
        blocks[j] = _nearest_block(queries, target, (seq.id, j), metric, seq.homography(j))
    return blocks


def matching_ap(seq: Sequence, queries: FeatureSet, features: FeatureMap, metric: str,
                strict: bool = False) -> Tuple[List[float], int]:
    """One AP per (reference, target) pair; returns (APs, skipped pair count)."""
    blocks = matching_blocks(seq, queries, features, metric)
    aps, skipped = [], 0
    for j in TARGET_INDICES:
        block = blocks.get(j)
        score = _unit_score(block.s, block.y, strict) if block is not None else (0.0 if strict else None)
        if score is None:
            logging.warning(f"⚠️ {seq.id}: pair 1-{j} has no scoreable tuples, skipped")
            skipped += 1
            continue
        aps.append(score)
    return aps, skipped


# ---------------------------------------------------------------------------
# Keypoint retrieval
# ---------------------------------------------------------------------------

def draw_distractor_keypoints(dataset: Dataset, features: FeatureMap, seq: Sequence,
                              rng: np.random.Generator, n: int) -> Tuple[List[Keypoint], List[Tuple[str, int]], list]:
    """Uniform sample of keypoints from the target images of every other sequence."""
    sources = [(p.id, l) for p in dataset.sequences if p.id != seq.id for l in TARGET_INDICES]
    counts = np.array([len(features[src]) for src in sources], dtype=np.int64)
    total = int(counts.sum()) if len(counts) else 0
    take = min(n, total)
    if take <= 0:
        return [], [], []
    ends = np.cumsum(counts)
    picks = np.sort(rng.choice(total, size=take, replace=False))
    which = np.searchsorted(ends, picks, side="right")
    local = picks - (ends[which] - counts[which])
    keypoints, origins, rows = [], [], []
    for w, i in zip(which.tolist(), local.tolist()):
        fs = features[sources[w]]
        keypoints.append(fs.keypoints[i])
        origins.append(sources[w])
        rows.append(fs.descriptors[i])
    return keypoints, origins, rows


def retrieval_block(dataset: Dataset, features: FeatureMap, seq: Sequence, queries: FeatureSet,
                    rng: np.random.Generator, cfg: EvalConfig, metric: str) -> Optional[TupleBlock]:
    """Every (query, pool element) tuple, query-major.

    In-sequence candidates are +1 when reprojection-closest within their image
    and 0 otherwise; distractors are -1.
    """
    n = len(queries)
    candidates, origins, rows, label_parts = [], [], [], []
    for j in TARGET_INDICES:
        target = features[(seq.id, j)]
        if len(target) == 0:
            continue
        candidates.extend(target.keypoints)
        origins.extend([(seq.id, j)] * len(target))
        rows.append(target.descriptors)
        closest = _closest_mask(reprojection_distances(seq.homography(j), queries.xy, target.xy))
        label_parts.append(np.where(closest, 1, 0))

    d_keypoints, d_origins, d_rows = draw_distractor_keypoints(dataset, features, seq, rng, cfg.n_distractor_keypoints)
    if d_keypoints:
        candidates.extend(d_keypoints)
        origins.extend(d_origins)
        rows.append(np.stack(d_rows))
        label_parts.append(np.full((n, len(d_keypoints)), -1))
    if not candidates or n == 0:
        return None

    pool = np.concatenate(rows, axis=0)
    distances = distance_matrix(queries.descriptors, pool, metric)
    labels = np.concatenate(label_parts, axis=1).astype(np.int64)
    size = len(candidates)
    return TupleBlock(
        queries=queries.keypoints,
        candidates=candidates,
        origins=origins,
        query_index=np.repeat(np.arange(n), size),
        candidate_index=np.tile(np.arange(size), n),
        s=distances.ravel(),
        y=labels.ravel(),
    )


def retrieval_ap(block: Optional[TupleBlock], granularity: str = "sequence",
                 strict: bool = False) -> Tuple[List[float], int]:
    """APs for one sequence: a single pooled AP, or one per query."""
    if block is None:
        return ([0.0], 0) if strict else ([], 1)
    if granularity == "sequence":
        score = _unit_score(block.s, block.y, strict)
        return ([score], 0) if score is not None else ([], 1)
    aps, skipped = [], 0
    for q in range(len(block.queries)):
        mine = block.query_index == q
        score = _unit_score(block.s[mine], block.y[mine], strict)
        if score is None:
            skipped += 1
        else:
            aps.append(score)
    return aps, skipped


# ---------------------------------------------------------------------------
# Units and aggregation
# ---------------------------------------------------------------------------

def evaluate_sequence(dataset: Dataset, features: FeatureMap, seq: Sequence, rep: int,
                      cfg: EvalConfig, metric: str) -> SequenceOutcome:
    """All requested tasks for one (sequence, rep) unit; rep counts from 1."""
    outcome = SequenceOutcome(seq.id, seq.kind, rep, skipped={t: 0 for t in cfg.tasks})
    reference = features[(seq.id, 1)]
    try:
        indices = _sample_indices(reference.keypoints, cfg.n_queries,
                                  derive_rng(cfg.master_seed, seq.id, rep, "queries"))
    except EmptyKeypointSet:
        logging.warning(f"⚠️ {seq.id}: reference image has no keypoints, sequence skipped")
        for task in cfg.tasks:
            outcome.skipped[task] += 1
        return outcome
    queries = _subset(reference, indices)

    if "verification" in cfg.tasks:
        blocks, skipped = verification_blocks(
            dataset, features, seq, queries,
            derive_rng(cfg.master_seed, seq.id, rep, "verification"), cfg, metric,
        )
        outcome.skipped["verification"] += skipped
        if blocks:
            outcome.verification_s = np.concatenate([b.s for b in blocks])
            outcome.verification_y = np.concatenate([b.y for b in blocks])

    if "matching" in cfg.tasks:
        outcome.matching, skipped = matching_ap(seq, queries, features, metric, cfg.strict)
        outcome.skipped["matching"] += skipped

    if "retrieval" in cfg.tasks:
        block = retrieval_block(
            dataset, features, seq, queries,
            derive_rng(cfg.master_seed, seq.id, rep, "retrieval"), cfg, metric,
        )
        outcome.retrieval, skipped = retrieval_ap(block, cfg.retrieval_granularity, cfg.strict)
        outcome.skipped["retrieval"] += skipped
    return outcome


def _rep_value(task: str, outcomes: List[SequenceOutcome], strict: bool) -> Optional[float]:
    if task == "verification":
        if not outcomes:
            return None
        s = np.concatenate([o.verification_s for o in outcomes])
        y = np.concatenate([o.verification_y for o in outcomes])
        return verification_ap(s, y, strict)
    units = [ap for o in outcomes for ap in getattr(o, task)]
    if not units:
        return 0.0 if strict else None
    return float(np.mean(units))


def _task_result(task: str, split: str, per_rep: Dict[int, float], skipped: int) -> TaskResult:
    values = [per_rep[r] for r in sorted(per_rep)]
    return TaskResult(
        task=task,
        split=split,
        ap_per_rep=values,
        map=float(np.mean(values)),
        std=float(np.std(values)),
        skipped_units=skipped,
    )


def aggregate(outcomes: List[SequenceOutcome], cfg: EvalConfig) -> List[TaskResult]:
    """Deterministic fold of unit outcomes into per-task, per-split results.

    `outcomes` must be in canonical (rep, sequence id) order.
    """
    results = []
    for task in cfg.tasks:
        split_values: Dict[str, Dict[int, float]] = {}
        split_skipped: Dict[str, int] = {}
        for split in SPLITS:
            mine = [o for o in outcomes if o.kind == split]
            if not mine:
                continue
            per_rep, skipped = {}, sum(o.skipped.get(task, 0) for o in mine)
            for rep in range(1, cfg.reps + 1):
                value = _rep_value(task, [o for o in mine if o.rep == rep], cfg.strict)
                if value is None:
                    logging.warning(f"⚠️ {task}/{split}: rep {rep} has no scoreable units")
                    skipped += 1
                else:
                    per_rep[rep] = value
            split_skipped[split] = skipped
            if per_rep:
                split_values[split] = per_rep
                results.append(_task_result(task, split, per_rep, skipped))

        if split_values:
            shared = set.intersection(*(set(v) for v in split_values.values()))
            mean_rep = {r: float(np.mean([split_values[s][r] for s in split_values])) for r in shared}
            if mean_rep:
                results.append(_task_result(task, "mean", mean_rep, sum(split_skipped.values())))
    return results
