import math
import os
import sys

import numpy as np
import pytest
from pydantic import ValidationError
from sklearn.metrics import average_precision_score

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from fixtures import empty_float_features, float_features, placeholder_sequence
from pipeline.components.evaluator import (
    EvalConfig,
    SequenceOutcome,
    _nearest_block,
    aggregate,
    ap_from_arrays,
    average_precision,
    draw_distractor_images,
    evaluate_sequence,
    matching_ap,
    reprojection_distances,
    retrieval_ap,
    retrieval_block,
    sample_queries,
    verification_set,
)
from pipeline.core.errors import EmptyKeypointSet, NoPositives
from pipeline.core.geometry import Homography, project, reproj_dist
from pipeline.core.ingestor import from_sequences
from pipeline.models.detectors import Keypoint


def _same_everywhere(seq_id, fs):
    return {(seq_id, j): fs for j in range(1, 7)}


# ---------------------------------------------------------------------------
# Average precision
# ---------------------------------------------------------------------------

def test_ap_examples():
    assert average_precision([(0.1, 1), (0.2, -1), (0.3, 1)]) == pytest.approx(5 / 6)
    assert average_precision([(0.4, 1), (0.1, 1)]) == 1.0
    assert average_precision([(0.1, -1), (0.2, 1)]) == 0.5
    with pytest.raises(NoPositives):
        average_precision([(0.1, -1), (0.2, -1)])
    with pytest.raises(NoPositives):
        average_precision([])


def test_ap_ties_keep_input_order():
    assert average_precision([(0.5, -1), (0.5, 1)]) == 0.5
    assert average_precision([(0.5, 1), (0.5, -1)]) == 1.0


def test_ap_ignores_zero_labels():
    assert ap_from_arrays([0.1, 0.2, 0.3], [0, 1, -1]) == 1.0
    assert ap_from_arrays([0.1, 0.2, 0.3], [-1, 0, 1]) == 0.5


def _ap_oracle(s, y):
    ranked = sorted(zip(s, y), key=lambda t: t[0])
    hits, total = 0, 0.0
    for rank, (_, label) in enumerate(ranked, start=1):
        if label == 1:
            hits += 1
            total += hits / rank
    return total / hits


def test_ap_matches_brute_force_and_sklearn():
    rng = np.random.default_rng(40)
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        s = rng.permutation(n) + rng.random(n) * 0.5
        y = np.where(rng.random(n) < 0.4, 1, -1)
        y[int(rng.integers(0, n))] = 1
        ours = ap_from_arrays(s, y)
        assert ours == pytest.approx(_ap_oracle(s.tolist(), y.tolist()), abs=1e-12)
        assert ours == pytest.approx(average_precision_score(y == 1, -s), abs=1e-12)
        assert 0.0 < ours <= 1.0


def test_ap_invariant_to_monotone_rescaling():
    rng = np.random.default_rng(41)
    s = rng.random(50)
    y = np.where(rng.random(50) < 0.5, 1, -1)
    y[0] = 1
    assert ap_from_arrays(s, y) == ap_from_arrays(3 * s + 7, y) == ap_from_arrays(np.exp(s), y)


# ---------------------------------------------------------------------------
# Queries and labels
# ---------------------------------------------------------------------------

def test_sample_queries():
    rng = np.random.default_rng(42)
    keypoints = [Keypoint(float(x), float(y)) for x, y in rng.uniform(0, 100, size=(40, 2))]
    picked = sample_queries(keypoints, 10, np.random.default_rng(1))
    assert picked == sample_queries(keypoints, 10, np.random.default_rng(1))
    assert len(picked) == 10 and len({id(k) for k in picked}) == 10
    assert picked == sorted(picked, key=lambda k: (k.y, k.x))
    assert len(sample_queries(keypoints, 100, np.random.default_rng(1))) == 40
    with pytest.raises(EmptyKeypointSet):
        sample_queries([], 5, np.random.default_rng(1))


def test_labels_match_reprojection_oracle():
    rng = np.random.default_rng(43)
    for _ in range(3):
        H = Homography(np.array([[1.02, 0.01, 3.0], [-0.01, 0.98, -2.0], [1e-4, -1e-4, 1.0]]))
        queries = float_features(rng.uniform(0, 100, size=(30, 2)), rng.normal(size=(30, 4)))
        target = float_features(rng.uniform(0, 100, size=(60, 2)), rng.normal(size=(60, 4)))
        block = _nearest_block(queries, target, ("v_x", 2), "euclidean", H)
        assert len(block) == 30
        for qi, ci, y in zip(block.query_index, block.candidate_index, block.y):
            d = np.linalg.norm(target.descriptors - queries.descriptors[qi], axis=1)
            assert ci == int(np.argmin(d))
            px, py = project(H, (queries.keypoints[qi].x, queries.keypoints[qi].y))
            reproj = [math.hypot(px - k.x, py - k.y) for k in target.keypoints]
            expected = 1 if all(reproj[ci] <= r for r in reproj) else -1
            assert y == expected


def test_queries_projecting_to_infinity_are_dropped():
    H = Homography(np.array([[1.0, 0, 0], [0, 1.0, 0], [1.0, 0, 1.0]]))
    queries = float_features([(-1.0, 5.0), (3.0, 5.0)], [0.0, 1.0])
    target = float_features([(0.75, 1.25)], [0.0])
    block = _nearest_block(queries, target, ("v_x", 2), "euclidean", H)
    assert block.query_index.tolist() == [1]
    assert block.y.tolist() == [1]


def test_reprojection_distances_agree_with_reproj_dist():
    H = Homography(np.array([[1.0, 0, 0], [0, 1.0, 0], [1.0, 0, 1.0]]))
    query_xy = np.array([[-1.0, 5.0], [3.0, 5.0], [0.5, 2.0]])
    target_xy = np.array([[0.75, 1.25], [4.0, -2.0]])
    distances = reprojection_distances(H, query_xy, target_xy)
    assert distances.shape == (3, 2)
    assert np.isnan(distances[0]).all()
    for row in (1, 2):
        for col in range(2):
            assert distances[row, col] == pytest.approx(reproj_dist(H, query_xy[row], target_xy[col]), rel=1e-12)

    shift = Homography(np.array([[1.0, 0, 2.0], [0, 1.0, -1.0], [0, 0, 1.0]]))
    assert np.array_equal(reprojection_distances(shift, [[1.0, 1.0]], [[3.0, 0.0], [3.0, 4.0]]), [[0.0, 4.0]])


# ---------------------------------------------------------------------------
# Crafted task examples
# ---------------------------------------------------------------------------

def test_matching_crafted_example():
    points = [(30 + 20 * k, 40) for k in range(4)]
    queries = float_features(points, [0, 10, 13, 103])
    target = float_features(points, [0, 100, 11, 500])
    seq = placeholder_sequence("v_crafted", "viewpoint")
    features = _same_everywhere(seq.id, target)
    aps, skipped = matching_ap(seq, queries, features, "euclidean")
    assert skipped == 0
    assert aps == pytest.approx([5 / 6] * 5)


def test_matching_empty_pair_strict_and_lenient():
    points = [(10, 10), (40, 10)]
    queries = float_features(points, [0, 1])
    seq = placeholder_sequence("v_gap", "viewpoint")
    features = _same_everywhere(seq.id, float_features(points, [0, 1]))
    features[(seq.id, 3)] = empty_float_features()

    aps, skipped = matching_ap(seq, queries, features, "euclidean")
    assert aps == [1.0] * 4 and skipped == 1
    aps, skipped = matching_ap(seq, queries, features, "euclidean", strict=True)
    assert aps == [1.0, 0.0, 1.0, 1.0, 1.0] and skipped == 0


def _retrieval_fixture():
    seq = placeholder_sequence("v_query", "viewpoint")
    other = placeholder_sequence("v_other", "viewpoint")
    features = {(seq.id, 1): float_features([(30, 30), (60, 30)], [0, 3])}
    features[(seq.id, 2)] = float_features([(30, 30), (60, 30)], [0, 6])
    for j in range(3, 7):
        features[(seq.id, j)] = empty_float_features()
    for j in range(1, 7):
        features[(other.id, j)] = empty_float_features()
    features[(other.id, 2)] = float_features([(5, 5)], [1])
    return from_sequences([seq, other]), features, seq


def test_retrieval_crafted_example():
    dataset, features, seq = _retrieval_fixture()
    cfg = EvalConfig(n_distractor_keypoints=1)
    queries = features[(seq.id, 1)]
    block = retrieval_block(dataset, features, seq, queries, np.random.default_rng(0), cfg, "euclidean")

    assert len(block) == 6
    labeled = [(t.s, t.y) for t in block.labeled()]
    assert labeled == [(0.0, 1), (6.0, 0), (1.0, -1), (3.0, 0), (3.0, 1), (2.0, -1)]
    assert retrieval_ap(block, "sequence") == ([0.75], 0)
    aps, skipped = retrieval_ap(block, "query")
    assert aps == pytest.approx([1.0, 0.5]) and skipped == 0


def test_retrieval_without_candidates():
    assert retrieval_ap(None) == ([], 1)
    assert retrieval_ap(None, strict=True) == ([0.0], 0)


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

def test_distractor_images_exclude_own_sequence():
    seqs = [placeholder_sequence(f"v_{c}", "viewpoint") for c in "abc"]
    dataset = from_sequences(seqs)
    picks = draw_distractor_images(dataset, seqs[0], np.random.default_rng(3), 5)
    assert len(picks) == 5 and len(set(picks)) == 5
    assert all(sid != "v_a" and 1 <= l <= 6 for sid, l in picks)
    assert len(draw_distractor_images(dataset, seqs[0], np.random.default_rng(3), 50)) == 12
    single = from_sequences([seqs[0]])
    assert draw_distractor_images(single, seqs[0], np.random.default_rng(3), 5) == []


def test_verification_set_labels():
    points = [(10, 10), (40, 10), (70, 10)]
    seq = placeholder_sequence("v_a", "viewpoint")
    other = placeholder_sequence("v_b", "viewpoint")
    features = _same_everywhere(seq.id, float_features(points, [0, 10, 20]))
    features.update(_same_everywhere(other.id, float_features(points, [500, 510, 520])))
    dataset = from_sequences([seq, other])
    cfg = EvalConfig(n_distractor_images=2)
    tuples = verification_set(dataset, features, seq, features[(seq.id, 1)], np.random.default_rng(5), cfg, "euclidean")
    assert len(tuples) == 3 * 5 + 3 * 2
    assert [t.y for t in tuples[:15]] == [1] * 15
    assert [t.y for t in tuples[15:]] == [-1] * 6
    assert all(t.s == 0.0 for t in tuples[:15]) and all(t.s >= 480 for t in tuples[15:])
    assert average_precision((t.s, t.y) for t in tuples) == 1.0


# ---------------------------------------------------------------------------
# Units and aggregation
# ---------------------------------------------------------------------------

def _perfect_world():
    points = [(10 * k, 10 + k) for k in range(1, 8)]
    seqs, features = [], {}
    for n, kind in enumerate(["illumination", "viewpoint", "viewpoint"]):
        seq = placeholder_sequence(f"{kind[0]}_{n}", kind)
        seqs.append(seq)
        features.update(_same_everywhere(seq.id, float_features(points, [1000 * n + 10 * k for k in range(7)])))
    return from_sequences(seqs), features


def test_perfect_world_scores_one():
    dataset, features = _perfect_world()
    cfg = EvalConfig(n_queries=5, n_distractor_images=3, n_distractor_keypoints=10, reps=2)
    outcomes = [evaluate_sequence(dataset, features, seq, rep, cfg, "euclidean")
                for rep in (1, 2) for seq in dataset.sequences]
    results = aggregate(outcomes, cfg)
    assert {(r.task, r.split) for r in results} == {
        (t, s) for t in ("verification", "matching", "retrieval") for s in ("illumination", "viewpoint", "mean")
    }
    for r in results:
        assert r.ap_per_rep == [1.0, 1.0] and r.map == 1.0 and r.std == 0.0 and r.skipped_units == 0


def test_evaluate_sequence_is_deterministic():
    dataset, features = _perfect_world()
    cfg = EvalConfig(n_queries=3, n_distractor_images=4, n_distractor_keypoints=5, reps=1)
    seq = dataset.sequences[1]
    a = evaluate_sequence(dataset, features, seq, 1, cfg, "euclidean")
    b = evaluate_sequence(dataset, features, seq, 1, cfg, "euclidean")
    assert np.array_equal(a.verification_s, b.verification_s)
    assert a.matching == b.matching and a.retrieval == b.retrieval


def test_empty_reference_skips_sequence():
    dataset, features = _perfect_world()
    seq = dataset.sequences[0]
    features[(seq.id, 1)] = empty_float_features()
    cfg = EvalConfig(reps=1)
    outcome = evaluate_sequence(dataset, features, seq, 1, cfg, "euclidean")
    assert outcome.skipped == {"verification": 1, "matching": 1, "retrieval": 1}
    assert outcome.matching == [] and outcome.retrieval == []


def test_aggregate_mean_uses_shared_reps():
    cfg = EvalConfig(tasks=("matching",), reps=2)
    outcomes = [
        SequenceOutcome("i_a", "illumination", 1, matching=[0.5]),
        SequenceOutcome("v_a", "viewpoint", 1, matching=[0.8, 1.0]),
        SequenceOutcome("i_a", "illumination", 2, matching=[0.7]),
        SequenceOutcome("v_a", "viewpoint", 2, matching=[]),
    ]
    results = {r.split: r for r in aggregate(outcomes, cfg)}
    assert results["illumination"].ap_per_rep == pytest.approx([0.5, 0.7])
    assert results["illumination"].map == pytest.approx(0.6)
    assert results["illumination"].std == pytest.approx(0.1)
    assert results["viewpoint"].ap_per_rep == pytest.approx([0.9])
    assert results["viewpoint"].skipped_units == 1
    assert results["mean"].ap_per_rep == pytest.approx([0.7])


def test_eval_config_validation():
    cfg = EvalConfig(tasks=("retrieval", "verification"))
    assert cfg.tasks == ("verification", "retrieval")
    assert "workers" not in cfg.echo()
    with pytest.raises(ValidationError):
        EvalConfig(tasks=("ranking",))
    with pytest.raises(ValidationError):
        EvalConfig(n_queries=0)
    with pytest.raises(ValidationError):
        EvalConfig(reps=0)
    with pytest.raises(ValidationError):
        EvalConfig(retrieval_granularity="image")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
