import os
import sys
import logging
import argparse

from dotenv import load_dotenv

# Load environment variables from .env
load_dotenv()

from pipeline.config.settings import (
    TASKS,
    get_settings,
    resolve_workers,
    setup_directories,
    setup_logging,
    validated,
)
from pipeline.core.errors import BenchError, InvalidConfig, exit_code_for
from pipeline.core.ingestor import load_dataset
from pipeline.core.metadata import (
    combination,
    expected_ordering_holds,
    load_report,
    merge_reports,
    task_medians,
    timing_summary,
    timing_table,
    write_report,
    write_table,
)
from pipeline.components.benchtime import time_pipeline
from pipeline.components.evaluator import EvalConfig
from pipeline.components.orchestrator import EXTERNAL, export_features, run_evaluation, sweep
from pipeline.models.detectors import DetectorConfig
from pipeline.models.registry import get_descriptor, get_detector


def _names(value: str):
    return [v.strip() for v in value.split(",") if v.strip()]


def _add_data(parser):
    parser.add_argument("--data", help="HPSequences root (default: KPBENCH_DATA_DIR)")


def _add_eval_options(parser):
    parser.add_argument("--tasks", type=_names, default=list(TASKS))
    parser.add_argument("--split", choices=["all", "illumination", "viewpoint"], default="all")
    parser.add_argument("--n-queries", type=int, default=100)
    parser.add_argument("--distractor-images", type=int, default=5)
    parser.add_argument("--distractor-keypoints", type=int, default=1000)
    parser.add_argument("--reps", type=int, default=5)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--max-keypoints", type=int, default=500)
    parser.add_argument("--format", choices=["json", "csv"], default="json")
    parser.add_argument("--strict", action="store_true", help="score units without positives as 0")
    parser.add_argument("--distance", choices=["auto", "hamming", "euclidean"], default="auto")
    parser.add_argument("--retrieval-granularity", choices=["sequence", "query"], default="sequence")
    parser.add_argument("--workers", type=int, default=None, help="0 = one per CPU")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Keypoint detector/descriptor benchmark on homography sequences")
    sub = parser.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("eval", help="verification / matching / retrieval scores for one DET+DESC")
    _add_data(ev)
    ev.add_argument("--detector")
    ev.add_argument("--descriptor")
    ev.add_argument("--external", metavar="FEATDIR", help="evaluate FEATB files instead of a built-in pipeline")
    ev.add_argument("--out")
    ev.add_argument("--timing", action="store_true", help="embed a detect+describe timing summary")
    _add_eval_options(ev)

    ex = sub.add_parser("extract", help="write FEATB feature files for every image")
    _add_data(ex)
    ex.add_argument("--detector", required=True)
    ex.add_argument("--descriptor", required=True)
    ex.add_argument("--out", required=True, metavar="FEATDIR")
    ex.add_argument("--max-keypoints", type=int, default=500)
    ex.add_argument("--workers", type=int, default=None)

    tm = sub.add_parser("time", help="mean detect+describe time per image")
    _add_data(tm)
    tm.add_argument("--detector", type=_names, required=True, help="name or comma-separated list")
    tm.add_argument("--descriptor", type=_names, required=True, help="name or comma-separated list")
    tm.add_argument("--warmup", type=int, default=2)
    tm.add_argument("--passes", type=int, default=3)
    tm.add_argument("--max-keypoints", type=int, default=500)
    tm.add_argument("--out")

    rp = sub.add_parser("report", help="merge JSON reports into one comparison table")
    rp.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="PATH")
    rp.add_argument("--out", required=True)
    rp.add_argument("--rank-by", choices=list(TASKS), default="matching")

    sw = sub.add_parser("sweep", help="evaluate every DET+DESC combination")
    _add_data(sw)
    sw.add_argument("--detectors", type=_names, required=True)
    sw.add_argument("--descriptors", type=_names, required=True)
    sw.add_argument("--out-dir", required=True)
    sw.add_argument("--rank-by", choices=list(TASKS), default="matching")
    _add_eval_options(sw)
    return parser


def _data_root(args, settings) -> str:
    root = args.data or settings.data_dir
    if not root:
        raise InvalidConfig("No dataset given: pass --data or set KPBENCH_DATA_DIR")
    return root


def _workers(args, settings) -> int:
    return settings.workers if args.workers is None else args.workers


def _eval_config(args, settings) -> EvalConfig:
    return validated(
        EvalConfig,
        n_queries=args.n_queries,
        n_distractor_images=args.distractor_images,
        n_distractor_keypoints=args.distractor_keypoints,
        reps=args.reps,
        master_seed=args.seed,
        max_keypoints=args.max_keypoints,
        tasks=tuple(args.tasks),
        split=args.split,
        strict=args.strict,
        retrieval_granularity=args.retrieval_granularity,
        distance=args.distance,
        workers=_workers(args, settings),
    )


def cmd_eval(args, settings) -> int:
    cfg = _eval_config(args, settings)
    if args.external:
        # names only label the report here
        detector = args.detector or EXTERNAL
        descriptor = args.descriptor or EXTERNAL
        if args.timing:
            raise InvalidConfig("--timing needs a built-in detector/descriptor, not --external")
    else:
        if not args.detector or not args.descriptor:
            raise InvalidConfig("eval needs --detector and --descriptor, or --external FEATDIR")
        get_detector(args.detector)
        get_descriptor(args.descriptor)
        detector, descriptor = args.detector, args.descriptor

    dataset = load_dataset(_data_root(args, settings), "all", settings.max_pixels, resolve_workers(cfg.workers))
    report = run_evaluation(dataset, detector, descriptor, cfg, external=args.external)
    if args.timing:
        det_cfg = validated(DetectorConfig, max_keypoints=cfg.max_keypoints)
        report.timing = timing_summary(time_pipeline(dataset, detector, descriptor, cfg=det_cfg))

    out = args.out or os.path.join(settings.reports_dir, f"{combination(detector, descriptor)}.{args.format}")
    write_report(report, out, args.format)
    return 0


def cmd_extract(args, settings) -> int:
    det_cfg = validated(DetectorConfig, max_keypoints=args.max_keypoints)
    workers = resolve_workers(_workers(args, settings))
    dataset = load_dataset(_data_root(args, settings), "all", settings.max_pixels, workers)
    export_features(dataset, args.detector, args.descriptor, args.out, det_cfg, workers)
    return 0


def cmd_time(args, settings) -> int:
    det_cfg = validated(DetectorConfig, max_keypoints=args.max_keypoints)
    dataset = load_dataset(_data_root(args, settings), "all", settings.max_pixels)
    results = [
        time_pipeline(dataset, detector, descriptor, args.warmup, args.passes, det_cfg)
        for detector in args.detector
        for descriptor in args.descriptor
    ]
    table = timing_table(results)
    out = args.out or os.path.join(settings.output_dir, "timing.csv")
    write_table(table, out)
    for _, row in table.iterrows():
        logging.info(f"📊 {row['combination']}: {row['mean_ms']:.3f} ms (min {row['min_ms']:.3f}, max {row['max_ms']:.3f})")
    return 0


def _write_merged(reports, out: str, rank_by: str):
    table = merge_reports(reports, rank_by)
    write_table(table, out)
    medians = task_medians(table)
    logging.info(f"📊 Median mAP per task: {', '.join(f'{t}={v:.4f}' for t, v in medians.items() if v is not None)}")
    ordering = expected_ordering_holds(medians)
    if ordering is not None:
        logging.info(f"📊 matching > retrieval > verification: {'yes' if ordering else 'no'}")


def cmd_report(args, settings) -> int:
    reports = [load_report(path) for path in args.inputs]
    _write_merged(reports, args.out, args.rank_by)
    return 0


def cmd_sweep(args, settings) -> int:
    cfg = _eval_config(args, settings)
    dataset = load_dataset(_data_root(args, settings), "all", settings.max_pixels, resolve_workers(cfg.workers))
    reports = sweep(dataset, args.detectors, args.descriptors, cfg)
    for report in reports:
        name = combination(report.detector, report.descriptor)
        write_report(report, os.path.join(args.out_dir, f"{name}.{args.format}"), args.format)
    _write_merged(reports, os.path.join(args.out_dir, "summary.csv"), args.rank_by)
    return 0


COMMANDS = {
    "eval": cmd_eval,
    "extract": cmd_extract,
    "time": cmd_time,
    "report": cmd_report,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    setup_directories(settings)
    setup_logging(settings)
    logging.info(f"🚀 {args.command} started")
    try:
        return COMMANDS[args.command](args, settings)
    except BenchError as e:
        logging.error(f"❌ {type(e).__name__}: {e}")
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
