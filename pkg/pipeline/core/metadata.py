import os
import json
import logging
from typing import Dict, Iterable, List, Optional

import pandas as pd

from ..config.settings import TASKS
from .errors import HeaderMismatch

SIGNIFICANT_DIGITS = 6
TASK_ORDER = ("matching", "retrieval", "verification")


def _round(value):
    """Rounds every float in a JSON-like structure to 6 significant digits."""
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, float):
        return float(format(value, f".{SIGNIFICANT_DIGITS}g"))
    if isinstance(value, dict):
        return {k: _round(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round(v) for v in value]
    return value


def combination(detector: str, descriptor: str) -> str:
    return f"{detector}+{descriptor}"


# ---------------------------------------------------------------------------
# Evaluation reports
# ---------------------------------------------------------------------------

def report_to_dict(report) -> dict:
    return _round({
        "meta": {
            "detector": report.detector,
            "descriptor": report.descriptor,
            "config": report.config,
            "dataset_digest": report.dataset_digest,
            "version": report.version,
        },
        "results": [
            {
                "task": r.task,
                "split": r.split,
                "map": r.map,
                "std": r.std,
                "ap_per_rep": list(r.ap_per_rep),
                "skipped_units": r.skipped_units,
            }
            for r in report.results
        ],
        "timing": report.timing,
    })


def report_to_json(report) -> str:
    """Canonical JSON: sorted keys, fixed float precision, trailing newline."""
    return json.dumps(report_to_dict(report), sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def report_frame(report) -> pd.DataFrame:
    """One row per (task, split)."""
    data = report_to_dict(report)
    meta = data["meta"]
    rows = [
        {
            "combination": combination(meta["detector"], meta["descriptor"]),
            "detector": meta["detector"],
            "descriptor": meta["descriptor"],
            "task": r["task"],
            "split": r["split"],
            "map": r["map"],
            "std": r["std"],
            "reps": len(r["ap_per_rep"]),
            "skipped_units": r["skipped_units"],
            "dataset_digest": meta["dataset_digest"],
        }
        for r in data["results"]
    ]
    columns = ["combination", "detector", "descriptor", "task", "split", "map", "std",
               "reps", "skipped_units", "dataset_digest"]
    return pd.DataFrame(rows, columns=columns)


def report_to_csv(report) -> str:
    return report_frame(report).to_csv(index=False, float_format=f"%.{SIGNIFICANT_DIGITS}g", lineterminator="\n")


def write_report(report, path: str, fmt: str = "json"):
    text = report_to_json(report) if fmt == "json" else report_to_csv(report)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    logging.info(f"✅ Report saved to {path}")


def load_report(path: str):
    from ..components.evaluator import EvalReport, TaskResult

    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise HeaderMismatch(f"{path} is not a JSON evaluation report: {e}") from None
    if not isinstance(data, dict) or "meta" not in data or "results" not in data:
        raise HeaderMismatch(f"{path} is not a JSON evaluation report")
    meta = data["meta"]
    return EvalReport(
        detector=meta["detector"],
        descriptor=meta["descriptor"],
        config=meta.get("config", {}),
        dataset_digest=meta.get("dataset_digest", ""),
        version=meta.get("version", ""),
        results=[TaskResult(**r) for r in data["results"]],
        timing=data.get("timing", {}),
    )


# ---------------------------------------------------------------------------
# Merged comparison tables
# ---------------------------------------------------------------------------

def merge_reports(reports: Iterable, rank_by: str = "matching") -> pd.DataFrame:
    """One row per DET+DESC combination with per-task mean-split mAPs and ranks."""
    if rank_by not in TASKS:
        raise ValueError(f"rank_by must be one of {', '.join(TASKS)}, got {rank_by!r}")
    rows = []
    for report in reports:
        data = report_to_dict(report)
        meta = data["meta"]
        row = {
            "combination": combination(meta["detector"], meta["descriptor"]),
            "detector": meta["detector"],
            "descriptor": meta["descriptor"],
        }
        by_key = {(r["task"], r["split"]): r for r in data["results"]}
        for task in TASK_ORDER:
            mean = by_key.get((task, "mean"))
            row[f"{task}_map"] = mean["map"] if mean else float("nan")
            row[f"{task}_std"] = mean["std"] if mean else float("nan")
            for split in ("illumination", "viewpoint"):
                r = by_key.get((task, split))
                row[f"{task}_{split}"] = r["map"] if r else float("nan")
        illum, view = row[f"{rank_by}_illumination"], row[f"{rank_by}_viewpoint"]
        if pd.isna(illum) or pd.isna(view):
            row["better_split"] = ""
        else:
            row["better_split"] = "illumination" if illum >= view else "viewpoint"
        row["dataset_digest"] = meta["dataset_digest"]
        rows.append(row)

    table = pd.DataFrame(rows)
    if table.empty:
        return table
    for task in TASK_ORDER:
        table[f"{task}_rank"] = table[f"{task}_map"].rank(ascending=False, method="min").astype("Int64")
    table = table.sort_values(
        by=[f"{rank_by}_map", "combination"], ascending=[False, True], na_position="last"
    ).reset_index(drop=True)
    return table


def task_medians(table: pd.DataFrame) -> Dict[str, Optional[float]]:
    medians = {}
    for task in TASK_ORDER:
        column = f"{task}_map"
        value = table[column].median() if column in table and table[column].notna().any() else None
        medians[task] = None if value is None else float(value)
    return medians


def expected_ordering_holds(medians: Dict[str, Optional[float]]) -> Optional[bool]:
    """Whether median matching > retrieval > verification; None when a task is missing."""
    m, r, v = medians.get("matching"), medians.get("retrieval"), medians.get("verification")
    if m is None or r is None or v is None:
        return None
    return m > r > v


def write_table(table: pd.DataFrame, path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    table.to_csv(path, index=False, float_format=f"%.{SIGNIFICANT_DIGITS}g", lineterminator="\n")
    logging.info(f"✅ Table saved to {path} ({len(table)} rows)")


# ---------------------------------------------------------------------------
# Timing
# ---------------------------------------------------------------------------

def timing_table(results: List) -> pd.DataFrame:
    """Execution-time table, fastest combination first."""
    rows = [
        {
            "detector": r.detector,
            "descriptor": r.descriptor,
            "combination": combination(r.detector, r.descriptor),
            "mean_ms": r.mean_ms,
            "std_ms": r.std_ms,
            "min_ms": r.min_ms,
            "max_ms": r.max_ms,
            "images": r.images,
            "excluded": r.excluded,
        }
        for r in results
    ]
    columns = ["detector", "descriptor", "combination", "mean_ms", "std_ms", "min_ms", "max_ms", "images", "excluded"]
    table = pd.DataFrame(rows, columns=columns)
    return table.sort_values(by=["mean_ms", "combination"], kind="stable").reset_index(drop=True)


def timing_summary(result) -> dict:
    return _round(result.model_dump())
