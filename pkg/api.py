from fastapi import FastAPI, HTTPException, BackgroundTasks
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field
import os
import json
import logging
from typing import List, Optional

from pipeline import __version__
from pipeline.config.settings import TASKS, get_settings, setup_directories, setup_logging, validated
from pipeline.core.errors import BenchError, ConfigError, DataError, EmptyDataset, MissingFeatures
from pipeline.core.ingestor import load_dataset
from pipeline.core.metadata import combination, report_to_dict, timing_summary, write_report
from pipeline.components.benchtime import time_pipeline
from pipeline.components.evaluator import EvalConfig
from pipeline.components.orchestrator import run_evaluation
from pipeline.models.detectors import DetectorConfig
from pipeline.models.registry import get_descriptor, get_detector, registered

# Ensure directories exist
setup_directories()

# Setup Logging
setup_logging()
logger = logging.getLogger(__name__)

app = FastAPI(title="Keypoint Benchmark API", version=__version__)

# CORS
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


class EvaluateRequest(BaseModel):
    detector: str
    descriptor: str
    data: Optional[str] = None
    tasks: List[str] = Field(default_factory=lambda: list(TASKS))
    split: str = "all"
    n_queries: int = 100
    n_distractor_images: int = 5
    n_distractor_keypoints: int = 1000
    reps: int = 5
    seed: int = 42
    max_keypoints: int = 500
    strict: bool = False
    distance: str = "auto"
    retrieval_granularity: str = "sequence"
    wait: bool = False


class TimeRequest(BaseModel):
    detector: str
    descriptor: str
    data: Optional[str] = None
    warmup: int = 2
    passes: int = 3
    max_keypoints: int = 500


def _http_error(e: BenchError) -> HTTPException:
    if isinstance(e, ConfigError):
        return HTTPException(status_code=400, detail=str(e))
    if isinstance(e, DataError):
        status = 404 if isinstance(e, (MissingFeatures, EmptyDataset)) else 422
        return HTTPException(status_code=status, detail=str(e))
    return HTTPException(status_code=500, detail=str(e))


def _data_root(data: Optional[str]) -> str:
    root = data or get_settings().data_dir
    if not root:
        raise HTTPException(status_code=400, detail="No dataset given: pass 'data' or set KPBENCH_DATA_DIR")
    return root


def _report_path(name: str) -> str:
    return os.path.join(get_settings().reports_dir, f"{name}.json")


def _evaluate(req: EvaluateRequest, cfg: EvalConfig) -> dict:
    settings = get_settings()
    dataset = load_dataset(_data_root(req.data), "all", settings.max_pixels)
    report = run_evaluation(dataset, req.detector, req.descriptor, cfg)
    write_report(report, _report_path(combination(req.detector, req.descriptor)))
    return report_to_dict(report)


def _evaluate_in_background(req: EvaluateRequest, cfg: EvalConfig):
    try:
        _evaluate(req, cfg)
    except BenchError as e:
        logger.error(f"❌ Background evaluation {req.detector}+{req.descriptor} failed: {e}")


@app.get("/")
def read_root():
    return {"status": "online", "service": "Keypoint Benchmark API", "version": __version__}


@app.get("/health")
def health_check():
    return {"status": "ok"}


@app.get("/registry")
def list_registry():
    return registered()


@app.post("/evaluate")
def evaluate(req: EvaluateRequest, background_tasks: BackgroundTasks):
    """Runs one DET+DESC evaluation; the report lands in the reports directory."""
    try:
        get_detector(req.detector)
        get_descriptor(req.descriptor)
        cfg = validated(
            EvalConfig,
            n_queries=req.n_queries,
            n_distractor_images=req.n_distractor_images,
            n_distractor_keypoints=req.n_distractor_keypoints,
            reps=req.reps,
            master_seed=req.seed,
            max_keypoints=req.max_keypoints,
            tasks=tuple(req.tasks),
            split=req.split,
            strict=req.strict,
            retrieval_granularity=req.retrieval_granularity,
            distance=req.distance,
            workers=get_settings().workers,
        )
        _data_root(req.data)
        name = combination(req.detector, req.descriptor)
        if req.wait:
            return {"status": "done", "report": name, "result": _evaluate(req, cfg)}
    except BenchError as e:
        raise _http_error(e)

    background_tasks.add_task(_evaluate_in_background, req, cfg)
    logger.info(f"🚀 Queued evaluation {name}")
    return {"status": "queued", "report": name}


@app.get("/reports")
def list_reports():
    reports_dir = get_settings().reports_dir
    if not os.path.isdir(reports_dir):
        return {"reports": []}
    names = sorted(f[:-5] for f in os.listdir(reports_dir) if f.endswith(".json"))
    return {"reports": names}


@app.get("/reports/{name}")
def get_report(name: str):
    path = _report_path(name)
    if os.path.basename(path) != f"{name}.json" or not os.path.isfile(path):
        raise HTTPException(status_code=404, detail=f"Report {name!r} not found")
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


@app.post("/time")
def time_combination(req: TimeRequest):
    try:
        det_cfg = validated(DetectorConfig, max_keypoints=req.max_keypoints)
        dataset = load_dataset(_data_root(req.data), "all", get_settings().max_pixels)
        result = time_pipeline(dataset, req.detector, req.descriptor, req.warmup, req.passes, det_cfg)
    except BenchError as e:
        raise _http_error(e)
    return timing_summary(result)


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
