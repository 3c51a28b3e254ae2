import os
import logging
from functools import lru_cache
from typing import Optional

from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

# Directory Configuration
# Use absolute path relative to project root
BASE_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", "..", "pipeline_data"))
OUTPUT_DIR = os.path.join(BASE_DIR, "outputs")
LOG_DIR = os.path.join(BASE_DIR, "logs")
REPORTS_DIR = os.path.join(OUTPUT_DIR, "reports")

# HPSequences layout
SEQUENCE_KINDS = {
    "i_": "illumination",
    "v_": "viewpoint",
}
IMAGES_PER_SEQUENCE = 6
IMAGE_EXTENSIONS = ("ppm", "pgm")

TASKS = ("verification", "matching", "retrieval")
SPLITS = ("illumination", "viewpoint")


class BenchSettings(BaseSettings):
    """Environment-driven settings (prefix KPBENCH_, optional .env file)."""

    model_config = SettingsConfigDict(env_prefix="KPBENCH_", env_file=".env", extra="ignore")

    data_dir: Optional[str] = None
    output_dir: str = OUTPUT_DIR
    log_dir: str = LOG_DIR
    reports_dir: str = REPORTS_DIR
    log_level: str = "INFO"
    # 0 means one worker per CPU
    workers: int = Field(default=1, ge=0)
    max_pixels: int = Field(default=10**8, gt=0)


@lru_cache(maxsize=1)
def get_settings() -> BenchSettings:
    return BenchSettings()


def validated(model_cls, **values):
    """Builds a pydantic config model, turning validation failures into InvalidConfig."""
    from ..core.errors import InvalidConfig

    try:
        return model_cls(**values)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise InvalidConfig(f"Invalid {model_cls.__name__}: {problems}") from None


def resolve_workers(workers: int) -> int:
    if workers == 0:
        return os.cpu_count() or 1
    return workers


def setup_directories(settings: Optional[BenchSettings] = None):
    """Creates the necessary folder structure."""
    settings = settings or get_settings()
    for directory in [settings.output_dir, settings.log_dir, settings.reports_dir]:
        os.makedirs(directory, exist_ok=True)


def setup_logging(settings: Optional[BenchSettings] = None):
    """Configures system logging."""
    settings = settings or get_settings()
    os.makedirs(settings.log_dir, exist_ok=True)
    log_file = os.path.join(settings.log_dir, "benchmark_log.txt")
    level = getattr(logging, settings.log_level.upper(), logging.INFO)

    logging.basicConfig(
        filename=log_file,
        level=level,
        format='%(asctime)s - %(levelname)s - %(message)s',
        force=True
    )
    # Add console handler
    console = logging.StreamHandler()
    console.setLevel(level)
    console.setFormatter(logging.Formatter('%(levelname)s - %(message)s'))
    logging.getLogger('').addHandler(console)
