import os
import sys

import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from pipeline.config.settings import get_settings


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Points every output/log/report directory into the test's tmp dir."""
    monkeypatch.setenv("KPBENCH_OUTPUT_DIR", str(tmp_path / "outputs"))
    monkeypatch.setenv("KPBENCH_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("KPBENCH_REPORTS_DIR", str(tmp_path / "outputs" / "reports"))
    monkeypatch.delenv("KPBENCH_DATA_DIR", raising=False)
    monkeypatch.delenv("KPBENCH_WORKERS", raising=False)
    get_settings.cache_clear()
    yield get_settings()
    get_settings.cache_clear()
