import sys
import os
import logging

# Add parent dir to sys.path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

logging.basicConfig(level=logging.ERROR)


def check_pipeline_structure():
    print("🔍 Checking Pipeline Structure...")
    try:
        from pipeline.config.settings import BASE_DIR, get_settings
        print(f"  ✅ Config loaded. BASE_DIR: {BASE_DIR}")
        print(f"  ✅ Dataset root: {get_settings().data_dir or '(not set, pass --data)'}")

        from pipeline.core.ingestor import load_dataset
        print("  ✅ Core Ingestor importable")

        from pipeline.models.registry import registered
        names = registered()
        print(f"  ✅ Detectors: {', '.join(names['detectors'])}")
        print(f"  ✅ Descriptors: {', '.join(names['descriptors'])}")

        from pipeline.components.orchestrator import run_evaluation
        print("  ✅ Orchestrator importable")

        from pipeline.components.benchtime import check_clock
        check_clock()
        print("  ✅ Timing clock is monotonic with sub-millisecond resolution")

        print("\nSUCCESS: Pipeline structure is valid.")
    except Exception as e:
        print(f"\n❌ FAILURE: {e}")


if __name__ == "__main__":
    check_pipeline_structure()
