"""
Common Utility Functions
Logging setup, phase timing and JSON file helpers shared by the harness
and the CLI
"""

import json
import logging
import os
import time
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(name: str = "cleaner", level: int = logging.INFO) -> logging.Logger:
    """Attach one stream handler to the package logger"""
    logger = logging.getLogger(name)
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)
    logger.setLevel(level)
    return logger


class PerformanceMonitor:
    """Wall-clock timing of training phases (rollout, recompute, update, evaluate)"""

    def __init__(self, verbose: bool = False):
        self.measurements: List[Dict[str, Any]] = []
        self.verbose = verbose
        self.logger = logging.getLogger(__name__)

    def measure_operation(self, operation_name: str, operation_func: Callable, *args, **kwargs):
        """Run operation_func and record how long it took"""
        start_time = time.perf_counter()
        try:
            result = operation_func(*args, **kwargs)
        except Exception as e:
            self._record(operation_name, time.perf_counter() - start_time, error=str(e))
            raise
        duration = self._record(operation_name, time.perf_counter() - start_time)
        if self.verbose:
            print(f"⏱️  {operation_name}: {duration:.3f}s")
        return result

    def _record(self, operation_name: str, duration: float, error: Optional[str] = None) -> float:
        measurement = {
            "operation": operation_name,
            "duration_seconds": duration,
            "timestamp": datetime.now().isoformat(),
            "success": error is None,
        }
        if error is not None:
            measurement["error"] = error
            self.logger.error("%s failed after %.3fs: %s", operation_name, duration, error)
        self.measurements.append(measurement)
        return duration

    def get_performance_summary(self) -> Dict[str, Any]:
        """Per-operation totals; raw measurements are left out to keep the file small"""
        if not self.measurements:
            return {"message": "No measurements recorded"}

        operations: Dict[str, Dict[str, float]] = {}
        for m in self.measurements:
            entry = operations.setdefault(m["operation"], {"count": 0, "total_seconds": 0.0,
                                                           "max_seconds": 0.0, "failures": 0})
            entry["count"] += 1
            entry["total_seconds"] += m["duration_seconds"]
            entry["max_seconds"] = max(entry["max_seconds"], m["duration_seconds"])
            entry["failures"] += 0 if m["success"] else 1
        for entry in operations.values():
            entry["average_seconds"] = entry["total_seconds"] / entry["count"]

        return {
            "total_operations": len(self.measurements),
            "failed_operations": sum(1 for m in self.measurements if not m["success"]),
            "total_seconds": sum(m["duration_seconds"] for m in self.measurements),
            "operations": operations,
        }

    def save_measurements(self, file_path: str):
        save_json(self.get_performance_summary(), file_path)
        self.logger.debug("Performance measurements saved to %s", file_path)


def save_json(data: Any, file_path: str):
    directory = os.path.dirname(file_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)


def load_json(file_path: str) -> Any:
    with open(file_path, "r", encoding="utf-8") as f:
        return json.load(f)
