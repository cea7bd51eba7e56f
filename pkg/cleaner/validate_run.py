"""
Run Directory Validation
Checks that a training run left every artifact needed to regenerate its
reports: config copy, metrics, final parameters, trajectory lines
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd

from .config import load_config_from_file
from .errors import RunValidationError
from .policy import load_params

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.env"
METRICS_FILE = "metrics.csv"
FINAL_PARAMS_FILE = "params/final.txt"
TRAJECTORY_DIR = "trajectories"
TIMINGS_FILE = "timings.json"
EXPECTED_FILES = (CONFIG_FILE, METRICS_FILE, FINAL_PARAMS_FILE)


class ValidationResult:
    """Container for validation results"""
    def __init__(self, name: str, passed: bool, message: str, details: Dict[str, Any] = None):
        self.name = name
        self.passed = passed
        self.message = message
        self.details = details or {}


class RunValidator:
    """Validate one run directory"""

    def __init__(self, run_dir: Union[str, Path], verbose: bool = True):
        self.run_dir = Path(run_dir)
        self.verbose = verbose
        self.results: List[ValidationResult] = []

    def add_result(self, name: str, passed: bool, message: str, details: Dict[str, Any] = None):
        """Add a validation result"""
        self.results.append(ValidationResult(name, passed, message, details))
        if self.verbose:
            status = "✅" if passed else "❌"
            print(f"{status} {name}: {message}")
        return passed

    def missing_files(self) -> List[str]:
        return [str(self.run_dir / name) for name in EXPECTED_FILES
                if not (self.run_dir / name).is_file()]

    def check_expected_files(self) -> bool:
        missing = self.missing_files()
        if missing:
            return self.add_result("Run Files", False, f"Missing files: {', '.join(missing)}",
                                   {"missing": missing})
        return self.add_result("Run Files", True, f"All {len(EXPECTED_FILES)} expected files exist")

    def check_config(self) -> bool:
        path = self.run_dir / CONFIG_FILE
        if not path.is_file():
            return self.add_result("Config", False, f"{path} not found")
        try:
            config = load_config_from_file(path)
        except Exception as e:
            return self.add_result("Config", False, f"{path} does not parse: {e}")
        return self.add_result("Config", True, f"mode={config.mode} seed={config.seed} "
                               f"steps={config.total_steps}", {"mode": config.mode})

    def check_metrics(self) -> bool:
        from .harness import METRIC_COLUMNS

        path = self.run_dir / METRICS_FILE
        if not path.is_file():
            return self.add_result("Metrics", False, f"{path} not found")
        frame = pd.read_csv(path)
        missing = [c for c in METRIC_COLUMNS if c not in frame.columns]
        if missing:
            return self.add_result("Metrics", False, f"Missing columns: {', '.join(missing)}",
                                   {"missing_columns": missing})
        steps = frame["step"].tolist()
        if steps != list(range(1, len(steps) + 1)):
            return self.add_result("Metrics", False, "steps are not consecutive from 1")
        return self.add_result("Metrics", True, f"{len(frame)} metric rows", {"rows": len(frame)})

    def check_params(self) -> bool:
        path = self.run_dir / FINAL_PARAMS_FILE
        if not path.is_file():
            return self.add_result("Parameters", False, f"{path} not found")
        try:
            params = load_params(path)
        except Exception as e:
            return self.add_result("Parameters", False, f"{path} does not load: {e}")
        return self.add_result("Parameters", True, f"{params.theta.size} finite parameters")

    def check_trajectories(self) -> bool:
        directory = self.run_dir / TRAJECTORY_DIR
        files = sorted(directory.glob("step_*.jsonl")) if directory.is_dir() else []
        return self.add_result("Trajectories", True, f"{len(files)} trajectory files",
                               {"files": len(files)})

    def run_all_validations(self) -> bool:
        checks = [self.check_expected_files, self.check_config, self.check_metrics,
                  self.check_params, self.check_trajectories]
        all_passed = True
        for check in checks:
            try:
                if not check():
                    all_passed = False
            except Exception as e:
                self.add_result(check.__name__, False, f"Unexpected error: {e}")
                all_passed = False
        return all_passed

    def generate_report(self) -> Dict[str, Any]:
        passed = sum(1 for r in self.results if r.passed)
        return {
            "run_dir": str(self.run_dir),
            "summary": {"total_checks": len(self.results), "passed_checks": passed,
                        "failed_checks": len(self.results) - passed},
            "results": [{"name": r.name, "passed": r.passed, "message": r.message,
                         "details": r.details} for r in self.results],
        }


def require_run_files(run_dir: Union[str, Path], files: Optional[List[str]] = None):
    """Raise RunValidationError naming every missing file by path"""
    run_dir = Path(run_dir)
    wanted = files if files is not None else [CONFIG_FILE, METRICS_FILE]
    missing = [str(run_dir / name) for name in wanted if not (run_dir / name).is_file()]
    if missing:
        raise RunValidationError(f"run directory {run_dir} is missing: {', '.join(missing)}",
                                 missing)
