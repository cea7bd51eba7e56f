"""
Experiment Configuration
Flat `key = value` files (read with python-dotenv), CLI overrides, and the
CLEANER_RUN_ROOT environment override for the run-directory root.
"""

import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from dotenv import dotenv_values, load_dotenv

from .errors import ConfigError, ContractViolation
from .grpo import GrpoConfig
from .minilang import ExecLimits
from .rollout import RolloutLimits
from .saar import SaarConfig
from .tasks import TASK_FAMILIES

RUN_ROOT_ENV = "CLEANER_RUN_ROOT"
MODES = ("baseline", "saar")


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of a training run; field names are the config-file keys"""
    seed: int = 0
    families: Tuple[str, ...] = ("arithmetic", "two_step", "division")
    mode: str = "saar"
    total_steps: int = 300
    init_scale: float = 0.0
    # rollout
    max_turns: int = 8
    max_steps: int = 10_000
    max_abs_value: int = 2 ** 62
    workers: int = 4
    # saar
    retry_limit: int = 3
    similarity_threshold: float = 0.5
    mix_probability: float = 0.7
    # grpo
    group_size: int = 8
    clip_low: float = 0.20
    clip_high: float = 0.28
    epsilon_std: float = 1e-8
    learning_rate: float = 0.05
    rollout_batch: int = 16
    mini_batch: int = 4
    ratio_mode: str = "trajectory"
    # evaluation
    eval_every: int = 25
    eval_tasks: int = 32
    eval_samples: int = 8
    eval_k: int = 4
    # run directory
    run_root: str = "runs"
    run_name: str = ""
    snapshot_every: int = 50
    trajectory_every: int = 1
    warmup_steps: int = 20
    vacuous_patience: int = 10

    def __post_init__(self):
        object.__setattr__(self, "families", tuple(self.families))
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.families:
            raise ConfigError("families must name at least one task family")
        unknown = [f for f in self.families if f not in TASK_FAMILIES]
        if unknown:
            raise ConfigError(f"unknown task families: {', '.join(unknown)}")
        if self.total_steps < 0:
            raise ConfigError("total_steps must be non-negative")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.eval_k < 1 or self.eval_k > self.eval_samples:
            raise ConfigError("eval_k must lie in [1, eval_samples]")
        for name in ("eval_every", "snapshot_every", "trajectory_every", "warmup_steps",
                     "eval_tasks"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.vacuous_patience < 1:
            raise ConfigError("vacuous_patience must be at least 1")
        try:
            self.rollout_limits()
            self.saar_config()
            self.grpo_config()
        except ContractViolation as e:
            raise ConfigError(str(e)) from e

    # -- component configs ----------------------------------------------------

    @property
    def effective_mix_probability(self) -> float:
        """baseline runs never purify"""
        return 0.0 if self.mode == "baseline" else self.mix_probability

    def rollout_limits(self) -> RolloutLimits:
        return RolloutLimits(self.max_turns, ExecLimits(self.max_steps, self.max_abs_value))

    def saar_config(self) -> SaarConfig:
        return SaarConfig(self.retry_limit, self.similarity_threshold,
                          self.effective_mix_probability)

    def grpo_config(self) -> GrpoConfig:
        return GrpoConfig(
            group_size=self.group_size,
            clip_low=self.clip_low,
            clip_high=self.clip_high,
            epsilon_std=self.epsilon_std,
            learning_rate=self.learning_rate,
            rollout_batch=self.rollout_batch,
            mini_batch=self.mini_batch,
            ratio_mode=self.ratio_mode,
        )

    # -- run directory --------------------------------------------------------

    @property
    def resolved_run_name(self) -> str:
        return self.run_name or f"{self.mode}-seed{self.seed}"

    def run_directory(self) -> Path:
        root = os.getenv(RUN_ROOT_ENV) or self.run_root
        return Path(root) / self.resolved_run_name

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        values = {k: v for k, v in overrides.items() if v is not None}
        unknown = set(values) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return replace(self, **values)

    def to_text(self) -> str:
        lines = []
        for name, value in asdict(self).items():
            lines.append(f"{name} = {_format_value(value)}")
        return "\n".join(lines) + "\n"


def _format_value(value: Any) -> str:
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _convert(name: str, raw: Optional[str], default: Any) -> Any:
    if raw is None:
        raise ConfigError(f"config key {name} has no value")
    raw = raw.strip()
    try:
        if isinstance(default, tuple):
            return tuple(item.strip() for item in raw.split(",") if item.strip())
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"config key {name}: cannot parse {raw!r}") from None
    return raw


def parse_config_values(values: Mapping[str, Optional[str]]) -> Dict[str, Any]:
    """Typed field values from raw strings; unknown keys are rejected"""
    defaults = {f.name: getattr(ExperimentConfig, f.name, None) for f in fields(ExperimentConfig)}
    unknown = sorted(set(values) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return {name: _convert(name, raw, defaults[name]) for name, raw in values.items()}


def load_config_from_file(file_path: Union[str, Path, None] = None,
                          overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """File values first, then non-None overrides (CLI flags)"""
    load_dotenv()
    values: Dict[str, Any] = {}
    if file_path is not None:
        if not Path(file_path).is_file():
            raise ConfigError(f"config file not found: {file_path}")
        values.update(parse_config_values(dotenv_values(file_path)))
    config = ExperimentConfig(**values)
    if overrides:
        config = config.with_overrides(**overrides)
    return config


def write_config(config: ExperimentConfig, file_path: Union[str, Path]) -> Path:
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(config.to_text(), encoding="utf-8")
    return path


SAMPLE_COMMENTS = {
    "seed": "root seed; every episode derives its own stream from it",
    "families": "comma-separated task families: arithmetic, two_step, division",
    "mode": "baseline or saar",
    "mix_probability": "share of SAAR-active episodes (ignored in baseline mode)",
    "similarity_threshold": "gamma: shallow replacement when ratio >= gamma",
    "retry_limit": "K: lookahead attempts per failure",
    "ratio_mode": "trajectory or decision",
    "run_root": f"overridden by the {RUN_ROOT_ENV} environment variable",
}


def create_sample_config_file(file_path: Union[str, Path] = "config/experiment.env") -> Path:
    """Create a sample configuration file with every key at its default"""
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# CLEANER experiment configuration (key = value)"]
    for name, value in asdict(ExperimentConfig()).items():
        if name in SAMPLE_COMMENTS:
            lines.append(f"# {SAMPLE_COMMENTS[name]}")
        lines.append(f"{name} = {_format_value(value)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"Sample configuration file created at: {path}")
    return path
