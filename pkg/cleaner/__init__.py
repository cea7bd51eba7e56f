"""
CLEANER
Similarity-aware trajectory purification for agentic RL, at desk scale:
a toy policy writes mini-language programs, SAAR rewrites failed turns
out of the committed history, and GRPO learns from the purified data.
"""

__version__ = "0.1.0"

from .errors import (
    CleanerError,
    ConfigError,
    ContractViolation,
    NonFiniteObjectiveError,
    PurificationError,
    RunValidationError,
    TrainingAborted,
    TrajectoryFormatError,
)
from .trajectory import (
    DecisionRecord,
    ErrorKind,
    History,
    Observation,
    Outcome,
    Provenance,
    Task,
    Trajectory,
    Turn,
    concat,
    read_trajectory_lines,
    write_trajectory_lines,
)
from .minilang import ExecLimits, parse, run
from .similarity import ratio
from .policy import PolicyParams, ToyPolicy, load_params, save_params
from .rollout import RolloutLimits, episode_rng, run_episode
from .saar import (
    CorrectionOutcome,
    SaarConfig,
    adaptive_replace,
    lookahead_correct,
    purify_offline,
    purify_online,
    recompute_logprobs,
)
from .grpo import GrpoConfig, compute_advantages, compute_reward, surrogate_objective, update
from .tasks import TaskGenerator, generate_task, make_task
from .config import ExperimentConfig, load_config_from_file
from .harness import evaluate, pass_at_k, report, run_ab, train
