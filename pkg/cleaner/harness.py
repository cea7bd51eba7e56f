"""
Experiment Harness
Training loop orchestration (rollout -> purify -> recompute -> optimize),
evaluation, run-directory persistence, reports and the baseline-vs-SAAR
A/B protocol.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import binomtest

from .common_utils import PerformanceMonitor, save_json
from .config import ExperimentConfig, load_config_from_file, write_config
from .errors import NonFiniteObjectiveError, TrainingAborted
from .grpo import Group, build_group, compute_reward, run_update
from .policy import PolicyParams, ToyPolicy, save_params
from .rollout import RolloutLimits, episode_rng, rollout_group, run_episode
from .saar import SaarConfig, purify_online, recompute_logprobs
from .tasks import TaskGenerator, family_of, generate_task
from .trajectory import Provenance, Task, Trajectory, to_dict, write_trajectory_lines
from .validate_run import (
    CONFIG_FILE, FINAL_PARAMS_FILE, METRICS_FILE, TIMINGS_FILE, TRAJECTORY_DIR, require_run_files,
)

logger = logging.getLogger(__name__)

# first element of the eval seed sequence, outside any training step index
EVAL_STREAM = 2 ** 31 - 1
SUCCESS_THRESHOLD = 0.9
ERRORS_FROM_STEP = 20
DIAGNOSTICS_FILE = "diagnostics.json"


@dataclass(frozen=True)
class MetricRow:
    step: int
    mean_tool_errors_per_traj: float
    mean_tool_calls_per_traj: float
    train_success_rate: float
    eval_success_rate: float
    mean_turns: float
    purified_fraction: float
    filtered_group_fraction: float
    recovery_rate: float
    shallow_replacements: int
    deep_replacements: int
    mean_reward: float
    objective: float


METRIC_COLUMNS = [name for name in MetricRow.__dataclass_fields__]


@dataclass
class TrainingResult:
    params: PolicyParams
    metrics: List[MetricRow]
    run_dir: Path

    def metrics_frame(self) -> pd.DataFrame:
        return metrics_frame(self.metrics)


def metrics_frame(rows: Sequence[MetricRow]) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in rows], columns=METRIC_COLUMNS)


def write_metrics(rows: Sequence[MetricRow], path: Union[str, Path]):
    metrics_frame(rows).to_csv(path, index=False, float_format="%.10g", lineterminator="\n")


def batch_metrics(step: int, groups: Sequence[Group], eval_success_rate: float,
                  objective: float) -> MetricRow:
    trajectories = [t for g in groups for t in g.trajectories]
    count = len(trajectories)
    errors = sum(t.stats.tool_errors for t in trajectories)
    calls = sum(t.stats.tool_calls for t in trajectories)
    active = [t for t in trajectories if t.purification_applied]
    shallow = sum(1 for t in active for turn in t.turns
                  if turn.provenance is Provenance.PURIFIED_SHALLOW)
    deep = sum(1 for t in active for turn in t.turns
               if turn.provenance is Provenance.PURIFIED_DEEP)
    failures_left = sum(t.stats.tool_errors for t in active)
    repaired = shallow + deep
    return MetricRow(
        step=step,
        mean_tool_errors_per_traj=errors / count,
        mean_tool_calls_per_traj=calls / count,
        train_success_rate=sum(1 for t in trajectories if t.reward == 1.0) / count,
        eval_success_rate=eval_success_rate,
        mean_turns=sum(len(t.turns) for t in trajectories) / count,
        purified_fraction=len(active) / count,
        filtered_group_fraction=sum(1 for g in groups if g.filtered) / len(groups),
        recovery_rate=repaired / (repaired + failures_left) if repaired + failures_left else 0.0,
        shallow_replacements=shallow,
        deep_replacements=deep,
        mean_reward=float(np.mean([t.reward for t in trajectories])),
        objective=objective,
    )


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def pass_at_k(n: int, c: int, k: int) -> float:
    """
    Unbiased pass@k for one task: 1 - C(n-c, k) / C(n, k), in product form.
    """
    if k > n:
        raise ValueError(f"k={k} exceeds n={n}")
    if c == 0:
        return 0.0
    if n - c < k:
        return 1.0
    product_term = 1.0
    for i in range(k):
        product_term *= float(n - c - i) / float(n - i)
    return 1.0 - product_term


def estimate_pass_at_k(outcomes: np.ndarray, k: int) -> float:
    """Mean pass@k over tasks from a boolean (tasks x samples) outcome matrix"""
    outcomes = np.asarray(outcomes, dtype=bool)
    if outcomes.ndim != 2 or outcomes.shape[0] == 0:
        raise ValueError("outcomes must be a non-empty tasks x samples matrix")
    n = outcomes.shape[1]
    return float(np.mean([pass_at_k(n, int(c), k) for c in outcomes.sum(axis=1)]))


@dataclass(frozen=True)
class EvalResult:
    pass_at_1: float
    pass_at_k: float
    k: int
    n_samples: int
    outcomes: np.ndarray = field(repr=False)
    mean_tool_errors: float = 0.0
    saar_active: bool = False

    def to_dict(self) -> Dict[str, object]:
        return {"pass@1": self.pass_at_1, f"pass@{self.k}": self.pass_at_k, "k": self.k,
                "n_samples": self.n_samples, "tasks": int(self.outcomes.shape[0]),
                "tool_errors_per_traj": self.mean_tool_errors, "saar_active": self.saar_active}


def evaluate(params: PolicyParams, tasks: Sequence[Task], n_samples: int, k: int, seed: int,
             policy: Optional[ToyPolicy] = None, limits: RolloutLimits = RolloutLimits(),
             executor: Optional[ThreadPoolExecutor] = None,
             saar: Optional[SaarConfig] = None) -> EvalResult:
    """
    pass@1 and pass@k of plain rollouts, or of rollouts with SAAR active at
    inference when a SaarConfig is given (every episode purified).

    pass@1 uses the same unbiased estimator with k = 1, i.e. the expected
    success of one sample per task.
    """
    if not 1 <= k <= n_samples:
        raise ValueError(f"k must lie in [1, n_samples={n_samples}]")
    if not tasks:
        raise ValueError("evaluation needs at least one task")
    policy = policy or ToyPolicy()
    outcomes = np.zeros((len(tasks), n_samples), dtype=bool)
    if saar is not None:
        saar = replace(saar, mix_probability=1.0)
        episode = partial(_saar_episode, limits=limits, saar=saar, policy=policy)
    else:
        episode = partial(_plain_episode, limits=limits, policy=policy)
    errors = 0
    for t, task in enumerate(tasks):
        rngs = [episode_rng(seed, EVAL_STREAM, t, j) for j in range(n_samples)]
        trajectories = rollout_group(task, params, rngs, episode, executor)
        outcomes[t] = [compute_reward(traj, task) == 1.0 for traj in trajectories]
        errors += sum(traj.stats.tool_errors for traj in trajectories)
    return EvalResult(estimate_pass_at_k(outcomes, 1), estimate_pass_at_k(outcomes, k),
                      k, n_samples, outcomes, errors / outcomes.size, saar is not None)


@dataclass(frozen=True)
class InferenceComparison:
    """The same tasks and seeds evaluated with SAAR off and on"""
    plain: EvalResult
    saar: EvalResult
    seconds: Dict[str, float]

    def frame(self) -> pd.DataFrame:
        rows = []
        for label, result in (("plain", self.plain), ("saar", self.saar)):
            rows.append({"inference": label, "pass@1": result.pass_at_1,
                         f"pass@{result.k}": result.pass_at_k,
                         "tool_errors_per_traj": result.mean_tool_errors,
                         "seconds": self.seconds[label]})
        return pd.DataFrame(rows)

    def to_dict(self) -> Dict[str, object]:
        return {"plain": {**self.plain.to_dict(), "seconds": self.seconds["plain"]},
                "saar": {**self.saar.to_dict(), "seconds": self.seconds["saar"]}}


def compare_saar_inference(params: PolicyParams, tasks: Sequence[Task], n_samples: int, k: int,
                           seed: int, policy: Optional[ToyPolicy] = None,
                           limits: RolloutLimits = RolloutLimits(),
                           saar: SaarConfig = SaarConfig(),
                           executor: Optional[ThreadPoolExecutor] = None) -> InferenceComparison:
    """Accuracy and wall time with SAAR deactivated versus active at inference"""
    monitor = PerformanceMonitor()
    plain = monitor.measure_operation("plain", evaluate, params, tasks, n_samples, k, seed,
                                      policy, limits, executor)
    active = monitor.measure_operation("saar", evaluate, params, tasks, n_samples, k, seed,
                                       policy, limits, executor, saar)
    operations = monitor.get_performance_summary()["operations"]
    seconds = {name: operations[name]["total_seconds"] for name in ("plain", "saar")}
    logger.info("inference without SAAR: pass@1=%.3f in %.2fs; with SAAR: pass@1=%.3f in %.2fs",
                plain.pass_at_1, seconds["plain"], active.pass_at_1, seconds["saar"])
    return InferenceComparison(plain, active, seconds)


def _plain_episode(task, params, rng, limits, policy) -> Trajectory:
    return run_episode(task, params, limits, rng, policy)


def _saar_episode(task, params, rng, limits, saar, policy) -> Trajectory:
    return purify_online(task, params, limits, saar, rng, policy)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@contextmanager
def _executor(workers: int) -> Iterator[Optional[ThreadPoolExecutor]]:
    if workers <= 1:
        yield None
        return
    with ThreadPoolExecutor(max_workers=workers) as executor:
        yield executor


def sample_step_tasks(config: ExperimentConfig, step: int) -> List[Task]:
    rng = episode_rng(config.seed, step)
    families = [family_of(name) for name in config.families]
    return [generate_task(families[int(rng.integers(len(families)))], rng,
                          f"s{step:05d}-t{index:03d}")
            for index in range(config.rollout_batch)]


def eval_task_set(config: ExperimentConfig) -> List[Task]:
    return TaskGenerator.generate_tasks(config.families, config.eval_tasks,
                                        [config.seed, EVAL_STREAM])


def _dump_group(group: Group, path: Path, reason: str, step: int, index: int) -> Path:
    save_json({
        "reason": reason,
        "step": step,
        "group_index": index,
        "task": group.task.to_dict(),
        "rewards": list(group.rewards),
        "advantages": list(group.advantages),
        "old_logprobs": [list(lp) for lp in group.old_logprobs],
        "trajectories": [to_dict(t) for t in group.trajectories],
    }, str(path))
    return path


class Trainer:
    """One training run under one ExperimentConfig"""

    def __init__(self, config: ExperimentConfig, policy: Optional[ToyPolicy] = None,
                 params: Optional[PolicyParams] = None, run_dir: Optional[Path] = None):
        self.config = config
        self.policy = policy or ToyPolicy()
        self.params = params or self.policy.init_params(config.init_scale, config.seed)
        self.run_dir = Path(run_dir) if run_dir is not None else config.run_directory()
        self.limits = config.rollout_limits()
        self.saar: SaarConfig = config.saar_config()
        self.grpo = config.grpo_config()
        self.monitor = PerformanceMonitor()
        self.metrics: List[MetricRow] = []
        self.eval_tasks = eval_task_set(config) if config.eval_every and config.eval_tasks else []
        self._eval_success = float("nan")
        self._vacuous_steps = 0

    def _episode_fn(self):
        if self.config.mode == "saar":
            return partial(_saar_episode, limits=self.limits, saar=self.saar, policy=self.policy)
        return partial(_plain_episode, limits=self.limits, policy=self.policy)

    def rollout(self, step: int, tasks: Sequence[Task], executor) -> List[List[Trajectory]]:
        episode = self._episode_fn()
        batches = []
        for t, task in enumerate(tasks):
            rngs = [episode_rng(self.config.seed, step, t, j)
                    for j in range(self.grpo.group_size)]
            batches.append(rollout_group(task, self.params, rngs, episode, executor))
        return batches

    def recompute(self, tasks: Sequence[Task], batches, executor) -> List[List[Trajectory]]:
        def one(task: Task, traj: Trajectory) -> Trajectory:
            return recompute_logprobs(traj, task, self.params, self.policy)

        out = []
        for task, trajectories in zip(tasks, batches):
            if executor is None:
                out.append([one(task, t) for t in trajectories])
            else:
                out.append(list(executor.map(partial(one, task), trajectories)))
        return out

    def _evaluate(self, step: int, executor) -> float:
        every = self.config.eval_every
        if not self.eval_tasks or not (step == 1 or step % every == 0):
            return self._eval_success
        result = evaluate(self.params, self.eval_tasks, self.config.eval_samples,
                          self.config.eval_k, self.config.seed, self.policy, self.limits,
                          executor)
        self._eval_success = result.pass_at_1
        logger.info("step %d eval: pass@1=%.3f pass@%d=%.3f", step, result.pass_at_1,
                    result.k, result.pass_at_k)
        return self._eval_success

    def _check_vacuous(self, step: int, groups: Sequence[Group]):
        """All groups filtered while some still fail means no gradient can ever arrive"""
        all_filtered = all(g.filtered for g in groups)
        unsolved = any(r != 1.0 for g in groups for r in g.rewards)
        if step > self.config.warmup_steps and all_filtered and unsolved:
            self._vacuous_steps += 1
        else:
            self._vacuous_steps = 0
        if self._vacuous_steps >= self.config.vacuous_patience:
            path = _dump_group(groups[0], self.run_dir / DIAGNOSTICS_FILE,
                               "all groups filtered", step, 0)
            logger.error("training is vacuous: every group filtered for %d steps",
                         self._vacuous_steps)
            raise TrainingAborted(
                f"every group had zero reward variance for {self._vacuous_steps} consecutive "
                f"steps after warmup", str(path))

    def step(self, step: int, executor) -> MetricRow:
        tasks = sample_step_tasks(self.config, step)
        batches = self.monitor.measure_operation("rollout", self.rollout, step, tasks, executor)
        batches = self.monitor.measure_operation("recompute", self.recompute, tasks, batches,
                                                 executor)
        groups = [build_group(task, trajectories, self.policy, self.grpo)
                  for task, trajectories in zip(tasks, batches)]
        self._check_vacuous(step, groups)
        try:
            result = self.monitor.measure_operation("update", run_update, self.params, groups,
                                                    self.policy, self.grpo)
        except NonFiniteObjectiveError as e:
            path = _dump_group(groups[e.group_index], self.run_dir / DIAGNOSTICS_FILE,
                               str(e), step, e.group_index)
            logger.error("aborting at step %d: %s", step, e)
            raise TrainingAborted(f"step {step}: {e}", str(path)) from e

        if self.config.trajectory_every and step % self.config.trajectory_every == 0:
            write_trajectory_lines(self.run_dir / TRAJECTORY_DIR / f"step_{step:05d}.jsonl",
                                   [t for g in groups for t in g.trajectories])
        self.params = result.params
        eval_success = self.monitor.measure_operation("evaluate", self._evaluate, step, executor)
        row = batch_metrics(step, groups, eval_success, result.objective)
        if self.config.snapshot_every and step % self.config.snapshot_every == 0:
            save_params(self.params, self.run_dir / "params" / f"step_{step:05d}.txt")
        logger.info("step %d: success=%.3f errors/traj=%.3f purified=%.2f filtered=%.2f",
                    step, row.train_success_rate, row.mean_tool_errors_per_traj,
                    row.purified_fraction, row.filtered_group_fraction)
        return row

    def train(self) -> TrainingResult:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        write_config(self.config, self.run_dir / CONFIG_FILE)
        save_params(self.params, self.run_dir / "params" / "step_00000.txt")
        logger.info("training %s run %s for %d steps", self.config.mode, self.run_dir,
                    self.config.total_steps)
        try:
            with _executor(self.config.workers) as executor:
                for step in range(1, self.config.total_steps + 1):
                    self.metrics.append(self.step(step, executor))
        finally:
            write_metrics(self.metrics, self.run_dir / METRICS_FILE)
            self.monitor.save_measurements(str(self.run_dir / TIMINGS_FILE))
        save_params(self.params, self.run_dir / FINAL_PARAMS_FILE)
        return TrainingResult(self.params, list(self.metrics), self.run_dir)


def train(config: ExperimentConfig, policy: Optional[ToyPolicy] = None,
          params: Optional[PolicyParams] = None,
          run_dir: Optional[Union[str, Path]] = None) -> TrainingResult:
    return Trainer(config, policy, params, Path(run_dir) if run_dir else None).train()


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def steps_to_threshold(frame: pd.DataFrame, column: str = "train_success_rate",
                       threshold: float = SUCCESS_THRESHOLD) -> Optional[int]:
    hits = frame.loc[frame[column] >= threshold, "step"]
    return int(hits.iloc[0]) if len(hits) else None


def mean_from_step(frame: pd.DataFrame, column: str, start: int = ERRORS_FROM_STEP) -> float:
    tail = frame.loc[frame["step"] >= start, column]
    return float(tail.mean()) if len(tail) else float("nan")


@dataclass
class RunSummary:
    run_dir: Path
    mode: str
    seed: int
    steps: int
    steps_to_90: Optional[int]
    mean_tool_errors: float
    final_train_success: float
    final_eval_success: float

    @classmethod
    def of(cls, run_dir: Union[str, Path]) -> Tuple["RunSummary", pd.DataFrame]:
        run_dir = Path(run_dir)
        require_run_files(run_dir)
        config = load_config_from_file(run_dir / CONFIG_FILE)
        frame = pd.read_csv(run_dir / METRICS_FILE)
        last = frame.iloc[-1] if len(frame) else None
        summary = cls(
            run_dir=run_dir,
            mode=config.mode,
            seed=config.seed,
            steps=len(frame),
            steps_to_90=steps_to_threshold(frame),
            mean_tool_errors=mean_from_step(frame, "mean_tool_errors_per_traj"),
            final_train_success=float(last["train_success_rate"]) if last is not None else math.nan,
            final_eval_success=float(last["eval_success_rate"]) if last is not None else math.nan,
        )
        return summary, frame


@dataclass
class Report:
    summaries: List[RunSummary]
    delta: Optional[pd.DataFrame]
    csv_paths: List[Path]
    plot_path: Optional[Path] = None

    def text(self) -> str:
        lines = []
        for s in self.summaries:
            lines.append(f"{s.run_dir}: mode={s.mode} seed={s.seed} steps={s.steps} "
                         f"steps_to_90={s.steps_to_90 if s.steps_to_90 is not None else 'never'} "
                         f"errors/traj(step>={ERRORS_FROM_STEP})={s.mean_tool_errors:.4f} "
                         f"final_success={s.final_train_success:.3f}")
        if self.delta is not None:
            lines.append("")
            lines.append(self.delta.to_string(index=False))
        return "\n".join(lines)


def _delta_table(baseline: RunSummary, saar: RunSummary) -> pd.DataFrame:
    rows = []
    for label, attr in (("steps_to_90", "steps_to_90"),
                        (f"tool_errors_per_traj_from_step_{ERRORS_FROM_STEP}", "mean_tool_errors"),
                        ("final_train_success", "final_train_success"),
                        ("final_eval_success", "final_eval_success")):
        b, s = getattr(baseline, attr), getattr(saar, attr)
        b_val = float(b) if b is not None else math.nan
        s_val = float(s) if s is not None else math.nan
        rows.append({"metric": label, "baseline": b_val, "saar": s_val, "delta": s_val - b_val})
    return pd.DataFrame(rows, columns=["metric", "baseline", "saar", "delta"])


def plot_runs(frames: Dict[str, pd.DataFrame], path: Union[str, Path]) -> Path:
    """Tool errors, train success and turns per step, one line per run"""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    panels = [("mean_tool_errors_per_traj", "tool errors / trajectory"),
              ("train_success_rate", "train success"),
              ("mean_turns", "turns / trajectory")]
    fig, axes = plt.subplots(1, len(panels), figsize=(5 * len(panels), 4))
    for ax, (column, title) in zip(axes, panels):
        for label, frame in frames.items():
            ax.plot(frame["step"], frame[column], label=label)
        ax.set_title(title)
        ax.set_xlabel("step")
    axes[0].legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def report(run_dirs: Sequence[Union[str, Path]], out_dir: Optional[Union[str, Path]] = None,
           plot: bool = False) -> Report:
    """Per-run plot-ready CSV; with a baseline and a saar run, also a delta table"""
    if not run_dirs:
        raise ValueError("report needs at least one run directory")
    summaries, frames = [], {}
    for run_dir in run_dirs:
        summary, frame = RunSummary.of(run_dir)
        summaries.append(summary)
        frames[f"{summary.mode}-seed{summary.seed}"] = frame

    out = Path(out_dir) if out_dir is not None else Path(run_dirs[0])
    out.mkdir(parents=True, exist_ok=True)
    csv_paths = []
    for summary, frame in zip(summaries, frames.values()):
        path = out / f"report_{summary.run_dir.name}.csv"
        frame.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
        csv_paths.append(path)

    delta = None
    modes = {s.mode: s for s in summaries}
    if len(summaries) == 2 and set(modes) == {"baseline", "saar"}:
        delta = _delta_table(modes["baseline"], modes["saar"])
        path = out / "ab_delta.csv"
        delta.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
        csv_paths.append(path)

    plot_path = plot_runs(frames, out / "dynamics.png") if plot else None
    return Report(summaries, delta, csv_paths, plot_path)


# ---------------------------------------------------------------------------
# A/B protocol
# ---------------------------------------------------------------------------

# the error-prone family, without per-step dumps or held-out evaluation
AB_PROTOCOL = {
    "families": ("division",),
    "total_steps": 150,
    "workers": 1,
    "eval_every": 0,
    "eval_tasks": 0,
    "snapshot_every": 0,
    "trajectory_every": 0,
}


def ab_protocol_config(**overrides) -> ExperimentConfig:
    """Desk-scale setup of the paired baseline/SAAR comparison"""
    return ExperimentConfig().with_overrides(**AB_PROTOCOL).with_overrides(**overrides)


@dataclass
class AbResult:
    table: pd.DataFrame
    wins: int
    trials: int
    p_value: float
    error_ratio: float
    summary_path: Path

    @property
    def significant(self) -> bool:
        return self.p_value < 0.05


def run_ab(config: ExperimentConfig, seeds: int, root: Optional[Union[str, Path]] = None) -> AbResult:
    """
    Paired baseline/SAAR runs over consecutive seeds.

    A run that never reaches the success threshold counts as total_steps + 1.
    The sign test is one-sided (SAAR faster) over seeds without ties.
    """
    if seeds < 1:
        raise ValueError("seeds must be at least 1")
    root = Path(root) if root is not None else config.run_directory().parent / "ab"
    rows = []
    for seed in range(config.seed, config.seed + seeds):
        pair = {}
        for mode in ("baseline", "saar"):
            run_config = config.with_overrides(mode=mode, seed=seed,
                                               run_name=f"{mode}-seed{seed}")
            result = train(run_config, run_dir=root / run_config.resolved_run_name)
            frame = result.metrics_frame()
            pair[mode] = (steps_to_threshold(frame), mean_from_step(frame,
                                                                   "mean_tool_errors_per_traj"))
        censored = config.total_steps + 1
        b_steps = pair["baseline"][0] or censored
        s_steps = pair["saar"][0] or censored
        rows.append({"seed": seed, "baseline_steps_to_90": b_steps, "saar_steps_to_90": s_steps,
                     "baseline_errors": pair["baseline"][1], "saar_errors": pair["saar"][1]})
        logger.info("seed %d: steps to 90%% baseline=%d saar=%d", seed, b_steps, s_steps)

    table = pd.DataFrame(rows)
    wins = int((table["saar_steps_to_90"] < table["baseline_steps_to_90"]).sum())
    losses = int((table["saar_steps_to_90"] > table["baseline_steps_to_90"]).sum())
    trials = wins + losses
    p_value = binomtest(wins, trials, 0.5, alternative="greater").pvalue if trials else 1.0
    baseline_errors = table["baseline_errors"].mean()
    error_ratio = float(table["saar_errors"].mean() / baseline_errors) if baseline_errors else math.nan

    root.mkdir(parents=True, exist_ok=True)
    summary_path = root / "ab_summary.csv"
    table.to_csv(summary_path, index=False, float_format="%.10g", lineterminator="\n")
    save_json({"wins": wins, "trials": trials, "p_value": float(p_value),
               "error_ratio": error_ratio,
               "median_steps_baseline": float(table["baseline_steps_to_90"].median()),
               "median_steps_saar": float(table["saar_steps_to_90"].median())},
              str(root / "ab_summary.json"))
    return AbResult(table, wins, trials, float(p_value), error_ratio, summary_path)
