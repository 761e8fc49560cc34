"""Grid and random search over config paths, with parallel trial execution."""

from __future__ import annotations

import dataclasses
import itertools
import json
import math
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from declml.config import canonical_render, override_path
from declml.config.schema import HyperoptSpec, PipelineConfig, SearchDomain, SearchSpace
from declml.data.dataset import ColumnarDataset
from declml.errors import AllTrialsFailed, ArtifactIOError, DeclMLError, InfiniteDomain, InvalidGoalMetric
from declml.evaluate import evaluate_split
from declml.features import DEFAULT_REGISTRY
from declml.model import build_model
from declml.pipeline import prepare
from declml.train import train

Assignment = dict[str, Any]


def _domain_values(d: SearchDomain) -> list[Any]:
    if d.type == "choice":
        return list(d.values)
    if d.type == "int":
        return list(range(int(d.low), int(d.high) + 1))
    raise InfiniteDomain(f"{d.path}: float range cannot be enumerated by grid search")


def expand_grid(space: SearchSpace) -> list[Assignment]:
    """Cartesian product; the first path varies slowest, values keep their declared order."""
    axes = [_domain_values(d) for d in space.domains]
    return [dict(zip(space.paths, combo)) for combo in itertools.product(*axes)]


def _draw(d: SearchDomain, rng: np.random.Generator) -> Any:
    if d.type == "choice":
        return d.values[int(rng.integers(len(d.values)))]
    if d.type == "int":
        return int(rng.integers(int(d.low), int(d.high) + 1))
    if d.scale == "log":
        v = 10.0 ** rng.uniform(math.log10(d.low), math.log10(d.high))
    else:
        v = rng.uniform(d.low, d.high)
    return float(min(max(v, d.low), d.high))


def sample_random(space: SearchSpace, n: int, seed: int) -> list[Assignment]:
    """``n`` independent draws; paths are drawn in declared order within each draw."""
    rng = np.random.default_rng(seed)
    return [{d.path: _draw(d, rng) for d in space.domains} for _ in range(n)]


def trial_seed(base_seed: int, index: int) -> int:
    """Per-trial training seed: first word of ``SeedSequence([base_seed, index])``."""
    return int(np.random.SeedSequence([int(base_seed), int(index)]).generate_state(1)[0])


@dataclass
class TrialResult:
    index: int
    assignment: Assignment
    seed: int
    status: str  # "ok" | "failed"
    goal: float | None = None
    report: dict[str, Any] | None = None
    reason: str | None = None
    wall_seconds: float = 0.0

    def to_dict(self, include_timing: bool = True) -> dict[str, Any]:
        d = {
            "index": self.index,
            "assignment": self.assignment,
            "seed": self.seed,
            "status": self.status,
            "goal": self.goal,
            "report": self.report,
            "reason": self.reason,
        }
        if include_timing:
            d["wall_seconds"] = self.wall_seconds
        return d


def trial_config(base: PipelineConfig, assignment: Mapping[str, Any], seed: int) -> PipelineConfig:
    """Base config with the derived seed, then each assignment applied in path order."""
    config = override_path(dataclasses.replace(base, hyperopt=None), "training.seed", seed)
    for path, value in assignment.items():
        config = override_path(config, path, value)
    return config


def goal_value(report: Mapping[str, Any], goal) -> float:
    if goal.metric == "loss":
        return float(report["losses"][goal.output_feature])
    return float(report["metrics"][goal.output_feature][goal.metric])


def _run_trial(job) -> TrialResult:
    base, dataset, spec, index, assignment, split_column = job
    seed = trial_seed(spec.seed, index)
    start = time.perf_counter()
    try:
        config = trial_config(base, assignment, seed)
        # Splits follow the base config so every trial sees the same rows.
        splits_config = dataclasses.replace(config, training=base.training)
        _, meta, encoded = prepare(splits_config, dataset, split_column)
        model = build_model(config, meta, seed)
        model, _ = train(model, encoded["train"], encoded["validation"], config.training)
        report = evaluate_split(model, encoded[spec.split], spec.split).to_dict()
        value = goal_value(report, spec.goal)
        if not math.isfinite(value):
            raise ValueError(f"goal metric is {value}")
    except (DeclMLError, ValueError, ArithmeticError) as exc:
        return TrialResult(index, dict(assignment), seed, "failed", reason=f"{type(exc).__name__}: {exc}",
                           wall_seconds=time.perf_counter() - start)
    return TrialResult(index, dict(assignment), seed, "ok", value, report, wall_seconds=time.perf_counter() - start)


def select_best(trials: Sequence[TrialResult], direction: str) -> TrialResult:
    """Best ok trial; ties go to the lowest index regardless of completion order."""
    ok = sorted((t for t in trials if t.status == "ok"), key=lambda t: t.index)
    if not ok:
        raise AllTrialsFailed(f"all {len(trials)} trials failed")
    sign = 1.0 if direction == "minimize" else -1.0
    return min(ok, key=lambda t: (sign * t.goal, t.index))


def check_goal(base: PipelineConfig, spec: HyperoptSpec) -> None:
    try:
        feature = next(f for f in base.output_features if f.name == spec.goal.output_feature)
    except StopIteration:
        raise InvalidGoalMetric("hyperopt.goal.output_feature", f"{spec.goal.output_feature!r} is not an output feature") from None
    metrics = DEFAULT_REGISTRY.capabilities_of(feature.type, as_output=True).metrics
    if spec.goal.metric != "loss" and spec.goal.metric not in metrics:
        raise InvalidGoalMetric("hyperopt.goal.metric", f"{spec.goal.metric!r} is not produced by {feature.type.value} outputs")


def run_search(
    base: PipelineConfig,
    dataset: ColumnarDataset,
    spec: HyperoptSpec | None = None,
    space: SearchSpace | None = None,
    workers: int = 1,
    split_column: str | None = None,
) -> tuple[list[TrialResult], PipelineConfig]:
    """Train and evaluate every assignment; return all trials and the best config."""
    spec = spec or base.hyperopt
    if spec is None:
        raise InvalidGoalMetric("hyperopt", "config has no hyperopt section")
    space = space or spec.space
    check_goal(base, spec)
    if spec.strategy == "grid":
        assignments = expand_grid(space)
    else:
        assignments = sample_random(space, spec.samples, spec.seed)
    jobs = [(base, dataset, spec, i, a, split_column) for i, a in enumerate(assignments)]
    if workers <= 1 or len(jobs) <= 1:
        trials = [_run_trial(j) for j in jobs]
    else:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs)), mp_context=ctx) as pool:
            trials = list(pool.map(_run_trial, jobs))
    trials.sort(key=lambda t: t.index)
    best = select_best(trials, spec.goal.direction)
    return trials, trial_config(base, best.assignment, best.seed)


def write_results(directory: str | os.PathLike, trials: Sequence[TrialResult], best: PipelineConfig, spec: HyperoptSpec) -> None:
    """``trials.jsonl`` (one record per trial), ``best_config.cfg.json`` and ``summary.json``."""
    root = Path(directory)
    best_trial = select_best(trials, spec.goal.direction)
    summary = {
        "trial_count": len(trials),
        "ok_count": sum(t.status == "ok" for t in trials),
        "best_index": best_trial.index,
        "best_goal": best_trial.goal,
        "goal": spec.goal.to_dict(),
        "strategy": spec.strategy,
    }
    try:
        root.mkdir(parents=True, exist_ok=True)
        with open(root / "trials.jsonl", "w", encoding="utf-8", newline="\n") as fh:
            for t in trials:
                fh.write(json.dumps(t.to_dict(), sort_keys=True) + "\n")
        (root / "best_config.cfg.json").write_text(canonical_render(best), encoding="utf-8")
        (root / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ArtifactIOError(str(root), exc.strerror or str(exc)) from None
