"""Discrete hyperparameter sweep with successive-halving scheduling.

Trials are independent tasks; the scheduler tolerates out-of-order
completion and merges results in enumeration order, so worker count
never changes the report.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NumericalFailure
from .tt_core import TTRanks, TTShape, param_count

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchSpace:
    shapes: tuple[tuple[int, ...], ...]
    ranks: tuple[int, ...]
    alphas: tuple[float, ...]
    learning_rates: tuple[float, ...]

    def __post_init__(self):
        if not (self.shapes and self.ranks and self.alphas and self.learning_rates):
            raise ContractViolation("search space lists must be nonempty")


@dataclass(frozen=True)
class TrialConfig:
    trial_id: int
    shape: tuple[int, ...]
    rank: int
    alpha: float
    lr: float
    seed: int


@dataclass
class TrialResult:
    config: TrialConfig
    trainable_params: int
    compression_ratio: float
    best_val_loss: float
    val_metric: float
    epochs_run: int
    status: str  # completed | pruned | failed


@dataclass
class SweepReport:
    trials: list[TrialResult]
    best: TrialResult | None
    pareto: list[TrialResult] = field(default_factory=list)


def enumerate_trials(
    space: SearchSpace,
    target_mn: tuple[int, int],
    base_seed: int = 0,
    subsample: int | None = None,
) -> list[TrialConfig]:
    """Cartesian product in deterministic order, invalid shapes excluded.

    A shape is valid when its mode product equals m*n. Ranks above the
    exactness bound are allowed here and clamped at construction time. An
    optional seeded subsample emulates budgeted search over large
    products.
    """
    m, n = target_mn
    valid_shapes = []
    for dims in space.shapes:
        shape = TTShape(tuple(dims))
        if shape.size != m * n:
            log.warning("shape %s excluded: product %d != %d*%d", dims, shape.size, m, n)
            continue
        valid_shapes.append(shape.dims)
    configs = []
    tid = 0
    for dims in valid_shapes:
        for rank in space.ranks:
            for alpha in space.alphas:
                for lr in space.learning_rates:
                    configs.append(TrialConfig(tid, dims, rank, alpha, lr,
                                               seed=base_seed + tid))
                    tid += 1
    if not configs:
        raise ContractViolation("empty trial product after validation")
    if subsample is not None and subsample < len(configs):
        rng = np.random.default_rng(base_seed)
        keep = sorted(rng.choice(len(configs), size=subsample, replace=False))
        configs = [configs[i] for i in keep]
    return configs


def adapter_params_for(config: TrialConfig, n_wrapped: int = 2) -> int:
    shape = TTShape(config.shape)
    ranks = TTRanks.uniform(shape, config.rank)
    return n_wrapped * param_count(shape, ranks)


def successive_halving(
    trials: list[TrialConfig],
    budget_schedule: list[int],
    keep_fraction: float,
    objective,
    target_mn: tuple[int, int],
    n_wrapped: int = 2,
    workers: int = 1,
) -> SweepReport:
    """Run all trials at the first budget, keep the best keep_fraction by
    validation loss, extend survivors to the next budget, repeat.

    objective(config, total_budget, state) -> (val_loss, val_metric,
    epochs_run, state); state carries resumable trainer progress between
    rounds. Failed (non-finite) trials score +inf and are never retried.
    """
    if not trials:
        raise ContractViolation("no trials to run")
    if not budget_schedule or any(b <= a for a, b in zip(budget_schedule, budget_schedule[1:])):
        raise ContractViolation("budget_schedule must be strictly increasing")
    if not 0 < keep_fraction < 1:
        raise ContractViolation("keep_fraction must be in (0, 1)")

    m, n = target_mn
    dense = n_wrapped * m * n
    results: dict[int, TrialResult] = {}
    states: dict[int, object] = {}
    for cfg in trials:
        params = adapter_params_for(cfg, n_wrapped)
        results[cfg.trial_id] = TrialResult(
            config=cfg,
            trainable_params=params,
            compression_ratio=dense / params,
            best_val_loss=float("inf"),
            val_metric=float("-inf"),
            epochs_run=0,
            status="pruned",
        )

    active = list(trials)
    for round_idx, budget in enumerate(budget_schedule):
        def run_one(cfg: TrialConfig):
            try:
                return objective(cfg, budget, states.get(cfg.trial_id))
            except (NumericalFailure, ContractViolation) as exc:
                log.warning("trial %d failed: %s", cfg.trial_id, exc)
                return (float("inf"), float("-inf"), results[cfg.trial_id].epochs_run, None)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outs = list(pool.map(run_one, active))
        else:
            outs = [run_one(cfg) for cfg in active]

        failed = set()
        for cfg, (val_loss, metric, epochs, state) in zip(active, outs):
            r = results[cfg.trial_id]
            r.best_val_loss = val_loss
            r.val_metric = metric
            r.epochs_run = epochs
            states[cfg.trial_id] = state
            if not math.isfinite(val_loss):
                r.status = "failed"
                failed.add(cfg.trial_id)
        active = [c for c in active if c.trial_id not in failed]
        if not active:
            break
        if round_idx < len(budget_schedule) - 1:
            ordered = sorted(active, key=lambda c: (results[c.trial_id].best_val_loss,
                                                    c.trial_id))
            keep = max(1, int(len(active) * keep_fraction))
            survivors = {c.trial_id for c in ordered[:keep]}
            active = [c for c in active if c.trial_id in survivors]
        else:
            for c in active:
                results[c.trial_id].status = "completed"

    ordered_results = [results[c.trial_id] for c in trials]
    finished = [r for r in ordered_results if r.status == "completed"]
    best = min(finished, key=lambda r: r.best_val_loss) if finished else None
    report = SweepReport(trials=ordered_results, best=best)
    scored = [r for r in ordered_results if math.isfinite(r.val_metric)]
    report.pareto = pareto_frontier(scored) if scored else []
    return report


def pareto_frontier(results: list[TrialResult]) -> list[TrialResult]:
    """Maximal set under (fewer trainable params, higher metric); ties kept."""
    if not results:
        raise ContractViolation("no results for frontier")

    def dominated(a: TrialResult, b: TrialResult) -> bool:
        return (b.trainable_params <= a.trainable_params
                and b.val_metric >= a.val_metric
                and (b.trainable_params < a.trainable_params
                     or b.val_metric > a.val_metric))

    return [a for a in results if not any(dominated(a, b) for b in results)]


_CSV_COLS = ["trial_id", "shape", "rank", "alpha", "lr", "trainable_params",
             "compression_ratio", "best_val_loss", "val_metric", "epochs_run",
             "status", "seed"]


def _row(r: TrialResult) -> dict:
    return {
        "trial_id": r.config.trial_id,
        "shape": "x".join(str(k) for k in r.config.shape),
        "rank": r.config.rank,
        "alpha": r.config.alpha,
        "lr": r.config.lr,
        "trainable_params": r.trainable_params,
        "compression_ratio": f"{r.compression_ratio:.6g}",
        "best_val_loss": f"{r.best_val_loss:.10g}",
        "val_metric": f"{r.val_metric:.10g}",
        "epochs_run": r.epochs_run,
        "status": r.status,
        "seed": r.config.seed,
    }


def write_sweep_csv(report: SweepReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=_CSV_COLS)
        w.writeheader()
        for r in report.trials:
            w.writerow(_row(r))


def write_pareto_csv(report: SweepReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=_CSV_COLS)
        w.writeheader()
        for r in report.pareto:
            w.writerow(_row(r))
