"""Experiment orchestration: round loop, plans, grid search, metrics emission.

A plan resolves to (task bundle, config) deterministically from the master
seed; every client-round draws from its own derived stream, so the round loop
produces identical results whether releases are computed serially or by a
thread pool.  Nothing in this module may import ``fedsofim.oracles`` — the
dense preconditioner must stay unreachable from production runs.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .accountant import calibrate_sigma
from .client import ClientRelease, private_release
from .core import (
    FederatedConfig,
    Optimizer,
    RoundMetrics,
    ServerState,
    derive_noise_stream,
    derive_stream_seed,
    validate_config,
    with_updates,
    HOLDOUT_STREAM_TAG,
    PARTITION_STREAM_TAG,
    TASK_STREAM_TAG,
)
from .server import aggregate, fedgd_step, sofim_step
from .task import (
    FeatureDataset,
    QuadraticTask,
    SoftmaxHeadTask,
    load_frozen_features,
    make_synthetic_quadratic,
    partition_iid,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Task bindings and bundles


@dataclass(frozen=True)
class FeatureTaskBinding:
    """Frozen-feature file task: path(s) plus head hyperparameters.

    Without an explicit test file, a deterministic seeded holdout split is
    carved from the training file (fraction controlled by holdout_fraction).
    """

    train_path: str
    test_path: Optional[str] = None
    l2_lambda: float = 1e-4
    holdout_fraction: float = 0.2


@dataclass(frozen=True)
class QuadraticTaskBinding:
    """Synthetic quadratic task generated from the plan's master seed."""

    d: int
    mu: float
    L: float
    heterogeneity: float = 1.0
    shard_size: int = 10


TaskBinding = Union[FeatureTaskBinding, QuadraticTaskBinding]


@dataclass(frozen=True)
class TaskBundle:
    """A task plus its per-client shards and evaluation data."""

    task: Union[SoftmaxHeadTask, QuadraticTask]
    train: tuple
    test: Optional[FeatureDataset] = None

    @property
    def dim(self) -> int:
        return self.task.dim

    def evaluate(self, theta: np.ndarray) -> tuple:
        """(train_loss, test_accuracy, suboptimality_gap or None) at theta.

        Divergent iterates are reported as (inf, 0.0, inf-or-None) rather
        than raising, so grid search can rank them as worst.
        """
        if not np.all(np.isfinite(theta)):
            gap = math.inf if isinstance(self.task, QuadraticTask) else None
            return math.inf, 0.0, gap
        if isinstance(self.task, QuadraticTask):
            with np.errstate(over="ignore", invalid="ignore"):
                loss = self.task.global_value(theta)
                gap = self.task.gap(theta)
            if not math.isfinite(loss):
                return math.inf, 0.0, math.inf
            return loss, math.exp(-gap), gap
        with np.errstate(over="ignore", invalid="ignore"):
            # The federated objective is the unweighted mean of client means.
            client_losses = [self.task.loss_and_accuracy(theta, ds)[0] for ds in self.train]
            loss = float(np.mean(client_losses))
            _, accuracy = self.task.loss_and_accuracy(theta, self.test)
        if not math.isfinite(loss) or not math.isfinite(accuracy):
            return math.inf, 0.0, None
        return loss, accuracy, None


def build_bundle(binding: TaskBinding, n: int, master_seed: int) -> TaskBundle:
    """Resolve a binding into concrete client shards, deterministically."""
    if isinstance(binding, QuadraticTaskBinding):
        task, shards = make_synthetic_quadratic(
            binding.d,
            n,
            binding.mu,
            binding.L,
            binding.heterogeneity,
            seed=derive_stream_seed(master_seed, TASK_STREAM_TAG, 0),
            shard_size=binding.shard_size,
        )
        return TaskBundle(task=task, train=tuple(shards), test=None)

    train_data, meta = load_frozen_features(binding.train_path)
    if binding.test_path is not None:
        test_data, test_meta = load_frozen_features(binding.test_path)
        if test_meta["feature_dim"] != meta["feature_dim"]:
            raise ValueError("train and test feature dimensions differ")
    else:
        holdout_rng = np.random.default_rng(derive_stream_seed(master_seed, HOLDOUT_STREAM_TAG, 0))
        perm = holdout_rng.permutation(train_data.size)
        cut = max(1, int(round(binding.holdout_fraction * train_data.size)))
        if cut >= train_data.size:
            raise ValueError("holdout fraction leaves no training data")
        test_data = train_data.subset(perm[:cut])
        train_data = train_data.subset(perm[cut:])
    shards = partition_iid(train_data, n, seed=derive_stream_seed(master_seed, PARTITION_STREAM_TAG, 0))
    head = SoftmaxHeadTask(meta["num_classes"], meta["feature_dim"], binding.l2_lambda)
    return TaskBundle(task=head, train=tuple(shards), test=test_data)


# ---------------------------------------------------------------------------
# Plans


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything run_experiment needs, with the privacy mode made explicit.

    Exactly one of three modes holds: a privacy target (epsilon, delta) that
    calibration turns into sigma_g; an explicit sigma_g > 0 in the config; or
    the non-private mode sigma_g = 0.  Setting a target together with a
    nonzero sigma_g is rejected as ambiguous.

    elapsed seconds are recorded only when record_timing is set; by default
    the column is written as 0.0 so two runs of one plan emit byte-identical
    files.
    """

    config: FederatedConfig
    binding: TaskBinding
    epsilon: Optional[float] = None
    delta: Optional[float] = None
    eval_every: int = 10
    output_path: Optional[str] = None
    record_timing: bool = False
    workers: int = 1


def validate_plan(plan: ExperimentPlan) -> ExperimentPlan:
    validate_config(plan.config)
    has_target = plan.epsilon is not None or plan.delta is not None
    if has_target:
        if plan.epsilon is None or plan.delta is None:
            raise ValueError("privacy target requires both epsilon and delta")
        if plan.config.sigma_g != 0:
            raise ValueError("set either a privacy target or an explicit sigma_g, not both")
    if plan.eval_every < 1:
        raise ValueError("eval_every must be >= 1")
    if plan.workers < 1:
        raise ValueError("workers must be >= 1")
    return plan


def resolve_sigma(plan: ExperimentPlan) -> FederatedConfig:
    """Return the plan's config with sigma_g made concrete."""
    validate_plan(plan)
    if plan.epsilon is not None:
        sigma = calibrate_sigma(plan.epsilon, plan.delta, plan.config.n, plan.config.T)
        return with_updates(plan.config, sigma_g=sigma)
    return plan.config


# ---------------------------------------------------------------------------
# Round loop


def run_round(
    bundle: TaskBundle,
    state: ServerState,
    config: FederatedConfig,
    round_index: int,
    evaluate: bool = True,
    workers: int = 1,
    eta: Optional[float] = None,
    elapsed: float = 0.0,
) -> tuple:
    """Execute one full round: n releases, aggregate, optimizer step.

    Deterministic given (config, round_index); the thread pool only
    parallelizes the per-client releases, whose streams are independent by
    construction.  Returns (new_state, RoundMetrics or None).
    """
    if not 0 <= round_index < config.T:
        raise ValueError(f"round {round_index} outside [0, {config.T})")
    step_eta = config.eta if eta is None else eta
    needs_stream = config.sigma_g > 0 or config.batch_size > 0

    def one_release(client_id: int) -> ClientRelease:
        stream = (
            derive_noise_stream(config.master_seed, client_id, round_index) if needs_stream else None
        )
        return private_release(
            bundle.train[client_id],
            state.theta,
            config.clip_cg,
            config.sigma_g,
            config.n,
            stream,
            bundle.task,
            client_id=client_id,
            round_index=round_index,
            batch_size=config.batch_size,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            releases = list(pool.map(one_release, range(config.n)))
    else:
        releases = [one_release(i) for i in range(config.n)]

    g = aggregate(releases, config.n)
    with np.errstate(over="ignore", invalid="ignore"):
        if config.optimizer is Optimizer.SOFIM:
            if eta is None:
                new_state = sofim_step(state, g, config)
            else:
                new_state = sofim_step(state, g, with_updates(config, eta=step_eta))
        else:
            new_state = fedgd_step(state, g, step_eta)

    metrics = None
    if evaluate:
        train_loss, test_accuracy, gap = bundle.evaluate(new_state.theta)
        grad_norm = float(np.linalg.norm(g))
        if not math.isfinite(grad_norm):
            grad_norm = math.inf
        metrics = RoundMetrics(
            round=round_index + 1,
            train_loss=train_loss,
            test_accuracy=test_accuracy,
            aggregate_grad_norm=grad_norm,
            suboptimality_gap=gap,
            elapsed=elapsed,
        )
    return new_state, metrics


@dataclass(frozen=True)
class MetricsTable:
    """Evaluated rows plus a header echoing the fully resolved run settings."""

    rows: tuple
    header: dict

    def final_accuracy(self) -> float:
        if not self.rows:
            raise ValueError("empty metrics table")
        return self.rows[-1].test_accuracy

    def final_loss(self) -> float:
        if not self.rows:
            raise ValueError("empty metrics table")
        return self.rows[-1].train_loss


def run_experiment(
    plan: ExperimentPlan,
    eta_schedule: Optional[Callable[[int], float]] = None,
) -> MetricsTable:
    """Run a full T-round experiment from a validated plan.

    eta_schedule optionally maps round index -> step size (the hook exists
    for experimentation; the default is the constant config.eta, which is
    what the convergence analysis covers).  Metrics are evaluated every
    eval_every rounds and always at the final round.
    """
    config = resolve_sigma(plan)
    bundle = build_bundle(plan.binding, config.n, config.master_seed)
    state = ServerState.initial(np.zeros(bundle.dim))
    rows = []
    start = time.perf_counter()
    for t in range(config.T):
        evaluate = ((t + 1) % plan.eval_every == 0) or (t == config.T - 1)
        elapsed = (time.perf_counter() - start) if plan.record_timing else 0.0
        state, metrics = run_round(
            bundle,
            state,
            config,
            t,
            evaluate=evaluate,
            workers=plan.workers,
            eta=None if eta_schedule is None else eta_schedule(t),
            elapsed=elapsed,
        )
        if metrics is not None:
            if plan.record_timing:
                metrics = replace(metrics, elapsed=time.perf_counter() - start)
            rows.append(metrics)
    header = {
        "optimizer": config.optimizer.value,
        "n": config.n,
        "T": config.T,
        "eta": config.eta,
        "clip_cg": config.clip_cg,
        "sigma_g": config.sigma_g,
        "beta": config.beta,
        "rho": config.rho,
        "master_seed": config.master_seed,
        "batch_size": config.batch_size,
        "eval_every": plan.eval_every,
        "epsilon": plan.epsilon,
        "delta": plan.delta,
    }
    table = MetricsTable(rows=tuple(rows), header=header)
    if plan.output_path is not None:
        emit_metrics(table, plan.output_path)
    return table


# ---------------------------------------------------------------------------
# Metrics files

_COLUMNS = ("round", "train_loss", "test_accuracy", "aggregate_grad_norm", "suboptimality_gap", "elapsed")


def emit_metrics(table, path) -> None:
    """Write metrics as comma-separated text with one fixed-order header row.

    An absent suboptimality gap becomes an empty cell.  Floats are written
    with repr so a round-trip parse reproduces the table exactly.
    """
    rows = table.rows if isinstance(table, MetricsTable) else tuple(table)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(_COLUMNS) + "\n")
        for row in rows:
            gap = "" if row.suboptimality_gap is None else repr(float(row.suboptimality_gap))
            fh.write(
                f"{row.round},{float(row.train_loss)!r},{float(row.test_accuracy)!r},"
                f"{float(row.aggregate_grad_norm)!r},{gap},{float(row.elapsed)!r}\n"
            )


def read_metrics(path) -> tuple:
    """Parse a file written by emit_metrics back into RoundMetrics rows."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != ",".join(_COLUMNS):
        raise ValueError("not a metrics file: bad or missing header row")
    rows = []
    for line in lines[1:]:
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != len(_COLUMNS):
            raise ValueError(f"bad metrics row: {line!r}")
        rows.append(
            RoundMetrics(
                round=int(cells[0]),
                train_loss=float(cells[1]),
                test_accuracy=float(cells[2]),
                aggregate_grad_norm=float(cells[3]),
                suboptimality_gap=None if cells[4] == "" else float(cells[4]),
                elapsed=float(cells[5]),
            )
        )
    return tuple(rows)


# ---------------------------------------------------------------------------
# Grid search


@dataclass(frozen=True)
class GridSpec:
    """Candidate step sizes and clipping radii (plus optional rho/beta sweeps
    for the preconditioned optimizer)."""

    etas: tuple
    clip_cgs: tuple
    rhos: Optional[tuple] = None
    betas: Optional[tuple] = None

    def __post_init__(self):
        if not self.etas or not self.clip_cgs:
            raise ValueError("grid must list at least one eta and one clip_cg")
        if self.rhos is not None and not self.rhos:
            raise ValueError("rho grid, when given, must be nonempty")
        if self.betas is not None and not self.betas:
            raise ValueError("beta grid, when given, must be nonempty")


def grid_search(base_plan: ExperimentPlan, grid: GridSpec, seeds: int = 1) -> tuple:
    """Sweep the grid, averaging final test accuracy over ``seeds`` reruns.

    Seed k shifts the master seed by k, changing noise, partition, and task
    draws together.  Selection is the argmax of mean final accuracy; exact
    ties break toward smaller eta, then smaller clip_cg (then smaller rho and
    beta when those are swept).  Returns (best_config, sweep_rows) where each
    sweep row records the cell and its mean final accuracy/loss.
    """
    validate_plan(base_plan)
    if seeds < 1:
        raise ValueError("seeds must be >= 1")
    rho_grid = grid.rhos if grid.rhos is not None else (base_plan.config.rho,)
    beta_grid = grid.betas if grid.betas is not None else (base_plan.config.beta,)
    sweep = []
    for eta in grid.etas:
        for c_g in grid.clip_cgs:
            for rho in rho_grid:
                for beta in beta_grid:
                    accs, losses = [], []
                    for k in range(seeds):
                        config = with_updates(
                            base_plan.config,
                            eta=eta,
                            clip_cg=c_g,
                            rho=rho,
                            beta=beta,
                            master_seed=base_plan.config.master_seed + k,
                        )
                        plan = replace(base_plan, config=config, output_path=None)
                        table = run_experiment(plan)
                        accs.append(table.final_accuracy())
                        losses.append(table.final_loss())
                    sweep.append(
                        {
                            "eta": eta,
                            "clip_cg": c_g,
                            "rho": rho,
                            "beta": beta,
                            "mean_final_accuracy": float(np.mean(accs)),
                            "mean_final_loss": float(np.mean(losses)),
                        }
                    )
    best = min(sweep, key=lambda r: (-r["mean_final_accuracy"], r["eta"], r["clip_cg"], r["rho"], r["beta"]))
    best_config = with_updates(
        base_plan.config,
        eta=best["eta"],
        clip_cg=best["clip_cg"],
        rho=best["rho"],
        beta=best["beta"],
    )
    return best_config, sweep


# ---------------------------------------------------------------------------
# Diagnostics helpers shared by the verify suites and tests


def clipped_aggregate(bundle: TaskBundle, theta: np.ndarray, c_g: float) -> np.ndarray:
    """Noiseless clipped aggregate at theta (sigma_g = 0 path, no streams)."""
    releases = [
        private_release(ds, theta, c_g, 0.0, len(bundle.train), None, bundle.task, client_id=i)
        for i, ds in enumerate(bundle.train)
    ]
    return aggregate(releases, len(bundle.train))


def global_gradient(bundle: TaskBundle, theta: np.ndarray) -> np.ndarray:
    """Unclipped federated gradient: mean over clients of client-mean gradients."""
    if isinstance(bundle.task, QuadraticTask):
        return bundle.task.global_gradient(theta)
    per_client = [bundle.task.per_example_gradients(theta, ds).mean(axis=0) for ds in bundle.train]
    return np.mean(per_client, axis=0)


def detect_early_instability(sofim_rows: Sequence[RoundMetrics], fedgd_rows: Sequence[RoundMetrics]) -> bool:
    """Observation hook: preconditioned run behind at round 10 but caught up
    by round 30.  Logged when seen; never an acceptance gate (it is
    dataset-dependent)."""

    def acc_at(rows, target):
        eligible = [r for r in rows if r.round >= target]
        return min(eligible, key=lambda r: r.round).test_accuracy if eligible else None

    s10, f10 = acc_at(sofim_rows, 10), acc_at(fedgd_rows, 10)
    s30, f30 = acc_at(sofim_rows, 30), acc_at(fedgd_rows, 30)
    if None in (s10, f10, s30, f30):
        return False
    detected = s10 < f10 and s30 >= f30
    if detected:
        logger.info(
            "early-round instability observed: accuracy %.4f < %.4f at round 10, %.4f >= %.4f by round 30",
            s10, f10, s30, f30,
        )
    return detected
