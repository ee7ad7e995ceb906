"""Alternating full-batch training with RMSProp, early stopping and a
validation-driven regularization sweep.

Each epoch walks the model's phases in order (for NNMF: network weights
first, then latent features), applying one or more full-batch RMSProp
steps per phase while every other block stays untouched.  After each
epoch, the train objective and validation RMSE are recorded; training
keeps the parameters from the best-validation epoch, not the last one.
"""

from __future__ import annotations

import concurrent.futures
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .data import DataSplit
from .errors import NumericalError, SweepError, TrainingDivergedError


@dataclass(frozen=True)
class RmspropConfig:
    learning_rate: float = 0.001
    rho: float = 0.9
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must be in (0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass
class RmspropState:
    """Per-parameter mean-square accumulators for one parameter group."""

    mean_square: list
    config: RmspropConfig

    @classmethod
    def zeros_like(cls, params, config: RmspropConfig):
        return cls([np.zeros_like(p) for p in params], config)


def rmsprop_step(params, grads, st: RmspropState):
    """In-place update: s <- rho*s + (1-rho)*g^2;  p <- p - eta*g/sqrt(s+eps)."""
    rho = st.config.rho
    eta = st.config.learning_rate
    eps = st.config.epsilon
    for p, g, s in zip(params, grads, st.mean_square):
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient passed to rmsprop_step")
        s *= rho
        s += (1.0 - rho) * g * g
        p -= eta * g / np.sqrt(s + eps)
    return params, st


def sgd_step(params, grads, lr):
    """Plain fixed-step gradient descent (diagnostics and tests)."""
    for p, g in zip(params, grads):
        p -= lr * g
    return params


@dataclass(frozen=True)
class TrainSchedule:
    """Alternation and stopping policy."""

    network_steps: int = 1
    feature_steps: int = 1
    max_epochs: int = 5000
    patience: int = 50
    min_delta: float = 1e-5

    def __post_init__(self):
        if self.network_steps < 1 or self.feature_steps < 1:
            raise ValueError("steps per phase must be >= 1")
        if self.max_epochs < 1 or self.patience < 1:
            raise ValueError("max_epochs and patience must be positive")
        if self.min_delta < 0:
            raise ValueError("min_delta must be >= 0")

    def steps_for(self, phase):
        return self.network_steps if phase == "network" else self.feature_steps


@dataclass(frozen=True)
class LambdaGrid:
    """Candidate regularization strengths, strictly increasing, all >= 0."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if not vals:
            raise ValueError("lambda grid must be non-empty")
        if any(v < 0 for v in vals):
            raise ValueError("lambda values must be >= 0")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("lambda grid must be strictly increasing")

    def __iter__(self):
        return iter(self.values)


@dataclass
class TrainingTrace:
    """Per-epoch log of a single training run."""

    phases: tuple
    epochs: list = field(default_factory=list)
    objectives: dict = field(default_factory=dict)  # phase -> list of floats
    train_rmse: list = field(default_factory=list)
    val_rmse: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_rmse: float = math.inf

    def __post_init__(self):
        for phase in self.phases:
            self.objectives.setdefault(phase, [])

    def record(self, epoch, phase_objs, train_err, val_err):
        self.epochs.append(epoch)
        for phase in self.phases:
            self.objectives[phase].append(phase_objs[phase])
        self.train_rmse.append(train_err)
        self.val_rmse.append(val_err)

    def header(self):
        return (
            ["epoch"]
            + [f"{phase}_objective" for phase in self.phases]
            + ["train_rmse", "validation_rmse"]
        )

    def to_rows(self):
        for i, epoch in enumerate(self.epochs):
            yield (
                [epoch]
                + [repr(self.objectives[phase][i]) for phase in self.phases]
                + [repr(self.train_rmse[i]), repr(self.val_rmse[i])]
            )

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.header())
            for row in self.to_rows():
                writer.writerow(row)


def _rmse(preds, targets):
    err = preds - targets
    return math.sqrt(float(err @ err) / len(targets))


def train(model, split: DataSplit, lam, schedule: TrainSchedule = None,
          opt: RmspropConfig = None, seed: int = 0):
    """Fit ``model`` on ``split.train``; early-stop on ``split.validation``.

    Returns (best_model, trace) where best_model carries the parameters of
    the epoch with the lowest validation RMSE.  Deterministic given the
    inputs; ``seed`` is recorded for provenance but the loop itself draws
    no randomness (full-batch, no dropout).

    Raises TrainingDivergedError when the objective or a gradient stops
    being finite, carrying the last finite epoch and the partial trace.
    """
    schedule = schedule or TrainSchedule()
    opt = opt or RmspropConfig()
    opt_states = {
        phase: RmspropState.zeros_like(model.param_blocks(phase), opt)
        for phase in model.phases
    }
    trace = TrainingTrace(phases=tuple(model.phases))
    best_model = None
    best_val = math.inf
    patience_ref = math.inf
    since_improve = 0

    for epoch in range(schedule.max_epochs):
        phase_objs = {}
        try:
            for phase in model.phases:
                for _ in range(schedule.steps_for(phase)):
                    value, grads = model.gradient(split.train, lam)
                    if not math.isfinite(value):
                        raise NumericalError("objective is not finite")
                    rmsprop_step(model.param_blocks(phase), grads[phase], opt_states[phase])
                phase_objs[phase] = value
            train_err = _rmse(
                model.predict_batch(split.train.rows, split.train.cols),
                split.train.values,
            )
            val_err = _rmse(
                model.predict_batch(split.validation.rows, split.validation.cols),
                split.validation.values,
            )
            if not (math.isfinite(train_err) and math.isfinite(val_err)):
                raise NumericalError("evaluation RMSE is not finite")
        except NumericalError as exc:
            raise TrainingDivergedError(epoch - 1, trace) from exc

        trace.record(epoch, phase_objs, train_err, val_err)
        if val_err < best_val:
            best_val = val_err
            best_model = model.clone()
            trace.best_epoch = epoch
            trace.best_val_rmse = val_err
        if val_err < patience_ref - schedule.min_delta:
            patience_ref = val_err
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= schedule.patience:
                break
    return best_model, trace


@dataclass
class SweepRow:
    lam: float
    val_rmse: float
    best_epoch: int
    epochs_run: int
    error: str = ""


def _sweep_one(model, split, lam, schedule, opt, seed):
    try:
        best_model, trace = train(model, split, lam, schedule, opt, seed)
    except TrainingDivergedError as exc:
        return None, SweepRow(lam, math.nan, -1, exc.last_finite_epoch + 1, str(exc))
    row = SweepRow(lam, trace.best_val_rmse, trace.best_epoch, len(trace.epochs))
    return best_model, row


def select_lambda(model, split: DataSplit, grid: LambdaGrid,
                  schedule: TrainSchedule = None, opt: RmspropConfig = None,
                  seed: int = 0, jobs: int = 1):
    """Train one model per grid value from identical initial parameters.

    Returns (best_lambda, best_model, rows).  The winner is the lambda
    whose best-epoch validation RMSE is lowest; exact ties go to the
    larger lambda.  With ``jobs > 1`` grid points run in parallel
    processes; results are identical either way because every run starts
    from its own copy of the initial parameters.
    """
    if isinstance(grid, (list, tuple)):
        grid = LambdaGrid(tuple(grid))
    lams = list(grid)
    if jobs > 1 and len(lams) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(
                pool.map(
                    _sweep_one,
                    [model.clone() for _ in lams],
                    [split] * len(lams),
                    lams,
                    [schedule] * len(lams),
                    [opt] * len(lams),
                    [seed] * len(lams),
                )
            )
    else:
        results = [_sweep_one(model.clone(), split, lam, schedule, opt, seed)
                   for lam in lams]

    rows = [row for _, row in results]
    best_model = None
    best_lam = None
    best_val = math.inf
    for trained, row in results:
        if trained is None:
            continue
        if row.val_rmse <= best_val:
            best_val = row.val_rmse
            best_model = trained
            best_lam = row.lam
    if best_model is None:
        raise SweepError([(row.lam, row.error) for row in rows])
    return best_lam, best_model, rows
