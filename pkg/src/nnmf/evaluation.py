"""RMSE and the repeated-split experimental protocol.

``run_experiment`` carves the dataset into n_repeats train/validation/test
splits, selects the regularization strength on validation independently
for each repeat (re-running the full grid), evaluates the best-validation
model on the held-out test triples and averages the scores.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .data import ObservationSet, make_splits, mix_seed
from .errors import NnmfError, SweepError, TrainingDivergedError
from .optimizer import select_lambda


def rmse(predictions, targets) -> float:
    """Root mean squared error between two equal-length sequences."""
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape or predictions.ndim != 1:
        raise ValueError("predictions and targets must be equal-length vectors")
    if predictions.size == 0:
        raise ValueError("rmse of empty lists is undefined")
    err = predictions - targets
    return math.sqrt(float(err @ err) / err.size)


def clamp_predictions(preds, value_range):
    lo, hi = value_range
    return np.clip(preds, lo, hi)


@dataclass
class RepeatResult:
    repeat: int
    test_rmse: float = math.nan
    selected_lambda: float = math.nan
    stopping_epoch: int = -1
    epochs_run: int = 0
    wall_clock_s: float = 0.0
    error: str = ""

    @property
    def failed(self):
        return bool(self.error)


@dataclass
class ExperimentReport:
    """Aggregated outcome of the repeated-split protocol for one model kind."""

    model_kind: str
    repeats: list = field(default_factory=list)
    config_text: str = ""
    clamp: bool = False

    def _scores(self):
        return [r.test_rmse for r in self.repeats if not r.failed]

    @property
    def mean_test_rmse(self) -> float:
        scores = self._scores()
        return sum(scores) / len(scores) if scores else math.nan

    @property
    def std_test_rmse(self) -> float:
        scores = self._scores()
        if len(scores) < 2:
            return 0.0 if scores else math.nan
        m = self.mean_test_rmse
        return math.sqrt(sum((s - m) ** 2 for s in scores) / (len(scores) - 1))

    def write_csv(self, path, include_timing=True):
        header = ["repeat", "test_rmse", "selected_lambda", "stopping_epoch",
                  "epochs_run"]
        if include_timing:
            header.append("wall_clock_s")
        header.append("error")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for r in self.repeats:
                row = [r.repeat, repr(r.test_rmse), repr(r.selected_lambda),
                       r.stopping_epoch, r.epochs_run]
                if include_timing:
                    row.append(f"{r.wall_clock_s:.3f}")
                row.append(r.error)
                writer.writerow(row)
            summary = ["mean", repr(self.mean_test_rmse), "", "", ""]
            if include_timing:
                summary.append("")
            summary.append("")
            writer.writerow(summary)

    def format_table(self) -> str:
        lines = [
            f"model: {self.model_kind}   clamp: {'on' if self.clamp else 'off'}",
            f"{'repeat':>6}  {'test RMSE':>10}  {'lambda':>8}  {'stop epoch':>10}  status",
        ]
        for r in self.repeats:
            status = r.error if r.failed else "ok"
            lines.append(
                f"{r.repeat:>6}  {r.test_rmse:>10.4f}  {r.selected_lambda:>8g}  "
                f"{r.stopping_epoch:>10}  {status}"
            )
        lines.append(
            f"  mean  {self.mean_test_rmse:>10.4f}  (std {self.std_test_rmse:.4f}, "
            f"{len(self._scores())}/{len(self.repeats)} repeats ok)"
        )
        return "\n".join(lines)


def _check_disjoint(split, repeat):
    test_pairs = split.test.pair_set()
    if test_pairs & split.train.pair_set() or test_pairs & split.validation.pair_set():
        raise NnmfError(f"repeat {repeat}: test triples leak into training data")


def run_experiment(data: ObservationSet, cfg: RunConfig,
                   progress=None) -> ExperimentReport:
    """Run the full protocol for the configured model kind.

    Per-repeat failures (divergence of every grid point) are recorded with
    failure markers instead of aborting the whole experiment.  ``progress``
    is an optional callable fed one line per repeat.
    """
    report = ExperimentReport(
        model_kind=cfg.model_kind, config_text=cfg.dumps(), clamp=cfg.clamp
    )
    splits = make_splits(data, cfg.split_spec())
    for r, split in enumerate(splits):
        _check_disjoint(split, r)
        result = RepeatResult(repeat=r)
        started = time.perf_counter()
        try:
            model = cfg.build_model(
                data.n_rows, data.n_cols,
                seed=mix_seed(cfg.train_seed, r),
                train_values=split.train.values,
            )
            best_lam, best_model, rows = select_lambda(
                model, split, cfg.grid(), cfg.schedule(), cfg.opt(),
                seed=cfg.train_seed, jobs=cfg.jobs,
            )
            preds = best_model.predict_batch(split.test.rows, split.test.cols)
            if cfg.clamp:
                preds = clamp_predictions(preds, split.train.value_range())
            result.test_rmse = rmse(preds, split.test.values)
            result.selected_lambda = best_lam
            best_row = next(row for row in rows if row.lam == best_lam)
            result.stopping_epoch = best_row.best_epoch
            result.epochs_run = best_row.epochs_run
        except (SweepError, TrainingDivergedError) as exc:
            result.error = str(exc)
        result.wall_clock_s = time.perf_counter() - started
        report.repeats.append(result)
        if progress is not None:
            status = result.error or f"test RMSE {result.test_rmse:.4f}"
            progress(f"repeat {r}: {status}")
    return report
