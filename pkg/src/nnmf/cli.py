"""Command-line entry point: reproducible runs driven by a config file.

Commands: ingest, split, train, sweep, evaluate, report.  Every command
reads one config file, writes only inside the run's output directory,
archives the canonical config snapshot and code version next to its
outputs, and exits nonzero with a one-line diagnostic on failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from . import __version__
from .checkpoint import load_model, save_model
from .config import RunConfig
from .data import (
    load_dataset,
    make_splits,
    mix_seed,
    split_index_arrays,
    write_canonical,
)
from .errors import ConfigError, NnmfError
from .evaluation import clamp_predictions, rmse, run_experiment
from .optimizer import select_lambda, train


def _out_dir(cfg: RunConfig) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg.out_dir


def _archive_run(cfg: RunConfig):
    out = _out_dir(cfg)
    with open(os.path.join(out, "config_snapshot.cfg"), "w", encoding="utf-8") as fh:
        fh.write(cfg.dumps())
    with open(os.path.join(out, "run_info.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"nnmf {__version__}\n")
    return out


def _snapshot_text(cfg: RunConfig) -> str:
    return f"# nnmf {__version__}\n" + cfg.dumps()


def _load_data(cfg: RunConfig):
    cfg.require_data()
    return load_dataset(cfg.data_path, cfg.data_format, cfg.square)


def _one_split(cfg: RunConfig, data, repeat: int):
    spec = cfg.split_spec()
    if not 0 <= repeat < spec.n_repeats:
        raise ConfigError(f"--repeat {repeat} outside [0, {spec.n_repeats})")
    return make_splits(data, spec)[repeat]


def cmd_ingest(cfg: RunConfig, args) -> int:
    data = _load_data(cfg)
    out = _archive_run(cfg)
    dest = os.path.join(out, "dataset.tsv")
    write_canonical(data, dest)
    print(f"wrote {dest}: N={data.n_rows} M={data.n_cols} triples={len(data)}")
    return 0


def cmd_split(cfg: RunConfig, args) -> int:
    data = _load_data(cfg)
    out = _archive_run(cfg)
    names = ("train", "validation", "test")
    for r, parts in enumerate(split_index_arrays(data, cfg.split_spec())):
        dest = os.path.join(out, f"split_r{r}.csv")
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["triple_index", "partition"])
            for name, idx in zip(names, parts):
                for i in idx.tolist():
                    writer.writerow([i, name])
        print(f"wrote {dest}")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    lam = args.lam if args.lam is not None else cfg.fixed_lambda
    if lam is None:
        raise ConfigError(
            "missing config key [train] lambda (or pass --lambda); "
            "use the sweep command to select one on validation"
        )
    data = _load_data(cfg)
    split = _one_split(cfg, data, args.repeat)
    out = _archive_run(cfg)
    model = cfg.build_model(
        data.n_rows, data.n_cols,
        seed=mix_seed(cfg.train_seed, args.repeat),
        train_values=split.train.values,
    )
    best_model, trace = train(model, split, lam, cfg.schedule(), cfg.opt(),
                              seed=cfg.train_seed)
    ckpt = os.path.join(out, f"model_r{args.repeat}.ckpt")
    save_model(best_model, ckpt, config_text=_snapshot_text(cfg))
    trace_path = os.path.join(out, f"trace_r{args.repeat}.csv")
    trace.write_csv(trace_path)
    print(
        f"trained {cfg.model_kind} (lambda={lam:g}): best epoch "
        f"{trace.best_epoch}, validation RMSE {trace.best_val_rmse:.6f}; "
        f"wrote {ckpt} and {trace_path}"
    )
    return 0


def cmd_sweep(cfg: RunConfig, args) -> int:
    data = _load_data(cfg)
    split = _one_split(cfg, data, args.repeat)
    out = _archive_run(cfg)
    model = cfg.build_model(
        data.n_rows, data.n_cols,
        seed=mix_seed(cfg.train_seed, args.repeat),
        train_values=split.train.values,
    )
    best_lam, best_model, rows = select_lambda(
        model, split, cfg.grid(), cfg.schedule(), cfg.opt(),
        seed=cfg.train_seed, jobs=cfg.jobs,
    )
    dest = os.path.join(out, f"sweep_r{args.repeat}.csv")
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "validation_rmse", "best_epoch", "epochs_run",
                         "error"])
        for row in rows:
            writer.writerow([repr(row.lam), repr(row.val_rmse), row.best_epoch,
                             row.epochs_run, row.error])
    ckpt = os.path.join(out, f"best_r{args.repeat}.ckpt")
    save_model(best_model, ckpt, config_text=_snapshot_text(cfg))
    print(f"selected lambda={best_lam:g}; wrote {dest} and {ckpt}")
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    data = _load_data(cfg)
    split = _one_split(cfg, data, args.repeat)
    out = _archive_run(cfg)
    model, _snapshot = load_model(
        args.checkpoint, expect_meta=cfg.expect_meta(data.n_rows, data.n_cols)
    )
    part = getattr(split, args.partition)
    preds = model.predict_batch(part.rows, part.cols)
    if cfg.clamp:
        preds = clamp_predictions(preds, split.train.value_range())
    score = rmse(preds, part.values)
    dest = os.path.join(out, f"eval_{args.partition}_r{args.repeat}.csv")
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["partition", "repeat", "rmse", "n_observations", "clamp"])
        writer.writerow([args.partition, args.repeat, repr(score), len(part),
                         str(cfg.clamp).lower()])
    print(f"{args.partition} RMSE {score:.6f} over {len(part)} observations; wrote {dest}")
    return 0


def cmd_report(cfg: RunConfig, args) -> int:
    data = _load_data(cfg)
    out = _archive_run(cfg)
    report = run_experiment(data, cfg, progress=print)
    csv_path = os.path.join(out, "report.csv")
    report.write_csv(csv_path)
    table = report.format_table()
    txt_path = os.path.join(out, "report.txt")
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    print(table)
    print(f"wrote {csv_path} and {txt_path}")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "split": cmd_split,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nnmf",
        description="Matrix completion experiments: NNMF, PMF, BiasedMF and NTN",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run config file")
    common.add_argument("--seed", type=int, default=None,
                        help="override the split and training seeds")
    common.add_argument("--out", default=None, help="override the output directory")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common],
                   help="read a dataset and write the canonical triple file")
    sub.add_parser("split", parents=[common],
                   help="write per-repeat split index files")

    p_train = sub.add_parser("train", parents=[common],
                             help="train one model on one split")
    p_train.add_argument("--repeat", type=int, default=0)
    p_train.add_argument("--lambda", dest="lam", type=float, default=None,
                         help="regularization strength (overrides the config)")

    p_sweep = sub.add_parser("sweep", parents=[common],
                             help="select lambda on validation over the grid")
    p_sweep.add_argument("--repeat", type=int, default=0)

    p_eval = sub.add_parser("evaluate", parents=[common],
                            help="RMSE of a checkpoint on a named partition")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--repeat", type=int, default=0)
    p_eval.add_argument("--partition", choices=("train", "validation", "test"),
                        default="test")

    sub.add_parser("report", parents=[common],
                   help="full repeated-split experiment with per-repeat sweeps")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.out is not None:
            cfg = cfg.replace(out_dir=args.out)
        return COMMANDS[args.command](cfg, args)
    except NnmfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
