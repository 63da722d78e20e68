"""Command line entry point: ``measurenet <command> [options]``."""

import argparse
import dataclasses
import logging
import sys

from . import harness
from .data import ResultRow, write_results, parse_config
from .exceptions import ConfigError, IdxFormatError, ResultsFormatError, UsageError
from .model import save_checkpoint
from .optim import write_history

log = logging.getLogger("measurenet")


def _common(p):
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.add_argument("--seed", type=int, default=0, help="base seed (unsigned 64-bit)")
    p.add_argument("--desk", action="store_true", help="desk-scale defaults")
    p.add_argument("--jobs", type=int, help="parallel cells (overrides n_jobs)")
    p.add_argument("-v", "--verbose", action="store_true")


def _mnist_files(p):
    p.add_argument("--images", help="IDX image file (optionally gzipped)")
    p.add_argument("--labels", help="IDX label file")
    p.add_argument("--test-images")
    p.add_argument("--test-labels")


def build_parser():
    parser = argparse.ArgumentParser(prog="measurenet",
                                     description="Shallow measure networks on sets.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and evaluate a single cell")
    _common(p)
    p.add_argument("--class", dest="function_class", default="S1")
    p.add_argument("--target", default="mean_inv")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--seed-index", type=int, default=0)
    p.add_argument("--save", help="write the trained model checkpoint here")
    p.add_argument("--history", help="write the loss history CSV here")

    p = sub.add_parser("sweep", help="synthetic suite")
    _common(p)
    p.add_argument("--deepsets", action="store_true",
                   help="compare S1 against unnormalized DeepSets instead")

    p = sub.add_parser("robust", help="robust mean estimation suite")
    _common(p)

    p = sub.add_parser("mnist", help="pointcloud MNIST classification")
    _common(p)
    _mnist_files(p)
    p.add_argument("--max-points", type=int)
    p.add_argument("--subset", type=int, help="number of training images")

    p = sub.add_parser("diagnose", help="measure-continuity diagnostics")
    _common(p)

    p = sub.add_parser("replay", help="recompute the rows of one run id")
    _common(p)
    _mnist_files(p)
    p.add_argument("run_id")
    return parser


def _config(args, experiment):
    cfg = harness.experiment_config(experiment, desk=args.desk)
    if args.config:
        cfg = parse_config(args.config, base=cfg)
    if args.jobs is not None:
        cfg = dataclasses.replace(cfg, n_jobs=args.jobs)
    if getattr(args, "max_points", None) is not None:
        cfg = dataclasses.replace(cfg, max_points=args.max_points)
    if getattr(args, "subset", None) is not None:
        cfg = dataclasses.replace(cfg, mnist_subset=args.subset)
    return cfg.validate()


def _mnist_paths(args):
    if not args.images and not args.labels:
        return None
    if not (args.images and args.labels):
        raise UsageError("--images and --labels go together")
    return dict(images_path=args.images, labels_path=args.labels,
                test_images=args.test_images, test_labels=args.test_labels)


def _emit(rows, args):
    if args.out:
        write_results(rows, args.out)
    else:
        write_results(rows, sys.stdout)


def _train(args, cfg):
    target = harness.build_target(args.target, cfg, args.seed)
    cell = harness.Cell("synthetic", args.function_class, target.kind, args.lam, args.seed_index,
                        args.seed)
    seed = harness.cell_seed(args.seed, cell.function_class, cell.target, cell.lam, cell.seed_index)
    from .data import sample_uniform_cube_sets
    from .numerics import derive_rng
    from .targets import eval_targets

    train_b = sample_uniform_cube_sets(cfg.d, cfg.train_n, cfg.batch, cfg.half_width,
                                       rng=derive_rng(args.seed, "train", cell.target, cell.seed_index))
    y = eval_targets(target, train_b)[:, 0]
    model = harness.make_model(cell.function_class, target, cfg, cell.lam, seed).fit(train_b, y)
    rows = [ResultRow(cell.run_id, cell.function_class, cell.target, cell.lam, cfg.train_n,
                      cfg.train_n, cell.seed_index, "train_mse", harness.mse(model.predict(train_b), y))]
    rows += harness.run_synthetic_cell(cell, cfg, target)
    if args.save:
        save_checkpoint(model.net_, args.save)
    if args.history:
        write_history(model.history_, args.history)
    return rows, []


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "diagnose":
            rows = harness.diagnostic_rows(args.seed)
            if args.out:
                with open(args.out, "w", newline="") as fh:
                    harness.write_diagnostics(rows, fh)
            else:
                harness.write_diagnostics(rows, sys.stdout)
            return 0 if all(r[4] for r in rows) else 1
        experiment = {"train": "synthetic", "sweep": "synthetic", "robust": "robust",
                      "mnist": "mnist", "replay": None}[args.command]
        if args.command == "sweep" and args.deepsets:
            experiment = "deepsets_compare"
        if args.command == "replay":
            experiment = harness.Cell.parse(args.run_id).experiment
        cfg = _config(args, experiment)
        cfg.dump(sys.stderr)
        if args.command == "train":
            rows, failures = _train(args, cfg)
        elif args.command == "replay":
            rows, failures = harness.replay(args.run_id, cfg, _mnist_paths(args)), []
        else:
            rows, failures = harness.run_suite(experiment, cfg, args.seed,
                                               mnist_paths=_mnist_paths(args) if experiment == "mnist" else None)
        _emit(rows, args)
        for f in failures:
            print(f"failed: {f}", file=sys.stderr)
        return 1 if failures else 0
    except (UsageError, ConfigError, IdxFormatError, ResultsFormatError, OSError) as exc:
        print(f"measurenet: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
