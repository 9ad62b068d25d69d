"""Command-line entry point.

Subcommands mirror the pipeline stages (ingest, build-views, train,
evaluate, sweep, synth) so intermediate artifacts stay cacheable. Exit
codes: 0 success, 2 usage error, 3 data error, 4 numeric divergence.
"""

from __future__ import annotations

import argparse
import sys

from .config import RunConfig
from .errors import DataError, TrainingDivergedError
from .evaluation import SWEEP_AXES
from .pipeline import run_build_views, run_evaluate, run_ingest, run_sweep, run_train
from .synth import SyntheticSpec, generate, write_files

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


def _add_config_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="path to the run config JSON")
    parser.add_argument("--workers", type=int, default=None, help="parallelism degree")


def _add_override_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--cell", choices=("gru", "lstm"), default=None)
    parser.add_argument("--fusion", choices=("attention", "uniform"), default=None)


def _load_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.load(args.config)
    if getattr(args, "workers", None) is not None:
        config.workers = args.workers
    if getattr(args, "seed", None) is not None:
        config.hyper.seed = args.seed
    if getattr(args, "cell", None) is not None:
        config.hyper.cell = args.cell
    if getattr(args, "fusion", None) is not None:
        config.hyper.fusion = args.fusion
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynhin")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="load schema + edges, persist snapshot cache")
    _add_config_arg(p_ingest)

    p_views = sub.add_parser("build-views", help="build and cache meta-path views")
    _add_config_arg(p_views)

    p_train = sub.add_parser("train", help="train a model and write artifacts")
    _add_config_arg(p_train)
    _add_override_args(p_train)
    p_train.add_argument(
        "--resume", default=None, help="checkpoint to restore parameters from"
    )

    p_eval = sub.add_parser("evaluate", help="evaluate a checkpoint")
    _add_config_arg(p_eval)
    _add_override_args(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--dump-attention", action="store_true")
    p_eval.add_argument("--emit-plot-data", action="store_true")
    p_eval.add_argument("--train-fraction", type=float, default=None)

    p_sweep = sub.add_parser("sweep", help="retrain along one axis")
    _add_config_arg(p_sweep)
    _add_override_args(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sweep.add_argument("--values", required=True, help="semicolon-separated values")
    p_sweep.add_argument("--emit-plot-data", action="store_true")

    p_synth = sub.add_parser("synth", help="generate a planted-community dataset")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--users", type=int, default=120)
    p_synth.add_argument("--items", type=int, default=60)
    p_synth.add_argument("--attractors", type=int, default=20)
    p_synth.add_argument("--steps", type=int, default=4)
    p_synth.add_argument("--communities", type=int, default=2)
    p_synth.add_argument("--drift", type=float, default=0.1)
    p_synth.add_argument("--p-within", type=float, default=0.3)
    p_synth.add_argument("--p-across", type=float, default=0.02)
    p_synth.add_argument("--p-noise", type=float, default=0.08)
    p_synth.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_ingest(args) -> int:
    config = _load_config(args)
    cache_path, stats_path = run_ingest(config)
    print(f"snapshot cache: {cache_path}")
    print(f"stats: {stats_path}")
    with open(stats_path, "r", encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    return EXIT_OK


def _cmd_build_views(args) -> int:
    config = _load_config(args)
    cache_path = run_build_views(config)
    print(f"view cache: {cache_path}")
    return EXIT_OK


def _cmd_train(args) -> int:
    config = _load_config(args)
    result = run_train(config, resume_from=args.resume)
    if result.trace:
        print(f"trained {config.hyper.epochs} epochs; final L_all={result.trace[-1].combined:.6g}")
    else:
        print("trained 0 epochs; checkpoint holds the initialization")
    if result.val_metric_name and result.best_metric is not None:
        print(
            f"best {result.val_metric_name}={result.best_metric:.4f} "
            f"at epoch {result.best_epoch}"
        )
    print(f"artifacts in {config.output_dir}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    config = _load_config(args)
    if args.train_fraction is not None:
        config.train_fraction = args.train_fraction
    report = run_evaluate(
        config,
        args.checkpoint,
        want_attention_dump=args.dump_attention,
        want_plot_data=args.emit_plot_data,
    )
    for row in report.rows():
        print(row)
    return EXIT_OK


def _parse_sweep_values(raw: str) -> list[str]:
    values = [v.strip() for v in raw.split(";") if v.strip()]
    if not values:
        raise DataError("no sweep values given")
    return values


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    values = _parse_sweep_values(args.values)
    rows = run_sweep(config, args.axis, values, want_plot_data=args.emit_plot_data)
    for row in rows:
        print(row)
    return EXIT_OK


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n_users=args.users,
        n_items=args.items,
        n_attractors=args.attractors,
        n_steps=args.steps,
        n_communities=args.communities,
        drift=args.drift,
        p_within=args.p_within,
        p_across=args.p_across,
        p_noise=args.p_noise,
        seed=args.seed,
    )
    data = generate(spec)
    paths = write_files(data, args.out)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


_COMMANDS = {
    "ingest": _cmd_ingest,
    "build-views": _cmd_build_views,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
