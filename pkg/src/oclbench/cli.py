"""Command-line entry point.

Exit status: 0 on success, 1 when a run violates a runtime contract
(bad data, numeric breakdown, ...), 2 for configuration errors.
"""

import argparse
import os
import sys

from .config import ExperimentConfig, load_config
from .datasets import Dataset, export_dataset
from .errors import ConfigError, OclError
from .experiment import bench_experiment, build_cache, grid_summary, load_dataset, run_experiment, run_grid
from .report import compare_table, write_bench_outputs, write_grid_outputs, write_run_outputs


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get("OCLBENCH_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"OCLBENCH_THREADS must be an integer, got {env!r}") from None
    return None


def _load(args):
    path = args.config or args.config_path
    if not path:
        raise ConfigError("no config given; pass --config <path>")
    cfg = load_config(path)
    if args.timing:
        cfg.timing = True
    return cfg.with_overrides(out=args.out, seed=args.seed, orderings=args.orderings, threads=_threads(args))


def cmd_run(args):
    cfg = _load(args)
    if len(cfg.train_augs) != 1 or len(cfg.test_augs) != 1:
        raise ConfigError("run takes a single train and test augmentation; use grid for lists")
    results = run_experiment(cfg)
    paths = write_run_outputs(cfg.out, results, timing=cfg.timing, clamp_forgetting=cfg.clamp_forgetting)
    for res in results:
        print(f"{res.name}: acc {res.report.mean['acc']:.2f} over {len(res.report.runs)} orderings")
    print(f"wrote {', '.join(sorted(os.path.basename(p) for p in paths.values()))} to {cfg.out}")
    return 0


def cmd_grid(args):
    cfg = _load(args)
    cells = run_grid(cfg)
    names = [m[0] for m in cfg.methods]
    baseline = cfg.baseline or names[0]
    summary = grid_summary(cells, names, cfg.train_augs, baseline)
    write_grid_outputs(cfg.out, cells, summary, baseline)
    for row in summary:
        if row.train_aug == "mean":
            shown = "NA" if row.avg_od is None else f"{row.avg_od:.2f}"
            print(f"{row.method}: Avg-OD {shown}")
    print(f"wrote grid.csv, grid_summary.csv, grid.md to {cfg.out}")
    return 0


def cmd_bench(args):
    cfg = _load(args)
    rows = bench_experiment(cfg)
    write_bench_outputs(cfg.out, rows)
    for r in rows:
        delta = "" if r.fps_delta_pct is None else f" ({r.fps_delta_pct:+.2f}%)"
        print(f"{r.method}: TTime {r.ttime_min:.4f} min, FPS {r.fps:.1f}{delta}")
    return 0


def cmd_compare(args):
    files = list(args.files)
    if len(files) < 2:
        raise ConfigError("compare needs at least two metrics.csv files")
    text = compare_table(files, method=args.method, baseline=args.baseline)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "compare.md"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_gen(args):
    cfg = _load(args) if (args.config or args.config_path) else ExperimentConfig()
    if args.seed is not None:
        cfg.dataset_seed = args.seed
    out = args.out or os.path.join(cfg.out, "dataset")
    dataset = load_dataset(cfg)
    if dataset.kind == "images" and not args.raw and cfg.backbone == "toy":
        cache = build_cache(cfg, dataset)
        dataset = Dataset(cache.get("train"), dataset.train_y, cache.get("test"), dataset.test_y, kind="fmaps")
    path = export_dataset(dataset, out)
    print(f"wrote {len(dataset.train_y) + len(dataset.test_y)} records and {path}")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config file (key = value lines)")
    common.add_argument("--out", help="output directory (overrides run.out)")
    common.add_argument("--seed", type=int, help="base seed (overrides run.seed)")
    common.add_argument("--orderings", type=int, help="number of class orderings (overrides run.orderings)")
    common.add_argument("--threads", type=int, help="worker threads; falls back to $OCLBENCH_THREADS")
    common.add_argument("--timing", action="store_true", help="write measured timings instead of NA")

    parser = argparse.ArgumentParser(prog="oclbench", description="Online continual learning benchmark harness.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, helptext in (
        ("run", cmd_run, "train and evaluate every configured method"),
        ("grid", cmd_grid, "train x test augmentation grid with Avg-OD and RARG"),
        ("bench", cmd_bench, "training time and FPS, moment vs avg pooling"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("config_path", nargs="?", help="config file (same as --config)")
        p.set_defaults(func=func)
    p = sub.add_parser("gen", parents=[common], help="export a dataset as OCLT records plus manifest.csv")
    p.add_argument("config_path", nargs="?", help="config file (same as --config)")
    p.add_argument("--raw", action="store_true", help="export images instead of backbone feature maps")
    p.set_defaults(func=cmd_gen)
    p = sub.add_parser("compare", parents=[common], help="accuracy table across metrics.csv files")
    p.add_argument("files", nargs="*", help="metrics.csv files; config label = parent directory name")
    p.add_argument("--baseline", help="baseline method for the RARG row")
    p.add_argument("--method", help="method compared against the baseline")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"oclbench: config error: {exc}", file=sys.stderr)
        return 2
    except OclError as exc:
        print(f"oclbench: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
