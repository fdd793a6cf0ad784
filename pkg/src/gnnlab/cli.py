"""Command-line entry point: fetch, train, sweep-epochs, plot, bench.

Exit codes: 0 on success, 1 on runtime failure, 2 on usage/config errors.
"""

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from . import _kernels, bench, diagnostics
from .config import DatasetConfig, ExperimentConfig
from .errors import ConfigError, GnnLabError
from .graphdata import (DEFAULT_TU_URL, Dataset, default_cache_dir, fetch_tu,
                        is_cached, parse_tu)
from .models import MODEL_KINDS, ModelSpec
from .training import TrainConfig, run_cv
from .init import InitScheme


def load_dataset(dc: DatasetConfig) -> Dataset:
    """Resolve a dataset config to parsed graphs (local path or fetch+cache)."""
    if dc.path:
        root = Path(dc.path)
        candidates = [root, root / dc.name / "raw", root / dc.name, root / "raw"]
        for cand in candidates:
            if (cand / f"{dc.name}_A.txt").is_file():
                return parse_tu(cand, dc.name, feature_policy=dc.feature_policy,
                                degree_cap=dc.degree_cap)
        raise ConfigError(f"no TU files for {dc.name} under {root}")
    raw = fetch_tu(dc.name, url_base=dc.url_base or DEFAULT_TU_URL,
                   cache_dir=dc.cache_dir)
    return parse_tu(raw, dc.name, feature_policy=dc.feature_policy,
                    degree_cap=dc.degree_cap)


def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        # a handful of flags may override the file for quick experiments
        if args.epochs is not None or args.seed is not None:
            train = cfg.train.to_dict()
            if args.epochs is not None:
                train["epochs"] = args.epochs
            if args.seed is not None:
                train["seed"] = args.seed
            cfg = dataclasses.replace(cfg, train=TrainConfig.from_dict(train))
        if args.out is not None:
            cfg = dataclasses.replace(cfg, out_dir=args.out)
        return cfg
    if not args.dataset:
        raise ConfigError("either --config or --dataset is required")
    if not args.model:
        raise ConfigError("--model is required when no config file is given")
    init = InitScheme(kind="standard_then_reinit" if args.reinit else "standard")
    train = TrainConfig(
        lr=args.lr, weight_decay=args.weight_decay,
        epochs=args.epochs if args.epochs is not None else 100,
        batch_size=args.batch_size,
        seed=args.seed if args.seed is not None else 12345, init=init)
    model = ModelSpec(kind=args.model, hidden_dim=args.hidden_dim,
                      jk_agg=args.jk_agg, readout_kind=args.readout)
    dataset = DatasetConfig(name=args.dataset, path=args.data_dir,
                            cache_dir=args.cache_dir,
                            feature_policy=args.feature_policy)
    return ExperimentConfig(dataset=dataset, model=model, train=train,
                            fold_count=args.folds, fold_seed=args.fold_seed,
                            diagnostics=not args.no_diagnostics,
                            out_dir=args.out if args.out is not None else "out")


def _write_report(report, traces, out_dir: Path, diagnostics_on: bool) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    report_path.write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if diagnostics_on:
        for fold, events in enumerate(traces):
            if events is not None:
                diagnostics.write_events_csv(events, out_dir / f"trace_fold{fold}.csv")
    return report_path


def cmd_fetch(args) -> int:
    cache_dir = args.cache_dir or default_cache_dir()
    if is_cached(args.name, cache_dir):
        print(f"cached: {Path(cache_dir) / args.name / 'raw'}")
        return 0
    path = fetch_tu(args.name, url_base=args.url_base, cache_dir=cache_dir)
    print(f"fetched: {path}")
    return 0


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    ds = load_dataset(cfg.dataset)
    report, traces = run_cv(ds, cfg.model, cfg.train, folds=cfg.fold_count,
                            fold_seed=cfg.fold_seed, jobs=args.jobs,
                            trace=cfg.diagnostics)
    out_dir = Path(cfg.out_dir)
    report_path = _write_report(report, traces, out_dir, cfg.diagnostics)
    print(f"{ds.name} {cfg.model.kind}: {report.mean:.2f} +/- {report.std:.2f} "
          f"(over {cfg.fold_count} folds) -> {report_path}")
    return 0


def cmd_sweep_epochs(args) -> int:
    budgets = sorted({int(tok) for tok in args.epochs.split(",") if tok.strip()})
    if not budgets:
        raise ConfigError("--epochs needs a comma-separated list of budgets")
    configs = [(Path(p).stem, ExperimentConfig.load(p)) for p in args.config]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    datasets = {}
    for budget in budgets:
        for variant, cfg in configs:
            key = (cfg.dataset.name, cfg.dataset.path, cfg.dataset.feature_policy)
            if key not in datasets:
                datasets[key] = load_dataset(cfg.dataset)
            ds = datasets[key]
            train = TrainConfig.from_dict({**cfg.train.to_dict(), "epochs": budget})
            report, _ = run_cv(ds, cfg.model, train, folds=cfg.fold_count,
                               fold_seed=cfg.fold_seed, jobs=args.jobs, trace=False)
            rows.append((budget, report.mean, report.std, variant))
            print(f"epochs={budget} {variant}: {report.mean:.2f} +/- {report.std:.2f}")
    csv_path = out_dir / "accuracy_vs_epochs.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("epochs", "mean_acc", "std_acc", "variant"))
        for row in rows:
            writer.writerow((row[0], repr(row[1]), repr(row[2]), row[3]))
    print(f"wrote {csv_path}")
    return 0


def cmd_plot(args) -> int:
    diagnostics.render_svg(args.csv, args.series, args.out, title=args.title)
    print(f"wrote {args.out}")
    return 0


def cmd_bench(args) -> int:
    rows = bench.run_bench(nodes=args.nodes, features=args.features,
                           avg_degree=args.avg_degree, repeats=args.repeats)
    mode = "numba+numpy" if _kernels.USING_NUMBA else "numpy only (numba disabled)"
    print(f"kernel benchmark ({mode}; n={args.nodes}, F={args.features})")
    print(bench.format_rows(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gnnlab",
        description="Graph-classification lab: TU datasets, GCN/top-k/JK models, "
                    "variance re-initialisation, and 10-fold benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", help="download a TU dataset into the cache")
    p.add_argument("name")
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--url-base", default=DEFAULT_TU_URL)
    p.set_defaults(fn=cmd_fetch)

    p = sub.add_parser("train", help="run k-fold cross-validation and write a report")
    p.add_argument("--config", default=None, help="experiment config JSON")
    p.add_argument("--dataset", default=None)
    p.add_argument("--data-dir", default=None, help="local dir with raw TU files")
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--model", choices=MODEL_KINDS, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--reinit", action="store_true")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--fold-seed", type=int, default=12345)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--hidden-dim", type=int, default=128)
    p.add_argument("--jk-agg", choices=("concat", "sum"), default="concat")
    p.add_argument("--readout", choices=("mean", "sum", "max", "max_and_sum"),
                   default="mean")
    p.add_argument("--feature-policy",
                   choices=("attributes", "label_onehot", "degree_onehot"), default=None)
    p.add_argument("--no-diagnostics", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("sweep-epochs", help="re-run cross-validation over epoch budgets")
    p.add_argument("--config", nargs="+", required=True)
    p.add_argument("--epochs", required=True, help="comma-separated budgets, e.g. 10,50,100")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_sweep_epochs)

    p = sub.add_parser("plot", help="render a trace CSV to an SVG line chart")
    p.add_argument("csv")
    p.add_argument("--series", default=None, help="filter like kind=act_std,layer=gcn1")
    p.add_argument("--out", required=True)
    p.add_argument("--title", default=None)
    p.set_defaults(fn=cmd_plot)

    p = sub.add_parser("bench", help="time the numba and numpy kernel paths")
    p.add_argument("--nodes", type=int, default=2000)
    p.add_argument("--features", type=int, default=64)
    p.add_argument("--avg-degree", type=int, default=8)
    p.add_argument("--repeats", type=int, default=5)
    p.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GnnLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
