"""``cf-audit`` command line.

    cf-audit run  --config <path> [--out <dir>] [--workers N] [--no-figures]
    cf-audit grid --config <path> --resolution <n> [--out <dir>] [--no-figures]

Exit status: 0 on success, 1 for configuration errors, 2 for runtime failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..dataset import DatasetError
from .config import ConfigError, load_config

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _cmd_run(args) -> int:
    from .audit import run_audit

    cfg = load_config(args.config)
    figures = False if args.no_figures else None
    _, agg = run_audit(cfg, workers=args.workers, out_dir=args.out, figures=figures)
    out = Path(args.out) if args.out else cfg.output_path()
    print(f"test accuracy {agg['test_accuracy']:.4f}")
    for name, g in agg["generators"].items():
        prox = g["proximity"]["fraction_in_0_3"]
        nc = g["connectedness"]["fraction_not_connected"]
        print(f"{name}: success {g['success_rate']:.3f}"
              f"  P in [0,3] {prox if prox is None else round(prox, 4)}"
              f"  not connected {nc if nc is None else round(nc, 4)}")
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_grid(args) -> int:
    from .audit import load_split, train_classifier
    from .grid import empty_regions, export_decision_grid, grid_bounds, write_grid_csv

    cfg = load_config(args.config)
    data, split = load_split(cfg)
    if data.n_features != 2:
        raise ConfigError("grid export needs exactly two features")
    f = train_classifier(cfg, split.train)
    bounds = grid_bounds(data.X, cfg.grid.margin)
    res = args.resolution or cfg.grid.resolution
    if res < 2:
        raise ConfigError("--resolution must be at least 2")
    grid = export_decision_grid(f, bounds, res)
    out = Path(args.out) if args.out else cfg.output_path()
    out.mkdir(parents=True, exist_ok=True)
    write_grid_csv(grid, out / "grid.csv")
    empty = empty_regions(grid, res, bounds, split.train.X)
    (out / "grid_meta.json").write_text(json.dumps({
        "resolution": res,
        "bounds": bounds,
        "feature_names": list(data.feature_names),
        "class_names": list(data.class_names),
        "empty_regions": [{"label": r.label, "cells": r.size} for r in empty],
    }, indent=2) + "\n")
    if cfg.figures and not args.no_figures:
        from .plotting import save_grid_figure
        save_grid_figure(grid, res, split.train, out / "grid.png")
    print(f"wrote {out / 'grid.csv'} ({res * res} rows, {len(empty)} region(s) without training data)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cf-audit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="audit every test instance")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None)
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--no-figures", action="store_true")
    run.set_defaults(func=_cmd_run)

    grid = sub.add_parser("grid", help="export the 2-D decision grid")
    grid.add_argument("--config", required=True)
    grid.add_argument("--resolution", type=int, default=None)
    grid.add_argument("--out", default=None)
    grid.add_argument("--no-figures", action="store_true")
    grid.set_defaults(func=_cmd_grid)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DatasetError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        logging.getLogger("cfaudit").debug("runtime failure", exc_info=True)
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
