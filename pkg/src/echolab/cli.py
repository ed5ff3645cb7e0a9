"""``echolab <experiment> --config FILE [--set k=v]... [--out DIR] [--workers N] [--seed S] [--format csv,json,svg]``

Exit codes: 0 success, 1 configuration error, 2 numeric failure at one or
more grid points, 3 failed self-check (ops-check).
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from . import __version__
from .config import EXPERIMENTS, FORMATS, load_config, validate
from .errors import ConfigError
from .experiments import RUNNERS
from .output import write_csv, write_json, write_text

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="echolab", description="Echo interferometry sweeps.")
    p.add_argument("experiment", choices=EXPERIMENTS + ("validate",))
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value, e.g. grid.gamma=0:0.1:0.5 (repeatable)")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: $ECHOLAB_WORKERS or 1)")
    p.add_argument("--seed", type=int, default=None, help="override experiment.seed")
    p.add_argument("--format", dest="formats", default=None,
                   help=f"comma list from {','.join(FORMATS)} (overrides output.formats)")
    return p


def _workers(arg) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("ECHOLAB_WORKERS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            print(f"echolab: ignoring non-integer ECHOLAB_WORKERS={env!r}", file=sys.stderr)
    return 1


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"experiment.seed={args.seed}")
    if args.formats is not None:
        overrides.append(f"output.formats={args.formats}")
    if args.out is not None:
        overrides.append(f"output.dir={args.out}")

    if args.experiment == "validate":
        if not args.config:
            print("echolab validate: --config is required", file=sys.stderr)
            return EXIT_CONFIG
        try:
            diags = validate(args.config, None, overrides)
        except ConfigError as exc:
            diags = exc.diagnostics
        for d in diags:
            print(d)
        if not diags:
            print(f"{args.config}: ok")
        return EXIT_CONFIG if diags else EXIT_OK

    try:
        cfg = load_config(args.config, args.experiment, overrides)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"config error: {d}", file=sys.stderr)
        return EXIT_CONFIG

    workers = _workers(args.workers)
    out_dir = cfg["output.dir"]
    formats = cfg["output.formats"]
    os.makedirs(out_dir, exist_ok=True)

    start = time.perf_counter()
    result = RUNNERS[cfg.experiment](cfg.values, workers)
    wall = time.perf_counter() - start

    name = cfg.experiment
    meta = {
        "experiment": name,
        "echolab_version": __version__,
        "n_atoms": cfg["experiment.n_atoms"],
        "chi": cfg["experiment.chi"],
        "seed": cfg["experiment.seed"],
        "config": os.path.basename(args.config) if args.config else "<defaults>",
    }
    write_text(os.path.join(out_dir, f"{name}.ini"), cfg.to_ini())
    if "csv" in formats:
        write_csv(os.path.join(out_dir, f"{name}.csv"), result.table, meta)
    if "json" in formats:
        write_json(os.path.join(out_dir, "summary.json"), {
            "experiment": name,
            "version": __version__,
            "wall_time_s": wall,
            "workers": workers,
            "n_rows": len(result.table.rows),
            "n_errors": result.n_errors,
            "config": cfg.raw,
            "results": result.summary,
        })
    if "svg" in formats and result.svg:
        write_text(os.path.join(out_dir, f"{name}.svg"), result.svg)

    print(f"echolab {name}: {len(result.table.rows)} rows, {result.n_errors} errors, "
          f"{wall:.1f} s -> {out_dir}")
    if result.acceptance_failed:
        print(f"echolab {name}: failed checks {result.summary.get('failed')}", file=sys.stderr)
        return EXIT_CHECK
    if result.n_errors:
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
