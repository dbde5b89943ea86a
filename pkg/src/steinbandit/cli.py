"""The ``bench`` command line tool.

Usage: bench <command> --config <file> [--seed S] [--out DIR] [--paper-scale]

Each command runs one experiment from its TOML config and writes three files
into the output directory: the results CSV, a standalone plot script, and the
rendered PNG figure.
"""

import argparse
import os
import sys

from . import experiments


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bench",
        description="benchmark harness for bandit-allocated parallel MCMC")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="command")
    for name in experiments.EXPERIMENT_KINDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True,
                       help="TOML experiment config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's master seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--paper-scale", action="store_true",
                       help="use the full-size settings from the [paper] table")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = experiments.load_config(args.config)
        cfg = experiments.apply_paper_scale(cfg, args.paper_scale)
        if args.seed is not None:
            cfg["seed"] = args.seed
        os.makedirs(args.out, exist_ok=True)
        cfg.setdefault("gamma_cache",
                       os.path.join(args.out, "gamma_cache.json"))
        rows = experiments.run_experiment(args.command, cfg)
    except Exception as exc:
        print(f"bench: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    stem = args.command.replace("-", "_")
    csv_path = os.path.join(args.out, f"{stem}.csv")
    experiments.write_rows(csv_path, rows)
    script_path = os.path.join(args.out, f"{stem}_plot.py")
    from . import plots
    with open(script_path, "w") as fh:
        fh.write(plots.plot_script(args.command, f"{stem}.csv", f"{stem}.png"))
    png_path = os.path.join(args.out, f"{stem}.png")
    plots.render(args.command, csv_path, png_path)
    print(f"wrote {csv_path} ({len(rows)} rows), {script_path}, {png_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
