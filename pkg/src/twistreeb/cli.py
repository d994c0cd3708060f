"""Command-line front end: ``twistreeb systems list | run | export``."""
from __future__ import annotations

import argparse
import sys

from .catalog import list_systems
from .errors import FormatError
from .runner import EXIT_CONFIG, EXIT_OK, export_plot_data, run_config


def _fmt_window(w):
    return "-" if w is None else f"[{w[0]:g}, {w[1]:g}]"


def cmd_systems(args):
    rows = list_systems(args.filter or "")
    print(f"{'name':<16}{'dim':>4}{'m':>4}  {'energy window':<16}facts")
    for r in rows:
        stub = " (stub)" if r["stub"] else ""
        dim = "-" if r["dimension"] is None else r["dimension"]
        m = "-" if r["symmetry_order"] is None else r["symmetry_order"]
        print(f"{r['name']:<16}{dim:>4}{m:>4}  "
              f"{_fmt_window(r['energy_window']):<16}{'; '.join(r['facts'])}{stub}")
    return EXIT_OK


def cmd_run(args):
    status, path = run_config(args.config, seed=args.seed, jobs=args.jobs)
    if path is not None:
        print(path)
    return status


def cmd_export(args):
    try:
        paths = export_plot_data(args.result, args.kind, args.out)
    except (FormatError, FileNotFoundError) as e:
        print(f"format error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    for p in paths:
        print(p)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="twistreeb", description="Twisted periodic orbit experiments")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("systems", help="catalog of model systems")
    ssub = sp.add_subparsers(dest="action", required=True)
    ls = ssub.add_parser("list", help="list catalog entries")
    ls.add_argument("filter", nargs="?", default="", help="substring of the system name")
    ls.set_defaults(func=cmd_systems)

    rp = sub.add_parser("run", help="run an experiment configuration (TOML)")
    rp.add_argument("config")
    rp.add_argument("--seed", type=int, default=None, help="override the config seed")
    rp.add_argument("--jobs", type=int, default=None, help="override the config parallelism")
    rp.set_defaults(func=cmd_run)

    ep = sub.add_parser("export", help="write plot data from a result file as CSV")
    ep.add_argument("result")
    ep.add_argument("--kind", required=True, choices=["trace", "continuation", "loopflow", "spectrum"])
    ep.add_argument("--out", default=None, help="output directory (default: next to the result)")
    ep.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
