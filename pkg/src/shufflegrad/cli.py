"""Command-line entry point.

Subcommands: `run` executes an experiment config, `compare` runs the
strategy comparison, `accept` runs the acceptance suite, `bounds` prints a
rate-certificate curve as CSV.  Exit codes: 0 success, 1 acceptance
failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import acceptance, analysis, harness
from .errors import ConfigError


def _add_run_args(sub):
    sub.add_argument("--config", required=True, help="experiment config JSON")
    sub.add_argument("--workers", type=int, default=1)
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--data", default=None, help="dataset directory")
    sub.add_argument(
        "--no-figures", action="store_true", help="skip quick-look figure rendering"
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="shufflegrad",
        description="permutation-order gradient methods and their rate audits",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    _add_run_args(subs.add_parser("run", help="run an experiment grid"))
    _add_run_args(subs.add_parser("compare", help="compare shuffling strategies"))

    acc = subs.add_parser("accept", help="run the acceptance suite")
    acc.add_argument("--out", default=None)
    acc.add_argument("--data", default=None)

    bnd = subs.add_parser("bounds", help="print a rate certificate curve as CSV")
    bnd.add_argument("--theorem", required=True, help="curve id", dest="curve")
    bnd.add_argument("--constants", required=True, help="JSON file of constants")
    bnd.add_argument("--epochs", type=int, default=100)
    bnd.add_argument("--out", default=None, help="write CSV here instead of stdout")

    args = parser.parse_args(argv)
    try:
        if args.command in ("run", "compare"):
            cfg = harness.load_config(args.config)
            if args.no_figures:
                cfg["figures"] = False
            fn = harness.run_experiment if args.command == "run" else harness.compare_strategies
            report = fn(cfg, out_dir=args.out, workers=args.workers, data_dir=args.data)
            print(
                f"wrote {report['rows']} rows, {report['aggregates']} aggregate rows"
            )
            for f in report["files"]:
                print(f"  {f}")
            if report["diverged"]:
                print(f"  diverged runs: {report['diverged']}")
            return 0
        if args.command == "accept":
            results = acceptance.run_all(out_root=args.out, data_dir=args.data)
            return 0 if all(r.passed for r in results) else 1
        if args.command == "bounds":
            consts = json.loads(Path(args.constants).read_text(encoding="utf-8"))
            rows = []
            term_names = None
            for t in range(1, args.epochs + 1):
                rep = analysis.bound_curve(args.curve, t, consts)
                if term_names is None:
                    term_names = sorted(rep["terms"])
                rows.append(
                    [t, rep["total"]] + [rep["terms"][k] for k in term_names]
                    + [rep["target"]]
                )
            header = ["epoch", "total"] + term_names + ["target"]
            out = sys.stdout
            if args.out:
                out = open(args.out, "w", newline="", encoding="utf-8")
            writer = csv.writer(out, lineterminator="\n")
            writer.writerow(header)
            for r in rows:
                writer.writerow([repr(float(x)) if isinstance(x, float) else x for x in r])
            if args.out:
                out.close()
            return 0
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
