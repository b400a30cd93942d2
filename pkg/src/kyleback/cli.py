"""Command line entry point: ``kyleback <command> --config FILE ...``."""
import argparse
import logging
import sys

from . import io as kio
from .errors import ConfigError, IoError
from .scenarios import EXIT_CONFIG, EXIT_PASS, run_scenario


def _parser():
    p = argparse.ArgumentParser(prog="kyleback", description="Insider trading equilibrium simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "simulate paths and write paths/plot CSVs",
        "verify": "run the configured equilibrium checks",
        "calibrate": "compute calibrated constants only",
        "wealth": "estimate expected wealth and first-order perturbation tests",
    }
    for name, h in helps.items():
        s = sub.add_parser(name, help=h)
        s.add_argument("--config", required=True, help="config file or bundled config name")
        s.add_argument("--seed", type=int)
        s.add_argument("--paths", type=int)
        s.add_argument("--grid", type=int, metavar="N_STEPS")
        s.add_argument("--out")
        s.add_argument("--deterministic", action="store_true", help="omit the timestamp from the report")
    r = sub.add_parser("report", help="re-render a stored report")
    r.add_argument("report")
    r.add_argument("--out", help="write a normalized copy of the report here")
    r.add_argument("--deterministic", action="store_true")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.command == "report":
        try:
            _, doc = kio.read_report_json(args.report)
            if args.out:
                if args.deterministic:
                    doc.pop("generated_at", None)
                kio.emit_report_json(doc, args.out)
        except IoError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(kio.render_text(doc))
        return EXIT_PASS if doc.get("passed") else 1
    try:
        status, doc = run_scenario(args.config, args.command, out=args.out, seed=args.seed,
                                   n_paths=args.paths, n_steps=args.grid, deterministic=args.deterministic)
    except (ConfigError, IoError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if doc is None:
        print("error: invalid configuration (see messages above)", file=sys.stderr)
        return status
    print(kio.render_text(doc))
    return status


if __name__ == "__main__":
    sys.exit(main())
