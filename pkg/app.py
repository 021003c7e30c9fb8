"""gma: command line front end of the generalised Monge-Ampère laboratory.

    python app.py kernel cone --config data/kernel_cone.json
    python app.py toric check --config my_pair.json --out results/
    python app.py psh lelong --format csv
"""

import argparse
import logging
import os
import sys
import time

from app.config import load_config
from app.errors import GmaError
from app.processing import RunContext, run_command
from app.reports import log_summary, render_csv, render_error, render_json
from app.storage import (
    ensure_dir,
    write_grid,
    write_grid_csv,
    write_potential,
    write_table,
    write_text,
)
from utils.constants import EXIT_CODES, GRID_CSV_LIMIT, SCHEMA_VERSION

logger = logging.getLogger("gma")

SUBCOMMANDS = {
    "kernel": ("cone", "fm", "identities"),
    "solve": ("run", "manufacture", "classpath"),
    "toric": ("check",),
    "psh": ("mollify", "lelong", "cn", "glue"),
}


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="command config (JSON); defaults to the bundled example")
    common.add_argument("--out", help="directory for the report, tables and grid files")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized drivers")
    common.add_argument("--threads", type=_positive_int, default=1,
                        help="worker threads for data-parallel grid loops")
    common.add_argument("--format", choices=("json", "csv"), default="json",
                        help="stdout format; csv prints the command's main table")
    common.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for INFO, -vv for DEBUG logging on stderr")

    parser = argparse.ArgumentParser(prog="gma", description=__doc__.splitlines()[0])
    groups = parser.add_subparsers(dest="group", required=True)
    for group, actions in SUBCOMMANDS.items():
        group_parser = groups.add_parser(group)
        sub = group_parser.add_subparsers(dest="action", required=True)
        for action in actions:
            sub.add_parser(action, parents=[common])
    return parser


def configure_logging(verbosity):
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, force=True,
                        format="%(levelname)s %(name)s: %(message)s")


def write_artifacts(result, report, command, out_dir, fmt="json"):
    """
    Writes CSV tables, grid files and the report JSON, listing them in the report.
    Tables are named after their key (``lelong.csv``, ``stages.csv``); with
    ``fmt="csv"`` small grids are also written as ``<name>.csv``.
    """
    ensure_dir(out_dir)
    names = []
    for name, frame in sorted(result.tables.items()):
        names.append(os.path.basename(write_table(frame, os.path.join(out_dir, f"{name}.csv"))))
    for name, (values, geometry) in sorted(result.grids.items()):
        path = os.path.join(out_dir, f"{name}.grid")
        if name == "phi":
            write_potential(path, values, geometry, {"command": command})
            names.append(os.path.basename(path) + ".json")
        else:
            write_grid(path, values)
        names.append(os.path.basename(path))
        if fmt == "csv" and values.size <= GRID_CSV_LIMIT:
            csv_path = write_grid_csv(os.path.join(out_dir, f"{name}.csv"), values, geometry)
            names.append(os.path.basename(csv_path))
    report["artifacts"] = sorted(names)
    stem = command.replace(".", "_")
    write_text(render_json(report), os.path.join(out_dir, f"{stem}_report.json"))


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    command = f"{args.group}.{args.action}"
    ctx = RunContext(seed=args.seed, threads=args.threads)
    started = time.perf_counter()
    try:
        config = load_config(command, args.config)
        result = run_command(config, ctx)
        report = {"command": command, "schemaVersion": SCHEMA_VERSION, **result.report}
        report["timings"] = {"wallSeconds": time.perf_counter() - started}
        if args.out:
            write_artifacts(result, report, command, args.out, args.format)
    except GmaError as e:
        logger.error("%s failed: %s", command, e.message)
        sys.stdout.write(render_error(e))
        return e.exit_code
    except Exception as e:
        logger.exception("%s failed unexpectedly", command)
        sys.stdout.write(render_json({"error": type(e).__name__, "message": str(e), "details": {}}))
        return EXIT_CODES["failure"]

    if args.format == "csv" and result.primary_table:
        sys.stdout.write(render_csv(result.tables[result.primary_table]))
    else:
        sys.stdout.write(render_json(report))
    log_summary(command, report, result.exit_code)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
