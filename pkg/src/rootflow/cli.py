"""Command-line runner for scenarios.

Subcommands: ``run``, ``list``, ``verify``, ``extract``, ``integrate`` and
``symmetry``. Each takes a built-in scenario name or a TOML config path.
"""
import argparse
import json
import os
import sys
from importlib import resources

import jsonschema

from .scenarios import (
    ConfigError,
    export_field,
    export_trajectories,
    list_scenarios,
    resolve_config,
    run_scenario,
)

OUT_ENV = "ROOTFLOW_OUT"
SCHEMA_FILE = "report.schema.json"

STAGES = {
    "run": ("verify", "flow", "extract", "symmetry"),
    "verify": ("verify",),
    "symmetry": ("symmetry",),
}


def load_schema():
    return json.loads(resources.files("rootflow").joinpath("schemas", SCHEMA_FILE).read_text())


def report_json(report):
    """Canonical JSON text of a report: sorted keys, two-space indent, trailing newline."""
    return json.dumps(report.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def validate_report(data):
    jsonschema.validate(data, load_schema())


def _out_dir(args):
    out = args.out or os.environ.get(OUT_ENV) or "."
    os.makedirs(out, exist_ok=True)
    return out


def _config(args):
    config = resolve_config(args.scenario)
    return config.with_overrides(grid=args.grid, seed=args.seed, depth=args.depth, tol=args.tol)


def _write_report(report, args, suffix=""):
    text = report_json(report)
    validate_report(json.loads(text))
    path = args.json or os.path.join(_out_dir(args), f"{report.scenario}{suffix}.json")
    with open(path, "w") as fh:
        fh.write(text)
    return path


def cmd_list(args):
    for name, description in list_scenarios():
        print(f"{name:28s} {description}")
    return 0


def cmd_checks(args):
    config = _config(args)
    report = run_scenario(config, STAGES[args.command])
    suffix = "" if args.command == "run" else f"-{args.command}"
    path = _write_report(report, args, suffix)
    print("\n".join(report.summary_lines()))
    print(f"report: {path}")
    return 0 if report.overall_pass else 1


def cmd_extract(args):
    config = _config(args)
    path = os.path.join(_out_dir(args), f"{config.name}-field.csv")
    export_field(config, path)
    print(f"field: {path}")
    return 0


def cmd_integrate(args):
    config = _config(args)
    path = os.path.join(_out_dir(args), f"{config.name}-trajectories.csv")
    export_trajectories(config, path, points=args.grid)
    print(f"trajectories: {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="rootflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="list built-in scenarios")
    helps = {
        "run": "run every check of a scenario and write its JSON report",
        "verify": "check the root-system conditions only",
        "extract": "export the extracted vector field as CSV",
        "integrate": "export flow trajectories as a time-series CSV",
        "symmetry": "run the intertwining and group-closure checks",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("scenario", help="built-in scenario name or path to a TOML config")
        p.add_argument("--grid", type=int, help="grid resolution (points per check grid)")
        p.add_argument("--seed", type=int, help="seed for sampled grids")
        p.add_argument("--depth", type=int, help="root-system depth")
        p.add_argument("--tol", type=float, help="replace every tolerance by this value")
        p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or the current directory)")
        p.add_argument("--json", help="path of the JSON report")
    return parser


COMMANDS = {
    "list": cmd_list,
    "run": cmd_checks,
    "verify": cmd_checks,
    "symmetry": cmd_checks,
    "extract": cmd_extract,
    "integrate": cmd_integrate,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
