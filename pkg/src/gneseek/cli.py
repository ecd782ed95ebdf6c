"""Command-line front end.

    gneseek run <config>                 integrate a scenario (file path or bundled name)
    gneseek verify <suite>               run an invariant suite
    gneseek sweep <config> --param P --values JSON
    gneseek list-scenarios

Exit codes: 0 success, 1 invariant failure, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, GneSeekError, UnknownSuite

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _cmd_run(args) -> int:
    from .config import load_config
    from .experiments import run_scenario

    cfg = load_config(args.config)
    summary = run_scenario(cfg, args.output_root)
    print(f"scenario {summary.scenario}: halt={summary.halt_reason} jumps={summary.jump_count} "
          f"kkt_residual={summary.final_kkt_residual} wall={summary.wall_time:.2f}s")
    print(f"outputs written to {summary.output_dir}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .verify import run_suite

    results = run_suite(args.suite)
    width = max(len(f"{r.suite}/{r.name}") for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {f'{r.suite}/{r.name}':<{width}}  {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_FAILED if failed else EXIT_OK


def _cmd_sweep(args) -> int:
    from .config import load_document
    from .experiments import output_root, sweep, write_sweep_csv

    doc, source = load_document(args.config)
    try:
        values = json.loads(args.values)
    except json.JSONDecodeError as exc:
        raise ConfigError("--values", f"not valid JSON: {exc}") from None
    if not isinstance(values, list):
        raise ConfigError("--values", "expected a JSON list")
    rows = sweep(doc, args.param, values, args.output_root, source)
    name = doc.get("outputs", {}).get("directory", doc.get("name", Path(source).stem))
    path = output_root(args.output_root) / name / f"sweep_{args.param}.csv"
    write_sweep_csv(rows, path)
    print(f"{len(rows)} runs; table written to {path}")
    return EXIT_OK


def _cmd_list(args) -> int:
    from .config import bundled_scenarios

    for name, path in sorted(bundled_scenarios().items()):
        with open(path) as fh:
            desc = json.load(fh).get("description", "")
        print(f"{name:<28} {desc}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gneseek", description=__doc__.split("\n\n")[0])
    parser.add_argument("--output-root", default=None,
                        help="directory for run outputs (default: $GNESEEK_OUTPUT_ROOT or ./runs)")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="integrate a scenario")
    p.add_argument("config", help="scenario JSON file or bundled scenario name")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("verify", help="run an invariant suite")
    p.add_argument("suite", help="core, full_info, adaptive, zeroth_order, games or all")
    p.set_defaults(func=_cmd_verify)
    p = sub.add_parser("sweep", help="run a scenario over a list of parameter values")
    p.add_argument("config")
    p.add_argument("--param", required=True, help="dotted path of the field to vary, e.g. adaptive.k_max")
    p.add_argument("--values", required=True, help="JSON list of values")
    p.set_defaults(func=_cmd_sweep)
    p = sub.add_parser("list-scenarios", help="list bundled scenarios")
    p.set_defaults(func=_cmd_list)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UnknownSuite) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GneSeekError as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
