"""Command-line entry point: ``nemchain <subcommand> [options]``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure,
4 I/O failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..errors import ConfigurationError, ContractError, NumericalError, UsageError
from ..params import DeviceParams
from .config import DEFAULT_SEED, load_config_file
from .experiments import PRESETS, run_config_file, run_experiment
from .io import format_aligned
from .plots import emit_plots

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("nemchain")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_u64, default=None, help=f"master seed (default {DEFAULT_SEED})")
    common.add_argument("--realizations", "-R", type=_positive, default=None, help="disorder realizations per run")
    common.add_argument("--workers", type=_positive, default=1, help="worker processes")
    common.add_argument("--full", action="store_true", help="open-system presets at N=51 and R=500")
    common.add_argument("--out", type=Path, default=None, help="output directory (default ./out/<subcommand>)")
    common.add_argument("--format", choices=("csv", "json"), default="csv", dest="fmt")
    common.add_argument("--plots", action="store_true", help="render PNG images next to the tables")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="nemchain", description="Disordered nanoresonator-chain simulations.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    t1 = sub.add_parser("table1", parents=[common], help="coupling-rate table for the reference devices")
    t1.add_argument("devices", nargs="?", type=Path, help="YAML file with a 'devices' list (optional)")
    for name in PRESETS[1:]:
        sub.add_parser(name, parents=[common], help=f"run the {name} preset")
    run = sub.add_parser("run", parents=[common], help="run an experiment or replay file")
    run.add_argument("config", type=Path)
    plot = sub.add_parser("plot", parents=[common], help="render images for an existing bundle")
    plot.add_argument("bundle", type=Path)
    return parser


def _overrides(args) -> dict:
    o = {}
    if args.seed is not None:
        o["master_seed"] = args.seed
    if args.realizations is not None:
        o["realizations"] = args.realizations
    return o


def _load_devices(path: Path) -> list[DeviceParams]:
    data = load_config_file(path)
    if "devices" not in data or not isinstance(data["devices"], list):
        raise ConfigurationError(f"{path} needs a 'devices' list")
    return [DeviceParams.from_mapping(d) for d in data["devices"]]


def _dispatch(args) -> int:
    out = args.out
    if args.command == "plot":
        for path in emit_plots(args.bundle):
            print(path)
        return EXIT_OK
    if out is None:
        out = Path("out") / (args.config.stem if args.command == "run" else args.command)
    if args.command == "run":
        data = load_config_file(args.config)
        if args.seed is not None or args.realizations is not None:
            if "preset" in data:
                data["overrides"] = {**(data.get("overrides") or {}), **_overrides(args)}
            else:
                data.update(_overrides(args))
        bundle = run_config_file(data, args.workers, out, args.fmt, args.plots)
    else:
        devices = _load_devices(args.devices) if args.command == "table1" and args.devices else None
        bundle = run_experiment(args.command, _overrides(args), args.workers, out, args.fmt, args.full, args.plots, devices)
        if args.command == "table1":
            table = bundle.tables["table1"]
            print(format_aligned(table.columns, table.rows, precision=3))
    for path in bundle.files:
        log.info("wrote %s", path)
    print(f"bundle written to {out}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"nemchain: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return _dispatch(args)
    except (UsageError, ConfigurationError, ContractError) as exc:
        print(f"nemchain: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"nemchain: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"nemchain: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
