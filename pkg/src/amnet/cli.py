"""``amnet`` command line: run, plot, compare, fetch-data.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .config import ConfigError, parse_config
from .datasets import DataFormatError
from .metrics import CsvFormatError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4


def _overrides(extra: list[str], sets: list[str]) -> dict[str, str]:
    """Turn ``--key=value``/``--key value`` leftovers and ``--set key=value`` into a dict."""
    out: dict[str, str] = {}
    for item in sets or []:
        if "=" not in item:
            raise ConfigError(None, f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k] = v
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ConfigError(None, f"unexpected argument {tok!r}")
        tok = tok[2:]
        if "=" in tok:
            k, v = tok.split("=", 1)
        elif i + 1 < len(extra) and not extra[i + 1].startswith("--"):
            k, v = tok, extra[i + 1]
            i += 1
        else:
            raise ConfigError(tok, "missing value")
        out[k] = v
        i += 1
    return out


def _run_one(path, overrides) -> str:
    from .experiment import run_experiment

    cfg = parse_config(path, overrides, check_paths=True)
    manifest = run_experiment(cfg)
    return manifest.metrics_csv


def cmd_run(args, extra) -> int:
    overrides = _overrides(extra, args.set)
    configs = args.config or [None]
    # validate everything before training anything
    resolved = [parse_config(path, overrides, check_paths=True) for path in configs]
    outs = [os.path.abspath(c.output_dir) for c in resolved]
    if len(set(outs)) != len(outs):
        raise ConfigError("output_dir", "several configs resolve to the same output directory")
    if args.jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for csv_path in pool.map(_run_one, configs, [overrides] * len(configs)):
                print(csv_path)
    else:
        for path in configs:
            print(_run_one(path, overrides))
    return EXIT_OK


def cmd_plot(args, extra) -> int:
    from .metrics import emit_plot

    emit_plot(args.csv, args.svg)
    return EXIT_OK


def cmd_compare(args, extra) -> int:
    from .metrics import compare_runs

    _, text = compare_runs(args.csv)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_fetch(args, extra) -> int:
    from .fetch import fetch_data

    fetch_data(args.dir, args.dataset)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="amnet", description="Adversarial memory network experiments")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train one or more configurations",
                       description="Train a configuration. Any config key can be overridden "
                                   "with --key=value or --set key=value.")
    r.add_argument("--config", action="append", help="key=value config file (repeatable)")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    r.add_argument("--jobs", type=int, default=1, help="parallel processes when several configs are given")
    r.set_defaults(func=cmd_run)

    pl = sub.add_parser("plot", help="render a metrics CSV as an SVG")
    pl.add_argument("csv")
    pl.add_argument("svg")
    pl.set_defaults(func=cmd_plot)

    c = sub.add_parser("compare", help="summarize final and retained accuracy across runs")
    c.add_argument("csv", nargs="+")
    c.set_defaults(func=cmd_compare)

    f = sub.add_parser("fetch-data", help="download raw MNIST / CIFAR-10 files into a directory")
    f.add_argument("dir", nargs="?", default=os.environ.get("AMNET_DATA_DIR", "data"))
    f.add_argument("--dataset", choices=("mnist", "cifar10", "all"), default="all")
    f.set_defaults(func=cmd_fetch)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    args, extra = parser.parse_known_args(argv)
    if extra and args.command != "run":
        parser.error(f"unrecognized arguments: {' '.join(extra)}")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    try:
        return args.func(args, extra)
    except ConfigError as e:
        print(f"amnet: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, CsvFormatError, OSError) as e:
        print(f"amnet: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        print(f"amnet: error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
