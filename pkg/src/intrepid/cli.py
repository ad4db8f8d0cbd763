"""Command-line entry point: ``intrepid run|reference|summarize|validate``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure,
4 acceptance thresholds not met.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError
from .harness import (
    check_acceptance,
    load_config,
    read_rows,
    run_campaign,
    summarize,
    summary_to_csv,
)
from .oracle import reference_set
from .targets import TARGET_NAMES, make_target

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_ACCEPTANCE = 4


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    result = run_campaign(cfg, workers=args.workers)
    for k, v in result.paths.items():
        print(f"{k}: {v}")
    if result.failures:
        print(f"{len(result.failures)} chain(s) failed; see the manifest", file=sys.stderr)
    problems = check_acceptance(cfg, result.rows)
    for p in problems:
        print(f"acceptance: {p}", file=sys.stderr)
    if problems:
        return EXIT_ACCEPTANCE
    return EXIT_RUNTIME if result.failures else EXIT_OK


def _cmd_reference(args) -> int:
    target = make_target(args.target)
    ref = reference_set(target, args.n, args.seed, args.chunks)
    path = ref.save(args.out)
    print(f"{ref.n} samples of {target.name} (acceptance {ref.acceptance:.4g}) -> {path}")
    return EXIT_OK


def _cmd_summarize(args) -> int:
    rows = read_rows(args.csv)
    table = summary_to_csv(summarize(rows))
    if args.out:
        Path(args.out).write_text(table)
    else:
        sys.stdout.write(table)
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(json.dumps(cfg.to_dict(), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="intrepid", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a campaign from a TOML config or a JSON manifest")
    run.add_argument("config")
    run.add_argument("--workers", type=int, default=None)
    run.set_defaults(func=_cmd_run)

    ref = sub.add_parser("reference", help="rejection-sample a reference set")
    ref.add_argument("target", help=f"one of: {', '.join(TARGET_NAMES)}")
    ref.add_argument("--n", type=int, default=1_000_000)
    ref.add_argument("--seed", type=int, default=12345)
    ref.add_argument("--chunks", type=int, default=1)
    ref.add_argument("--out", required=True, help="output stem; writes <out>.npy and <out>.json")
    ref.set_defaults(func=_cmd_reference)

    summ = sub.add_parser("summarize", help="quantile table of a campaign CSV")
    summ.add_argument("csv")
    summ.add_argument("--out")
    summ.set_defaults(func=_cmd_summarize)

    val = sub.add_parser("validate", help="check a config and print its normalised form")
    val.add_argument("config")
    val.set_defaults(func=_cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - map everything else to the runtime category
        print(f"runtime error: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
