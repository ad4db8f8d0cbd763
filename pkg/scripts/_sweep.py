"""Shared helper: run one config once per target name and write quantile tables."""
import argparse
import dataclasses
import logging
from pathlib import Path

from intrepid.harness import load_config, output_dir, run_campaign, summarize, summary_to_csv


def sweep(default_config: str, targets: list[str], description: str) -> None:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", default=default_config)
    p.add_argument("--targets", nargs="*", default=targets)
    p.add_argument("--chains", type=int, help="override the chain count")
    p.add_argument("--lengths", type=int, nargs="*", help="override the chain lengths")
    p.add_argument("--workers", type=int)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    base = load_config(args.config)
    for name in args.targets:
        over = {"target": name, "name": name}
        if args.chains:
            over["chains"] = args.chains
        if args.lengths:
            over["lengths"] = args.lengths
        cfg = dataclasses.replace(base, **over)
        result = run_campaign(cfg, workers=args.workers)
        table = Path(output_dir(cfg)) / f"{name}-summary.csv"
        table.write_text(summary_to_csv(summarize(result.rows)))
        print(f"{name}: {len(result.rows)} rows, {len(result.failures)} failures -> {result.paths['csv']}")
