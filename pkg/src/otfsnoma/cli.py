"""Command-line entry point for the experiment sweeps."""
import argparse
import json
import logging
import os
import sys

from .exceptions import ConfigError
from .experiment import ExperimentConfig, rows_to_csv, run_experiment, summarize, timings_to_csv

log = logging.getLogger("otfsnoma")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="otfsnoma",
        description="Monte-Carlo sweep of OTFS-NOMA beamforming schemes (R_min vs SNR).",
    )
    ap.add_argument("--config", help="JSON experiment config; flags below override it")
    ap.add_argument("--out", help="output directory for results.csv and summary.json")
    ap.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
    ap.add_argument("--trials", type=int, help="Monte-Carlo trials per grid point")
    ap.add_argument("--schemes", help="comma-separated subset of sca,sdr,random")
    ap.add_argument("--threads", type=int, help="worker processes")
    ap.add_argument("--timings", action="store_true", help="also write per-row wall times")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def load_config(args):
    cfg = ExperimentConfig.from_json_file(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        cfg.seed = args.seed
    if args.trials is not None:
        cfg.trials = args.trials
    if args.schemes is not None:
        cfg.schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
    if args.threads is not None:
        cfg.threads = args.threads
    if args.out is not None:
        cfg.out = args.out
    if not cfg.out:
        raise ConfigError("an output directory is required (--out or 'out' in the config)")
    return cfg.validate()


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    def progress(i, n):
        if i % 100 == 0 or i == n:
            log.info("%d/%d points done", i, n)

    rows = run_experiment(cfg, progress=progress)
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "results.csv"), "w", newline="") as fh:
        fh.write(rows_to_csv(rows))
    with open(os.path.join(cfg.out, "summary.json"), "w") as fh:
        json.dump({"config": {k: v for k, v in vars(cfg).items() if k not in ("out", "threads")},
                   "curves": summarize(rows)},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.timings:
        with open(os.path.join(cfg.out, "timings.csv"), "w", newline="") as fh:
            fh.write(timings_to_csv(rows))
    return 0


if __name__ == "__main__":
    sys.exit(main())
