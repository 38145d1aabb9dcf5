"""Command line batch runner.

    fedcm run <config> --out <dir> [--threads N] [--algorithms a,b] [--seeds s1,s2]
    fedcm partition <config> --manifest <path>

Log verbosity comes from the ``FEDCM_LOG_LEVEL`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from .config import ExperimentSuite, dump_config, parse_config
from .data import PartitionManifest
from .orchestrator import Algorithm, ConfigError, build_environment, run_experiment
from .report import RunOutcome, comparison_table, round_csv, summarize

log = logging.getLogger("fedcm")


def run_suite(suite: ExperimentSuite, out_dir: str | Path, threads: int = 1) -> int:
    """Run every (algorithm, seed) pair and write logs; return 0 iff all runs succeeded."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs: list[RunOutcome] = []
    timings = {}
    started = datetime.now(timezone.utc).isoformat()
    for algorithm, seed, cfg in suite.configs():
        name = f"{algorithm.value}_seed{seed}"
        log.info("running %s", name)
        t0 = time.perf_counter()
        try:
            result = run_experiment(cfg, threads=threads)
        except Exception as exc:  # a failed run must not stop the suite
            log.exception("run %s failed", name)
            runs.append(RunOutcome(algorithm.value, seed, error=f"{type(exc).__name__}: {exc}"))
            continue
        runs.append(RunOutcome(algorithm.value, seed, result.records))
        (out / f"{name}.csv").write_text(round_csv(result.records))
        with open(out / f"{name}_sampler.jsonl", "w") as fh:
            for rec in result.records:
                if rec.sampler_state is not None:
                    fh.write(json.dumps({"round": rec.round, **rec.sampler_state}) + "\n")
        timings[name] = {
            "seconds": time.perf_counter() - t0,
            "round_ms": [1000 * r.wall_time for r in result.records],
        }

    algorithms = [a.value for a in suite.algorithms]
    summary = summarize(runs, algorithms, suite.targets, suite.baseline.value)
    summary["config"] = dump_config(suite)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    (out / "comparison.md").write_text(comparison_table(runs, algorithms, suite.baseline.value))
    (out / "metadata.json").write_text(
        json.dumps(
            {"started": started, "finished": datetime.now(timezone.utc).isoformat(), "threads": threads, "timings": timings},
            indent=2,
        )
        + "\n"
    )
    failed = [r for r in runs if not r.ok]
    for r in failed:
        log.error("%s seed %d failed: %s", r.algorithm, r.seed, r.error)
    return 1 if failed else 0


def _parse_list(text: str, cast):
    return tuple(cast(s.strip()) for s in text.split(",") if s.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedcm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment suite")
    run.add_argument("config")
    run.add_argument("--out", required=True)
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--algorithms", help="comma-separated override of suite.algorithms")
    run.add_argument("--seeds", help="comma-separated override of suite.seeds")

    part = sub.add_parser("partition", help="export the client partition manifest")
    part.add_argument("config")
    part.add_argument("--manifest", required=True)
    part.add_argument("--seed", type=int, help="seed to partition with (default: first suite seed)")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("FEDCM_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        suite = parse_config(args.config)
        if args.command == "run":
            if args.algorithms:
                suite = replace(suite, algorithms=_parse_list(args.algorithms, Algorithm))
            if args.seeds:
                suite = replace(suite, seeds=_parse_list(args.seeds, int))
            if args.threads < 1:
                raise ConfigError([f"--threads must be >= 1 (got {args.threads})"])
            return run_suite(suite, args.out, args.threads)
        seed = suite.seeds[0] if args.seed is None else args.seed
        cfg = next(c for _, _, c in suite.configs())
        env = build_environment(replace(cfg, seed=seed))
        PartitionManifest(cfg.partition, seed, env.shards, env.val_indices).write(args.manifest)
        return 0
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
