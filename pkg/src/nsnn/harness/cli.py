"""``nsnn <task> --config FILE [--seed N] [--out DIR]``

Exit codes: 0 success, 2 configuration error, 3 training divergence,
4 capacity or guard error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time

from threadpoolctl import threadpool_limits

from ..errors import CapacityError, ConfigError, DivergenceError, MalformedFileError, TrainingError, VersionError
from .config import TASKS, load_config
from .io import ArtifactWriter, build_id
from .tasks import RUNNERS

log = logging.getLogger("nsnn")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_CAPACITY = 0, 2, 3, 4


def run(cfg) -> int:
    """Run one validated config; returns the exit status."""
    out = ArtifactWriter(cfg.out_dir, cfg.seed, cfg.digest())
    t0 = time.perf_counter()
    try:
        result = RUNNERS[cfg.task](cfg, out)
    except (TrainingError, DivergenceError) as exc:
        log.error("diverged: %s", exc)
        return EXIT_DIVERGED
    except CapacityError as exc:
        log.error("guard: %s", exc)
        return EXIT_CAPACITY
    except (ConfigError, VersionError, MalformedFileError) as exc:
        log.error("config: %s", exc)
        return EXIT_CONFIG
    summary = {"task": cfg.task, "build_id": build_id(), "config": cfg.to_dict(), "result": result}
    if cfg.record_wall_ms:
        summary["wall_ms"] = (time.perf_counter() - t0) * 1e3
    out.json("summary.json", summary)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nsnn", description="Noisy spiking network experiments.")
    parser.add_argument("task", help=" | ".join(TASKS))
    parser.add_argument("--config", required=True, help="flat JSON experiment config")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    if args.task not in TASKS:
        log.error("unknown task %r", args.task)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, task=args.task, seed=args.seed, out_dir=args.out)
    except (ConfigError, VersionError, MalformedFileError) as exc:
        log.error("config: %s", exc)
        return EXIT_CONFIG
    threads = os.environ.get("NSNN_THREADS")
    if threads is not None:
        try:
            limit = max(1, int(threads))
        except ValueError:
            log.error("NSNN_THREADS must be an integer, got %r", threads)
            return EXIT_CONFIG
        with threadpool_limits(limits=limit):
            return run(cfg)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
