"""Command-line entry point.

Subcommands:

* ``run`` -- simulate the configured (scheme, p) cell over the configured
  number of paired seeds; writes ``metrics.csv`` and ``summary.csv`` (and
  per-run trajectory files when enabled) into the output directory.
* ``sweep`` -- same, but over the scheme-by-p grid of the ``sweep``
  section, optionally restricted with ``--schemes``/``--p``.
* ``validate-config`` -- schema-check a config file; exit 3 with the
  offending field path on violation.
* ``replay-metrics`` -- recompute the distance-based metric columns from
  stored trajectory files; solver timing columns are not recoverable and
  are written as ``nan``.

Progress goes to stderr; machine-readable output only to files.  Exit
codes: 0 success, 1 simulation failure, 2 usage error, 3 invalid config.
Set ``LOCALGAMES_LOG=debug|info|warning`` to control verbosity.
"""

import os

# Pin BLAS threading before numpy loads so results do not depend on the
# worker pool layout or host core count.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import argparse
import logging
import sys

import numpy as np

from . import harness
from .config import ConfigError, load_and_validate
from .harness import (FULL_GAME_LABEL, aggregate, make_scenario, run_batch,
                      sweep_cells, write_metrics_csv, write_summary_csv,
                      write_timings_csv)

log = logging.getLogger("localgames")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3


def _setup_logging():
    level = os.environ.get("LOCALGAMES_LOG", "info").upper()
    logging.basicConfig(stream=sys.stderr,
                        level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(message)s")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="localgames",
        description="Local dynamic-game motion planning experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", required=True, help="YAML config file")
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override scenario.base_seed")
        p.add_argument("--jobs", type=int, default=None,
                       help="worker processes (default: cpu count)")
        p.add_argument("--schemes", default=None,
                       help="comma-separated scheme filter")
        p.add_argument("--p", dest="p_list", default=None,
                       help="comma-separated list of p values")

    common(sub.add_parser("run", help="run the configured planner cell"))
    common(sub.add_parser("sweep", help="run the scheme-by-p sweep"))
    vc = sub.add_parser("validate-config", help="check a config file")
    vc.add_argument("--config", required=True)
    rp = sub.add_parser("replay-metrics",
                        help="recompute metrics from stored trajectories")
    rp.add_argument("--config", required=True)
    rp.add_argument("--out", required=True,
                    help="directory holding traj_*.csv files")
    return parser


def _seeds(cfg, override):
    base = cfg.scenario.base_seed if override is None else override
    return [base + i for i in range(cfg.scenario.runs)]


def _parse_filters(args, cfg):
    schemes = None
    if args.schemes:
        from .selection import parse_scheme
        schemes = [parse_scheme(s) for s in args.schemes.split(",") if s]
    p_values = None
    if args.p_list:
        p_values = [int(v) for v in args.p_list.split(",") if v]
    return schemes, p_values


def _execute(cfg, cells, seeds, jobs, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    jobs = os.cpu_count() if jobs is None else jobs
    log.info("running %d cells x %d seeds with %d workers",
             len(cells), len(seeds), max(1, jobs))
    rows = run_batch(cfg.scenario, cfg.planner, cells, seeds, jobs=jobs,
                     out_dir=out_dir, write_traj=cfg.write_trajectories)
    bad = [r for r in rows if r.get("_early")]
    for r in bad:
        log.error("run scheme=%s p=%s seed=%s terminated early: %s",
                  r["scheme"], r["p"], r["seed"], r["_early"])
    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), rows)
    write_timings_csv(os.path.join(out_dir, "timings.csv"), rows)
    write_summary_csv(os.path.join(out_dir, "summary.csv"), aggregate(rows))
    log.info("wrote metrics.csv, timings.csv, summary.csv under %s", out_dir)
    return EXIT_RUNTIME if bad else EXIT_OK


def cmd_run(args):
    cfg = load_and_validate(args.config)
    scen = make_scenario(cfg.scenario, 0)
    n = scen.n_agents
    label = cfg.planner.scheme.value if cfg.planner.p < n - 1 \
        else FULL_GAME_LABEL
    cells = [(label, cfg.planner.p)]
    return _execute(cfg, cells, _seeds(cfg, args.seed), args.jobs, args.out)


def cmd_sweep(args):
    cfg = load_and_validate(args.config)
    schemes, p_values = _parse_filters(args, cfg)
    schemes = schemes if schemes is not None else cfg.sweep_schemes
    p_values = p_values if p_values is not None else cfg.sweep_p_values
    if not schemes or not p_values:
        raise ConfigError("sweep", "sweep needs schemes and p_values")
    n = make_scenario(cfg.scenario, 0).n_agents
    cells = sweep_cells(schemes, p_values, n,
                        include_full_game=cfg.include_full_game)
    return _execute(cfg, cells, _seeds(cfg, args.seed), args.jobs, args.out)


def cmd_validate(args):
    load_and_validate(args.config)
    print("OK", file=sys.stderr)
    return EXIT_OK


def cmd_replay(args):
    import csv
    import re

    cfg = load_and_validate(args.config)
    pattern = re.compile(r"traj_(?P<scheme>.+)_p(?P<p>\d+)_seed(?P<seed>\d+)\.csv$")
    rows = []
    names = sorted(os.listdir(args.out))
    for name in names:
        m = pattern.match(name)
        if not m:
            continue
        seed = int(m.group("seed"))
        scen = make_scenario(cfg.scenario, seed)
        d = scen.model.pos_dim
        with open(os.path.join(args.out, name), newline="",
                  encoding="utf-8") as fh:
            table = list(csv.DictReader(fh))
        steps = 1 + max(int(r["step"]) for r in table)
        n = 1 + max(int(r["agent"]) for r in table)
        pos = np.zeros((steps, n, d))
        for r in table:
            for i in range(d):
                pos[int(r["step"]), int(r["agent"]), i] = float(r[f"x{i}"])
        dmin = harness.min_pair_distance(pos, d)
        goal_err = float(np.mean(np.linalg.norm(
            pos[-1] - scen.goals[:, :d], axis=1)))
        rows.append({
            "scheme": m.group("scheme"), "p": int(m.group("p")), "seed": seed,
            "min_dist": dmin, "normalized_min_dist": dmin / cfg.scenario.cost.r_rad,
            "goal_err": goal_err, "mean_solve_iters": float("nan"),
            "convergence_rate": float("nan"),
        })
    if not rows:
        log.error("no trajectory files found in %s", args.out)
        return EXIT_RUNTIME
    rows.sort(key=lambda r: (str(r["scheme"]), r["p"], r["seed"]))
    write_metrics_csv(os.path.join(args.out, "metrics_replay.csv"), rows)
    log.info("wrote %s from %d trajectory files",
             os.path.join(args.out, "metrics_replay.csv"), len(rows))
    return EXIT_OK


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": cmd_run,
        "sweep": cmd_sweep,
        "validate-config": cmd_validate,
        "replay-metrics": cmd_replay,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        log.error("invalid config: %s", exc)
        return EXIT_CONFIG
    except Exception as exc:  # simulation/runtime failure
        log.error("failed: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
