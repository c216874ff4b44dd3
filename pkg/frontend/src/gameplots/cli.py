"""Command line for figure generation.

Examples:
    gameplots --kind metric-vs-p --summary out/summary.csv --out fig2.png
    gameplots --kind trajectory-snapshots --trajectories out/traj_CBF_p2_seed0.csv \
        --steps 10,25,40,55 --ego 4 --out traj.png
"""

import argparse
import sys

from .figures import FigureSpec, SchemaError, plot_metric_vs_p, plot_trajectories


def build_parser():
    p = argparse.ArgumentParser(prog="gameplots",
                                description="Render experiment figures")
    p.add_argument("--kind", choices=["metric-vs-p", "trajectory-snapshots"],
                   required=True)
    p.add_argument("--summary", help="summary.csv from the experiment harness")
    p.add_argument("--trajectories", help="per-run trajectory csv")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--schemes", default=None,
                   help="comma-separated scheme filter (metric-vs-p)")
    p.add_argument("--steps", default=None,
                   help="comma-separated snapshot timesteps")
    p.add_argument("--ego", type=int, default=None,
                   help="agent id to highlight with its selected players")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(
        kind=args.kind,
        schemes=[s for s in args.schemes.split(",") if s] if args.schemes else None,
        steps=[int(t) for t in args.steps.split(",") if t] if args.steps else None,
        ego=args.ego,
        out_path=args.out,
    )
    try:
        if args.kind == "metric-vs-p":
            if not args.summary:
                raise SchemaError("--summary is required for metric-vs-p")
            plot_metric_vs_p(args.summary, spec)
        else:
            if not args.trajectories:
                raise SchemaError("--trajectories is required for snapshots")
            plot_trajectories(args.trajectories, spec)
    except (SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
