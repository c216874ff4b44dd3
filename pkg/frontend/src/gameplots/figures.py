"""Figures from experiment CSV outputs.

Two figure kinds are supported:

* metric-vs-p: one line per selection scheme over the game size p, with
  error bars from the summary table's std column, and an optional dotted
  black reference line at the full-game value.
* trajectory snapshots: a panel grid of instantaneous agent positions at
  chosen steps with trailing traces over the last 10 steps; optionally the
  ego agent is highlighted in blue, the agents it planned with in red and
  the ignored ones in green.

Only the documented CSV formats are read; nothing here imports the
simulation code.  Rendering is deterministic: fixed style, no clock or
randomness.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FULL_GAME_LABEL = "FullGame"

# fixed scheme colors for cross-figure consistency
SCHEME_COLORS = {
    "NearestNeighbor": "tab:blue",
    "CostEvolution": "tab:orange",
    "Jacobian": "tab:purple",
    "Hessian": "tab:brown",
    "BF": "tab:green",
    "CBF": "tab:red",
}
TRACE_LENGTH = 10


@dataclass
class FigureSpec:
    kind: str = "metric-vs-p"           # or "trajectory-snapshots"
    summary_path: str = None
    trajectory_path: str = None
    schemes: list = None                # optional scheme filter
    steps: list = None                  # snapshot timesteps
    ego: int = None                     # highlighted agent
    out_path: str = None
    dpi: int = 130


class SchemaError(ValueError):
    """Input file does not match the documented column layout."""


def read_csv_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def read_summary(path):
    rows = read_csv_rows(path)
    required = {"scheme", "p", "mean_normalized_min_dist",
                "std_normalized_min_dist"}
    if not rows:
        raise SchemaError(f"{path}: empty summary table")
    missing = required - set(rows[0])
    if missing:
        raise SchemaError(f"{path}: missing columns {sorted(missing)}")
    for row in rows:
        row["p"] = int(row["p"])
        row["mean_normalized_min_dist"] = float(row["mean_normalized_min_dist"])
        row["std_normalized_min_dist"] = float(row["std_normalized_min_dist"])
    return rows


def plot_metric_vs_p(summary_path, spec: FigureSpec):
    """Normalized-min-distance-vs-p lines, one per scheme."""
    rows = read_summary(summary_path)
    schemes = spec.schemes
    grouped = {}
    full_game = None
    for row in rows:
        if row["scheme"] == FULL_GAME_LABEL:
            full_game = row
            continue
        if schemes and row["scheme"] not in schemes:
            continue
        grouped.setdefault(row["scheme"], []).append(row)
    if not grouped:
        raise SchemaError(f"{summary_path}: no matching (scheme, p) groups"
                          f" for filter {schemes}")

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for scheme in sorted(grouped):
        entries = sorted(grouped[scheme], key=lambda r: r["p"])
        ps = [r["p"] for r in entries]
        means = [r["mean_normalized_min_dist"] for r in entries]
        stds = [r["std_normalized_min_dist"] for r in entries]
        ax.errorbar(ps, means, yerr=stds, marker="o", capsize=3,
                    label=scheme, color=SCHEME_COLORS.get(scheme))
    if full_game is not None:
        ax.axhline(full_game["mean_normalized_min_dist"], color="black",
                   linestyle=":", label="full game")
    ax.set_xlabel("p (other players per game)")
    ax.set_ylabel("mean normalized min distance")
    ax.legend()
    ax.grid(True, linestyle="--", alpha=0.4)
    fig.tight_layout()
    if spec.out_path:
        fig.savefig(spec.out_path, dpi=spec.dpi, metadata={"Software": None})
    return fig


def extract_series(fig):
    """Plotted (scheme -> (p, mean)) data, for round-trip verification."""
    ax = fig.axes[0]
    out = {}
    for cont in getattr(ax, "containers", []):
        label = cont.get_label()
        if not label or label.startswith("_"):
            continue
        line = cont[0]  # ErrorbarContainer: (data line, caps, bars)
        out[label] = (np.asarray(line.get_xdata(), dtype=float),
                      np.asarray(line.get_ydata(), dtype=float))
    for line in ax.get_lines():
        label = line.get_label()
        if label.startswith("_") or label == "full game" or label in out:
            continue
        out[label] = (np.asarray(line.get_xdata(), dtype=float),
                      np.asarray(line.get_ydata(), dtype=float))
    return out


# ---------------------------------------------------------------------------
# trajectory snapshots

def read_trajectories(path):
    """Trajectory table -> (positions (S+1, N, d), selected sets, state dim)."""
    rows = read_csv_rows(path)
    if not rows:
        raise SchemaError(f"{path}: empty trajectory table")
    state_cols = sorted((c for c in rows[0] if c.startswith("x")),
                        key=lambda c: int(c[1:]))
    if not state_cols or "step" not in rows[0] or "agent" not in rows[0]:
        raise SchemaError(f"{path}: expected step, agent, x0.. columns")
    ns = len(state_cols)
    d = 3 if ns == 12 else 2
    n_steps = 1 + max(int(r["step"]) for r in rows)
    n_agents = 1 + max(int(r["agent"]) for r in rows)
    pos = np.zeros((n_steps, n_agents, d))
    selected = {}
    for r in rows:
        k, a = int(r["step"]), int(r["agent"])
        pos[k, a] = [float(r[f"x{i}"]) for i in range(d)]
        raw = (r.get("selected") or "").strip()
        if raw:
            selected[(k, a)] = tuple(int(t) for t in raw.split(";"))
    return pos, selected, d


def trailing_trace(positions, step, length=TRACE_LENGTH):
    """Positions over the last ``length`` steps before ``step``."""
    return positions[max(0, step - length):step]


def plot_trajectories(trajectory_path, spec: FigureSpec):
    """Panel grid of snapshots with 10-step trailing traces."""
    pos, selected, d = read_trajectories(trajectory_path)
    n_steps, n_agents = pos.shape[0], pos.shape[1]
    steps = spec.steps
    if not steps:
        steps = [round(i * (n_steps - 1) / 3) for i in range(4)]
    for k in steps:
        if not (0 <= k < n_steps):
            raise ValueError(f"timestep {k} out of range 0..{n_steps - 1}")

    ncols = math.ceil(math.sqrt(len(steps)))
    nrows = math.ceil(len(steps) / ncols)
    subplot_kw = {"projection": "3d"} if d == 3 else {}
    fig, axes = plt.subplots(nrows, ncols, figsize=(4.0 * ncols, 4.0 * nrows),
                             subplot_kw=subplot_kw, squeeze=False)
    for idx, k in enumerate(steps):
        ax = axes[idx // ncols][idx % ncols]
        sel = selected.get((min(k, n_steps - 2), spec.ego), ()) \
            if spec.ego is not None else ()
        for a in range(n_agents):
            if spec.ego is None:
                color = plt.cm.tab20(a % 20)
            elif a == spec.ego:
                color = "tab:blue"
            elif a in sel:
                color = "tab:red"
            else:
                color = "tab:green"
            trace = trailing_trace(pos[:, a], k)
            line = np.vstack([trace, pos[k, a][None]])
            ax.plot(*line.T, color=color, linewidth=1.0, alpha=0.8)
            ax.scatter(*pos[k, a], color=color, s=30)
        ax.set_title(f"step {k}")
        if d == 2:
            ax.set_aspect("equal", adjustable="datalim")
        ax.grid(True, linestyle="--", alpha=0.3)
    for idx in range(len(steps), nrows * ncols):
        axes[idx // ncols][idx % ncols].set_axis_off()
    fig.tight_layout()
    if spec.out_path:
        fig.savefig(spec.out_path, dpi=spec.dpi, metadata={"Software": None})
    return fig
