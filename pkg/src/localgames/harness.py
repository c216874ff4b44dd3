"""Scenario generation, batch execution, metrics and persistence.

Experiments place agents on a grid, draw a random goal permutation with no
fixed point (every agent must move), and simulate the decentralized
receding-horizon loop.  The headline metric is the minimum distance
between any pair of agents over the whole run, normalized by the
repulsion radius.

File formats (stable column order, comma separated):

* metrics file -- one row per run, fully deterministic given the seed:
  ``scheme,p,seed,min_dist,normalized_min_dist,goal_err,mean_solve_iters,convergence_rate``
  where ``goal_err`` is the mean over agents of the final position error
  and ``mean_solve_iters`` the mean Newton iterations per local solve.
* timings file -- wall-clock companion, one row per run:
  ``scheme,p,seed,mean_solve_ms``.  Kept separate because wall time is not
  reproducible across invocations while the metrics file is byte-stable.
* summary file -- one row per (scheme, p) group:
  ``scheme,p,runs,mean_normalized_min_dist,std_normalized_min_dist,mean_min_dist,mean_goal_err,mean_solve_iters,convergence_rate``
  (std is the population standard deviation).
* trajectory file -- one row per (step, agent):
  ``step,agent,x0..x{ns-1},selected`` with ``selected`` a ``;``-joined
  sorted id list of the agents used for planning at that step.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (DiscretizationSpec, Quadrotor, QuadrotorParams,
                       make_model, step)
from .errors import AttitudeSingularityError
from .game import CostSpec
from .planner import Planner, PlannerConfig
from .selection import SelectionScheme, parse_scheme

FULL_GAME_LABEL = "FullGame"


@dataclass(frozen=True)
class CostParams:
    """Scenario-wide template expanded into per-agent cost specs."""

    q_pos: float = 1.0
    q_vel: float = 0.1
    q_att: float = 0.3      # quadrotor only: Euler angles
    q_rate: float = 0.05    # quadrotor only: body rates
    r_ctrl: float = 0.1
    mu: float = 10.0
    r_rad: float = 0.8
    terminal_weight: float = 10.0
    r_min: float = 0.0

    def build(self, model, goal_state) -> CostSpec:
        if model.state_dim == 4:
            qdiag = [self.q_pos] * 2 + [self.q_vel] * 2
        else:
            qdiag = ([self.q_pos] * 3 + [self.q_att] * 3
                     + [self.q_vel] * 3 + [self.q_rate] * 3)
        return CostSpec(Q=np.diag(qdiag),
                        R_ctrl=self.r_ctrl * np.eye(model.control_dim),
                        goal=np.asarray(goal_state, dtype=float),
                        mu=self.mu, r_rad=self.r_rad,
                        terminal_weight=self.terminal_weight,
                        pos_dim=model.pos_dim)


def parse_grid(grid):
    if isinstance(grid, str):
        dims = tuple(int(t) for t in grid.lower().split("x"))
    else:
        dims = tuple(int(t) for t in grid)
    if len(dims) not in (2, 3) or any(t < 1 for t in dims):
        raise ValueError(f"grid must be 2-D or 3-D with positive sides, got {grid!r}")
    return dims


@dataclass(frozen=True)
class ScenarioConfig:
    grid: object = "3x3"
    spacing: float = 2.0
    dynamics: str = "double_integrator"
    runs: int = 20
    steps: int = 150
    base_seed: int = 0
    start_jitter: float = 0.0        # fraction of spacing, breaks exact symmetry
    dt: float = 0.1
    cost: CostParams = field(default_factory=CostParams)
    quad_params: QuadrotorParams = field(default_factory=QuadrotorParams)
    control_bound: float = None      # double integrator acceleration box

    def __post_init__(self):
        if self.runs < 1 or self.steps < 0:
            raise ValueError("runs must be >= 1 and steps >= 0")
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")
        dims = parse_grid(self.grid)
        if len(dims) == 3 and self.dynamics != "quadrotor":
            raise ValueError("3-D grids require quadrotor dynamics")

    def make_dynamics(self):
        return make_model(self.dynamics, quad_params=self.quad_params,
                          control_bound=self.control_bound)


@dataclass
class Scenario:
    model: object
    dt: float
    ids: tuple
    starts: np.ndarray          # (N, ns)
    goals: np.ndarray           # (N, ns)
    cost_specs: dict
    seed: int
    config: ScenarioConfig

    @property
    def n_agents(self):
        return len(self.ids)


def grid_nodes(dims, spacing, pos_dim):
    """Lattice node coordinates; 2-D grids for a 3-D model sit one spacing up."""
    axes = [np.arange(n) * spacing for n in dims]
    pts = np.array(list(itertools.product(*axes)), dtype=float)
    if len(dims) == 2 and pos_dim == 3:
        pts = np.hstack([pts, np.full((len(pts), 1), spacing)])
    elif len(dims) == 3:
        pts[:, 2] += spacing
    return pts


def make_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """Starts at (optionally jittered) grid nodes, goals a derangement of nodes."""
    model = config.make_dynamics()
    dims = parse_grid(config.grid)
    nodes = grid_nodes(dims, config.spacing, model.pos_dim)
    n = len(nodes)
    rng = np.random.default_rng(seed)
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == np.arange(n)):
            break
    starts_pos = nodes.copy()
    if config.start_jitter > 0:
        starts_pos = starts_pos + config.start_jitter * config.spacing \
            * (rng.random(nodes.shape) - 0.5)
    starts = np.stack([model.rest_state(p) for p in starts_pos])
    goals = np.stack([model.rest_state(nodes[perm[i]]) for i in range(n)])
    ids = tuple(range(n))
    specs = {i: config.cost.build(model, goals[i]) for i in ids}
    return Scenario(model=model, dt=config.dt, ids=ids, starts=starts,
                    goals=goals, cost_specs=specs, seed=seed, config=config)


@dataclass
class RunRecord:
    """Everything one simulation produced; the source for all metrics.

    ``payload_bytes`` canonically serializes the deterministic content
    (states, controls, participant sets, convergence flags, seed); wall
    times and labels are excluded so runs can be compared bit-for-bit.
    """

    states: np.ndarray          # (S+1, N, ns)
    controls: np.ndarray        # (S, N, mu)
    selected: np.ndarray        # (S, N, p_max) sorted ids, -1 padded
    converged: np.ndarray       # (S, N) bool
    solve_times: np.ndarray     # (S, N) seconds
    newton_iterations: np.ndarray
    scheme_label: str
    p: int
    seed: int
    goals: np.ndarray
    r_rad: float
    early_termination: str = None

    @property
    def n_steps(self):
        return self.controls.shape[0]

    def payload_bytes(self) -> bytes:
        head = np.array([self.n_steps, self.states.shape[1], self.seed],
                        dtype=np.int64)
        return b"".join([head.tobytes(), self.states.tobytes(),
                         self.controls.tobytes(), self.selected.tobytes(),
                         self.converged.tobytes()])


def _planner_cell_config(base: PlannerConfig, scheme_label, n_agents):
    """Resolve a sweep cell label into a concrete planner config."""
    if scheme_label == FULL_GAME_LABEL:
        return replace(base, scheme=SelectionScheme.NEAREST_NEIGHBOR,
                       p=n_agents - 1)
    return replace(base, scheme=parse_scheme(scheme_label))


def run(scenario: Scenario, planner_config: PlannerConfig,
        steps: int = None, label: str = None) -> RunRecord:
    """Simulate the closed loop and record everything."""
    model = scenario.model
    disc = DiscretizationSpec(dt=scenario.dt)
    n = scenario.n_agents
    steps = scenario.config.steps if steps is None else steps
    configs = {i: planner_config for i in scenario.ids}
    planner = Planner(model, scenario.dt, scenario.cost_specs, configs)

    bounds = model.control_bounds()
    p_max = max(1, min(planner_config.p, n - 1))
    states = np.empty((steps + 1, n, model.state_dim))
    controls = np.zeros((steps, n, model.control_dim))
    selected = np.full((steps, n, p_max), -1, dtype=np.int64)
    converged = np.zeros((steps, n), dtype=bool)
    solve_times = np.zeros((steps, n))
    newton_iters = np.zeros((steps, n), dtype=np.int64)

    states[0] = scenario.starts
    prev = None
    last_u = None
    early = None
    done = 0
    for k in range(steps):
        try:
            ctrl, reports = planner.step(states[k], prev, last_u)
            u = np.stack([ctrl[i] for i in scenario.ids])
            if bounds is not None:
                u = np.clip(u, bounds[0], bounds[1])
            nxt = np.stack([step(model, disc, states[k, i], u[i])
                            for i in range(n)])
        except (AttitudeSingularityError, FloatingPointError, ValueError) as exc:
            early = f"step {k}: {exc}"
            break
        controls[k] = u
        for i, rep in enumerate(reports):
            ids_sel = sorted(rep.selected)
            selected[k, i, :len(ids_sel)] = ids_sel
            converged[k, i] = rep.converged
            solve_times[k, i] = rep.solve_time
            newton_iters[k, i] = rep.newton_iterations
        states[k + 1] = nxt
        prev = states[k]
        last_u = u
        done = k + 1

    return RunRecord(
        states=states[:done + 1], controls=controls[:done],
        selected=selected[:done], converged=converged[:done],
        solve_times=solve_times[:done], newton_iterations=newton_iters[:done],
        scheme_label=label or planner_config.scheme.value,
        p=planner_config.p, seed=scenario.seed, goals=scenario.goals,
        r_rad=next(iter(scenario.cost_specs.values())).r_rad,
        early_termination=early)


@dataclass
class RunMetrics:
    min_dist: float
    normalized_min_dist: float
    goal_errors: np.ndarray
    mean_solve_ms: float        # wall clock, not reproducible
    mean_solve_iters: float     # deterministic effort measure
    convergence_rate: float

    @property
    def goal_err(self):
        return float(np.mean(self.goal_errors))


def min_pair_distance(states, pos_dim) -> float:
    """Minimum over steps and unordered pairs of the position distance."""
    pos = states[:, :, :pos_dim]
    n = pos.shape[1]
    if n < 2:
        return float("inf")
    diff = pos[:, :, None, :] - pos[:, None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    iu = np.triu_indices(n, k=1)
    return float(dist[:, iu[0], iu[1]].min())


def compute_metrics(record: RunRecord, r_rad: float = None) -> RunMetrics:
    r_rad = record.r_rad if r_rad is None else r_rad
    pos_dim = 3 if record.states.shape[2] == 12 else 2
    dmin = min_pair_distance(record.states, pos_dim)
    final = record.states[-1, :, :pos_dim]
    goal_pos = record.goals[:, :pos_dim]
    goal_errors = np.linalg.norm(final - goal_pos, axis=1)
    replanned = record.solve_times > 0
    total_time = float(record.solve_times.sum())
    n_solves = int(replanned.sum())
    mean_ms = 1e3 * total_time / max(1, n_solves)
    iters = float(record.newton_iterations.sum()) / max(1, n_solves)
    conv = float(record.converged.mean()) if record.converged.size else 1.0
    return RunMetrics(min_dist=dmin, normalized_min_dist=dmin / r_rad,
                      goal_errors=goal_errors, mean_solve_ms=mean_ms,
                      mean_solve_iters=iters, convergence_rate=conv)


def metrics_row(record: RunRecord, metrics: RunMetrics) -> dict:
    return {
        "scheme": record.scheme_label,
        "p": record.p,
        "seed": record.seed,
        "min_dist": metrics.min_dist,
        "normalized_min_dist": metrics.normalized_min_dist,
        "goal_err": metrics.goal_err,
        "mean_solve_iters": metrics.mean_solve_iters,
        "mean_solve_ms": metrics.mean_solve_ms,
        "convergence_rate": metrics.convergence_rate,
    }


def aggregate(rows, keys=("scheme", "p")):
    """Mean/std of the normalized metric per group; reorder-invariant."""
    groups = {}
    for row in rows:
        groups.setdefault(tuple(row[k] for k in keys), []).append(row)
    out = []
    for gkey in sorted(groups, key=lambda t: tuple(str(x) for x in t)):
        grp = groups[gkey]
        vals = np.array([r["normalized_min_dist"] for r in grp], dtype=float)
        out.append({
            "scheme": gkey[0],
            "p": gkey[1],
            "runs": len(grp),
            "mean_normalized_min_dist": float(vals.mean()),
            "std_normalized_min_dist": float(vals.std()),
            "mean_min_dist": float(np.mean([r["min_dist"] for r in grp])),
            "mean_goal_err": float(np.mean([r["goal_err"] for r in grp])),
            "mean_solve_iters": float(np.mean([r["mean_solve_iters"]
                                               for r in grp])),
            "convergence_rate": float(np.mean([r["convergence_rate"]
                                               for r in grp])),
        })
    return out


# ---------------------------------------------------------------------------
# persistence

METRICS_COLUMNS = ("scheme", "p", "seed", "min_dist", "normalized_min_dist",
                   "goal_err", "mean_solve_iters", "convergence_rate")
TIMINGS_COLUMNS = ("scheme", "p", "seed", "mean_solve_ms")
SUMMARY_COLUMNS = ("scheme", "p", "runs", "mean_normalized_min_dist",
                   "std_normalized_min_dist", "mean_min_dist", "mean_goal_err",
                   "mean_solve_iters", "convergence_rate")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv_atomic(path, columns, rows):
    """Write a CSV via a temp file + rename so readers never see a partial file."""
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in columns) + "\n")
    os.replace(tmp, path)


def write_metrics_csv(path, rows):
    write_csv_atomic(path, METRICS_COLUMNS, rows)


def write_timings_csv(path, rows):
    write_csv_atomic(path, TIMINGS_COLUMNS, rows)


def write_summary_csv(path, agg_rows):
    write_csv_atomic(path, SUMMARY_COLUMNS, agg_rows)


def trajectory_rows(record: RunRecord):
    ns = record.states.shape[2]
    cols = ["step", "agent"] + [f"x{i}" for i in range(ns)] + ["selected"]
    rows = []
    for k in range(record.states.shape[0]):
        for a in range(record.states.shape[1]):
            row = {"step": k, "agent": a, "selected": ""}
            for i in range(ns):
                row[f"x{i}"] = float(record.states[k, a, i])
            if k < record.selected.shape[0]:
                ids = [str(s) for s in record.selected[k, a] if s >= 0]
                row["selected"] = ";".join(ids)
            rows.append(row)
    return cols, rows


def write_trajectory_csv(path, record: RunRecord):
    cols, rows = trajectory_rows(record)
    write_csv_atomic(path, tuple(cols), rows)


def traj_filename(scheme_label, p, seed):
    return f"traj_{scheme_label}_p{p}_seed{seed}.csv"


# ---------------------------------------------------------------------------
# batch execution

def run_cell(scenario_cfg: ScenarioConfig, base_planner: PlannerConfig,
             scheme_label: str, p: int, seed: int, out_dir=None,
             write_traj=False):
    """One (scheme, p, seed) cell: simulate, compute metrics, persist."""
    scenario = make_scenario(scenario_cfg, seed)
    cfg = _planner_cell_config(replace(base_planner, p=p), scheme_label,
                               scenario.n_agents)
    record = run(scenario, cfg, label=scheme_label)
    row = metrics_row(record, compute_metrics(record))
    row["scheme"] = scheme_label
    row["p"] = p
    row["_early"] = record.early_termination or ""
    if write_traj and out_dir is not None:
        write_trajectory_csv(
            os.path.join(out_dir, traj_filename(scheme_label, p, seed)), record)
    return row


def _run_cell_star(args):
    return run_cell(*args)


def run_batch(scenario_cfg: ScenarioConfig, base_planner: PlannerConfig,
              cells, seeds, jobs: int = 0, out_dir=None, write_traj=False):
    """Run every (scheme, p) cell against the same seed list.

    ``jobs`` >= 1 uses that many spawned worker processes pinned to one
    BLAS thread each, which keeps results byte-identical regardless of the
    degree of parallelism; ``jobs=0`` runs inline in this process.
    Returns per-run metric rows sorted by (scheme, p, seed).
    """
    tasks = [(scenario_cfg, base_planner, label, p, seed, out_dir, write_traj)
             for (label, p) in cells for seed in seeds]
    if jobs and jobs >= 1:
        import multiprocessing as mp
        os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
        os.environ.setdefault("OMP_NUM_THREADS", "1")
        ctx = mp.get_context("spawn")
        with ctx.Pool(processes=jobs) as pool:
            rows = pool.map(_run_cell_star, tasks)
    else:
        rows = [run_cell(*t) for t in tasks]
    rows.sort(key=lambda r: (str(r["scheme"]), r["p"], r["seed"]))
    return rows


def sweep_cells(schemes, p_values, n_agents, include_full_game=False):
    cells = [(parse_scheme(s).value, p) for s in schemes for p in p_values]
    if include_full_game:
        cells.append((FULL_GAME_LABEL, n_agents - 1))
    return cells
