"""Decentralized receding-horizon planning with local games.

At every step each agent ranks the others with its selection scheme,
assembles a game over itself plus the top-p agents, solves it, and applies
only the first control of its own equilibrium policy.  Different agents
may (and usually do) hold mismatched participant sets.

Games are assembled over participants in sorted-id order, so two egos that
selected the same set solve literally the same problem; such solves are
shared.  This keeps a sweep's full-game cells (p >= N-1) bit-identical
across selection schemes and avoids redundant work.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverNumericalError
from .game import CostSpec, GameProblem
from .dynamics import DiscretizationSpec
from .selection import (InteractionSnapshot, SelectionParams, SelectionScheme,
                        parse_scheme, select_players)
from .solver import SolverConfig, solve


@dataclass(frozen=True)
class PlannerConfig:
    p: int = 1
    scheme: SelectionScheme = SelectionScheme.NEAREST_NEIGHBOR
    horizon: int = 10
    replan_period: int = 1
    warm_start: bool = True
    solver: SolverConfig = field(default_factory=SolverConfig)
    selection: SelectionParams = field(default_factory=SelectionParams)

    def __post_init__(self):
        object.__setattr__(self, "scheme", parse_scheme(self.scheme))
        if self.p < 0:
            raise ValueError("p must be nonnegative")
        if self.horizon < 2:
            raise ValueError("horizon must be at least 2")
        if self.replan_period < 1:
            raise ValueError("replan period must be at least 1")


@dataclass
class LocalGameReport:
    ego: object
    selected: tuple
    converged: bool
    kkt_residual: float
    newton_iterations: int
    solve_time: float
    fallback: bool = False
    replanned: bool = True


def shift_warm_start(solution, participants):
    """Shift a solved game's policies one step for the next solve.

    The last control of each participant is duplicated; states are
    re-rolled by the next solve's initialization.  Returns a mapping
    participant id -> (T-1, control_dim) policy.
    """
    pol = solution.trajectory.policies
    shifted = np.concatenate([pol[:, 1:, :], pol[:, -1:, :]], axis=1)
    return {pid: shifted[i].copy() for i, pid in enumerate(participants)}


def _shift_zero_pad(policy):
    out = np.zeros_like(policy)
    out[:-1] = policy[1:]
    return out


def _assemble_warm(warm_for_ego, participants, horizon, model):
    """Stack per-participant warm rows, cold rows where history is missing."""
    if not warm_for_ego:
        return None
    rows = []
    any_known = False
    for pid in participants:
        row = warm_for_ego.get(pid)
        if row is not None and row.shape == (horizon - 1, model.control_dim):
            rows.append(row)
            any_known = True
        else:
            rows.append(np.tile(model.rest_control(), (horizon - 1, 1)))
    if not any_known:
        return None
    return np.stack(rows)


def plan_step(snapshot: InteractionSnapshot, cost_specs: dict,
              configs: dict, warm_starts: dict | None = None,
              step_index: int = 0):
    """One synchronized planning round for every agent.

    Returns (controls, reports, new_warm_starts): per-agent first controls
    keyed by id, one LocalGameReport per agent, and the shifted policies to
    warm-start the next round.  Agents whose replan period is not due keep
    consuming their stored plan.  A solver numerical failure makes the
    agent fall back to its previous plan shifted one step and zero-padded.
    """
    ids = sorted(snapshot.ids)
    warm_starts = warm_starts or {}
    model = snapshot.model
    disc = DiscretizationSpec(dt=snapshot.dt)

    controls = {}
    reports = {}
    new_warms = {}

    # group egos that are due to replan by the exact game they will solve
    groups = {}
    order = []
    for ego in ids:
        cfg = configs[ego]
        if step_index % cfg.replan_period != 0 and warm_starts.get(ego):
            # follow the stored plan; duplicate-pad the shift
            own = warm_starts[ego].get(ego)
            u = own[0].copy() if own is not None else model.rest_control()
            controls[ego] = u
            new_warms[ego] = {pid: np.concatenate([row[1:], row[-1:]])
                              for pid, row in warm_starts[ego].items()}
            reports[ego] = LocalGameReport(ego=ego, selected=(), converged=True,
                                           kkt_residual=0.0, newton_iterations=0,
                                           solve_time=0.0, replanned=False)
            continue
        selected = select_players(snapshot, cfg.scheme, cfg.selection, ego, cfg.p)
        participants = tuple(sorted([ego] + list(selected)))
        warm = _assemble_warm(warm_starts.get(ego), participants,
                              cfg.horizon, model) if cfg.warm_start else None
        warm_key = warm.tobytes() if warm is not None else b""
        key = (participants, cfg.horizon, cfg.solver, warm_key)
        if key not in groups:
            groups[key] = {"egos": [], "warm": warm, "selected": {}}
            order.append(key)
        groups[key]["egos"].append(ego)
        groups[key]["selected"][ego] = tuple(selected)

    for key in order:
        participants, horizon, solver_cfg, _ = key
        grp = groups[key]
        idx = [snapshot.index(pid) for pid in participants]
        problem = GameProblem(
            participants=participants,
            horizon=horizon,
            model=model,
            disc=disc,
            costs=tuple(cost_specs[pid] for pid in participants),
            initial_state=snapshot.states[idx],
        )
        t0 = time.perf_counter()
        failure = None
        try:
            sol = solve(problem, solver_cfg, warm_start=grp["warm"])
        except SolverNumericalError as exc:
            failure = exc
        elapsed = time.perf_counter() - t0
        share = elapsed / len(grp["egos"])

        for ego in grp["egos"]:
            cfg = configs[ego]
            if failure is not None:
                own = (warm_starts.get(ego) or {}).get(ego)
                controls[ego] = own[0].copy() if own is not None \
                    else model.rest_control()
                new_warms[ego] = {pid: _shift_zero_pad(row)
                                  for pid, row in (warm_starts.get(ego) or {}).items()}
                reports[ego] = LocalGameReport(
                    ego=ego, selected=grp["selected"][ego], converged=False,
                    kkt_residual=float("inf"), newton_iterations=0,
                    solve_time=share, fallback=True)
                continue
            me = participants.index(ego)
            controls[ego] = sol.trajectory.policies[me, 0].copy()
            new_warms[ego] = shift_warm_start(sol, participants) \
                if cfg.warm_start else {}
            reports[ego] = LocalGameReport(
                ego=ego, selected=grp["selected"][ego], converged=sol.converged,
                kkt_residual=sol.kkt_residual,
                newton_iterations=sol.newton_iterations, solve_time=share)

    return controls, [reports[i] for i in ids], new_warms


class Planner:
    """Stateful wrapper that carries warm starts across simulation steps."""

    def __init__(self, model, dt: float, cost_specs: dict, configs: dict):
        self.model = model
        self.dt = dt
        self.cost_specs = dict(cost_specs)
        self.configs = dict(configs)
        self.warm_starts = {}
        self.step_index = 0

    def step(self, states, prev_states=None, last_controls=None):
        ids = sorted(self.cost_specs)
        snapshot = InteractionSnapshot(
            ids=ids, states=states, model=self.model, dt=self.dt,
            prev_states=prev_states, last_controls=last_controls)
        controls, reports, self.warm_starts = plan_step(
            snapshot, self.cost_specs, self.configs, self.warm_starts,
            self.step_index)
        self.step_index += 1
        return controls, reports
