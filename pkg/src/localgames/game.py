"""Data model and cost evaluation for the local dynamic games.

A game couples a set of participants through (i) soft pairwise repulsion
terms in every player's stage cost, (ii) optional hard minimum-distance
constraints, and (iii) optional control box bounds.  Every player tracks
its own goal state under a shared dynamics model.

The per-step cost of player i is

    (x_i - goal_i)' Q (x_i - goal_i) + u_i' R u_i
        + sum_j (mu/2) * max(0, r_rad - ||p_i - p_j||)^2

with distances taken over position components only.  The repulsion term
vanishes beyond ``r_rad``; the inverse-square ``collision_proxy`` stays
informative at every distance, which is what several selection schemes
rank with.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import DiscretizationSpec
from .errors import DegenerateGeometryError

# Below this separation the inverse-square proxy (and the repulsion
# gradient direction) is treated as degenerate.
POSITION_EPS = 1e-9


@dataclass(frozen=True)
class CostSpec:
    """Quadratic tracking cost plus soft pairwise repulsion for one player."""

    Q: np.ndarray                 # state weight, PSD, (ns, ns)
    R_ctrl: np.ndarray            # control weight, PD, (mu, mu)
    goal: np.ndarray              # target state, (ns,)
    mu: float = 10.0              # repulsion weight
    r_rad: float = 0.8            # repulsion radius (m)
    terminal_weight: float = 10.0
    pos_dim: int = 2              # leading state components that are positions

    def __post_init__(self):
        object.__setattr__(self, "Q", np.asarray(self.Q, dtype=float))
        object.__setattr__(self, "R_ctrl", np.asarray(self.R_ctrl, dtype=float))
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=float))
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")
        if self.r_rad <= 0:
            raise ValueError("r_rad must be positive")
        if self.Q.shape[0] != self.Q.shape[1] or self.Q.shape[0] != self.goal.shape[0]:
            raise ValueError("Q and goal dimensions disagree")


@dataclass(frozen=True)
class GameProblem:
    """A fully assembled local game.

    ``participants`` lists agent ids, the owning (ego) agent first by
    convention; nothing in the game itself is asymmetric.  ``initial_state``
    is (P, ns) in participant order, ``costs`` one CostSpec per participant.
    ``r_min`` > 0 enables hard pairwise distance constraints; control box
    bounds come from the model unless overridden.
    """

    participants: tuple
    horizon: int
    model: object
    disc: DiscretizationSpec
    costs: tuple
    initial_state: np.ndarray
    r_min: float = 0.0
    control_bounds: object = "model"  # "model" | None | (lb, ub)

    def __post_init__(self):
        object.__setattr__(self, "participants", tuple(self.participants))
        object.__setattr__(self, "costs", tuple(self.costs))
        object.__setattr__(self, "initial_state",
                           np.asarray(self.initial_state, dtype=float))
        if len(self.participants) < 1:
            raise ValueError("need at least one participant")
        if len(set(self.participants)) != len(self.participants):
            raise ValueError("participant ids must be unique")
        if self.horizon < 2:
            raise ValueError("horizon must be at least 2")
        if len(self.costs) != len(self.participants):
            raise ValueError("one CostSpec per participant required")
        expected = (len(self.participants), self.model.state_dim)
        if self.initial_state.shape != expected:
            raise ValueError(
                f"initial_state must have shape {expected}, got {self.initial_state.shape}")
        if self.control_bounds == "model":
            object.__setattr__(self, "control_bounds", self.model.control_bounds())

    @property
    def n_players(self):
        return len(self.participants)

    def rollout(self, policies):
        """Roll the joint system forward under per-player policies."""
        P = self.n_players
        T = self.horizon
        policies = np.asarray(policies, dtype=float)
        if policies.shape != (P, T - 1, self.model.control_dim):
            raise ValueError(
                f"policies must have shape {(P, T - 1, self.model.control_dim)}, "
                f"got {policies.shape}")
        states = np.empty((T, P, self.model.state_dim))
        states[0] = self.initial_state
        for k in range(T - 1):
            states[k + 1] = self.model.step_batch(states[k], policies[:, k, :],
                                                  self.disc.dt)
        return JointTrajectory(states=states, policies=policies)


@dataclass
class JointTrajectory:
    """Joint states (T, P, ns) plus per-player policies (P, T-1, mu)."""

    states: np.ndarray
    policies: np.ndarray

    @property
    def horizon(self):
        return self.states.shape[0]

    @property
    def n_players(self):
        return self.states.shape[1]


def repulsion_cost(mu, r_rad, dists):
    """Soft pairwise repulsion (mu/2) * max(0, r_rad - d)^2, elementwise."""
    gap = np.maximum(0.0, r_rad - np.asarray(dists, dtype=float))
    return 0.5 * mu * gap * gap


def stage_cost(spec: CostSpec, agent_state, control, other_states) -> float:
    """One player's cost at a single step against the listed other agents."""
    x = np.asarray(agent_state, dtype=float)
    u = np.asarray(control, dtype=float)
    others = np.asarray(other_states, dtype=float).reshape(-1, x.shape[0])
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))
            and np.all(np.isfinite(others))):
        raise ValueError("stage_cost inputs must be finite")
    e = x - spec.goal
    total = float(e @ spec.Q @ e + u @ spec.R_ctrl @ u)
    if len(others):
        d = np.linalg.norm(others[:, :spec.pos_dim] - x[:spec.pos_dim], axis=1)
        total += float(np.sum(repulsion_cost(spec.mu, spec.r_rad, d)))
    return total


def terminal_cost(spec: CostSpec, agent_state) -> float:
    e = np.asarray(agent_state, dtype=float) - spec.goal
    return spec.terminal_weight * float(e @ spec.Q @ e)


def total_cost(spec: CostSpec, trajectory: JointTrajectory, agent_index: int) -> float:
    """Terminal cost plus summed stage costs for one player of a trajectory."""
    states = trajectory.states
    T = trajectory.horizon
    mask = np.arange(trajectory.n_players) != agent_index
    total = terminal_cost(spec, states[T - 1, agent_index])
    for k in range(T - 1):
        total += stage_cost(spec, states[k, agent_index],
                            trajectory.policies[agent_index, k],
                            states[k, mask])
    return total


def collision_proxy(mu, ego_position, other_positions) -> float:
    """Inverse-square interaction proxy sum_j mu / ||p_i - p_j||^2."""
    p = np.asarray(ego_position, dtype=float)
    others = np.asarray(other_positions, dtype=float).reshape(-1, p.shape[0])
    d2 = np.sum((others - p) ** 2, axis=1)
    if np.any(d2 < POSITION_EPS ** 2):
        raise DegenerateGeometryError("coincident agents in collision proxy")
    return float(np.sum(mu / d2))


def pair_indices(n):
    """Unordered index pairs (i < j) among n agents."""
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def inequality_residuals(problem: GameProblem, trajectory: JointTrajectory):
    """Stacked inequality constraint values, <= 0 when satisfied.

    Layout: first the pairwise blocks r_min^2 - ||p_i - p_j||^2 for every
    unordered pair at every decided step k = 1..T-1 (present only when
    r_min > 0); then control bound residuals u - ub and lb - u for every
    step, player and coordinate (present only when bounds are set).
    Time-major within each block.
    """
    vals = []
    d = problem.model.pos_dim
    if problem.r_min > 0:
        pos = trajectory.states[1:, :, :d]           # (T-1, P, d)
        for k in range(pos.shape[0]):
            for i, j in pair_indices(problem.n_players):
                sep = pos[k, i] - pos[k, j]
                vals.append(problem.r_min ** 2 - float(sep @ sep))
    if problem.control_bounds is not None:
        lb, ub = problem.control_bounds
        u = trajectory.policies                       # (P, T-1, mu)
        for k in range(u.shape[1]):
            for a in range(problem.n_players):
                vals.extend(u[a, k] - ub)
                vals.extend(lb - u[a, k])
    return np.asarray(vals, dtype=float)
