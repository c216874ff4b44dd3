"""Pairwise interaction scoring and top-p player selection.

Six schemes rank the other agents from an ego agent's point of view:

* ``NEAREST_NEIGHBOR`` -- current Euclidean distance (closer = higher
  priority).
* ``COST_EVOLUTION`` -- one-step increment of the inverse-square
  interaction proxy; agents whose proxy cost grew fastest come first.
* ``JACOBIAN`` / ``HESSIAN`` -- norm of the finite-difference sensitivity
  of the ego's interaction proxy to the other agent's (and, for the
  Hessian, also the ego's own) last control, propagated one step through
  the dynamics; larger = higher priority.
* ``BF`` / ``CBF`` -- first/second-order barrier values built from
  h = ||p_i - p_j||^2 - r^2 with linear class-K weight kappa; smaller
  (closer to constraint activation) = higher priority.

Scores depend only on relative positions/velocities/accelerations, so
selection is invariant under rigid translations of the whole scene.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError
from .game import POSITION_EPS


class SelectionScheme(enum.Enum):
    NEAREST_NEIGHBOR = "NearestNeighbor"
    COST_EVOLUTION = "CostEvolution"
    JACOBIAN = "Jacobian"
    HESSIAN = "Hessian"
    BF = "BF"
    CBF = "CBF"

    @property
    def ascending(self) -> bool:
        """True when a smaller score means higher selection priority."""
        return self in (SelectionScheme.NEAREST_NEIGHBOR, SelectionScheme.BF,
                        SelectionScheme.CBF)


_ALIASES = {
    "nn": SelectionScheme.NEAREST_NEIGHBOR,
    "nearestneighbor": SelectionScheme.NEAREST_NEIGHBOR,
    "nearest_neighbor": SelectionScheme.NEAREST_NEIGHBOR,
    "ce": SelectionScheme.COST_EVOLUTION,
    "costevolution": SelectionScheme.COST_EVOLUTION,
    "cost_evolution": SelectionScheme.COST_EVOLUTION,
    "jacobian": SelectionScheme.JACOBIAN,
    "j": SelectionScheme.JACOBIAN,
    "hessian": SelectionScheme.HESSIAN,
    "h": SelectionScheme.HESSIAN,
    "bf": SelectionScheme.BF,
    "cbf": SelectionScheme.CBF,
}


def parse_scheme(name) -> SelectionScheme:
    if isinstance(name, SelectionScheme):
        return name
    key = str(name).strip().lower()
    if key not in _ALIASES:
        raise ValueError(f"unknown selection scheme {name!r}")
    return _ALIASES[key]


@dataclass(frozen=True)
class SelectionParams:
    kappa: float = 5.0       # class-K slope for BF/CBF
    fd_step: float = 1e-4    # finite-difference step for Jacobian/Hessian
    mu: float = 10.0         # proxy weight, from the cost spec
    r_rad: float = 0.8       # repulsion radius, from the cost spec

    def __post_init__(self):
        if self.kappa <= 0 or self.fd_step <= 0:
            raise ValueError("kappa and fd_step must be positive")


@dataclass(frozen=True)
class InteractionSnapshot:
    """World information the scoring functions read.

    ``states`` are the current full states, index-aligned with ``ids``.
    ``prev_states`` and ``last_controls`` describe the transition into the
    current step; both are None at the first step, in which case schemes
    that need history fall back as documented in ``select_players`` and
    accelerations are taken at each model's rest control.
    """

    ids: tuple
    states: np.ndarray
    model: object
    dt: float = 0.1
    prev_states: np.ndarray = None
    last_controls: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "states", np.asarray(self.states, dtype=float))
        if self.prev_states is not None:
            object.__setattr__(self, "prev_states",
                               np.asarray(self.prev_states, dtype=float))
        if self.last_controls is not None:
            object.__setattr__(self, "last_controls",
                               np.asarray(self.last_controls, dtype=float))

    def index(self, agent_id) -> int:
        try:
            return self.ids.index(agent_id)
        except ValueError:
            raise KeyError(f"unknown agent id {agent_id!r}") from None

    def position(self, agent_id):
        return self.states[self.index(agent_id), self.model.pos_slice]

    def velocity(self, agent_id):
        return self.states[self.index(agent_id), self.model.vel_slice]

    def last_control(self, agent_id):
        if self.last_controls is None:
            return self.model.rest_control()
        return self.last_controls[self.index(agent_id)]

    def acceleration(self, agent_id):
        i = self.index(agent_id)
        return self.model.acceleration(self.states[i], self.last_control(agent_id))


def score_nearest_neighbor(snapshot: InteractionSnapshot, ego, other) -> float:
    """Current distance; ascending priority."""
    return float(np.linalg.norm(snapshot.position(ego) - snapshot.position(other)))


def score_cost_evolution(snapshot: InteractionSnapshot, ego, other,
                         mu: float = 10.0) -> float:
    """One-step increment of the inverse-square proxy; descending priority.

    Negative values mean the other agent moved away over the last step.
    """
    if snapshot.prev_states is None:
        raise ValueError("cost-evolution score needs the previous step")
    i, j = snapshot.index(ego), snapshot.index(other)
    sl = snapshot.model.pos_slice
    d2_now = float(np.sum((snapshot.states[i, sl] - snapshot.states[j, sl]) ** 2))
    d2_prev = float(np.sum((snapshot.prev_states[i, sl]
                            - snapshot.prev_states[j, sl]) ** 2))
    if min(d2_now, d2_prev) < POSITION_EPS ** 2:
        raise DegenerateGeometryError("coincident agents in cost evolution")
    return mu / d2_now - mu / d2_prev


def _propagated_position(snapshot, idx, control):
    nxt = snapshot.model.step_batch(snapshot.prev_states[idx][None, :],
                                    np.asarray(control, dtype=float)[None, :],
                                    snapshot.dt)[0]
    return nxt[snapshot.model.pos_slice]


def _proxy(mu, p_ego, p_other):
    d2 = float(np.sum((p_ego - p_other) ** 2))
    if d2 < POSITION_EPS ** 2:
        raise DegenerateGeometryError("coincident agents after propagation")
    return mu / d2


def score_jacobian(snapshot: InteractionSnapshot, ego, other,
                   fd_step: float = 1e-4, mu: float = 10.0) -> float:
    """Norm of d(proxy)/d(other's control) through a one-step propagation.

    Controls are perturbed around the ones applied at the previous state;
    central differences, so the truncation error is O(fd_step^2).
    Descending priority.
    """
    if snapshot.prev_states is None:
        raise ValueError("jacobian score needs the previous step")
    i, j = snapshot.index(ego), snapshot.index(other)
    u_other = snapshot.last_control(other)
    p_ego = _propagated_position(snapshot, i, snapshot.last_control(ego))
    m = u_other.shape[0]
    grad = np.empty(m)
    for c in range(m):
        dv = np.zeros(m)
        dv[c] = fd_step
        cp = _proxy(mu, p_ego, _propagated_position(snapshot, j, u_other + dv))
        cm = _proxy(mu, p_ego, _propagated_position(snapshot, j, u_other - dv))
        grad[c] = (cp - cm) / (2.0 * fd_step)
    return float(np.linalg.norm(grad))


def score_hessian(snapshot: InteractionSnapshot, ego, other,
                  fd_step: float = 1e-4, mu: float = 10.0) -> float:
    """Frobenius norm of the mixed derivative d^2(proxy)/d(u_ego)d(u_other).

    Four-point central stencil per entry, one-step propagation of both
    agents from the previous state.  Descending priority.
    """
    if snapshot.prev_states is None:
        raise ValueError("hessian score needs the previous step")
    i, j = snapshot.index(ego), snapshot.index(other)
    u_ego = snapshot.last_control(ego)
    u_other = snapshot.last_control(other)
    m_i, m_j = u_ego.shape[0], u_other.shape[0]

    def proxy_at(de, do):
        return _proxy(mu,
                      _propagated_position(snapshot, i, u_ego + de),
                      _propagated_position(snapshot, j, u_other + do))

    H = np.empty((m_i, m_j))
    for a in range(m_i):
        ea = np.zeros(m_i)
        ea[a] = fd_step
        for b in range(m_j):
            eb = np.zeros(m_j)
            eb[b] = fd_step
            H[a, b] = (proxy_at(ea, eb) - proxy_at(ea, -eb)
                       - proxy_at(-ea, eb) + proxy_at(-ea, -eb)) \
                / (4.0 * fd_step * fd_step)
    return float(np.linalg.norm(H))


def barrier_h(positions, ego: int, other: int, r_rad: float) -> float:
    """Zeroth-order barrier ||p_i - p_j||^2 - r^2 over an (N, d) array."""
    positions = np.asarray(positions, dtype=float)
    sep = positions[ego] - positions[other]
    return float(sep @ sep - r_rad ** 2)


def barrier_hdot(positions, velocities, ego: int, other: int) -> float:
    """First derivative of the barrier along the motion."""
    positions = np.asarray(positions, dtype=float)
    velocities = np.asarray(velocities, dtype=float)
    sep = positions[ego] - positions[other]
    dv = velocities[ego] - velocities[other]
    return float(2.0 * sep @ dv)


def barrier_hddot(positions, velocities, accelerations, ego: int,
                  other: int) -> float:
    """Second derivative of the barrier given current accelerations."""
    positions = np.asarray(positions, dtype=float)
    velocities = np.asarray(velocities, dtype=float)
    accelerations = np.asarray(accelerations, dtype=float)
    sep = positions[ego] - positions[other]
    dv = velocities[ego] - velocities[other]
    da = accelerations[ego] - accelerations[other]
    return float(2.0 * (dv @ dv + sep @ da))


def score_bf(snapshot: InteractionSnapshot, ego, other, kappa: float = 5.0,
             r_rad: float = 0.8) -> float:
    """First-order barrier hdot + kappa*h; ascending priority."""
    i, j = snapshot.index(ego), snapshot.index(other)
    pos = snapshot.states[:, snapshot.model.pos_slice]
    vel = snapshot.states[:, snapshot.model.vel_slice]
    return barrier_hdot(pos, vel, i, j) + kappa * barrier_h(pos, i, j, r_rad)


def score_cbf(snapshot: InteractionSnapshot, ego, other, kappa: float = 5.0,
              r_rad: float = 0.8) -> float:
    """Second-order barrier hddot + 2*kappa*hdot + kappa^2*h; ascending.

    Accelerations are reconstructed from each agent's last applied control
    through the dynamics model.
    """
    i, j = snapshot.index(ego), snapshot.index(other)
    pos = snapshot.states[:, snapshot.model.pos_slice]
    vel = snapshot.states[:, snapshot.model.vel_slice]
    acc = np.stack([snapshot.acceleration(a) for a in (ego, other)])
    sep = pos[i] - pos[j]
    dv = vel[i] - vel[j]
    h = float(sep @ sep) - r_rad ** 2
    hdot = float(2.0 * sep @ dv)
    hddot = float(2.0 * (dv @ dv + sep @ (acc[0] - acc[1])))
    return hddot + 2.0 * kappa * hdot + kappa * kappa * h


_NEEDS_HISTORY = (SelectionScheme.COST_EVOLUTION, SelectionScheme.JACOBIAN,
                  SelectionScheme.HESSIAN)


def score_pair(snapshot, scheme: SelectionScheme, params: SelectionParams,
               ego, other) -> float:
    if scheme is SelectionScheme.NEAREST_NEIGHBOR:
        return score_nearest_neighbor(snapshot, ego, other)
    if scheme is SelectionScheme.COST_EVOLUTION:
        return score_cost_evolution(snapshot, ego, other, params.mu)
    if scheme is SelectionScheme.JACOBIAN:
        return score_jacobian(snapshot, ego, other, params.fd_step, params.mu)
    if scheme is SelectionScheme.HESSIAN:
        return score_hessian(snapshot, ego, other, params.fd_step, params.mu)
    if scheme is SelectionScheme.BF:
        return score_bf(snapshot, ego, other, params.kappa, params.r_rad)
    if scheme is SelectionScheme.CBF:
        return score_cbf(snapshot, ego, other, params.kappa, params.r_rad)
    raise ValueError(f"unhandled scheme {scheme}")


def select_players(snapshot: InteractionSnapshot, scheme,
                   params: SelectionParams, ego, p: int):
    """Ids of the min(p, N-1) most relevant other agents, best first.

    Ties break on (score, current distance, id).  Schemes that need the
    previous step fall back to nearest-neighbor ordering at the first
    step, when no history exists yet.
    """
    scheme = parse_scheme(scheme)
    if p < 0:
        raise ValueError("p must be nonnegative")
    ego_idx = snapshot.index(ego)  # validates the id
    del ego_idx
    others = [a for a in snapshot.ids if a != ego]
    if p == 0 or not others:
        return []
    if snapshot.prev_states is None and scheme in _NEEDS_HISTORY:
        scheme = SelectionScheme.NEAREST_NEIGHBOR
    sign = 1.0 if scheme.ascending else -1.0
    keyed = []
    for other in others:
        s = score_pair(snapshot, scheme, params, ego, other)
        dist = score_nearest_neighbor(snapshot, ego, other)
        keyed.append((sign * s, dist, other))
    keyed.sort()
    return [k[-1] for k in keyed[:min(p, len(others))]]
