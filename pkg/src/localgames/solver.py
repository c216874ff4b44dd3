"""Generalized Nash equilibrium solver.

The game is solved as a root-finding problem on the stacked first-order
conditions of all players: for every player ``a`` the stationarity of its
augmented Lagrangian

    L_a = cost_a(X, U_a) + costate_a . D(X, U) + penalty(lambda_a, rho, C(X, U))

with respect to the joint state trajectory X and the player's own controls,
plus the shared discrete-dynamics residual D(X, U) = 0.  Inequality
constraints C <= 0 enter through a smooth quadratic penalty with per-player
multiplier estimates updated in an outer augmented-Lagrangian loop.

Unknowns are ordered y = [X, U, costates]; equations [D, control
stationarity, state stationarity].  That pairing puts identity and
positive-definite blocks on the matrix diagonal, so a plain LU solve with a
small diagonal shift is stable.  The Newton matrix drops the curvature of
the dynamics map (exact for the double integrator, Gauss-Newton for the
quadrotor); the residual itself is always exact, so converged solutions
satisfy the true first-order conditions at tolerance.

Sparsity patterns depend only on the game shape (players, horizon, state
and control sizes, which constraint families are present) and are cached
across solves; each Newton iteration only refills a value array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverNumericalError
from .game import GameProblem, JointTrajectory, POSITION_EPS, pair_indices


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-6
    rho0: float = 1.0
    gamma: float = 10.0
    max_outer: int = 10
    max_newton: int = 50
    line_search_shrink: float = 0.5
    max_line_search: int = 12
    reg_floor: float = 1e-6
    step_limit: float = 5.0       # max-norm cap on a primal Newton step
    stall_iterations: int = 8     # stop Newton after this many non-improving steps
    dense_threshold: int = 500    # below this many unknowns use dense LU
    symmetry_nudge: float = 0.0   # deterministic cold-start control perturbation

    def __post_init__(self):
        if self.tolerance <= 0 or self.rho0 <= 0:
            raise ValueError("tolerance and rho0 must be positive")
        if self.gamma <= 1:
            raise ValueError("penalty growth gamma must exceed 1")
        if not (0 < self.line_search_shrink < 1):
            raise ValueError("line_search_shrink must lie in (0, 1)")


@dataclass
class Multipliers:
    """Per-player costates for the dynamics and inequality multipliers."""

    costates: np.ndarray   # (P, T-1, P, ns)
    ineq: np.ndarray       # (P, L)


@dataclass
class EquilibriumSolution:
    trajectory: JointTrajectory
    multipliers: Multipliers
    kkt_residual: float
    max_violation: float
    newton_iterations: int
    outer_iterations: int
    converged: bool
    penalty_rho: float


# ---------------------------------------------------------------------------
# shape-dependent index pattern, cached across solves


_PATTERN_CACHE: dict = {}


def _block_indices(row_origins, col_origins, nr, nc):
    """Row/col index arrays for dense nr-by-nc blocks at the given origins."""
    row_origins = np.asarray(row_origins, dtype=np.int64)
    col_origins = np.asarray(col_origins, dtype=np.int64)
    r = (row_origins[:, None, None] + np.arange(nr)[None, :, None]
         + np.zeros((1, 1, nc), dtype=np.int64))
    c = (col_origins[:, None, None] + np.zeros((1, nr, 1), dtype=np.int64)
         + np.arange(nc)[None, None, :])
    return r.ravel(), c.ravel()


class _Pattern:
    """Index bookkeeping for one game shape.

    Builds the fixed triplet layout (rows/cols), the mapping that folds
    duplicate triplets into CSC storage, and the origin arrays the value
    filler needs.  Everything here is independent of numeric parameters.
    """

    def __init__(self, P, T, ns, mu, d, has_pairs, has_bounds, has_curv):
        self.P, self.T, self.ns, self.mu, self.d = P, T, ns, mu, d
        self.has_pairs = has_pairs
        self.has_bounds = has_bounds
        self.has_curv = has_curv
        K = T - 1
        n = P * ns
        m = P * mu
        self.nX = K * n
        self.nU = K * m
        self.nM = P * self.nX
        self.n_tot = self.nX + self.nU + self.nM
        off_U = self.nX
        off_M = self.nX + self.nU
        self.off_U, self.off_M = off_U, off_M
        row_SU = self.nX
        row_SX = self.nX + self.nU
        self.row_SU, self.row_SX = row_SU, row_SX
        self.pairs = pair_indices(P)
        self.n_pairs = len(self.pairs)
        self.L_pair = K * self.n_pairs if has_pairs else 0
        self.L_bound = K * P * 2 * mu if has_bounds else 0
        self.L = self.L_pair + self.L_bound

        def x_origin(k, a):
            # state step k in 1..T-1
            return ((k - 1) * P + a) * ns

        def u_origin(k, a):
            return off_U + (k * P + a) * mu

        def m_origin(a, c, b):
            return off_M + a * self.nX + (c * P + b) * ns

        def d_origin(c, b):
            return (c * P + b) * ns

        def su_origin(k, a):
            return row_SU + (k * P + a) * mu

        def sx_origin(a, k, b):
            return row_SX + a * self.nX + ((k - 1) * P + b) * ns

        rows, cols = [], []

        def add(r, c):
            rows.append(r)
            cols.append(c)

        eye_idx = np.arange(self.nX, dtype=np.int64)

        # 1: D wrt next state, +I
        add(eye_idx, eye_idx)
        # 2: D wrt current state, -A, for steps with decided states (c >= 1)
        org_r = np.array([d_origin(c, b) for c in range(1, K) for b in range(P)])
        org_c = np.array([x_origin(c, b) for c in range(1, K) for b in range(P)])
        add(*_block_indices(org_r, org_c, ns, ns))
        # 3: D wrt controls, -B
        org_r = np.array([d_origin(c, b) for c in range(K) for b in range(P)])
        org_c = np.array([u_origin(c, b) for c in range(K) for b in range(P)])
        add(*_block_indices(org_r, org_c, ns, mu))
        # 4a: control stationarity wrt own controls, 2R
        org = np.array([(k, a) for k in range(K) for a in range(P)])
        add(*_block_indices([su_origin(k, a) for k, a in org],
                            [u_origin(k, a) for k, a in org], mu, mu))
        # 4b: bound-penalty diagonal
        if has_bounds:
            diag = np.array([su_origin(k, a) + j
                             for k in range(K) for a in range(P) for j in range(mu)])
            ucol = diag - row_SU + off_U
            add(diag, ucol)
        # 5: control stationarity wrt own costate block, -B^T
        add(*_block_indices([su_origin(k, a) for k, a in org],
                            [m_origin(a, k, a) for k, a in org], mu, ns))
        # 6: state stationarity wrt costates, +I
        sx_all = row_SX + np.arange(self.nM, dtype=np.int64)
        add(sx_all, off_M + np.arange(self.nM, dtype=np.int64))
        # 7: state stationarity wrt costates one step later, -A^T
        org3 = [(a, k, b) for a in range(P) for k in range(1, K) for b in range(P)]
        if org3:
            add(*_block_indices([sx_origin(a, k, b) for a, k, b in org3],
                                [m_origin(a, k, b) for a, k, b in org3], ns, ns))
        # 8: goal Hessians on the own-state diagonal
        org2 = [(a, k) for a in range(P) for k in range(1, T)]
        add(*_block_indices([sx_origin(a, k, a) for a, k in org2],
                            [x_origin(k, a) for a, k in org2], ns, ns))
        # 9: repulsion Hessian blocks, four per (player, partner, stage step);
        # rows live in player a's stationarity, inner index picks a or b
        self.n_coll = P * (P - 1) * max(0, T - 2)
        if self.n_coll:
            quad = [(a, b, k) for a in range(P) for b in range(P) if b != a
                    for k in range(1, T - 1)]
            for rsel, csel in ((0, 0), (0, 1), (1, 0), (1, 1)):
                ro = [sx_origin(a, k, (a, b)[rsel]) for a, b, k in quad]
                co = [x_origin(k, (a, b)[csel]) for a, b, k in quad]
                add(*_block_indices(ro, co, d, d))
        # 10: hard pair-constraint penalty blocks
        if has_pairs:
            quad = [(a, i, j, k) for a in range(P) for (i, j) in self.pairs
                    for k in range(1, T)]
            self.n_pen = len(quad)
            for rsel, csel in ((0, 0), (0, 1), (1, 0), (1, 1)):
                ro = [sx_origin(a, k, (i, j)[rsel]) for a, i, j, k in quad]
                co = [x_origin(k, (i, j)[csel]) for a, i, j, k in quad]
                add(*_block_indices(ro, co, d, d))
        else:
            self.n_pen = 0
        # 11-13: dynamics curvature contracted with the costates (models
        # whose discrete map is nonlinear); within-agent blocks only
        if has_curv and T > 2:
            qc = [(a, k, b) for a in range(P) for k in range(1, K)
                  for b in range(P)]
            add(*_block_indices([sx_origin(a, k, b) for a, k, b in qc],
                                [x_origin(k, b) for a, k, b in qc], ns, ns))
            add(*_block_indices([sx_origin(a, k, b) for a, k, b in qc],
                                [u_origin(k, b) for a, k, b in qc], ns, mu))
            qu = [(k, a) for k in range(1, K) for a in range(P)]
            add(*_block_indices([su_origin(k, a) for k, a in qu],
                                [x_origin(k, a) for k, a in qu], mu, ns))
        # 14: uniform diagonal shift
        all_idx = np.arange(self.n_tot, dtype=np.int64)
        add(all_idx, all_idx)

        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        self.nnz = rows.size

        if self.n_tot <= 0:
            raise ValueError("empty game")

        # dense scatter target
        self.lin = rows * self.n_tot + cols
        # CSC fold: sort triplets, group duplicates
        order = np.lexsort((rows, cols))
        r_s, c_s = rows[order], cols[order]
        new = np.empty(r_s.size, dtype=bool)
        new[0] = True
        new[1:] = (np.diff(r_s) != 0) | (np.diff(c_s) != 0)
        slot = np.cumsum(new) - 1
        self.csc_order = order
        self.csc_slot = slot
        self.csc_nunique = int(slot[-1]) + 1
        self.csc_indices = r_s[new].astype(np.int32)
        counts = np.bincount(c_s[new], minlength=self.n_tot)
        self.csc_indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)


def _get_pattern(key):
    pat = _PATTERN_CACHE.get(key)
    if pat is None:
        pat = _Pattern(*key)
        _PATTERN_CACHE[key] = pat
    return pat


# ---------------------------------------------------------------------------
# per-problem workspace


class _Workspace:
    def __init__(self, problem: GameProblem, config: SolverConfig):
        self.problem = problem
        self.config = config
        model = problem.model
        P = problem.n_players
        T = problem.horizon
        ns, mu, d = model.state_dim, model.control_dim, model.pos_dim
        self.P, self.T, self.ns, self.mu_dim, self.d = P, T, ns, mu, d
        self.K = T - 1
        self.dt = problem.disc.dt
        has_pairs = problem.r_min > 0 and P > 1
        has_bounds = problem.control_bounds is not None
        has_curv = getattr(model, "has_dynamics_curvature", False)
        self.pat = _get_pattern((P, T, ns, mu, d, has_pairs, has_bounds,
                                 has_curv))
        self.has_pairs, self.has_bounds = has_pairs, has_bounds
        self.has_curv = has_curv
        if has_bounds:
            self.lb, self.ub = (np.asarray(b, dtype=float)
                                for b in problem.control_bounds)

        self.Qs = np.stack([2.0 * c.Q for c in problem.costs])          # (P,ns,ns)
        self.QTs = np.stack([2.0 * c.terminal_weight * c.Q
                             for c in problem.costs])
        self.Rs = np.stack([2.0 * c.R_ctrl for c in problem.costs])
        self.goals = np.stack([c.goal for c in problem.costs])
        self.mus = np.array([c.mu for c in problem.costs])
        self.rads = np.array([c.r_rad for c in problem.costs])

        # constant value segments
        K, n_tot = self.K, self.pat.n_tot
        self.const_eye_D = np.ones(self.pat.nX)
        self.const_R = np.broadcast_to(self.Rs[None, :, :, :],
                                       (K, P, mu, mu)).ravel().copy()
        self.const_eye_SX = np.ones(self.pat.nM)
        goal_hess = np.empty((P, T - 1, ns, ns))
        for a in range(P):
            goal_hess[a, :-1] = self.Qs[a]
            goal_hess[a, -1] = self.QTs[a]
        self.const_goal_hess = goal_hess.ravel()

    # -- iterate packing ---------------------------------------------------

    def unpack(self, y):
        P, K, ns, mu = self.P, self.K, self.ns, self.mu_dim
        nX, nU = self.pat.nX, self.pat.nU
        X = y[:nX].reshape(K, P, ns)
        U = y[nX:nX + nU].reshape(K, P, mu)
        M = y[nX + nU:].reshape(P, K, P, ns)
        return X, U, M

    def pack(self, X, U, M):
        return np.concatenate([X.ravel(), U.ravel(), M.ravel()])

    def full_states(self, X):
        return np.concatenate([self.problem.initial_state[None], X], axis=0)

    # -- constraint machinery ---------------------------------------------

    def constraint_values(self, xs_full, U):
        """Stacked inequality values matching game.inequality_residuals."""
        parts = []
        if self.has_pairs:
            pos = xs_full[1:, :, :self.d]
            i_idx = [i for i, _ in self.pat.pairs]
            j_idx = [j for _, j in self.pat.pairs]
            sep = pos[:, i_idx, :] - pos[:, j_idx, :]
            parts.append((self.problem.r_min ** 2
                          - np.sum(sep * sep, axis=-1)).ravel())
        if self.has_bounds:
            ub_part = U - self.ub
            lb_part = self.lb - U
            parts.append(np.concatenate([ub_part, lb_part], axis=-1).ravel())
        if not parts:
            return np.zeros(0)
        return np.concatenate(parts)

    # -- residual ----------------------------------------------------------

    def residual(self, y, lam, rho):
        P, K, ns, mu, d = self.P, self.K, self.ns, self.mu_dim, self.d
        model = self.problem.model
        X, U, M = self.unpack(y)
        xs = self.full_states(X)

        preds, A, B = model.step_and_jacobians(xs[:-1].reshape(-1, ns),
                                               U.reshape(-1, mu), self.dt)
        D = xs[1:] - preds.reshape(K, P, ns)
        A = A.reshape(K, P, ns, ns)
        B = B.reshape(K, P, ns, mu)

        c_all = self.constraint_values(xs, U)

        # control stationarity
        S_U = np.einsum('pij,kpj->kpi', self.Rs, U)
        own_cost = M[np.arange(P), :, np.arange(P), :]          # (P, K, ns)
        S_U -= np.einsum('kpij,pki->kpj', B, own_cost)
        if self.has_bounds:
            # each player penalizes only its own bound rows here
            w_own = self._own_bound_w(lam, rho, U)
            S_U += w_own[..., :mu] - w_own[..., mu:]

        # state stationarity
        S_X = np.array(M)                                        # identity term
        if K > 1:
            sub = np.einsum('kbji,akbj->akbi', A[1:], M[:, 1:])
            S_X[:, :-1] -= sub                                   # -A^T costate
        own_grad = np.einsum('pij,kpj->kpi', self.Qs, xs[1:] - self.goals[None])
        own_grad[-1] = np.einsum('pij,pj->pi', self.QTs, xs[-1] - self.goals)
        idx = np.arange(P)
        S_X[idx, :, idx, :] += own_grad.transpose(1, 0, 2)

        if P > 1 and K > 1:
            pg = self._repulsion_grads(xs)                       # (K-1, P, P, d)
            S_X[idx, :K - 1, idx, :d] += pg.sum(axis=2).transpose(1, 0, 2)
            S_X[:, :K - 1, :, :d] -= pg.transpose(1, 0, 2, 3)
        if self.has_pairs:
            self._add_pair_penalty_grad(S_X, xs, lam, rho)

        return np.concatenate([D.ravel(), S_U.ravel(), S_X.ravel()]), (
            X, U, M, xs, A, B, c_all)

    def _own_bound_w(self, lam, rho, U):
        """Penalty weights of each player's own bound constraints, (K,P,2mu)."""
        K, P, mu = self.K, self.P, self.mu_dim
        c_b = np.concatenate([U - self.ub, self.lb - U], axis=-1)   # (K,P,2mu)
        lam_b = lam[:, self.pat.L_pair:].reshape(P, K, P, 2 * mu)
        own = lam_b[np.arange(P), :, np.arange(P), :]               # (P,K,2mu)
        return np.maximum(0.0, own.transpose(1, 0, 2) + rho * c_b)

    def _repulsion_grads(self, xs):
        """Pairwise repulsion gradient wrt the first agent of each ordered pair.

        Returns pg[k, a, b] = d/dp_a of (mu_a/2) max(0, r_a - ||p_a - p_b||)^2
        for stage steps k = 1..T-2 (index 0 of the array is step 1).
        """
        d = self.d
        pos = xs[1:-1, :, :d]                # (K-1, P, d)
        e = pos[:, :, None, :] - pos[:, None, :, :]
        dist = np.sqrt(np.sum(e * e, axis=-1))
        P = self.P
        ii = np.arange(P)
        dist[:, ii, ii] = np.inf             # no self term
        dist = np.maximum(dist, POSITION_EPS)
        gap = np.maximum(0.0, self.rads[None, :, None] - dist)
        coef = -self.mus[None, :, None] * gap / dist
        return coef[..., None] * e

    def _add_pair_penalty_grad(self, S_X, xs, lam, rho):
        d = self.d
        K, P = self.K, self.P
        pos = xs[1:, :, :d]
        i_idx = np.array([i for i, _ in self.pat.pairs])
        j_idx = np.array([j for _, j in self.pat.pairs])
        sep = pos[:, i_idx, :] - pos[:, j_idx, :]                  # (K,np,d)
        cvals = self.problem.r_min ** 2 - np.sum(sep * sep, axis=-1)
        lam_p = lam[:, :self.pat.L_pair].reshape(P, K, self.pat.n_pairs)
        w = np.maximum(0.0, lam_p + rho * cvals[None])             # (P,K,np)
        grad_i = -2.0 * sep                                        # d c / d p_i
        contrib = w[..., None] * grad_i[None]
        for q, (i, j) in enumerate(self.pat.pairs):
            S_X[:, :, i, :d] += contrib[:, :, q, :]
            S_X[:, :, j, :d] -= contrib[:, :, q, :]

    # -- Jacobian values ----------------------------------------------------

    def jacobian_values(self, X, U, M, xs, A, B, lam, rho, reg):
        P, K, ns, mu, d = self.P, self.K, self.ns, self.mu_dim, self.d
        segs = [self.const_eye_D]
        segs.append(-A[1:].ravel())
        segs.append(-B.ravel())
        segs.append(self.const_R)
        if self.has_bounds:
            w_own = self._own_bound_w(lam, rho, U)
            active = (w_own > 0).astype(float)
            segs.append((rho * (active[..., :mu] + active[..., mu:])).ravel())
        segs.append(-np.transpose(B, (0, 1, 3, 2)).ravel())
        segs.append(self.const_eye_SX)
        if K > 1:
            At = -np.transpose(A[1:], (0, 1, 3, 2))                # (K-1,P,ns,ns)
            segs.append(np.broadcast_to(At[None], (P,) + At.shape).ravel())
        segs.append(self.const_goal_hess)
        if self.pat.n_coll:
            Hp = self._repulsion_hessians(xs)                      # (P,P-1groups...) flat
            segs.extend([Hp, -Hp, -Hp, Hp])
        if self.has_pairs:
            Hpen, Gpen = self._pair_penalty_hessians(xs, lam, rho)
            # blocks (i,i), (i,j), (j,i), (j,j): hessian sign -,+,+,- and
            # gradient outer product sign +,-,-,+
            segs.extend([-Hpen + Gpen, Hpen - Gpen, Hpen - Gpen, -Hpen + Gpen])
        if self.has_curv and K > 1:
            # discrete-map curvature ~ dt * continuous curvature at (x_k, u_k)
            Hxx, Hxu = self.problem.model.costate_curvature(
                xs[1:-1][None], U[1:][None], M[:, 1:])
            segs.append((-self.dt * Hxx).ravel())
            segs.append((-self.dt * Hxu).ravel())
            own = Hxu[np.arange(P), :, np.arange(P)]       # (P, K-1, ns, mu)
            segs.append((-self.dt * np.transpose(own, (1, 0, 3, 2))).ravel())
        segs.append(np.full(self.pat.n_tot, reg))
        return np.concatenate(segs)

    def _repulsion_hessians(self, xs):
        """Repulsion Hessian d-by-d blocks in (a, b, k) order, flattened."""
        d = self.d
        P, T = self.P, self.T
        pos = xs[1:-1, :, :d]                                      # stage steps
        e = pos[:, :, None, :] - pos[:, None, :, :]                # (K-1,P,P,d)
        dist = np.sqrt(np.sum(e * e, axis=-1))
        ii = np.arange(P)
        dist[:, ii, ii] = np.inf
        dist = np.maximum(dist, POSITION_EPS)
        active = dist < self.rads[None, :, None]
        eye = np.eye(d)
        # H = mu * [ (r/d^3) ee^T + (1 - r/d) I ]  where the gap is active
        r_over_d = self.rads[None, :, None] / dist
        c1 = self.mus[None, :, None] * r_over_d / (dist * dist) * active
        c2 = self.mus[None, :, None] * (1.0 - r_over_d) * active
        H = (c1[..., None, None] * (e[..., :, None] * e[..., None, :])
             + c2[..., None, None] * eye)
        # reorder to (a, b!=a, k) blocks
        out = np.empty((P, P - 1, T - 2, d, d))
        for a in range(P):
            others = [b for b in range(P) if b != a]
            out[a] = H[:, a, others].transpose(1, 0, 2, 3)
        return out.ravel()

    def _pair_penalty_hessians(self, xs, lam, rho):
        """Constraint curvature and gradient outer blocks for hard pairs.

        Returns (w * 2I block, rho_active * 4 ee^T block), each flattened in
        (a, pair, k) order; caller applies the per-position-block signs.
        """
        d = self.d
        K, P = self.K, self.P
        pos = xs[1:, :, :d]
        i_idx = np.array([i for i, _ in self.pat.pairs])
        j_idx = np.array([j for _, j in self.pat.pairs])
        sep = pos[:, i_idx, :] - pos[:, j_idx, :]                  # (K,np,d)
        cvals = self.problem.r_min ** 2 - np.sum(sep * sep, axis=-1)
        lam_p = lam[:, :self.pat.L_pair].reshape(P, K, self.pat.n_pairs)
        w = np.maximum(0.0, lam_p + rho * cvals[None])             # (P,K,np)
        act = (w > 0).astype(float)
        eye = np.eye(d)
        Hw = 2.0 * w[..., None, None] * eye                        # times -1 on ii/jj
        outer = sep[..., :, None] * sep[..., None, :]
        Gw = 4.0 * rho * act[..., None, None] * outer[None]
        # to (a, pair, k) order
        Hw = Hw.transpose(0, 2, 1, 3, 4).ravel()
        Gw = Gw.transpose(0, 2, 1, 3, 4).ravel()
        return Hw, Gw

    # -- linear solve --------------------------------------------------------

    def newton_step(self, vals, G):
        n = self.pat.n_tot
        if n <= self.config.dense_threshold:
            J = np.bincount(self.pat.lin, weights=vals,
                            minlength=n * n).reshape(n, n)
            return np.linalg.solve(J, -G)
        data = np.bincount(self.pat.csc_slot,
                           weights=vals[self.pat.csc_order],
                           minlength=self.pat.csc_nunique)
        Js = sp.csc_matrix((data, self.pat.csc_indices, self.pat.csc_indptr),
                           shape=(n, n))
        return spla.splu(Js).solve(-G)


# ---------------------------------------------------------------------------
# public operations


def _norm(v):
    return float(np.max(np.abs(v))) if v.size else 0.0


def _cold_start_controls(problem, config):
    P = problem.n_players
    K = problem.horizon - 1
    mu = problem.model.control_dim
    U = np.tile(problem.model.rest_control(), (K, P, 1))
    if config.symmetry_nudge > 0:
        # deterministic participant- and step-dependent tie breaker
        k = np.arange(K)[:, None, None]
        a = np.arange(P)[None, :, None]
        j = np.arange(mu)[None, None, :]
        U = U + config.symmetry_nudge * np.sin(1.0 + 3.0 * a + 7.0 * k + 13.0 * j)
    return U


def _initial_iterate(ws, problem, config, warm_start):
    if warm_start is not None:
        policies = np.asarray(warm_start, dtype=float)
    else:
        policies = _cold_start_controls(problem, config).transpose(1, 0, 2)
    traj = problem.rollout(policies)
    X = traj.states[1:]
    U = policies.transpose(1, 0, 2)          # (K, P, mu)
    M = np.zeros((ws.P, ws.K, ws.P, ws.ns))
    return ws.pack(X, U, M)


def kkt_residual(problem: GameProblem, candidate: JointTrajectory,
                 multipliers: Multipliers, penalty: float) -> np.ndarray:
    """Stacked first-order residual at a candidate point.

    Layout: dynamics defects first, then every player's stationarity with
    respect to its own controls (time-major), then every player's
    stationarity with respect to the full joint state trajectory.
    """
    ws = _Workspace(problem, SolverConfig())
    X = candidate.states[1:]
    U = candidate.policies.transpose(1, 0, 2)
    y = ws.pack(X, U, multipliers.costates)
    lam = np.asarray(multipliers.ineq, dtype=float).reshape(problem.n_players, -1)
    if lam.shape[1] != ws.pat.L:
        raise ValueError(f"expected {ws.pat.L} inequality multipliers per player, "
                         f"got {lam.shape[1]}")
    G, _ = ws.residual(y, lam, penalty)
    return G


def solve(problem: GameProblem, config: SolverConfig = SolverConfig(),
          warm_start=None) -> EquilibriumSolution:
    """Find a generalized Nash equilibrium of the game.

    ``warm_start`` is an optional (P, T-1, control_dim) array of per-player
    policies.  Returns the best iterate with ``converged=False`` when
    tolerances are not met within the iteration budget.
    """
    ws = _Workspace(problem, config)
    y = _initial_iterate(ws, problem, config, warm_start)
    lam = np.zeros((ws.P, ws.pat.L))
    rho = config.rho0
    tol = config.tolerance

    newton_total = 0
    outer_done = 0
    best = None

    for outer in range(config.max_outer):
        outer_done = outer + 1
        reg = config.reg_floor
        G, aux = ws.residual(y, lam, rho)
        if not np.all(np.isfinite(G)):
            raise SolverNumericalError("non-finite residual at initial iterate",
                                       last_iterate=y)
        gn = _norm(G)
        best_gn = gn
        no_progress = 0
        for _ in range(config.max_newton):
            if gn <= tol:
                break
            X, U, M, xs, A, B, c_all = aux
            vals = ws.jacobian_values(X, U, M, xs, A, B, lam, rho, reg)
            try:
                dy = ws.newton_step(vals, G)
            except (np.linalg.LinAlgError, RuntimeError):
                reg *= 10.0
                newton_total += 1
                continue
            if not np.all(np.isfinite(dy)):
                reg *= 10.0
                newton_total += 1
                continue
            # trust-region cap, measured on the primal (state/control) block;
            # multiplier estimates may legitimately move far in one step
            step_norm = _norm(dy[:ws.pat.nX + ws.pat.nU])
            if step_norm > config.step_limit:
                dy *= config.step_limit / step_norm
            alpha = 1.0
            accepted = False
            for _ls in range(config.max_line_search):
                y_try = y + alpha * dy
                G_try, aux_try = ws.residual(y_try, lam, rho)
                if np.all(np.isfinite(G_try)):
                    gn_try = _norm(G_try)
                    if gn_try < (1.0 - 1e-4 * alpha) * gn:
                        y, G, aux, gn = y_try, G_try, aux_try, gn_try
                        accepted = True
                        break
                alpha *= config.line_search_shrink
            newton_total += 1
            if accepted:
                reg = max(config.reg_floor, 0.5 * reg)
            else:
                reg *= 10.0
                if reg > 1e10:
                    break
            # give up on stationary points Newton cannot polish (near-singular
            # crossing configurations); the best iterate is still returned
            if gn < 0.995 * best_gn:
                best_gn = gn
                no_progress = 0
            else:
                no_progress += 1
                if no_progress >= config.stall_iterations:
                    break

        c_all = aux[6]
        viol = float(np.max(c_all)) if c_all.size else 0.0
        viol = max(0.0, viol)
        if best is None or gn + viol < best[0]:
            best = (gn + viol, y.copy(), lam.copy(), rho, gn, viol)
        if gn <= tol and viol <= tol:
            break
        if ws.pat.L == 0:
            break
        if viol <= tol:
            # multipliers and penalty would not change; further outer
            # iterations would repeat the same Newton run
            if gn > tol:
                break
        lam = np.maximum(0.0, lam + rho * c_all[None, :])
        if viol > tol:
            rho *= config.gamma

    _, y, lam, rho, gn, viol = best
    X, U, M = ws.unpack(y)
    traj = JointTrajectory(states=np.concatenate(
        [problem.initial_state[None], X], axis=0),
        policies=U.transpose(1, 0, 2).copy())
    sol = EquilibriumSolution(
        trajectory=traj,
        multipliers=Multipliers(costates=M.copy(), ineq=lam),
        kkt_residual=gn,
        max_violation=viol,
        newton_iterations=newton_total,
        outer_iterations=outer_done,
        converged=bool(gn <= tol and viol <= tol),
        penalty_rho=rho,
    )
    return sol


def augmented_player_cost(problem: GameProblem, policies, agent: int,
                          lam_row=None, rho: float = 0.0) -> float:
    """One player's cost along the rollout of the given joint policies,
    including the augmented-Lagrangian penalty with the given multipliers."""
    from .game import total_cost, inequality_residuals

    traj = problem.rollout(np.asarray(policies, dtype=float))
    value = total_cost(problem.costs[agent], traj, agent)
    if lam_row is not None and rho > 0:
        c = inequality_residuals(problem, traj)
        wplus = np.maximum(0.0, lam_row + rho * c)
        value += float(np.sum(wplus ** 2 - lam_row ** 2) / (2.0 * rho))
    return value


def unilateral_deviation_gap(problem: GameProblem, solution: EquilibriumSolution,
                             agent: int, trial_policy) -> float:
    """Cost change when one player unilaterally deviates to a trial policy.

    Others keep their equilibrium policies; states are re-rolled.  At a
    local Nash point the gap is nonnegative up to solver tolerance for
    small feasible perturbations.
    """
    base = solution.trajectory.policies
    trial = np.asarray(trial_policy, dtype=float)
    if trial.shape != base.shape[1:]:
        raise ValueError(f"trial policy must have shape {base.shape[1:]}")
    lam_row = solution.multipliers.ineq[agent] if solution.multipliers.ineq.size \
        else None
    rho = solution.penalty_rho
    mixed = base.copy()
    mixed[agent] = trial
    c_trial = augmented_player_cost(problem, mixed, agent, lam_row, rho)
    c_base = augmented_player_cost(problem, base, agent, lam_row, rho)
    return float(c_trial - c_base)
