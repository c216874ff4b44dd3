"""Agent motion models and their fixed-step discretization.

Two models are provided:

* ``DoubleIntegrator`` -- planar point mass, state [px, py, vx, vy],
  control [ax, ay].  The discrete map is exact for piecewise-constant
  acceleration.
* ``Quadrotor`` -- 12-state rigid body (position, ZYX Euler angles,
  velocity, body rates), control = power of the 4 motors.  Discretized
  with classic RK4.

Both expose batched step/Jacobian entry points so the game solver can
linearize whole trajectories without Python-level loops, plus an analytic
costate-curvature contraction used to build exact-enough Newton matrices.
All functions are pure; models hold only constant parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AttitudeSingularityError

# Pitch guard: the Euler-rate map blows up at |theta| = pi/2.
PITCH_LIMIT = np.pi / 2 - 1e-6


@dataclass(frozen=True)
class DiscretizationSpec:
    """Fixed-step discretization: dt in seconds plus an integrator tag."""

    dt: float = 0.1
    scheme: str = "auto"  # "auto" | "exact" | "rk4"

    def __post_init__(self):
        if not (self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.scheme not in ("auto", "exact", "rk4"):
            raise ValueError(f"unknown integrator scheme {self.scheme!r}")


@dataclass(frozen=True)
class QuadrotorParams:
    """Physical constants of the quadrotor model."""

    mass: float = 1.0
    inertia_diag: tuple = (0.01, 0.01, 0.02)
    k_f: float = 1.0        # motor force constant (N per power unit)
    k_m: float = 0.0245     # motor torque constant (N*m per power unit)
    arm_length: float = 0.175
    gravity: float = 9.81
    motor_limit_factor: float = 4.0  # upper power bound, in multiples of hover

    def __post_init__(self):
        if self.mass <= 0 or self.k_f <= 0 or self.k_m <= 0:
            raise ValueError("mass, k_f, k_m must be positive")
        if self.arm_length <= 0 or self.gravity <= 0:
            raise ValueError("arm_length and gravity must be positive")
        if any(i <= 0 for i in self.inertia_diag):
            raise ValueError("inertia diagonal must be positive")


class DoubleIntegrator:
    """Planar double integrator; the discrete step is the exact map."""

    name = "double_integrator"
    state_dim = 4
    control_dim = 2
    pos_dim = 2
    pos_slice = slice(0, 2)
    vel_slice = slice(2, 4)
    default_scheme = "exact"
    has_dynamics_curvature = False

    def __init__(self, control_bound: float | None = None):
        # Optional symmetric acceleration box |u_i| <= control_bound.
        self.control_bound = control_bound

    def control_bounds(self):
        if self.control_bound is None:
            return None
        b = float(self.control_bound)
        return (np.full(2, -b), np.full(2, b))

    def rest_state(self, position):
        x = np.zeros(4)
        x[:2] = position
        return x

    def rest_control(self):
        return np.zeros(2)

    def derivative(self, x, u):
        return np.concatenate([x[2:4], u])

    def acceleration(self, x, u):
        return np.asarray(u, dtype=float)

    def step_batch(self, xs, us, dt):
        xs = np.asarray(xs, dtype=float)
        us = np.asarray(us, dtype=float)
        out = np.empty_like(xs)
        out[..., 0:2] = xs[..., 0:2] + dt * xs[..., 2:4] + 0.5 * dt * dt * us
        out[..., 2:4] = xs[..., 2:4] + dt * us
        return out

    def discrete_jacobians(self, xs, us, dt):
        batch = np.broadcast_shapes(xs.shape[:-1], us.shape[:-1])
        A = np.zeros(batch + (4, 4))
        B = np.zeros(batch + (4, 2))
        A[..., 0, 0] = A[..., 1, 1] = A[..., 2, 2] = A[..., 3, 3] = 1.0
        A[..., 0, 2] = A[..., 1, 3] = dt
        B[..., 0, 0] = B[..., 1, 1] = 0.5 * dt * dt
        B[..., 2, 0] = B[..., 3, 1] = dt
        return A, B

    def step_and_jacobians(self, xs, us, dt):
        A, B = self.discrete_jacobians(xs, us, dt)
        return self.step_batch(xs, us, dt), A, B


class Quadrotor:
    """12-state quadrotor rigid body, discretized with RK4.

    State layout: [x, y, z, phi, theta, psi, vx, vy, vz, w1, w2, w3]
    (position, ZYX Euler angles, world-frame velocity, body rates).
    Control: power delivered to each of the 4 motors, >= 0.
    """

    name = "quadrotor"
    state_dim = 12
    control_dim = 4
    pos_dim = 3
    pos_slice = slice(0, 3)
    vel_slice = slice(6, 9)
    default_scheme = "rk4"
    has_dynamics_curvature = True

    def __init__(self, params: QuadrotorParams = QuadrotorParams()):
        self.params = params
        i1, i2, i3 = params.inertia_diag
        self._idiag = np.array([i1, i2, i3])
        # coefficients of the gyroscopic term omega x (I omega), per axis
        self._gyro = np.array([(i3 - i2) / i1, (i1 - i3) / i2, (i2 - i1) / i3])
        lk = params.arm_length * params.k_f
        km = params.k_m
        # tau = torque_map @ u  (roll, pitch, yaw rows)
        self.torque_map = np.array([
            [0.0, lk, 0.0, -lk],
            [-lk, 0.0, lk, 0.0],
            [km, -km, km, -km],
        ])
        self._itorque = self.torque_map / self._idiag[:, None]

    def hover_power(self):
        """Per-motor power that exactly cancels gravity at level attitude."""
        p = self.params
        return p.mass * p.gravity / (4.0 * p.k_f)

    def control_bounds(self):
        hi = self.params.motor_limit_factor * self.hover_power()
        return (np.zeros(4), np.full(4, hi))

    def rest_state(self, position):
        x = np.zeros(12)
        x[:3] = position
        return x

    def rest_control(self):
        return np.full(4, self.hover_power())

    @staticmethod
    def _trig(xs):
        phi, theta, psi = xs[..., 3], xs[..., 4], xs[..., 5]
        return (np.cos(phi), np.sin(phi), np.cos(theta), np.sin(theta),
                np.cos(psi), np.sin(psi))

    def _thrust_axis(self, xs):
        """Third column of the body-to-world rotation (ZYX convention)."""
        cphi, sphi, cth, sth, cpsi, spsi = self._trig(xs)
        r3 = np.empty(xs.shape[:-1] + (3,))
        r3[..., 0] = cpsi * sth * cphi + spsi * sphi
        r3[..., 1] = spsi * sth * cphi - cpsi * sphi
        r3[..., 2] = cth * cphi
        return r3

    def derivative_batch(self, xs, us):
        """Continuous-time state derivative for a batch of (state, control)."""
        p = self.params
        out = np.empty_like(xs)
        cphi, sphi, cth, sth, cpsi, spsi = self._trig(xs)
        tth = sth / cth
        w1, w2, w3 = xs[..., 9], xs[..., 10], xs[..., 11]

        out[..., 0:3] = xs[..., 6:9]

        u1 = sphi * w2 + cphi * w3
        out[..., 3] = w1 + tth * u1
        out[..., 4] = cphi * w2 - sphi * w3
        out[..., 5] = u1 / cth

        thrust = (p.k_f / p.mass) * np.sum(us, axis=-1)
        out[..., 6] = (cpsi * sth * cphi + spsi * sphi) * thrust
        out[..., 7] = (spsi * sth * cphi - cpsi * sphi) * thrust
        out[..., 8] = cth * cphi * thrust - p.gravity

        tau = us @ self._itorque.T
        g1, g2, g3 = self._gyro
        out[..., 9] = tau[..., 0] - g1 * w2 * w3
        out[..., 10] = tau[..., 1] - g2 * w3 * w1
        out[..., 11] = tau[..., 2] - g3 * w1 * w2
        return out

    def derivative(self, x, u):
        return self.derivative_batch(np.asarray(x, dtype=float)[None, :],
                                     np.asarray(u, dtype=float)[None, :])[0]

    def acceleration(self, x, u):
        """Translational acceleration F/m implied by the current attitude and motors."""
        p = self.params
        x = np.asarray(x, dtype=float)
        thrust = p.k_f * float(np.sum(u))
        return self._thrust_axis(x) * (thrust / p.mass) \
            + np.array([0.0, 0.0, -p.gravity])

    def step_batch(self, xs, us, dt):
        k1 = self.derivative_batch(xs, us)
        k2 = self.derivative_batch(xs + 0.5 * dt * k1, us)
        k3 = self.derivative_batch(xs + 0.5 * dt * k2, us)
        k4 = self.derivative_batch(xs + dt * k3, us)
        return xs + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def continuous_jacobians(self, xs, us):
        """d(xdot)/dx and d(xdot)/du for a batch, analytic."""
        p = self.params
        batch = xs.shape[:-1]
        cphi, sphi, cth, sth, cpsi, spsi = self._trig(xs)
        tth = sth / cth
        sec = 1.0 / cth
        w2, w3 = xs[..., 10], xs[..., 11]

        A = np.zeros(batch + (12, 12))
        B = np.zeros(batch + (12, 4))

        # position block: dp/dt = v
        idx = np.arange(3)
        A[..., idx, idx + 6] = 1.0

        # Euler-rate block
        u1 = sphi * w2 + cphi * w3
        u2 = cphi * w2 - sphi * w3
        A[..., 3, 3] = tth * u2
        A[..., 3, 4] = u1 * sec * sec
        A[..., 4, 3] = -u1
        A[..., 5, 3] = u2 * sec
        A[..., 5, 4] = u1 * tth * sec
        A[..., 3, 9] = 1.0
        A[..., 3, 10] = sphi * tth
        A[..., 3, 11] = cphi * tth
        A[..., 4, 10] = cphi
        A[..., 4, 11] = -sphi
        A[..., 5, 10] = sphi * sec
        A[..., 5, 11] = cphi * sec

        # velocity block: dv/dt = g + r3 * k_f * sum(u) / m
        scale = (p.k_f / p.mass) * np.sum(us, axis=-1)
        A[..., 6, 3] = (-cpsi * sth * sphi + spsi * cphi) * scale
        A[..., 7, 3] = (-spsi * sth * sphi - cpsi * cphi) * scale
        A[..., 8, 3] = (-cth * sphi) * scale
        A[..., 6, 4] = (cpsi * cth * cphi) * scale
        A[..., 7, 4] = (spsi * cth * cphi) * scale
        A[..., 8, 4] = (-sth * cphi) * scale
        A[..., 6, 5] = (-spsi * sth * cphi + cpsi * sphi) * scale
        A[..., 7, 5] = (cpsi * sth * cphi + spsi * sphi) * scale

        kfm = p.k_f / p.mass
        B[..., 6, :] = (cpsi * sth * cphi + spsi * sphi)[..., None] * kfm
        B[..., 7, :] = (spsi * sth * cphi - cpsi * sphi)[..., None] * kfm
        B[..., 8, :] = (cth * cphi)[..., None] * kfm

        # body-rate block: gyroscopic coupling
        wx, wy, wz = xs[..., 9], xs[..., 10], xs[..., 11]
        g1, g2, g3 = self._gyro
        A[..., 9, 10] = -g1 * wz
        A[..., 9, 11] = -g1 * wy
        A[..., 10, 9] = -g2 * wz
        A[..., 10, 11] = -g2 * wx
        A[..., 11, 9] = -g3 * wy
        A[..., 11, 10] = -g3 * wx

        B[..., 9:12, :] = self._itorque

        return A, B

    def discrete_jacobians(self, xs, us, dt):
        return self.step_and_jacobians(xs, us, dt)[1:]

    def step_and_jacobians(self, xs, us, dt):
        """RK4 step plus its Jacobians, sharing the stage evaluations."""
        k1 = self.derivative_batch(xs, us)
        x2 = xs + 0.5 * dt * k1
        k2 = self.derivative_batch(x2, us)
        x3 = xs + 0.5 * dt * k2
        k3 = self.derivative_batch(x3, us)
        x4 = xs + dt * k3
        k4 = self.derivative_batch(x4, us)
        nxt = xs + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        A1, B1 = self.continuous_jacobians(xs, us)
        A2, B2 = self.continuous_jacobians(x2, us)
        A3, B3 = self.continuous_jacobians(x3, us)
        A4, B4 = self.continuous_jacobians(x4, us)

        eye = np.eye(12)
        dk2 = A2 @ (eye + 0.5 * dt * A1)
        dk2u = B2 + A2 @ (0.5 * dt * B1)
        dk3 = A3 @ (eye + 0.5 * dt * dk2)
        dk3u = B3 + A3 @ (0.5 * dt * dk2u)
        dk4 = A4 @ (eye + dt * dk3)
        dk4u = B4 + A4 @ (dt * dk3u)

        A = eye + (dt / 6.0) * (A1 + 2.0 * dk2 + 2.0 * dk3 + dk4)
        B = (dt / 6.0) * (B1 + 2.0 * dk2u + 2.0 * dk3u + dk4u)
        return nxt, A, B

    def costate_curvature(self, xs, us, m):
        """Hessian blocks of the adjoint scalar m . f(x, u), analytic.

        Arguments broadcast; returns (Hxx, Hxu) with shapes
        (..., 12, 12) and (..., 12, 4).  The curvature of the discrete RK4
        map contracted with a costate is dt times these up to O(dt^2),
        which is what the Newton matrix uses.
        """
        p = self.params
        cphi, sphi, cth, sth, cpsi, spsi = self._trig(xs)
        tth = sth / cth
        sec = 1.0 / cth
        w2, w3 = xs[..., 10], xs[..., 11]
        mq1, mq2, mq3 = m[..., 3], m[..., 4], m[..., 5]
        mv1, mv2, mv3 = m[..., 6], m[..., 7], m[..., 8]
        mw1, mw2, mw3 = m[..., 9], m[..., 10], m[..., 11]

        batch = np.broadcast_shapes(xs.shape[:-1], us.shape[:-1], m.shape[:-1])
        Hxx = np.zeros(batch + (12, 12))
        Hxu = np.zeros(batch + (12, 4))

        u1 = sphi * w2 + cphi * w3
        u2 = cphi * w2 - sphi * w3

        # V = m_v . r3(phi, theta, psi) and its derivatives
        r3x = cpsi * sth * cphi + spsi * sphi
        r3y = spsi * sth * cphi - cpsi * sphi
        r3z = cth * cphi
        V = mv1 * r3x + mv2 * r3y + mv3 * r3z
        V_phi = (mv1 * (-cpsi * sth * sphi + spsi * cphi)
                 + mv2 * (-spsi * sth * sphi - cpsi * cphi)
                 - mv3 * cth * sphi)
        V_th = cth * cphi * (mv1 * cpsi + mv2 * spsi) - mv3 * sth * cphi
        V_psi = mv1 * (-spsi * sth * cphi + cpsi * sphi) \
            + mv2 * (cpsi * sth * cphi + spsi * sphi)
        V_phph = -V
        V_phth = -cth * sphi * (mv1 * cpsi + mv2 * spsi) + mv3 * sth * sphi
        V_phps = mv1 * (spsi * sth * sphi + cpsi * cphi) \
            + mv2 * (-cpsi * sth * sphi + spsi * cphi)
        V_thth = -(mv1 * cpsi * sth * cphi + mv2 * spsi * sth * cphi
                   + mv3 * cth * cphi)
        V_thps = cth * cphi * (mv2 * cpsi - mv1 * spsi)
        V_psps = -(mv1 * r3x + mv2 * r3y)

        ts = (p.k_f / p.mass) * np.sum(np.broadcast_to(us, batch + (4,)),
                                       axis=-1)

        # angle-angle block
        Hxx[..., 3, 3] = (-mq1 * tth * u1 - mq2 * u2 - mq3 * u1 * sec
                          + ts * V_phph)
        Hxx[..., 3, 4] = (mq1 * sec * sec * u2 + mq3 * u2 * tth * sec
                          + ts * V_phth)
        Hxx[..., 3, 5] = ts * V_phps
        Hxx[..., 4, 4] = (2.0 * mq1 * sec * sec * tth * u1
                          + mq3 * u1 * sec * (2.0 * sec * sec - 1.0)
                          + ts * V_thth)
        Hxx[..., 4, 5] = ts * V_thps
        Hxx[..., 5, 5] = ts * V_psps

        # angle-rate block (from the Euler-rate map)
        kq = mq1 * sec * sec + mq3 * tth * sec
        Hxx[..., 3, 10] = mq1 * tth * cphi - mq2 * sphi + mq3 * cphi * sec
        Hxx[..., 3, 11] = -mq1 * tth * sphi - mq2 * cphi - mq3 * sphi * sec
        Hxx[..., 4, 10] = kq * sphi
        Hxx[..., 4, 11] = kq * cphi

        # rate-rate block (gyroscopic)
        g1, g2, g3 = self._gyro
        Hxx[..., 10, 11] = -mw1 * g1
        Hxx[..., 9, 11] = -mw2 * g2
        Hxx[..., 9, 10] = -mw3 * g3

        iu, ju = np.triu_indices(12, k=1)
        Hxx[..., ju, iu] = Hxx[..., iu, ju]

        kfm = p.k_f / p.mass
        Hxu[..., 3, :] = (kfm * V_phi)[..., None]
        Hxu[..., 4, :] = (kfm * V_th)[..., None]
        Hxu[..., 5, :] = (kfm * V_psi)[..., None]

        return Hxx, Hxu


def _check_shapes(model, state, control):
    state = np.asarray(state, dtype=float)
    control = np.asarray(control, dtype=float)
    if state.shape != (model.state_dim,):
        raise ValueError(
            f"state must have shape ({model.state_dim},), got {state.shape}")
    if control.shape != (model.control_dim,):
        raise ValueError(
            f"control must have shape ({model.control_dim},), got {control.shape}")
    if not np.all(np.isfinite(state)) or not np.all(np.isfinite(control)):
        raise ValueError("state and control must be finite")
    return state, control


def _check_pitch(model, state):
    if isinstance(model, Quadrotor) and abs(state[4]) >= PITCH_LIMIT:
        raise AttitudeSingularityError(
            f"pitch {state[4]:.4f} rad at the Euler-rate singularity")


def continuous_derivative(model, state, control):
    """Continuous-time derivative of one agent's state."""
    state, control = _check_shapes(model, state, control)
    _check_pitch(model, state)
    return model.derivative(state, control)


def step(model, spec: DiscretizationSpec, state, control):
    """Advance one agent by one discrete time step."""
    state, control = _check_shapes(model, state, control)
    _check_pitch(model, state)
    scheme = spec.scheme if spec.scheme != "auto" else model.default_scheme
    if scheme != model.default_scheme:
        raise ValueError(f"model {model.name} uses scheme {model.default_scheme!r}, "
                         f"got {scheme!r}")
    nxt = model.step_batch(state[None, :], control[None, :], spec.dt)[0]
    _check_pitch(model, nxt)
    return nxt


def rollout(model, spec: DiscretizationSpec, initial_state, controls):
    """Simulate a control sequence; returns len(controls)+1 states."""
    controls = np.asarray(controls, dtype=float)
    states = np.empty((len(controls) + 1, model.state_dim))
    states[0] = np.asarray(initial_state, dtype=float)
    for k in range(len(controls)):
        states[k + 1] = step(model, spec, states[k], controls[k])
    return states


def make_model(name: str, quad_params: QuadrotorParams | None = None,
               control_bound: float | None = None):
    """Factory used by configs: 'double_integrator' or 'quadrotor'."""
    if name == "double_integrator":
        return DoubleIntegrator(control_bound=control_bound)
    if name == "quadrotor":
        return Quadrotor(quad_params or QuadrotorParams())
    raise ValueError(f"unknown dynamics model {name!r}")
