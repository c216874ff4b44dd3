import numpy as np
import pytest

from localgames.dynamics import (DiscretizationSpec, DoubleIntegrator,
                                 Quadrotor, QuadrotorParams,
                                 continuous_derivative, make_model, rollout,
                                 step)
from localgames.errors import AttitudeSingularityError


@pytest.fixture
def di():
    return DoubleIntegrator()


@pytest.fixture
def quad():
    return Quadrotor()


@pytest.fixture
def spec():
    return DiscretizationSpec(dt=0.1)


class TestDoubleIntegrator:
    def test_constant_velocity_derivative(self, di):
        xdot = continuous_derivative(di, [0, 0, 1, 0], [0, 0])
        assert np.allclose(xdot, [1, 0, 0, 0])

    def test_step_kinematics(self, di, spec):
        nxt = step(di, spec, [0, 0, 0, 0], [1, 0])
        assert np.allclose(nxt, [0.005, 0, 0.1, 0])

    def test_step_drift(self, di, spec):
        nxt = step(di, spec, [0, 0, 1, 0], [0, 0])
        assert np.allclose(nxt, [0.1, 0, 1, 0])

    def test_step_exactness_composition(self, di):
        # two steps of dt equal one step of 2 dt under constant control
        x0 = np.array([0.3, -0.2, 0.7, 1.1])
        u = np.array([0.5, -0.4])
        one = step(di, DiscretizationSpec(dt=0.2), x0, u)
        half = DiscretizationSpec(dt=0.1)
        two = step(di, half, step(di, half, x0, u), u)
        assert np.allclose(one, two, atol=1e-15)

    def test_rollout_constant_acceleration(self, di, spec):
        states = rollout(di, spec, [0, 0, 0, 0], [[1, 0], [1, 0]])
        assert np.allclose(states[:, 0], [0, 0.005, 0.02])

    def test_rollout_zero_controls_constant(self, di, spec):
        states = rollout(di, spec, [1, 2, 0, 0], np.zeros((5, 2)))
        assert np.allclose(states, states[0])

    def test_dimension_mismatch_raises(self, di, spec):
        with pytest.raises(ValueError):
            step(di, spec, [0, 0, 0], [0, 0])
        with pytest.raises(ValueError):
            step(di, spec, [0, 0, 0, 0], [0, 0, 0])

    def test_nonfinite_raises(self, di, spec):
        with pytest.raises(ValueError):
            step(di, spec, [np.nan, 0, 0, 0], [0, 0])


class TestQuadrotor:
    def test_hover_derivative_zero(self, quad):
        x = quad.rest_state([0, 0, 1])
        u = np.full(4, quad.hover_power())
        assert np.abs(continuous_derivative(quad, x, u)).max() == 0.0

    def test_hover_fixed_point_100_steps(self, quad, spec):
        x = quad.rest_state([1, 2, 3])
        u = quad.rest_control()
        x0 = x.copy()
        for _ in range(100):
            x = step(quad, spec, x, u)
        assert np.abs(x - x0).max() < 1e-9

    def test_pitch_moment_only(self, quad):
        # motors (w+d, w, w-d, w): pure pitch torque -2 L k_f d
        w = quad.hover_power()
        d = 0.3
        u = np.array([w + d, w, w - d, w])
        x = quad.rest_state([0, 0, 0])
        xdot = continuous_derivative(quad, x, u)
        tau = xdot[9:12] * np.asarray(quad.params.inertia_diag)
        expect = np.array([0.0, -2 * quad.params.arm_length * quad.params.k_f * d, 0.0])
        assert np.allclose(tau, expect)
        # total thrust unchanged -> no vertical acceleration
        assert abs(xdot[8]) < 1e-12

    def test_rollout_matches_fine_grained_integration(self, quad, spec):
        # oracle: same RK4 at dt/100
        rng = np.random.default_rng(0)
        T = 10
        hover = quad.hover_power()
        controls = hover + 0.05 * rng.standard_normal((T, 4))
        coarse = rollout(quad, spec, quad.rest_state([0, 0, 2]), controls)
        fine_spec = DiscretizationSpec(dt=spec.dt / 100)
        x = quad.rest_state([0, 0, 2])
        fine = [x]
        for k in range(T):
            for _ in range(100):
                x = step(quad, fine_spec, x, controls[k])
            fine.append(x)
        assert np.abs(coarse - np.array(fine)).max() < 1e-4

    def test_rk4_order_four_convergence(self, quad):
        # halving dt shrinks the one-second rollout error by roughly 2^4
        rng = np.random.default_rng(1)
        hover = quad.hover_power()
        u = hover + 0.3 * rng.standard_normal(4)
        x0 = quad.rest_state([0, 0, 2])

        def endpoint(dt, n):
            x = x0
            s = DiscretizationSpec(dt=dt)
            for _ in range(n):
                x = step(quad, s, x, u)
            return x

        ref = endpoint(1.0 / 6400, 6400)
        err1 = np.linalg.norm(endpoint(0.1, 10) - ref)
        err2 = np.linalg.norm(endpoint(0.05, 20) - ref)
        assert 8.0 < err1 / err2 < 32.0

    def test_continuous_jacobians_match_fd(self, quad):
        rng = np.random.default_rng(2)
        x = quad.rest_state([0, 0, 1]) + 0.3 * rng.standard_normal(12)
        u = quad.rest_control() + 0.4 * rng.standard_normal(4)
        A, B = quad.continuous_jacobians(x[None], u[None])
        eps = 1e-6
        for i in range(12):
            dx = np.zeros(12)
            dx[i] = eps
            col = (quad.derivative(x + dx, u) - quad.derivative(x - dx, u)) / (2 * eps)
            assert np.abs(A[0][:, i] - col).max() < 1e-6
        for j in range(4):
            du = np.zeros(4)
            du[j] = eps
            col = (quad.derivative(x, u + du) - quad.derivative(x, u - du)) / (2 * eps)
            assert np.abs(B[0][:, j] - col).max() < 1e-6

    def test_discrete_jacobians_match_fd(self, quad):
        rng = np.random.default_rng(3)
        x = quad.rest_state([0, 0, 1]) + 0.2 * rng.standard_normal(12)
        u = quad.rest_control() + 0.3 * rng.standard_normal(4)
        nxt, A, B = quad.step_and_jacobians(x[None], u[None], 0.1)
        assert np.allclose(nxt[0], quad.step_batch(x[None], u[None], 0.1)[0])
        eps = 1e-6
        for i in range(12):
            dx = np.zeros(12)
            dx[i] = eps
            col = (quad.step_batch((x + dx)[None], u[None], 0.1)
                   - quad.step_batch((x - dx)[None], u[None], 0.1))[0] / (2 * eps)
            assert np.abs(A[0][:, i] - col).max() < 1e-8
        for j in range(4):
            du = np.zeros(4)
            du[j] = eps
            col = (quad.step_batch(x[None], (u + du)[None], 0.1)
                   - quad.step_batch(x[None], (u - du)[None], 0.1))[0] / (2 * eps)
            assert np.abs(B[0][:, j] - col).max() < 1e-8

    def test_costate_curvature_matches_fd(self, quad):
        rng = np.random.default_rng(4)
        x = quad.rest_state([0, 0, 1]) + 0.3 * rng.standard_normal(12)
        u = quad.rest_control() + 0.5 * rng.standard_normal(4)
        m = rng.standard_normal(12)
        Hxx, Hxu = quad.costate_curvature(x[None], u[None], m[None])
        eps = 1e-6

        def grad(x_, u_):
            A, B = quad.continuous_jacobians(x_[None], u_[None])
            return A[0].T @ m, B[0].T @ m

        for i in range(12):
            dx = np.zeros(12)
            dx[i] = eps
            gp, _ = grad(x + dx, u)
            gm, _ = grad(x - dx, u)
            assert np.abs(Hxx[0][:, i] - (gp - gm) / (2 * eps)).max() < 1e-6
        for j in range(4):
            du = np.zeros(4)
            du[j] = eps
            gp, _ = grad(x, u + du)
            gm, _ = grad(x, u - du)
            assert np.abs(Hxu[0][:, j] - (gp - gm) / (2 * eps)).max() < 1e-6

    def test_pitch_guard(self, quad, spec):
        x = quad.rest_state([0, 0, 1])
        x[4] = np.pi / 2
        with pytest.raises(AttitudeSingularityError):
            step(quad, spec, x, quad.rest_control())

    def test_motor_bounds(self, quad):
        lb, ub = quad.control_bounds()
        assert np.all(lb == 0)
        assert np.allclose(ub, 4.0 * quad.hover_power())


class TestFactoryAndSpec:
    def test_make_model(self):
        assert make_model("double_integrator").name == "double_integrator"
        assert make_model("quadrotor").name == "quadrotor"
        with pytest.raises(ValueError):
            make_model("unicycle")

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            DiscretizationSpec(dt=0.0)
        with pytest.raises(ValueError):
            DiscretizationSpec(dt=0.1, scheme="euler")

    def test_scheme_mismatch(self):
        di = DoubleIntegrator()
        with pytest.raises(ValueError):
            step(di, DiscretizationSpec(dt=0.1, scheme="rk4"),
                 [0, 0, 0, 0], [0, 0])

    def test_params_validation(self):
        with pytest.raises(ValueError):
            QuadrotorParams(mass=-1.0)
        with pytest.raises(ValueError):
            QuadrotorParams(inertia_diag=(0.01, -0.01, 0.02))
