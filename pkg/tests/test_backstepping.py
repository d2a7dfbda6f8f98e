import math

import numpy as np
import pytest

from ddcontrol.backstepping import (
    ControllerGains,
    OmegaRateEstimator,
    capital_lambda,
    control_torque,
    desired_omega,
    euler_step_dynamics,
    lyapunov,
    lyapunov_rate,
    omega_desired_rate,
)
from ddcontrol.kinematics import cross_matrix, rk4_step
from ddcontrol.sim.engine import initial_state, synthesize
from ddcontrol.sim.scenario import preset

J = np.diag([0.9516, 0.9203, 0.0527])


@pytest.fixture(scope="module")
def design():
    sc = preset("case1")
    return synthesize(sc, initial_state(sc))


def test_capital_lambda_examples():
    z4, I4 = np.zeros(4), np.eye(4)
    assert capital_lambda(0.0, I4, z4, z4, I4, z4, 0.0) == 0.0
    assert capital_lambda(1e-4, I4, z4, z4, I4, z4, 0.0) == -1e-4


def test_capital_lambda_expansion():
    rng = np.random.default_rng(0)
    for _ in range(200):
        P, Ac = rng.normal(size=(4, 4)), rng.normal(size=(4, 4))
        b, g, X = rng.normal(size=4), rng.normal(size=4), rng.normal(size=4)
        phi, ds = rng.normal(), rng.normal()
        ref = -phi
        for i in range(4):
            for j in range(4):
                ref += b[i] * P[i, j] * X[j] + g[i] * Ac[i, j] * X[j]
            ref += g[i] * b[i] * ds
        assert abs(capital_lambda(phi, P, b, g, Ac, X, ds) - ref) < 1e-13


def test_desired_omega_closed_form():
    psi = np.array([0.02, -0.01, 0.03])
    r = desired_omega(1e-4, psi, 0.1, 2e-4)
    np.testing.assert_allclose(r.omega, psi * (1e-4 + 0.1 * 2e-4) / (psi @ psi), rtol=1e-15)
    assert r.residual < 1e-10
    np.testing.assert_array_equal(desired_omega(0.0, psi, 0.1, 0.0).omega, 0.0)


def test_desired_omega_singular_holds_previous():
    r = desired_omega(1e-4, [1e-8, 0, 0], 0.1, 0.0, previous=[0.01, 0.0, 0.0])
    assert r.status == "singular"
    np.testing.assert_array_equal(r.omega, [0.01, 0, 0])


def test_rate_estimator():
    tau = 0.1
    assert np.all(OmegaRateEstimator(tau).update([1.0, 2.0, 3.0]) == 0)
    np.testing.assert_array_equal(omega_desired_rate([np.ones(3)] * 5, tau), 0.0)
    c = np.array([1e-3, -2e-3, 5e-4])
    ramp = [c * k * tau for k in range(10)]
    np.testing.assert_allclose(omega_desired_rate(ramp, tau), c, rtol=0, atol=1e-12)
    f = 1e-3
    t = np.arange(0, 200, tau)
    hist = [np.full(3, math.sin(2 * math.pi * f * tk)) for tk in t]
    est = omega_desired_rate(hist, tau)[0]
    exact = 2 * math.pi * f * math.cos(2 * math.pi * f * t[-1])
    assert abs(est - exact) / (2 * math.pi * f) < 1e-3
    with pytest.raises(ValueError):
        OmegaRateEstimator(0.0)


def test_torque_examples():
    w = np.array([0.01, -0.02, 0.03])
    u = control_torque(w, w, np.zeros(3), 0.0, [1, 1, 1], J, np.eye(3))
    np.testing.assert_allclose(u, -cross_matrix(J @ w) @ w, rtol=1e-15)
    np.testing.assert_array_equal(control_torque(np.zeros(3), np.zeros(3), np.zeros(3), 0.0, np.zeros(3), J, np.eye(3)), 0)


def test_euler_examples():
    np.testing.assert_array_equal(euler_step_dynamics(J, [0.1, 0, 0], np.zeros(3)), 0)
    np.testing.assert_allclose(euler_step_dynamics(np.eye(3), np.zeros(3), [1, 0, 0]), [1, 0, 0])


def test_torque_free_energy():
    w = np.array([0.1, 0.05, -0.2])
    e0 = 0.5 * w @ J @ w
    tau = 1e-3
    for k in range(int(100 / tau)):
        w = rk4_step(lambda t, x: euler_step_dynamics(J, x, np.zeros(3)), w, k * tau, tau)
    assert abs(0.5 * w @ J @ w - e0) / e0 < 1e-9


def test_gains_validation():
    np.testing.assert_array_equal(ControllerGains(0.1, [1, 2, 3]).K_omega, np.diag([1, 2, 3]))
    with pytest.raises(ValueError):
        ControllerGains(0.0)
    with pytest.raises(ValueError):
        ControllerGains(0.1, [1, -1, 1])


def test_lyapunov_values():
    d = lyapunov(np.eye(4), np.ones(4), 2.0, J, np.zeros(3))
    assert (d.V1, d.V2, d.Vc) == (2.0, 4.0, 4.0)


def test_lyapunov_rate_along_closed_loop(design):
    """Chain the feedforward, desired rate and torque law through the error dynamics;
    the resulting dVc/dt must equal the closed-form prediction and be negative."""
    P, Q, R, g, Ac = design.lqr.P, design.lqr.Q, design.lqr.R, design.lqr.g, design.lqr.Ac
    b = design.model.b
    A = design.model.A
    k_s, K = 0.1, np.eye(3)
    rng = np.random.default_rng(3)
    for _ in range(500):
        X = rng.normal(size=4) * [60, 60, 0.05, 0.05]
        dSe = rng.normal() * 1e-2
        psi = rng.normal(size=3) * 0.05
        phi = rng.normal() * 1e-5
        w_e = rng.normal(size=3) * 1e-2
        w_d = desired_omega(capital_lambda(phi, P, b, g, Ac, X, dSe), psi, k_s, dSe).omega
        w = w_d + w_e
        wd_dot = rng.normal(size=3) * 1e-3  # any value: the torque law feeds it forward
        # plant: X' = A X + b dS with dS = -g X + dSe; S_f' = psi.w + phi; J w' = S(Jw)w + u
        Xdot = A @ X + b * (-g @ X + dSe)
        dS_d_dot = -g @ Xdot
        dSe_dot = -(psi @ w + phi) - dS_d_dot
        we_dot = euler_step_dynamics(J, w, control_torque(w, w_d, wd_dot, dSe, psi, J, K)) - wd_dot
        vdot = X @ P @ Xdot + dSe * dSe_dot + w_e @ J @ we_dot
        pred = lyapunov_rate(P, Q, R, b, X, k_s, dSe, K, w_e)
        scale = abs(X @ P @ Xdot) + abs(dSe * dSe_dot) + abs(w_e @ J @ we_dot)
        assert abs(vdot - pred) <= 1e-9 * scale
        assert pred < 0
