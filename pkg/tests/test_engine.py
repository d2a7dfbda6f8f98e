import numpy as np
import pytest

from ddcontrol.environment import InertialState, beta_coefficient, relative_wind, translational_derivative
from ddcontrol.kinematics import quat_to_rot, rk4_step
from ddcontrol.sim.engine import (
    COL,
    CTL_OPEN_LOOP,
    EXIT_CONFIG,
    NCOL,
    SimulationError,
    Simulator,
    initial_state,
    synthesize,
)
from ddcontrol.sim.scenario import preset


def test_initial_state_and_design():
    sc = preset("case1")
    x0 = initial_state(sc)
    assert x0.shape == (19,)
    assert np.linalg.norm(x0[12:16]) == pytest.approx(1.0, abs=1e-15)
    d = synthesize(sc, x0)
    assert d.config.label == "I"
    assert d.w_f == pytest.approx(7660.6, abs=0.1)
    assert d.steady.delta_s_bar == pytest.approx(0.0, abs=1e-20)


def test_single_step_record():
    sim = Simulator(preset("case1"))
    rec = sim.step()
    assert rec["t"] == 0.0
    assert rec["S_f"] * 1e4 == pytest.approx(1765.26, abs=0.1)
    assert rec["d"] == pytest.approx(4.8296, abs=1e-4)
    assert all(np.isfinite(v) for k, v in rec.items() if k != "alpha_margin")
    assert sim.k == 1
    assert sim.step()["t"] == pytest.approx(0.1)


def test_determinism_and_split_runs():
    sc = preset("case2", leader_noise_cm2=400.0, eps_beta_amp=0.2, decimate=1, seed=5)
    a = Simulator(sc).run(600).data
    b = Simulator(sc).run(600).data
    np.testing.assert_array_equal(a, b)
    sim = Simulator(sc)
    c = np.vstack([sim.run(250).data, sim.run(350).data])
    np.testing.assert_array_equal(a, c)
    other = Simulator(sc.replace(seed=6)).run(600).data
    assert not np.array_equal(a[:, COL["S_l"]], other[:, COL["S_l"]])


def test_open_loop_is_ballistic():
    rho = 1.6611e-12
    sc = preset("case1", density=dict(kind="constant", rho0=rho), decimate=1)
    sim = Simulator(sc, open_loop=True)
    x0 = sim.x.copy()
    log = sim.run(500)
    assert np.all(log["status"] == CTL_OPEN_LOOP)
    beta = beta_coefficient(sc.mass, rho, sc.cd)
    R = quat_to_rot(x0[12:16])
    s = sc.body().faces
    sl = sc.leader_surface_cm2 * 1e-4

    def f(_, z):
        eta = R @ relative_wind(InertialState(z[6:9], z[9:12])).xi
        lead = translational_derivative(z[:6], sl, beta)
        fol = translational_derivative(z[6:12], s @ np.abs(eta), beta)
        return np.concatenate([*lead, *fol])

    y = x0[:12]
    for k in range(500):
        y = rk4_step(f, y, k * sc.tau, sc.tau)
    np.testing.assert_array_equal(y, sim.x[:12])
    np.testing.assert_array_equal(sim.x[12:], x0[12:])


def test_short_closed_loop_run_is_consistent():
    log = Simulator(preset("case1", decimate=1)).run(3000)
    assert log.data.shape == (3000, NCOL)
    assert log.ok
    np.testing.assert_allclose(np.diff(log["t"]), 0.1, rtol=1e-9)
    eta = log.block("eta")
    assert np.all(eta > 0)
    np.testing.assert_allclose(np.linalg.norm(log.block("q", 4), axis=1), 1.0, atol=1e-12)
    opt = log["status"] == 0
    assert opt.mean() > 0.9
    assert log["eq_residual"][opt].max() < 1e-10


def test_configuration_violation_aborts_with_partial_log():
    # an airflow component of 1e-3 with the rate loop far too slow to hold it
    sc = preset("case1", K_omega=[1e-3, 1e-3, 1e-3], omega_rate_tc=0.0, lag_forecast=False,
                config_margin=0.0, q0=[0.3774, 0.2877, 0.6255, 0.6193])
    with pytest.raises(SimulationError) as exc:
        Simulator(sc).run(20000)
    assert exc.value.log is not None
    assert exc.value.log.exit_code == EXIT_CONFIG
    assert len(exc.value.log) > 0
