import numpy as np
import pytest

from ddcontrol.kinematics import quat_step, quat_to_rot
from ddcontrol.optimizer import OmegaProblem, closed_form, forecast_rotation, margins, solve
from ddcontrol.surface import es_rate_coeffs

from oracles import grid_oracle, random_problem

S = np.array([748.2954, 1246.5566, 1246.5566]) * 1e-4
Q0 = np.array([0.3774, 0.2877, 0.6255, 0.6193]) / np.linalg.norm([0.3774, 0.2877, 0.6255, 0.6193])
ETA0 = np.array([0.05114, 0.83, 0.55541])
XI0 = quat_to_rot(Q0).T @ (ETA0 / np.linalg.norm(ETA0))
PSI0 = es_rate_coeffs(S, quat_to_rot(Q0) @ XI0, quat_to_rot(Q0), np.zeros(3)).psi


def problem(rhs, **kw):
    kw.setdefault("tau", 0.1)
    return OmegaProblem(psi=PSI0, rhs=rhs, q=Q0, xi=XI0, m=np.ones(3), **kw)


def test_inactive_matches_closed_form():
    pb = problem(-2e-5)
    r = solve(pb)
    assert r.status == "optimal"
    np.testing.assert_allclose(r.omega, closed_form(PSI0, -2e-5), rtol=0, atol=1e-8)
    assert r.residual < 1e-10
    assert margins(pb, r.omega).min() > 0


def test_zero_rhs():
    r = solve(problem(0.0))
    np.testing.assert_allclose(r.omega, 0.0, atol=1e-12)


def test_linear_constraints_one_step():
    # tiny horizon: the forecast margins are affine in w, so one SQP step lands on the optimum
    pb = problem(-2e-5, tau=1e-8, max_iter=1)
    np.testing.assert_allclose(solve(pb).omega, closed_form(PSI0, -2e-5), atol=1e-12)


def test_synthetic_active_case():
    w_free = closed_form(PSI0, -2e-4)
    eta_next = forecast_rotation(Q0, w_free, 1.0) @ XI0
    i = int(np.argmin(eta_next))
    # shift the buffer so the unconstrained optimum sits 5e-3 inside the forbidden side of row i
    pb = problem(-2e-4, tau=1.0, margin=float(eta_next[i]) + 5e-3)
    r = solve(pb)
    assert r.status == "optimal"
    assert margins(pb, r.omega).min() >= -1e-9
    assert np.linalg.norm(r.omega) >= np.linalg.norm(w_free)
    assert r.residual < 1e-10
    assert f"cfg{i + 1}" in r.active


def test_warm_start_continuation():
    prev = None
    for k in range(50):
        pb = problem(-2e-4 * (1 + 0.01 * np.sin(0.1 * k)), tau=1.0, margin=0.02)
        if prev is not None:
            pb.warm_start = prev
        r = solve(pb)
        assert r.status == "optimal"
        if prev is not None:
            assert r.iterations <= 3
        prev = r.omega


def test_unattainable_equality_reports_failure():
    pb = problem(1.0, bound=1e-3)
    r = solve(pb)
    assert r.status != "optimal"


def test_zero_psi_rejected():
    with pytest.raises(ValueError):
        solve(OmegaProblem(psi=np.zeros(3), rhs=0.0, q=Q0, xi=XI0, m=np.ones(3), tau=0.1))
    with pytest.raises(ValueError):
        problem(0.0, bound=0.0)
    with pytest.raises(ValueError):
        problem(0.0, alpha_max=1.0, direction=[1, 1, 0])


def test_forecast_rotation():
    np.testing.assert_array_equal(forecast_rotation(Q0, np.zeros(3), 0.1), quat_to_rot(Q0))
    w = np.array([0.01, -0.02, 0.03])
    np.testing.assert_array_equal(forecast_rotation(Q0, w, 0.1), quat_to_rot(quat_step(Q0, w, 0.1)))
    pb = problem(0.0, tau=1e-8)
    np.testing.assert_allclose(margins(pb, w), quat_to_rot(Q0) @ XI0, atol=1e-9)


def test_rate_map():
    # a zero gain freezes the forecast, so the margins stop depending on w
    pb = problem(0.0, tau=1.0, rate_gain=np.zeros(3))
    np.testing.assert_array_equal(margins(pb, [0.05, 0.05, 0.05]), margins(pb, np.zeros(3)))
    off = np.array([0.0, 0.0, 0.01])
    pb = problem(0.0, tau=1.0, rate_gain=np.ones(3), rate_offset=off)
    np.testing.assert_allclose(margins(pb, np.zeros(3)), forecast_rotation(Q0, off, 1.0) @ XI0, atol=1e-15)


def test_alpha_row():
    pb = problem(-2e-5, alpha_max=np.radians(100), direction=quat_to_rot(Q0)[0])
    c = margins(pb, np.zeros(3))
    assert c.shape == (4,)
    assert c[3] == pytest.approx(1 - np.cos(np.radians(100)), abs=1e-12)


@pytest.mark.parametrize("alpha", [False, True])
def test_grid_oracle_sample(alpha):
    rng = np.random.default_rng(7 + alpha)
    n = 0
    while n < 10:
        pb = random_problem(rng, alpha)
        best, _ = grid_oracle(pb, 21)
        if not np.isfinite(best):
            continue
        n += 1
        r = solve(pb)
        assert 0.5 * r.omega @ r.omega <= best + 1e-6
        assert r.residual < 1e-10
        assert margins(pb, r.omega).min() >= -1e-9
