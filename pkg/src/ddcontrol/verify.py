"""Self-check suite: analytic oracles run against the library on the nominal design.

Each check returns a :class:`Check`; :func:`run_all` collects them and
:func:`format_table` renders the pass/fail table printed by ``ddcontrol verify``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backstepping import lyapunov_rate
from .environment import InertialState, relative_wind, translational_derivative
from .hcw import are_residual
from .kinematics import quat_step, quat_to_rot, rk4_step
from .surface import CONFIGURATIONS, Configuration, admissible_range, effective_surface, es_rate_coeffs

# printed LQR design of the reference mission (P scaled by 1e-5, g by 1e-6)
PRINTED_G = np.array([-24.135, 0.94868, -3395.6, -11181]) * 1e-6
PRINTED_P = np.array([
    [0.050083, -0.0023172, 7.7172, 22.643],
    [-0.0023172, 0.00030127, -0.60764, -0.89007],
    [7.7172, -0.60764, 2352.8, 3185.8],
    [22.643, -0.89007, 3185.8, 10490],
]) * 1e-5


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    limit: float
    detail: str = ""


def check_face_sum(n: int = 2000, seed: int = 0) -> Check:
    """ES equals sum s_i |eta_i| in the matching configuration; vertices and the max hit the range ends."""
    rng = np.random.default_rng(seed)
    s = np.array([748.2954, 1246.5566, 1246.5566]) * 1e-4
    worst = 0.0
    for eta in rng.normal(size=(n, 3)):
        eta /= np.linalg.norm(eta)
        m = np.where(eta >= 0, 1.0, -1.0)
        worst = max(worst, abs(effective_surface(s, m, eta) - s @ np.abs(eta)) / s.sum())
    lo, hi = admissible_range(s)
    for label in CONFIGURATIONS:
        m = Configuration.from_label(label).vector
        worst = max(worst, abs(effective_surface(s, m, m * s / np.linalg.norm(s)) - hi) / hi)
    for i in range(3):
        e = np.eye(3)[i]
        worst = max(worst, abs(effective_surface(s, np.ones(3), e) - s[i]) / s[i])
    worst = max(worst, abs(lo - s.min()) / lo)
    return Check("ES face-sum oracle", worst < 1e-12, worst, 1e-12, f"{n} random airflows, 8 configurations")


def _design():
    from .sim.engine import initial_state, synthesize
    from .sim.scenario import preset

    sc = preset("case1")
    x0 = initial_state(sc)
    return sc, x0, synthesize(sc, x0)


def check_are(design) -> Check:
    lqr, model = design.lqr, design.model
    res = np.linalg.norm(are_residual(model.A, model.b, lqr.P, lqr.Q, lqr.R)) / np.linalg.norm(lqr.Q)
    hurwitz = np.linalg.eigvals(lqr.Ac).real.max() < 0
    return Check("ARE residual (relative Frobenius)", bool(res < 1e-10 and hurwitz), float(res), 1e-10,
                 f"closed loop Hurwitz: {hurwitz}")


def check_lyapunov(design, n: int = 2000, seed: int = 1) -> Check:
    """V_c decreases: Q + P b b^T P / R is positive definite and sampled rates are negative."""
    lqr, b = design.lqr, design.model.b
    Qt = 0.5 * (lqr.Q + np.outer(lqr.P @ b, lqr.P @ b) / lqr.R)
    lam_min = float(np.linalg.eigvalsh(Qt).min())
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(n):
        X = rng.normal(size=4) * [60.0, 60.0, 0.05, 0.05]
        we = rng.normal(size=3) * 0.01
        ds = rng.normal() * 0.02
        v = lyapunov_rate(lqr.P, lqr.Q, lqr.R, b, X, 0.1, ds, np.eye(3), we)
        worst = max(worst, v)
    return Check("Lyapunov decrease", bool(lam_min > 0 and worst < 0), worst, 0.0,
                 f"min eig of the X weight {lam_min:.3e}")


def check_es_rate(sc, x0, h: float = 1e-2, seed: int = 2) -> Check:
    """dS/dt = psi^T w + phi against a central difference of the propagated ES."""
    rng = np.random.default_rng(seed)
    body = sc.body()
    s_m = body.faces
    q = x0[12:16]
    st = InertialState(x0[6:9], x0[9:12])
    beta = 0.0  # drag-free flow field: the oracle isolates the kinematics

    def f(_, y):
        return np.concatenate(translational_derivative(InertialState(y[:3], y[3:]), 0.0, beta, drag=False))

    y0 = np.concatenate([st.r, st.v])
    worst = 0.0
    for _ in range(5):
        w = rng.uniform(-0.05, 0.05, 3)
        wind = relative_wind(st)
        R = quat_to_rot(q)
        c = es_rate_coeffs(s_m, R @ wind.xi, R, wind.xi_dot)
        analytic = c.psi @ w + c.phi

        def surf(dt):
            sgn = 1.0 if dt > 0 else -1.0  # backward in time = forward in the reversed field
            y = rk4_step(lambda t, z: sgn * f(t, z), y0, 0.0, abs(dt))
            xi = relative_wind(InertialState(y[:3], y[3:])).xi
            return s_m @ (quat_to_rot(quat_step(q, sgn * w, abs(dt))) @ xi)

        fd = (surf(h) - surf(-h)) / (2 * h)
        scale = np.abs(c.psi) @ np.abs(w) + abs(c.phi)
        worst = max(worst, abs(fd - analytic) / scale)
    return Check("finite-difference ES rate", worst < 1e-5, worst, 1e-5, "relative to |psi|.|w| + |phi|")


def check_lqr_fixture() -> Check:
    """Printed gain and Riccati matrix satisfy g = R^-1 P b up to one common factor."""
    ratio = PRINTED_G / PRINTED_P[3]  # b has a single non-zero (last) entry
    cv = float(np.std(ratio) / abs(np.mean(ratio)))
    return Check("LQR fixture ratio g_i/(b^T P)_i", cv < 0.01, cv, 0.01,
                 "coefficient of variation; ratios " + ", ".join(f"{r:.4g}" for r in ratio))


def run_all() -> list[Check]:
    sc, x0, design = _design()
    return [
        check_face_sum(),
        check_are(design),
        check_lyapunov(design),
        check_es_rate(sc, x0),
        check_lqr_fixture(),
    ]


def format_table(checks: list[Check]) -> str:
    w = max(len(c.name) for c in checks)
    lines = [f"{'check':<{w}}  result  {'value':>11}  {'limit':>9}  detail"]
    for c in checks:
        lines.append(f"{c.name:<{w}}  {'PASS' if c.passed else 'FAIL':<6}  {c.value:>11.3e}  {c.limit:>9.1e}  {c.detail}")
    return "\n".join(lines)
