"""Closed-loop simulator: truth dynamics, backstepping controller and logging.

The truth state is one 19-vector ``[r_l, v_l, r_f, v_f, q, w]`` integrated by
RK4 with the torque, the leader surface and the beta error held over each
control step. The whole control/integration step is a numba kernel; Python
only feeds it pre-drawn noise in fixed-size chunks so a run is a pure
function of ``(scenario, seed)``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..backstepping import PSI_SINGULAR, _capital_lambda, _lyapunov
from ..environment import (
    MU_EARTH,
    OMEGA_EARTH,
    _accel,
    _density,
    _norm3,
    _relative_hill,
    _wind,
    _xi_dot,
    beta_coefficient,
    elements_to_cartesian,
    relative_wind,
)
from ..hcw import build_hcw, bryson_weights, solve_are, steady_state_design
from ..kinematics import _quat_rate, _quat_to_rot, _sign_vector
from ..optimizer import (
    FEAS_TOL,
    N_CFG,
    ROW_ALPHA,
    STATUS_INFEASIBLE,
    STATUS_MAX_ITER,
    STATUS_OPTIMAL,
    _nonlin,
    _sqp,
)
from ..surface import Configuration, ConfigurationViolation, _es_coeffs
from .scenario import Scenario

log = logging.getLogger(__name__)

CHUNK = 20000
RECOVERY = 0.2  # fraction of the configuration-buffer deficit recovered per step

# controller status per step
CTL_OPTIMAL = 0
CTL_MAX_ITER = 1  # iteration cap hit, iterate feasible and accepted
CTL_FALLBACK = 2  # solver failed; box-clipped closed form (diagnostic mode only)
CTL_RATE_LIMITED = 3  # equality unattainable; largest attainable fraction of it enforced
CTL_SINGULAR = 4  # |psi| below threshold; previous w_d held
CTL_OPEN_LOOP = 5
CTL_NAMES = ("optimal", "max-iter", "fallback", "rate-limited", "singular", "open-loop")

# kernel exit codes
EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_NONFINITE = 3
EXIT_NAMES = ("ok", "configuration violation", "optimizer infeasible", "non-finite state")

# SI log columns; logio maps them to presentation units
COLUMNS = (
    ("t", "s"),
    *[(f"rl_{c}", "m") for c in "xyz"], *[(f"vl_{c}", "m/s") for c in "xyz"],
    *[(f"rf_{c}", "m") for c in "xyz"], *[(f"vf_{c}", "m/s") for c in "xyz"],
    *[(f"{c}_h", "m") for c in "xyz"], *[(f"d{c}_h", "m/s") for c in "xyz"],
    ("d", "m"),
    *[(f"q{i}", "-") for i in range(1, 5)],
    *[(f"w{i}", "rad/s") for i in range(1, 4)],
    *[(f"wd{i}", "rad/s") for i in range(1, 4)],
    *[(f"eta{i}", "-") for i in range(1, 4)],
    ("S_f", "m^2"), ("dS", "m^2"), ("dS_d", "m^2"), ("dS_e", "m^2"),
    *[(f"u{i}", "N m") for i in range(1, 4)],
    ("V1", "-"), ("V2", "-"), ("Vc", "-"),
    *[(f"margin{i}", "-") for i in range(1, 4)],
    ("alpha_margin", "-"),
    ("status", "-"), ("iterations", "-"), ("eq_residual", "m^2/s"),
    ("rho_f", "kg/m^3"), ("rho_l", "kg/m^3"), ("S_l", "m^2"), ("saturated", "-"), ("Lambda", "m^2/s"),
)
COL = {name: i for i, (name, _) in enumerate(COLUMNS)}
NCOL = len(COLUMNS)


class SimulationError(RuntimeError):
    """Run aborted; ``log`` holds every record written before the failure."""

    def __init__(self, msg: str, log: "SimLog | None" = None):
        super().__init__(msg)
        self.log = log


@dataclass(frozen=True)
class Design:
    model: object
    lqr: object
    steady: object
    config: Configuration
    beta_bar: float
    w_f: float
    nu_f: float
    incl: float

    def summary(self) -> dict:
        return dict(
            configuration=self.config.label,
            beta_bar=self.beta_bar,
            w_f=self.w_f,
            nu_f=self.nu_f,
            lambda_i=self.model.lam,
            g=self.lqr.g.tolist(),
            P=self.lqr.P.tolist(),
            Q_diag=np.diag(self.lqr.Q).tolist(),
            R=self.lqr.R,
            are_residual=self.lqr.residual,
            closed_loop_eigs=[complex(z).real for z in np.linalg.eigvals(self.lqr.Ac)],
            delta_s_bar=self.steady.delta_s_bar,
            eps_r=self.steady.eps_r,
        )


@dataclass
class SimLog:
    data: np.ndarray  # rows x NCOL, SI
    scenario: dict
    design: dict = field(default_factory=dict)
    exit_code: int = EXIT_OK
    message: str = "ok"
    wall_time: float = 0.0

    columns = tuple(n for n, _ in COLUMNS)
    units = tuple(u for _, u in COLUMNS)

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, COL[name]]

    def block(self, prefix: str, n: int = 3, start: int = 1) -> np.ndarray:
        return np.column_stack([self[f"{prefix}{i}"] for i in range(start, start + n)])

    @property
    def ok(self) -> bool:
        return self.exit_code == EXIT_OK


# --- kernels ---------------------------------------------------------------


@njit(cache=True)
def _deriv(x, u, s_l, fac_l, fac_f, s, Jm, Jinv, K, fb, dk, d0, dh0, dhs, dalt, dlog, use_j2, mu, we):
    out = np.empty(19)
    rl = x[0:3]
    vl = x[3:6]
    rf = x[6:9]
    vf = x[9:12]
    q = x[12:16]
    w = x[16:19]
    rho_l = _density(dk, d0, dh0, dhs, dalt, dlog, rl)
    rho_f = _density(dk, d0, dh0, dhs, dalt, dlog, rf)
    al = _accel(rl, vl, s_l, rho_l * fac_l, use_j2, mu, we)
    wind = _wind(rf, vf, we)
    eta = _quat_to_rot(q) @ (wind / _norm3(wind))
    area = s[0] * abs(eta[0]) + s[1] * abs(eta[1]) + s[2] * abs(eta[2])
    af = _accel(rf, vf, area, rho_f * fac_f, use_j2, mu, we)
    Jw = Jm @ w
    gyro = np.empty(3)
    gyro[0] = Jw[1] * w[2] - Jw[2] * w[1]
    gyro[1] = Jw[2] * w[0] - Jw[0] * w[2]
    gyro[2] = Jw[0] * w[1] - Jw[1] * w[0]
    if fb:
        # rate feedback and gyroscopic cancellation re-evaluated at the stage state
        wdot = Jinv @ (u - K @ w)
    else:
        wdot = Jinv @ (gyro + u)
    qd = _quat_rate(q, w)
    for i in range(3):
        out[i] = vl[i]
        out[3 + i] = al[i]
        out[6 + i] = vf[i]
        out[9 + i] = af[i]
        out[16 + i] = wdot[i]
    for i in range(4):
        out[12 + i] = qd[i]
    return out


@njit(cache=True)
def _all_finite(x):
    for i in range(x.shape[0]):
        if not math.isfinite(x[i]):
            return False
    return True


@njit(cache=True)
def _feasible(w, psi, rhs, q, xi, m, tau, use_alpha, cos_amax, l, bound, margin, fg, fc):
    if abs(psi @ w - rhs) >= 1e-10 * max(1.0, abs(rhs)):
        return False
    for j in range(3):
        if abs(w[j]) > bound * (1.0 + 1e-12):
            return False
    c = _nonlin(w, q, xi, m, tau, l, cos_amax, margin, fg, fc)
    for i in range(N_CFG + 1):
        if (i != ROW_ALPHA or use_alpha) and c[i] < -FEAS_TOL:
            return False
    return True


@njit(cache=True)
def _desired_rate(psi, rhs, q, xi, m, tau, use_alpha, cos_amax, l, bound, margin, w0, max_iter, strict, fg, fc):
    """Returns (w_d, controller status, iterations, ok)."""
    w, st, it, mask, kkt = _sqp(psi, rhs, q, xi, m, tau, use_alpha, cos_amax, l, bound, margin, w0, max_iter, fg, fc)
    if st == STATUS_OPTIMAL:
        return w, CTL_OPTIMAL, it, True
    if st == STATUS_MAX_ITER and _feasible(w, psi, rhs, q, xi, m, tau, use_alpha, cos_amax, l, bound, margin, fg, fc):
        return w, CTL_MAX_ITER, it, True
    # restart from the box-clipped closed form
    pp = psi @ psi
    wc = psi * (rhs / pp)
    for j in range(3):
        wc[j] = min(max(wc[j], -bound), bound)
    w, st, it2, mask, kkt = _sqp(psi, rhs, q, xi, m, tau, use_alpha, cos_amax, l, bound, margin, wc, max_iter, fg, fc)
    it += it2
    if st == STATUS_OPTIMAL or (st == STATUS_MAX_ITER and
                                _feasible(w, psi, rhs, q, xi, m, tau, use_alpha, cos_amax, l, bound, margin, fg, fc)):
        return w, CTL_MAX_ITER if st != STATUS_OPTIMAL else CTL_OPTIMAL, it, True
    # equality out of reach: enforce the largest attainable fraction of it,
    # first with the configuration buffer, then (if the state already sits
    # inside the buffer) with the bare constraint
    reach = min(1.0, 0.999 * bound * (abs(psi[0]) + abs(psi[1]) + abs(psi[2])) / max(abs(rhs), 1e-300))
    for mg in (margin, 0.0):
        if mg != margin and margin <= 0.0:
            break
        lo = 0.0
        hi = reach
        frac = hi
        have = False
        best = np.zeros(3)
        for _ in range(10):
            wt, st, it2, mask, kkt = _sqp(psi, frac * rhs, q, xi, m, tau, use_alpha, cos_amax, l, bound, mg,
                                          w0, max_iter, fg, fc)
            it += it2
            if st != STATUS_INFEASIBLE and _feasible(wt, psi, frac * rhs, q, xi, m, tau, use_alpha, cos_amax, l,
                                                      bound, mg, fg, fc):
                best = wt
                have = True
                lo = frac
                if frac == hi:
                    break
            else:
                hi = frac
                if not have and frac < 1e-3 * reach:
                    break
            frac = 0.5 * (lo + hi) if have else 0.5 * frac
        if have:
            return best, CTL_RATE_LIMITED, it, True
        # holding S_f still is infeasible (e.g. S_f trapped at a vertex of the
        # configuration): give back the smallest reversal that keeps the margin
        full = 0.999 * bound * (abs(psi[0]) + abs(psi[1]) + abs(psi[2])) / max(abs(rhs), 1e-300)
        for k in range(16):
            frac = -full * 0.5 ** (15 - k)
            wt, st, it2, mask, kkt = _sqp(psi, frac * rhs, q, xi, m, tau, use_alpha, cos_amax, l, bound, mg,
                                          w0, max_iter, fg, fc)
            it += it2
            if st != STATUS_INFEASIBLE and _feasible(wt, psi, frac * rhs, q, xi, m, tau, use_alpha, cos_amax, l,
                                                      bound, mg, fg, fc):
                return wt, CTL_RATE_LIMITED, it, True
    return wc, CTL_FALLBACK, it, not strict


@njit(cache=True)
def _run_chunk(x, ctl, k0, n, tau, horizon, lag, mu, we,
               s, s_m, m, Jm, Jinv, K,
               P, b, g, Ac, ref, ds_bar, ds_lo, ds_hi, k_s, rate_alpha,
               sl_bar, sl_hat, sl_lo, sl_hi, cd_fac, eps_beta, eps_beta_amp,
               dk, d0, dh0, dhs, dalt, dlog, use_j2,
               use_alpha, cos_amax, l, bound, margin, max_iter, strict, open_loop, fb,
               n_sl, n_beta, n_w0, out, row0, decim):
    """Advance ``n`` steps in place. Returns (exit code, steps done, next free log row).

    ``ctl`` = [w_d prev (3), w_d rate (3), started flag].
    """
    row = row0
    X = np.empty(4)
    w0 = np.empty(3)
    wd_dot = np.empty(3)
    fg = np.ones(3)
    fc = np.zeros(3)
    for k in range(n):
        rl = x[0:3]
        vl = x[3:6]
        rf = x[6:9]
        vf = x[9:12]
        q = x[12:16].copy()
        w = x[16:19].copy()
        # (1) airflow, ES and its rate coefficients
        wind = _wind(rf, vf, we)
        xi = wind / _norm3(wind)
        xid = _xi_dot(rf, vf, wind, we, mu)
        R = _quat_to_rot(q)
        eta = R @ xi
        S_f = s_m @ eta
        phi, psi = _es_coeffs(s_m, eta, R, xid)
        cfg_ok = True
        for i in range(3):
            if m[i] * eta[i] < 0.0:
                cfg_ok = False
        # (2) orbit error -> dS_d, Lambda
        dr, dv = _relative_hill(rl, vl, rf, vf)
        X[0] = dr[0] - ref[0]
        X[1] = dr[1] - ref[1]
        X[2] = dv[0] - ref[2]
        X[3] = dv[1] - ref[3]
        dsd = -(g @ X) + ds_bar
        sat = 0.0
        if dsd < ds_lo:
            dsd = ds_lo
            sat = 1.0
        elif dsd > ds_hi:
            dsd = ds_hi
            sat = 1.0
        dS = sl_bar - S_f
        dSe = dS - dsd
        lam = _capital_lambda(phi, P, b, g, Ac, X, dSe)
        rhs = lam + k_s * dSe
        # (3) desired body rate
        status = CTL_OPEN_LOOP
        iters = 0
        ok = True
        wd = ctl[0:3].copy()
        if not open_loop:
            if math.sqrt(psi @ psi) < PSI_SINGULAR:
                status = CTL_SINGULAR
            else:
                for j in range(3):
                    w0[j] = w[j] + n_w0[k, j]
                # inside the buffer: ask for a partial recovery towards it each step
                cur = min(m[0] * eta[0], min(m[1] * eta[1], m[2] * eta[2]))
                mg = margin if cur >= margin else max(cur, 0.0) + RECOVERY * (margin - max(cur, 0.0))
                # forecast rate: w_d seen through the first-order lag of the rate loop
                for j in range(3):
                    if lag[j] > 0.0:
                        e = lag[j] * (1.0 - math.exp(-horizon / lag[j]))
                        fg[j] = (horizon - e) / horizon
                        fc[j] = w[j] * e / horizon
                    else:
                        fg[j] = 1.0
                        fc[j] = 0.0
                # airflow direction extrapolated to the end of the look-ahead
                xf = xi + horizon * xid
                xf /= _norm3(xf)
                wd, status, iters, ok = _desired_rate(psi, rhs, q, xf, m, horizon, use_alpha, cos_amax, l,
                                                     bound, mg, w0, max_iter, strict, fg, fc)
            if ctl[6] == 0.0:
                for j in range(3):
                    wd_dot[j] = 0.0
            else:
                for j in range(3):
                    raw = (wd[j] - ctl[j]) / tau
                    wd_dot[j] = ctl[3 + j] + rate_alpha * (raw - ctl[3 + j])
        else:
            for j in range(3):
                wd[j] = 0.0
                wd_dot[j] = 0.0
        # (4) torque; the dS_e*psi cross term only makes sense while the
        # surface equality is enforced, otherwise it drives w across the
        # constraint the optimizer just respected
        cross = dSe if (status == CTL_OPTIMAL or status == CTL_MAX_ITER) else 0.0
        we_ = w - wd
        u = np.zeros(3)
        if not open_loop:
            Jw = Jm @ w
            u[0] = -(Jw[1] * w[2] - Jw[2] * w[1])
            u[1] = -(Jw[2] * w[0] - Jw[0] * w[2])
            u[2] = -(Jw[0] * w[1] - Jw[1] * w[0])
            u += Jm @ wd_dot + cross * psi - K @ we_
        # held part of the law when the rate loop is closed inside the integrator
        uh = Jm @ wd_dot + cross * psi + K @ wd
        if open_loop:
            uh[:] = 0.0
        uk = uh if fb else u
        # leader surface and beta realization for this step
        s_l = min(max(sl_bar + sl_hat * n_sl[k], sl_lo), sl_hi)
        fac = cd_fac * (1.0 + eps_beta + eps_beta_amp * n_beta[k])
        # log the pre-step record
        if (k0 + k) % decim == 0:
            o = out[row]
            o[0] = (k0 + k) * tau
            for i in range(12):
                o[1 + i] = x[i]
            for i in range(3):
                o[13 + i] = dr[i]
                o[16 + i] = dv[i]
            o[19] = _norm3(dr)
            for i in range(4):
                o[20 + i] = q[i]
            for i in range(3):
                o[24 + i] = w[i]
                o[27 + i] = wd[i]
                o[30 + i] = eta[i]
            o[33] = S_f
            o[34] = dS
            o[35] = dsd
            o[36] = dSe
            for i in range(3):
                o[37 + i] = u[i]
            v1, v2, vc = _lyapunov(P, X, dSe, Jm, we_)
            o[40] = v1
            o[41] = v2
            o[42] = vc
            for i in range(3):
                o[43 + i] = m[i] * eta[i]
            o[46] = R[0] @ l - cos_amax if use_alpha else np.nan
            o[47] = status
            o[48] = iters
            o[49] = abs(psi @ wd - rhs)
            o[50] = _density(dk, d0, dh0, dhs, dalt, dlog, rf)
            o[51] = _density(dk, d0, dh0, dhs, dalt, dlog, rl)
            o[52] = s_l
            o[53] = sat
            o[54] = lam
            row += 1
        if strict and not cfg_ok:
            return EXIT_CONFIG, k, row
        if not ok:
            return EXIT_SOLVER, k, row
        # controller memory
        for j in range(3):
            ctl[j] = wd[j]
            ctl[3 + j] = wd_dot[j]
        ctl[6] = 1.0
        # (5) RK4 with zero-order hold on u, S_l and beta
        k1 = _deriv(x, uk, s_l, fac, fac, s, Jm, Jinv, K, fb, dk, d0, dh0, dhs, dalt, dlog, use_j2, mu, we)
        k2 = _deriv(x + 0.5 * tau * k1, uk, s_l, fac, fac, s, Jm, Jinv, K, fb, dk, d0, dh0, dhs, dalt, dlog, use_j2, mu, we)
        k3 = _deriv(x + 0.5 * tau * k2, uk, s_l, fac, fac, s, Jm, Jinv, K, fb, dk, d0, dh0, dhs, dalt, dlog, use_j2, mu, we)
        k4 = _deriv(x + tau * k3, uk, s_l, fac, fac, s, Jm, Jinv, K, fb, dk, d0, dh0, dhs, dalt, dlog, use_j2, mu, we)
        xn = x + (tau / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not _all_finite(xn):
            return EXIT_NONFINITE, k, row
        qn = math.sqrt(xn[12] ** 2 + xn[13] ** 2 + xn[14] ** 2 + xn[15] ** 2)
        for i in range(4):
            xn[12 + i] /= qn
        for i in range(19):
            x[i] = xn[i]
    return EXIT_OK, n, row


# --- Python driver ---------------------------------------------------------


def initial_state(sc: Scenario) -> np.ndarray:
    f = elements_to_cartesian(sc.follower.to_elements())
    lead = elements_to_cartesian(sc.leader.to_elements())
    q = np.asarray(sc.q0, float)
    q = q / np.linalg.norm(q)
    return np.concatenate([lead.r, lead.v, f.r, f.v, q, np.asarray(sc.omega0, float)])


def synthesize(sc: Scenario, x0: np.ndarray | None = None) -> Design:
    """Configuration, HCW model, LQR gain and steady-state offsets frozen at t = 0."""
    x0 = initial_state(sc) if x0 is None else x0
    wind = relative_wind(x0[6:12])
    nu_vec = np.cross(x0[6:9], x0[9:12]) / float(x0[6:9] @ x0[6:9])
    eta = _quat_to_rot(x0[12:16]) @ wind.xi
    cfg = Configuration.from_signs(_sign_vector(eta))
    if sc.configuration is not None:
        want = Configuration.from_label(sc.configuration)
        if want.m != cfg.m:
            msg = f"initial airflow is in configuration {cfg.label}, scenario asks for {want.label}"
            if sc.strict:
                raise ConfigurationViolation(msg)
            log.warning(msg)
        cfg = want
    beta_bar = beta_coefficient(sc.mass, sc.rho_bar, sc.cd)
    w_f = float(np.linalg.norm(wind.w))
    nu_f = float(np.linalg.norm(nu_vec))
    incl = sc.follower.to_elements().i
    model = build_hcw(nu_f, w_f, beta_bar, sc.leader_surface_cm2 * 1e-4, incl)
    spec = sc.lqr
    if spec.Q_diag is not None:
        Q, R = np.diag(np.asarray(spec.Q_diag, float)), spec.R
    else:
        Q, R = bryson_weights(spec.state_ranges, spec.input_range_cm2 * 1e-4, spec.R)
    lqr = solve_are(model, Q, R)
    steady = steady_state_design(model, sc.x_d)
    return Design(model, lqr, steady, cfg, beta_bar, w_f, nu_f, incl)


class Simulator:
    """Stateful closed loop. ``step`` advances one control period, ``run`` the rest."""

    def __init__(self, scenario: Scenario, open_loop: bool = False):
        self.sc = scenario
        self.open_loop = open_loop
        self.x = initial_state(scenario)
        self.design = synthesize(scenario, self.x)
        self.ctl = np.zeros(7)
        self.k = 0
        self.rng = np.random.default_rng(scenario.seed)
        self._noise = None
        self._noise_k = 0
        self._kernel_args = self._pack()

    # noise is drawn in fixed blocks so results do not depend on how run/step calls are split
    def _draw(self, n: int):
        out = []
        need = n
        while need:
            if self._noise is None or self._noise_k == CHUNK:
                self._noise = (self.rng.uniform(-1.0, 1.0, CHUNK), self.rng.uniform(-1.0, 1.0, CHUNK),
                               self.rng.uniform(-1e-6, 1e-6, (CHUNK, 3)))
                self._noise_k = 0
            take = min(need, CHUNK - self._noise_k)
            sl = slice(self._noise_k, self._noise_k + take)
            out.append(tuple(a[sl] for a in self._noise))
            self._noise_k += take
            need -= take
        return tuple(np.ascontiguousarray(np.concatenate(parts)) for parts in zip(*out))

    def _pack(self):
        sc, d = self.sc, self.design
        body = sc.body()
        s = body.faces
        m = d.config.vector
        lqr, ss = d.lqr, d.steady
        smin, smax = float(s.min()), float(np.linalg.norm(s))
        sl_bar = sc.leader_surface_cm2 * 1e-4
        noisy = not sc.exact_model
        dens = sc.truth_density().kernel_args()
        use_alpha = bool(sc.alpha_constraint)
        K = np.diag(np.asarray(sc.K_omega, float)) if np.ndim(sc.K_omega) == 1 else np.asarray(sc.K_omega, float)
        lag = np.diag(body.inertia) / np.diag(K) if sc.lag_forecast else np.zeros(3)
        horizon = sc.forecast_horizon or (float(lag.max()) if sc.lag_forecast else sc.tau)
        return dict(
            tau=float(sc.tau), horizon=float(max(horizon, sc.tau)), lag=lag, mu=MU_EARTH, we=OMEGA_EARTH,
            s=s, s_m=m * s, m=m, Jm=body.inertia, Jinv=np.linalg.inv(body.inertia),
            K=K,
            P=lqr.P, b=d.model.b, g=lqr.g, Ac=lqr.Ac, ref=ss.reference,
            ds_bar=float(ss.delta_s_bar), ds_lo=sl_bar - smax, ds_hi=sl_bar - smin,
            k_s=float(sc.k_s),
            rate_alpha=1.0 if sc.omega_rate_tc <= 0 else 1.0 - math.exp(-sc.tau / sc.omega_rate_tc),
            sl_bar=sl_bar, sl_hat=sc.leader_noise_cm2 * 1e-4 if noisy else 0.0, sl_lo=smin, sl_hi=smax,
            cd_fac=sc.cd / (2.0 * sc.mass),
            eps_beta=sc.eps_beta if noisy else 0.0, eps_beta_amp=sc.eps_beta_amp if noisy else 0.0,
            dk=dens[0], d0=dens[1], dh0=dens[2], dhs=dens[3], dalt=dens[4], dlog=dens[5],
            use_j2=bool(sc.use_j2),
            use_alpha=use_alpha, cos_amax=math.cos(math.radians(sc.alpha_max_deg)) if use_alpha else -2.0,
            l=np.asarray(sc.pointing, float) / np.linalg.norm(sc.pointing),
            bound=float(sc.omega_bound), margin=float(sc.config_margin), max_iter=int(sc.max_iter),
            strict=bool(sc.strict), open_loop=bool(self.open_loop),
            fb=bool(sc.rate_loop == "stage" and not self.open_loop),
        )

    def _advance(self, n: int, out: np.ndarray, row: int, decim: int):
        n_sl, n_beta, n_w0 = self._draw(n)
        code, done, row = _run_chunk(self.x, self.ctl, self.k, n, **self._kernel_args,
                                     n_sl=n_sl, n_beta=n_beta, n_w0=n_w0, out=out, row0=row, decim=decim)
        self.k += done
        return code, row

    def step(self) -> dict:
        """One control period; returns the pre-step record as a dict of SI values."""
        out = np.full((1, NCOL), np.nan)
        k_before = self.k
        code, row = self._advance(1, out, 0, 1)
        rec = dict(zip(SimLog.columns, out[0]))
        rec["t"] = k_before * self.sc.tau
        if code != EXIT_OK:
            raise SimulationError(f"step {k_before}: {EXIT_NAMES[code]}")
        return rec

    def run(self, n_steps: int | None = None, decimate: int | None = None, progress=None) -> SimLog:
        n = self.sc.n_steps - self.k if n_steps is None else n_steps
        decim = self.sc.decimate if decimate is None else decimate
        rows = (n + (self.k % decim)) // decim + 2
        out = np.full((rows, NCOL), np.nan)
        row = 0
        t0 = time.perf_counter()
        code = EXIT_OK
        left = n
        while left > 0 and code == EXIT_OK:
            step = min(left, CHUNK)
            code, row = self._advance(step, out, row, decim)
            left -= step
            if progress is not None:
                progress(self.k, n)
        simlog = SimLog(out[:row].copy(), self.sc.to_dict(), self.design.summary(), code,
                        EXIT_NAMES[code], time.perf_counter() - t0)
        if code != EXIT_OK:
            t = self.k * self.sc.tau
            simlog.message = f"{EXIT_NAMES[code]} at t = {t:.1f} s (step {self.k})"
            raise SimulationError(simlog.message, simlog)
        return simlog


def run(scenario: Scenario, **kw) -> SimLog:
    return Simulator(scenario).run(**kw)
