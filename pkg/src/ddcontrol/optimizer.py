"""Minimum-norm desired body rate under the ES equality and attitude constraints.

    min 1/2 |w|^2
    s.t. psi^T w = rhs
         diag(m) R(q+(w)) xi >= margin          (configuration hold, one step ahead)
         e_x^T R(q+(w)) l - cos(alpha_max) >= margin   (optional pointing constraint)
         |w_j| <= bound

``q+(w)`` is the closed-form one-step quaternion forecast. The problem is
solved by SQP: constraints are linearized at the iterate, the QP
subproblem (projection of the origin onto a polyhedron in R^3) is solved
exactly by an active-set search over at most two active inequalities, and
steps are globalized with an l1 merit line search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .kinematics import _quat_step, _quat_to_rot, _vec

STATUS_OPTIMAL = 0
STATUS_MAX_ITER = 1
STATUS_INFEASIBLE = 2
STATUS_NAMES = {STATUS_OPTIMAL: "optimal", STATUS_MAX_ITER: "max-iter", STATUS_INFEASIBLE: "infeasible"}

# row layout of the inequality block
N_CFG = 3
ROW_ALPHA = 3
N_NONLIN = 4
N_INEQ = 10
CONSTRAINT_LABELS = ("cfg1", "cfg2", "cfg3", "alpha", "w1<=", "w2<=", "w3<=", "w1>=", "w2>=", "w3>=")

FD_STEP = 1e-6
STEP_TOL = 1e-10
KKT_TOL = 1e-9
FEAS_TOL = 1e-9


@dataclass
class OmegaProblem:
    psi: np.ndarray
    rhs: float
    q: np.ndarray
    xi: np.ndarray
    m: np.ndarray
    tau: float
    bound: float = 0.05
    margin: float = 0.0
    alpha_max: float | None = None
    direction: np.ndarray | None = None
    warm_start: np.ndarray = field(default_factory=lambda: np.zeros(3))
    max_iter: int = 50
    # forecast rotation rate = rate_gain * omega + rate_offset (omega itself by default)
    rate_gain: np.ndarray | None = None
    rate_offset: np.ndarray | None = None

    def __post_init__(self):
        if self.bound <= 0:
            raise ValueError("rate bound must be positive")
        if self.alpha_max is not None:
            d = _vec(self.direction if self.direction is not None else [1.0, 0.0, 0.0])
            if abs(np.linalg.norm(d) - 1.0) > 1e-9:
                raise ValueError("pointing direction must be a unit vector")
            self.direction = d


@dataclass(frozen=True)
class SolveReport:
    omega: np.ndarray
    residual: float
    active: tuple[str, ...]
    iterations: int
    status: str
    kkt: float
    min_margin: float


@njit(cache=True)
def _forecast(q, w, tau):
    return _quat_to_rot(_quat_step(q, w, tau))


@njit(cache=True)
def _nonlin(w, q, xi, m, tau, l, cos_amax, margin, fg, fc):
    # the attitude is forecast at the rotation rate fg*w + fc (identity map by default)
    R = _forecast(q, fg * w + fc, tau)
    eta = R @ xi
    c = np.empty(N_NONLIN)
    for i in range(3):
        c[i] = m[i] * eta[i] - margin
    c[ROW_ALPHA] = R[0, 0] * l[0] + R[0, 1] * l[1] + R[0, 2] * l[2] - cos_amax - margin
    return c


@njit(cache=True)
def _nonlin_jac(w, q, xi, m, tau, l, cos_amax, margin, fg, fc):
    J = np.empty((N_NONLIN, 3))
    wp = w.copy()
    for j in range(3):
        wp[j] = w[j] + FD_STEP
        cp = _nonlin(wp, q, xi, m, tau, l, cos_amax, margin, fg, fc)
        wp[j] = w[j] - FD_STEP
        cm = _nonlin(wp, q, xi, m, tau, l, cos_amax, margin, fg, fc)
        wp[j] = w[j]
        for i in range(N_NONLIN):
            J[i, j] = (cp[i] - cm[i]) / (2.0 * FD_STEP)
    return J


@njit(cache=True)
def _solve_small(M, r, k):
    # y = M^T lam with (M M^T) lam = r, rows of M restricted to first k.
    G = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            G[i, j] = M[i, 0] * M[j, 0] + M[i, 1] * M[j, 1] + M[i, 2] * M[j, 2]
    scale = 0.0
    for i in range(k):
        scale = max(scale, G[i, i])
    if k == 1:
        det = G[0, 0]
    elif k == 2:
        det = G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
    else:
        det = (G[0, 0] * (G[1, 1] * G[2, 2] - G[1, 2] * G[2, 1])
               - G[0, 1] * (G[1, 0] * G[2, 2] - G[1, 2] * G[2, 0])
               + G[0, 2] * (G[1, 0] * G[2, 1] - G[1, 1] * G[2, 0]))
    lam = np.zeros(k)
    if abs(det) <= 1e-12 * scale**k:
        return False, lam
    lam[:] = np.linalg.solve(G, r[:k])
    return True, lam


@njit(cache=True)
def _qp_candidate(psi, rhs, G, h, idx, cnt, a, b, M, r):
    # minimum-norm point with the equality and rows a, b (-1 = unused) active
    M[0] = psi
    r[0] = rhs
    k = 1
    if a >= 0:
        M[1] = G[a]
        r[1] = h[a]
        k = 2
    if b >= 0:
        M[2] = G[b]
        r[2] = h[b]
        k = 3
    ok, lam = _solve_small(M, r, k)
    y = np.zeros(3)
    if not ok:
        return False, np.inf, y, lam
    for t in range(k):
        y += lam[t] * M[t]
    dual_ok = True
    for t in range(1, k):
        if lam[t] < -1e-12 * (1.0 + abs(lam[0])):
            dual_ok = False
    viol = 0.0
    for t in range(cnt):
        i = idx[t]
        gi = G[i] @ y - h[i]
        nrm = math.sqrt(G[i] @ G[i])
        if -gi > viol * nrm:
            viol = -gi / nrm
    return dual_ok, viol, y, lam


@njit(cache=True)
def _qp(psi, rhs, G, h, active_rows):
    """Project the origin onto {psi^T y = rhs, G y >= h} over rows flagged in active_rows.

    In R^3 the optimum lies on the equality plus at most two inequalities, so
    the candidate active sets are enumerated smallest first; the first one
    that is primal and dual feasible is the unique KKT point.
    """
    n = G.shape[0]
    idx = np.empty(n, dtype=np.int64)
    cnt = 0
    for i in range(n):
        if active_rows[i]:
            idx[cnt] = i
            cnt += 1
    M = np.empty((3, 3))
    r = np.empty(3)
    lam_out = np.zeros(n + 1)
    best_y = np.zeros(3)
    best_viol = np.inf
    for size in range(3):
        for ta in range(cnt if size >= 1 else 1):
            for tb in range(ta + 1 if size == 2 else 0, cnt if size == 2 else 1):
                a = idx[ta] if size >= 1 else -1
                b = idx[tb] if size == 2 else -1
                dual_ok, viol, y, lam = _qp_candidate(psi, rhs, G, h, idx, cnt, a, b, M, r)
                if dual_ok and viol <= 1e-13:
                    lam_out[0] = lam[0]
                    if a >= 0:
                        lam_out[1 + a] = lam[1]
                    if b >= 0:
                        lam_out[1 + b] = lam[2]
                    return True, y, lam_out
                if viol < best_viol:
                    best_viol = viol
                    best_y[:] = y
    return False, best_y, lam_out


@njit(cache=True)
def _merit(w, c, psi, rhs, bound, mu, use_alpha):
    pen = abs(psi @ w - rhs)
    for i in range(N_NONLIN):
        if i == ROW_ALPHA and not use_alpha:
            continue
        if c[i] < 0.0:
            pen -= c[i]
    for j in range(3):
        pen += max(0.0, abs(w[j]) - bound)
    return 0.5 * (w @ w) + mu * pen


@njit(cache=True)
def _sqp(psi, rhs, q, xi, m, tau, use_alpha, cos_amax, l, bound, margin, w0, max_iter, fg, fc):
    """Returns (w, status, iterations, active_mask, kkt_residual)."""
    w = w0.copy()
    for j in range(3):
        w[j] = min(max(w[j], -bound), bound)
    G = np.zeros((N_INEQ, 3))
    h = np.zeros(N_INEQ)
    rows = np.ones(N_INEQ, dtype=np.bool_)
    rows[ROW_ALPHA] = use_alpha
    for j in range(3):
        G[4 + j, j] = -1.0
        h[4 + j] = -bound
        G[7 + j, j] = 1.0
        h[7 + j] = -bound
    mu = 1.0
    status = STATUS_MAX_ITER
    it = 0
    lam = np.zeros(N_INEQ + 1)
    c = _nonlin(w, q, xi, m, tau, l, cos_amax, margin, fg, fc)
    kkt = np.inf
    for it in range(1, max_iter + 1):
        Jc = _nonlin_jac(w, q, xi, m, tau, l, cos_amax, margin, fg, fc)
        for i in range(N_NONLIN):
            G[i] = Jc[i]
            h[i] = Jc[i] @ w - c[i]
        ok, y, lam = _qp(psi, rhs, G, h, rows)
        if not ok:
            status = STATUS_INFEASIBLE
            w = y
            break
        p = y - w
        # KKT residual of the linearized problem at its solution
        grad = y - lam[0] * psi
        for i in range(N_INEQ):
            grad -= lam[1 + i] * G[i]
        kkt = math.sqrt(grad @ grad)
        lmax = abs(lam[0])
        for i in range(N_INEQ):
            lmax = max(lmax, abs(lam[1 + i]))
        mu = max(mu, 2.0 * lmax + 1e-3)
        pn = math.sqrt(p @ p)
        f0 = _merit(w, c, psi, rhs, bound, mu, use_alpha)
        a = 1.0
        wn = w + p
        cn = _nonlin(wn, q, xi, m, tau, l, cos_amax, margin, fg, fc)
        for _ in range(30):
            if _merit(wn, cn, psi, rhs, bound, mu, use_alpha) <= f0 - 1e-4 * a * pn * pn or a < 1e-8:
                break
            a *= 0.5
            wn = w + a * p
            cn = _nonlin(wn, q, xi, m, tau, l, cos_amax, margin, fg, fc)
        w = wn
        c = cn
        if pn < STEP_TOL and kkt < KKT_TOL:
            status = STATUS_OPTIMAL
            break
    mask = 0
    for i in range(N_INEQ):
        if lam[1 + i] > 0.0:
            mask |= 1 << i
    if status == STATUS_OPTIMAL:
        # confirm nonlinear feasibility of the accepted point
        for i in range(N_NONLIN):
            if (i != ROW_ALPHA or use_alpha) and c[i] < -FEAS_TOL:
                status = STATUS_MAX_ITER
        if abs(psi @ w - rhs) >= 1e-10 * max(1.0, abs(rhs)):
            status = STATUS_MAX_ITER
    return w, status, it, mask, kkt


def forecast_rotation(q, omega, tau: float) -> np.ndarray:
    """Inertial-to-body matrix after one step at constant ``omega``."""
    return _forecast(_vec(q, 4), _vec(omega), float(tau))


def closed_form(psi, rhs: float) -> np.ndarray:
    """Minimum-norm solution of ``psi^T w = rhs`` ignoring all inequalities."""
    psi = _vec(psi)
    return psi * rhs / float(psi @ psi)


def _args(pb: OmegaProblem):
    use_alpha = pb.alpha_max is not None
    l = pb.direction if use_alpha else np.array([1.0, 0.0, 0.0])
    cos_amax = math.cos(pb.alpha_max) if use_alpha else -2.0
    return (_vec(pb.psi), float(pb.rhs), _vec(pb.q, 4), _vec(pb.xi), _vec(pb.m), float(pb.tau),
            use_alpha, cos_amax, l, float(pb.bound), float(pb.margin), _vec(pb.warm_start),
            int(pb.max_iter), np.ones(3) if pb.rate_gain is None else _vec(pb.rate_gain),
            np.zeros(3) if pb.rate_offset is None else _vec(pb.rate_offset))


def margins(pb: OmegaProblem, omega) -> np.ndarray:
    """Nonlinear inequality values (config rows, then alpha if enabled) at ``omega``."""
    a = _args(pb)
    c = _nonlin(_vec(omega), a[2], a[3], a[4], a[5], a[8], a[7], a[10], a[13], a[14])
    return c if a[6] else c[:N_CFG]


@njit(cache=True)
def _seeds(psi, rhs, q, xi, m, tau, use_alpha, cos_amax, l, bound, margin, fg, fc, n, k):
    """Up to ``k`` restart points: coarse box-grid points projected onto the equality
    plane, feasible ones first by norm, then the least violating."""
    ax = np.linspace(-bound, bound, n)
    pts = np.empty((n * n * n, 3))
    score = np.empty(n * n * n)
    pp = psi @ psi
    i = 0
    for a in ax:
        for b in ax:
            for c in ax:
                w = np.array([a, b, c])
                w -= psi * ((psi @ w - rhs) / pp)
                cn = _nonlin(w, q, xi, m, tau, l, cos_amax, margin, fg, fc)
                viol = max(0.0, np.abs(w).max() - bound)
                for r in range(N_NONLIN):
                    if r != ROW_ALPHA or use_alpha:
                        viol += max(0.0, -cn[r])
                pts[i] = w
                score[i] = w @ w if viol == 0.0 else 1e6 + viol
                i += 1
    order = np.argsort(score)
    return pts[order[:k]]


def solve(pb: OmegaProblem, restarts: int = 4) -> SolveReport:
    """SQP from the warm start; if that does not end optimal, restart from coarse-grid seeds
    and keep the best feasible answer."""
    if np.linalg.norm(pb.psi) == 0:
        raise ValueError("psi = 0: the ES rate does not depend on the body rate")
    args = _args(pb)
    w, status, it, mask, kkt = _sqp(*args)
    if status != STATUS_OPTIMAL and restarts > 0:
        a = args
        seeds = _seeds(a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8], a[9], a[10], a[13], a[14], 9, restarts)
        for w0 in seeds:
            out = _sqp(*a[:11], w0, *a[12:])
            if out[1] < status or (out[1] == status == STATUS_OPTIMAL and out[0] @ out[0] < w @ w):
                w, status, _, mask, kkt = out
                it += out[2]
            if status == STATUS_OPTIMAL:
                break
    active = tuple(lbl for i, lbl in enumerate(CONSTRAINT_LABELS) if mask >> i & 1)
    c = margins(pb, w)
    return SolveReport(
        omega=w,
        residual=float(abs(args[0] @ w - args[1])),
        active=active,
        iterations=int(it),
        status=STATUS_NAMES[int(status)],
        kkt=float(kkt),
        min_margin=float(c.min()),
    )
