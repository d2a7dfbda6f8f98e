"""Independent reference computations shared by the unit and acceptance tests."""

import numpy as np
from numba import njit

from ddcontrol.optimizer import OmegaProblem, _args, _nonlin
from ddcontrol.kinematics import quat_to_rot
from ddcontrol.surface import es_rate_coeffs


@njit(cache=True)
def _grid_best(psi, rhs, q, xi, m, tau, use_alpha, cos_amax, l, bound, margin, fg, fc, n):
    # project every box grid point onto psi.w = rhs; keep the feasible ones
    pp = psi @ psi
    best = np.inf
    arg = np.full(3, np.nan)
    w = np.empty(3)
    ax = np.linspace(-bound, bound, n)
    for a in ax:
        for b in ax:
            for c in ax:
                w[0], w[1], w[2] = a, b, c
                w -= psi * ((psi @ w - rhs) / pp)
                if np.abs(w).max() > bound:
                    continue
                cn = _nonlin(w, q, xi, m, tau, l, cos_amax, margin, fg, fc)
                k = 4 if use_alpha else 3
                if cn[:k].min() < 0.0:
                    continue
                v = 0.5 * (w @ w)
                if v < best:
                    best = v
                    arg[:] = w
    return best, arg


def grid_oracle(pb: OmegaProblem, n: int = 41):
    """Smallest 0.5|w|^2 over the feasible projections of an n^3 box grid."""
    a = _args(pb)
    return _grid_best(a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8], a[9], a[10], a[13], a[14], n)


def random_problem(rng, alpha: bool = False) -> OmegaProblem:
    """Attitude-constrained problem built from a random attitude and airflow."""
    s = np.array([748.2954, 1246.5566, 1246.5566]) * 1e-4
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    R = quat_to_rot(q)
    # one airflow component near zero so the configuration constraint tends to bind
    eta = rng.normal(size=3)
    k = rng.integers(3)
    eta[k] = np.sign(eta[k]) * rng.uniform(0.0, 0.01) * np.linalg.norm(eta)
    eta /= np.linalg.norm(eta)
    xi = R.T @ eta
    m = np.where(eta >= 0, 1.0, -1.0)
    psi = es_rate_coeffs(m * s, eta, R, np.zeros(3)).psi
    # a rate within reach of the box, sometimes large enough to push an airflow component through zero
    w_target = rng.uniform(-0.04, 0.04, 3)
    kw = {}
    if alpha:
        # pointing direction 60-100 deg off the body x-axis, so the cone can bind
        x_b = R[0]
        perp = np.cross(x_b, rng.normal(size=3))
        perp /= np.linalg.norm(perp)
        ang = np.radians(rng.uniform(60.0, 100.0))
        kw = dict(alpha_max=np.radians(100.0), direction=np.cos(ang) * x_b + np.sin(ang) * perp)
    return OmegaProblem(psi=psi, rhs=float(psi @ w_target), q=q, xi=xi, m=m, tau=rng.uniform(0.5, 3.0),
                        bound=0.05, **kw)
