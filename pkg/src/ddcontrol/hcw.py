"""Linear design model (HCW with drag) and the LQR / steady-state offset design.

Design state ``x = [x, y, dx/dt, dy/dt]`` is the leader position relative to
the follower in the follower Hill frame (radial, along-track); the input is
``dS = S_l - S_f`` in m^2.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .environment import OMEGA_EARTH

log = logging.getLogger(__name__)


class RiccatiError(RuntimeError):
    pass


@dataclass(frozen=True)
class HCWModel:
    A: np.ndarray
    b: np.ndarray
    lam: float  # drag/Earth-rotation coupling, 1/s^2
    nu: float
    w: float
    beta: float
    s_leader: float

    def controllability(self) -> np.ndarray:
        cols = [self.b]
        for _ in range(self.b.size - 1):
            cols.append(self.A @ cols[-1])
        return np.column_stack(cols)

    def is_controllable(self) -> bool:
        C = self.controllability()
        norms = np.linalg.norm(C, axis=0)
        if np.any(norms == 0):
            return False
        return np.linalg.matrix_rank(C / norms, tol=1e-10) == self.b.size


@dataclass(frozen=True)
class LQRSolution:
    P: np.ndarray
    g: np.ndarray
    Q: np.ndarray
    R: float
    Ac: np.ndarray
    residual: float  # |ARE residual|_F / |Q|_F


@dataclass(frozen=True)
class SteadyStateDesign:
    delta_s_bar: float
    x_ess: np.ndarray
    eps_r: float
    x_d: np.ndarray

    @property
    def reference(self) -> np.ndarray:
        """Equilibrium the regulator drives ``x`` to: ``x_d + x_e,ss``."""
        return self.x_d + self.x_ess


def build_hcw(nu: float, w: float, beta: float, s_leader: float, incl: float,
              omega_earth: float = OMEGA_EARTH) -> HCWModel:
    if not 0.0 <= incl <= math.pi:
        raise ValueError("inclination must lie in [0, pi]")
    lam = beta * s_leader * w * omega_earth * math.cos(incl)
    damp = beta * s_leader * w
    A = np.array(
        [
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [3.0 * nu**2, -lam, -damp, 2.0 * nu],
            [-2.0 * lam, 0.0, -2.0 * nu, -2.0 * damp],
        ]
    )
    b = np.array([0.0, 0.0, 0.0, -beta * w**2])
    return HCWModel(A, b, lam, nu, w, beta, s_leader)


def bryson_weights(ranges, input_range: float, R: float = 1e-3) -> tuple[np.ndarray, float]:
    """Bryson-normalized ``(Q, R)`` rescaled so the input weight equals ``R``.

    ``Q_ii = 1/x_i,max^2`` and ``R_B = 1/u_max^2``; multiplying both by
    ``R * u_max^2`` keeps the optimal gain and fixes the scale of ``P``.
    """
    ranges = np.asarray(ranges, dtype=float)
    if np.any(ranges <= 0) or input_range <= 0:
        raise ValueError("Bryson ranges must be positive")
    return np.diag(R * input_range**2 / ranges**2), R


def are_residual(A, b, P, Q, R) -> np.ndarray:
    Pb = P @ b
    return A.T @ P + P @ A - np.outer(Pb, Pb) / R + Q


def solve_are(model: HCWModel, Q, R: float, newton_steps: int = 20) -> LQRSolution:
    """Stabilizing ARE solution, Schur start polished by Newton-Kleinman."""
    A, b = model.A, model.b
    Q = np.asarray(Q, dtype=float)
    if R <= 0:
        raise ValueError("R must be positive")
    if not np.allclose(Q, Q.T) or np.linalg.eigvalsh(Q).min() < 0:
        raise ValueError("Q must be symmetric positive semi-definite")
    if not model.is_controllable():
        raise RiccatiError("(A, b) is not controllable")
    try:
        P = linalg.solve_continuous_are(A, b[:, None], Q, np.array([[R]]))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise RiccatiError(f"Hamiltonian solver failed: {exc}") from exc
    qn = np.linalg.norm(Q)
    res = np.linalg.norm(are_residual(A, b, P, Q, R)) / qn
    for _ in range(newton_steps):
        if res < 1e-13:
            break
        g = b @ P / R
        Ac = A - np.outer(b, g)
        Pn = linalg.solve_continuous_lyapunov(Ac.T, -(Q + R * np.outer(g, g)))
        Pn = 0.5 * (Pn + Pn.T)
        rn = np.linalg.norm(are_residual(A, b, Pn, Q, R)) / qn
        if rn >= res:
            break
        P, res = Pn, rn
    P = 0.5 * (P + P.T)
    g = b @ P / R
    Ac = A - np.outer(b, g)
    if np.linalg.eigvalsh(P).min() <= 0:
        raise RiccatiError("ARE solution is not positive definite")
    if np.linalg.eigvals(Ac).real.max() >= 0:
        raise RiccatiError("closed loop is not Hurwitz")
    return LQRSolution(P, g, Q, float(R), Ac, float(res))


def steady_state_design(model: HCWModel, x_d) -> SteadyStateDesign:
    """Constant offset that zeroes the along-track steady-state error.

    Written without inverting ``A`` so the polar case (lambda = 0, singular
    ``A``) falls out as the continuous limit ``dS_bar = eps_r = 0``.
    """
    x_d = np.asarray(x_d, dtype=float)
    lam, nu, beta, w = model.lam, model.nu, model.beta, model.w
    eps_r = x_d[1] * lam / (3.0 * nu**2)
    ds_bar = -2.0 * lam * eps_r / (beta * w**2)
    x_ess = np.array([eps_r - x_d[0], 0.0, 0.0, 0.0])
    return SteadyStateDesign(ds_bar, x_ess, eps_r, x_d)


def delta_s_desired(sol: LQRSolution, ss: SteadyStateDesign, X_e, bounds=None) -> tuple[float, bool]:
    """LQR surface-difference command ``-g^T X_e + dS_bar``, clamped to ``bounds``.

    Returns ``(dS_d, saturated)``.
    """
    ds = float(-sol.g @ np.asarray(X_e, dtype=float) + ss.delta_s_bar)
    if bounds is None:
        return ds, False
    lo, hi = bounds
    clipped = min(max(ds, lo), hi)
    if clipped != ds:
        log.debug("dS_d saturated: %.6g -> %.6g", ds, clipped)
    return clipped, clipped != ds
