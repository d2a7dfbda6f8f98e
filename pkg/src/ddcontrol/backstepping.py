"""Backstepping layer: ES error feedforward, desired body rate and torque law."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .kinematics import _cross3, _vec
from .optimizer import OmegaProblem, SolveReport, solve

log = logging.getLogger(__name__)

PSI_SINGULAR = 1e-6  # m^2


@dataclass(frozen=True)
class ControllerGains:
    k_s: float = 0.1
    K_omega: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        K = np.asarray(self.K_omega, dtype=float)
        if K.shape == (3,):
            K = np.diag(K)
        object.__setattr__(self, "K_omega", K)
        if self.k_s <= 0:
            raise ValueError("k_s must be positive")
        if not np.allclose(K, K.T) or np.linalg.eigvalsh(K).min() <= 0:
            raise ValueError("K_omega must be symmetric positive definite")


@dataclass(frozen=True)
class ErrorState:
    X_e: np.ndarray
    dS_e: float
    omega_e: np.ndarray


@dataclass(frozen=True)
class LyapunovDiagnostics:
    V1: float
    V2: float
    Vc: float
    Vc_dot: float | None = None  # model-predicted rate, when available


@njit(cache=True)
def _capital_lambda(phi, P, b, g, Ac, X, dSe):
    row = b @ P + g @ Ac
    return -phi + row @ X + (g @ b) * dSe


@njit(cache=True)
def _euler_rate(J, Jinv, w, u):
    return Jinv @ (_cross3(J @ w, w) + u)


@njit(cache=True)
def _torque(J, K, w, wd, wd_dot, dSe, psi):
    we = w - wd
    return -_cross3(J @ w, w) + J @ wd_dot + dSe * psi - K @ we


@njit(cache=True)
def _lyapunov(P, X, dSe, J, we):
    v1 = 0.5 * (X @ (P @ X))
    v2 = v1 + 0.5 * dSe * dSe
    return v1, v2, v2 + 0.5 * (we @ (J @ we))


def capital_lambda(phi: float, P, b, g, Ac, X_e, dS_e: float) -> float:
    """Feedforward ``-phi + [b^T P + g^T A_c] X_e + g^T b dS_e`` (m^2/s)."""
    return float(_capital_lambda(float(phi), np.asarray(P, float), _vec(b, 4), _vec(g, 4),
                                 np.asarray(Ac, float), _vec(X_e, 4), float(dS_e)))


def desired_omega(lam: float, psi, k_s: float, dS_e: float, problem_kw: dict | None = None,
                  previous=None) -> SolveReport:
    """Body rate satisfying ``psi^T w_d = Lambda + k_s dS_e`` with minimum norm.

    ``problem_kw`` carries the attitude-constraint data (q, xi, m, tau, bound,
    ...). Without it only the equality is imposed and the answer is the
    closed-form projection. Near the ES maximum (``|psi| < 1e-6 m^2``) the
    previous rate is held.
    """
    psi = _vec(psi)
    rhs = lam + k_s * dS_e
    if np.linalg.norm(psi) < PSI_SINGULAR:
        log.warning("psi singular (|psi| = %.3g); holding previous rate", np.linalg.norm(psi))
        w = np.zeros(3) if previous is None else _vec(previous)
        return SolveReport(w, abs(float(psi @ w) - rhs), (), 0, "singular", math.nan, math.nan)
    if problem_kw is None:
        w = psi * rhs / float(psi @ psi)
        return SolveReport(w, abs(float(psi @ w) - rhs), (), 0, "optimal", 0.0, math.nan)
    return solve(OmegaProblem(psi=psi, rhs=rhs, **problem_kw))


class OmegaRateEstimator:
    """Causal estimate of d(w_d)/dt: backward difference, optional first-order filter.

    ``time_constant = 0`` disables filtering. The first call returns zero.
    """

    def __init__(self, tau: float, time_constant: float = 1.0):
        if tau <= 0:
            raise ValueError("tau must be positive")
        self.tau = tau
        self.alpha = 1.0 if time_constant <= 0 else 1.0 - math.exp(-tau / time_constant)
        self._prev: np.ndarray | None = None
        self._rate = np.zeros(3)

    def update(self, omega_d) -> np.ndarray:
        omega_d = _vec(omega_d)
        if self._prev is not None:
            raw = (omega_d - self._prev) / self.tau
            self._rate = self._rate + self.alpha * (raw - self._rate)
        self._prev = omega_d.copy()
        return self._rate.copy()


def omega_desired_rate(history, tau: float, time_constant: float = 0.0) -> np.ndarray:
    """Rate estimate at the last sample of ``history`` (sequence of w_d vectors)."""
    est = OmegaRateEstimator(tau, time_constant)
    rate = np.zeros(3)
    for w in history:
        rate = est.update(w)
    return rate


def control_torque(omega, omega_d, omega_d_dot, dS_e: float, psi, J, K_omega) -> np.ndarray:
    """``u = -S(J w) w + J dw_d/dt + dS_e psi - K_w (w - w_d)``."""
    return _torque(np.asarray(J, float), np.asarray(K_omega, float), _vec(omega), _vec(omega_d),
                   _vec(omega_d_dot), float(dS_e), _vec(psi))


def euler_step_dynamics(J, omega, u) -> np.ndarray:
    """Body angular acceleration from ``J dw/dt = S(J w) w + u``."""
    J = np.asarray(J, float)
    return _euler_rate(J, np.linalg.inv(J), _vec(omega), _vec(u))


def lyapunov(P, X_e, dS_e: float, J, omega_e) -> LyapunovDiagnostics:
    v1, v2, vc = _lyapunov(np.asarray(P, float), _vec(X_e, 4), float(dS_e),
                           np.asarray(J, float), _vec(omega_e))
    return LyapunovDiagnostics(float(v1), float(v2), float(vc))


def lyapunov_rate(P, Q, R: float, b, X_e, k_s: float, dS_e: float, K_omega, omega_e) -> float:
    """Closed-loop prediction ``-X^T Qt X - k_s dS_e^2 - w_e^T K w_e``, ``Qt = (Q + P b b^T P / R)/2``."""
    P, Q = np.asarray(P, float), np.asarray(Q, float)
    Pb = P @ _vec(b, 4)
    Qt = 0.5 * (Q + np.outer(Pb, Pb) / R)
    X, we = _vec(X_e, 4), _vec(omega_e)
    return float(-X @ Qt @ X - k_s * dS_e**2 - we @ np.asarray(K_omega, float) @ we)
