"""Small dense kernels shared by every other module.

Quaternions are stored scalar-last, ``q = [q1, q2, q3, q4]`` with ``q4`` the
scalar part. ``quat_to_rot`` returns the inertial-to-body matrix, so
``x_body = quat_to_rot(q) @ x_inertial``. Kinematics follow ``dR/dt = -S(w) R``.

The ``_``-prefixed functions are numba kernels used inside the simulation
loop; the public wrappers validate input and accept anything array-like.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from numba import njit

QUAT_NORM_TOL = 1e-6


@njit(cache=True)
def _cross(x):
    m = np.zeros((3, 3))
    m[0, 1] = -x[2]
    m[0, 2] = x[1]
    m[1, 0] = x[2]
    m[1, 2] = -x[0]
    m[2, 0] = -x[1]
    m[2, 1] = x[0]
    return m


@njit(cache=True)
def _cross3(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True)
def _theta(x):
    m = np.zeros((4, 4))
    m[0, 1] = -x[0]
    m[0, 2] = -x[1]
    m[0, 3] = -x[2]
    m[1, 0] = x[0]
    m[2, 0] = x[1]
    m[3, 0] = x[2]
    s = _cross(x)
    for i in range(3):
        for j in range(3):
            m[i + 1, j + 1] = -s[i, j]
    return m


@njit(cache=True)
def _quat_rate(q, w):
    # 0.5 * Theta(w) applied in scalar-first layout, returned scalar-last.
    out = np.empty(4)
    out[0] = 0.5 * (q[3] * w[0] - w[1] * q[2] + w[2] * q[1])
    out[1] = 0.5 * (q[3] * w[1] - w[2] * q[0] + w[0] * q[2])
    out[2] = 0.5 * (q[3] * w[2] - w[0] * q[1] + w[1] * q[0])
    out[3] = -0.5 * (w[0] * q[0] + w[1] * q[1] + w[2] * q[2])
    return out


@njit(cache=True)
def _quat_step(q, w, tau):
    wn = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    out = np.empty(4)
    if wn == 0.0:
        for i in range(4):
            out[i] = q[i]
    else:
        c = math.cos(0.5 * wn * tau)
        k = 2.0 * math.sin(0.5 * wn * tau) / wn
        d = _quat_rate(q, w)
        for i in range(4):
            out[i] = c * q[i] + k * d[i]
    n = math.sqrt(out[0] ** 2 + out[1] ** 2 + out[2] ** 2 + out[3] ** 2)
    for i in range(4):
        out[i] /= n
    return out


@njit(cache=True)
def _quat_to_rot(q):
    v0, v1, v2, s = q[0], q[1], q[2], q[3]
    d = s * s - (v0 * v0 + v1 * v1 + v2 * v2)
    r = np.empty((3, 3))
    r[0, 0] = d + 2.0 * v0 * v0
    r[0, 1] = 2.0 * v0 * v1 + 2.0 * s * v2
    r[0, 2] = 2.0 * v0 * v2 - 2.0 * s * v1
    r[1, 0] = 2.0 * v1 * v0 - 2.0 * s * v2
    r[1, 1] = d + 2.0 * v1 * v1
    r[1, 2] = 2.0 * v1 * v2 + 2.0 * s * v0
    r[2, 0] = 2.0 * v2 * v0 + 2.0 * s * v1
    r[2, 1] = 2.0 * v2 * v1 - 2.0 * s * v0
    r[2, 2] = d + 2.0 * v2 * v2
    return r


@njit(cache=True)
def _sign_vector(eta):
    out = np.empty(3)
    for i in range(3):
        out[i] = 1.0 if eta[i] >= 0.0 else -1.0
    return out


def _vec(x, n=3) -> np.ndarray:
    a = np.asarray(x, dtype=float).reshape(-1)
    if a.shape != (n,):
        raise ValueError(f"expected a {n}-vector, got shape {np.shape(x)}")
    return a


def cross_matrix(x) -> np.ndarray:
    """Skew matrix with ``cross_matrix(x) @ y == np.cross(x, y)``."""
    return _cross(_vec(x))


def theta_matrix(x) -> np.ndarray:
    """4x4 rate matrix ``[[0, -x^T], [x, -S(x)]]`` (scalar-first block layout)."""
    return _theta(_vec(x))


def quat_step(q, omega, tau: float) -> np.ndarray:
    """Advance a scalar-last unit quaternion under constant body rate for ``tau``.

    Closed-form exponential map, exact for constant ``omega``; the result is
    renormalized. Zero rate returns ``q`` unchanged.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    return _quat_step(_vec(q, 4), _vec(omega), float(tau))


def quat_to_rot(q) -> np.ndarray:
    """Inertial-to-body rotation matrix of a unit quaternion (scalar-last)."""
    q = _vec(q, 4)
    err = abs(np.linalg.norm(q) - 1.0)
    if err > QUAT_NORM_TOL:
        raise ValueError(f"quaternion not normalized (|q|-1 = {err:.3e}); renormalize first")
    return _quat_to_rot(q)


def sign_vector(eta) -> np.ndarray:
    """Componentwise sign with sgn(0) = +1."""
    return _sign_vector(_vec(eta))


def quat_distance(q1, q2) -> float:
    """Sign-invariant distance ``min(|q1 - q2|, |q1 + q2|)``."""
    q1, q2 = _vec(q1, 4), _vec(q2, 4)
    return float(min(np.linalg.norm(q1 - q2), np.linalg.norm(q1 + q2)))


class IntegrationError(FloatingPointError):
    """Raised when an RK4 stage produces a non-finite derivative."""

    def __init__(self, stage: int, t: float):
        super().__init__(f"non-finite derivative in RK4 stage {stage} at t={t:.6g}")
        self.stage = stage
        self.t = t


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], x, t: float, tau: float) -> np.ndarray:
    """One classical Runge-Kutta step of ``dx/dt = f(t, x)``."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    x = np.asarray(x, dtype=float)
    stages = []
    for i, (dt, w) in enumerate(((0.0, 0.0), (0.5, 0.5), (0.5, 0.5), (1.0, 1.0)), start=1):
        xi = x if i == 1 else x + w * tau * stages[-1]
        k = np.asarray(f(t + dt * tau, xi), dtype=float)
        if not np.all(np.isfinite(k)):
            raise IntegrationError(i, t + dt * tau)
        stages.append(k)
    k1, k2, k3, k4 = stages
    return x + tau / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
