"""Effective surface (ES) of a cuboid spacecraft and its rate decomposition.

The ES is the wetted cross-section seen along the airflow direction
``eta`` (airflow unit vector in body axes). Within a fixed configuration
``m = sgn(eta)`` it is linear in ``eta``:  S = m^T diag(s) eta = s_m^T eta.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numba import njit

from .kinematics import _cross3, _sign_vector, _vec

log = logging.getLogger(__name__)

CONFIGURATIONS = {
    "I": (1, 1, 1),
    "II": (1, 1, -1),
    "III": (1, -1, 1),
    "IV": (1, -1, -1),
    "V": (-1, 1, 1),
    "VI": (-1, 1, -1),
    "VII": (-1, -1, 1),
    "VIII": (-1, -1, -1),
}
_LABELS = {v: k for k, v in CONFIGURATIONS.items()}


class ConfigurationViolation(ValueError):
    """The airflow left the configuration the controller is holding."""


@dataclass(frozen=True)
class Configuration:
    m: tuple[int, int, int]
    label: str

    @classmethod
    def from_label(cls, label: str) -> "Configuration":
        return cls(CONFIGURATIONS[label], label)

    @classmethod
    def from_signs(cls, m) -> "Configuration":
        key = tuple(int(x) for x in np.sign(_vec(m)))
        if key not in _LABELS:
            raise ValueError(f"not a sign vector: {m}")
        return cls(key, _LABELS[key])

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.m, dtype=float)


@dataclass(frozen=True)
class ESCoefficients:
    phi: float  # m^2/s, orbit-driven drift of the ES
    psi: np.ndarray  # m^2, sensitivity of the ES rate to body rate


@njit(cache=True)
def _es_abs(s, eta):
    return s[0] * abs(eta[0]) + s[1] * abs(eta[1]) + s[2] * abs(eta[2])


@njit(cache=True)
def _es_coeffs(s_m, eta, R, xi_dot):
    # psi = -S(eta) s_m = s_m x eta
    psi = _cross3(s_m, eta)
    phi = s_m @ (R @ xi_dot)
    return phi, psi


def configuration_of(eta) -> Configuration:
    """Table-2 configuration selected by the airflow signs (sgn(0) = +1)."""
    return Configuration.from_signs(_sign_vector(_vec(eta)))


def admissible_range(s) -> tuple[float, float]:
    """Closed interval [min(s), |s|] of attainable ES values."""
    s = _vec(s)
    if np.any(s <= 0):
        raise ValueError("face areas must be positive")
    return float(s.min()), float(np.linalg.norm(s))


def _mvec(m) -> np.ndarray:
    return m.vector if isinstance(m, Configuration) else _vec(m)


def effective_surface(s, m, eta, strict: bool = True, tol: float = 0.0) -> float:
    """ES value ``m^T diag(s) eta`` for the configuration ``m``.

    A component of ``eta`` whose sign disagrees with ``m`` (beyond ``tol``)
    raises :class:`ConfigurationViolation`; with ``strict=False`` it is only
    logged.
    """
    s, m, eta = _vec(s), _mvec(m), _vec(eta)
    bad = m * eta < -tol
    if np.any(bad):
        msg = f"airflow {eta} inconsistent with configuration {m}"
        if strict:
            raise ConfigurationViolation(msg)
        log.warning(msg)
    return float(m @ (s * eta))


def es_rate_coeffs(s_m, eta, R, xi_dot) -> ESCoefficients:
    """phi = s_m^T R xi_dot and psi = -S(eta) s_m, so that dS/dt = psi^T w + phi."""
    phi, psi = _es_coeffs(_vec(s_m), _vec(eta), np.asarray(R, dtype=float), _vec(xi_dot))
    return ESCoefficients(float(phi), psi)


def check_configuration_hold(m, R, xi) -> tuple[bool, np.ndarray]:
    """Requirement-1 test: margins ``diag(m) R xi`` must all be non-negative."""
    margin = _mvec(m) * (np.asarray(R, dtype=float) @ _vec(xi))
    return bool(np.all(margin >= 0.0)), margin
