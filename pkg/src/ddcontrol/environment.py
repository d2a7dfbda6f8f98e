"""Truth-model environment: orbits, wind, atmosphere and translational dynamics.

All quantities are SI. The atmosphere co-rotates with the Earth about the
inertial z axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .kinematics import _cross3, _vec

MU_EARTH = 398600.0e9  # m^3/s^2
OMEGA_EARTH = 7.292115486e-5  # rad/s
OMEGA_EARTH_VEC = np.array([0.0, 0.0, OMEGA_EARTH])
R_EARTH = 6378.137e3  # m
J2_EARTH = 1.08263e-3
MIN_ALTITUDE = 100e3

DENSITY_CONSTANT = 0
DENSITY_EXPONENTIAL = 1
DENSITY_TABLE = 2


class UnsupportedOrbitError(ValueError):
    pass


class SingularWindError(ValueError):
    pass


class DegenerateStateError(ValueError):
    pass


class DensityRangeError(ValueError):
    pass


@dataclass(frozen=True)
class InertialState:
    r: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r", _vec(self.r))
        object.__setattr__(self, "v", _vec(self.v))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.r, self.v])


@dataclass(frozen=True)
class OrbitalElements:
    """Classical elements; lengths in m, angles in rad."""

    a: float
    e: float
    i: float
    raan: float
    argp: float
    nu: float

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("semimajor axis must be positive")
        if self.e < 0:
            raise ValueError("eccentricity must be non-negative")
        if not 0.0 <= self.i <= math.pi:
            raise ValueError("inclination must lie in [0, pi]")

    @classmethod
    def from_degrees(cls, a_km, e, i_deg, raan_deg, argp_deg, nu_deg):
        d = math.radians
        return cls(a_km * 1e3, e, d(i_deg), d(raan_deg), d(argp_deg), d(nu_deg))

    def period(self, mu: float = MU_EARTH) -> float:
        return 2.0 * math.pi * math.sqrt(self.a**3 / mu)


@dataclass(frozen=True)
class SpacecraftBody:
    mass: float
    inertia: np.ndarray
    cd: float
    faces: np.ndarray  # nominal face areas [S1, S2, S3], m^2

    def __post_init__(self):
        J = np.asarray(self.inertia, dtype=float)
        if J.shape == (3,):
            J = np.diag(J)
        object.__setattr__(self, "inertia", J)
        object.__setattr__(self, "faces", _vec(self.faces))
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if not np.allclose(J, J.T) or np.linalg.eigvalsh(J).min() <= 0:
            raise ValueError("inertia must be symmetric positive definite")
        if not 2.0 <= self.cd <= 2.4:
            raise ValueError("drag coefficient outside [2, 2.4]")
        if np.any(self.faces <= 0):
            raise ValueError("face areas must be positive")


@dataclass(frozen=True)
class DensityModel:
    """Atmospheric density: ``constant``, ``exponential`` or ``table``.

    The table variant interpolates log-density linearly in altitude (km)
    and refuses to extrapolate.
    """

    kind: str = "constant"
    rho0: float = 1.6611e-12
    h0: float = 450e3
    scale_height: float = 62.2e3
    altitudes: np.ndarray = field(default_factory=lambda: np.zeros(0))
    log_rho: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.kind not in ("constant", "exponential", "table"):
            raise ValueError(f"unknown density model {self.kind!r}")
        if self.kind == "table":
            alt = np.asarray(self.altitudes, dtype=float)
            if alt.size < 2 or np.any(np.diff(alt) <= 0):
                raise ValueError("density table needs >= 2 strictly increasing altitudes")
        elif self.rho0 <= 0:
            raise ValueError("density must be positive")

    @classmethod
    def constant(cls, rho: float) -> "DensityModel":
        return cls("constant", rho0=rho)

    @classmethod
    def exponential(cls, rho0: float, h0: float, scale_height: float) -> "DensityModel":
        return cls("exponential", rho0=rho0, h0=h0, scale_height=scale_height)

    @classmethod
    def table(cls, altitudes_m, rho) -> "DensityModel":
        rho = np.asarray(rho, dtype=float)
        if np.any(rho <= 0):
            raise ValueError("tabulated densities must be positive")
        return cls("table", altitudes=np.asarray(altitudes_m, dtype=float), log_rho=np.log(rho))

    @classmethod
    def from_file(cls, path) -> "DensityModel":
        """Two columns, altitude [km] and density [kg/m^3]; '#' starts a comment."""
        data = np.loadtxt(Path(path), comments="#", ndmin=2)
        if data.shape[1] != 2:
            raise ValueError(f"{path}: expected two columns")
        return cls.table(data[:, 0] * 1e3, data[:, 1])

    @property
    def code(self) -> int:
        return {"constant": DENSITY_CONSTANT, "exponential": DENSITY_EXPONENTIAL, "table": DENSITY_TABLE}[self.kind]

    def kernel_args(self):
        return (
            self.code,
            float(self.rho0),
            float(self.h0),
            float(self.scale_height),
            np.ascontiguousarray(self.altitudes, dtype=float),
            np.ascontiguousarray(self.log_rho, dtype=float),
        )


@dataclass(frozen=True)
class WindState:
    w: np.ndarray
    xi: np.ndarray
    xi_dot: np.ndarray


# --- kernels ---------------------------------------------------------------


@njit(cache=True)
def _norm3(x):
    return math.sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])


@njit(cache=True)
def _density(kind, rho0, h0, hs, alts, logr, r):
    if kind == DENSITY_CONSTANT:
        return rho0
    h = _norm3(r) - R_EARTH
    if h < MIN_ALTITUDE:
        return np.nan
    if kind == DENSITY_EXPONENTIAL:
        return rho0 * math.exp(-(h - h0) / hs)
    n = alts.shape[0]
    if h < alts[0] or h > alts[n - 1]:
        return np.nan
    k = np.searchsorted(alts, h)
    if k == 0:
        k = 1
    f = (h - alts[k - 1]) / (alts[k] - alts[k - 1])
    return math.exp(logr[k - 1] + f * (logr[k] - logr[k - 1]))


@njit(cache=True)
def _wind(r, v, we):
    # w = v - we x r, with we along +z
    w = np.empty(3)
    w[0] = v[0] + we * r[1]
    w[1] = v[1] - we * r[0]
    w[2] = v[2]
    return w


@njit(cache=True)
def _xi_dot(r, v, w, we, mu):
    wn = _norm3(w)
    rn = _norm3(r)
    xi = w / wn
    # g = S(we) v + mu r / |r|^3
    k = mu / (rn * rn * rn)
    g = np.empty(3)
    g[0] = -we * v[1] + k * r[0]
    g[1] = we * v[0] + k * r[1]
    g[2] = k * r[2]
    d = xi[0] * g[0] + xi[1] * g[1] + xi[2] * g[2]
    return (xi * d - g) / wn


@njit(cache=True)
def _accel_j2(r, mu, j2, re):
    x, y, z = r[0], r[1], r[2]
    r2 = x * x + y * y + z * z
    rn = math.sqrt(r2)
    f = -1.5 * j2 * mu * re * re / (r2 * r2 * rn)
    zz = 5.0 * z * z / r2
    out = np.empty(3)
    out[0] = f * x * (1.0 - zz)
    out[1] = f * y * (1.0 - zz)
    out[2] = f * z * (3.0 - zz)
    return out


@njit(cache=True)
def _accel(r, v, area, beta, use_j2, mu, we):
    rn = _norm3(r)
    k = -mu / (rn * rn * rn)
    w = _wind(r, v, we)
    kd = -beta * area * _norm3(w)
    a = np.empty(3)
    for i in range(3):
        a[i] = k * r[i] + kd * w[i]
    if use_j2:
        a += _accel_j2(r, mu, J2_EARTH, R_EARTH)
    return a


@njit(cache=True)
def _hill(r, v):
    h = _cross3(r, v)
    hn = _norm3(h)
    rn = _norm3(r)
    R = np.empty((3, 3))
    for i in range(3):
        R[0, i] = r[i] / rn
        R[2, i] = h[i] / hn
    et = _cross3(R[2], R[0])
    for i in range(3):
        R[1, i] = et[i]
    nu = h / (rn * rn)
    return R, nu


@njit(cache=True)
def _relative_hill(rl, vl, rf, vf):
    R, nu = _hill(rf, vf)
    dr = R @ (rl - rf)
    nuh = R @ nu
    dv = R @ (vl - vf) - _cross3(nuh, dr)
    return dr, dv


# --- public API ------------------------------------------------------------


def _state(st) -> InertialState:
    if isinstance(st, InertialState):
        return st
    a = np.asarray(st, dtype=float).reshape(-1)
    return InertialState(a[:3], a[3:6])


def elements_to_cartesian(el: OrbitalElements, mu: float = MU_EARTH) -> InertialState:
    """Perifocal to ECI conversion (3-1-3 rotation by RAAN, i, argp)."""
    if el.e >= 1.0:
        raise UnsupportedOrbitError("only elliptical orbits (e < 1) are supported")
    p = el.a * (1.0 - el.e**2)
    cn, sn = math.cos(el.nu), math.sin(el.nu)
    r_pf = p / (1.0 + el.e * cn) * np.array([cn, sn, 0.0])
    v_pf = math.sqrt(mu / p) * np.array([-sn, el.e + cn, 0.0])
    cO, sO = math.cos(el.raan), math.sin(el.raan)
    ci, si = math.cos(el.i), math.sin(el.i)
    cw, sw = math.cos(el.argp), math.sin(el.argp)
    Q = np.array(
        [
            [cO * cw - sO * sw * ci, -cO * sw - sO * cw * ci, sO * si],
            [sO * cw + cO * sw * ci, -sO * sw + cO * cw * ci, -cO * si],
            [sw * si, cw * si, ci],
        ]
    )
    return InertialState(Q @ r_pf, Q @ v_pf)


def cartesian_to_elements(st, mu: float = MU_EARTH) -> OrbitalElements:
    """Inverse of :func:`elements_to_cartesian` for non-circular, inclined orbits."""
    st = _state(st)
    r, v = st.r, st.v
    rn, vn = np.linalg.norm(r), np.linalg.norm(v)
    h = np.cross(r, v)
    hn = np.linalg.norm(h)
    if hn == 0:
        raise DegenerateStateError("rectilinear state has no orbital plane")
    i = math.acos(np.clip(h[2] / hn, -1.0, 1.0))
    n = np.cross([0.0, 0.0, 1.0], h)
    nn = np.linalg.norm(n)
    e_vec = ((vn**2 - mu / rn) * r - np.dot(r, v) * v) / mu
    e = float(np.linalg.norm(e_vec))
    if e >= 1.0:
        raise UnsupportedOrbitError("state is not on an elliptical orbit")
    a = 1.0 / (2.0 / rn - vn**2 / mu)
    raan = math.atan2(n[1], n[0]) % (2 * math.pi) if nn > 0 else 0.0
    if nn > 0 and e > 0:
        argp = math.acos(np.clip(np.dot(n, e_vec) / (nn * e), -1.0, 1.0))
        if e_vec[2] < 0:
            argp = 2 * math.pi - argp
    else:
        argp = 0.0
    if e > 0:
        nu = math.acos(np.clip(np.dot(e_vec, r) / (e * rn), -1.0, 1.0))
        if np.dot(r, v) < 0:
            nu = 2 * math.pi - nu
    else:
        nu = math.acos(np.clip(np.dot(n, r) / (nn * rn), -1.0, 1.0)) if nn > 0 else 0.0
    return OrbitalElements(a, e, i, raan, argp, nu)


def relative_wind(st, omega_earth=OMEGA_EARTH_VEC, mu: float = MU_EARTH) -> WindState:
    """Atmosphere-relative velocity, its direction and the direction's rate."""
    st = _state(st)
    we = _vec(omega_earth)
    if we[0] != 0.0 or we[1] != 0.0:
        raise ValueError("Earth rotation must be along +z")
    w = _wind(st.r, st.v, we[2])
    wn = np.linalg.norm(w)
    if wn == 0.0:
        raise SingularWindError("zero atmosphere-relative velocity")
    return WindState(w, w / wn, _xi_dot(st.r, st.v, w, we[2], mu))


def beta_coefficient(mass: float, rho: float, cd: float) -> float:
    """Ballistic factor rho*C_D/(2M) in 1/m^3."""
    return rho * cd / (2.0 * mass)


def altitude(r) -> float:
    return float(np.linalg.norm(_vec(r)) - R_EARTH)


def density(model: DensityModel, r) -> float:
    h = altitude(r)
    if model.kind != "constant" and h < MIN_ALTITUDE:
        raise DensityRangeError(f"altitude {h / 1e3:.1f} km below the 100 km model floor")
    rho = _density(*model.kernel_args(), _vec(r))
    if not np.isfinite(rho):
        lo, hi = model.altitudes[0] / 1e3, model.altitudes[-1] / 1e3
        raise DensityRangeError(f"altitude {h / 1e3:.3f} km outside table range [{lo}, {hi}] km")
    return float(rho)


def accel_drag(st, area: float, beta: float, omega_earth: float = OMEGA_EARTH) -> np.ndarray:
    st = _state(st)
    w = _wind(st.r, st.v, omega_earth)
    return -beta * area * np.linalg.norm(w) * w


def accel_j2(st, mu: float = MU_EARTH, j2: float = J2_EARTH, re: float = R_EARTH) -> np.ndarray:
    st = _state(st)
    if j2 == 0.0:
        return np.zeros(3)
    return _accel_j2(st.r, mu, j2, re)


def translational_derivative(st, area: float, beta: float, j2: bool = False, drag: bool = True,
                             mu: float = MU_EARTH) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(dr/dt, dv/dt)`` under point-mass gravity, drag and optional J2."""
    st = _state(st)
    a = _accel(st.r, st.v, area if drag else 0.0, beta, j2, mu, OMEGA_EARTH)
    if not np.all(np.isfinite(a)):
        raise FloatingPointError("non-finite translational acceleration")
    return st.v.copy(), a


def hill_frame(st) -> tuple[np.ndarray, np.ndarray]:
    """Rotation ECI->Hill ``[e_r, e_theta, e_h]^T`` and the frame rate (ECI)."""
    st = _state(st)
    h = np.cross(st.r, st.v)
    if np.linalg.norm(h) <= 1e-9 * np.linalg.norm(st.r) * np.linalg.norm(st.v):
        raise DegenerateStateError("position and velocity are parallel")
    return _hill(st.r, st.v)


def relative_hill_state(leader, follower) -> tuple[np.ndarray, np.ndarray]:
    """Leader position/velocity relative to the follower, in the follower Hill frame.

    The velocity is the rotating-frame derivative (transport theorem).
    """
    leader, follower = _state(leader), _state(follower)
    hill_frame(follower)
    return _relative_hill(leader.r, leader.v, follower.r, follower.v)


def specific_energy(st, mu: float = MU_EARTH) -> float:
    st = _state(st)
    return 0.5 * float(st.v @ st.v) - mu / float(np.linalg.norm(st.r))
