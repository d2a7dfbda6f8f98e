"""Scenario description, presets and file/override handling.

Scenario files use the units of the mission tables (km, deg, cm^2) and are
converted to SI at the point of use. YAML and JSON are both accepted.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..environment import DensityModel, OrbitalElements, SpacecraftBody


class ScenarioError(ValueError):
    """Bad scenario content or an override naming an unknown key."""


@dataclass
class Elements:
    a_km: float
    e: float
    i_deg: float
    raan_deg: float = 0.0
    argp_deg: float = 0.0
    nu_deg: float = 0.0

    def to_elements(self) -> OrbitalElements:
        return OrbitalElements.from_degrees(self.a_km, self.e, self.i_deg, self.raan_deg,
                                            self.argp_deg, self.nu_deg)


@dataclass
class DensitySpec:
    kind: str = "exponential"
    rho0: float = 3.0137e-12  # kg/m^3 at h0
    h0_km: float = 450.0
    scale_height_km: float = 62.2
    file: str | None = None  # two-column table for kind = "table"

    def build(self) -> DensityModel:
        if self.kind == "constant":
            return DensityModel.constant(self.rho0)
        if self.kind == "exponential":
            return DensityModel.exponential(self.rho0, self.h0_km * 1e3, self.scale_height_km * 1e3)
        if self.kind == "table":
            if not self.file:
                raise ScenarioError("density.kind = table needs density.file")
            return DensityModel.from_file(self.file)
        raise ScenarioError(f"unknown density kind {self.kind!r}")


@dataclass
class LQRSpec:
    state_ranges: list = field(default_factory=lambda: [60.0, 60.0, 0.05, 0.05])  # m, m, m/s, m/s
    input_range_cm2: float = 200.0
    R: float = 1e-3
    Q_diag: list | None = None  # overrides the Bryson weights when given


def _follower() -> Elements:
    return Elements(6821.000, 1e-6, 90.0, 0.0, 0.0, 0.0)


def _leader() -> Elements:
    return Elements(6821.002, 2e-6, 89.9999989, 1e-6, 1.2e-6, 1e-6)


@dataclass
class Scenario:
    name: str = "custom"
    follower: Elements = field(default_factory=_follower)
    leader: Elements = field(default_factory=_leader)
    q0: list = field(default_factory=lambda: [0.3774, 0.2877, 0.6255, 0.6193])
    omega0: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    mass: float = 1.0
    inertia: list = field(default_factory=lambda: [0.9516, 0.9203, 0.0527])
    cd: float = 2.2
    # unrounded areas; the mission table prints them as [748.3, 1246.6, 1246.6]
    faces_cm2: list = field(default_factory=lambda: [748.2954, 1246.5566, 1246.5566])
    configuration: str | None = None  # label I..VIII; None = from the initial airflow
    leader_surface_cm2: float = 1600.0
    leader_noise_cm2: float = 0.0
    eps_beta: float = 0.0  # constant multiplicative error on the truth beta
    eps_beta_amp: float = 0.0  # amplitude of a per-step uniform error on the truth beta
    x_d: list = field(default_factory=lambda: [0.0, 60.0, 0.0, 0.0])
    k_s: float = 0.1
    K_omega: list = field(default_factory=lambda: [1.0, 1.0, 1.0])
    rate_loop: str = "stage"  # "stage": rate feedback inside the integrator; "hold": whole torque held
    omega_rate_tc: float = 1.0  # s, smoothing of the w_d derivative (0 = raw difference)
    tau: float = 0.1
    duration_orbits: float = 10.0
    seed: int = 0
    j2: bool = False
    alpha_constraint: bool = False
    alpha_max_deg: float = 100.0
    pointing: list = field(default_factory=lambda: [1.0, 0.0, 0.0])
    omega_bound: float = 0.05
    config_margin: float = 1e-2
    forecast_horizon: float | None = None  # s, constraint look-ahead (None: max J_i/K_i with lag_forecast, else tau)
    lag_forecast: bool = True  # forecast the attitude through the rate-loop lag instead of at w_d itself
    max_iter: int = 50
    rho_bar: float = 1.6611e-12
    density: DensitySpec = field(default_factory=DensitySpec)
    lqr: LQRSpec = field(default_factory=LQRSpec)
    strict: bool = True
    exact_model: bool = False  # truth = design model: constant rho_bar, no J2, no noise
    decimate: int = 10

    def __post_init__(self):
        self.validate()

    # --- conversions ------------------------------------------------------

    def body(self) -> SpacecraftBody:
        return SpacecraftBody(self.mass, np.asarray(self.inertia, float), self.cd,
                              np.asarray(self.faces_cm2, float) * 1e-4)

    def truth_density(self) -> DensityModel:
        if self.exact_model:
            return DensityModel.constant(self.rho_bar)
        return self.density.build()

    @property
    def use_j2(self) -> bool:
        return self.j2 and not self.exact_model

    @property
    def period(self) -> float:
        return self.follower.to_elements().period()

    @property
    def n_steps(self) -> int:
        return int(round(self.duration_orbits * self.period / self.tau))

    def validate(self) -> None:
        if self.tau <= 0 or self.duration_orbits <= 0:
            raise ScenarioError("tau and duration_orbits must be positive")
        if self.decimate < 1:
            raise ScenarioError("decimate must be >= 1")
        if len(self.q0) != 4 or not math.isclose(float(np.linalg.norm(self.q0)), 1.0, abs_tol=1e-3):
            raise ScenarioError("q0 must be a 4-vector of unit norm (to 1e-3)")
        if len(self.x_d) != 4:
            raise ScenarioError("x_d must have four entries")
        if self.k_s <= 0 or min(self.K_omega) <= 0:
            raise ScenarioError("k_s and K_omega must be positive")
        if not 0.0 < self.alpha_max_deg <= 180.0:
            raise ScenarioError("alpha_max_deg must lie in (0, 180]")
        if self.rate_loop not in ("stage", "hold"):
            raise ScenarioError("rate_loop must be 'stage' or 'hold'")
        if self.omega_bound <= 0:
            raise ScenarioError("omega_bound must be positive")
        lo, hi = min(self.faces_cm2), float(np.linalg.norm(self.faces_cm2))
        if not lo <= self.leader_surface_cm2 <= hi:
            raise ScenarioError(f"leader_surface_cm2 = {self.leader_surface_cm2} outside [{lo:.4f}, {hi:.4f}]")
        if self.eps_beta_amp < 0 or self.leader_noise_cm2 < 0:
            raise ScenarioError("noise amplitudes must be non-negative")
        try:
            self.body()
        except ValueError as exc:
            raise ScenarioError(str(exc)) from exc

    # --- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        data = copy.deepcopy(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
        for key, default in _NESTED.items():
            if key in data and isinstance(data[key], dict):
                base = asdict(default())
                bad = set(data[key]) - set(base)
                if bad:
                    raise ScenarioError(f"unknown keys under {key}: {sorted(bad)}")
                base.update(data[key])
                data[key] = type(default())(**base)
        try:
            return cls(**data)
        except TypeError as exc:
            raise ScenarioError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "Scenario":
        path = Path(path)
        text = path.read_text()
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
        if not isinstance(data, dict):
            raise ScenarioError(f"{path}: top level must be a mapping")
        preset = data.pop("preset", None)
        base = preset_dict(preset) if preset else {}
        return cls.from_dict(_merge(base, data))

    def save(self, path) -> None:
        path = Path(path)
        d = self.to_dict()
        if path.suffix == ".json":
            path.write_text(json.dumps(d, indent=2))
        else:
            path.write_text(yaml.safe_dump(d, sort_keys=False))

    def with_overrides(self, overrides) -> "Scenario":
        """Apply ``key=value`` strings (dotted keys reach nested blocks)."""
        d = self.to_dict()
        for item in overrides:
            if "=" not in item:
                raise ScenarioError(f"override {item!r} is not key=value")
            key, raw = item.split("=", 1)
            set_dotted(d, key.strip(), parse_value(raw))
        return Scenario.from_dict(d)

    def replace(self, **changes) -> "Scenario":
        d = self.to_dict()
        for k, v in changes.items():
            set_dotted(d, k.replace("__", "."), v)
        return Scenario.from_dict(d)


_NESTED = {"follower": _follower, "leader": _leader, "density": DensitySpec, "lqr": LQRSpec}


def _merge(base: dict, top: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in top.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_value(raw: str) -> Any:
    """YAML scalar/list parsing, plus floats YAML 1.1 misses such as ``7e-6``."""
    if not raw.strip():
        return None
    value = yaml.safe_load(raw)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    return value


def set_dotted(d: dict, key: str, value: Any) -> None:
    parts = key.split(".")
    node = d
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ScenarioError(f"unknown override key {key!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ScenarioError(f"unknown override key {key!r}")
    node[parts[-1]] = value


PRESETS = {
    "case1": dict(j2=False, alpha_constraint=False),
    "case2": dict(j2=True, alpha_constraint=False),
    "case3": dict(j2=False, alpha_constraint=True),
    "case4": dict(j2=True, alpha_constraint=True),
}

PRESET_NOTES = {
    "case1": "no J2, no alpha-constraint",
    "case2": "J2, no alpha-constraint",
    "case3": "no J2, alpha-constraint",
    "case4": "J2 and alpha-constraint",
}


def preset_dict(name: str) -> dict:
    if name not in PRESETS:
        raise ScenarioError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return dict(name=name, **PRESETS[name])


def preset(name: str, **overrides) -> Scenario:
    return Scenario.from_dict(_merge(preset_dict(name), overrides))
