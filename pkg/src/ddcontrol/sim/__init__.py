"""Closed-loop simulation: scenarios, engine, metrics, sweeps and log I/O."""

from .engine import COLUMNS, Design, SimLog, SimulationError, Simulator, run, synthesize
from .scenario import PRESETS, Scenario, ScenarioError, preset

__all__ = [
    "COLUMNS", "Design", "PRESETS", "Scenario", "ScenarioError", "SimLog", "SimulationError",
    "Simulator", "preset", "run", "synthesize",
]
