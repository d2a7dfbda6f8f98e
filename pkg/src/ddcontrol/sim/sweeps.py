"""Parameter campaigns: leader-noise / beta sensitivity and initial-condition maps.

Cells are independent runs seeded from ``(seed, cell index)``; they may run
in worker processes. A failing cell is recorded with its error and the
campaign carries on.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import SimulationError, Simulator
from .logio import run_summary, write_run
from .scenario import Scenario

log = logging.getLogger(__name__)

SENSITIVITY_NOISE_CM2 = (100.0, 200.0, 300.0, 400.0)
SENSITIVITY_BETA = (0.0, 0.2)  # amplitude of the per-step beta error


def cell_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


@dataclass
class Cell:
    index: int
    params: dict
    scenario: dict
    out_dir: str | None = None


def _run_cell(cell: Cell) -> dict:
    row = dict(index=cell.index, **cell.params)
    sc = Scenario.from_dict(cell.scenario)
    row["seed"] = sc.seed
    try:
        simlog = Simulator(sc).run()
        status = "ok"
    except SimulationError as exc:
        simlog = exc.log
        status = f"failed: {exc}"
    except Exception as exc:  # configuration or design errors for this cell only
        row.update(status=f"failed: {type(exc).__name__}: {exc}")
        return row
    summary = write_run(simlog, cell.out_dir) if cell.out_dir else run_summary(simlog)
    row["status"] = status
    row.update({k: v for k, v in summary["metrics"].items() if not isinstance(v, (list, dict))})
    return row


def run_cells(cells: list[Cell], parallel: int = 1) -> list[dict]:
    if parallel <= 1 or len(cells) <= 1:
        return [_run_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(_run_cell, cells))


def _cells(base: Scenario, grid: list[dict], out_dir) -> list[Cell]:
    cells = []
    for i, params in enumerate(grid):
        changes = dict(params.pop("_changes", {}))
        sc = base.replace(seed=cell_seed(base.seed, i), **changes)
        d = None if out_dir is None else str(Path(out_dir) / f"cell_{i:03d}")
        cells.append(Cell(i, params, sc.to_dict(), d))
    return cells


def write_map(rows: list[dict], path) -> None:
    keys: list[str] = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def sensitivity_sweep(base: Scenario, noise_cm2=SENSITIVITY_NOISE_CM2, eps_beta=SENSITIVITY_BETA,
                      horizon_orbits: float = 20.0, random_beta: bool = True, parallel: int = 1,
                      out_dir=None) -> list[dict]:
    """Distance errors for every (leader noise, beta error) pair, one set per beta value.

    With ``random_beta`` each ``eps_beta`` value is the amplitude of a
    uniform per-step error; otherwise it is a constant error.
    """
    grid = []
    for eb in eps_beta:
        for sh in noise_cm2:
            ch = {"leader_noise_cm2": sh, "duration_orbits": horizon_orbits, "exact_model": False}
            ch.update({"eps_beta_amp": abs(eb)} if random_beta else {"eps_beta": eb})
            grid.append(dict(S_hat_cm2=sh, eps_beta=eb, beta_mode="random" if random_beta else "constant",
                             _changes=ch))
    rows = run_cells(_cells(base, grid, out_dir), parallel)
    if out_dir is not None:
        write_map(rows, Path(out_dir) / "map.csv")
    return rows


def ic_sweep(base: Scenario, da_m=None, de_factor=None, n: int = 11, horizon_orbits: float | None = None,
             parallel: int = 1, out_dir=None) -> dict:
    """Settling-time maps over leader offsets ``a += da`` and ``e += de_factor * e_f``."""
    da_m = np.linspace(0.0, 5.0, n) if da_m is None else np.asarray(da_m, float)
    de_factor = np.linspace(0.0, 5.0, n) if de_factor is None else np.asarray(de_factor, float)
    lead = base.leader
    e_f = base.follower.e
    grid = []
    for da in da_m:
        for de in de_factor:
            ch = {"leader.a_km": lead.a_km + da * 1e-3, "leader.e": lead.e + de * e_f}
            if horizon_orbits is not None:
                ch["duration_orbits"] = horizon_orbits
            grid.append(dict(da_m=float(da), de_factor=float(de), _changes=ch))
    rows = run_cells(_cells(base, grid, out_dir), parallel)
    if out_dir is not None:
        write_map(rows, Path(out_dir) / "map.csv")
    shape = (da_m.size, de_factor.size)

    def grid_of(key):
        return np.array([r.get(key) if r.get(key) is not None else np.nan for r in rows], float).reshape(shape)

    return dict(da_m=da_m, de_factor=de_factor, settling_d_T=grid_of("settling_d_T"),
                settling_Sf_T=grid_of("settling_Sf_T"), S_f_min=grid_of("S_f_min_cm2"),
                S_f_max=grid_of("S_f_max_cm2"), rows=rows)


def interior_minima(m: np.ndarray) -> list[tuple[int, int]]:
    """Cells strictly below both neighbours along a row or a column of the map."""
    m = np.asarray(m, float)
    out = []
    for i in range(m.shape[0]):
        for j in range(m.shape[1]):
            v = m[i, j]
            if not np.isfinite(v):
                continue
            row = 0 < j < m.shape[1] - 1 and v < m[i, j - 1] and v < m[i, j + 1]
            col = 0 < i < m.shape[0] - 1 and v < m[i - 1, j] and v < m[i + 1, j]
            if row or col:
                out.append((i, j))
    return out


def is_monotone(m: np.ndarray) -> bool:
    """True if the map is non-decreasing along every row and every column."""
    m = np.asarray(m, float)
    return bool(np.all(np.diff(m, axis=0) >= 0) and np.all(np.diff(m, axis=1) >= 0))
