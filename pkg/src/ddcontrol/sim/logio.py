"""CSV / JSON / gnuplot output of a run and lossless re-reading of the CSV."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .engine import COLUMNS, CTL_NAMES, SimLog
from .metrics import summarize

# SI column -> presentation unit and scale; everything else keeps its SI unit
_AREA = {"S_f", "dS", "dS_d", "dS_e", "S_l"}
PRESENTATION = tuple(
    (f"{n}[cm^2]", 1e4) if n in _AREA else (f"{n}[{u}]", 1.0) for n, u in COLUMNS
)
HEADERS = tuple(h for h, _ in PRESENTATION)


def presentation(log: SimLog) -> np.ndarray:
    scale = np.array([s for _, s in PRESENTATION])
    return log.data * scale


def columns_dict(table: np.ndarray) -> dict:
    return {h: table[:, i] for i, h in enumerate(HEADERS)}


def write_csv(log: SimLog, path) -> np.ndarray:
    """Write the presentation table with shortest round-trip float formatting."""
    table = presentation(log)
    with open(path, "w") as fh:
        fh.write(",".join(HEADERS) + "\n")
        for row in table.tolist():
            fh.write(",".join(map(repr, row)) + "\n")
    return table


def read_csv(path) -> dict:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: header has {len(header)} fields, rows have {data.shape[1]}")
    return {h: data[:, i] for i, h in enumerate(header)}


def run_summary(log: SimLog, table: np.ndarray | None = None) -> dict:
    from .scenario import Scenario

    sc = Scenario.from_dict(log.scenario)
    table = presentation(log) if table is None else table
    metrics = summarize(columns_dict(table), sc.period, d_target=float(np.hypot(*sc.x_d[:2]))) if len(table) else {}
    return dict(
        scenario=sc.name,
        exit=log.message,
        ok=log.ok,
        wall_time_s=log.wall_time,
        period_s=sc.period,
        status_names=list(CTL_NAMES),
        metrics=metrics,
        design=log.design,
    )


def _col(name: str) -> int:
    return HEADERS.index(name) + 1


def plot_script(csv_name: str = "timeseries.csv", period: float = 1.0) -> str:
    """gnuplot script for the Hill-frame, surface, rate and constraint panels."""
    c = _col
    t = f"(${c('t[s]')}/{period!r})"
    panels = [
        ("Hill coordinates [m]", [(c("x_h[m]"), "x^h"), (c("y_h[m]"), "y^h"), (c("z_h[m]"), "z^h")]),
        ("inter-satellite distance [m]", [(c("d[m]"), "d")]),
        ("density [kg/m^3]", [(c("rho_f[kg/m^3]"), "follower"), (c("rho_l[kg/m^3]"), "leader")]),
        ("surface [cm^2]", [(c("S_f[cm^2]"), "S_f"), (c("S_l[cm^2]"), "S_l")]),
        ("surface difference [cm^2]", [(c("dS[cm^2]"), "dS"), (c("dS_d[cm^2]"), "dS_d")]),
        ("body rate [rad/s]", [(c(f"w{i}[rad/s]"), f"w{i}") for i in (1, 2, 3)]),
        ("airflow in body axes [-]", [(c(f"eta{i}[-]"), f"eta{i}") for i in (1, 2, 3)]),
        ("alpha margin [-]", [(c("alpha_margin[-]"), "alpha margin")]),
    ]
    lines = [
        "# gnuplot -p plot.gp   (or: gnuplot plot.gp to write plot.png)",
        "set datafile separator ','",
        "set terminal pngcairo size 1400,1800",
        "set output 'plot.png'",
        "set multiplot layout 5,2",
        "set grid",
        "set xlabel 't [T]'",
    ]
    for title, series in panels:
        lines.append(f"set title '{title}'")
        parts = [f"'{csv_name}' every ::1 using {t}:{col} with lines title '{name}'" for col, name in series]
        lines.append("plot " + ", \\\n     ".join(parts))
    lines.append("set title 'relative motion in the Hill frame'")
    lines.append("set xlabel 'y^h [m]'; set ylabel 'x^h [m]'")
    lines.append(f"plot '{csv_name}' every ::1 using {c('y_h[m]')}:{c('x_h[m]')} with lines notitle")
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"


def write_run(log: SimLog, out_dir) -> dict:
    """Write timeseries.csv, summary.json and plot.gp into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = write_csv(log, out / "timeseries.csv")
    summary = run_summary(log, table)
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    (out / "plot.gp").write_text(plot_script(period=summary["period_s"]))
    (out / "scenario.json").write_text(json.dumps(log.scenario, indent=2))
    return summary
