"""Run metrics: settling times, steady-state errors and constraint audits.

Every function takes plain arrays in presentation units (the CSV columns),
so a summary recomputed from a re-read CSV is identical to the original.
"""

from __future__ import annotations

import math

import numpy as np

SETTLING_BAND = 0.02


def settling_time(t, series, final: float | None = None, initial: float | None = None,
                  band: float = SETTLING_BAND) -> float | None:
    """First time after which ``|x - final| <= band |final - initial|`` for all remaining samples.

    ``final``/``initial`` default to the last/first sample. Returns ``None``
    when the last sample is outside the band (never settles).
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(series, dtype=float)
    if x.size == 0 or x.shape != t.shape:
        raise ValueError("t and series must be non-empty and of equal length")
    final = float(x[-1]) if final is None else float(final)
    initial = float(x[0]) if initial is None else float(initial)
    span = abs(final - initial)
    if span == 0.0:
        raise ValueError("constant series: settling time is undefined")
    outside = np.abs(x - final) > band * span
    if outside[-1]:
        return None
    idx = np.flatnonzero(outside)
    return float(t[0]) if idx.size == 0 else float(t[idx[-1] + 1])


def _window(t, period, start_orbits=None, last_orbits=None):
    t = np.asarray(t, float)
    mask = np.ones(t.shape, bool)
    if start_orbits is not None:
        mask &= t >= start_orbits * period
    if last_orbits is not None:
        mask &= t >= t[-1] - last_orbits * period
    return mask


def _opt(x):
    return None if x is None or not math.isfinite(x) else float(x)


def summarize(cols: dict, period: float, d_target: float = 60.0, steady_from: float = 6.0,
              last: float = 2.0) -> dict:
    """Summary metrics from presentation-unit columns (see ``logio.PRESENTATION``)."""
    t = cols["t[s]"]
    d = cols["d[m]"]
    sf = cols["S_f[cm^2]"]
    out: dict = {"duration_orbits": float(t[-1] / period) if t.size else 0.0, "samples": int(t.size)}
    try:
        ts = settling_time(t, d)
    except ValueError:
        ts = None
    out["settling_d_s"] = _opt(ts)
    out["settling_d_T"] = None if ts is None else ts / period
    try:
        ts = settling_time(t, sf)
    except ValueError:
        ts = None
    out["settling_Sf_s"] = _opt(ts)
    out["settling_Sf_T"] = None if ts is None else ts / period
    out["final_d_m"] = float(d[-1])
    lw = _window(t, period, last_orbits=last)
    out["max_abs_d_err_last_m"] = float(np.max(np.abs(d[lw] - d_target)))
    sw = _window(t, period, start_orbits=steady_from)
    eps = np.abs(d - d_target) / d_target
    out["max_eps_d_steady"] = float(eps[sw].max()) if sw.any() else None
    out["max_eps_d"] = float(eps.max())
    out["S_f_min_cm2"] = float(sf.min())
    out["S_f_max_cm2"] = float(sf.max())
    margins = np.column_stack([cols[f"margin{i}[-]"] for i in (1, 2, 3)])
    out["min_config_margin"] = [float(v) for v in margins.min(axis=0)]
    am = cols["alpha_margin[-]"]
    out["min_alpha_margin"] = float(np.nanmin(am)) if np.isfinite(am).any() else None
    out["max_abs_z_m"] = float(np.max(np.abs(cols["z_h[m]"])))
    st = cols["status[-]"].astype(int)
    out["status_counts"] = {str(k): int(v) for k, v in zip(*np.unique(st, return_counts=True))}
    opt = st == 0
    out["max_eq_residual_optimal"] = float(cols["eq_residual[m^2/s]"][opt].max()) if opt.any() else None
    vc = cols["Vc[-]"]
    dv = np.diff(vc)
    out["Vc_increases"] = int(np.sum(dv > 1e-9 * vc[0])) if vc.size > 1 else 0
    return out
