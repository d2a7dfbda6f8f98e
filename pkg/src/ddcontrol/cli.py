"""Command-line front end: ``ddcontrol run | sweep | verify | presets``.

Exit codes: 0 success, 1 verification or simulation failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .sim.engine import SimulationError, Simulator
from .sim.logio import write_run
from .sim.scenario import PRESET_NOTES, PRESETS, Scenario, ScenarioError, preset
from .sim.sweeps import SENSITIVITY_BETA, SENSITIVITY_NOISE_CM2, ic_sweep, interior_minima, sensitivity_sweep

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

log = logging.getLogger("ddcontrol")


class UsageError(Exception):
    pass


def load_scenario(args) -> Scenario:
    try:
        if args.scenario:
            path = Path(args.scenario)
            if not path.is_file():
                raise UsageError(f"scenario file not found: {path}")
            sc = Scenario.load(path)
            if args.preset:
                raise UsageError("give either --scenario or --preset, not both")
        else:
            sc = preset(args.preset or "case1")
        sc = sc.with_overrides(args.override or [])
        changes = {}
        if args.seed is not None:
            changes["seed"] = args.seed
        if getattr(args, "decimate", None) is not None:
            changes["decimate"] = args.decimate
        return sc.replace(**changes) if changes else sc
    except (ScenarioError, OSError) as exc:
        raise UsageError(str(exc)) from exc


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", help="scenario file (YAML or JSON)")
    p.add_argument("--preset", choices=sorted(PRESETS), help="built-in case study (default case1)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, help="noise seed")
    p.add_argument("--override", action="append", metavar="KEY=VALUE",
                   help="override a scenario key; dotted keys reach nested blocks (repeatable)")
    p.add_argument("--decimate", type=int, help="log every n-th control step")


def cmd_run(args) -> int:
    sc = load_scenario(args)
    out = Path(args.out)
    sim = Simulator(sc)
    try:
        simlog = sim.run()
        code = EXIT_OK
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        simlog, code = exc.log, EXIT_FAIL
    summary = write_run(simlog, out)
    m = summary["metrics"]
    ts, fd = m.get("settling_d_T"), m.get("final_d_m")
    print(f"{sc.name}: {summary['exit']}; d settling "
          + ("not reached" if ts is None else f"{ts:.3f} T") + ("" if fd is None else f", final d {fd:.3f} m"))
    print(f"wrote {out}/timeseries.csv, summary.json, plot.gp")
    return code


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_sweep(args) -> int:
    sc = load_scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.campaign == "sensitivity":
        rows = sensitivity_sweep(sc, noise_cm2=args.noise or SENSITIVITY_NOISE_CM2,
                                 eps_beta=args.beta if args.beta is not None else SENSITIVITY_BETA,
                                 horizon_orbits=args.orbits or 20.0, random_beta=not args.constant_beta,
                                 parallel=args.parallel, out_dir=out)
        for r in rows:
            print(f"S_hat={r['S_hat_cm2']:g} cm^2 eps_beta={r['eps_beta']:g}: {r['status']}, "
                  f"max steady eps_d={r.get('max_eps_d_steady')}")
    else:
        da = np.linspace(0.0, 5.0, args.grid)
        de = np.linspace(0.0, 5.0, args.grid)
        res = ic_sweep(sc, da, de, horizon_orbits=args.orbits, parallel=args.parallel, out_dir=out)
        rows = res["rows"]
        for key in ("settling_d_T", "settling_Sf_T"):
            mins = interior_minima(res[key])
            print(f"{key}: interior minima at (da_m, de_factor) "
                  + (", ".join(f"({da[i]:g}, {de[j]:g})" for i, j in mins) or "none"))
        np.savetxt(out / "settling_d_T.csv", res["settling_d_T"], delimiter=",")
        np.savetxt(out / "settling_Sf_T.csv", res["settling_Sf_T"], delimiter=",")
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows) - failed}/{len(rows)} cells ok; map in {out / 'map.csv'}")
    return EXIT_FAIL if failed == len(rows) else EXIT_OK


def cmd_verify(args) -> int:
    from .verify import format_table, run_all

    checks = run_all()
    print(format_table(checks))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL


def cmd_presets(args) -> int:
    for name in sorted(PRESETS):
        print(f"{name}: {PRESET_NOTES[name]}")
    if args.show:
        print(json.dumps(preset(args.show).to_dict(), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ddcontrol", description="Differential-drag formation control simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a parameter campaign")
    p.add_argument("campaign", choices=("sensitivity", "ic"))
    _common(p)
    p.add_argument("--parallel", type=int, default=1, help="maximum concurrent cells")
    p.add_argument("--orbits", type=float, help="run length in orbits (sensitivity default 20)")
    p.add_argument("--grid", type=int, default=11, help="ic grid points per axis")
    p.add_argument("--noise", type=_float_list, help="leader noise amplitudes in cm^2, comma separated")
    p.add_argument("--beta", type=_float_list, help="beta error values, comma separated")
    p.add_argument("--constant-beta", action="store_true", help="treat --beta values as constant errors")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the oracle self-checks")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("presets", help="list the built-in case studies")
    p.add_argument("--show", choices=sorted(PRESETS), help="print one preset in full")
    p.set_defaults(func=cmd_presets)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
