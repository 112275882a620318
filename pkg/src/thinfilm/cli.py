"""Command-line driver: ``thinfilm run|mms|sweep <config>``.

Exit codes
----------
0  run reached t_end, MMS thresholds met, or every sweep run completed
1  usage or configuration error
2  touchdown
3  blow-up
4  step failure
5  MMS threshold failure
6  at least one sweep run did not reach t_end
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import diagnostics
from . import grid as _grid
from .config import RunConfig, config_dict, load_config, serialize_config
from .exceptions import ConfigError, ThinFilmError
from .mms import ManufacturedSolution, convergence_study, write_orders
from .stepper import TOUCHDOWN, T_END, run

ENV_OUTPUT_DIR = "THINFILM_OUTPUT_DIR"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MMS_FAILED = 5
EXIT_SWEEP_FAILED = 6

SNAPSHOT_COLUMNS = ("x", "u", "u_x", "u_xxx", "pressure")
SUMMARY_COLUMNS = ("value", "termination", "final_energy", "final_min_height")
SWEEP_PARAMS = ("alpha", "tau_star", "amplitude")


def _fmt(v):
    return f"{v:.17g}"


def output_dir(config: RunConfig, override=None) -> Path:
    """Output directory: explicit override, then the environment, then the config."""
    path = override or os.environ.get(ENV_OUTPUT_DIR) or config.output.directory
    return Path(path)


def write_snapshot(state, grid, params, path):
    u = state.heights
    u_x = _grid.derivative(u, 1, grid)
    u_xx = _grid.derivative(u, 2, grid)
    u_xxx = _grid.derivative(u, 3, grid)
    pressure = -params.sigma * u_xx
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SNAPSHOT_COLUMNS)
        for row in zip(grid.nodes, u, u_x, u_xxx, pressure):
            writer.writerow([_fmt(v) for v in row])


def write_diagnostics(records, path, every=1):
    last = len(records) - 1
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(diagnostics.CSV_COLUMNS)
        for i, rec in enumerate(records):
            if i % every == 0 or i == last:
                writer.writerow(rec.csv_row())


def read_diagnostics(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return [diagnostics.DiagnosticsRecord.from_csv_row(r) for r in rows[1:]]


def _json_float(v):
    return v if math.isfinite(v) else str(v)


def execute_run(config: RunConfig, out: Path):
    """Run one simulation described by ``config`` and write its artifacts to ``out``.

    Returns the :class:`~thinfilm.stepper.RunReport`.
    """
    grid = config.grid()
    params = config.params()
    initial = config.initial_state()
    out.mkdir(parents=True, exist_ok=True)
    for stale in out.glob("snap_*.csv"):
        stale.unlink()

    interval = config.output.snapshot_interval
    write_snapshot(initial, grid, params, out / "snap_0.csv")

    def snapshot(n, outcome):
        if n % interval == 0:
            write_snapshot(outcome.state, grid, params, out / f"snap_{n}.csv")

    report = run(initial, grid, params, config.solver, forcing=config.drain(), callback=snapshot)
    if report.n_steps % interval != 0:
        write_snapshot(report.final_state, grid, params, out / f"snap_{report.n_steps}.csv")

    write_diagnostics(report.records, out / "diagnostics.csv", config.output.diagnostics_every)
    final = report.records[-1]
    payload = {
        "termination": report.termination,
        "exit_code": report.exit_code,
        "message": report.message,
        "steps": report.n_steps,
        "final_time": report.final_state.time,
        "touchdown_time": report.final_state.time if report.termination == TOUCHDOWN else None,
        "mobility_floor_activated": report.floor_activated,
        "final_diagnostics": {k: _json_float(v) for k, v in dataclasses.asdict(final).items()},
        "config": config_dict(config),
    }
    with open(out / "report.json", "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return report


def _fail(message):
    print(f"error: {message}", file=sys.stderr)
    return EXIT_USAGE


def cmd_run(config_path, output=None):
    try:
        config = load_config(config_path)
        out = output_dir(config, output)
        report = execute_run(config, out)
    except (ConfigError, ThinFilmError, OSError) as exc:
        return _fail(exc)
    final = report.records[-1]
    print(f"{report.termination} after {report.n_steps} steps at t={report.final_state.time:.6g} "
          f"(energy {final.energy:.6g}, min height {final.min_height:.6g}); output in {out}")
    return report.exit_code


def default_min_order(params):
    """Order threshold: 2 is expected unless the Holder kernel limits smoothness."""
    return 1.8 if params.b == 0.0 or params.alpha >= 2.0 else 1.3


def cmd_mms(config_path, output=None):
    try:
        config = load_config(config_path)
        if config.mms is None:
            raise ConfigError("mms needs an [mms] section", key="mms")
        m = config.mms
        params = config.params()
        base = config.grid()
        ms = ManufacturedSolution(m.c0, m.c1, m.lam, m.k, base.half_length)
        rows = convergence_study(ms, params, base, m.levels, m.dt_factor, config.solver.t_end,
                                 config.solver)
        out = output_dir(config, output)
        out.mkdir(parents=True, exist_ok=True)
        write_orders(rows, out / "mms_orders.csv")
    except (ConfigError, ThinFilmError, OSError) as exc:
        return _fail(exc)

    threshold = m.min_order if m.min_order is not None else default_min_order(params)
    for r in rows:
        order = "-" if math.isnan(r.observed_order) else f"{r.observed_order:.3f}"
        print(f"level {r.level}  N={r.n_cells:<5d} dt={r.dt:.3e}  error={r.max_error:.3e}  order={order}")
    orders = [r.observed_order for r in rows[1:]]
    decreasing = all(f.max_error < c.max_error for c, f in zip(rows, rows[1:]))
    ok = decreasing and all(o >= threshold for o in orders)
    print(f"threshold {threshold}: {'met' if ok else 'NOT met'}")
    return EXIT_OK if ok else EXIT_MMS_FAILED


def with_parameter(config: RunConfig, name, value) -> RunConfig:
    """Copy of ``config`` with one sweep parameter replaced."""
    if name == "alpha":
        if config.fluid is not None:
            return dataclasses.replace(config, fluid=dataclasses.replace(config.fluid, alpha=value))
        # b_tilde is implied by b and alpha
        coeffs = dataclasses.replace(config.coefficients, alpha=value, b_tilde=None)
        return dataclasses.replace(config, coefficients=coeffs)
    if name == "tau_star":
        if config.fluid is None:
            raise ConfigError("sweeping tau_star needs a [fluid] section", key="fluid.tau_star")
        return dataclasses.replace(config, fluid=dataclasses.replace(config.fluid, tau_star=value))
    if name == "amplitude":
        if config.initial.kind != "cosine":
            raise ConfigError("sweeping amplitude needs a cosine initial condition", key="initial.c1")
        return dataclasses.replace(config, initial=dataclasses.replace(config.initial, c1=value))
    raise ConfigError(f"unknown sweep parameter {name!r}; choose from {SWEEP_PARAMS}", key=name)


def _sweep_one(args):
    text, base_dir, name, value, out = args
    from .config import parse_config, validate

    try:
        config = with_parameter(parse_config(text, base_dir), name, value)
        validate(config)
        report = execute_run(config, Path(out))
    except ThinFilmError as exc:
        return value, f"error: {exc}", math.nan, math.nan
    final = report.records[-1]
    return value, report.termination, final.energy, final.min_height


def cmd_sweep(config_path, param, values, output=None, jobs=1):
    try:
        config = load_config(config_path)
        with_parameter(config, param, values[0])
        out = output_dir(config, output)
        out.mkdir(parents=True, exist_ok=True)
    except (ConfigError, ThinFilmError, OSError) as exc:
        return _fail(exc)

    text = serialize_config(config)
    tasks = [(text, config.base_dir, param, v, str(out / f"{param}_{v:g}")) for v in values]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, tasks))
    else:
        results = [_sweep_one(t) for t in tasks]

    with open(out / "sweep_summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for value, termination, energy, min_height in results:
            writer.writerow([_fmt(value), termination, _fmt(energy), _fmt(min_height)])
    for value, termination, energy, min_height in results:
        print(f"{param}={value:g}: {termination}, final energy {energy:.6g}, min height {min_height:.6g}")

    energies = [e for _, t, e, _ in results if t == T_END]
    if len(energies) > 1:
        diffs = np.diff(energies)
        trend = ("non-increasing" if np.all(diffs <= 0) else
                 "non-decreasing" if np.all(diffs >= 0) else "non-monotone")
        print(f"final energy is {trend} in the sweep order")
    ok = all(t == T_END for _, t, _, _ in results)
    return EXIT_OK if ok else EXIT_SWEEP_FAILED


def _values(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("no values given")
    return values


def build_parser():
    parser = argparse.ArgumentParser(
        prog="thinfilm", description="Thin-film solver with Ellis shear-thinning rheology.",
    )
    parser.add_argument("-o", "--output", help=f"output directory (overrides ${ENV_OUTPUT_DIR})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate one configuration")
    p.add_argument("config")
    p = sub.add_parser("mms", help="manufactured-solution convergence study")
    p.add_argument("config")
    p = sub.add_parser("sweep", help="repeat a run over parameter values")
    p.add_argument("config")
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--values", required=True, type=_values, help="comma-separated list")
    p.add_argument("--jobs", type=int, default=1, help="concurrent runs (default 1)")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.command == "run":
        return cmd_run(args.config, args.output)
    if args.command == "mms":
        return cmd_mms(args.config, args.output)
    return cmd_sweep(args.config, args.param, args.values, args.output, max(1, args.jobs))


if __name__ == "__main__":
    sys.exit(main())
