"""Manufactured solutions for the forced film equation.

The manufactured profile is ``u*(t, x) = c0 + c1 exp(-lam t) cos(k pi x / l)``.
It satisfies ``u_x = u_xxx = 0`` at ``x = +-l`` for every integer ``k``, so it
is an admissible solution of

    u_t + (a u^3 [1 + |b u u_xxx|^(alpha-1)] u_xxx)_x = g

once ``g`` is taken as the analytic left-hand side evaluated on ``u*``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import DomainError
from .grid import FilmState, Grid1D
from .stepper import SolverConfig, run


@dataclass(frozen=True)
class ManufacturedSolution:
    base: float = 1.0
    amplitude: float = 0.5
    decay_rate: float = 1.0
    wavenumber: int = 1
    half_length: float = 1.0

    def __post_init__(self):
        if not self.base > 0:
            raise DomainError("base must be positive")
        if not abs(self.amplitude) < self.base:
            raise DomainError("need |amplitude| < base for a positive profile")
        if not self.decay_rate > 0:
            raise DomainError("decay_rate must be positive")
        if int(self.wavenumber) != self.wavenumber or self.wavenumber < 1:
            raise DomainError("wavenumber must be a positive integer")

    def derivatives(self, t, x):
        """``(u, u_t, u_x, u_xx, u_xxx, u_xxxx)`` at ``(t, x)``."""
        x = np.asarray(x, dtype=float)
        kappa = self.wavenumber * math.pi / self.half_length
        amp = self.amplitude * math.exp(-self.decay_rate * t)
        c, s = np.cos(kappa * x), np.sin(kappa * x)
        return (
            self.base + amp * c,
            -self.decay_rate * amp * c,
            -kappa * amp * s,
            -kappa**2 * amp * c,
            kappa**3 * amp * s,
            kappa**4 * amp * c,
        )


def exact_state(ms, t, grid):
    return FilmState(t, ms.derivatives(t, grid.nodes)[0])


def forcing(ms, t, x, params):
    """Source term making ``u*`` an exact solution.

    Product-rule expansion of the flux divergence; only ``|u_xxx|^(alpha-1)``
    appears, so the expression stays finite wherever ``u_xxx = 0``.
    """
    u, u_t, u_x, _, w, w_x = ms.derivatives(t, x)
    alpha = params.alpha
    div = 3.0 * u**2 * u_x * w + u**3 * w_x
    if params.b != 0.0:
        kern = np.abs(w) ** (alpha - 1.0)
        div = div + params.b ** (alpha - 1.0) * (
            (alpha + 2.0) * u ** (alpha + 1.0) * u_x * kern * w
            + alpha * u ** (alpha + 2.0) * kern * w_x
        )
    g = u_t + params.a * div
    return float(g) if np.ndim(g) == 0 else g


@dataclass(frozen=True)
class OrderRow:
    level: int
    n_cells: int
    dt: float
    max_error: float
    observed_order: float


ORDER_COLUMNS = ("level", "N", "dt", "max_error", "observed_order")


def convergence_study(ms, params, base_grid, levels, dt_factor, t_end, config=None):
    """Forced runs on successively doubled grids with ``dt = dt_factor * h^2``.

    Returns one :class:`OrderRow` per level with the max-norm error at
    ``t_end`` and ``log2(e_coarse / e_fine)`` (NaN on the first level).
    """
    if levels < 3:
        raise DomainError(f"a convergence study needs at least 3 levels, got {levels}")
    if not math.isclose(base_grid.half_length, ms.half_length):
        raise DomainError("grid and manufactured solution disagree on the domain")
    config = config or SolverConfig()

    def source(t, x):
        return forcing(ms, t, x, params)

    rows = []
    grid = base_grid
    prev = None
    for level in range(levels):
        h = grid.spacing
        n_steps = max(1, math.ceil(t_end / (dt_factor * h * h) - 1e-9))
        dt = t_end / n_steps
        cfg = replace(
            config, dt_initial=dt, dt_max=dt, dt_min=min(config.dt_min, dt), t_end=t_end,
        )
        report = run(exact_state(ms, 0.0, grid), grid, params, cfg, forcing=source)
        if report.termination != "t_end reached":
            raise DomainError(f"MMS run on N={grid.n_cells} ended early: {report.message}")
        err = float(np.abs(report.final_state.heights - exact_state(ms, t_end, grid).heights).max())
        order = math.log2(prev / err) if prev is not None and err > 0 else math.nan
        rows.append(OrderRow(level, grid.n_cells, dt, err, order))
        prev = err
        grid = grid.refined()
    return rows


def write_orders(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ORDER_COLUMNS)
        for r in rows:
            writer.writerow([r.level, r.n_cells, f"{r.dt:.17g}", f"{r.max_error:.17g}",
                             f"{r.observed_order:.17g}"])
