"""Mass, energy, dissipation and the blow-up monitor.

The energy ``E(u) = 1/2 int u_x^2`` and the dissipation
``D(u) = a int u^3 |u_xxx|^2 + b^(alpha-1) u^(alpha+2) |u_xxx|^(alpha+1)`` are
evaluated on the cell faces, where the conservative scheme places its
fluxes. With that choice the implicit step satisfies
``E(u_new) - E(u_old) <= -dt * sum_faces h M w^2`` exactly for any positive
frozen mobility, so the discrete energy can only decrease.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np

from . import grid as _grid
from .exceptions import DomainError, ShapeError

TINY = 1e-300

CSV_COLUMNS = (
    "time", "mass", "energy", "dissipation", "min_height",
    "max_third_derivative", "blowup_monitor", "dt", "picard_iterations",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    time: float
    mass: float
    energy: float
    dissipation: float
    min_height: float
    max_third_derivative: float
    blowup_monitor: float
    dt: float
    picard_iterations: int

    def csv_row(self):
        """Values in CSV column order, floats with 17 significant digits."""
        return [v if isinstance(v, int) else f"{v:.17g}" for v in astuple(self)]

    @classmethod
    def from_csv_row(cls, row):
        kinds = [f.type for f in fields(cls)]
        return cls(*(int(v) if k in ("int", int) else float(v) for v, k in zip(row, kinds)))


def mass(state, grid):
    """Trapezoidal integral of the heights over the domain."""
    u = grid.check(state.heights)
    return float(np.dot(grid.trapezoid_weights, u))


def energy(state, grid):
    u = grid.check(state.heights)
    g = _grid.face_difference(u, grid)
    return 0.5 * grid.spacing * float(np.dot(g, g))


def relative_energy(u, v, grid):
    """``1/2 int (u_x - v_x)^2``; zero exactly when ``u - v`` is constant."""
    uh = grid.check(u.heights)
    vh = v.heights
    if vh.shape != uh.shape:
        raise ShapeError("relative_energy needs two states on the same grid")
    g = _grid.face_difference(uh - vh, grid)
    return 0.5 * grid.spacing * float(np.dot(g, g))


def dissipation_density(heights, grid, params):
    """Face values of ``u^3 w^2 + b^(alpha-1) u^(alpha+2) |w|^(alpha+1)``."""
    u = grid.check(heights)
    if np.any(u < 0):
        raise DomainError("dissipation is defined for non-negative heights only")
    ubar = _grid.face_average(u, grid)
    w = _grid.face_third_derivative(u, grid)
    alpha = params.alpha
    aw = np.abs(w)
    density = ubar**3 * w * w
    if params.b != 0.0:
        density = density + params.b ** (alpha - 1.0) * ubar ** (alpha + 2.0) * aw ** (alpha + 1.0)
    return density


def dissipation(state, grid, params):
    return params.a * grid.spacing * float(np.sum(dissipation_density(state.heights, grid, params)))


def touchdown_term(state):
    return 1.0 / max(state.min_height, TINY)


def norm_proxy(state, grid):
    """``max_i sum_{k=0..4} |d^k u / dx^k|`` at the nodes.

    Computable stand-in for the fractional Sobolev norm whose divergence
    signals blow-up.
    """
    u = grid.check(state.heights)
    total = np.abs(u)
    for order in (1, 2, 3, 4):
        total = total + np.abs(_grid.derivative(u, order, grid))
    return float(total.max())


def blowup_monitor(state, grid):
    """``1 / min u + norm_proxy(u)``; diverges at touchdown or derivative blow-up."""
    return touchdown_term(state) + norm_proxy(state, grid)


def record(state, grid, params, dt=0.0, picard_iterations=0):
    w = _grid.face_third_derivative(state.heights, grid)
    return DiagnosticsRecord(
        time=state.time,
        mass=mass(state, grid),
        energy=energy(state, grid),
        dissipation=dissipation(state, grid, params) if state.min_height >= 0 else math.nan,
        min_height=state.min_height,
        max_third_derivative=float(np.abs(w).max()),
        blowup_monitor=blowup_monitor(state, grid),
        dt=float(dt),
        picard_iterations=int(picard_iterations),
    )


def energy_budget_residual(series):
    """Relative defect of the discrete energy balance along a run.

    ``|E(T) + sum_n dt_n (D_{n-1} + D_n) / 2 - E(0)| / E(0)``, where the
    first record is the initial state. The defect is ``O(dt)`` for the
    first-order implicit scheme.
    """
    series = list(series)
    if not series:
        raise DomainError("empty diagnostics series")
    e0 = series[0].energy
    dissipated = 0.0
    for prev, cur in zip(series, series[1:]):
        dissipated += cur.dt * 0.5 * (prev.dissipation + cur.dissipation)
    return abs(series[-1].energy + dissipated - e0) / max(e0, TINY)


@dataclass
class StabilityReport:
    times: np.ndarray
    relative_energies: np.ndarray
    ratios: np.ndarray
    growth_rate: float

    @property
    def initial_relative_energy(self):
        return float(self.relative_energies[0])

    @property
    def max_ratio(self):
        finite = self.ratios[np.isfinite(self.ratios)]
        return float(finite.max()) if finite.size else math.nan

    @property
    def bounded(self):
        return math.isfinite(self.growth_rate)


def uniqueness_stability_check(
    u0, perturbation_scale, grid, params, config, n_steps, mode=2, dt=None
):
    """Run from ``u0`` and from ``u0 + scale * cos(mode pi x / l)`` in lockstep.

    Both runs take ``n_steps`` steps of the same fixed size (``dt`` or
    ``config.dt_initial``) so their records line up in time. The growth of
    ``relative_energy(t) / relative_energy(0)`` is summarised by the smallest
    rate ``L >= 0`` with ``ratio(t) <= exp(L t)`` at every recorded time.
    """
    from .stepper import step

    x = grid.nodes
    bump = np.cos(mode * math.pi * x / grid.half_length)
    v0 = _grid.FilmState(u0.time, u0.heights + perturbation_scale * bump)
    if v0.min_height <= 0:
        raise DomainError("perturbed initial data must stay positive")
    dt = config.dt_initial if dt is None else dt

    u, v = u0, v0
    times = [u0.time]
    rel = [relative_energy(u, v, grid)]
    for _ in range(n_steps):
        u = step(u, grid, params, config, dt=dt).state
        v = step(v, grid, params, config, dt=dt).state
        times.append(u.time)
        rel.append(relative_energy(u, v, grid))

    times = np.array(times)
    rel = np.array(rel)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = rel / rel[0] if rel[0] > 0 else np.full_like(rel, np.nan)
        elapsed = times - times[0]
        rates = np.log(ratios[1:]) / elapsed[1:]
    rates = rates[np.isfinite(rates)]
    growth = max(0.0, float(rates.max())) if rates.size else 0.0
    if np.any(np.isinf(ratios)):
        growth = math.inf
    return StabilityReport(times, rel, ratios, growth)
