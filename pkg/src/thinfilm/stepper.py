"""Conservative semi-implicit time stepping.

Each step solves, for the new nodal heights ``u``,

    u_i + dt/h (q_{i+1/2} - q_{i-1/2}) = u_i^old + dt g_i,

with the face flux linearised about the current Picard iterate ``v``:

    q = q(v) + A(v) * (D3 u - D3 v),

where ``D3`` is the face third difference and ``A = dq/dw`` the coefficient
of the highest derivative in the non-divergence form. The unknown enters
linearly, the iteration is repeated until ``u`` stops changing, and the
converged step is the fully implicit Euler step of the flux form. Even
reflection makes the ghost fluxes odd, ``q_{-1/2} = -q_{1/2}``, so the wall
flux vanishes and the trapezoidal mass telescopes exactly.

Each linear solve is carried out for the correction ``u - v`` and the new
state is rebuilt from the discrete fluxes. Round-off therefore scales with
the size of the update rather than with the stiffness of ``I + dt L``,
constants stay fixed bit for bit, and mass is conserved to round-off.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import diagnostics
from . import grid as _grid
from .exceptions import (
    BlowupDetected,
    DomainError,
    NonFiniteError,
    SingularSystemError,
    StepFailure,
    TouchdownDetected,
)
from .grid import FilmState, Grid1D
from .operators import CoefficientSample, RegularizationConfig, _coeff_A_raw, coeff_A_bar_eps

logger = logging.getLogger(__name__)

T_END = "t_end reached"
TOUCHDOWN = "touchdown"
BLOWUP = "blow-up"
STEP_FAILURE = "step failure"


@dataclass(frozen=True)
class SolverConfig:
    dt_initial: float = 1e-6
    dt_min: float = 1e-14
    dt_max: float = 1e-2
    t_end: float = 1.0
    picard_max: int = 25
    picard_tol: float = 1e-10
    epsilon: float = 1e-8
    # None resolves to 1e-6 * min(u0) at the start of a run
    touchdown_threshold: float | None = None
    blowup_norm_cap: float = 1e6
    growth_factor: float = 1.2
    use_regularized: bool = True
    # steps changing any height by more than this fraction are retried with dt/2
    max_relative_change: float = 0.5

    def __post_init__(self):
        for name in ("dt_initial", "dt_min", "dt_max", "t_end", "picard_tol",
                     "epsilon", "blowup_norm_cap", "max_relative_change"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be finite and positive, got {value!r}")
        if not self.dt_min <= self.dt_initial <= self.dt_max:
            raise DomainError("need dt_min <= dt_initial <= dt_max")
        if int(self.picard_max) != self.picard_max or self.picard_max < 1:
            raise DomainError("picard_max must be an integer >= 1")
        if not self.growth_factor > 1:
            raise DomainError("growth_factor must exceed 1")
        t = self.touchdown_threshold
        if t is not None and not (math.isfinite(t) and t > 0):
            raise DomainError("touchdown_threshold must be positive")


@dataclass(frozen=True)
class StepOutcome:
    state: FilmState
    dt_used: float
    picard_iterations: int
    mobility_floor_activated: bool
    dt_next: float
    rejected: int = 0


@dataclass
class BandedSystem:
    """``(I + dt L) u = rhs`` with the matrix in LAPACK band storage (2, 2)."""

    ab: np.ndarray
    rhs: np.ndarray

    LOWER = 2
    UPPER = 2

    @property
    def size(self):
        return self.ab.shape[1]

    def to_dense(self):
        n, l, u = self.size, self.LOWER, self.UPPER
        dense = np.zeros((n, n))
        for k in range(-l, u + 1):
            row = u - k
            if k >= 0:
                dense[np.arange(n - k), np.arange(k, n)] = self.ab[row, k:]
            else:
                dense[np.arange(-k, n), np.arange(n + k)] = self.ab[row, : n + k]
        return dense

    def matvec(self, x):
        n, u = self.size, self.UPPER
        x = np.asarray(x, dtype=float)
        y = np.zeros(n)
        for k in range(-self.LOWER, u + 1):
            diag = self.ab[u - k]
            if k >= 0:
                y[: n - k] += diag[k:] * x[k:]
            else:
                y[-k:] += diag[: n + k] * x[: n + k]
        return y


@lru_cache(maxsize=32)
def _difference_operators(grid: Grid1D):
    """Face third difference ``(N, N+1)`` and reflected divergence ``(N+1, N)``."""
    n, h = grid.n_cells, grid.spacing
    rows, cols, vals = [], [], []
    for j in range(n):
        for offset, c in zip((-1, 0, 1, 2), (-1.0, 3.0, -3.0, 1.0)):
            col = j + offset
            if col < 0:
                col = -col
            elif col > n:
                col = 2 * n - col
            rows.append(j)
            cols.append(col)
            vals.append(c / h**3)
    d3 = sp.csr_matrix((vals, (rows, cols)), shape=(n, n + 1))

    div = sp.lil_matrix((n + 1, n))
    for i in range(1, n):
        div[i, i] = 1.0 / h
        div[i, i - 1] = -1.0 / h
    div[0, 0] = 2.0 / h
    div[n, n - 1] = -2.0 / h
    return d3, div.tocsr()


def _divergence(q, grid):
    """Reflected face-to-node divergence; the wall fluxes vanish."""
    out = np.empty(grid.n_nodes)
    h = grid.spacing
    out[1:-1] = (q[1:] - q[:-1]) / h
    out[0] = 2.0 * q[0] / h
    out[-1] = -2.0 * q[-1] / h
    return out


def flux_divergence(heights, face_mob, grid):
    """``Div(M * D3 u)`` evaluated stencil-wise (exactly zero for constants)."""
    return _divergence(face_mob * _grid.face_third_derivative(heights, grid), grid)


def face_coefficients(frozen, grid, params, config):
    """Face flux, linearisation coefficient and floor flag at ``frozen``.

    The flux is ``a ubar^3 (1 + |b ubar w|^(alpha-1)) w`` with ``ubar`` the
    face average and ``w`` the face third difference. The coefficient
    multiplying the implicit third difference is its derivative in ``w``,
    ``A(ubar, w) = a ubar^3 (1 + alpha |b ubar w|^(alpha-1))``.

    In the regularised variant ``ubar`` is replaced by its positive part, the
    coefficient by ``max(A, epsilon / 2)``, and the flux gains a Newtonian
    floor ``(epsilon / 2 - a ubar^3)^+ w``. Both changes are inactive, and
    the flag is False, wherever ``ubar >= (epsilon / 2a)^(1/3)``.
    """
    u = frozen.heights if isinstance(frozen, FilmState) else np.asarray(frozen, dtype=float)
    ubar = _grid.face_average(u, grid)
    w = _grid.face_third_derivative(u, grid)
    sample = CoefficientSample(ubar, 0.0, 0.0, w)
    floored = False
    if config.use_regularized:
        reg = RegularizationConfig(config.epsilon)
        ubar = np.maximum(ubar, 0.0)
        coeff = coeff_A_bar_eps(sample, params, reg)
        deficit = reg.floor - params.a * ubar**3
        floored = bool(np.any(deficit > 0))
    else:
        coeff = _coeff_A_raw(ubar, w, params)
    mob = params.a * ubar**3
    if params.b != 0.0:
        mob = mob * (1.0 + np.abs(params.b * ubar * w) ** (params.alpha - 1.0))
    q = mob * w
    if floored:
        q = q + np.maximum(deficit, 0.0) * w
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(coeff))):
        raise NonFiniteError("non-finite face coefficients")
    return q, np.asarray(coeff, dtype=float), floored


def _operator_band(face_coeff, grid, dt):
    d3, div = _difference_operators(grid)
    lap2 = (div.multiply(face_coeff[np.newaxis, :]) @ d3).tocsr()
    n = grid.n_nodes
    ab = np.zeros((5, n))
    for k in range(-2, 3):
        diag = dt * lap2.diagonal(k)
        if k == 0:
            diag = diag + 1.0
        if k >= 0:
            ab[2 - k, k:] = diag
        else:
            ab[2 - k, : n + k] = diag
    return ab


def assemble_system(state, grid, params, config, dt, frozen, forcing_values=None):
    """Linear system for the new heights with coefficients frozen at ``frozen``.

    The face flux is linearised about the frozen iterate,
    ``q = q(frozen) + A(frozen) (D3 u - D3 frozen)``, which is linear in the
    unknown ``u``. Returns a :class:`BandedSystem` for ``u``; for a constant
    ``frozen`` the matrix is ``I + dt a c^3 D4`` and the right-hand side is
    ``u_old + dt * forcing_values``.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt!r}")
    u_old = grid.check(state.heights)
    v = frozen.heights if isinstance(frozen, FilmState) else np.asarray(frozen, dtype=float)
    q, coeff, _ = face_coefficients(v, grid, params, config)
    ab = _operator_band(coeff, grid, dt)
    explicit = q - coeff * _grid.face_third_derivative(v, grid)
    rhs = u_old - dt * _divergence(explicit, grid)
    if forcing_values is not None:
        rhs = rhs + dt * np.asarray(forcing_values, dtype=float)
    if not (np.all(np.isfinite(ab)) and np.all(np.isfinite(rhs))):
        raise NonFiniteError("non-finite entries in the implicit system")
    return BandedSystem(ab, rhs)


def solve_banded(system):
    """Solve a pentadiagonal :class:`BandedSystem` by LU with partial pivoting."""
    try:
        x = scipy.linalg.solve_banded(
            (system.LOWER, system.UPPER), system.ab, system.rhs,
            check_finite=False,
        )
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("banded solve produced non-finite values")
    return x


class _Rejected(Exception):
    pass


def _picard(state, grid, params, config, dt, forcing_values):
    # Same iteration as repeatedly solving assemble_system(..., frozen=v), but
    # solved for the correction u - v and rebuilt from the face fluxes.
    u_old = state.heights
    src = 0.0 if forcing_values is None else dt * forcing_values
    v = u_old
    floored_any = False
    for it in range(1, config.picard_max + 1):
        q, coeff, floored = face_coefficients(v, grid, params, config)
        floored_any |= floored
        residual = v - u_old - src + dt * _divergence(q, grid)
        correction = solve_banded(BandedSystem(_operator_band(coeff, grid, dt), -residual))
        q_new = q + coeff * _grid.face_third_derivative(correction, grid)
        u = u_old + src - dt * _divergence(q_new, grid)
        if not np.all(np.isfinite(u)):
            raise _Rejected("non-finite iterate")
        change = float(np.abs(u - v).max())
        v = u
        if change <= config.picard_tol * max(float(np.abs(u).max()), diagnostics.TINY):
            return u, it, floored_any
    raise _Rejected(f"Picard iteration did not converge in {config.picard_max} iterations")


def step(state, grid, params, config, dt=None, forcing=None, touchdown_threshold=None):
    """Advance ``state`` by one accepted step.

    Picard iterations re-freeze the mobility at the latest iterate until the
    relative max-norm change drops below ``picard_tol``. If that fails, or
    the step would move a height by more than ``max_relative_change`` of
    itself, the step is retried with half the step size, down to ``dt_min``.

    Parameters
    ----------
    dt : float, optional
        Step size to attempt; defaults to ``config.dt_initial``.
    forcing : callable, optional
        ``forcing(t, x)`` added to the right-hand side, evaluated at the new
        time level.
    touchdown_threshold : float, optional
        Overrides ``config.touchdown_threshold``.

    Raises
    ------
    StepFailure
        When no step succeeds at ``dt_min``.
    TouchdownDetected, BlowupDetected
        After a successful step whose result crosses the monitors; the
        completed step is attached as ``.outcome``.
    """
    u_old = grid.check(state.heights)
    dt = config.dt_initial if dt is None else float(dt)
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt!r}")
    dt = min(dt, config.dt_max)
    rejected = 0
    while True:
        t_new = state.time + dt
        g = None if forcing is None else np.asarray(forcing(t_new, grid.nodes), dtype=float)
        try:
            u, iters, floored = _picard(state, grid, params, config, dt, g)
            rel = np.abs(u - u_old) / np.maximum(np.abs(u_old), diagnostics.TINY)
            if float(rel.max()) > config.max_relative_change:
                raise _Rejected(f"relative height change {rel.max():.3g} too large")
            break
        except (_Rejected, SingularSystemError, NonFiniteError) as exc:
            if dt <= config.dt_min:
                raise StepFailure(f"step failed at t={state.time!r} with dt={dt!r}: {exc}") from exc
            logger.debug("rejecting step at t=%g, dt=%g: %s", state.time, dt, exc)
            dt = max(0.5 * dt, config.dt_min)
            rejected += 1

    outcome = StepOutcome(
        state=FilmState(t_new, u),
        dt_used=dt,
        picard_iterations=iters,
        mobility_floor_activated=floored,
        dt_next=min(dt * config.growth_factor, config.dt_max),
        rejected=rejected,
    )
    threshold = touchdown_threshold if touchdown_threshold is not None else config.touchdown_threshold
    if threshold is not None and outcome.state.min_height <= threshold:
        raise TouchdownDetected(
            f"min height {outcome.state.min_height:.3g} <= {threshold:.3g} at t={t_new:.6g}",
            outcome,
        )
    if diagnostics.norm_proxy(outcome.state, grid) > config.blowup_norm_cap:
        raise BlowupDetected(f"norm monitor exceeded {config.blowup_norm_cap:g} at t={t_new:.6g}", outcome)
    return outcome


@dataclass
class RunReport:
    final_state: FilmState
    records: list = field(default_factory=list)
    termination: str = T_END
    message: str = ""
    floor_activated: bool = False
    #: per-step flags, aligned with ``records[1:]``
    floor_history: list = field(default_factory=list)

    @property
    def n_steps(self):
        return len(self.records) - 1

    @property
    def exit_code(self):
        return {T_END: 0, TOUCHDOWN: 2, BLOWUP: 3, STEP_FAILURE: 4}[self.termination]


def run(initial, grid, params, config, forcing=None, callback=None, max_steps=None):
    """Integrate from ``initial`` to ``config.t_end`` or until a monitor fires.

    ``callback(step_index, outcome)`` is called after each accepted step.
    Returns a :class:`RunReport` with one diagnostics record per accepted
    step plus the initial record.
    """
    u0 = grid.check(initial.heights)
    if np.any(u0 <= 0):
        raise DomainError("initial film height must be strictly positive")
    threshold = config.touchdown_threshold
    if threshold is None:
        threshold = 1e-6 * float(u0.min())

    state = initial
    report = RunReport(final_state=state)
    report.records.append(diagnostics.record(state, grid, params))
    dt = config.dt_initial
    t_end = config.t_end
    n = 0
    while state.time < t_end * (1.0 - 1e-14) and (max_steps is None or n < max_steps):
        remaining = t_end - state.time
        # avoid leaving a sliver step at the end
        this_dt = remaining if dt >= remaining * (1.0 - 1e-9) else dt
        try:
            outcome = step(state, grid, params, config, dt=this_dt, forcing=forcing,
                           touchdown_threshold=threshold)
        except StepFailure as exc:
            report.termination = STEP_FAILURE
            report.message = str(exc)
            break
        except (TouchdownDetected, BlowupDetected) as exc:
            outcome = exc.outcome
            _accept(report, outcome, grid, params)
            state = outcome.state
            report.termination = TOUCHDOWN if isinstance(exc, TouchdownDetected) else BLOWUP
            report.message = str(exc)
            n += 1
            if callback is not None:
                callback(n, outcome)
            break
        _accept(report, outcome, grid, params)
        state = outcome.state
        n += 1
        if this_dt == remaining and outcome.dt_used == this_dt:
            state = FilmState(t_end, state.heights)
        dt = outcome.dt_next
        if callback is not None:
            callback(n, outcome)
    report.final_state = state
    return report


def _accept(report, outcome, grid, params):
    report.records.append(
        diagnostics.record(outcome.state, grid, params, outcome.dt_used, outcome.picard_iterations)
    )
    report.floor_history.append(outcome.mobility_floor_activated)
    report.floor_activated |= outcome.mobility_floor_activated
