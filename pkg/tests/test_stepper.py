import dataclasses

import numpy as np
import pytest

from thinfilm import (
    DomainError, FilmState, FluidParams, Grid1D, SolverConfig, StepFailure, TouchdownDetected,
    derive_params, energy, mass, run, step,
)
from thinfilm.mms import ManufacturedSolution, exact_state, forcing
from thinfilm.stepper import BandedSystem, assemble_system, face_coefficients, solve_banded

from conftest import cosine_state


def dense_fourth_difference(n_cells, h):
    """Five-point fourth difference of the even extension, built row by row."""
    n = n_cells + 1
    out = np.zeros((n, n))
    for i in range(n):
        for offset, c in zip(range(-2, 3), (1, -4, 6, -4, 1)):
            j = i + offset
            j = -j if j < 0 else (2 * (n - 1) - j if j > n - 1 else j)
            out[i, j] += c / h**4
    return out


def random_banded(rng, n):
    ab = rng.normal(size=(5, n))
    ab[2] += 8.0  # diagonally dominant
    ab[0, :2] = ab[1, :1] = 0.0
    ab[4, -2:] = ab[3, -1:] = 0.0
    return BandedSystem(ab, rng.normal(size=n))


class TestSolverConfig:
    @pytest.mark.parametrize("kwargs", [
        dict(dt_initial=0.0), dict(dt_min=1e-3, dt_initial=1e-4), dict(picard_max=0),
        dict(growth_factor=1.0), dict(epsilon=-1.0), dict(touchdown_threshold=0.0),
        dict(t_end=np.inf),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(DomainError):
            SolverConfig(**kwargs)


class TestAssembly:
    def test_constant_frozen_matches_dense_oracle(self):
        grid = Grid1D(1.0, 8)
        params = derive_params(alpha=1.5)
        c, dt = 1.4, 3e-4
        state = FilmState(0.0, np.full(9, c))
        system = assemble_system(state, grid, params, SolverConfig(), dt, state)
        expected = np.eye(9) + dt * params.a * c**3 * dense_fourth_difference(8, grid.spacing)
        np.testing.assert_allclose(system.to_dense(), expected, rtol=1e-13, atol=1e-13)
        np.testing.assert_array_equal(system.rhs, state.heights)

    def test_small_dt_is_identity(self):
        grid = Grid1D(1.0, 16)
        state = cosine_state(grid)
        system = assemble_system(state, grid, derive_params(), SolverConfig(), 1e-300, state)
        np.testing.assert_allclose(system.to_dense(), np.eye(17), atol=1e-200)
        np.testing.assert_allclose(solve_banded(system), state.heights, rtol=1e-15)

    def test_forcing_enters_rhs(self):
        grid = Grid1D(1.0, 8)
        state = FilmState(0.0, np.full(9, 1.0))
        system = assemble_system(state, grid, derive_params(), SolverConfig(), 0.5, state, np.full(9, 2.0))
        np.testing.assert_array_equal(system.rhs, np.full(9, 2.0))

    def test_newtonian_assembly_independent_of_alpha(self):
        grid = Grid1D(1.0, 32)
        state = cosine_state(grid)
        frozen = cosine_state(grid, c1=0.3)
        systems = [
            assemble_system(state, grid, FluidParams.from_coefficients(0.5, 0.0, alpha),
                            SolverConfig(), 1e-3, frozen)
            for alpha in (1.3, 2.0, 3.7)
        ]
        for s in systems[1:]:
            np.testing.assert_array_equal(s.ab, systems[0].ab)
            np.testing.assert_array_equal(s.rhs, systems[0].rhs)

    def test_rejects_non_positive_dt(self):
        grid = Grid1D(1.0, 8)
        state = FilmState(0.0, np.ones(9))
        with pytest.raises(DomainError):
            assemble_system(state, grid, derive_params(), SolverConfig(), 0.0, state)


class TestSolveBanded:
    def test_identity(self):
        ab = np.zeros((5, 6))
        ab[2] = 1.0
        rhs = np.arange(6.0)
        np.testing.assert_array_equal(solve_banded(BandedSystem(ab, rhs)), rhs)

    def test_matches_dense_lu(self, rng):
        system = random_banded(rng, 12)
        np.testing.assert_allclose(
            solve_banded(system), np.linalg.solve(system.to_dense(), system.rhs), atol=1e-10
        )

    def test_matvec_matches_dense(self, rng):
        system = random_banded(rng, 12)
        x = rng.normal(size=12)
        np.testing.assert_allclose(system.matvec(x), system.to_dense() @ x, rtol=1e-13)

    def test_constant_rhs_gives_constant(self):
        grid = Grid1D(1.0, 16)
        state = FilmState(0.0, np.full(17, 0.8))
        system = assemble_system(state, grid, derive_params(alpha=2), SolverConfig(), 0.1, state)
        np.testing.assert_allclose(solve_banded(system), 0.8, rtol=1e-13)

    def test_singular(self):
        from thinfilm import SingularSystemError

        with pytest.raises(SingularSystemError):
            solve_banded(BandedSystem(np.zeros((5, 4)), np.ones(4)))


class TestStep:
    def test_constant_is_steady(self):
        grid = Grid1D(1.0, 32)
        state = FilmState(0.0, np.full(33, 1.3))
        out = step(state, grid, derive_params(alpha=1.5), SolverConfig(), dt=1e-3)
        np.testing.assert_array_equal(out.state.heights, state.heights)
        assert out.picard_iterations == 1
        assert out.state.time == 1e-3

    def test_mass_and_energy(self):
        grid = Grid1D(1.0, 64)
        params = derive_params(alpha=2.0)
        state = cosine_state(grid, c0=2.0, c1=0.1)
        out = step(state, grid, params, SolverConfig(), dt=1e-5)
        assert abs(mass(out.state, grid) / mass(state, grid) - 1) <= 1e-12
        assert energy(out.state, grid) <= energy(state, grid)

    def test_manufactured_one_step_error(self):
        ms = ManufacturedSolution(base=1.0, amplitude=0.3)
        params = derive_params(alpha=2.0)
        ratios = []
        for n in (32, 64, 128):
            grid = Grid1D(1.0, n)
            dt = grid.spacing**2
            out = step(exact_state(ms, 0.0, grid), grid, params, SolverConfig(dt_max=1.0), dt=dt,
                       forcing=lambda t, x: forcing(ms, t, x, params))
            err = np.abs(out.state.heights - exact_state(ms, dt, grid).heights).max()
            ratios.append(err / (dt + grid.spacing**2))
        assert ratios[-1] <= ratios[0]

    def test_floor_inactive_on_healthy_film(self):
        grid = Grid1D(1.0, 32)
        out = step(cosine_state(grid), grid, derive_params(), SolverConfig(epsilon=1e-6), dt=1e-4)
        assert not out.mobility_floor_activated

    def test_floor_activates_below_threshold(self):
        grid = Grid1D(1.0, 32)
        params = derive_params()
        _, _, floored = face_coefficients(np.full(33, 1e-3), grid, params, SolverConfig(epsilon=1e-6))
        assert floored

    def test_touchdown_signal_carries_outcome(self):
        grid = Grid1D(1.0, 32)
        state = cosine_state(grid)
        with pytest.raises(TouchdownDetected) as info:
            step(state, grid, derive_params(), SolverConfig(), dt=1e-4, touchdown_threshold=10.0)
        assert info.value.outcome.state.time == pytest.approx(1e-4)

    def test_step_failure_at_dt_min(self):
        grid = Grid1D(1.0, 32)
        cfg = SolverConfig(picard_max=1, picard_tol=1e-300, dt_min=1e-3, dt_initial=1e-3)
        with pytest.raises(StepFailure):
            step(cosine_state(grid), grid, derive_params(), cfg)

    def test_rejected_steps_halve_dt(self):
        grid = Grid1D(1.0, 64)
        cfg = SolverConfig(dt_initial=1e-2, dt_max=1e-2, max_relative_change=0.01)
        out = step(cosine_state(grid), grid, derive_params(alpha=1.5), cfg)
        assert out.rejected > 0 and out.dt_used == 1e-2 / 2**out.rejected


class TestRun:
    def test_constant_run(self):
        grid = Grid1D(1.0, 32)
        state = FilmState(0.0, np.full(33, 0.7))
        report = run(state, grid, derive_params(), SolverConfig(dt_initial=1e-3, t_end=0.05))
        assert report.termination == "t_end reached" and report.exit_code == 0
        assert report.final_state.time == 0.05
        np.testing.assert_array_equal(report.final_state.heights, state.heights)

    def test_lands_on_t_end(self):
        grid = Grid1D(1.0, 32)
        report = run(cosine_state(grid), grid, derive_params(), SolverConfig(dt_initial=3e-4, t_end=1e-2))
        assert report.final_state.time == 1e-2
        assert len(report.records) == report.n_steps + 1

    def test_energy_decreases_and_mass_is_kept(self):
        grid = Grid1D(1.0, 64)
        report = run(cosine_state(grid), grid, derive_params(alpha=1.5),
                     SolverConfig(dt_initial=1e-4, dt_max=1e-4, t_end=0.02))
        energies = np.array([r.energy for r in report.records])
        masses = np.array([r.mass for r in report.records])
        assert np.all(np.diff(energies) <= 1e-10 * energies[0])
        assert np.abs(masses / masses[0] - 1).max() <= 1e-12
        assert all(r.dissipation >= 0 for r in report.records)

    def test_callback_and_max_steps(self):
        grid = Grid1D(1.0, 16)
        seen = []
        report = run(cosine_state(grid), grid, derive_params(), SolverConfig(dt_initial=1e-4),
                     callback=lambda n, o: seen.append(n), max_steps=5)
        assert seen == [1, 2, 3, 4, 5] and report.n_steps == 5

    def test_touchdown_terminates(self):
        grid = Grid1D(1.0, 32)
        cfg = SolverConfig(dt_initial=1e-3, dt_max=1e-2, t_end=10.0, touchdown_threshold=1e-2)
        report = run(cosine_state(grid, c0=0.1, c1=0.05), grid, derive_params(), cfg,
                     forcing=lambda t, x: np.full_like(x, -0.1))
        assert report.termination == "touchdown" and report.exit_code == 2
        assert report.final_state.min_height <= 1e-2

    def test_rejects_non_positive_initial(self):
        grid = Grid1D(1.0, 8)
        with pytest.raises(DomainError):
            run(FilmState(0.0, np.zeros(9)), grid, derive_params(), SolverConfig())

    def test_unregularised_matches_regularised_on_healthy_film(self):
        grid = Grid1D(1.0, 32)
        cfg = SolverConfig(dt_initial=1e-4, t_end=5e-3)
        a = run(cosine_state(grid), grid, derive_params(), cfg)
        b = run(cosine_state(grid), grid, derive_params(), dataclasses.replace(cfg, use_regularized=False))
        np.testing.assert_array_equal(a.final_state.heights, b.final_state.heights)
