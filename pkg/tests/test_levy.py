"""Driving-noise simulator: compensator rates, determinism, martingale checks."""

import numpy as np
import pytest

from bsviel import (
    CompoundPoisson,
    DiscreteJumps,
    LevySpec,
    TimeGrid,
    UniformJumps,
    power_moments,
    simulate_paths,
)


def unit_poisson(rate=1.0, sigma=0.0, drift=0.0, T=1.0):
    return LevySpec(
        horizon_T=T,
        brownian_dim_d=1,
        drift_b=drift,
        gaussian_sigma=sigma,
        jump_law=CompoundPoisson(rate=rate, sizes=DiscreteJumps(atoms=((1.0, 1.0),))),
    )


def pm_one_spec(rate=2.0, sigma=0.0, T=1.0):
    atoms = ((-1.0, 0.5), (1.0, 0.5))
    return LevySpec(
        horizon_T=T,
        brownian_dim_d=1,
        gaussian_sigma=sigma,
        jump_law=CompoundPoisson(rate=rate, sizes=DiscreteJumps(atoms=atoms)),
    )


class TestSpecValidation:
    def test_rejects_bad_probabilities(self):
        with pytest.raises(ValueError):
            DiscreteJumps(atoms=((1.0, 0.4), (2.0, 0.4)))

    def test_rejects_nonpositive_rate(self):
        with pytest.raises(ValueError):
            CompoundPoisson(rate=0.0, sizes=DiscreteJumps(atoms=((1.0, 1.0),)))

    def test_rejects_unbounded_uniform(self):
        with pytest.raises(ValueError):
            UniformJumps(low=0.0, high=np.inf)

    def test_rejects_jump_law_without_moments(self):
        with pytest.raises(ValueError):
            CompoundPoisson(rate=1.0, sizes="lognormal")

    def test_grid_needs_two_steps(self):
        with pytest.raises(ValueError):
            TimeGrid(n_steps=1, horizon_T=1.0)


class TestPowerMoments:
    def test_unit_poisson_all_ones(self):
        # int x^i d(delta_1) = 1 for every i
        np.testing.assert_allclose(power_moments(unit_poisson(), 6), np.ones(6))

    def test_pure_gaussian(self):
        spec = LevySpec(horizon_T=1.0, gaussian_sigma=1.0)
        np.testing.assert_allclose(power_moments(spec, 5), [0.0, 1.0, 0.0, 0.0, 0.0])

    def test_symmetric_atoms(self):
        # 2 * (0.5 * 1^i + 0.5 * (-1)^i): 0 for odd i, 2 for even i
        got = power_moments(pm_one_spec(), 6)
        np.testing.assert_allclose(got, [0.0, 2.0, 0.0, 2.0, 0.0, 2.0])

    def test_drift_enters_first_moment_only(self):
        got = power_moments(unit_poisson(drift=0.25), 3)
        np.testing.assert_allclose(got, [1.25, 1.0, 1.0])

    def test_uniform_jump_moments(self):
        law = UniformJumps(low=0.0, high=2.0)
        # E[J^i] = 2^i / (i+1)
        for i in range(1, 7):
            assert law.moment(i) == pytest.approx(2.0**i / (i + 1))


class TestSimulatePaths:
    def test_no_levy_activity(self):
        spec = LevySpec(horizon_T=1.0, brownian_dim_d=2)
        grid = TimeGrid(64, 1.0)
        b = simulate_paths(spec, grid, 500, seed=1)
        assert np.all(b.dL == 0.0)
        assert np.all(b.dY == 0.0)
        assert b.dW.std() == pytest.approx(np.sqrt(grid.dt), rel=0.1)

    def test_same_seed_bit_identical(self):
        spec = pm_one_spec(sigma=0.5)
        grid = TimeGrid(32, 1.0)
        a = simulate_paths(spec, grid, 200, seed=42)
        b = simulate_paths(spec, grid, 200, seed=42)
        assert np.array_equal(a.dW, b.dW)
        assert np.array_equal(a.dY, b.dY)
        assert np.array_equal(a.jump_sizes, b.jump_sizes)
        assert np.array_equal(a.jump_times, b.jump_times)

    def test_poisson_count_mean(self):
        grid = TimeGrid(16, 1.0)
        b = simulate_paths(unit_poisson(), grid, 10_000, seed=3)
        total = b.jump_counts.sum(axis=1)
        assert abs(total.mean() - 1.0) < 3.0 / np.sqrt(10_000)

    def test_brownian_terminal_variance(self):
        spec = LevySpec(horizon_T=2.0, brownian_dim_d=2)
        grid = TimeGrid(32, 2.0)
        b = simulate_paths(spec, grid, 10_000, seed=5)
        wT = b.dW.sum(axis=1)
        cov = np.cov(wT.T)
        np.testing.assert_allclose(np.diag(cov), [2.0, 2.0], rtol=0.05)
        assert abs(cov[0, 1]) < 0.05 * 2.0

    def test_centered_increments_are_mean_zero(self):
        spec = pm_one_spec(sigma=0.5)
        grid = TimeGrid(64, 1.0)
        b = simulate_paths(spec, grid, 20_000, seed=7, max_power=4)
        totals = b.dY.sum(axis=1)  # (P, 4)
        for i in range(4):
            se = totals[:, i].std() / np.sqrt(b.n_paths)
            assert abs(totals[:, i].mean()) < 4.0 * se, f"power {i + 1}"

    def test_pure_jump_quadratic_sum_exact(self):
        grid = TimeGrid(16, 1.0)
        b = simulate_paths(pm_one_spec(sigma=0.0), grid, 300, seed=11, max_power=2)
        squares = b.power_jump_increments[:, :, 1].sum(axis=1)
        per_path = np.bincount(b.jump_path, weights=b.jump_sizes**2, minlength=300)
        np.testing.assert_allclose(squares, per_path, atol=1e-12)

    def test_power_increments_consistent_with_compensators(self):
        spec = pm_one_spec(sigma=0.5)
        grid = TimeGrid(8, 1.0)
        b = simulate_paths(spec, grid, 50, seed=13)
        raw = b.power_jump_increments
        rates = power_moments(spec, b.max_power)
        np.testing.assert_allclose(raw - grid.dt * rates, b.dY, atol=1e-12)

    def test_jumps_live_inside_their_step(self):
        grid = TimeGrid(16, 1.0)
        b = simulate_paths(unit_poisson(rate=3.0), grid, 200, seed=17)
        lo = grid.nodes[b.jump_step]
        assert np.all(b.jump_times >= lo)
        assert np.all(b.jump_times <= lo + grid.dt)

    def test_gaussian_part_split(self):
        spec = unit_poisson(rate=1.0, sigma=0.7, drift=0.3)
        grid = TimeGrid(8, 1.0)
        b = simulate_paths(spec, grid, 100, seed=19)
        jumps = np.bincount(
            b.jump_path * grid.n_steps + b.jump_step,
            weights=b.jump_sizes,
            minlength=100 * grid.n_steps,
        ).reshape(100, grid.n_steps)
        np.testing.assert_allclose(
            b.dL, spec.drift_b * grid.dt + b.dG + jumps, atol=1e-12
        )
