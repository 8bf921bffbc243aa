"""Martingale basis: moments, orthonormalization (against an independent
Cholesky-of-Hankel oracle), increment assembly and realized covariation."""

import numpy as np
import pytest

from bsviel import (
    CompoundPoisson,
    DiscreteJumps,
    LevySpec,
    TimeGrid,
    assemble_H,
    compute_moments,
    orthonormality_diagnostic,
    orthonormalize,
    simulate_paths,
)


# --- independent oracle -----------------------------------------------------
# If G = L L^T is the Cholesky factorization of the Hankel Gram matrix
# G[i, j] = m_{i+j}, the rows of L^{-1} are the coefficient vectors of the
# orthonormal polynomials (C G C^T = I with C lower triangular and positive
# diagonal, which is exactly the Gram-Schmidt normalization).  Rank detection:
# largest leading minor that stays positive definite relative to its diagonal.

def cholesky_hankel_oracle(m: np.ndarray, order: int, tol: float = 1e-10):
    rank = 0
    for r in range(1, order + 1):
        idx = np.add.outer(np.arange(r), np.arange(r))
        g = m[idx]
        try:
            lo = np.linalg.cholesky(g)
        except np.linalg.LinAlgError:
            break
        if lo[r - 1, r - 1] ** 2 <= tol * max(g[r - 1, r - 1], tol):
            break
        rank = r
    if rank == 0:
        return 0, np.zeros((0, 0))
    idx = np.add.outer(np.arange(rank), np.arange(rank))
    lo = np.linalg.cholesky(m[idx])
    coef = np.linalg.solve(lo, np.eye(rank))
    return rank, coef


def unit_poisson_spec(rate=1.0, sigma=0.0):
    return LevySpec(
        horizon_T=1.0,
        gaussian_sigma=sigma,
        jump_law=CompoundPoisson(rate=rate, sizes=DiscreteJumps(atoms=((1.0, 1.0),))),
    )


def pm_one_spec(rate=2.0, sigma=0.0):
    return LevySpec(
        horizon_T=1.0,
        gaussian_sigma=sigma,
        jump_law=CompoundPoisson(
            rate=rate, sizes=DiscreteJumps(atoms=((-1.0, 0.5), (1.0, 0.5)))
        ),
    )


BUILTIN_SPECS = [
    unit_poisson_spec(),
    unit_poisson_spec(sigma=0.5),
    pm_one_spec(),
    pm_one_spec(sigma=0.5),
    LevySpec(horizon_T=1.0, gaussian_sigma=1.0),
    LevySpec(
        horizon_T=1.0,
        jump_law=CompoundPoisson(rate=1.5, sizes=DiscreteJumps(
            atoms=((-0.5, 0.25), (0.5, 0.5), (2.0, 0.25)))),
    ),
]


class TestMoments:
    def test_unit_poisson_all_ones(self):
        table = compute_moments(unit_poisson_spec(), 3)
        np.testing.assert_allclose(table.m, np.ones(7))

    def test_pure_gaussian_point_mass(self):
        table = compute_moments(LevySpec(horizon_T=1.0, gaussian_sigma=1.0), 2)
        np.testing.assert_allclose(table.m, [1.0, 0, 0, 0, 0])

    def test_mixed_spec(self):
        # x^2 nu has mass 1 at each of +-1, sigma^2 = 0.25 sits at 0
        table = compute_moments(pm_one_spec(sigma=0.5), 2)
        np.testing.assert_allclose(table.m, [2.25, 0.0, 2.0, 0.0, 2.0])


class TestOrthonormalize:
    def test_single_atom_rank_one(self):
        basis = orthonormalize(compute_moments(unit_poisson_spec(), 3), 3)
        assert basis.effective_rank == 1
        np.testing.assert_allclose(basis.coef, [[1.0]])

    def test_gaussian_only_rank_one(self):
        basis = orthonormalize(compute_moments(LevySpec(horizon_T=1.0, gaussian_sigma=1.0), 2), 2)
        assert basis.effective_rank == 1
        np.testing.assert_allclose(basis.coef, [[1.0]])

    def test_two_atoms(self):
        basis = orthonormalize(compute_moments(pm_one_spec(), 3), 3)
        assert basis.effective_rank == 2
        np.testing.assert_allclose(basis.coef[0], [1 / np.sqrt(2), 0.0], atol=1e-12)
        np.testing.assert_allclose(basis.coef[1], [0.0, 1 / np.sqrt(2)], atol=1e-12)

    def test_trivial_measure_flagged(self):
        basis = orthonormalize(compute_moments(LevySpec(horizon_T=1.0), 2), 2)
        assert basis.effective_rank == 0
        assert basis.is_trivial

    def test_positive_leading_coefficients(self):
        for spec in BUILTIN_SPECS:
            basis = orthonormalize(compute_moments(spec, 4), 4)
            for i in range(basis.effective_rank):
                assert basis.coef[i, i] > 0

    def test_matches_cholesky_oracle(self):
        for spec in BUILTIN_SPECS:
            table = compute_moments(spec, 4)
            basis = orthonormalize(table, 4)
            rank, coef = cholesky_hankel_oracle(table.m, 4)
            assert basis.effective_rank == rank, spec
            np.testing.assert_allclose(basis.coef, coef, atol=1e-8)

    def test_symbolic_orthonormality(self):
        for spec in BUILTIN_SPECS:
            table = compute_moments(spec, 4)
            basis = orthonormalize(table, 4)
            r = basis.effective_rank
            gram = np.empty((r, r))
            for i in range(r):
                for j in range(r):
                    gram[i, j] = table.inner(basis.coef[i, : i + 1],
                                             basis.coef[j, : j + 1])
            np.testing.assert_allclose(gram, np.eye(r), atol=1e-10)


class TestAssembleH:
    def test_compensated_poisson(self):
        spec = unit_poisson_spec()
        grid = TimeGrid(32, 1.0)
        paths = simulate_paths(spec, grid, 500, seed=23)
        basis = orthonormalize(compute_moments(spec, 3), 3)
        incs = assemble_H(basis, paths)
        expected = paths.jump_counts - grid.dt
        np.testing.assert_allclose(incs.dH[:, :, 0], expected, atol=1e-12)

    def test_pm_one_second_martingale(self):
        spec = pm_one_spec()
        grid = TimeGrid(16, 1.0)
        paths = simulate_paths(spec, grid, 400, seed=29)
        basis = orthonormalize(compute_moments(spec, 3), 3)
        incs = assemble_H(basis, paths)
        # squared +-1 jumps count every jump: dH^(2) = (dN - 2 dt) / sqrt(2)
        expected = (paths.jump_counts - 2.0 * grid.dt) / np.sqrt(2.0)
        np.testing.assert_allclose(incs.dH[:, :, 1], expected, atol=1e-12)

    def test_trivial_rank_empty(self):
        spec = LevySpec(horizon_T=1.0)
        grid = TimeGrid(8, 1.0)
        paths = simulate_paths(spec, grid, 50, seed=31)
        basis = orthonormalize(compute_moments(spec, 1), 1)
        incs = assemble_H(basis, paths)
        assert incs.dH.shape == (50, 8, 0)

    def test_order_mismatch_rejected(self):
        spec = pm_one_spec(sigma=0.5)
        grid = TimeGrid(8, 1.0)
        paths = simulate_paths(spec, grid, 50, seed=37, max_power=2)
        basis = orthonormalize(compute_moments(spec, 3), 3)  # rank 3 > max_power
        with pytest.raises(ValueError, match="order"):
            assemble_H(basis, paths)


class TestDiagnostic:
    def test_needs_enough_paths(self):
        spec = unit_poisson_spec()
        grid = TimeGrid(8, 1.0)
        paths = simulate_paths(spec, grid, 100, seed=41)
        incs = assemble_H(orthonormalize(compute_moments(spec, 1), 1), paths)
        with pytest.raises(ValueError):
            orthonormality_diagnostic(incs, grid)

    def test_compensated_poisson_unit_variance(self):
        spec = unit_poisson_spec()
        grid = TimeGrid(64, 1.0)
        paths = simulate_paths(spec, grid, 10_000, seed=43)
        incs = assemble_H(orthonormalize(compute_moments(spec, 1), 1), paths)
        m = orthonormality_diagnostic(incs, grid)
        assert m.shape == (1, 1)
        assert abs(m[0, 0] - 1.0) < 0.05

    def test_off_diagonal_small(self):
        spec = pm_one_spec()
        grid = TimeGrid(64, 1.0)
        paths = simulate_paths(spec, grid, 20_000, seed=47)
        incs = assemble_H(orthonormalize(compute_moments(spec, 2), 2), paths)
        m = orthonormality_diagnostic(incs, grid)
        assert abs(m[0, 1]) < 0.05
        assert abs(m[1, 0]) < 0.05

    def test_monte_carlo_rate(self):
        # same estimator at 2e3 and 32e3 paths: the rms Frobenius error should
        # shrink by about sqrt(16) = 4; average over replicates and allow a
        # factor 2 either way
        spec = pm_one_spec(sigma=0.5)
        grid = TimeGrid(32, 1.0)
        basis = orthonormalize(compute_moments(spec, 3), 3)

        def rms_error(n_paths, seeds):
            errs = []
            for seed in seeds:
                paths = simulate_paths(spec, grid, n_paths, seed=seed)
                m = orthonormality_diagnostic(assemble_H(basis, paths), grid)
                errs.append(np.linalg.norm(m - np.eye(3)) ** 2)
            return np.sqrt(np.mean(errs))

        ratio = rms_error(2_000, range(50, 58)) / rms_error(32_000, range(60, 68))
        assert 2.0 < ratio < 8.0, ratio

    def test_trivial_empty_matrix(self):
        spec = LevySpec(horizon_T=1.0)
        grid = TimeGrid(8, 1.0)
        paths = simulate_paths(spec, grid, 2_000, seed=61)
        incs = assemble_H(orthonormalize(compute_moments(spec, 1), 1), paths)
        assert orthonormality_diagnostic(incs, grid).shape == (0, 0)
