"""Orthonormal martingale basis built from the power-jump processes.

The polynomials 1, x, x^2, ... are orthonormalized against the measure
mu(dx) = x^2 nu(dx) + sigma^2 delta_0(dx), where nu is the jump intensity
measure of the Levy process and sigma its Gaussian coefficient.  The
resulting lower-triangular coefficients turn the compensated power-jump
increments into pairwise strongly orthonormal martingale increments whose
predictable covariation is delta_ij * t.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .levy import LevySpec, PathBundle, TimeGrid

__all__ = [
    "MomentTable",
    "TeugelsBasis",
    "TeugelsIncrements",
    "compute_moments",
    "orthonormalize",
    "assemble_H",
    "orthonormality_diagnostic",
]

# relative pivot tolerance for the numerical rank of the Hankel Gram matrix
RANK_TOL = 1e-10


@dataclass(frozen=True)
class MomentTable:
    """Moments m_k = int x^k mu(dx) for k = 0..2K."""

    order: int
    m: np.ndarray  # (2*order + 1,)

    def __post_init__(self):
        if self.m.shape != (2 * self.order + 1,):
            raise ValueError("moment table must cover degree 2*order")

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """mu-inner product of two polynomials given by coefficient vectors."""
        prods = np.outer(a, b)
        degs = np.add.outer(np.arange(len(a)), np.arange(len(b)))
        return float(np.sum(prods * self.m[degs]))

    def gram(self, size: int) -> np.ndarray:
        """Hankel Gram matrix of the monomials 1..x^(size-1)."""
        idx = np.add.outer(np.arange(size), np.arange(size))
        return self.m[idx]


def compute_moments(spec: LevySpec, order: int) -> MomentTable:
    """Exact moments of mu(dx) = x^2 nu(dx) + sigma^2 delta_0(dx) up to degree 2*order."""
    if order < 1:
        raise ValueError("order must be >= 1")
    m = np.array([spec.jump_moment(k + 2) for k in range(2 * order + 1)])
    m[0] += spec.gaussian_sigma**2
    return MomentTable(order=order, m=m)


@dataclass(frozen=True)
class TeugelsBasis:
    """Orthonormalization output.

    ``coef[i, k]`` is the coefficient of x^k in the i-th orthonormal
    polynomial (both zero-based), so the martingale of index i+1 combines the
    compensated power-jump processes of orders 1..i+1 with weights
    ``coef[i, :i+1]``.  Leading coefficients are positive, which pins the
    otherwise sign-ambiguous Gram-Schmidt output.  ``effective_rank`` can be
    smaller than the requested order: a jump measure with finitely many atoms
    supports only that many orthonormal polynomials.
    """

    requested_order: int
    effective_rank: int
    coef: np.ndarray  # (effective_rank, effective_rank), lower triangular
    moments: MomentTable

    @property
    def is_trivial(self) -> bool:
        return self.effective_rank == 0

    def poly(self, i: int, x: np.ndarray) -> np.ndarray:
        """Evaluate the i-th orthonormal polynomial (i = 0..rank-1)."""
        return np.polynomial.polynomial.polyval(x, self.coef[i, : i + 1])

    def jump_weight(self, i: int, x: np.ndarray) -> np.ndarray:
        """x * poly(i, x): the jump of martingale i+1 caused by a jump of size x."""
        return np.asarray(x) * self.poly(i, x)

    def to_dict(self) -> dict:
        return {
            "requested_order": self.requested_order,
            "effective_rank": self.effective_rank,
            "coefficients": self.coef.tolist(),
            "moments": self.moments.m.tolist(),
        }


def orthonormalize(moments: MomentTable, order: int) -> TeugelsBasis:
    """Gram-Schmidt in the mu-inner product with numerical rank detection.

    Degrees are processed in order; the sweep stops at the first degree whose
    residual against the span of the lower degrees falls below RANK_TOL
    relative to the raw monomial norm (the Hankel Gram matrix of an atomic
    measure has exactly rank = number of atoms).  A second orthogonalization
    pass guards against cancellation.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if moments.order < order:
        raise ValueError("moment table too short for requested order")

    rows: list[np.ndarray] = []
    for deg in range(order):
        raw_norm2 = float(moments.m[2 * deg])
        v = np.zeros(deg + 1)
        v[deg] = 1.0
        for _ in range(2):  # re-orthogonalize once for stability
            for q in rows:
                proj = moments.inner(v, np.pad(q, (0, deg + 1 - len(q))))
                v -= proj * np.pad(q, (0, deg + 1 - len(q)))
        norm2 = moments.inner(v, v)
        if raw_norm2 <= 0.0 or norm2 <= RANK_TOL * raw_norm2:
            break
        rows.append(v / np.sqrt(norm2))

    rank = len(rows)
    coef = np.zeros((rank, rank))
    for i, q in enumerate(rows):
        coef[i, : len(q)] = q
    return TeugelsBasis(
        requested_order=order,
        effective_rank=rank,
        coef=coef,
        moments=moments,
    )


@dataclass
class TeugelsIncrements:
    """Martingale increments dH[p, j, i] = sum_k coef[i, k] * dY^(k+1)[p, j].

    Empty (last axis of size zero) when the basis is trivial.  Immutable by
    convention, like PathBundle.
    """

    basis: TeugelsBasis
    paths: PathBundle
    dH: np.ndarray  # (P, n, effective_rank)

    @property
    def k_eff(self) -> int:
        return self.basis.effective_rank

    @cached_property
    def teugels_nodes(self) -> np.ndarray:
        """H at the grid nodes, shape (P, n+1, k_eff), H_0 = 0."""
        p, n, k = self.dH.shape
        out = np.zeros((p, n + 1, k))
        np.cumsum(self.dH, axis=1, out=out[:, 1:, :])
        return out

    @cached_property
    def jump_compensator_rates(self) -> np.ndarray:
        """Drift rate of each martingale, shape (k_eff,).

        Rate h_i such that H^(i)_t + h_i * t equals the Gaussian ingredient
        c_{i,1} * sigma * B_t plus the running sum of per-jump weights
        x * poly(i-1, x); the Levy drift and the sigma^2 flow cancel inside
        the compensated power processes.  Used by the closed-form exponential.
        """
        rates = np.array(
            [self.paths.spec.jump_moment(k) for k in range(1, self.k_eff + 1)]
        )
        return self.basis.coef @ rates


def assemble_H(basis: TeugelsBasis, paths: PathBundle) -> TeugelsIncrements:
    """Combine compensated power-jump increments into orthonormal martingale increments."""
    k = basis.effective_rank
    if paths.max_power < k:
        raise ValueError(
            f"paths carry power increments up to order {paths.max_power}, "
            f"basis needs {k}"
        )
    if k == 0:
        dH = np.zeros((paths.n_paths, paths.grid.n_steps, 0))
    else:
        dH = paths.dY[:, :, :k] @ basis.coef.T
    return TeugelsIncrements(basis=basis, paths=paths, dH=dH)


def orthonormality_diagnostic(incs: TeugelsIncrements, grid: TimeGrid) -> np.ndarray:
    """Realized covariation matrix (1/T) * E-hat[sum_j dH^(i)_j dH^(k)_j].

    Converges to the identity at the Monte Carlo rate; the diagonal checks
    the normalisation <H^(i), H^(i)>_t = t and the off-diagonal entries the
    pairwise strong orthogonality.
    """
    if incs.paths.n_paths < 1000:
        raise ValueError("diagnostic needs at least 1e3 paths to be meaningful")
    k = incs.k_eff
    if k == 0:
        return np.zeros((0, 0))
    cov = np.einsum("pji,pjk->ik", incs.dH, incs.dH)
    return cov / (incs.paths.n_paths * grid.horizon_T)
