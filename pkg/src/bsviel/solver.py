"""Backward solver: discrete adapted M-solutions by fixed-point iteration.

One sweep of the iteration evaluates, for every node t_i, the target

    xi_i = psi(t_i) + dt * sum_{j > i} f(t_i, t_j, Y[j], Z[i,j], Z[j,i],
                                         U[i,j,:], U[j,i,:])

from the previous iterate (the driver integral over (t_i, T], left-endpoint
cells strictly above the diagonal; the left limit Y(s-) is the value at the
node opening the cell of s).  The new iterate is then read off through
least-squares projections on polynomial state features:

    Y[i]    <- fit of xi_i on the state at t_i,
    Z[i,j]  <- fit of xi_i * dW_j on the state at t_j, divided by dt,
    U[i,j,k]<- fit of xi_i * dH^(k)_j on the state at t_j, divided by dt.

The identification of Z and U uses the independence of W and the jump
martingales together with E[dH^(k) dH^(l)] = delta_kl * dt.  For j < i these
projections realize the representation of Y(t_i) - E Y(t_i) on [0, t_i]
(the M-condition); for j >= i they are the integrands of the equation
itself.  Summing the driver strictly above the diagonal makes the discrete
bilinear pairing with the explicit forward scheme an exact identity, which
the duality verifier relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .generators import ContractionError, FreeTermSpec, GeneratorSpec, validate_contraction
from .levy import PathBundle, TimeGrid
from .teugels import TeugelsIncrements

__all__ = [
    "SolverConfig",
    "SolverDiagnostics",
    "MSolutionGrid",
    "MResidualReport",
    "PicardConvergenceError",
    "NodeRegressions",
    "solve",
    "m_condition_residual",
    "solution_norm",
]


class PicardConvergenceError(RuntimeError):
    """Raised when the iteration does not meet the tolerance in time."""

    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class SolverConfig:
    max_picard_iters: int = 25
    picard_tol: float = 1e-4
    regression_degree: int = 2
    ridge_epsilon: float = 1e-8
    teugels_order: int = 3

    def __post_init__(self):
        if self.picard_tol <= 0:
            raise ValueError("picard_tol must be > 0")
        if self.regression_degree < 0:
            raise ValueError("regression_degree must be >= 0")
        if self.max_picard_iters < 1:
            raise ValueError("max_picard_iters must be >= 1")


@dataclass
class SolverDiagnostics:
    iterations: int = 0
    converged: bool = False
    change_history: list[float] = field(default_factory=list)
    regression_warnings: list[str] = field(default_factory=list)


class NodeRegressions:
    """Per-node least-squares projections on polynomial state features.

    The state at node j collects the Brownian components, the Levy value and
    the jump count (the latter two only when the spec makes them random).
    Raw states are standardized with cross-path statistics, expanded into all
    monomials of total degree <= regression_degree, and fitted with a small
    ridge on every coefficient except the intercept - so constants are
    reproduced exactly and a rank-deficient design degrades gracefully
    (recorded in ``warnings``).
    """

    def __init__(self, paths: PathBundle, degree: int, ridge_epsilon: float):
        self.degree = degree
        self.warnings: list[str] = []
        n_nodes = paths.grid.n_steps + 1
        spec = paths.spec

        raw_cols = [paths.brownian_nodes[:, :, c] for c in range(spec.brownian_dim_d)]
        if spec.gaussian_sigma > 0 or spec.has_jumps:
            raw_cols.append(paths.levy_nodes)
        if spec.has_jumps:
            raw_cols.append(paths.count_nodes)

        self._designs: list[np.ndarray] = []
        self._factors: list[np.ndarray] = []
        p_paths = paths.n_paths
        for j in range(n_nodes):
            cols = []
            for raw in raw_cols:
                x = raw[:, j]
                mu, sd = float(np.mean(x)), float(np.std(x))
                if sd > 1e-12 * (1.0 + abs(mu)):
                    cols.append((x - mu) / sd)
            design = self._expand(cols, p_paths)
            gram = design.T @ design
            q = gram.shape[0]
            if q > 1:
                eigs = np.linalg.eigvalsh(gram)
                if eigs[0] < 1e-10 * max(eigs[-1], 1.0):
                    self.warnings.append(
                        f"node {j}: rank-deficient regression design, ridge fallback"
                    )
            penalized = gram.copy()
            if q > 1:
                penalized[np.arange(1, q), np.arange(1, q)] += ridge_epsilon * p_paths
            self._designs.append(design)
            self._factors.append(np.linalg.cholesky(penalized))

    def _expand(self, cols: list[np.ndarray], p_paths: int) -> np.ndarray:
        feats = [np.ones(p_paths)]
        for deg in range(1, self.degree + 1):
            for combo in combinations_with_replacement(range(len(cols)), deg):
                f = cols[combo[0]].copy()
                for idx in combo[1:]:
                    f *= cols[idx]
                feats.append(f)
        return np.column_stack(feats)

    @property
    def n_nodes(self) -> int:
        return len(self._designs)

    def fit(self, node: int, targets: np.ndarray) -> np.ndarray:
        """Fitted values (P, m) of each target column conditioned on node's state."""
        a = self._designs[node]
        lo = self._factors[node]
        rhs = a.T @ targets
        coef = np.linalg.solve(
            lo.T, np.linalg.solve(lo, rhs)
        )
        return a @ coef


@dataclass
class MSolutionGrid:
    """Discrete (Y, Z, U) triple.

    ``Y[p, i]`` lives on the nodes; ``Z[p, i, j, :]`` and ``U[p, i, j, :]``
    hold the integrands of row t_i on the step (t_j, t_{j+1}], for every j,
    covering both the equation region (j >= i) and the representation region
    (j < i).  The terminal row Y[:, n] equals the free term at T exactly.
    """

    Y: np.ndarray                  # (P, n+1)
    Z: np.ndarray                  # (P, n+1, n, d)
    U: np.ndarray                  # (P, n+1, n, k_eff)
    EY: np.ndarray                 # (n+1,)
    grid: "TimeGrid"
    config: SolverConfig
    diagnostics: SolverDiagnostics
    free_term_name: str = ""
    generator_name: str = ""

    @property
    def n_steps(self) -> int:
        return self.Z.shape[2]

    @property
    def n_paths(self) -> int:
        return self.Y.shape[0]


def _norm_sq(Y, Z, U, dt) -> float:
    """Squared discrete norm: int E|Y|^2 dt + int int E(|Z|^2 + ||U||^2) ds dt."""
    y_part = dt * float(np.mean(Y[:, :-1] ** 2, axis=0).sum())
    z_part = dt * dt * float(np.mean(Z[:, :-1] ** 2, axis=0).sum())
    u_part = dt * dt * float(np.mean(U[:, :-1] ** 2, axis=0).sum())
    return y_part + z_part + u_part


def solve(
    free_term: FreeTermSpec,
    gen: GeneratorSpec,
    paths: PathBundle,
    incs: TeugelsIncrements,
    cfg: SolverConfig | None = None,
    override_contraction: bool = False,
) -> MSolutionGrid:
    """Compute the discrete adapted M-solution for (free_term, gen).

    Raises ContractionError when the driver's Lipschitz data violates the
    fixed-point condition (unless overridden) and PicardConvergenceError when
    the iteration does not reach ``picard_tol`` within ``max_picard_iters``.
    """
    cfg = cfg or SolverConfig()
    if incs.paths is not paths and (
        incs.paths.seed != paths.seed
        or incs.paths.n_paths != paths.n_paths
        or incs.paths.grid != paths.grid
    ):
        raise ValueError("paths and increments come from different simulations")

    report = validate_contraction(gen, paths.grid.horizon_T)
    if not report.accepted and not override_contraction:
        raise ContractionError(report.message)

    n = paths.grid.n_steps
    dt = paths.grid.dt
    nodes = paths.grid.nodes
    p_paths = paths.n_paths
    d = paths.spec.brownian_dim_d
    k = incs.k_eff

    psi = np.column_stack([free_term.evaluate(i, paths, incs) for i in range(n + 1)])
    regs = NodeRegressions(paths, cfg.regression_degree, cfg.ridge_epsilon)

    Y = np.zeros((p_paths, n + 1))
    Z = np.zeros((p_paths, n + 1, n, d))
    U = np.zeros((p_paths, n + 1, n, k))

    diag = SolverDiagnostics(regression_warnings=list(regs.warnings))
    history: list[float] = []

    for iteration in range(1, cfg.max_picard_iters + 1):
        xi = psi.copy()
        for i in range(n - 1):
            acc = np.zeros(p_paths)
            t_i = nodes[i]
            for j in range(i + 1, n):
                acc += gen.evaluate(
                    t_i, nodes[j],
                    Y[:, j],
                    Z[:, i, j, :], Z[:, j, i, :],
                    U[:, i, j, :], U[:, j, i, :],
                )
            xi[:, i] += dt * acc

        Y_new = np.empty_like(Y)
        for i in range(n):
            Y_new[:, i] = regs.fit(i, xi[:, i][:, None])[:, 0]
        Y_new[:, n] = psi[:, n]

        Z_new = np.empty_like(Z)
        U_new = np.empty_like(U)
        for j in range(n):
            for c in range(d):
                Z_new[:, :, j, c] = regs.fit(j, xi * paths.dW[:, j, c][:, None]) / dt
            for c in range(k):
                U_new[:, :, j, c] = regs.fit(j, xi * incs.dH[:, j, c][:, None]) / dt

        diff = _norm_sq(Y_new - Y, Z_new - Z, U_new - U, dt)
        scale = _norm_sq(Y_new, Z_new, U_new, dt)
        change = np.sqrt(diff / scale) if scale > 0 else np.sqrt(diff)
        history.append(float(change))
        Y, Z, U = Y_new, Z_new, U_new

        if change <= cfg.picard_tol:
            diag.converged = True
            diag.iterations = iteration
            break
    else:
        diag.iterations = cfg.max_picard_iters

    diag.change_history = history
    if not diag.converged:
        raise PicardConvergenceError(
            f"no convergence after {cfg.max_picard_iters} sweeps "
            f"(last relative change {history[-1]:.3g}); history attached",
            history,
        )

    return MSolutionGrid(
        Y=Y,
        Z=Z,
        U=U,
        EY=Y.mean(axis=0),
        grid=paths.grid,
        config=cfg,
        diagnostics=diag,
        free_term_name=free_term.name,
        generator_name=gen.name,
    )


@dataclass(frozen=True)
class MResidualReport:
    """Per-node defect of the discrete representation identity."""

    absolute: np.ndarray   # (n+1,) L2 norms of Y_i - EY_i - sum Z dW - sum U dH
    relative: np.ndarray   # (n+1,) absolute / sd(Y_i); absolute where Y_i degenerate

    @property
    def max_relative(self) -> float:
        return float(np.max(self.relative)) if self.relative.size else 0.0


def m_condition_residual(
    sol: MSolutionGrid, paths: PathBundle, incs: TeugelsIncrements
) -> MResidualReport:
    """L2-per-node residual of Y_i - EY_i = sum_{j<i} Z.dW + sum_{j<i} U.dH."""
    n = sol.n_steps
    absolute = np.zeros(n + 1)
    relative = np.zeros(n + 1)
    for i in range(n + 1):
        resid = sol.Y[:, i] - sol.EY[i]
        if i > 0:
            resid = resid - np.einsum(
                "pjc,pjc->p", sol.Z[:, i, :i, :], paths.dW[:, :i, :]
            )
            if incs.k_eff:
                resid = resid - np.einsum(
                    "pjc,pjc->p", sol.U[:, i, :i, :], incs.dH[:, :i, :]
                )
        absolute[i] = np.sqrt(float(np.mean(resid**2)))
        sd = float(np.std(sol.Y[:, i]))
        if sd > 1e-12 * (1.0 + abs(float(sol.EY[i]))):
            relative[i] = absolute[i] / sd
        else:
            relative[i] = absolute[i]
    return MResidualReport(absolute=absolute, relative=relative)


def solution_norm(sol: MSolutionGrid, minus: MSolutionGrid | None = None) -> float:
    """Discrete solution norm, optionally of the difference of two solutions.

    Square root of int_0^T E|Y|^2 dt + int_0^T int_0^T E(|Z|^2 + ||U||^2) ds dt
    with left-endpoint time sums (the terminal row is excluded).
    """
    if minus is None:
        y, z, u = sol.Y, sol.Z, sol.U
    else:
        y, z, u = sol.Y - minus.Y, sol.Z - minus.Z, sol.U - minus.U
    return float(np.sqrt(_norm_sq(y, z, u, sol.grid.dt)))
