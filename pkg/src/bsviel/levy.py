"""Driving noise: a d-dimensional Brownian motion plus an independent scalar
Levy process with finite jump activity.

The simulator produces per-step increments of W, of the Levy process L, of
its power-jump processes and of their compensated (martingale) versions on a
uniform time grid.  All randomness is drawn from a single counter-based
Philox stream in a fixed layout, so a bundle is a pure function of the seed
regardless of how downstream consumers are parallelised.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "DiscreteJumps",
    "UniformJumps",
    "CompoundPoisson",
    "LevySpec",
    "TimeGrid",
    "PathBundle",
    "power_moments",
    "simulate_paths",
]


class JumpSizeLaw:
    """Base for jump-size distributions with closed-form polynomial moments."""

    def moment(self, order: int) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class DiscreteJumps(JumpSizeLaw):
    """Finitely many jump sizes ``atoms = ((x_1, p_1), ..., (x_m, p_m))``."""

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("DiscreteJumps needs at least one atom")
        probs = np.array([p for _, p in self.atoms], dtype=float)
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("atom probabilities must be nonnegative and sum to 1")
        if np.any(np.array([x for x, _ in self.atoms]) == 0.0):
            raise ValueError("jump size 0 is not a jump; remove the atom")

    def moment(self, order):
        return float(sum(p * x**order for x, p in self.atoms))

    def sample(self, rng, size):
        values = np.array([x for x, _ in self.atoms], dtype=float)
        probs = np.array([p for _, p in self.atoms], dtype=float)
        idx = rng.choice(len(values), size=size, p=probs / probs.sum())
        return values[idx]


@dataclass(frozen=True)
class UniformJumps(JumpSizeLaw):
    """Jump sizes uniform on the bounded interval [low, high]."""

    low: float
    high: float

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError("need low < high")
        if not (np.isfinite(self.low) and np.isfinite(self.high)):
            raise ValueError("support must be bounded")

    def moment(self, order):
        # closed form of the order-th raw moment of U(low, high)
        k = order + 1
        return float((self.high**k - self.low**k) / (k * (self.high - self.low)))

    def sample(self, rng, size):
        return self.low + (self.high - self.low) * rng.random(size)


@dataclass(frozen=True)
class CompoundPoisson:
    """Finite-activity jump part: Poisson(rate) arrivals with iid sizes."""

    rate: float
    sizes: JumpSizeLaw

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("compound-Poisson rate must be > 0")
        if not isinstance(self.sizes, JumpSizeLaw):
            raise ValueError(
                "jump-size law must expose closed-form polynomial moments "
                "(DiscreteJumps or UniformJumps)"
            )

    def levy_moment(self, order: int) -> float:
        """Moment of the jump intensity measure, rate * E[J^order]."""
        return self.rate * self.sizes.moment(order)


@dataclass(frozen=True)
class LevySpec:
    """Full description of the driving pair (W, L).

    W is a standard Brownian motion in R^d.  L is an independent scalar Levy
    process with drift ``drift_b``, Gaussian coefficient ``gaussian_sigma``
    and an optional compound-Poisson jump part.  Restricting jumps to finite
    activity with bounded support keeps every polynomial (and exponential)
    moment of the jump measure finite in closed form, which the martingale
    basis construction requires.
    """

    horizon_T: float
    brownian_dim_d: int = 1
    drift_b: float = 0.0
    gaussian_sigma: float = 0.0
    jump_law: CompoundPoisson | None = None

    def __post_init__(self):
        if self.horizon_T <= 0:
            raise ValueError("horizon_T must be > 0")
        if self.brownian_dim_d < 1:
            raise ValueError("brownian_dim_d must be >= 1")
        if self.gaussian_sigma < 0:
            raise ValueError("gaussian_sigma must be >= 0")
        if self.jump_law is not None and not isinstance(self.jump_law, CompoundPoisson):
            raise ValueError("unsupported jump law: only finite-activity "
                             "compound-Poisson jumps are simulable")

    @property
    def has_jumps(self) -> bool:
        return self.jump_law is not None

    def jump_moment(self, order: int) -> float:
        """rate * E[J^order], the order-th moment of the jump measure (0 if no jumps)."""
        return self.jump_law.levy_moment(order) if self.jump_law else 0.0


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition 0 = t_0 < t_1 < ... < t_n = T."""

    n_steps: int
    horizon_T: float

    def __post_init__(self):
        if self.n_steps < 2:
            raise ValueError("n_steps must be >= 2")
        if self.horizon_T <= 0:
            raise ValueError("horizon_T must be > 0")

    @property
    def dt(self) -> float:
        return self.horizon_T / self.n_steps

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon_T, self.n_steps + 1)


def power_moments(spec: LevySpec, max_i: int) -> np.ndarray:
    """Per-unit-time compensator rates E[L_1^(i)] for i = 1..max_i.

    The first power process is L itself, so its rate is the full mean
    drift_b + rate*E[J].  For i >= 2 the power processes aggregate the i-th
    powers of the jumps; the i = 2 rate additionally carries sigma^2 because
    the second-order flow includes the quadratic variation of the Gaussian
    part (see PathBundle.power_jump_increments for the matching bookkeeping).
    """
    if max_i < 1:
        raise ValueError("max_i must be >= 1")
    out = np.empty(max_i)
    out[0] = spec.drift_b + spec.jump_moment(1)
    for i in range(2, max_i + 1):
        out[i - 1] = spec.jump_moment(i)
    if max_i >= 2:
        out[1] += spec.gaussian_sigma**2
    return out


def _centering_rates(spec: LevySpec, max_i: int) -> np.ndarray:
    """Compensator rates applied to the simulated per-step jump aggregates.

    Identical to power_moments except that the sigma^2 term at i = 2 is
    absent: the simulated aggregates below exclude the deterministic
    sigma^2*dt quadratic-variation flow, so the two conventions cancel and
    the centered increments are exact martingale differences either way.
    """
    rates = power_moments(spec, max_i).copy()
    if max_i >= 2:
        rates[1] -= spec.gaussian_sigma**2
    return rates


@dataclass
class PathBundle:
    """Per-path, per-step increments of the driving noise.

    Arrays are path-major: ``dW[p, j]`` is the Brownian increment over
    (t_j, t_{j+1}].  ``dY[p, j, i-1]`` is the compensated increment of the
    i-th power-jump process.  Jump bookkeeping is kept flat
    (``jump_sizes[k]`` fell in path ``jump_path[k]``, step ``jump_step[k]``,
    at time ``jump_times[k]``).  Treat a bundle as immutable once built; the
    cached node-level cumulatives rely on it.
    """

    spec: LevySpec
    grid: TimeGrid
    n_paths: int
    seed: int
    max_power: int
    dW: np.ndarray                      # (P, n, d)
    dG: np.ndarray | None               # (P, n) Gaussian part of dL, None if sigma == 0
    dL: np.ndarray                      # (P, n)
    dY: np.ndarray                      # (P, n, max_power)
    jump_counts: np.ndarray | None      # (P, n) int64, None if no jump law
    jump_sizes: np.ndarray = field(default_factory=lambda: np.empty(0))
    jump_path: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    jump_step: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    jump_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    bit_generator: str = "Philox"

    @property
    def has_jumps(self) -> bool:
        return self.jump_counts is not None

    @cached_property
    def power_jump_increments(self) -> np.ndarray:
        """Raw per-step increments dL^(i), i = 1..max_power, shape (P, n, max_power).

        Row i = 1 is dL.  Rows i >= 2 hold the per-step i-th power jump sums;
        the i = 2 row carries the additional deterministic sigma^2*dt flow so
        that dL^(2) - dt*E[L_1^(2)] equals the centered increment dY^(2).
        """
        return self.dY + self.grid.dt * power_moments(self.spec, self.max_power)

    @cached_property
    def brownian_nodes(self) -> np.ndarray:
        """W at the grid nodes, shape (P, n+1, d), W_0 = 0."""
        out = np.zeros((self.n_paths, self.grid.n_steps + 1, self.spec.brownian_dim_d))
        np.cumsum(self.dW, axis=1, out=out[:, 1:, :])
        return out

    @cached_property
    def levy_nodes(self) -> np.ndarray:
        """L at the grid nodes, shape (P, n+1), L_0 = 0."""
        out = np.zeros((self.n_paths, self.grid.n_steps + 1))
        np.cumsum(self.dL, axis=1, out=out[:, 1:])
        return out

    @cached_property
    def gaussian_nodes(self) -> np.ndarray:
        """Gaussian part of L at the nodes (sigma * B_t), shape (P, n+1)."""
        out = np.zeros((self.n_paths, self.grid.n_steps + 1))
        if self.dG is not None:
            np.cumsum(self.dG, axis=1, out=out[:, 1:])
        return out

    @cached_property
    def count_nodes(self) -> np.ndarray:
        """Cumulative jump counts N at the nodes, shape (P, n+1)."""
        out = np.zeros((self.n_paths, self.grid.n_steps + 1))
        if self.jump_counts is not None:
            np.cumsum(self.jump_counts, axis=1, out=out[:, 1:])
        return out


def simulate_paths(
    spec: LevySpec,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    max_power: int = 3,
) -> PathBundle:
    """Simulate a PathBundle of joint (W, L) increments.

    Increments are independent across steps and paths; Brownian increments
    are N(0, dt*I_d); jump counts per step are Poisson(rate*dt) with sizes
    iid from the jump law, placed at uniform times inside their step.  The
    draw order is fixed (W normals, then L's Gaussian normals, then jump
    counts, sizes and time fractions), so the output is bit-reproducible for
    a fixed seed independent of any execution parallelism.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if max_power < 1:
        raise ValueError("max_power must be >= 1")
    if abs(grid.horizon_T - spec.horizon_T) > 1e-12 * max(1.0, spec.horizon_T):
        raise ValueError("grid horizon differs from spec horizon")

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    n, dt, d = grid.n_steps, grid.dt, spec.brownian_dim_d
    sqdt = np.sqrt(dt)

    dW = sqdt * rng.standard_normal((n_paths, n, d))

    dG = None
    if spec.gaussian_sigma > 0:
        dG = spec.gaussian_sigma * sqdt * rng.standard_normal((n_paths, n))

    dY = np.zeros((n_paths, n, max_power))
    dL = np.full((n_paths, n), spec.drift_b * dt)
    if dG is not None:
        dL += dG

    jump_counts = None
    sizes = np.empty(0)
    jpath = np.empty(0, dtype=np.int64)
    jstep = np.empty(0, dtype=np.int64)
    jtimes = np.empty(0)
    if spec.has_jumps:
        law = spec.jump_law
        jump_counts = rng.poisson(law.rate * dt, size=(n_paths, n))
        total = int(jump_counts.sum())
        sizes = law.sizes.sample(rng, total)
        fracs = rng.random(total)
        flat = np.repeat(np.arange(n_paths * n, dtype=np.int64), jump_counts.ravel())
        jpath, jstep = np.divmod(flat, n)
        jtimes = grid.nodes[jstep] + dt * fracs
        for i in range(1, max_power + 1):
            cell = np.bincount(flat, weights=sizes**i, minlength=n_paths * n)
            dY[:, :, i - 1] = cell.reshape(n_paths, n)
        dL += dY[:, :, 0]

    dY -= dt * _centering_rates(spec, max_power)
    dY[:, :, 0] = dL - dt * power_moments(spec, 1)[0]

    return PathBundle(
        spec=spec,
        grid=grid,
        n_paths=n_paths,
        seed=int(seed),
        max_power=max_power,
        dW=dW,
        dG=dG,
        dL=dL,
        dY=dY,
        jump_counts=jump_counts,
        jump_sizes=sizes,
        jump_path=jpath,
        jump_step=jstep,
        jump_times=jtimes,
    )
