"""Drivers and free terms of the backward equation.

A driver is a map f(t, s, y, z, eta, u, zeta) evaluated path-vectorized:
``y`` has shape (P,), ``z``/``eta`` shape (P, d) and ``u``/``zeta`` shape
(P, k) where k is the martingale-basis rank.  The (z, u) pair are the
integrands attached to the time pair (t, s); (eta, zeta) are the transposed
(s, t) values.  Structural properties (monotonicity, sub-additivity,
positive homogeneity, dependence on the transposed slots only) are declared
by the author of the driver and audited by randomized spot checks: they are
not decidable from a black-box evaluator.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .levy import PathBundle, TimeGrid
from .teugels import TeugelsIncrements

__all__ = [
    "GeneratorSpec",
    "FreeTermSpec",
    "ContractionError",
    "ContractionReport",
    "validate_contraction",
    "evaluate_f0_norm",
    "FlagAuditReport",
    "audit_flags",
    "zero_generator",
    "constant_generator",
    "linear_y_generator",
    "discount_generator",
    "risk_tail_generator",
    "shifted_generator",
    "free_constant",
    "free_deterministic",
    "free_terminal_brownian",
    "free_terminal_teugels",
]


class ContractionError(ValueError):
    """Raised when a driver's martingale-slot Lipschitz load reaches 1."""


LipFn = Callable[[float, float], float]


def _as_fn(value: float | LipFn) -> LipFn:
    if callable(value):
        return value
    return lambda t, s, _v=float(value): _v


@dataclass(frozen=True)
class GeneratorSpec:
    """Driver f with Lipschitz metadata and structural flags.

    ``lip_*`` entries are either constants or functions of (t, s); they bound
    the sensitivity of f in the matching argument slot.  ``monotone_in_u``
    declares f nondecreasing in the jump-integrand slots, ``simplified_form``
    that f reads only (t, s, y, eta, zeta), and ``linear_y_rate`` the rate
    r(s) when f decomposes as r(s)*y plus a y-free tail.  Evaluators must be
    pure so the solver may call them concurrently.
    """

    name: str
    evaluate: Callable[..., np.ndarray]
    lip_y: float | LipFn = 0.0
    lip_z: float | LipFn = 0.0
    lip_eta: float | LipFn = 0.0
    lip_u: float | LipFn = 0.0
    lip_zeta: float | LipFn = 0.0
    monotone_in_u: bool = False
    simplified_form: bool = False
    sub_additive: bool = False
    positively_homogeneous: bool = False
    linear_y_rate: Callable[[float], float] | None = None

    def __call__(self, t, s, y, z, eta, u, zeta):
        return self.evaluate(t, s, y, z, eta, u, zeta)


@dataclass(frozen=True)
class ContractionReport:
    accepted: bool
    martingale_load: float   # sup_t int_t^T (L_z^2 + L_u^2) ds, must be < 1
    drift_load: float        # sup_t int_t^T (L_y^2 + L_eta^2 + L_zeta^2) ds
    message: str


def validate_contraction(gen: GeneratorSpec, horizon_T: float,
                         n_quad: int = 128) -> ContractionReport:
    """Check the fixed-point condition on the driver's Lipschitz data.

    The martingale-slot load sup_t int_t^T (L_z^2 + L_u^2) ds must stay
    strictly below 1 for the iteration to contract; the drift-slot load only
    needs to be finite.  Constant coefficients are integrated in closed form,
    (t, s)-dependent ones on a trapezoid grid.
    """
    lips = (gen.lip_y, gen.lip_z, gen.lip_eta, gen.lip_u, gen.lip_zeta)
    if not any(callable(v) for v in lips):
        ly, lz, le, lu, lt = (float(v) for v in lips)
        mart = (lz**2 + lu**2) * horizon_T
        drift = (ly**2 + le**2 + lt**2) * horizon_T
    else:
        lz, lu = _as_fn(gen.lip_z), _as_fn(gen.lip_u)
        ly, le, lt = _as_fn(gen.lip_y), _as_fn(gen.lip_eta), _as_fn(gen.lip_zeta)
        ts = np.linspace(0.0, horizon_T, n_quad + 1)
        mart = 0.0
        drift = 0.0
        for i, t in enumerate(ts[:-1]):
            s = ts[i:]
            m_vals = np.array([lz(t, sv) ** 2 + lu(t, sv) ** 2 for sv in s])
            d_vals = np.array(
                [ly(t, sv) ** 2 + le(t, sv) ** 2 + lt(t, sv) ** 2 for sv in s]
            )
            mart = max(mart, float(np.trapezoid(m_vals, s)))
            drift = max(drift, float(np.trapezoid(d_vals, s)))
    accepted = mart < 1.0 and np.isfinite(drift)
    if accepted:
        msg = f"accepted: martingale-slot load {mart:.6g} < 1"
    else:
        msg = (f"rejected: sup_t int_t^T (L_z^2 + L_u^2) ds = {mart:.6g} >= 1; "
               "the fixed-point iteration has no contraction guarantee")
    return ContractionReport(accepted=accepted, martingale_load=mart,
                             drift_load=drift, message=msg)


def evaluate_f0_norm(gen: GeneratorSpec, grid: TimeGrid,
                     d: int = 1, k: int = 1) -> float:
    """Quadrature estimate of E int_0^T (int_t^T |f(t,s,0,...,0)| ds)^2 dt."""
    n, dt = grid.n_steps, grid.dt
    zeros1 = np.zeros(1)
    zd, zk = np.zeros((1, d)), np.zeros((1, k))
    f0 = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            f0[i, j] = abs(float(
                gen.evaluate(grid.nodes[i], grid.nodes[j], zeros1, zd, zd, zk, zk)[0]
            ))
    total = 0.0
    for i in range(n):
        inner = float(np.sum(f0[i, i:])) * dt
        total += inner * inner * dt
    return total


# ---------------------------------------------------------------------------
# builtin drivers

def zero_generator() -> GeneratorSpec:
    return GeneratorSpec(
        name="zero",
        evaluate=lambda t, s, y, z, eta, u, zeta: np.zeros_like(y),
        monotone_in_u=True,
        simplified_form=True,
        sub_additive=True,
        positively_homogeneous=True,
        linear_y_rate=None,
    )


def constant_generator(value: float) -> GeneratorSpec:
    return GeneratorSpec(
        name="constant",
        evaluate=lambda t, s, y, z, eta, u, zeta: np.full_like(y, float(value)),
        monotone_in_u=True,
        simplified_form=True,
        sub_additive=value >= 0.0,
    )


def linear_y_generator(theta: float) -> GeneratorSpec:
    """f = theta * y."""
    return GeneratorSpec(
        name="linear_y",
        evaluate=lambda t, s, y, z, eta, u, zeta: float(theta) * y,
        lip_y=abs(theta),
        monotone_in_u=True,
        simplified_form=True,
        sub_additive=True,
        positively_homogeneous=True,
        linear_y_rate=lambda s, _r=float(theta): _r,
    )


def discount_generator(rate: float | Callable[[float], float]) -> GeneratorSpec:
    """f = r(s) * y with a bounded deterministic rate."""
    r = rate if callable(rate) else (lambda s, _r=float(rate): _r)
    bound = abs(rate) if not callable(rate) else max(
        abs(r(v)) for v in np.linspace(0.0, 1.0, 257)
    )
    return GeneratorSpec(
        name="discount",
        evaluate=lambda t, s, y, z, eta, u, zeta: r(s) * y,
        lip_y=bound,
        monotone_in_u=True,
        simplified_form=True,
        sub_additive=True,
        positively_homogeneous=True,
        linear_y_rate=r,
    )


def risk_tail_generator(kappa_z: float, weights: tuple[float, ...]) -> GeneratorSpec:
    """f = kappa_z * |eta| + sum_k w_k * max(zeta_k, 0).

    Reads only the transposed integrand slots, is Lipschitz with constants
    (kappa_z, ||w||), nondecreasing in the jump slots (w_k >= 0), sub-additive
    and positively homogeneous - the structural package needed for a coherent
    risk measure.
    """
    w = np.asarray(weights, dtype=float)
    if kappa_z < 0 or np.any(w < 0):
        raise ValueError("kappa_z and weights must be nonnegative")

    def evaluate(t, s, y, z, eta, u, zeta, _k=float(kappa_z), _w=w):
        kk = min(_w.shape[0], zeta.shape[1])
        pos = np.maximum(zeta[:, :kk], 0.0) @ _w[:kk]
        return _k * np.linalg.norm(eta, axis=1) + pos

    return GeneratorSpec(
        name="risk_tail",
        evaluate=evaluate,
        lip_eta=float(kappa_z),
        lip_zeta=float(np.linalg.norm(w)),
        monotone_in_u=True,
        simplified_form=True,
        sub_additive=True,
        positively_homogeneous=True,
    )


def shifted_generator(base: GeneratorSpec, delta: float) -> GeneratorSpec:
    """base + delta; dominates base pointwise when delta >= 0.

    Keeps monotonicity and (for delta >= 0) sub-additivity, loses positive
    homogeneity - exactly the package the ordering theorem needs of the
    dominating driver.
    """
    def evaluate(t, s, y, z, eta, u, zeta):
        return base.evaluate(t, s, y, z, eta, u, zeta) + float(delta)

    return replace(
        base,
        name=f"{base.name}+{delta:g}",
        evaluate=evaluate,
        sub_additive=base.sub_additive and delta >= 0.0,
        positively_homogeneous=False,
        linear_y_rate=base.linear_y_rate,
    )


# ---------------------------------------------------------------------------
# free terms

@dataclass(frozen=True)
class FreeTermSpec:
    """Square-integrable free term psi(t), evaluable path-by-path.

    ``evaluate(i, paths, incs)`` returns the (P,) values of psi at node t_i;
    any functional of the full simulated path is allowed.  ``adapted`` marks
    free terms whose node-i value only reads the path up to t_i (required on
    the forward side), ``deterministic`` those independent of the path.
    """

    name: str
    evaluate: Callable[[int, PathBundle, TeugelsIncrements | None], np.ndarray]
    adapted: bool = False
    deterministic: bool = False

    def shifted(self, c: float) -> "FreeTermSpec":
        return FreeTermSpec(
            name=f"{self.name}+{c:g}",
            evaluate=lambda i, paths, incs: self.evaluate(i, paths, incs) + float(c),
            adapted=self.adapted,
            deterministic=self.deterministic,
        )

    def scaled(self, lam: float) -> "FreeTermSpec":
        return FreeTermSpec(
            name=f"{lam:g}*{self.name}",
            evaluate=lambda i, paths, incs: float(lam) * self.evaluate(i, paths, incs),
            adapted=self.adapted,
            deterministic=self.deterministic,
        )

    def plus(self, other: "FreeTermSpec") -> "FreeTermSpec":
        return FreeTermSpec(
            name=f"{self.name}+{other.name}",
            evaluate=lambda i, paths, incs: (
                self.evaluate(i, paths, incs) + other.evaluate(i, paths, incs)
            ),
            adapted=self.adapted and other.adapted,
            deterministic=self.deterministic and other.deterministic,
        )


def free_constant(value: float) -> FreeTermSpec:
    return FreeTermSpec(
        name="constant",
        evaluate=lambda i, paths, incs: np.full(paths.n_paths, float(value)),
        adapted=True,
        deterministic=True,
    )


def free_deterministic(g: Callable[[float], float], name: str = "deterministic") -> FreeTermSpec:
    return FreeTermSpec(
        name=name,
        evaluate=lambda i, paths, incs: np.full(
            paths.n_paths, float(g(paths.grid.nodes[i]))
        ),
        adapted=True,
        deterministic=True,
    )


def free_terminal_brownian(component: int = 0, scale: float = 1.0) -> FreeTermSpec:
    """psi(t) = scale * W_T[component] for every t (terminal-value stream)."""
    return FreeTermSpec(
        name="terminal_brownian",
        evaluate=lambda i, paths, incs: (
            float(scale) * paths.brownian_nodes[:, -1, component]
        ),
        adapted=False,
    )


def free_terminal_teugels(index: int = 1, scale: float = 1.0) -> FreeTermSpec:
    """psi(t) = scale * H^(index)_T for every t."""
    def evaluate(i, paths, incs):
        if incs is None or incs.k_eff < index:
            raise ValueError(f"free term needs martingale index {index}, "
                             f"basis rank is {0 if incs is None else incs.k_eff}")
        return float(scale) * incs.teugels_nodes[:, -1, index - 1]

    return FreeTermSpec(name="terminal_teugels", evaluate=evaluate, adapted=False)


# ---------------------------------------------------------------------------
# randomized structural audits

@dataclass(frozen=True)
class FlagAuditReport:
    """Outcome of the randomized spot checks, one entry per declared flag."""

    passed: dict[str, bool]
    worst: dict[str, float]

    @property
    def all_passed(self) -> bool:
        return all(self.passed.values())


def audit_flags(gen: GeneratorSpec, d: int, k: int,
                trials: int = 256, seed: int = 7, scale: float = 2.0,
                tol: float = 1e-9) -> FlagAuditReport:
    """Spot-check the declared structural flags on random argument batches."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    t, s = 0.25, 0.75

    def draw():
        return (scale * rng.standard_normal(trials),
                scale * rng.standard_normal((trials, d)),
                scale * rng.standard_normal((trials, d)),
                scale * rng.standard_normal((trials, k)),
                scale * rng.standard_normal((trials, k)))

    passed: dict[str, bool] = {}
    worst: dict[str, float] = {}

    if gen.simplified_form:
        y, z, eta, u, zeta = draw()
        z2 = scale * rng.standard_normal((trials, d))
        u2 = scale * rng.standard_normal((trials, k))
        gap = np.max(np.abs(gen(t, s, y, z, eta, u, zeta) - gen(t, s, y, z2, eta, u2, zeta)))
        passed["simplified_form"] = bool(gap <= tol)
        worst["simplified_form"] = float(gap)

    if gen.monotone_in_u:
        y, z, eta, u, zeta = draw()
        du = np.abs(rng.standard_normal((trials, k)))
        dz = np.abs(rng.standard_normal((trials, k)))
        lo = gen(t, s, y, z, eta, u, zeta)
        hi = gen(t, s, y, z, eta, u + du, zeta + dz)
        gap = np.max(lo - hi)
        passed["monotone_in_u"] = bool(gap <= tol)
        worst["monotone_in_u"] = float(gap)

    if gen.sub_additive:
        a = draw()
        b = draw()
        both = gen(t, s, *(x + y for x, y in zip(a, b)))
        gap = np.max(both - gen(t, s, *a) - gen(t, s, *b))
        passed["sub_additive"] = bool(gap <= tol)
        worst["sub_additive"] = float(gap)

    if gen.positively_homogeneous:
        y, z, eta, u, zeta = draw()
        lam = float(np.exp(rng.standard_normal()))
        gap = np.max(np.abs(
            gen(t, s, lam * y, lam * z, lam * eta, lam * u, lam * zeta)
            - lam * gen(t, s, y, z, eta, u, zeta)
        ))
        passed["positively_homogeneous"] = bool(gap <= tol * max(1.0, lam))
        worst["positively_homogeneous"] = float(gap)

    return FlagAuditReport(passed=passed, worst=worst)
