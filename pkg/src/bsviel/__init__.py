"""Monte Carlo toolkit for backward stochastic Volterra integral equations
driven by a Brownian motion and the Teugels martingales of an independent
Levy process, with statistical verifiers for the duality principle, the
comparison theorem, the stability estimate and the induced dynamic coherent
risk measures.
"""

from .levy import (
    CompoundPoisson,
    DiscreteJumps,
    LevySpec,
    PathBundle,
    TimeGrid,
    UniformJumps,
    power_moments,
    simulate_paths,
)
from .teugels import (
    MomentTable,
    TeugelsBasis,
    TeugelsIncrements,
    assemble_H,
    compute_moments,
    orthonormality_diagnostic,
    orthonormalize,
)
from .generators import (
    ContractionError,
    ContractionReport,
    FlagAuditReport,
    FreeTermSpec,
    GeneratorSpec,
    audit_flags,
    constant_generator,
    discount_generator,
    evaluate_f0_norm,
    free_constant,
    free_deterministic,
    free_terminal_brownian,
    free_terminal_teugels,
    linear_y_generator,
    risk_tail_generator,
    shifted_generator,
    validate_contraction,
    zero_generator,
)
from .solver import (
    MResidualReport,
    MSolutionGrid,
    NodeRegressions,
    PicardConvergenceError,
    SolverConfig,
    m_condition_residual,
    solution_norm,
    solve,
)
from .forward import (
    ForwardGrid,
    JumpConditionError,
    LinearCoefficients,
    PositivityReport,
    dd_exponential,
    euler_solve,
    positivity_check,
)

__version__ = "0.1.0"
