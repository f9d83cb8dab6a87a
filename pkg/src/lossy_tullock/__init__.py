"""Lossy Tullock contests: equilibrium, centralized and receding-horizon solvers."""
from .errors import (
    DomainError,
    GameError,
    InfeasibleError,
    InvalidSpecError,
    NumericalError,
    PreconditionError,
    SamplingError,
    SpecificationError,
    UnboundedError,
)
from .game import (
    DynamicPriceCost,
    GameSpec,
    JointStrategy,
    LinearCost,
    PlayerConstraints,
    StageEvaluation,
    evaluate_stage,
    profit_gradient,
    pseudo_gradient,
    total_profit,
    total_profits,
)
from .projection import ProjectionProblem, project, project_simplex

__version__ = "0.1.0"
