"""Local dynamic games for scalable multi-agent motion planning."""

from .dynamics import (DiscretizationSpec, DoubleIntegrator, Quadrotor,
                       QuadrotorParams, continuous_derivative, make_model,
                       rollout, step)
from .errors import (AttitudeSingularityError, DegenerateGeometryError,
                     SolverNumericalError)
from .game import (CostSpec, GameProblem, JointTrajectory, collision_proxy,
                   inequality_residuals, stage_cost, total_cost)
from .solver import (EquilibriumSolution, Multipliers, SolverConfig,
                     kkt_residual, solve, unilateral_deviation_gap)

__all__ = [
    "AttitudeSingularityError",
    "CostSpec",
    "DegenerateGeometryError",
    "DiscretizationSpec",
    "DoubleIntegrator",
    "EquilibriumSolution",
    "GameProblem",
    "JointTrajectory",
    "Multipliers",
    "Quadrotor",
    "QuadrotorParams",
    "SolverConfig",
    "SolverNumericalError",
    "collision_proxy",
    "continuous_derivative",
    "inequality_residuals",
    "kkt_residual",
    "make_model",
    "rollout",
    "solve",
    "stage_cost",
    "step",
    "total_cost",
    "unilateral_deviation_gap",
]
