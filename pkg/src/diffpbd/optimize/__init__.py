"""Gradient-based outer loops on top of the differentiable simulator."""
from .adam import Adam, AdamState, DivergenceError, DivergenceGuard, OptimResult, minimize_adam
from .design import (CircleSpec, DesignConfig, DesignEval, DesignProblem, DesignResult,
                     design_pendulum)
from .identify import GravityEstimate, estimate_gravity_torques, identify_parameters
from .losses import SCHEMES, LossSpec, smoothness, step_tracking_loss, trajectory_loss
from .mpc import INIT_SCHEMES, MpcConfig, MpcResult, mpc_estimate, synthetic_trajectory
from .spring import (SpringData, SpringFit, SpringModel, fit_spring, fit_spring_curve,
                     fit_spring_sim, spring_length, spring_pose_targets, spring_torque,
                     synthetic_spring_data)

__all__ = [
    "Adam", "AdamState", "DivergenceError", "DivergenceGuard", "OptimResult", "minimize_adam",
    "CircleSpec", "DesignConfig", "DesignEval", "DesignProblem", "DesignResult", "design_pendulum",
    "GravityEstimate", "estimate_gravity_torques", "identify_parameters",
    "SCHEMES", "LossSpec", "smoothness", "step_tracking_loss", "trajectory_loss",
    "INIT_SCHEMES", "MpcConfig", "MpcResult", "mpc_estimate", "synthetic_trajectory",
    "SpringData", "SpringFit", "SpringModel", "fit_spring", "fit_spring_curve", "fit_spring_sim",
    "spring_length", "spring_pose_targets", "spring_torque", "synthetic_spring_data",
]
