"""Differentiable position-based dynamics for articulated rigid chains."""
from .autodiff import Tape, Var, grad, where
from .chain import ArticulatedChain, HingeJoint, RigidLink, SimConfig, pendulum_chain, place_chain
from .solver import predict, solve_constraints, step, update_velocities

__all__ = [
    "Tape", "Var", "grad", "where",
    "ArticulatedChain", "HingeJoint", "RigidLink", "SimConfig", "pendulum_chain", "place_chain",
    "predict", "solve_constraints", "step", "update_velocities",
]
__version__ = "0.1.0"
