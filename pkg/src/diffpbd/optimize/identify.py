"""Parameter identification and gravity-compensation estimation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..autodiff import trace
from ..chain import ArticulatedChain, SimConfig, place_chain
from ..kinematics import gravity_torque, joint_angles
from ..solver import step
from .adam import DivergenceGuard, OptimResult, minimize_adam
from .losses import LossSpec


def identify_parameters(objective: Callable, x0, n_observations: int, lr=1e-2, iterations=200,
                        bounds=None, guard: DivergenceGuard | None = None, decay=1.0,
                        callback=None) -> OptimResult:
    """Adam descent on ``objective(alpha) -> (loss, grad)``.

    Refuses problems with fewer scalar observations than parameters. Aborts
    with :class:`DivergenceError` when the loss stays above 1e3 times its
    initial value for 50 consecutive iterations.
    """
    x0 = np.atleast_1d(np.asarray(x0, float))
    if n_observations < x0.size:
        raise ValueError(f"{n_observations} observations cannot identify {x0.size} parameters")
    return minimize_adam(objective, x0, lr=lr, iterations=iterations, bounds=bounds,
                         guard=guard or DivergenceGuard(), decay=decay, callback=callback)


@dataclass
class GravityEstimate:
    angles: np.ndarray
    estimated: np.ndarray
    analytic: np.ndarray
    losses: list

    @property
    def abs_error(self) -> np.ndarray:
        return np.abs(self.estimated - self.analytic)


def estimate_gravity_torques(chain: ArticulatedChain, config: SimConfig, poses,
                             spec: LossSpec | None = None, iterations=5,
                             tol=1e-12) -> GravityEstimate:
    """Per static pose, find the joint torques that keep the chain still.

    The chain is placed at each pose at rest and stepped once. The residual
    is the weighted angle and world angular-velocity mismatch to the same
    pose at rest; it is close to linear in the torques but badly scaled for
    chains mixing heavy and light links, so it is minimized by Gauss-Newton
    on the taped residual Jacobian rather than a first-order method. The
    analytic static torques are returned alongside for comparison.
    """
    spec = spec or LossSpec(1.0, 0.0, 0.0)
    poses = np.atleast_2d(np.asarray(poses, float))
    J = len(chain.joints)
    if poses.shape[1] != J:
        raise ValueError(f"poses have {poses.shape[1]} joints, chain has {J}")
    n_s = chain.n_state
    w1, w2 = np.sqrt(spec.lambda1), np.sqrt(spec.lambda2)

    def residual(xs):
        s, u, pose = xs[:n_s], xs[n_s:n_s + J], xs[n_s + J:]
        nxt = step(chain.with_state(s), config, list(u))
        out = [w1 * (a - p) for a, p in zip(joint_angles(nxt), pose)]
        if w2:
            for j in nxt.joints:
                out.extend(w2 * c for c in nxt.links[j.child].w)
        return out

    x0 = np.concatenate([place_chain(chain, list(poses[0])).state_vector(), np.zeros(J), poses[0]])
    prog = trace(residual, x0)
    n_out = prog.n_outputs
    est, ana, losses = [], [], []
    for pose in poses:
        placed = place_chain(chain, list(pose))
        s0 = placed.state_vector()
        u = np.zeros(J)
        hist = []
        for _ in range(iterations + 1):
            vals = prog.forward(np.concatenate([s0, u, pose]))
            r = prog.outputs(vals)
            hist.append(float(r @ r))
            if hist[-1] < tol or len(hist) > iterations:
                break
            jac = np.empty((n_out, J))
            for k in range(n_out):
                e = np.zeros(n_out)
                e[k] = 1.0
                jac[k] = prog.backward(vals, e)[n_s:n_s + J]
            u = u - np.linalg.lstsq(jac, r, rcond=None)[0]
        est.append(u)
        losses.append(hist)
        ana.append([float(g) for g in gravity_torque(placed, config.gravity)])
    return GravityEstimate(poses, np.array(est), np.array(ana), losses)
