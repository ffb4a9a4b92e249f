"""Torsion-spring counterbalance model and its identification.

The spring joins two points at distances ``l1`` and ``l2`` from the joint,
separated by the fixed angle ``pi - alpha1 - alpha2``; its torque on the
joint depends on the joint angle through the lever factor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import least_squares

from ..autodiff import StepProgram, checkpoint_rollout, cos, sin, sqrt
from ..chain import ArticulatedChain, SimConfig, place_chain
from ..kinematics import gravity_torque, joint_angle
from ..solver import step
from .identify import identify_parameters
from .losses import LossSpec, step_tracking_loss


@dataclass
class SpringModel:
    k: float = 800.0
    alpha1: float = 0.3
    alpha2: float = 0.4
    l1: float = 0.35
    l2: float = 0.12
    x_rest: float = 0.2

    def __post_init__(self):
        for name in ("k", "l1", "l2"):
            v = getattr(self, name)
            if not (hasattr(v, "tape") or v > 0):
                raise ValueError(f"spring {name} must be positive, got {v}")

    def length(self):
        return spring_length(self.l1, self.l2, self.alpha1, self.alpha2)


def spring_length(l1, l2, alpha1, alpha2):
    return sqrt(2.0 * l1 * l2 * cos(math.pi - alpha1 - alpha2) + l1 * l1 + l2 * l2)


def spring_torque(model: SpringModel, theta):
    """Spring torque on the joint at angle ``theta`` (generic scalars)."""
    x = spring_length(model.l1, model.l2, model.alpha1, model.alpha2)
    lever = sin(math.pi - model.alpha1 - model.alpha2 - theta)
    return lever * (model.l1 * model.l2 / x) * model.k * (x - model.x_rest)


@dataclass
class SpringFit:
    method: str
    k: float
    alpha2: float
    loss: float
    history: list


def _check_rank(angles, fit_alpha2):
    a = np.asarray(angles, float)
    spread = float(np.ptp(a[:, 0])) if a.shape[0] else 0.0
    need = 2 if fit_alpha2 else 1
    if a.shape[0] < 2 or spread < 1e-9:
        raise ValueError("rank-deficient spring data: need at least two distinct poses "
                         f"of the spring joint to fit {need} parameter(s)")


def fit_spring_curve(angles, motor_torques, gravity_torques, model: SpringModel,
                     fit_alpha2=False, spring_joint=0) -> SpringFit:
    """Least squares on spring torque = gravity torque - motor torque."""
    angles = np.atleast_2d(np.asarray(angles, float))
    _check_rank(angles[:, [spring_joint]], fit_alpha2)
    target = (np.asarray(gravity_torques, float)[:, spring_joint]
              - np.asarray(motor_torques, float)[:, spring_joint])
    theta = angles[:, spring_joint]
    history = []

    def resid(z):
        m = replace(model, k=z[0] * model.k, alpha2=z[1] if fit_alpha2 else model.alpha2)
        r = np.array([spring_torque(m, th) for th in theta]) - target
        history.append(float(np.mean(r * r)))
        return r

    z0 = [1.0, model.alpha2] if fit_alpha2 else [1.0]
    sol = least_squares(resid, z0, x_scale=[1.0, 0.1][:len(z0)], xtol=1e-14, ftol=1e-14,
                        gtol=1e-14)
    if fit_alpha2 and np.linalg.matrix_rank(sol.jac) < 2:
        raise ValueError("rank-deficient spring data: k and alpha2 are not separable")
    k = float(sol.x[0] * model.k)
    a2 = float(sol.x[1]) if fit_alpha2 else model.alpha2
    return SpringFit("curve-fit", k, a2, float(np.mean(sol.fun ** 2)), history)


def fit_spring_sim(chain: ArticulatedChain, config: SimConfig, angles, motor_torques,
                   model: SpringModel, spec: LossSpec | None = None, fit_alpha2=False,
                   spring_joint=0, steps=1, lr=0.02, iterations=300, decay=0.99,
                   targets=None) -> SpringFit:
    """Spring inside the simulator: find k (and alpha2) that keeps every
    observed static pose still under the observed motor torques.

    ``chain`` is a template; each pose is placed by forward kinematics and
    simulated for ``steps`` steps from rest. ``k`` is optimized as a multiple
    of ``model.k``. ``targets`` (poses, steps, 2 * joints) holds the observed
    angles and joint rates after each step; by default every pose is expected
    to stay at rest.
    """
    angles = np.atleast_2d(np.asarray(angles, float))
    motor = np.atleast_2d(np.asarray(motor_torques, float))
    _check_rank(angles[:, [spring_joint]], fit_alpha2)
    spec = spec or LossSpec(1.0, 0.02, 0.0)
    J = len(chain.joints)
    n = angles.shape[0]
    n_p = 2 if fit_alpha2 else 1
    scale = 1.0 / (n * steps)

    def fn(s, u, p, a):
        ch = chain.with_state(s)
        m = replace(model, k=p[0] * model.k, alpha2=p[1] if fit_alpha2 else model.alpha2)
        tau = list(u)
        theta = joint_angle(ch, ch.joints[spring_joint])
        tau[spring_joint] = tau[spring_joint] + spring_torque(m, theta)
        nxt = step(ch, config, tau)
        return nxt.state(), step_tracking_loss(nxt, a[:J], a[J:], spec) * scale

    p0 = np.array([1.0, model.alpha2][:n_p])
    s0 = [place_chain(chain, list(a)).state_vector() for a in angles]
    prog = StepProgram(fn, chain.n_state, J, n_p, 2 * J,
                       example=np.concatenate([s0[0], motor[0], p0, np.zeros(2 * J)]))
    if targets is None:
        aux = [np.tile(np.concatenate([a, np.zeros(J)]), (steps, 1)) for a in angles]
    else:
        aux = np.asarray(targets, float)
        if aux.shape != (n, steps, 2 * J):
            raise ValueError(f"targets must have shape {(n, steps, 2 * J)}, got {aux.shape}")

    def objective(z):
        tot, g = 0.0, np.zeros(n_p)
        for i in range(n):
            r = checkpoint_rollout(prog, s0[i], np.tile(motor[i], (steps, 1)), z, aux[i])
            tot += r.loss
            g += r.grad_params
        return tot, g

    res = identify_parameters(objective, p0, n_observations=n * J, lr=lr,
                              iterations=iterations, decay=decay)
    k = float(res.x[0] * model.k)
    a2 = float(res.x[1]) if fit_alpha2 else model.alpha2
    return SpringFit("diff-sim", k, a2, res.loss, res.history)


def spring_pose_targets(chain: ArticulatedChain, config: SimConfig, angles, motor_torques,
                        model: SpringModel, spring_joint=0, steps=1) -> np.ndarray:
    """Observed (angles, joint rates) after each step of every pose, simulated
    with ``model`` in the loop; the ``targets`` input of :func:`fit_spring_sim`."""
    from ..kinematics import joint_angles, joint_velocities
    out = []
    for a, u in zip(np.atleast_2d(angles), np.atleast_2d(motor_torques)):
        ch = place_chain(chain, list(a))
        rows = []
        for _ in range(steps):
            tau = [float(v) for v in u]
            tau[spring_joint] += float(spring_torque(model, joint_angle(ch, ch.joints[spring_joint])))
            ch = step(ch, config, tau)
            rows.append([float(v) for v in joint_angles(ch)] + [float(v) for v in joint_velocities(ch)])
        out.append(rows)
    return np.array(out)


def fit_spring(method, **kw) -> SpringFit:
    """Dispatch to the ``curve-fit`` or ``diff-sim`` estimator."""
    if method == "curve-fit":
        return fit_spring_curve(**kw)
    if method == "diff-sim":
        return fit_spring_sim(**kw)
    raise ValueError(f"unknown spring fit method {method!r}")


@dataclass
class SpringData:
    angles: np.ndarray
    motor_torques: np.ndarray
    gravity_torques: np.ndarray
    true_model: SpringModel


def synthetic_spring_data(chain: ArticulatedChain, config: SimConfig, model: SpringModel,
                          n_poses=30, seed=0, spring_range=(-0.6, 0.6), other_range=(-0.5, 0.5),
                          noise=0.1, spring_joint=0) -> SpringData:
    """Static poses with motor torques that hold them against gravity and
    the spring: motor = gravity - spring, plus Gaussian torque noise."""
    rng = np.random.default_rng(seed)
    J = len(chain.joints)
    angles = rng.uniform(other_range[0], other_range[1], size=(n_poses, J))
    angles[:, spring_joint] = rng.uniform(spring_range[0], spring_range[1], size=n_poses)
    grav = np.array([[float(g) for g in gravity_torque(place_chain(chain, list(a)), config.gravity)]
                     for a in angles])
    motor = grav.copy()
    motor[:, spring_joint] -= [spring_torque(model, th) for th in angles[:, spring_joint]]
    motor += noise * rng.standard_normal(motor.shape)
    return SpringData(angles, motor, grav, model)
