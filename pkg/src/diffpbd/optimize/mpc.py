"""Receding-horizon torque estimation from an observed joint trajectory."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import checkpoint_rollout
from ..chain import ArticulatedChain, SimConfig
from ..kinematics import gravity_torque, joint_angles, joint_velocities
from ..rollout import fixed_chain_step
from ..solver import step
from .adam import Adam, DivergenceGuard
from .losses import LossSpec, smoothness, step_tracking_loss

INIT_SCHEMES = ("zero", "previous", "gravcomp")


@dataclass
class MpcConfig:
    horizon: int = 1
    init: str = "gravcomp"
    iterations: int | None = None
    lr: float | None = None

    def __post_init__(self):
        if self.init not in INIT_SCHEMES:
            raise ValueError(f"init must be one of {INIT_SCHEMES}, got {self.init!r}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.iterations is None:
            self.iterations = 80 if self.horizon == 1 else 120
        if self.lr is None:
            # A zero start sits a full gravity torque away from the answer at
            # every step and needs the larger step size at any horizon.
            if self.init == "zero":
                self.lr = 1.0
            else:
                self.lr = 0.1 if self.horizon > 1 else 0.2


@dataclass
class MpcResult:
    torques: np.ndarray
    angles: np.ndarray
    rates: np.ndarray
    step_loss: np.ndarray
    rmse: np.ndarray | None = None
    config: dict = field(default_factory=dict)

    @property
    def max_jump(self) -> float:
        return float(np.abs(np.diff(self.torques, axis=0)).max()) if len(self.torques) > 1 else 0.0

    @property
    def mean_jump(self) -> float:
        return float(np.abs(np.diff(self.torques, axis=0)).mean()) if len(self.torques) > 1 else 0.0


def _readout(chain):
    return (np.array([float(a) for a in joint_angles(chain)]),
            np.array([float(w) for w in joint_velocities(chain)]))


def synthetic_trajectory(chain: ArticulatedChain, config: SimConfig, steps: int, torque_fn):
    """Simulate ``steps`` steps with ``torque_fn(t, chain) -> torques``.

    Returns (angles (T+1, J), rates (T+1, J), torques (T, J)).
    """
    J = len(chain.joints)
    angles = np.empty((steps + 1, J))
    rates = np.empty((steps + 1, J))
    torques = np.empty((steps, J))
    angles[0], rates[0] = _readout(chain)
    for t in range(steps):
        u = np.asarray(torque_fn(t, chain), float)
        torques[t] = u
        chain = step(chain, config, list(u))
        angles[t + 1], rates[t + 1] = _readout(chain)
    return angles, rates, torques


def _gravcomp(chain, config):
    return np.array([float(g) for g in gravity_torque(chain, config.gravity)])


def mpc_estimate(chain: ArticulatedChain, config: SimConfig, obs_angles, obs_rates,
                 mpc: MpcConfig, spec: LossSpec, true_torques=None,
                 guard_factor=1e3, guard_patience=50) -> MpcResult:
    """Estimate the torque sequence that makes the simulation follow the
    observations.

    At each step the next ``mpc.horizon`` torques are optimized with Adam
    against the tracking loss of the following states; the first one is
    committed and the simulation advances by one step. ``chain`` must hold
    the state matching ``obs_angles[0]``.
    """
    obs_angles = np.asarray(obs_angles, float)
    T = obs_angles.shape[0] - 1
    J = len(chain.joints)
    if obs_angles.shape[1] != J:
        raise ValueError(f"observations have {obs_angles.shape[1]} joints, chain has {J}")
    has_rates = obs_rates is not None and spec.lambda2 > 0
    rates_arr = np.asarray(obs_rates, float) if obs_rates is not None else np.zeros_like(obs_angles)
    H = mpc.horizon
    K = spec.K or H

    def loss_fn(ch, u, p, a):
        return step_tracking_loss(ch, a[:J], a[J:] if has_rates else None, spec) * (1.0 / K)

    prog = fixed_chain_step(chain, config, loss=loss_fn, n_aux=2 * J)
    state = chain.state_vector()
    template = chain
    committed = np.zeros((T, J))
    step_loss = np.zeros(T)
    prev_sol = None
    u_prev = None
    guard = DivergenceGuard(guard_factor, guard_patience)
    for t in range(T):
        h = min(H, T - t)
        aux = np.hstack([obs_angles[t + 1:t + 1 + h], rates_arr[t + 1:t + 1 + h]])
        cur = template.with_state(list(state))
        g0 = _gravcomp(cur, config)
        if mpc.init == "zero":
            U = np.zeros((h, J))
        elif mpc.init == "previous" and H == 1:
            U = np.tile(prev_sol[0] if prev_sol is not None else g0, (h, 1))
        else:
            U = np.tile(g0, (h, 1))
            if prev_sol is not None and H > 1:
                shifted = prev_sol[1:]
                U[:min(len(shifted), h - 1)] = shifted[:h - 1]
        opt = Adam(lr=mpc.lr)
        best = None
        for it in range(mpc.iterations + 1):
            res = checkpoint_rollout(prog, state, U, [], aux)
            loss, g = res.loss, res.grad_controls
            if spec.lambda3:
                sv, sg = smoothness(U, u_prev, spec.lambda3)
                loss += sv / K
                g = g + sg / K
            if best is None or loss < best[0]:
                best = (loss, U.copy())
            if it == mpc.iterations:
                break
            U = opt.step(U, g)
        loss, U = best
        guard.check(loss, list(step_loss[:t]) + [loss])
        step_loss[t] = loss
        committed[t] = U[0]
        prev_sol = U
        u_prev = U[0]
        vals = prog.program.forward(prog.pack(state, U[0], [], aux[0]))
        state = vals[prog.program.out_idx][:prog.n_state]

    sim = template
    angles = np.empty((T + 1, J))
    rates = np.empty((T + 1, J))
    angles[0], rates[0] = _readout(sim)
    for t in range(T):
        sim = step(sim, config, list(committed[t]))
        angles[t + 1], rates[t + 1] = _readout(sim)
    rmse = None
    if true_torques is not None:
        rmse = np.sqrt(np.mean((committed - np.asarray(true_torques, float)) ** 2, axis=0))
    return MpcResult(committed, angles, rates, step_loss, rmse,
                     {"horizon": H, "init": mpc.init, "iterations": mpc.iterations, "lr": mpc.lr,
                      "lambda1": spec.lambda1, "lambda2": spec.lambda2, "lambda3": spec.lambda3})
