"""Trajectory-tracking losses over generic scalars."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..chain import ArticulatedChain
from ..kinematics import joint_angles, joint_velocity_to_world_omega
from ..rotations import vsub, dot

SCHEMES = {
    "angle-only": (1.0, 0.0),
    "omega-only": (0.0, 1.0),
    "angle-omega": (1.0, 0.02),
}


@dataclass
class LossSpec:
    lambda1: float = 1.0
    lambda2: float = 0.02
    lambda3: float = 0.0
    K: int | None = None

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.K is not None and self.K < 1:
            raise ValueError("K must be >= 1")

    @classmethod
    def scheme(cls, name, lambda3=0.0, K=None):
        try:
            l1, l2 = SCHEMES[name]
        except KeyError:
            raise ValueError(f"unknown loss scheme {name!r}; choose from {sorted(SCHEMES)}")
        return cls(l1, l2, lambda3, K)


def _sq(v):
    return dot(v, v)


def step_tracking_loss(chain: ArticulatedChain, obs_angles, obs_rates, spec: LossSpec):
    """Angle and world angular-velocity mismatch of one simulated state.

    Observed joint rates are mapped to per-link world angular velocities
    through the simulated chain's current hinge axes before comparison.
    ``obs_rates=None`` drops the velocity term.
    """
    loss = 0.0
    if spec.lambda1:
        for p, ph in zip(joint_angles(chain), obs_angles):
            d = p - ph
            loss = loss + spec.lambda1 * (d * d)
    if spec.lambda2 and obs_rates is not None:
        target = joint_velocity_to_world_omega(chain, obs_rates)
        for j in chain.joints:
            loss = loss + spec.lambda2 * _sq(vsub(chain.links[j.child].w, target[j.child]))
    return loss


def smoothness(torques, u_prev=None, lambda3=1.0):
    """lambda3 * sum_t ||u_t - u_{t-1}||^2 and its gradient w.r.t. the torques."""
    U = np.atleast_2d(np.asarray(torques, float))
    full = U if u_prev is None else np.vstack([np.asarray(u_prev, float)[None, :], U])
    d = np.diff(full, axis=0)
    val = lambda3 * float((d * d).sum())
    g_full = np.zeros_like(full)
    g_full[1:] += 2 * lambda3 * d
    g_full[:-1] -= 2 * lambda3 * d
    g = g_full if u_prev is None else g_full[1:]
    return val, g


def trajectory_loss(angles, omegas, obs_angles, obs_omegas, torques, spec: LossSpec,
                    u_prev=None):
    """Averaged weighted tracking loss over a rollout.

    ``angles``/``obs_angles`` are (T, J); ``omegas``/``obs_omegas`` are
    (T, L, 3) world angular velocities (``obs_omegas`` already mapped from
    joint rates, or None when unavailable); ``torques`` is (T, J). Entries
    may be tape variables.
    """
    T = len(angles)
    if len(obs_angles) != T or len(torques) != T:
        raise ValueError("angles, observations and torques must have the same length")
    if obs_omegas is not None and (len(omegas) != T or len(obs_omegas) != T):
        raise ValueError("angular velocity series must match the rollout length")
    K = spec.K or T
    total = 0.0
    for t in range(T):
        if len(angles[t]) != len(obs_angles[t]):
            raise ValueError(f"step {t}: joint count mismatch")
        for p, ph in zip(angles[t], obs_angles[t]):
            total = total + spec.lambda1 * (p - ph) * (p - ph)
        if obs_omegas is not None and spec.lambda2:
            for w, wh in zip(omegas[t], obs_omegas[t]):
                total = total + spec.lambda2 * _sq(vsub(w, wh))
        if spec.lambda3:
            prev = torques[t - 1] if t > 0 else u_prev
            if prev is not None:
                for a, b in zip(torques[t], prev):
                    total = total + spec.lambda3 * (a - b) * (a - b)
    return total * (1.0 / K)
