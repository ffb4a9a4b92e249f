"""Maps between PBD link states and joint-space quantities."""
from __future__ import annotations

import logging
import math

from .autodiff import asin, clip, value, where
from .chain import ArticulatedChain
from .rotations import ZERO3, cross, dot, rotate, vadd, vscale, vsub

log = logging.getLogger(__name__)

ASIN_CLAMP = 1.0 - 1e-12


def joint_axis(chain: ArticulatedChain, joint):
    """World hinge axis (the parent's b axis)."""
    p = chain.links[joint.parent]
    return rotate(p.q, p.b_axis)


def joint_position(chain: ArticulatedChain, joint):
    """World position of a joint, taken at the child-side anchor."""
    c = chain.links[joint.child]
    return vadd(c.x, rotate(c.q, c.t))


def joint_angle(chain: ArticulatedChain, joint):
    """Signed hinge angle in [-pi, pi] from the two link axes."""
    p, c = chain.links[joint.parent], chain.links[joint.child]
    ref_p = joint.ref_parent if joint.ref_parent is not None else p.n_axis
    ref_c = joint.ref_child if joint.ref_child is not None else c.n_axis
    n_p = rotate(p.q, ref_p)
    n_c = rotate(c.q, ref_c)
    b = rotate(p.q, p.b_axis)
    s = dot(cross(n_p, n_c), b)
    if abs(value(s)) > ASIN_CLAMP:
        log.warning("joint %r: arcsin argument %.17g clamped", joint.name, value(s))
    ang = asin(clip(s, -ASIN_CLAMP, ASIN_CLAMP))
    ang = where(dot(n_p, n_c) < 0.0, math.pi - ang, ang)
    ang = where(ang > math.pi, ang - 2.0 * math.pi, ang)
    ang = where(ang < -math.pi, ang + 2.0 * math.pi, ang)
    return ang


def wrap_angle(a):
    """Map an angle difference in (-3 pi, 3 pi) into [-pi, pi] (differentiable on the tape)."""
    a = where(a > math.pi, a - 2.0 * math.pi, a)
    return where(a < -math.pi, a + 2.0 * math.pi, a)


def joint_angles(chain: ArticulatedChain) -> list:
    return [joint_angle(chain, j) for j in chain.joints]


def joint_velocities(chain: ArticulatedChain) -> list:
    """Relative angular velocity of child vs parent about each hinge axis."""
    out = []
    for j in chain.joints:
        p, c = chain.links[j.parent], chain.links[j.child]
        out.append(dot(vsub(c.w, p.w), joint_axis(chain, j)))
    return out


def joint_velocity_to_world_omega(chain: ArticulatedChain, p_dot) -> list:
    """World angular velocity of each link from joint rates.

    A link spins with the sum of ``axis_i * p_dot_i`` over the joints between
    it and the base. Links with no parent joint get zero.
    """
    if len(p_dot) != len(chain.joints):
        raise ValueError(f"expected {len(chain.joints)} joint rates, got {len(p_dot)}")
    omega = [ZERO3] * len(chain.links)
    for j, pd in zip(chain.joints, p_dot):
        omega[j.child] = vadd(omega[j.parent], vscale(joint_axis(chain, j), pd))
    return omega


def end_effector(chain: ArticulatedChain):
    """(tip position, tip velocity) of the last link."""
    l = chain.links[-1]
    arm = rotate(l.q, l.r)
    return vadd(l.x, arm), vadd(l.v, cross(l.w, arm))


def jacobian_transpose_apply(chain: ArticulatedChain, f_ee) -> list:
    """Joint torques ``J^T f`` for a force applied at the end effector."""
    tip, _ = end_effector(chain)
    return [dot(cross(joint_axis(chain, j), vsub(tip, joint_position(chain, j))), f_ee)
            for j in chain.joints]


def gravity_torque(chain: ArticulatedChain, gravity) -> list:
    """Static joint torques dV/dp holding the current pose against gravity."""
    out = []
    for k, j in enumerate(chain.joints):
        axis = joint_axis(chain, j)
        pos = joint_position(chain, j)
        tau = 0.0
        for i in chain.descendants(j.child):
            l = chain.links[i]
            if l.static:
                continue
            tau = tau - dot(cross(axis, vsub(l.x, pos)), vscale(gravity, l.mass))
        out.append(tau)
    return out


def potential_energy(chain: ArticulatedChain, gravity):
    e = 0.0
    for l in chain.links:
        if not l.static:
            e = e - l.mass * dot(gravity, l.x)
    return e


def kinetic_energy(chain: ArticulatedChain):
    from .rotations import apply_world_tensor
    e = 0.0
    for l in chain.links:
        if l.static:
            continue
        e = e + 0.5 * l.mass * dot(l.v, l.v) + 0.5 * dot(l.w, apply_world_tensor(l.q, l.inertia, l.w))
    return e
