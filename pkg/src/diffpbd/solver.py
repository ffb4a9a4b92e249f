"""Position-based dynamics step for hinge-jointed rigid chains.

One step is ``predict -> solve_constraints -> update_velocities``. Every
function is written over generic scalars: called with float chains it
simulates, called on a chain holding tape variables it records the step for
reverse-mode differentiation.

Each hinge carries two constraints. The positional one asks the parent's
child anchor and the child's parent anchor to coincide; the angular one asks
the two world-frame hinge axes to be parallel. Both are projected with a
scalar Lagrange multiplier along the normalized violation direction.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .autodiff import sqrt, where
from .chain import ArticulatedChain, SimConfig
from .rotations import (ZERO3, apply_rotvec, apply_world_tensor, cross, dot, quat_conj,
                        quat_mul, quat_normalize, rotate, vadd, vscale, vsub)

EPS_C = 1e-12


@dataclass
class Correction:
    """Position and orientation update for one link."""
    dx: tuple = ZERO3
    dphi: tuple = ZERO3
    dq: tuple = (0.0, 0.0, 0.0, 0.0)


def _dq(q, dphi):
    d = quat_mul((0.0, dphi[0], dphi[1], dphi[2]), q)
    return (0.5 * d[0], 0.5 * d[1], 0.5 * d[2], 0.5 * d[3])


def _guarded_direction(c):
    """(‖c‖, c/‖c‖, active) with a zero branch below ``EPS_C``.

    The square root is taken of a value that is never 0 so the unused branch
    cannot raise or poison the adjoints.
    """
    c2 = dot(c, c)
    active = c2 > EPS_C * EPS_C
    safe = where(active, c2, 1.0)
    mag = sqrt(safe)
    n = (c[0] / mag, c[1] / mag, c[2] / mag)
    return where(active, mag, 0.0), n, active


def _inv_inertia_apply(link, v):
    if link.static:
        return ZERO3
    return apply_world_tensor(link.q, link.inv_inertia, v)


def joint_torque_vectors(chain: ArticulatedChain, torques) -> list:
    """Per-link world torque from per-joint scalar motor torques.

    The motor acts about the parent's world hinge axis: ``+tau`` on the
    child, the reaction ``-tau`` on the parent.
    """
    out = [ZERO3] * len(chain.links)
    for j, tau in zip(chain.joints, torques):
        if not _is_var(tau) and tau == 0.0:
            continue
        axis = rotate(chain.links[j.parent].q, chain.links[j.parent].b_axis)
        m = vscale(axis, tau)
        out[j.child] = vadd(out[j.child], m)
        out[j.parent] = vsub(out[j.parent], m)
    return out


def _is_var(x):
    return hasattr(x, "tape")


def _link_torques(chain, torques):
    if torques is None:
        return [ZERO3] * len(chain.links)
    torques = list(torques)
    if torques and isinstance(torques[0], (tuple, list)):
        if len(torques) != len(chain.links):
            raise ValueError("per-link torques need one Vec3 per link")
        return [tuple(t) for t in torques]
    if len(torques) != len(chain.joints):
        raise ValueError(f"expected {len(chain.joints)} joint torques, got {len(torques)}")
    return joint_torque_vectors(chain, torques)


def predict(chain: ArticulatedChain, config: SimConfig, torques=None) -> ArticulatedChain:
    """Explicit prediction of every dynamic link.

    ``torques`` is either one scalar per joint or one world Vec3 per link.
    """
    dt = config.dt
    tau = _link_torques(chain, torques)
    new = chain.copy()
    for i, l in enumerate(new.links):
        if l.static:
            continue
        v = vadd(l.v, vscale(config.gravity, dt))
        x = vadd(l.x, vscale(v, dt))
        iw = apply_world_tensor(l.q, l.inertia, l.w)
        gyro = cross(l.w, iw)
        rhs = vadd(tau[i], gyro) if config.plus_sign_gyroscopic else vsub(tau[i], gyro)
        w = vadd(l.w, vscale(apply_world_tensor(l.q, l.inv_inertia, rhs), dt))
        wq = quat_mul((0.0, w[0], w[1], w[2]), l.q)
        h = 0.5 * dt
        q = quat_normalize((l.q[0] + h * wq[0], l.q[1] + h * wq[1],
                            l.q[2] + h * wq[2], l.q[3] + h * wq[3]))
        l.x, l.v, l.w, l.q = x, v, w, q
    return new


def anchors(chain: ArticulatedChain, joint):
    """World positions of the parent-side and child-side anchors of a joint."""
    p, c = chain.links[joint.parent], chain.links[joint.child]
    return vadd(p.x, rotate(p.q, p.r)), vadd(c.x, rotate(c.q, c.t))


def world_axes(chain: ArticulatedChain, joint):
    p, c = chain.links[joint.parent], chain.links[joint.child]
    return rotate(p.q, p.b_axis), rotate(c.q, c.a_axis)


def positional_project(chain: ArticulatedChain, joint):
    """Corrections (parent, child) closing the anchor gap of ``joint``."""
    p, c = chain.links[joint.parent], chain.links[joint.child]
    r_w = rotate(p.q, p.r)
    t_w = rotate(c.q, c.t)
    gap = vsub(vadd(c.x, t_w), vadd(p.x, r_w))
    mag, n, active = _guarded_direction(gap)
    rn = cross(r_w, n)
    tn = cross(t_w, n)
    ip_rn = _inv_inertia_apply(p, rn)
    ic_tn = _inv_inertia_apply(c, tn)
    w = p.inv_mass + c.inv_mass + dot(rn, ip_rn) + dot(tn, ic_tn)
    lam = where(active, -mag / where(active, w, 1.0), 0.0)
    cp = Correction(vscale(n, -(p.inv_mass * lam)), vscale(ip_rn, -lam))
    cc = Correction(vscale(n, c.inv_mass * lam), vscale(ic_tn, lam))
    cp.dq, cc.dq = _dq(p.q, cp.dphi), _dq(c.q, cc.dphi)
    return cp, cc


def angular_project(chain: ArticulatedChain, joint):
    """Corrections (parent, child) aligning the two world hinge axes."""
    p, c = chain.links[joint.parent], chain.links[joint.child]
    b_w, a_w = world_axes(chain, joint)
    mag, n, active = _guarded_direction(cross(b_w, a_w))
    ip_n = _inv_inertia_apply(p, n)
    ic_n = _inv_inertia_apply(c, n)
    w = dot(n, ip_n) + dot(n, ic_n)
    lam = where(active, -mag / where(active, w, 1.0), 0.0)
    cp = Correction(ZERO3, vscale(ip_n, -lam))
    cc = Correction(ZERO3, vscale(ic_n, lam))
    cp.dq, cc.dq = _dq(p.q, cp.dphi), _dq(c.q, cc.dphi)
    return cp, cc


def _apply(link, corr: Correction, scale=1.0):
    if link.static:
        return
    dx, dphi = corr.dx, corr.dphi
    if scale != 1.0:
        dx, dphi = vscale(dx, scale), vscale(dphi, scale)
    link.x = vadd(link.x, dx)
    link.q = apply_rotvec(link.q, dphi)


def _sweep(chain, project, jacobi, counts):
    if not jacobi:
        for j in chain.joints:
            cp, cc = project(chain, j)
            _apply(chain.links[j.parent], cp)
            _apply(chain.links[j.child], cc)
        return
    acc = {}
    for j in chain.joints:
        cp, cc = project(chain, j)
        for k, corr in ((j.parent, cp), (j.child, cc)):
            if k in acc:
                a = acc[k]
                acc[k] = Correction(vadd(a.dx, corr.dx), vadd(a.dphi, corr.dphi))
            else:
                acc[k] = corr
    for k, corr in acc.items():
        _apply(chain.links[k], corr, 1.0 / counts[k])


def solve_constraints(chain: ArticulatedChain, config: SimConfig,
                      callback: Callable | None = None) -> ArticulatedChain:
    """Run ``config.iterations`` projection sweeps, positional then angular.

    Gauss-Seidel applies each joint's corrections at once, base to tip.
    Jacobi evaluates every joint on the same iterate and applies the summed
    corrections divided by the number of joints touching each link.
    ``callback(iteration, chain)`` is called after every sweep.
    """
    new = chain.copy()
    jacobi = config.solver == "jacobi"
    counts = {}
    for j in new.joints:
        counts[j.parent] = counts.get(j.parent, 0) + 1
        counts[j.child] = counts.get(j.child, 0) + 1
    for it in range(config.iterations):
        _sweep(new, positional_project, jacobi, counts)
        _sweep(new, angular_project, jacobi, counts)
        if callback is not None:
            callback(it, new)
    return new


def update_velocities(prev: ArticulatedChain, new: ArticulatedChain,
                      config: SimConfig) -> ArticulatedChain:
    """Finite-difference velocities from the position and orientation change."""
    out = new.copy()
    inv_dt = 1.0 / config.dt
    for lp, ln in zip(prev.links, out.links):
        if ln.static:
            continue
        ln.v = vscale(vsub(ln.x, lp.x), inv_dt)
        dq = quat_mul(ln.q, quat_conj(lp.q))
        w = (2.0 * inv_dt * dq[1], 2.0 * inv_dt * dq[2], 2.0 * inv_dt * dq[3])
        neg = dq[0] < 0.0
        ln.w = tuple(where(neg, -wi, wi) for wi in w)
    return out


def step(chain: ArticulatedChain, config: SimConfig, torques=None,
         callback: Callable | None = None) -> ArticulatedChain:
    pred = predict(chain, config, torques)
    solved = solve_constraints(pred, config, callback)
    return update_velocities(chain, solved, config)


def constraint_violation(chain: ArticulatedChain):
    """(max anchor gap in m, max axis misalignment |b x a|) as floats."""
    from .autodiff import value
    gap = mis = 0.0
    for j in chain.joints:
        ap, ac = anchors(chain, j)
        d = vsub(ac, ap)
        gap = max(gap, sum(value(x) ** 2 for x in d) ** 0.5)
        b, a = world_axes(chain, j)
        cr = cross(b, a)
        mis = max(mis, sum(value(x) ** 2 for x in cr) ** 0.5)
    return gap, mis


def linear_momentum(chain: ArticulatedChain):
    from .autodiff import value
    tot = [0.0, 0.0, 0.0]
    for l in chain.links:
        if l.static:
            continue
        for k in range(3):
            tot[k] += value(l.mass) * value(l.v[k])
    return tuple(tot)
