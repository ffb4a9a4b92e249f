"""Articulated chain data model.

A chain is a list of :class:`RigidLink` particles (one per rigid body) tied
by :class:`HingeJoint` constraints. Link fields may hold floats or tape
variables, so the same chain can be simulated numerically or traced.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .rotations import (IDENTITY3, IDENTITY_QUAT, ZERO3, cross, dot, inv3, quat_from_axis_angle,
                        quat_mul, rotate, sym_from6, vadd, vsub)

STATE_PER_LINK = 13  # x(3) v(3) q(4) w(3)
ZERO9 = (0.0,) * 9


@dataclass
class SimConfig:
    dt: float = 0.01
    gravity: tuple = (0.0, 0.0, -9.8)
    solver: str = "gauss-seidel"
    iterations: int = 30
    plus_sign_gyroscopic: bool = False  # use +w x (I w) in the prediction, for comparison

    def __post_init__(self):
        aliases = {"gs": "gauss-seidel", "gaussseidel": "gauss-seidel",
                   "gauss_seidel": "gauss-seidel", "jacobi": "jacobi"}
        self.solver = aliases.get(self.solver.lower(), self.solver.lower())
        if self.solver not in ("gauss-seidel", "jacobi"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        self.gravity = tuple(float(g) for g in self.gravity)


@dataclass
class RigidLink:
    """One link: COM particle state plus body-frame constants.

    ``t`` points from the COM to the joint with the parent, ``r`` to the joint
    with the child. ``a_axis``/``b_axis`` are the hinge axes at those joints
    in the body frame; ``n_axis`` is the link axis used to read joint angles.
    """
    name: str = ""
    mass: Any = 1.0
    inertia: tuple = IDENTITY3
    t: tuple = ZERO3
    r: tuple = ZERO3
    a_axis: tuple = (0.0, 1.0, 0.0)
    b_axis: tuple = (0.0, 1.0, 0.0)
    n_axis: tuple = (0.0, 0.0, -1.0)
    static: bool = False
    x: tuple = ZERO3
    v: tuple = ZERO3
    q: tuple = IDENTITY_QUAT
    w: tuple = ZERO3
    inv_mass: Any = field(default=None, repr=False)
    inv_inertia: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.inv_mass is None:
            self.inv_mass = 0.0 if self.static else 1.0 / self.mass
        if self.inv_inertia is None:
            self.inv_inertia = ZERO9 if self.static else inv3(self.inertia)


@dataclass
class HingeJoint:
    parent: int
    child: int
    name: str = ""
    ref_parent: tuple | None = None
    ref_child: tuple | None = None


@dataclass
class ArticulatedChain:
    links: list
    joints: list

    def __post_init__(self):
        seen = set()
        for j in self.joints:
            if not j.parent < j.child:
                raise ValueError(f"joint {j.name!r}: parent index must precede child")
            if j.child in seen:
                raise ValueError(f"link {j.child} has two parent joints")
            seen.add(j.child)

    def copy(self) -> "ArticulatedChain":
        new = copy.copy(self)
        new.links = [copy.copy(l) for l in self.links]
        return new

    @property
    def dynamic(self) -> list:
        return [i for i, l in enumerate(self.links) if not l.static]

    @property
    def n_state(self) -> int:
        return STATE_PER_LINK * len(self.dynamic)

    def state(self) -> list:
        out = []
        for i in self.dynamic:
            l = self.links[i]
            out.extend(l.x)
            out.extend(l.v)
            out.extend(l.q)
            out.extend(l.w)
        return out

    def state_vector(self) -> np.ndarray:
        from .autodiff import value
        return np.array([value(s) for s in self.state()])

    def with_state(self, s: Sequence) -> "ArticulatedChain":
        new = self.copy()
        if len(s) != self.n_state:
            raise ValueError(f"state has {len(s)} entries, chain needs {self.n_state}")
        for k, i in enumerate(self.dynamic):
            o = STATE_PER_LINK * k
            l = new.links[i]
            l.x = tuple(s[o:o + 3])
            l.v = tuple(s[o + 3:o + 6])
            l.q = tuple(s[o + 6:o + 10])
            l.w = tuple(s[o + 10:o + 13])
        return new

    def children_of(self, i):
        return [j for j in self.joints if j.parent == i]

    def descendants(self, link):
        """Links downstream of ``link`` (inclusive)."""
        out = [link]
        for j in self.joints:
            if j.parent in out:
                out.append(j.child)
        return out


def place_chain(chain: ArticulatedChain, angles: Sequence = None) -> ArticulatedChain:
    """Set link poses by forward kinematics from joint angles; velocities zeroed.

    Convention: at zero angle a child's body frame coincides with its
    parent's, so ``child.a_axis`` must equal ``parent.b_axis``. Links without
    a parent joint keep their pose.
    """
    new = chain.copy()
    angles = [0.0] * len(chain.joints) if angles is None else list(angles)
    for j, ang in zip(new.joints, angles):
        p, c = new.links[j.parent], new.links[j.child]
        c.q = quat_mul(p.q, quat_from_axis_angle(p.b_axis, ang))
        anchor = vadd(p.x, rotate(p.q, p.r))
        c.x = vsub(anchor, rotate(c.q, c.t))
        c.v, c.w = ZERO3, ZERO3
    return new


def rod_inertia(mass, length, radius=0.05, axis=2):
    """Solid cylinder about its COM, long axis along body ``axis``."""
    side = mass * length * length / 12.0 + mass * radius * radius / 4.0
    along = mass * radius * radius / 2.0
    d = [side, side, side]
    d[axis] = along
    return sym_from6(*d)


def pendulum_chain(lengths: Sequence, masses: Sequence = None, angles=None,
                   radius: float = 0.05, hinge=(0.0, 1.0, 0.0),
                   base_position=ZERO3) -> ArticulatedChain:
    """Planar pendulum of uniform rods hanging along -z from a static base.

    Lengths and masses may be tape variables (e.g. for design optimization).
    """
    n = len(lengths)
    masses = [1.0] * n if masses is None else list(masses)
    down = (0.0, 0.0, -1.0)
    base = RigidLink(name="base", static=True, mass=0.0, inertia=IDENTITY3,
                     r=ZERO3, a_axis=hinge, b_axis=hinge, n_axis=down, x=tuple(base_position))
    links = [base]
    for k, (l, m) in enumerate(zip(lengths, masses)):
        links.append(RigidLink(
            name=f"link{k + 1}", mass=m, inertia=rod_inertia(m, l, radius),
            t=(0.0, 0.0, 0.5 * l), r=(0.0, 0.0, -0.5 * l),
            a_axis=hinge, b_axis=hinge, n_axis=down))
    joints = [HingeJoint(k, k + 1, name=f"joint{k + 1}") for k in range(n)]
    return place_chain(ArticulatedChain(links, joints), angles)


def static_link_pose_ok(link: RigidLink) -> bool:
    return link.static and link.inv_mass == 0.0


def unit(v, tol=1e-6, what="axis"):
    """Normalize a nearly-unit vector; reject anything further than ``tol``."""
    n = math.sqrt(sum(float(c) ** 2 for c in v))
    if abs(n - 1.0) > tol:
        raise ValueError(f"{what} {tuple(v)} is not unit length (norm {n:.6g})")
    if abs(n - 1.0) <= 1e-15:  # already unit up to rounding; keep the bits stable
        return tuple(float(c) for c in v)
    return tuple(float(c) / n for c in v)


def check_perpendicular(a, b, tol=1e-6):
    return abs(dot(a, b)) <= tol and abs(1.0 - sum(c * c for c in cross(a, b))) <= 2 * tol
