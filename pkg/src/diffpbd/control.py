"""Controllers on top of the simulator and the net-torque lookup map."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .chain import ArticulatedChain, HingeJoint, RigidLink, SimConfig
from .kinematics import (end_effector, jacobian_transpose_apply, joint_angle, joint_axis,
                         joint_position, joint_velocities)
from .rotations import IDENTITY3, cross, quat_to_rot, vadd, vscale, vsub

log = logging.getLogger(__name__)


@dataclass
class StiffnessParams:
    K: float = 60.0
    D: float = 6.0

    def __post_init__(self):
        if self.K < 0 or self.D < 0:
            raise ValueError("stiffness and damping must be non-negative")


@dataclass
class ImpedanceParams:
    K_m: float = 30.0
    D_m: float = 0.01
    scaling: float = 1.0

    def __post_init__(self):
        if self.K_m < 0 or self.D_m < 0 or self.scaling < 0:
            raise ValueError("impedance parameters must be non-negative")


def stiffness_torque(chain: ArticulatedChain, p_des, p_des_dot, params: StiffnessParams) -> list:
    """Task-space spring-damper on the end effector mapped through J^T."""
    p, pd = end_effector(chain)
    f = vadd(vscale(vsub(p_des, p), params.K), vscale(vsub(p_des_dot, pd), params.D))
    return jacobian_transpose_apply(chain, f)


class NetTorqueMap:
    """Bilinear lookup of net torque over (angle difference, angular velocity)."""

    def __init__(self, dtheta, omega, values, invalid=0):
        self.dtheta = np.asarray(dtheta, float)
        self.omega = np.asarray(omega, float)
        self.values = np.asarray(values, float)
        self.invalid = int(invalid)
        if self.values.shape != (self.dtheta.size, self.omega.size):
            raise ValueError("map values must have shape (len(dtheta), len(omega))")
        if np.any(np.diff(self.dtheta) <= 0) or np.any(np.diff(self.omega) <= 0):
            raise ValueError("map axes must be strictly increasing")
        self.clamped = 0

    @property
    def bounds(self):
        return ((self.dtheta[0], self.dtheta[-1]), (self.omega[0], self.omega[-1]))

    def __call__(self, dtheta, omega) -> float:
        (a0, a1), (w0, w1) = self.bounds
        x = min(max(dtheta, a0), a1)
        y = min(max(omega, w0), w1)
        if x != dtheta or y != omega:
            self.clamped += 1
            if self.clamped == 1:
                log.warning("net torque map query (%.6g, %.6g) outside bounds; clamped "
                            "(further clamps are counted in .clamped, not logged)", dtheta, omega)
        i = int(np.clip(np.searchsorted(self.dtheta, x, side="right") - 1, 0, self.dtheta.size - 2))
        j = int(np.clip(np.searchsorted(self.omega, y, side="right") - 1, 0, self.omega.size - 2))
        tx = (x - self.dtheta[i]) / (self.dtheta[i + 1] - self.dtheta[i])
        ty = (y - self.omega[j]) / (self.omega[j + 1] - self.omega[j])
        v = self.values
        return float((1 - tx) * (1 - ty) * v[i, j] + tx * (1 - ty) * v[i + 1, j]
                     + (1 - tx) * ty * v[i, j + 1] + tx * ty * v[i + 1, j + 1])


def impedance_torque(p, p_dot, p_des, p_des_dot, p_des_ddot, params: ImpedanceParams,
                     net_map: NetTorqueMap | None = None) -> float:
    """Joint PD law plus the scaled model torque looked up from the map.

    ``p_des_ddot`` is accepted for interface symmetry; the inertial term is
    carried by the map, which is keyed on the tracking error and velocity.
    """
    tau = params.D_m * (p_des_dot - p_dot) + params.K_m * (p_des - p)
    if net_map is not None and params.scaling:
        tau += params.scaling * net_map(p_des - p, p_dot)
    return tau


def single_joint_chain(chain: ArticulatedChain, joint_index: int) -> ArticulatedChain:
    """Isolate one hinge with every other joint locked at its current angle.

    The parent side becomes a static base at the parent's pose; everything
    downstream of the joint is merged into one rigid body (summed mass,
    parallel-axis inertia) attached to the child's frame.
    """
    if not 0 <= joint_index < len(chain.joints):
        raise ValueError(f"joint index {joint_index} out of range")
    j = chain.joints[joint_index]
    p, c = chain.links[j.parent], chain.links[j.child]
    members = [k for k in chain.descendants(j.child) if not chain.links[k].static]
    masses = np.array([float(chain.links[k].mass) for k in members])
    xs = np.array([[float(v) for v in chain.links[k].x] for k in members])
    M = masses.sum()
    com = (masses[:, None] * xs).sum(axis=0) / M
    I_w = np.zeros((3, 3))
    for m, x, k in zip(masses, xs, members):
        l = chain.links[k]
        R = np.array(quat_to_rot(tuple(float(v) for v in l.q)), float).reshape(3, 3)
        I_loc = np.array([float(v) for v in l.inertia]).reshape(3, 3)
        d = x - com
        I_w += R @ I_loc @ R.T + m * (d @ d * np.eye(3) - np.outer(d, d))
    Rc = np.array(quat_to_rot(tuple(float(v) for v in c.q)), float).reshape(3, 3)
    I_body = Rc.T @ I_w @ Rc
    anchor = np.array([float(v) for v in joint_position(chain, j)])
    t = Rc.T @ (anchor - com)
    base = RigidLink(name=p.name or "base", static=True, mass=0.0, inertia=IDENTITY3,
                     r=tuple(float(v) for v in p.r), a_axis=p.a_axis, b_axis=p.b_axis,
                     n_axis=p.n_axis, x=tuple(float(v) for v in p.x),
                     q=tuple(float(v) for v in p.q))
    body = RigidLink(name=c.name, mass=float(M), inertia=tuple(I_body.ravel()),
                     t=tuple(t), r=tuple(t), a_axis=c.a_axis, b_axis=c.b_axis,
                     n_axis=c.n_axis, x=tuple(com), q=tuple(float(v) for v in c.q))
    return ArticulatedChain([base, body], [HingeJoint(0, 1, j.name, j.ref_parent, j.ref_child)])


def _set_joint_rate(chain: ArticulatedChain, rate: float) -> ArticulatedChain:
    """Spin the single child about the hinge at ``rate`` (rad/s)."""
    new = chain.copy()
    j = new.joints[0]
    axis = joint_axis(new, j)
    w = vscale(axis, rate)
    c = new.links[j.child]
    c.w = w
    c.v = cross(w, vsub(c.x, joint_position(new, j)))
    return new


@dataclass
class MapGrid:
    dtheta_max: float = 0.00625
    omega_max: float = 0.5
    n_dtheta: int = 33
    n_omega: int = 33

    def __post_init__(self):
        if self.dtheta_max <= 0 or self.omega_max <= 0:
            raise ValueError("map bounds must be positive")
        if self.n_dtheta < 2 or self.n_omega < 2:
            raise ValueError("map needs at least 2 nodes per axis")

    def axes(self):
        return (np.linspace(-self.dtheta_max, self.dtheta_max, self.n_dtheta),
                np.linspace(-self.omega_max, self.omega_max, self.n_omega))


def _fill_invalid(values, ok):
    """Replace invalid cells by the mean of valid 4-neighbours, growing inward."""
    values = values.copy()
    ok = ok.copy()
    if not ok.any():
        raise RuntimeError("net torque map: every grid point failed")
    while not ok.all():
        new_ok = ok.copy()
        for i, j in zip(*np.nonzero(~ok)):
            nb = [(i + di, j + dj) for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))
                  if 0 <= i + di < ok.shape[0] and 0 <= j + dj < ok.shape[1] and ok[i + di, j + dj]]
            if nb:
                values[i, j] = np.mean([values[a, b] for a, b in nb])
                new_ok[i, j] = True
        ok = new_ok
    return values


def build_net_torque_map(chain: ArticulatedChain, config: SimConfig | None = None,
                         grid: MapGrid | None = None, seed: int = 0, max_iter: int = 20,
                         tol: float = 1e-12) -> NetTorqueMap:
    """Optimize, per grid point, the torque that lands the joint on its goal in one step.

    ``chain`` must have a single hinge (see :func:`single_joint_chain`). For
    every (angle difference, initial velocity) node the goal is the current
    angle plus the difference; the one-step angle-only loss
    ``(p_next - p_goal)^2`` is minimized by Gauss-Newton on the taped
    derivative of the landing angle. Gravity is excluded. Nodes that do not
    converge are marked invalid and filled from their neighbours.
    """
    from .rollout import fixed_chain_step

    if len(chain.joints) != 1:
        raise ValueError("net torque map needs a single-joint chain")
    grid = grid or MapGrid()
    base = config or SimConfig()
    cfg = SimConfig(dt=base.dt, gravity=(0.0, 0.0, 0.0), solver=base.solver,
                    iterations=base.iterations)
    joint = chain.joints[0]
    p0 = float(joint_angle(chain, joint))
    prog = fixed_chain_step(chain, cfg, loss=lambda ch, u, p, a: joint_angle(ch, ch.joints[0]),
                            n_aux=0)
    program = prog.program
    n_s = prog.n_state
    rng = np.random.default_rng(seed)
    dth, om = grid.axes()
    values = np.zeros((dth.size, om.size))
    ok = np.zeros_like(values, dtype=bool)
    jitter = rng.normal(0.0, 1e-3, size=values.shape)
    for b, w0 in enumerate(om):
        s0 = _set_joint_rate(chain, float(w0)).state_vector()
        for a, d in enumerate(dth):
            goal = p0 + d
            u = jitter[a, b]
            for _ in range(max_iter):
                vals = program.forward(prog.pack(s0, [u], [], []))
                landed = vals[program.out_idx][n_s]
                r = landed - goal
                if abs(r) < tol:
                    ok[a, b] = True
                    break
                seed_adj = np.zeros(n_s + 1)
                seed_adj[n_s] = 1.0
                slope = program.backward(vals, seed_adj)[prog.offsets[1]]
                if not np.isfinite(slope) or slope == 0.0:
                    break
                u = u - r / slope
            if ok[a, b] and np.isfinite(u):
                values[a, b] = u
            else:
                ok[a, b] = False
    invalid = int((~ok).sum())
    if invalid:
        log.warning("net torque map: %d grid points failed, filled from neighbours", invalid)
        values = _fill_invalid(values, ok)
    return NetTorqueMap(dth, om, values, invalid)


@dataclass
class ImpedanceRun:
    t: np.ndarray
    angle: np.ndarray
    rate: np.ndarray
    torque: np.ndarray
    external: np.ndarray
    goal: float
    windows: list

    def deflections(self, settle: float = 1.0) -> list:
        """Mean |angle - goal| over the last ``settle`` seconds of each window
        (NaN for a window the run does not reach)."""
        out = []
        for t0, t1, _ in self.windows:
            m = (self.t >= t1 - settle) & (self.t < t1)
            out.append(float(np.mean(np.abs(self.angle[m] - self.goal))) if m.any() else math.nan)
        return out

    def recovery_times(self, tol: float = 0.01) -> list:
        """Seconds after each release until the angle stays within ``tol`` of the
        goal (NaN for a window released after the run ends)."""
        out = []
        ends = [w[0] for w in self.windows[1:]] + [self.t[-1] + 1.0]
        for (t0, t1, _), nxt in zip(self.windows, ends):
            m = (self.t >= t1) & (self.t < nxt)
            ts, err = self.t[m], np.abs(self.angle[m] - self.goal)
            outside = np.nonzero(err > tol)[0]
            if not m.any():
                out.append(math.nan)
            elif outside.size == 0:
                out.append(0.0)
            elif outside[-1] == err.size - 1:
                out.append(float("inf"))
            else:
                out.append(float(ts[outside[-1] + 1] - t1))
        return out


def impedance_sim(chain: ArticulatedChain, params: ImpedanceParams, net_map: NetTorqueMap | None,
                  goal: float = -0.45, duration: float = 35.0,
                  windows=((5.0, 15.0, 5.0), (20.0, 30.0, 10.0)),
                  config: SimConfig | None = None) -> ImpedanceRun:
    """Closed-loop single-joint impedance control under scheduled external torque.

    Gravity is left out (compensated externally). ``windows`` lists
    ``(start, end, torque)`` intervals of external joint torque.
    """
    if len(chain.joints) != 1:
        raise ValueError("impedance simulation needs a single-joint chain")
    base = config or SimConfig()
    cfg = SimConfig(dt=base.dt, gravity=(0.0, 0.0, 0.0), solver=base.solver,
                    iterations=base.iterations)
    from .solver import step as sim_step
    n = int(round(duration / cfg.dt))
    t = np.arange(n + 1) * cfg.dt
    ang = np.empty(n + 1)
    rate = np.empty(n + 1)
    tau = np.zeros(n + 1)
    ext = np.zeros(n + 1)
    ch = chain
    for k in range(n + 1):
        ang[k] = float(joint_angle(ch, ch.joints[0]))
        rate[k] = float(joint_velocities(ch)[0])
        ext[k] = sum(m for t0, t1, m in windows if t0 <= t[k] < t1)
        tau[k] = impedance_torque(ang[k], rate[k], goal, 0.0, 0.0, params, net_map)
        if k < n:
            ch = sim_step(ch, cfg, [tau[k] + ext[k]])
    return ImpedanceRun(t, ang, rate, tau, ext, goal, [tuple(w) for w in windows])
