"""Closed-form planar Lagrangian dynamics for 1- and 2-link chains.

Used as an independent reference: static gravity torques, forward dynamics
integrated with RK4, energies and mechanical work. Angles are relative (each
joint measured from its parent link), zero hanging straight down, positive
about the hinge axis so that the tip moves to -x.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class LagrangianChain:
    lengths: tuple
    com: tuple
    masses: tuple
    inertias: tuple  # about each COM, around the hinge axis
    gravity: float = 9.8

    def __post_init__(self):
        n = len(self.lengths)
        if not 1 <= n <= 2:
            raise ValueError("closed-form oracle supports 1 or 2 links")
        for name in ("com", "masses", "inertias"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} must have {n} entries")
        if min(self.masses) <= 0 or min(self.lengths) <= 0:
            raise ValueError("masses and lengths must be positive")

    @property
    def n(self):
        return len(self.lengths)

    @classmethod
    def uniform_rods(cls, lengths, masses=None, radius=0.05, gravity=9.8):
        """Matches :func:`diffpbd.chain.pendulum_chain` rods."""
        masses = [1.0] * len(lengths) if masses is None else list(masses)
        inert = [m * l * l / 12.0 + m * radius * radius / 4.0 for l, m in zip(lengths, masses)]
        return cls(tuple(lengths), tuple(0.5 * l for l in lengths), tuple(masses), tuple(inert), gravity)


def mass_matrix(ch: LagrangianChain, p) -> np.ndarray:
    m, lc, I, l = ch.masses, ch.com, ch.inertias, ch.lengths
    if ch.n == 1:
        return np.array([[I[0] + m[0] * lc[0] ** 2]])
    c2 = np.cos(p[1])
    m22 = I[1] + m[1] * lc[1] ** 2
    m12 = m22 + m[1] * l[0] * lc[1] * c2
    m11 = I[0] + m[0] * lc[0] ** 2 + I[1] + m[1] * (l[0] ** 2 + lc[1] ** 2 + 2 * l[0] * lc[1] * c2)
    return np.array([[m11, m12], [m12, m22]])


def coriolis(ch: LagrangianChain, p, pd) -> np.ndarray:
    """C(p, pd) pd."""
    if ch.n == 1:
        return np.zeros(1)
    h = ch.masses[1] * ch.lengths[0] * ch.com[1] * np.sin(p[1])
    return np.array([-h * (2 * pd[0] * pd[1] + pd[1] ** 2), h * pd[0] ** 2])


def gravity_torque(ch: LagrangianChain, p) -> np.ndarray:
    """dV/dp: the static torque holding the pose."""
    m, lc, l, g = ch.masses, ch.com, ch.lengths, ch.gravity
    if ch.n == 1:
        return np.array([m[0] * g * lc[0] * np.sin(p[0])])
    s1, s12 = np.sin(p[0]), np.sin(p[0] + p[1])
    g2 = m[1] * g * lc[1] * s12
    return np.array([m[0] * g * lc[0] * s1 + m[1] * g * l[0] * s1 + g2, g2])


def potential_energy(ch: LagrangianChain, p) -> float:
    m, lc, l, g = ch.masses, ch.com, ch.lengths, ch.gravity
    v = -m[0] * g * lc[0] * np.cos(p[0])
    if ch.n == 2:
        v -= m[1] * g * (l[0] * np.cos(p[0]) + lc[1] * np.cos(p[0] + p[1]))
    return float(v)


def kinetic_energy(ch: LagrangianChain, p, pd) -> float:
    pd = np.asarray(pd, float)
    return float(0.5 * pd @ mass_matrix(ch, p) @ pd)


def energy(ch: LagrangianChain, p, pd) -> float:
    return kinetic_energy(ch, p, pd) + potential_energy(ch, p)


def forward_dynamics(ch: LagrangianChain, p, pd, tau=None) -> np.ndarray:
    p, pd = np.asarray(p, float), np.asarray(pd, float)
    tau = np.zeros(ch.n) if tau is None else np.asarray(tau, float)
    rhs = tau - coriolis(ch, p, pd) - gravity_torque(ch, p)
    return np.linalg.solve(mass_matrix(ch, p), rhs)


def rk4(ch: LagrangianChain, p0, pd0, duration, dt=1e-4, tau_fn=None, sample_every=None):
    """Integrate; returns times, angles, rates sampled every ``sample_every`` steps."""
    n_steps = int(round(duration / dt))
    every = sample_every or 1
    y = np.concatenate([np.asarray(p0, float), np.asarray(pd0, float)])
    n = ch.n

    def f(t, y):
        tau = None if tau_fn is None else tau_fn(t, y[:n], y[n:])
        return np.concatenate([y[n:], forward_dynamics(ch, y[:n], y[n:], tau)])

    ts, ps, pds = [0.0], [y[:n].copy()], [y[n:].copy()]
    for k in range(n_steps):
        t = k * dt
        k1 = f(t, y)
        k2 = f(t + dt / 2, y + dt / 2 * k1)
        k3 = f(t + dt / 2, y + dt / 2 * k2)
        k4 = f(t + dt, y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if (k + 1) % every == 0:
            ts.append((k + 1) * dt)
            ps.append(y[:n].copy())
            pds.append(y[n:].copy())
    return np.array(ts), np.array(ps), np.array(pds)


@dataclass
class WorkAccumulator:
    """Running sum of angle increment times applied torque, per joint."""
    n_joints: int
    total: np.ndarray = None
    power: list = field(default_factory=list)

    def __post_init__(self):
        if self.total is None:
            self.total = np.zeros(self.n_joints)

    def add(self, dtheta, tau, dt=None):
        w = np.asarray(dtheta, float) * np.asarray(tau, float)
        self.total = self.total + w
        self.power.append(w / dt if dt else w)
        return w


def work_done(angles, torques, dt=None):
    """Per-joint work sum_t (theta_t - theta_{t-1}) tau_t and the power series.

    ``angles`` has one more row than ``torques`` (states before and after
    each torque). Returns (work per joint, per-step power per joint); power
    is per-step work divided by ``dt`` when given.
    """
    a = np.asarray(angles, float)
    u = np.asarray(torques, float)
    if a.ndim == 1:
        a = a[:, None]
    if u.ndim == 1:
        u = u[:, None]
    if a.shape[0] != u.shape[0] + 1 or a.shape[1] != u.shape[1]:
        raise ValueError(f"angles {a.shape} and torques {u.shape} are not aligned")
    per_step = np.diff(a, axis=0) * u
    power = per_step / dt if dt else per_step
    return per_step.sum(axis=0), power
