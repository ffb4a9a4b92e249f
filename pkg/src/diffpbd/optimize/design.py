"""Link-length design of a double pendulum tracking a circle under a
task-space stiffness controller, trading tracking error against work."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import sqrt, where
from ..chain import SimConfig, pendulum_chain
from ..control import StiffnessParams, stiffness_torque
from ..kinematics import end_effector, joint_angles, wrap_angle
from ..rollout import InitialState, param_rollout
from ..rotations import dot, vsub

log = logging.getLogger(__name__)

MIN_LENGTH = 0.01


@dataclass
class CircleSpec:
    """Circle in the x-z plane traversed at constant speed."""
    center: tuple = (0.0, 0.0, -2.7)
    radius: float = 0.3
    period: float = 2.0
    phase: float = -math.pi / 2  # start at the bottom point

    def at(self, t):
        a = self.phase + 2 * math.pi * t / self.period
        w = 2 * math.pi / self.period
        cx, cy, cz = self.center
        pos = (cx + self.radius * math.cos(a), cy, cz + self.radius * math.sin(a))
        vel = (-self.radius * w * math.sin(a), 0.0, self.radius * w * math.cos(a))
        return pos, vel


@dataclass
class DesignConfig:
    circle: CircleSpec = field(default_factory=CircleSpec)
    controller: StiffnessParams = field(default_factory=StiffnessParams)
    work_weight: float = 25.0
    steps: int = 200
    density: float = 2.0  # kg per metre of rod
    radius: float = 0.05
    sim: SimConfig = field(default_factory=SimConfig)


@dataclass
class DesignEval:
    lengths: np.ndarray
    loss: float
    work: float
    tracking: float
    grad: np.ndarray
    tip: np.ndarray = None
    desired: np.ndarray = None
    angles: np.ndarray = None
    power: np.ndarray = None


@dataclass
class DesignResult:
    initial: DesignEval
    optimal: DesignEval
    history: list
    lengths_history: list


class DesignProblem:
    """Closed-loop rollout as a differentiable function of (l1, l2).

    Each step applies the stiffness controller, advances the simulation and
    adds ``||p_ee - p_des|| + work_weight * (theta_after - theta_before) . tau``.
    """

    def __init__(self, cfg: DesignConfig):
        self.cfg = cfg
        dt = cfg.sim.dt
        self.desired = [cfg.circle.at(t * dt) for t in range(cfg.steps + 1)]
        self.aux = np.array([list(p) + list(v) + list(self.desired[t + 1][0])
                             for t, (p, v) in enumerate(self.desired[:-1])])

        def build(p):
            l1, l2 = p[0], p[1]
            return pendulum_chain([l1, l2], [cfg.density * l1, cfg.density * l2],
                                  radius=cfg.radius)

        self.build = build
        self.init = InitialState(build, [3.0, 0.1])
        self.prog = self._trace()

    def _trace(self):
        from ..autodiff import StepProgram
        from ..solver import step as sim_step
        cfg = self.cfg

        def fn(s, u, p, a):
            ch = self.build(p).with_state(s)
            tau = stiffness_torque(ch, a[0:3], a[3:6], cfg.controller)
            before = joint_angles(ch)
            nxt = sim_step(ch, cfg.sim, tau)
            after = joint_angles(nxt)
            tip, _ = end_effector(nxt)
            err = vsub(tip, a[6:9])
            e2 = dot(err, err)
            ok = e2 > 1e-30
            dist = where(ok, sqrt(where(ok, e2, 1.0)), 0.0)
            work = 0.0
            for b, c, t in zip(before, after, tau):
                work = work + wrap_angle(c - b) * t
            return nxt.state(), dist + cfg.work_weight * work

        proto = self.build([3.0, 0.1])
        n_state = proto.n_state
        example = np.concatenate([proto.state_vector(), [3.0, 0.1], self.aux[0]])
        return StepProgram(fn, n_state, 0, 2, 9, example=example)

    def evaluate(self, lengths) -> DesignEval:
        lengths = np.asarray(lengths, float)
        T = self.cfg.steps
        res = param_rollout(self.prog, self.init, np.zeros((T, 0)), lengths, self.aux)
        ev = DesignEval(lengths.copy(), res.loss, 0.0, 0.0, res.grad_params)
        self._detail(ev, res.states)
        return ev

    def _detail(self, ev, states):
        cfg = self.cfg
        proto = self.build(list(ev.lengths))
        tips, angs, taus = [], [], []
        for t in range(len(states)):
            ch = proto.with_state(list(states[t]))
            tips.append([float(v) for v in end_effector(ch)[0]])
            angs.append([float(v) for v in joint_angles(ch)])
            if t < len(states) - 1:
                p, v = self.desired[t]
                taus.append([float(v) for v in stiffness_torque(ch, p, v, cfg.controller)])
        tips, angs, taus = np.array(tips), np.array(angs), np.array(taus)
        dw = _wrap(np.diff(angs, axis=0)) * taus
        ev.work = float(dw.sum())
        ev.power = dw / cfg.sim.dt
        ev.tip = tips
        ev.angles = angs
        ev.desired = np.array([p for p, _ in self.desired])
        ev.tracking = float(np.linalg.norm(tips[1:] - ev.desired[1:], axis=1).sum())


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def design_pendulum(initial=(3.0, 0.1), cfg: DesignConfig | None = None, iterations=40,
                    step0=0.05, tol=1e-9, callback=None) -> DesignResult:
    """Gradient descent with backtracking line search on the link lengths."""
    cfg = cfg or DesignConfig()
    prob = DesignProblem(cfg)
    x = np.asarray(initial, float)
    cur = prob.evaluate(x)
    first = cur
    history = [cur.loss]
    xs = [x.copy()]
    step = step0
    for it in range(iterations):
        g = cur.grad
        gn = float(np.linalg.norm(g))
        if gn < tol:
            break
        d = -g / gn
        accepted = False
        while step > 1e-6:
            trial = x + step * d
            if np.any(trial < MIN_LENGTH):
                log.warning("link length below %.2g m clamped", MIN_LENGTH)
                trial = np.maximum(trial, MIN_LENGTH)
            ev = prob.evaluate(trial)
            if ev.loss < cur.loss - 1e-4 * step * gn:
                x, cur = trial, ev
                accepted = True
                step *= 1.5
                break
            step *= 0.5
        history.append(cur.loss)
        xs.append(x.copy())
        if callback is not None:
            callback(it, x, cur)
        if not accepted:
            break
    return DesignResult(first, cur, history, xs)
