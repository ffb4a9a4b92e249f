"""Traced simulation steps for fast, differentiable rollouts.

A step is recorded once on a tape and replayed by the compiled kernels for
every timestep, so a rollout costs one replay per step instead of one Python
trace per step.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .autodiff import StepProgram, checkpoint_rollout, simulate, trace
from .chain import ArticulatedChain, SimConfig
from .solver import step


def chain_step(build: Callable, config: SimConfig, n_control: int, n_param: int = 0,
               n_aux: int = 0, loss: Callable | None = None, example_params=None,
               example_state=None) -> StepProgram:
    """Trace one PBD step of the chain returned by ``build(params)``.

    ``loss(chain_after, controls, params, aux)`` gives the per-step loss
    (0 when omitted). Controls are per-joint motor torques unless ``torque``
    is supplied inside ``build``'s chain logic.
    """
    p0 = np.zeros(n_param) if example_params is None else np.asarray(example_params, float)
    proto = build(list(p0))
    s0 = proto.state_vector() if example_state is None else np.asarray(example_state, float)
    n_state = proto.n_state

    def fn(s, u, p, a):
        ch = build(list(p)).with_state(s)
        nxt = step(ch, config, list(u) if n_control else None)
        l = loss(nxt, u, p, a) if loss is not None else 0.0
        return nxt.state(), l

    example = np.concatenate([s0, np.zeros(n_control), p0, np.zeros(n_aux)])
    return StepProgram(fn, n_state, n_control, n_param, n_aux, example=example)


def fixed_chain_step(chain: ArticulatedChain, config: SimConfig, loss=None, n_aux=0):
    return chain_step(lambda p: chain, config, len(chain.joints), 0, n_aux, loss,
                      example_state=chain.state_vector())


def rollout_states(prog: StepProgram, state0, controls, params=(), aux=None, horizon=None,
                   backend=None):
    T = horizon if horizon is not None else len(controls)
    aux = np.zeros((T, prog.sizes[3])) if aux is None else aux
    return simulate(prog, state0, controls, params, aux, T, backend)


class InitialState:
    """Traced map from parameters to the initial state vector."""

    def __init__(self, build: Callable, example_params):
        p0 = np.asarray(example_params, float)
        self.program = trace(lambda xs: build(list(xs)).state(), p0)

    def __call__(self, params):
        return self.program(np.asarray(params, float))

    def vjp(self, params, g_state):
        vals = self.program.forward(np.asarray(params, float))
        return self.program.backward(vals, g_state)


def param_rollout(prog: StepProgram, init: InitialState, controls, params, aux=None,
                  segment=None, terminal=None, backend=None):
    """Rollout whose initial state is ``init(params)``; parameter gradients
    include the path through the initial state."""
    T = len(controls)
    aux = np.zeros((T, prog.sizes[3])) if aux is None else aux
    s0 = init(params)
    res = checkpoint_rollout(prog, s0, controls, params, aux, segment=segment,
                             terminal=terminal, backend=backend)
    res.grad_params = res.grad_params + init.vjp(params, res.grad_state0)
    return res


__all__ = ["InitialState", "chain_step", "checkpoint_rollout", "fixed_chain_step", "param_rollout",
           "rollout_states"]
