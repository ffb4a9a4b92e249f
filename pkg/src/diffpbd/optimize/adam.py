"""Adam and a small driver loop with divergence detection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class DivergenceError(RuntimeError):
    """Optimization blew up; ``history`` holds the losses seen so far."""

    def __init__(self, message, history=None, x=None):
        super().__init__(message)
        self.history = list(history or [])
        self.x = x


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    state: AdamState | None = field(default=None, repr=False)

    def reset(self, n=None):
        self.state = None if n is None else AdamState(np.zeros(n), np.zeros(n))

    def step(self, x, g):
        x = np.asarray(x, dtype=float)
        g = np.asarray(g, dtype=float)
        if self.state is None or self.state.m.shape != x.shape:
            self.reset(x.size)
            self.state.m = self.state.m.reshape(x.shape)
            self.state.v = self.state.v.reshape(x.shape)
        s = self.state
        s.t += 1
        s.m = self.beta1 * s.m + (1 - self.beta1) * g
        s.v = self.beta2 * s.v + (1 - self.beta2) * g * g
        mh = s.m / (1 - self.beta1 ** s.t)
        vh = s.v / (1 - self.beta2 ** s.t)
        return x - self.lr * mh / (np.sqrt(vh) + self.eps)


@dataclass
class DivergenceGuard:
    """Trips when the loss stays above ``factor`` x the first loss for
    ``patience`` consecutive iterations, or becomes non-finite."""
    factor: float = 1e3
    patience: int = 50
    initial: float | None = None
    count: int = 0

    def check(self, loss, history):
        if not math.isfinite(loss):
            raise DivergenceError(f"non-finite loss at iteration {len(history)}", history)
        if self.initial is None:
            self.initial = abs(loss)
            return
        if abs(loss) > self.factor * max(self.initial, 1e-300):
            self.count += 1
            if self.count >= self.patience:
                raise DivergenceError(
                    f"loss {loss:.6g} exceeded {self.factor:g} x initial {self.initial:.6g} "
                    f"for {self.patience} iterations", history)
        else:
            self.count = 0


@dataclass
class OptimResult:
    x: np.ndarray
    loss: float
    history: list
    iterations: int


def minimize_adam(objective: Callable, x0, lr=1e-2, iterations=100, bounds=None,
                  guard: DivergenceGuard | None = None, callback=None,
                  keep_best=False, decay=1.0) -> OptimResult:
    """Run Adam on ``objective(x) -> (loss, grad)``.

    ``bounds`` is ``(lo, hi)`` arrays (entries may be +-inf); iterates are
    clipped into them. The learning rate is multiplied by ``decay`` after
    every step. The returned loss is evaluated at the returned x.
    """
    x = np.array(x0, dtype=float)
    opt = Adam(lr=lr)
    guard = guard or DivergenceGuard()
    history = []
    best = (math.inf, x.copy())
    for it in range(iterations):
        loss, g = objective(x)
        loss = float(loss)
        history.append(loss)
        guard.check(loss, history)
        if loss < best[0]:
            best = (loss, x.copy())
        if callback is not None:
            callback(it, x, loss)
        x = opt.step(x, g)
        opt.lr *= decay
        if bounds is not None:
            x = np.clip(x, bounds[0], bounds[1])
    loss, _ = objective(x)
    loss = float(loss)
    history.append(loss)
    guard.check(loss, history)
    if keep_best and best[0] < loss:
        loss, x = best
    return OptimResult(x, loss, history, iterations)
