"""Scalar tape reverse-mode automatic differentiation.

Every arithmetic operation on a :class:`Var` appends one node to its
:class:`Tape` with the value and the local partials. A recorded tape can be
frozen into a :class:`Program` and replayed on new inputs by the compiled
kernels in :mod:`diffpbd._backend`; rollouts chain replays of one step
program and differentiate them with :func:`checkpoint_rollout`.

Value-dependent control flow must go through :func:`where`, so that a traced
program stays valid for every input. ``bool(var)`` raises to catch plain
``if`` statements on traced values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _backend as kb
from ._backend import (ABS, ADD, ADDC, ASIN, CONST, COS, DIV, DIVC, INPUT, LT, MAX, MIN,
                       MUL, MULC, NEG, RDIVC, RSUBC, SELECT, SIN, SQRT, SUB)

OP_NAMES = {
    INPUT: "input", CONST: "const", ADD: "add", SUB: "sub", MUL: "mul", DIV: "div",
    NEG: "neg", ADDC: "addc", MULC: "mulc", RSUBC: "rsubc", RDIVC: "rdivc",
    DIVC: "divc", SQRT: "sqrt", SIN: "sin", COS: "cos", ASIN: "arcsin", ABS: "abs",
    MIN: "min", MAX: "max", LT: "lt", SELECT: "select",
}
OP_CODES = {name: code for code, name in OP_NAMES.items()}
_ARITY = {
    INPUT: 0, CONST: 0, ADD: 2, SUB: 2, MUL: 2, DIV: 2, NEG: 1, ADDC: 1, MULC: 1,
    RSUBC: 1, RDIVC: 1, DIVC: 1, SQRT: 1, SIN: 1, COS: 1, ASIN: 1, ABS: 1,
    MIN: 2, MAX: 2, LT: 2, SELECT: 3,
}


class DomainError(ArithmeticError):
    """An elementary op was evaluated outside its differentiable domain."""

    def __init__(self, op, node):
        self.op = op
        self.node = node
        super().__init__(f"{op}: argument outside domain at node {node}")


class TapeCapacityError(RuntimeError):
    pass


def _eval(op, x, y, z, k, node):
    """Primal value and local partials of one op."""
    if op == ADD:
        return x + y, 1.0, 1.0, 0.0
    if op == SUB:
        return x - y, 1.0, -1.0, 0.0
    if op == MUL:
        return x * y, y, x, 0.0
    if op == DIV:
        if y == 0.0:
            raise DomainError("div", node)
        v = x / y
        return v, 1.0 / y, -v / y, 0.0
    if op == NEG:
        return -x, -1.0, 0.0, 0.0
    if op == ADDC:
        return x + k, 1.0, 0.0, 0.0
    if op == MULC:
        return x * k, k, 0.0, 0.0
    if op == RSUBC:
        return k - x, -1.0, 0.0, 0.0
    if op == RDIVC:
        if x == 0.0:
            raise DomainError("rdivc", node)
        v = k / x
        return v, -v / x, 0.0, 0.0
    if op == DIVC:
        if k == 0.0:
            raise DomainError("divc", node)
        return x / k, 1.0 / k, 0.0, 0.0
    if op == SQRT:
        if not x > 0.0:
            raise DomainError("sqrt", node)
        v = math.sqrt(x)
        return v, 0.5 / v, 0.0, 0.0
    if op == SIN:
        return math.sin(x), math.cos(x), 0.0, 0.0
    if op == COS:
        return math.cos(x), -math.sin(x), 0.0, 0.0
    if op == ASIN:
        if not -1.0 <= x <= 1.0:
            raise DomainError("arcsin", node)
        d = 1.0 / math.sqrt(1.0 - x * x) if abs(x) < 1.0 else math.inf
        return math.asin(x), d, 0.0, 0.0
    if op == ABS:
        return abs(x), (1.0 if x > 0 else -1.0 if x < 0 else 0.0), 0.0, 0.0
    if op == MIN:
        return (x, 1.0, 0.0, 0.0) if x <= y else (y, 0.0, 1.0, 0.0)
    if op == MAX:
        return (x, 1.0, 0.0, 0.0) if x >= y else (y, 0.0, 1.0, 0.0)
    if op == LT:
        return (1.0 if x < y else 0.0), 0.0, 0.0, 0.0
    if op == SELECT:
        return (y, 0.0, 1.0, 0.0) if x != 0.0 else (z, 0.0, 0.0, 1.0)
    raise ValueError(f"unknown op {op}")


class Tape:
    """Append-only record of scalar operations, in topological order."""

    def __init__(self, capacity: int | None = None):
        self.capacity = capacity
        self.generation = 0
        self._clear()

    def _clear(self):
        self.op: list[int] = []
        self.parents: list[tuple[int, int, int]] = []
        self.imm: list[float] = []
        self.values: list[float] = []
        self.partials: list[tuple[float, float, float]] = []
        self.input_nodes: list[int] = []

    def __len__(self):
        return len(self.op)

    def reset(self):
        """Drop every node; Vars from earlier generations become invalid."""
        self.generation += 1
        self._clear()

    def _push(self, op, parents, imm, value, partials):
        node = len(self.op)
        if self.capacity is not None and node >= self.capacity:
            raise TapeCapacityError(f"tape capacity {self.capacity} exceeded")
        self.op.append(op)
        self.parents.append(parents)
        self.imm.append(imm)
        self.values.append(value)
        self.partials.append(partials)
        return Var(self, node, value)

    def var(self, value) -> Var:
        """A new independent input (leaf) variable."""
        v = self._push(INPUT, (-1, -1, -1), 0.0, float(value), (0.0, 0.0, 0.0))
        self.input_nodes.append(v.node)
        return v

    def vars(self, values) -> list[Var]:
        return [self.var(v) for v in np.ravel(values)]

    def const(self, value) -> Var:
        value = float(value)
        return self._push(CONST, (-1, -1, -1), value, value, (0.0, 0.0, 0.0))

    def record(self, op, inputs: Sequence[Var], imm: float = 0.0) -> Var:
        if isinstance(op, str):
            op = OP_CODES[op]
        if len(inputs) != _ARITY[op]:
            raise ValueError(f"{OP_NAMES[op]} takes {_ARITY[op]} inputs, got {len(inputs)}")
        for v in inputs:
            if v.tape is not self or v.generation != self.generation:
                raise ValueError("input does not belong to the active tape")
        vals = [v.value for v in inputs] + [0.0] * (3 - len(inputs))
        value, da, db, dc = _eval(op, vals[0], vals[1], vals[2], imm, len(self.op))
        ids = [v.node for v in inputs] + [-1] * (3 - len(inputs))
        return self._push(op, tuple(ids), imm, value, (da, db, dc))

    def arrays(self):
        """(op, a, b, c, imm, values, parents, partials) as numpy arrays."""
        op = np.asarray(self.op, dtype=np.int32)
        par = np.asarray(self.parents, dtype=np.int64).reshape(-1, 3)
        return (op, par[:, 0].copy(), par[:, 1].copy(), par[:, 2].copy(),
                np.asarray(self.imm, dtype=np.float64),
                np.asarray(self.values, dtype=np.float64), par,
                np.asarray(self.partials, dtype=np.float64).reshape(-1, 3))


def record(op, inputs: Sequence[Var], imm: float = 0.0) -> Var:
    """Record one elementary op on the tape of its inputs."""
    return inputs[0].tape.record(op, inputs, imm)


def backward(tape: Tape, loss: Var, backend=None) -> np.ndarray:
    """Adjoint of ``loss`` with respect to every node of ``tape``.

    One reverse sweep over the stored local partials; entry ``i`` is
    d loss / d node ``i``. Nodes that do not influence the loss get 0.
    """
    if loss.tape is not tape:
        raise ValueError("loss is not on this tape")
    n = loss.node + 1
    par = np.asarray(tape.parents[:n], dtype=np.int64).reshape(-1, 3)
    part = np.asarray(tape.partials[:n], dtype=np.float64).reshape(-1, 3)
    adj = np.zeros(n)
    adj[loss.node] = 1.0
    kb.sweep(par, part, adj, backend=backend)
    out = np.zeros(len(tape))
    out[:n] = adj
    return out


def grad(loss, wrt: Sequence[Var], backend=None) -> np.ndarray:
    """d loss / d v for each v in ``wrt`` (0 for a plain-float loss)."""
    if not isinstance(loss, Var):
        return np.zeros(len(wrt))
    adj = backward(loss.tape, loss, backend=backend)
    return np.array([adj[v.node] for v in wrt])


class Var:
    """A scalar recorded on a tape."""

    __slots__ = ("tape", "node", "value", "generation")
    __array_priority__ = 1000

    def __init__(self, tape: Tape, node: int, value: float):
        self.tape = tape
        self.node = node
        self.value = value
        self.generation = tape.generation

    def __repr__(self):
        return f"Var({self.value!r}, node={self.node})"

    def __bool__(self):
        raise TypeError("truth value of a traced Var is undefined; use autodiff.where")

    def _rec(self, op, others=(), imm=0.0):
        return self.tape.record(op, (self, *others), imm)

    def _lift(self, x):
        return x if isinstance(x, Var) else self.tape.const(x)

    def __add__(self, o):
        if isinstance(o, Var):
            return self._rec(ADD, (o,))
        return self if o == 0.0 else self._rec(ADDC, imm=float(o))

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, Var):
            return self._rec(SUB, (o,))
        return self if o == 0.0 else self._rec(ADDC, imm=-float(o))

    def __rsub__(self, o):
        if o == 0.0:
            return self._rec(NEG)
        return self._rec(RSUBC, imm=float(o))

    def __mul__(self, o):
        if isinstance(o, Var):
            return self._rec(MUL, (o,))
        if o == 0.0:
            return 0.0
        if o == 1.0:
            return self
        if o == -1.0:
            return self._rec(NEG)
        return self._rec(MULC, imm=float(o))

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Var):
            return self._rec(DIV, (o,))
        if o == 1.0:
            return self
        return self._rec(DIVC, imm=float(o))

    def __rtruediv__(self, o):
        if o == 0.0:
            if self.value == 0.0:
                raise DomainError("rdivc", len(self.tape))
            return 0.0
        return self._rec(RDIVC, imm=float(o))

    def __neg__(self):
        return self._rec(NEG)

    def __pos__(self):
        return self

    def __pow__(self, p):
        if p == 2:
            return self._rec(MUL, (self,))
        if p == 0.5:
            return self._rec(SQRT)
        raise NotImplementedError("only squares and square roots are supported")

    def __abs__(self):
        return self._rec(ABS)

    def __lt__(self, o):
        return self._rec(LT, (self._lift(o),))

    def __gt__(self, o):
        return self.tape.record(LT, (self._lift(o), self))

    def __le__(self, o):
        raise TypeError("use '<' on traced values")

    __ge__ = __le__


# --------------------------------------------------------------------------
# generic scalar functions (floats or Vars)
# --------------------------------------------------------------------------

def is_var(x) -> bool:
    return isinstance(x, Var)


def value(x) -> float:
    return x.value if isinstance(x, Var) else float(x)


def sqrt(x):
    return x._rec(SQRT) if isinstance(x, Var) else math.sqrt(x)


def sin(x):
    return x._rec(SIN) if isinstance(x, Var) else math.sin(x)


def cos(x):
    return x._rec(COS) if isinstance(x, Var) else math.cos(x)


def asin(x):
    return x._rec(ASIN) if isinstance(x, Var) else math.asin(x)


def fabs(x):
    return abs(x)


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def minimum(x, y):
    t = _tape_of(x, y)
    if t is None:
        return min(x, y)
    return t.record(MIN, (_as_var(t, x), _as_var(t, y)))


def maximum(x, y):
    t = _tape_of(x, y)
    if t is None:
        return max(x, y)
    return t.record(MAX, (_as_var(t, x), _as_var(t, y)))


def clip(x, lo, hi):
    return minimum(maximum(x, lo), hi)


def _as_var(tape, x):
    return x if isinstance(x, Var) else tape.const(x)


def where(cond, a, b):
    """``a`` where ``cond`` holds else ``b``; only the chosen branch gets gradient."""
    if not isinstance(cond, Var):
        return a if cond else b
    if not isinstance(a, Var) and not isinstance(b, Var) and a == b:
        return a
    t = cond.tape
    return t.record(SELECT, (cond, _as_var(t, a), _as_var(t, b)))


# --------------------------------------------------------------------------
# compiled programs
# --------------------------------------------------------------------------

class Program:
    """A frozen op list that can be replayed on new input values."""

    def __init__(self, op, a, b, c, imm, in_idx, out_idx):
        self.op = np.ascontiguousarray(op, dtype=np.int32)
        self.a = np.ascontiguousarray(a, dtype=np.int64)
        self.b = np.ascontiguousarray(b, dtype=np.int64)
        self.c = np.ascontiguousarray(c, dtype=np.int64)
        self.imm = np.ascontiguousarray(imm, dtype=np.float64)
        self.in_idx = np.ascontiguousarray(in_idx, dtype=np.int64)
        self.out_idx = np.ascontiguousarray(out_idx, dtype=np.int64)
        self._groups = None

    @property
    def n_nodes(self) -> int:
        return int(self.op.shape[0])

    @property
    def n_inputs(self) -> int:
        return int(self.in_idx.shape[0])

    @property
    def n_outputs(self) -> int:
        return int(self.out_idx.shape[0])

    def _levels(self):
        if self._groups is None:
            self._groups = kb.levelize(self.op, self.a, self.b, self.c)
        return self._groups

    def _arrays(self):
        return (self.op, self.a, self.b, self.c, self.imm, self._levels)

    @classmethod
    def from_tape(cls, tape: Tape, inputs: Sequence[Var], outputs: Sequence, prune=True):
        outs = [o if isinstance(o, Var) else tape.const(o) for o in outputs]
        op, a, b, c, imm, _, _, _ = tape.arrays()
        in_nodes = np.array([v.node for v in inputs], dtype=np.int64)
        out_nodes = np.array([o.node for o in outs], dtype=np.int64)
        for v in inputs:
            if op[v.node] != INPUT:
                raise ValueError("program inputs must be tape input nodes")
        if not prune:
            return cls(op, a, b, c, imm, in_nodes, out_nodes)
        keep = np.zeros(len(op), dtype=bool)
        keep[out_nodes] = True
        keep[in_nodes] = True
        for i in range(len(op) - 1, -1, -1):
            if keep[i]:
                for p in (a[i], b[i], c[i]):
                    if p >= 0:
                        keep[p] = True
        remap = np.full(len(op), -1, dtype=np.int64)
        remap[keep] = np.arange(int(keep.sum()))

        def re(x):
            x = x[keep]
            return np.where(x >= 0, remap[np.maximum(x, 0)], -1)

        return cls(op[keep], re(a), re(b), re(c), imm[keep], remap[in_nodes], remap[out_nodes])

    def forward(self, x, backend=None) -> np.ndarray:
        """Values of every node for inputs ``x``."""
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.shape != (self.n_inputs,):
            raise ValueError(f"expected {self.n_inputs} inputs, got shape {x.shape}")
        vals = np.zeros(self.n_nodes)
        bad = kb.forward(self._arrays(), self.in_idx, x, vals, backend=backend)
        if bad >= 0:
            raise DomainError(OP_NAMES[int(self.op[bad])], bad)
        return vals

    def __call__(self, x, backend=None) -> np.ndarray:
        return self.forward(x, backend)[self.out_idx]

    def outputs(self, vals) -> np.ndarray:
        return vals[self.out_idx]

    def backward(self, vals, out_adj, backend=None) -> np.ndarray:
        """Vector-Jacobian product: adjoints of the inputs."""
        adj = np.zeros(self.n_nodes)
        np.add.at(adj, self.out_idx, np.asarray(out_adj, dtype=np.float64))
        kb.backward(self._arrays(), vals, adj, backend=backend)
        return adj[self.in_idx]


def trace(fn: Callable, x0, capacity: int | None = None) -> Program:
    """Record ``fn(list_of_vars) -> list_of_outputs`` at ``x0`` into a Program."""
    tape = Tape(capacity)
    xs = tape.vars(x0)
    out = fn(xs)
    if isinstance(out, (Var, float, int)):
        out = [out]
    return Program.from_tape(tape, xs, list(out))


# --------------------------------------------------------------------------
# rollouts
# --------------------------------------------------------------------------

@dataclass
class Checkpoint:
    """State values at a timestep boundary (no tape nodes)."""
    step: int
    state: np.ndarray


class StepProgram:
    """One traced simulation step.

    ``fn(state, control, params, aux) -> (next_state, step_loss)`` with each
    argument a list of generic scalars. ``aux`` carries per-step data that is
    not optimized (targets, scheduled inputs).
    """

    def __init__(self, fn, n_state, n_control, n_param, n_aux, example=None):
        self.sizes = (n_state, n_control, n_param, n_aux)
        self.n_state = n_state
        total = sum(self.sizes)
        x0 = np.zeros(total) if example is None else np.asarray(example, dtype=float)
        offs = np.cumsum((0,) + self.sizes)

        def flat(xs):
            s, u, p, a = (xs[offs[i]:offs[i + 1]] for i in range(4))
            nxt, loss = fn(s, u, p, a)
            if len(nxt) != n_state:
                raise ValueError(f"step returned {len(nxt)} state entries, expected {n_state}")
            return list(nxt) + [loss]

        self.program = trace(flat, x0)
        self.offsets = offs

    @property
    def n_nodes(self):
        return self.program.n_nodes

    def pack(self, s, u, p, a):
        return np.concatenate([np.ravel(s), np.ravel(u), np.ravel(p), np.ravel(a)]).astype(float)


class TerminalProgram:
    """Traced ``fn(state, params) -> scalar``."""

    def __init__(self, fn, n_state, n_param, example=None):
        self.n_state, self.n_param = n_state, n_param
        x0 = np.zeros(n_state + n_param) if example is None else np.asarray(example, float)
        self.program = trace(lambda xs: [fn(xs[:n_state], xs[n_state:])], x0)


@dataclass
class RolloutResult:
    loss: float
    states: np.ndarray
    step_losses: np.ndarray
    grad_state0: np.ndarray | None = None
    grad_controls: np.ndarray | None = None
    grad_params: np.ndarray | None = None
    peak_nodes: int = 0
    checkpoints: list = field(default_factory=list)


def _as_2d(x, rows, cols):
    x = np.asarray(x, dtype=float)
    if cols == 0:
        return np.zeros((rows, 0))
    if x.ndim == 1 and rows == 1 and x.shape[0] == cols:
        x = x[None, :]
    return np.broadcast_to(x, (rows, cols)) if x.ndim == 1 else x


def simulate(step: StepProgram, state0, controls, params, aux, horizon=None, backend=None):
    """Forward-only rollout. Returns (states (T+1, S), step losses (T,))."""
    n_s, n_u, n_p, n_a = step.sizes
    T = horizon if horizon is not None else len(controls)
    U = _as_2d(controls, T, n_u)
    A = _as_2d(aux, T, n_a)
    p = np.ravel(params).astype(float)
    states = np.empty((T + 1, n_s))
    states[0] = state0
    losses = np.empty(T)
    prog = step.program
    for t in range(T):
        vals = prog.forward(step.pack(states[t], U[t], p, A[t]), backend)
        out = vals[prog.out_idx]
        states[t + 1] = out[:n_s]
        losses[t] = out[n_s]
    return states, losses


def checkpoint_rollout(step: StepProgram, state0, controls, params, aux, horizon=None,
                       segment=None, terminal: TerminalProgram | None = None,
                       backend=None) -> RolloutResult:
    """Loss and gradients of a rollout, recomputing one segment at a time.

    Only states at segment boundaries are kept during the forward pass; the
    backward pass replays each segment from its checkpoint, so at most
    ``segment`` step tapes are alive at once. ``segment=None`` keeps every
    step (a single unsegmented tape).
    """
    n_s, n_u, n_p, n_a = step.sizes
    T = horizon if horizon is not None else len(controls)
    U = _as_2d(controls, T, n_u) if T else np.zeros((0, n_u))
    A = _as_2d(aux, T, n_a) if T else np.zeros((0, n_a))
    p = np.ravel(params).astype(float)
    seg = T if (segment is None or segment >= T) else int(segment)
    seg = max(seg, 1)
    prog = step.program

    states = np.empty((T + 1, n_s))
    states[0] = state0
    losses = np.zeros(T)
    checkpoints = [Checkpoint(0, states[0].copy())]
    kept = {}
    for t in range(T):
        vals = prog.forward(step.pack(states[t], U[t], p, A[t]), backend)
        out = vals[prog.out_idx]
        states[t + 1] = out[:n_s]
        losses[t] = out[n_s]
        if seg == T:
            kept[t] = vals
        elif (t + 1) % seg == 0 and t + 1 < T:
            checkpoints.append(Checkpoint(t + 1, states[t + 1].copy()))

    total = float(losses.sum())
    g_state = np.zeros(n_s)
    g_p = np.zeros(n_p)
    peak = 0
    if terminal is not None:
        tprog = terminal.program
        tvals = tprog.forward(np.concatenate([states[T], p]), backend)
        total += float(tprog.outputs(tvals)[0])
        g = tprog.backward(tvals, [1.0], backend)
        g_state += g[:n_s]
        g_p += g[n_s:]
        peak = tprog.n_nodes

    g_u = np.zeros((T, n_u))
    seed = np.zeros(n_s + 1)
    for cp in reversed(checkpoints):
        t0, t1 = cp.step, min(cp.step + seg, T)
        if seg == T:
            seg_vals = [kept[t] for t in range(t0, t1)]
        else:
            seg_vals = []
            s = cp.state
            for t in range(t0, t1):
                vals = prog.forward(step.pack(s, U[t], p, A[t]), backend)
                seg_vals.append(vals)
                s = vals[prog.out_idx][:n_s]
        peak = max(peak, len(seg_vals) * prog.n_nodes)
        for t in range(t1 - 1, t0 - 1, -1):
            seed[:n_s] = g_state
            seed[n_s] = 1.0
            g = prog.backward(seg_vals[t - t0], seed, backend)
            o = step.offsets
            g_state = g[o[0]:o[1]].copy()
            g_u[t] = g[o[1]:o[2]]
            g_p += g[o[2]:o[3]]
        del seg_vals

    return RolloutResult(total, states, losses, g_state, g_u, g_p, peak, checkpoints)
