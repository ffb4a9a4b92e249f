"""Tape replay kernels.

Two interchangeable implementations of the same three kernels:

* ``forward``   -- evaluate a recorded op program on new input values
* ``backward``  -- reverse sweep over a program, partials recomputed from values
* ``sweep``     -- reverse sweep over explicit (parent, partial) edges

The numba path interprets the op list node by node. The numpy path groups
nodes by topological level and op kind and evaluates each group with one
vectorized call. Select with ``DIFFPBD_BACKEND=numpy`` (default: numba when
importable).
"""
import os

import numpy as np

# op codes; keep in sync with autodiff.OP_NAMES
INPUT, CONST = 0, 1
ADD, SUB, MUL, DIV, NEG = 2, 3, 4, 5, 6
ADDC, MULC, RSUBC, RDIVC, DIVC = 7, 8, 9, 10, 11
SQRT, SIN, COS, ASIN, ABS = 12, 13, 14, 15, 16
MIN, MAX, LT, SELECT = 17, 18, 19, 20
N_OPS = 21

_requested = os.environ.get("DIFFPBD_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"DIFFPBD_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

HAVE_NUMBA = numba is not None
BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"


# --------------------------------------------------------------------------
# numba kernels
# --------------------------------------------------------------------------

def _forward_py(op, a, b, c, imm, in_idx, x, vals):
    for k in range(in_idx.shape[0]):
        vals[in_idx[k]] = x[k]
    n = op.shape[0]
    for i in range(n):
        o = op[i]
        if o == INPUT:
            continue
        elif o == CONST:
            vals[i] = imm[i]
        elif o == ADD:
            vals[i] = vals[a[i]] + vals[b[i]]
        elif o == SUB:
            vals[i] = vals[a[i]] - vals[b[i]]
        elif o == MUL:
            vals[i] = vals[a[i]] * vals[b[i]]
        elif o == DIV:
            d = vals[b[i]]
            if d == 0.0:
                return i
            vals[i] = vals[a[i]] / d
        elif o == NEG:
            vals[i] = -vals[a[i]]
        elif o == ADDC:
            vals[i] = vals[a[i]] + imm[i]
        elif o == MULC:
            vals[i] = vals[a[i]] * imm[i]
        elif o == RSUBC:
            vals[i] = imm[i] - vals[a[i]]
        elif o == RDIVC:
            d = vals[a[i]]
            if d == 0.0:
                return i
            vals[i] = imm[i] / d
        elif o == DIVC:
            vals[i] = vals[a[i]] / imm[i]
        elif o == SQRT:
            s = vals[a[i]]
            if not s > 0.0:
                return i
            vals[i] = np.sqrt(s)
        elif o == SIN:
            vals[i] = np.sin(vals[a[i]])
        elif o == COS:
            vals[i] = np.cos(vals[a[i]])
        elif o == ASIN:
            s = vals[a[i]]
            if not (s >= -1.0 and s <= 1.0):
                return i
            vals[i] = np.arcsin(s)
        elif o == ABS:
            vals[i] = abs(vals[a[i]])
        elif o == MIN:
            vals[i] = min(vals[a[i]], vals[b[i]])
        elif o == MAX:
            vals[i] = max(vals[a[i]], vals[b[i]])
        elif o == LT:
            vals[i] = 1.0 if vals[a[i]] < vals[b[i]] else 0.0
        elif o == SELECT:
            vals[i] = vals[b[i]] if vals[a[i]] != 0.0 else vals[c[i]]
    return -1


def _backward_py(op, a, b, c, imm, vals, adj):
    n = op.shape[0]
    for i in range(n - 1, -1, -1):
        g = adj[i]
        if g == 0.0:
            continue
        o = op[i]
        if o <= CONST or o == LT:
            continue
        elif o == ADD:
            adj[a[i]] += g
            adj[b[i]] += g
        elif o == SUB:
            adj[a[i]] += g
            adj[b[i]] -= g
        elif o == MUL:
            adj[a[i]] += g * vals[b[i]]
            adj[b[i]] += g * vals[a[i]]
        elif o == DIV:
            d = vals[b[i]]
            adj[a[i]] += g / d
            adj[b[i]] -= g * vals[i] / d
        elif o == NEG:
            adj[a[i]] -= g
        elif o == ADDC:
            adj[a[i]] += g
        elif o == MULC:
            adj[a[i]] += g * imm[i]
        elif o == RSUBC:
            adj[a[i]] -= g
        elif o == RDIVC:
            adj[a[i]] -= g * vals[i] / vals[a[i]]
        elif o == DIVC:
            adj[a[i]] += g / imm[i]
        elif o == SQRT:
            adj[a[i]] += 0.5 * g / vals[i]
        elif o == SIN:
            adj[a[i]] += g * np.cos(vals[a[i]])
        elif o == COS:
            adj[a[i]] -= g * np.sin(vals[a[i]])
        elif o == ASIN:
            s = vals[a[i]]
            adj[a[i]] += g / np.sqrt(1.0 - s * s)
        elif o == ABS:
            s = vals[a[i]]
            if s > 0.0:
                adj[a[i]] += g
            elif s < 0.0:
                adj[a[i]] -= g
        elif o == MIN:
            if vals[a[i]] <= vals[b[i]]:
                adj[a[i]] += g
            else:
                adj[b[i]] += g
        elif o == MAX:
            if vals[a[i]] >= vals[b[i]]:
                adj[a[i]] += g
            else:
                adj[b[i]] += g
        elif o == SELECT:
            if vals[a[i]] != 0.0:
                adj[b[i]] += g
            else:
                adj[c[i]] += g


def _sweep_py(parents, partials, adj):
    n = parents.shape[0]
    for i in range(n - 1, -1, -1):
        g = adj[i]
        if g == 0.0:
            continue
        for k in range(3):
            p = parents[i, k]
            if p >= 0:
                adj[p] += g * partials[i, k]


if HAVE_NUMBA:
    _jit = numba.njit(cache=True, nogil=True)
    _forward_nb = _jit(_forward_py)
    _backward_nb = _jit(_backward_py)
    _sweep_nb = _jit(_sweep_py)


# --------------------------------------------------------------------------
# numpy fallback: level-grouped vectorized evaluation
# --------------------------------------------------------------------------

def levelize(op, a, b, c):
    """Group node indices by (topological level, op code).

    Returns a list of ``(op_code, index_array)`` in evaluation order.
    """
    n = op.shape[0]
    level = np.zeros(n, dtype=np.int64)
    for i in range(n):
        o = op[i]
        if o <= CONST:
            continue
        lv = level[a[i]]
        if b[i] >= 0 and level[b[i]] > lv:
            lv = level[b[i]]
        if c[i] >= 0 and level[c[i]] > lv:
            lv = level[c[i]]
        level[i] = lv + 1
    key = level * N_OPS + op
    order = np.argsort(key, kind="stable")
    keys = key[order]
    cuts = np.flatnonzero(np.diff(keys)) + 1
    groups = []
    for chunk in np.split(order, cuts):
        o = int(op[chunk[0]])
        if o == INPUT:
            continue
        groups.append((o, chunk))
    return groups


def _forward_np(groups, a, b, c, imm, in_idx, x, vals):
    vals[in_idx] = x
    with np.errstate(all="ignore"):
        for o, idx in groups:
            va = vals[a[idx]] if o != CONST else None
            if o == CONST:
                vals[idx] = imm[idx]
            elif o == ADD:
                vals[idx] = va + vals[b[idx]]
            elif o == SUB:
                vals[idx] = va - vals[b[idx]]
            elif o == MUL:
                vals[idx] = va * vals[b[idx]]
            elif o == DIV:
                d = vals[b[idx]]
                bad = d == 0.0
                if bad.any():
                    return int(idx[bad].min())
                vals[idx] = va / d
            elif o == NEG:
                vals[idx] = -va
            elif o == ADDC:
                vals[idx] = va + imm[idx]
            elif o == MULC:
                vals[idx] = va * imm[idx]
            elif o == RSUBC:
                vals[idx] = imm[idx] - va
            elif o == RDIVC:
                bad = va == 0.0
                if bad.any():
                    return int(idx[bad].min())
                vals[idx] = imm[idx] / va
            elif o == DIVC:
                vals[idx] = va / imm[idx]
            elif o == SQRT:
                bad = ~(va > 0.0)
                if bad.any():
                    return int(idx[bad].min())
                vals[idx] = np.sqrt(va)
            elif o == SIN:
                vals[idx] = np.sin(va)
            elif o == COS:
                vals[idx] = np.cos(va)
            elif o == ASIN:
                bad = ~((va >= -1.0) & (va <= 1.0))
                if bad.any():
                    return int(idx[bad].min())
                vals[idx] = np.arcsin(va)
            elif o == ABS:
                vals[idx] = np.abs(va)
            elif o == MIN:
                vals[idx] = np.minimum(va, vals[b[idx]])
            elif o == MAX:
                vals[idx] = np.maximum(va, vals[b[idx]])
            elif o == LT:
                vals[idx] = (va < vals[b[idx]]).astype(np.float64)
            elif o == SELECT:
                vals[idx] = np.where(va != 0.0, vals[b[idx]], vals[c[idx]])
    return -1


def _backward_np(groups, a, b, c, imm, vals, adj):
    add_at = np.add.at
    for o, idx in reversed(groups):
        if o == CONST or o == LT:
            continue
        g = adj[idx]
        live = g != 0.0
        if not live.any():
            continue
        idx = idx[live]
        g = g[live]
        ia = a[idx]
        if o == ADD:
            add_at(adj, ia, g)
            add_at(adj, b[idx], g)
        elif o == SUB:
            add_at(adj, ia, g)
            add_at(adj, b[idx], -g)
        elif o == MUL:
            add_at(adj, ia, g * vals[b[idx]])
            add_at(adj, b[idx], g * vals[ia])
        elif o == DIV:
            d = vals[b[idx]]
            add_at(adj, ia, g / d)
            add_at(adj, b[idx], -g * vals[idx] / d)
        elif o == NEG or o == RSUBC:
            add_at(adj, ia, -g)
        elif o == ADDC:
            add_at(adj, ia, g)
        elif o == MULC:
            add_at(adj, ia, g * imm[idx])
        elif o == RDIVC:
            add_at(adj, ia, -g * vals[idx] / vals[ia])
        elif o == DIVC:
            add_at(adj, ia, g / imm[idx])
        elif o == SQRT:
            add_at(adj, ia, 0.5 * g / vals[idx])
        elif o == SIN:
            add_at(adj, ia, g * np.cos(vals[ia]))
        elif o == COS:
            add_at(adj, ia, -g * np.sin(vals[ia]))
        elif o == ASIN:
            s = vals[ia]
            add_at(adj, ia, g / np.sqrt(1.0 - s * s))
        elif o == ABS:
            add_at(adj, ia, g * np.sign(vals[ia]))
        elif o == MIN:
            pick = vals[ia] <= vals[b[idx]]
            add_at(adj, np.where(pick, ia, b[idx]), g)
        elif o == MAX:
            pick = vals[ia] >= vals[b[idx]]
            add_at(adj, np.where(pick, ia, b[idx]), g)
        elif o == SELECT:
            pick = vals[ia] != 0.0
            add_at(adj, np.where(pick, b[idx], c[idx]), g)


def edge_levels(parents):
    """Topological levels for an explicit edge list, as index arrays."""
    n = parents.shape[0]
    level = np.zeros(n, dtype=np.int64)
    for i in range(n):
        lv = -1
        for k in range(3):
            p = parents[i, k]
            if p >= 0 and level[p] > lv:
                lv = level[p]
        level[i] = lv + 1
    order = np.argsort(level, kind="stable")
    cuts = np.flatnonzero(np.diff(level[order])) + 1
    return np.split(order, cuts)


def _sweep_np(levels, parents, partials, adj):
    for idx in reversed(levels):
        g = adj[idx]
        for k in range(3):
            p = parents[idx, k]
            m = (p >= 0) & (g != 0.0)
            if m.any():
                np.add.at(adj, p[m], g[m] * partials[idx[m], k])


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

def forward(prog_arrays, in_idx, x, vals, backend=None):
    """Fill ``vals`` in place. Returns the index of a failing node or -1."""
    op, a, b, c, imm, groups = prog_arrays
    if (backend or BACKEND) == "numba":
        return int(_forward_nb(op, a, b, c, imm, in_idx, x, vals))
    return _forward_np(groups(), a, b, c, imm, in_idx, x, vals)


def backward(prog_arrays, vals, adj, backend=None):
    op, a, b, c, imm, groups = prog_arrays
    if (backend or BACKEND) == "numba":
        _backward_nb(op, a, b, c, imm, vals, adj)
    else:
        _backward_np(groups(), a, b, c, imm, vals, adj)


def sweep(parents, partials, adj, levels=None, backend=None):
    if (backend or BACKEND) == "numba":
        _sweep_nb(parents, partials, adj)
    else:
        if levels is None:
            levels = edge_levels(parents)
        _sweep_np(levels, parents, partials, adj)
