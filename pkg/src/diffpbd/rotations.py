"""Vector, matrix and quaternion helpers over generic scalars.

Vectors are 3-tuples, matrices 9-tuples in row-major order, quaternions
Hamilton scalar-first ``(w, x, y, z)``. Every function works on plain floats
and on :class:`~diffpbd.autodiff.Var` entries alike.
"""
from __future__ import annotations

from .autodiff import sqrt, cos, sin

ZERO3 = (0.0, 0.0, 0.0)
IDENTITY_QUAT = (1.0, 0.0, 0.0, 0.0)
IDENTITY3 = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)


def vadd(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def vsub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def vscale(a, s):
    return (a[0] * s, a[1] * s, a[2] * s)


def vneg(a):
    return (-a[0], -a[1], -a[2])


def dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def cross(a, b):
    return (a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0])


def norm(a):
    return sqrt(dot(a, a))


def normalize(a):
    n = norm(a)
    return (a[0] / n, a[1] / n, a[2] / n)


def skew(v):
    """Matrix with ``skew(v) @ u == cross(v, u)``."""
    return (0.0, -v[2], v[1],
            v[2], 0.0, -v[0],
            -v[1], v[0], 0.0)


def mat_vec(m, v):
    return (m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
            m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
            m[6] * v[0] + m[7] * v[1] + m[8] * v[2])


def mat_mul(a, b):
    return tuple(a[3 * i] * b[j] + a[3 * i + 1] * b[3 + j] + a[3 * i + 2] * b[6 + j]
                 for i in range(3) for j in range(3))


def transpose(m):
    return (m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8])


def sym_from6(ixx, iyy, izz, ixy=0.0, ixz=0.0, iyz=0.0):
    return (ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz)


def is_diagonal(m):
    return all(not hasattr(m[k], "tape") and m[k] == 0.0 for k in (1, 2, 3, 5, 6, 7))


def inv3(m):
    """Inverse of a 3x3 matrix (cofactor form; diagonal fast path)."""
    if is_diagonal(m):
        return (1.0 / m[0], 0.0, 0.0, 0.0, 1.0 / m[4], 0.0, 0.0, 0.0, 1.0 / m[8])
    a, b, c, d, e, f, g, h, i = m
    c00 = e * i - f * h
    c01 = f * g - d * i
    c02 = d * h - e * g
    det = a * c00 + b * c01 + c * c02
    return (c00 / det, (c * h - b * i) / det, (b * f - c * e) / det,
            c01 / det, (a * i - c * g) / det, (c * d - a * f) / det,
            c02 / det, (b * g - a * h) / det, (a * e - b * d) / det)


# ----------------------------------------------------------------- quaternions

def quat_mul(a, b):
    """Hamilton product ``a ⊗ b``."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw)


def quat_conj(q):
    return (q[0], -q[1], -q[2], -q[3])


def quat_norm(q):
    return sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])


def quat_normalize(q):
    n = quat_norm(q)
    return (q[0] / n, q[1] / n, q[2] / n, q[3] / n)


def quat_to_rot(q):
    """Rotation matrix of a unit quaternion."""
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return (1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy),
            2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx),
            2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy))


def rotate(q, v):
    """R(q) v for unit q, without forming the matrix."""
    w = q[0]
    u = (q[1], q[2], q[3])
    t = vscale(cross(u, v), 2.0)
    return vadd(vadd(v, vscale(t, w)), cross(u, t))


def rotate_inv(q, v):
    """R(q)^T v."""
    return rotate(quat_conj(q), v)


def quat_from_axis_angle(axis, angle):
    h = 0.5 * angle
    s = sin(h)
    return (cos(h), axis[0] * s, axis[1] * s, axis[2] * s)


def apply_rotvec(q, dphi):
    """First-order left update ``q + ½[0, dφ] ⊗ q``, renormalized."""
    dq = quat_mul((0.0, dphi[0], dphi[1], dphi[2]), q)
    return quat_normalize((q[0] + 0.5 * dq[0], q[1] + 0.5 * dq[1],
                           q[2] + 0.5 * dq[2], q[3] + 0.5 * dq[3]))


def world_inertia(q, inertia_local):
    """R I Rᵀ."""
    r = quat_to_rot(q)
    return mat_mul(mat_mul(r, inertia_local), transpose(r))


def apply_world_tensor(q, local, v):
    """(R M Rᵀ) v computed as R (M (Rᵀ v))."""
    return rotate(q, mat_vec(local, rotate_inv(q, v)))
