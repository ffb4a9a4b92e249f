import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diffpbd.autodiff import Tape, grad
from diffpbd.rotations import (IDENTITY3, apply_rotvec, apply_world_tensor, cross, inv3,
                               mat_mul, quat_conj, quat_from_axis_angle, quat_mul, quat_norm,
                               quat_normalize, quat_to_rot, rotate, rotate_inv, skew, sym_from6,
                               world_inertia)

finite = st.floats(-2.0, 2.0, allow_nan=False)
vec3 = st.tuples(finite, finite, finite)
quat = st.tuples(finite, finite, finite, finite).filter(lambda q: sum(c * c for c in q) > 1e-2)


def m3(t):
    return np.array(t, float).reshape(3, 3)


def unit_q(q):
    return quat_normalize(q)


def test_identity_rotation_leaves_vectors():
    assert rotate((1.0, 0.0, 0.0, 0.0), (0.3, -1.0, 2.0)) == pytest.approx((0.3, -1.0, 2.0))


def test_quarter_turn_about_z():
    q = quat_from_axis_angle((0.0, 0.0, 1.0), math.pi / 2)
    assert rotate(q, (1.0, 0.0, 0.0)) == pytest.approx((0.0, 1.0, 0.0), abs=1e-15)


def test_hamilton_product_order():
    # i * j = k for Hamilton quaternions
    assert quat_mul((0, 1, 0, 0), (0, 0, 1, 0)) == (0, 0, 0, 1)


@given(quat, vec3)
def test_rotate_matches_matrix(q, v):
    q = unit_q(q)
    assert np.allclose(rotate(q, v), m3(quat_to_rot(q)) @ np.array(v), atol=1e-12)


@given(quat)
def test_rotation_matrix_is_orthonormal(q):
    R = m3(quat_to_rot(unit_q(q)))
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0)


@given(quat, vec3)
def test_rotate_inv_undoes_rotate(q, v):
    q = unit_q(q)
    assert np.allclose(rotate_inv(q, rotate(q, v)), v, atol=1e-12)


@given(quat, quat, vec3)
def test_composition(a, b, v):
    a, b = unit_q(a), unit_q(b)
    assert np.allclose(rotate(quat_mul(a, b), v), rotate(a, rotate(b, v)), atol=1e-12)


@given(quat)
def test_conjugate_is_inverse(q):
    q = unit_q(q)
    assert np.allclose(quat_mul(q, quat_conj(q)), (1, 0, 0, 0), atol=1e-12)


@given(quat, vec3)
def test_rotvec_update_keeps_unit_norm(q, dphi):
    q2 = apply_rotvec(unit_q(q), tuple(0.1 * c for c in dphi))
    assert quat_norm(q2) == pytest.approx(1.0, abs=1e-12)


def test_small_rotvec_matches_axis_angle():
    q = apply_rotvec((1.0, 0.0, 0.0, 0.0), (0.0, 1e-4, 0.0))
    ref = quat_from_axis_angle((0.0, 1.0, 0.0), 1e-4)
    assert np.allclose(q, ref, atol=1e-12)


@given(vec3, vec3)
def test_skew_is_cross(a, b):
    assert np.allclose(m3(skew(a)) @ np.array(b), cross(a, b), atol=1e-12)


def test_inverse_of_inertia():
    I = sym_from6(2.0, 3.0, 4.0, 0.1, -0.2, 0.3)
    assert np.allclose(m3(mat_mul(I, inv3(I))), np.eye(3), atol=1e-12)


def test_singular_inverse_raises():
    with pytest.raises(ZeroDivisionError):
        inv3((1, 2, 3, 2, 4, 6, 0, 0, 1))


@given(quat)
def test_isotropic_inertia_invariant_under_either_order(q):
    q = unit_q(q)
    I = sym_from6(2.5, 2.5, 2.5)
    R = m3(quat_to_rot(q))
    assert np.allclose(m3(world_inertia(q, I)), 2.5 * np.eye(3), atol=1e-12)
    assert np.allclose(R.T @ m3(I) @ R, 2.5 * np.eye(3), atol=1e-12)


def test_world_inertia_identity_quaternion():
    I = sym_from6(1.0, 2.0, 3.0, 0.1, 0.0, 0.2)
    assert np.allclose(world_inertia((1.0, 0.0, 0.0, 0.0), I), I)


@given(quat, vec3)
def test_world_tensor_is_r_i_rt(q, v):
    q = unit_q(q)
    I = sym_from6(1.0, 2.0, 3.0, 0.1, -0.3, 0.2)
    R = m3(quat_to_rot(q))
    assert np.allclose(apply_world_tensor(q, I, v), R @ m3(I) @ R.T @ np.array(v), atol=1e-12)


def test_same_code_runs_on_tape_scalars():
    tape = Tape()
    ang = tape.var(0.7)
    q = quat_from_axis_angle((0.0, 0.0, 1.0), ang)
    x = rotate(q, (1.0, 0.0, 0.0))
    assert x[0].value == pytest.approx(math.cos(0.7))
    assert grad(x[0], [ang])[0] == pytest.approx(-math.sin(0.7))
    assert IDENTITY3[0] == 1.0
