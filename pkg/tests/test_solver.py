import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diffpbd.autodiff import Tape, grad
from diffpbd.chain import ArticulatedChain, HingeJoint, RigidLink, SimConfig, pendulum_chain
from diffpbd.kinematics import joint_angles, kinetic_energy, potential_energy
from diffpbd.rotations import (apply_rotvec, norm, quat_from_axis_angle, quat_mul, rotate,
                               sym_from6)
from diffpbd.solver import (EPS_C, angular_project, constraint_violation, joint_torque_vectors,
                            linear_momentum, positional_project, predict, solve_constraints,
                            step, update_velocities)

ISO = sym_from6(0.1, 0.1, 0.1)
ZERO_G = SimConfig(gravity=(0.0, 0.0, 0.0))


def free_link(x=(0.0, 0.0, 0.0), **kw):
    return RigidLink(mass=kw.pop("mass", 1.0), inertia=kw.pop("inertia", ISO), x=x, **kw)


def two_free_links(gap=(0.1, 0.0, 0.0)):
    a = free_link((0.0, 0.0, 0.0), r=(0.5, 0.0, 0.0))
    b = free_link((1.0 + gap[0], gap[1], gap[2]), t=(-0.5, 0.0, 0.0))
    return ArticulatedChain([a, b], [HingeJoint(0, 1)])


def rotate_angle(q):
    return 2.0 * math.atan2(norm(q[1:]), abs(q[0]))


# ---------------------------------------------------------------- predict

def test_ballistic_prediction_one_step():
    ch = ArticulatedChain([free_link()], [])
    out = predict(ch, SimConfig())
    assert out.links[0].v[2] == pytest.approx(-0.098, abs=1e-15)
    assert out.links[0].x[2] == pytest.approx(-0.00098, abs=1e-15)


def test_zero_dt_is_rejected():
    with pytest.raises(ValueError, match="dt"):
        SimConfig(dt=0.0)


def test_static_base_ignores_forces():
    ch = pendulum_chain([1.0], [1.0], angles=[0.4])
    out = predict(ch, SimConfig(), [[5.0, 1.0, 2.0], [0.0, 0.0, 0.0]])
    assert out.links[0].x == ch.links[0].x and out.links[0].q == ch.links[0].q


def test_torque_reaction_is_equal_and_opposite():
    ch = pendulum_chain([1.0, 1.0], angles=[0.3, -0.2])
    tv = joint_torque_vectors(ch, [2.0, -1.5])
    assert np.allclose(np.sum(tv, axis=0), 0.0, atol=1e-15)
    assert np.allclose(tv[2], (0.0, -1.5, 0.0))


def test_gyroscopic_sign_flag_changes_only_the_gyro_term():
    link = free_link(inertia=sym_from6(0.1, 0.2, 0.3), w=(1.0, 2.0, 0.5))
    ch = ArticulatedChain([link], [])
    phys = predict(ch, ZERO_G).links[0].w
    plus = predict(ch, SimConfig(gravity=(0, 0, 0), plus_sign_gyroscopic=True)).links[0].w
    Iw = np.array([0.1, 0.4, 0.15])
    gyro = np.cross([1.0, 2.0, 0.5], Iw) / np.array([0.1, 0.2, 0.3]) * 0.01
    assert np.allclose(np.subtract(plus, phys), 2 * gyro, atol=1e-14)


# ---------------------------------------------------------------- projections

def test_satisfied_joint_gives_zero_corrections():
    ch = pendulum_chain([1.0, 1.0], angles=[0.2, 0.4])
    for j in ch.joints:
        for corr in positional_project(ch, j) + angular_project(ch, j):
            assert max(abs(c) for c in corr.dx + corr.dphi) < 1e-12


def test_symmetric_positional_split():
    ch = two_free_links()
    cp, cc = positional_project(ch, ch.joints[0])
    assert cp.dx == pytest.approx((0.05, 0.0, 0.0))
    assert cc.dx == pytest.approx((-0.05, 0.0, 0.0))
    assert max(map(abs, cp.dphi + cc.dphi)) < 1e-15


@given(st.tuples(*[st.floats(-0.1, 0.1)] * 3).filter(lambda g: norm(g) > 1e-6))
def test_single_positional_projection_decreases_gap(gap):
    ch = two_free_links(gap)
    ch.links[0].q = apply_rotvec(ch.links[0].q, (0.1, -0.2, 0.05))
    before = constraint_violation(ch)[0]
    after = solve_constraints(ch, SimConfig(iterations=1))
    assert constraint_violation(after)[0] < before


def test_static_parent_moves_only_child():
    ch = pendulum_chain([1.0], [1.0])
    ch.links[1].x = (0.02, 0.0, -0.5)
    cp, cc = positional_project(ch, ch.joints[0])
    assert max(map(abs, cp.dx + cp.dphi)) == 0.0
    assert norm(cc.dx) > 0.0


def test_angular_split_between_equal_inertias():
    ch = two_free_links((0.0, 0.0, 0.0))
    ch.links[1].a_axis = (0.0, math.cos(0.1), math.sin(0.1))
    cp, cc = angular_project(ch, ch.joints[0])
    assert norm(cp.dphi) == pytest.approx(math.sin(0.1) / 2, rel=1e-12)
    assert norm(cc.dphi) == pytest.approx(math.sin(0.1) / 2, rel=1e-12)
    assert norm(cc.dphi) == pytest.approx(0.05, abs=1e-3)


def test_angular_static_parent_child_takes_all():
    ch = pendulum_chain([1.0], [1.0])
    ch.links[1].q = quat_from_axis_angle((1.0, 0.0, 0.0), 0.1)
    cp, cc = angular_project(ch, ch.joints[0])
    assert norm(cp.dphi) == 0.0
    after = solve_constraints(ch, SimConfig(iterations=1))
    assert constraint_violation(after)[1] < 0.1 * math.sin(0.1)


def test_guard_keeps_gradients_finite_at_zero_violation():
    tape = Tape()
    ch = pendulum_chain([1.0, 1.0], angles=[0.3, 0.1])
    xs = tape.vars(ch.state_vector())
    traced = ch.with_state(xs)
    out = step(traced, SimConfig(iterations=3))
    g = grad(sum(out.state()), xs)
    assert np.all(np.isfinite(g))
    assert EPS_C == 1e-12


# ---------------------------------------------------------------- solve

def test_zero_violation_is_a_fixed_point():
    ch = pendulum_chain([1.0, 0.5, 0.7], angles=[0.3, -0.4, 1.0])
    out = solve_constraints(ch, SimConfig())
    assert np.allclose(out.state_vector(), ch.state_vector(), rtol=0, atol=1e-12)


def _detached(n=3, seed=0, offset=0.05, planar=True):
    rng = np.random.default_rng(seed)
    ch = pendulum_chain([1.0] * n, [1.0] * n, angles=[0.3, 0.2, -0.1][:n])
    for l in ch.links[1:]:
        dx = rng.uniform(-offset, offset, 3)
        dr = rng.uniform(-offset, offset, 3)
        if planar:
            dx[1] = 0.0
            dr[[0, 2]] = 0.0
        l.x = tuple(np.add(l.x, dx))
        l.q = apply_rotvec(l.q, tuple(float(v) for v in dr))
    return ch


def test_gauss_seidel_sweeps_shrink_violation():
    start = _detached()
    hist = []
    solve_constraints(start, SimConfig(iterations=60),
                      callback=lambda i, c: hist.append(constraint_violation(c)[0]))
    assert hist[-1] < 0.01 * constraint_violation(start)[0]


@pytest.mark.xfail(strict=True, reason="a positional correction also rotates the link, which can "
                   "reopen the neighbouring joint for one sweep; the decrease is only on average")
def test_gauss_seidel_max_violation_non_increasing():
    hist = []
    solve_constraints(_detached(), SimConfig(iterations=60),
                      callback=lambda i, c: hist.append(constraint_violation(c)[0]))
    assert all(b <= a * (1 + 1e-12) for a, b in zip(hist, hist[1:]))


def _gs_and_jacobi():
    start = _detached(n=2)
    gs = solve_constraints(start, SimConfig(solver="gs", iterations=400))
    ja = solve_constraints(start, SimConfig(solver="jacobi", iterations=400))
    return gs, ja


def test_jacobi_and_gauss_seidel_both_reach_the_constraint_manifold():
    gs, ja = _gs_and_jacobi()
    assert constraint_violation(gs)[0] < 1e-8 and constraint_violation(ja)[0] < 1e-8
    assert np.allclose(joint_angles(gs), joint_angles(ja), atol=1e-2)


@pytest.mark.xfail(strict=True, reason="the manifold is a continuum; the two solvers distribute "
                   "corrections differently and land about 1e-3 rad apart")
def test_jacobi_and_gauss_seidel_reach_the_same_point():
    gs, ja = _gs_and_jacobi()
    assert np.allclose(joint_angles(gs), joint_angles(ja), atol=1e-8)


# ---------------------------------------------------------------- velocities

def test_no_motion_gives_zero_velocity():
    ch = pendulum_chain([1.0], angles=[0.5])
    out = update_velocities(ch, ch, SimConfig())
    assert out.links[1].v == (0.0, 0.0, 0.0) and out.links[1].w == (0.0, 0.0, 0.0)


def test_small_rotation_gives_angular_rate():
    ch = ArticulatedChain([free_link()], [])
    new = ch.copy()
    new.links[0].q = quat_from_axis_angle((0.0, 0.0, 1.0), 1e-4)
    w = update_velocities(ch, new, SimConfig()).links[0].w
    assert w == pytest.approx((0.0, 0.0, 1e-2), rel=1e-8)


def test_negative_real_part_flips_rate():
    ch = ArticulatedChain([free_link()], [])
    new = ch.copy()
    q = quat_from_axis_angle((0.0, 0.0, 1.0), 1e-4)
    new.links[0].q = tuple(-c for c in q)  # same rotation, other hemisphere
    w = update_velocities(ch, new, SimConfig()).links[0].w
    assert w == pytest.approx((0.0, 0.0, 1e-2), rel=1e-8)


# ---------------------------------------------------------------- step

def test_small_amplitude_period_matches_compound_pendulum():
    L, m, radius = 1.0, 1.0, 0.05
    ch = pendulum_chain([L], [m], angles=[0.05], radius=radius)
    cfg = SimConfig(dt=0.001)
    I_pivot = m * L * L / 12 + m * radius ** 2 / 4 + m * (L / 2) ** 2
    T = 2 * math.pi * math.sqrt(I_pivot / (m * 9.8 * L / 2))
    crossings, prev, t = [], joint_angles(ch)[0], 0.0
    while len(crossings) < 21:
        ch = step(ch, cfg)
        t += cfg.dt
        a = joint_angles(ch)[0]
        if prev > 0 >= a:
            crossings.append(t - cfg.dt * a / (a - prev))
        prev = a
    period = (crossings[-1] - crossings[0]) / 20
    assert period == pytest.approx(T, rel=0.02)


def test_rest_state_without_gravity_is_constant():
    ch = pendulum_chain([1.0, 1.0], angles=[0.3, 0.2])
    out = step(ch, ZERO_G)
    assert np.allclose(out.state_vector(), ch.state_vector(), atol=1e-12)


def test_long_run_joint_gap_stays_small():
    ch = pendulum_chain([1.0, 1.0], angles=[0.8, 0.3])
    cfg = SimConfig()
    worst = 0.0
    for _ in range(500):
        ch = step(ch, cfg)
        worst = max(worst, constraint_violation(ch)[0])
    assert worst <= 1e-5


def test_linear_momentum_conserved_for_two_free_links():
    ch = two_free_links((0.03, -0.02, 0.01))
    ch.links[0].v, ch.links[1].v = (0.3, -0.1, 0.2), (-0.5, 0.4, 0.0)
    ch.links[0].w, ch.links[1].w = (0.0, 1.0, 0.2), (0.5, 0.0, -0.3)
    cfg = SimConfig(gravity=(0.0, 0.0, 0.0), iterations=100)
    prev = np.array(linear_momentum(ch))
    for _ in range(5):
        ch = step(ch, cfg)
        cur = np.array(linear_momentum(ch))
        assert np.abs(cur - prev).max() <= 1e-10
        prev = cur


def _energy_drift(dt, tilt=0.3, duration=10.0):
    ch = pendulum_chain([1.0], [1.0], angles=[tilt])
    cfg = SimConfig(dt=dt)

    def energy(c):
        return potential_energy(c, cfg.gravity) + kinetic_energy(c)

    e0 = energy(ch)
    for _ in range(round(duration / dt)):
        ch = step(ch, cfg)
    return (energy(ch) - e0) / abs(e0)


def test_free_pendulum_energy_drift_bounded():
    # datum at the pivot; the implicit velocity update dissipates, never injects
    drift = _energy_drift(0.01)
    assert -0.05 <= drift < 0.0


def test_energy_dissipation_shrinks_with_dt():
    assert abs(_energy_drift(0.005)) < abs(_energy_drift(0.01))


def test_unit_quaternions_after_step():
    ch = pendulum_chain([1.0, 0.5], angles=[1.0, -0.5])
    for _ in range(20):
        ch = step(ch, SimConfig(), [0.5, -0.3])
    for l in ch.links:
        assert norm(l.q) == pytest.approx(1.0, abs=1e-12)


def test_jacobi_step_runs_and_keeps_chain_closed():
    ch = pendulum_chain([1.0, 1.0], angles=[0.4, 0.1])
    cfg = SimConfig(solver="jacobi")
    for _ in range(50):
        ch = step(ch, cfg)
    assert constraint_violation(ch)[0] < 1e-4


def test_torque_count_mismatch():
    ch = pendulum_chain([1.0, 1.0])
    with pytest.raises(ValueError, match="joint torques"):
        step(ch, SimConfig(), [1.0])
