"""Regenerate the chain files shipped in ``src/diffpbd/data``.

The Baxter left arm is transcribed from the public ``baxter_description``
URDF (Rethink Robotics): joint origins, inertial origins, masses and
inertia tensors of the seven arm links from ``left_upper_shoulder`` to
``left_wrist``. The gripper and hand are omitted. The native format wants
every link frame world-aligned at zero joint angles, so each URDF frame is
composed out to the ``left_arm_mount`` frame here and the inertia tensors
are rotated accordingly.

Run: python3 tools/make_bundled_chains.py
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from diffpbd.chain import ArticulatedChain, HingeJoint, RigidLink, SimConfig, pendulum_chain
from diffpbd.io import write_chain

DATA = Path(__file__).resolve().parents[1] / "src" / "diffpbd" / "data"
H = 1.57079632679

# (joint, origin xyz, origin rpy) parent frame -> child link frame, axis z.
JOINTS = [
    ("left_s0", (0.055695, 0.0, 0.011038), (0.0, 0.0, 0.0)),
    ("left_s1", (0.069, 0.0, 0.27035), (-H, 0.0, 0.0)),
    ("left_e0", (0.102, 0.0, 0.0), (H, 0.0, H)),
    ("left_e1", (0.069, 0.0, 0.26242), (-H, -H, 0.0)),
    ("left_w0", (0.10359, 0.0, 0.0), (H, 0.0, H)),
    ("left_w1", (0.01, 0.0, 0.2707), (-H, -H, 0.0)),
    ("left_w2", (0.115975, 0.0, 0.0), (H, 0.0, H)),
]
# (link, mass, COM in link frame, [ixx, ixy, ixz, iyy, iyz, izz])
LINKS = [
    ("left_upper_shoulder", 5.70044, (0.01783, 0.00086, 0.19127),
     (0.04709102262, 0.00012787556, 0.00614870039, 0.03766976455, 0.00078086899, 0.03595988478)),
    ("left_lower_shoulder", 3.22698, (0.06845, 0.00269, -0.00529),
     (0.01175209419, -0.00030096398, 0.00207675762, 0.0278859752, -0.00018821993, 0.02078749298)),
    ("left_upper_elbow", 4.31272, (-0.00276, 0.00132, 0.18086),
     (0.02661733557, 0.00029270634, 0.00392189887, 0.02844355207, 0.0010838933, 0.01248008322)),
    ("left_lower_elbow", 2.07206, (0.02611, 0.00159, -0.01117),
     (0.00711582686, 0.00036036173, 0.0007459496, 0.01318227876, -0.00019663418, 0.00926852064)),
    ("left_upper_forearm", 2.24665, (-0.00168, 0.0046, 0.13952),
     (0.01667742825, 0.00018403705, 0.00018657629, 0.01675457264, -0.00064732352, 0.0037463115)),
    ("left_lower_forearm", 1.60979, (0.06041, 0.00697, 0.006),
     (0.00387607152, -0.00044384784, -0.00021115038, 0.00700537914, 0.00015348067, 0.0055275524)),
    ("left_wrist", 0.35093, (0.00198, 0.00125, 0.01855),
     (0.00025289155, 0.00000575311, -0.00000159345, 0.0002688601, -0.00000519818, 0.0003074118)),
]

BAXTER_NOTES = (
    "Transcription of the Baxter left arm (left_upper_shoulder .. left_wrist) from the public "
    "baxter_description URDF by Rethink Robotics. Base link = left_arm_mount frame, z up. "
    "Frames re-expressed world-aligned at zero joint angles; inertia tensors rotated to match. "
    "Gripper/hand omitted. Values are a transcription for simulation studies, not calibrated data."
)


def _rpy(r, p, y):
    cr, sr, cp, sp, cy, sy = np.cos(r), np.sin(r), np.cos(p), np.sin(p), np.cos(y), np.sin(y)
    Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def _clean(v, tol=1e-9):
    v = np.where(np.abs(v) < tol, 0.0, v)
    return tuple(float(round(x, 12)) for x in np.ravel(v))


def _perp(axis):
    trial = np.array([0.0, 0.0, -1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    n = trial - axis * (trial @ axis)
    return n / np.linalg.norm(n)


def baxter_left_arm() -> ArticulatedChain:
    R = np.eye(3)
    p = np.zeros(3)
    joint_pos, joint_axis, com, inertia = [], [], [], []
    for (jname, xyz, rpy), (lname, m, c, I) in zip(JOINTS, LINKS):
        p = p + R @ np.array(xyz)
        R = R @ _rpy(*rpy)
        joint_pos.append(p.copy())
        joint_axis.append(R @ np.array([0.0, 0.0, 1.0]))
        com.append(p + R @ np.array(c))
        ixx, ixy, ixz, iyy, iyz, izz = I
        Il = np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])
        inertia.append(R @ Il @ R.T)
    n = len(LINKS)
    axes = [np.round(a, 12) for a in joint_axis]
    refs = [_perp(a) for a in axes]
    base = RigidLink(name="left_arm_mount", static=True, mass=0.0,
                     r=_clean(joint_pos[0]), a_axis=_clean(axes[0]), b_axis=_clean(axes[0]),
                     n_axis=_clean(refs[0]))
    links = [base]
    for k, (lname, m, _, _) in enumerate(LINKS):
        nxt = joint_pos[k + 1] if k + 1 < n else com[k]
        b = axes[k + 1] if k + 1 < n else axes[k]
        links.append(RigidLink(
            name=lname, mass=m, inertia=_clean(0.5 * (inertia[k] + inertia[k].T), 1e-15),
            t=_clean(joint_pos[k] - com[k]), r=_clean(nxt - com[k]),
            a_axis=_clean(axes[k]), b_axis=_clean(b), n_axis=_clean(refs[k]),
            x=_clean(com[k])))
    joints = [HingeJoint(k, k + 1, JOINTS[k][0], _clean(refs[k]), _clean(refs[k]))
              for k in range(n)]
    return ArticulatedChain(links, joints)


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    dp = pendulum_chain([3.0, 0.1], [6.0, 0.2])
    write_chain(DATA / "double_pendulum.chain", dp, SimConfig(),
                notes="Initial double-pendulum design: rods 3.0 m and 0.1 m at 2 kg/m, "
                      "radius 0.05 m, hinge about y, hanging along -z from a static base.")
    write_chain(DATA / "baxter_left_arm.chain", baxter_left_arm(), SimConfig(), notes=BAXTER_NOTES)


if __name__ == "__main__":
    main()
