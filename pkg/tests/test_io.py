import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diffpbd import io
from diffpbd.chain import SimConfig, pendulum_chain, place_chain
from diffpbd.control import NetTorqueMap
from diffpbd.io import (FormatError, RunResult, Trajectory, bundled_chain_path, chain_from_dict,
                        chain_to_dict, emit_plot_data, load_chain, load_chain_with_notes,
                        load_map, load_result, load_trajectory, write_chain, write_map,
                        write_result, write_trajectory)
from diffpbd.kinematics import joint_angles
from diffpbd.solver import constraint_violation

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def _doc():
    return chain_to_dict(pendulum_chain([1.0, 0.5], [2.0, 1.0], angles=[0.3, -0.2]), SimConfig())


def _load_doc(tmp_path, doc):
    p = tmp_path / "c.chain"
    p.write_text(json.dumps(doc))
    return load_chain(p)


# ---------------------------------------------------------------- chains

def test_bundled_double_pendulum():
    chain, cfg = load_chain(bundled_chain_path("double_pendulum"))
    dyn = [l for l in chain.links if not l.static]
    assert len(chain.links) == 3 and chain.links[0].static and len(dyn) == 2
    lengths = [float(np.linalg.norm(np.subtract(l.t, l.r))) for l in dyn]
    assert lengths == pytest.approx([3.0, 0.1])
    assert cfg.dt == 0.01 and cfg.iterations == 30


def test_bundled_baxter_has_seven_joints_base_to_tip():
    chain, _, notes = load_chain_with_notes(bundled_chain_path("baxter_left_arm"))
    assert [j.name for j in chain.joints] == ["left_s0", "left_s1", "left_e0", "left_e1",
                                               "left_w0", "left_w1", "left_w2"]
    assert all(j.parent < j.child for j in chain.joints)
    assert [j.child for j in chain.joints] == sorted(j.child for j in chain.joints)
    assert notes
    assert constraint_violation(chain)[0] < 1e-9
    assert joint_angles(chain) == pytest.approx([0.0] * 7, abs=1e-9)


def test_unknown_bundled_chain():
    with pytest.raises(FileNotFoundError):
        bundled_chain_path("nope")


@pytest.mark.parametrize("name", ["double_pendulum", "baxter_left_arm"])
def test_chain_round_trip_is_byte_identical(tmp_path, name):
    src = bundled_chain_path(name)
    chain, cfg, notes = load_chain_with_notes(src)
    out = tmp_path / "again.chain"
    write_chain(out, chain, cfg, notes)
    assert out.read_bytes() == src.read_bytes()


@given(st.lists(st.floats(-3.0, 3.0), min_size=2, max_size=2), st.floats(0.1, 10.0))
def test_chain_round_trip_of_moving_state(tmp_path_factory, angles, mass):
    ch = place_chain(pendulum_chain([1.0, 0.7], [mass, 1.0]), angles)
    ch.links[1].v = (0.1, -0.2, 1e-17)
    d = tmp_path_factory.mktemp("rt")
    write_chain(d / "a.chain", ch, SimConfig(solver="jacobi", iterations=7))
    back, cfg = load_chain(d / "a.chain")
    assert np.array_equal(back.state_vector(), ch.state_vector())
    assert (cfg.solver, cfg.iterations) == ("jacobi", 7)
    write_chain(d / "b.chain", back, cfg)
    assert (d / "a.chain").read_bytes() == (d / "b.chain").read_bytes()


def test_negative_mass_names_the_link(tmp_path):
    doc = _doc()
    doc["links"][2]["mass"] = -1.0
    with pytest.raises(FormatError, match=r"links\[2\] \(link2\)\.mass"):
        _load_doc(tmp_path, doc)


def test_non_spd_inertia_rejected(tmp_path):
    doc = _doc()
    doc["links"][1]["inertia"] = [1.0, 1.0, -1.0, 0.0, 0.0, 0.0]
    with pytest.raises(FormatError, match="inertia"):
        _load_doc(tmp_path, doc)


def test_nearly_unit_axis_is_normalized(tmp_path):
    doc = _doc()
    doc["links"][1]["b_axis"] = [0.0, 1.0 + 5e-7, 0.0]
    chain, _ = _load_doc(tmp_path, doc)
    assert chain.links[1].b_axis == (0.0, 1.0, 0.0)


def test_far_from_unit_axis_rejected(tmp_path):
    doc = _doc()
    doc["links"][1]["a_axis"] = [0.0, 1.01, 0.0]
    with pytest.raises(FormatError, match="a_axis"):
        _load_doc(tmp_path, doc)


def test_parse_error_reports_location(tmp_path):
    p = tmp_path / "bad.chain"
    p.write_text('{\n  "format": "diffpbd-chain",\n  "links": [\n}')
    with pytest.raises(FormatError, match=r"bad\.chain:4:1"):
        load_chain(p)


@pytest.mark.parametrize("mutate, match", [
    (lambda d: d.update(format="urdf"), "format"),
    (lambda d: d.update(version=99), "version"),
    (lambda d: d.update(links=[]), "links"),
    (lambda d: d["joints"][0].update(parent=5), "out of range"),
    (lambda d: d["joints"][1].update(parent=2, child=1), "precede"),
    (lambda d: d["links"][1].update(q=[2.0, 0.0, 0.0, 0.0]), "quaternion"),
    (lambda d: d["solver"].update(dt=-1.0), "dt"),
    (lambda d: d["links"][1].update(x=[0.0, "a", 1.0]), "x"),
])
def test_invalid_documents(tmp_path, mutate, match):
    doc = _doc()
    mutate(doc)
    with pytest.raises(FormatError, match=match):
        _load_doc(tmp_path, doc)


def test_chain_from_dict_returns_notes():
    doc = _doc()
    doc["notes"] = "hand made"
    assert chain_from_dict(doc)[2] == "hand made"


# ---------------------------------------------------------------- trajectories

def _traj(n=100, rates=True, torques=True, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n) * 0.01
    return Trajectory(["s0", "s1"], 0.01, t, rng.normal(size=(n, 2)),
                      rng.normal(size=(n, 2)) if rates else None,
                      rng.normal(size=(n - 1, 2)) if torques else None)


def test_trajectory_round_trip(tmp_path):
    tr = _traj()
    write_trajectory(tmp_path / "a.csv", tr)
    back = load_trajectory(tmp_path / "a.csv")
    assert np.array_equal(back.time, tr.time)
    assert np.array_equal(back.angles, tr.angles)
    assert np.array_equal(back.rates, tr.rates)
    assert np.array_equal(back.torques, tr.torques)
    write_trajectory(tmp_path / "b.csv", back)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


@given(st.lists(st.tuples(finite, finite), min_size=2, max_size=20))
def test_trajectory_round_trip_any_values(tmp_path_factory, rows):
    a = np.array(rows)
    tr = Trajectory(["j0", "j1"], 0.5, np.arange(len(a)) * 0.5, a, None, a[:-1] * 2)
    p = tmp_path_factory.mktemp("traj") / "t.csv"
    write_trajectory(p, tr)
    back = load_trajectory(p)
    assert np.array_equal(back.angles, a) and np.array_equal(back.torques, a[:-1] * 2)


def test_missing_rates_are_marked_unavailable(tmp_path):
    write_trajectory(tmp_path / "a.csv", _traj(rates=False))
    back = load_trajectory(tmp_path / "a.csv")
    assert back.rates is None and not back.has_rates


def test_dt_jitter_rejected():
    t = np.arange(10) * 0.01
    t[5] += 2e-9
    with pytest.raises(FormatError, match="dt"):
        Trajectory(["a"], 0.01, t, np.zeros((10, 1)))


def test_non_monotone_time_rejected(tmp_path):
    write_trajectory(tmp_path / "a.csv", _traj(n=5))
    lines = (tmp_path / "a.csv").read_text().splitlines()
    data = [i for i, l in enumerate(lines) if l and l[0].isdigit()]
    lines[data[1]], lines[data[2]] = lines[data[2]], lines[data[1]]
    (tmp_path / "a.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError):
        load_trajectory(tmp_path / "a.csv")


def test_column_count_mismatch(tmp_path):
    write_trajectory(tmp_path / "a.csv", _traj(n=5))
    text = (tmp_path / "a.csv").read_text().rstrip("\n") + ",1.0\n"
    (tmp_path / "a.csv").write_text(text)
    with pytest.raises(FormatError, match="columns"):
        load_trajectory(tmp_path / "a.csv")


def test_trajectory_header_required(tmp_path):
    (tmp_path / "a.csv").write_text("time,s0.angle\n0,1\n")
    with pytest.raises(FormatError, match="format"):
        load_trajectory(tmp_path / "a.csv")


# ---------------------------------------------------------------- results and plots

def _result():
    return RunResult("design", {"seed": 0}, [3.0, 2.0, 1.5], {"lengths": np.array([2.7, 0.3])},
                     None, {"tip_path": {"desired_x": [0.0, 0.1], "desired_z": [-3.0, -2.9]},
                            "joint_power": {"time": [0.0], "joint1_power": [math.inf]}},
                     {"loss": np.float64(1.5)})


def test_result_round_trip_is_byte_identical(tmp_path):
    write_result(tmp_path / "a.json", _result())
    back = load_result(tmp_path / "a.json")
    assert back.parameters["lengths"] == [2.7, 0.3]
    write_result(tmp_path / "b.json", back)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_result_format_checked(tmp_path):
    (tmp_path / "a.json").write_text('{"format": "other"}')
    with pytest.raises(FormatError):
        load_result(tmp_path / "a.json")


def test_emit_plot_data_writes_one_file_per_panel(tmp_path):
    paths = emit_plot_data(_result(), out_dir=tmp_path)
    assert sorted(p.name for p in paths) == ["design_joint_power.csv", "design_tip_path.csv"]
    lines = (tmp_path / "design_tip_path.csv").read_text().splitlines()
    assert lines[0] == "desired_x,desired_z" and len(lines) == 3


def test_empty_run_has_nothing_to_plot(tmp_path):
    with pytest.raises(ValueError, match="no series"):
        emit_plot_data(RunResult("design", {}, [], {}), out_dir=tmp_path)


def test_missing_series_lists_available(tmp_path):
    r = RunResult("mpc", {}, [], {}, None, {"something_else": {"a": [1]}})
    with pytest.raises(ValueError, match="something_else"):
        emit_plot_data(r, out_dir=tmp_path)


def test_map_round_trip(tmp_path):
    m = NetTorqueMap(np.linspace(-1, 1, 3), np.linspace(-2, 2, 4),
                     np.arange(12.0).reshape(3, 4) / 7, invalid=2)
    write_map(tmp_path / "m.json", m, {"joint": "left_s1"})
    back = load_map(tmp_path / "m.json")
    assert np.array_equal(back.values, m.values) and back.invalid == 2
    write_map(tmp_path / "n.json", back, {"joint": "left_s1"})
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "n.json").read_bytes()


def test_map_format_checked(tmp_path):
    (tmp_path / "m.json").write_text('{"format": "diffpbd-netmap", "dtheta": [1, 0], '
                                     '"omega": [0, 1], "values": [[0, 0], [0, 0]]}')
    with pytest.raises(FormatError):
        load_map(tmp_path / "m.json")
