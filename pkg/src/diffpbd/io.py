"""File formats: chain descriptions, trajectories, run results and plot data.

Every writer is deterministic: JSON uses sorted keys and Python's shortest
round-trip float repr, CSV cells use ``repr`` as well, and nothing records a
timestamp or host detail. Writing what was read gives the same bytes.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .chain import ArticulatedChain, HingeJoint, RigidLink, SimConfig, unit

CHAIN_FORMAT = "diffpbd-chain"
CHAIN_VERSION = 1
TRAJ_FORMAT = "diffpbd-trajectory"
TRAJ_VERSION = 1
RESULT_FORMAT = "diffpbd-result"
RESULT_VERSION = 1
DT_TOL = 1e-9


class FormatError(ValueError):
    """A file could not be parsed or violates an invariant."""


# ---------------------------------------------------------------- chains

def _inertia6(m):
    m = [float(v) for v in m]
    return [m[0], m[4], m[8], m[1], m[2], m[5]]  # ixx iyy izz ixy ixz iyz


def _inertia9(six, where):
    if len(six) != 6:
        raise FormatError(f"{where}.inertia: expected 6 entries [ixx, iyy, izz, ixy, ixz, iyz]")
    ixx, iyy, izz, ixy, ixz, iyz = (float(v) for v in six)
    return (ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz)


def _vec(d, key, where, n=3, default=None):
    if key not in d:
        if default is not None:
            return tuple(default)
        raise FormatError(f"{where}: missing field {key!r}")
    v = d[key]
    if not isinstance(v, list) or len(v) != n:
        raise FormatError(f"{where}.{key}: expected a list of {n} numbers")
    try:
        out = tuple(float(x) for x in v)
    except (TypeError, ValueError):
        raise FormatError(f"{where}.{key}: entries must be numbers") from None
    if not all(math.isfinite(x) for x in out):
        raise FormatError(f"{where}.{key}: entries must be finite")
    return out


def _axis(d, key, where, default=None):
    v = _vec(d, key, where, default=default)
    try:
        return unit(v, what=f"{where}.{key}")
    except ValueError as e:
        raise FormatError(str(e)) from None


def chain_to_dict(chain: ArticulatedChain, config: SimConfig | None = None, notes=None) -> dict:
    config = config or SimConfig()
    links = []
    for l in chain.links:
        links.append({
            "name": l.name,
            "static": bool(l.static),
            "mass": float(l.mass),
            "inertia": _inertia6(l.inertia),
            "t": [float(v) for v in l.t],
            "r": [float(v) for v in l.r],
            "a_axis": [float(v) for v in l.a_axis],
            "b_axis": [float(v) for v in l.b_axis],
            "n_axis": [float(v) for v in l.n_axis],
            "x": [float(v) for v in l.x],
            "q": [float(v) for v in l.q],
            "v": [float(v) for v in l.v],
            "w": [float(v) for v in l.w],
        })
    joints = []
    for j in chain.joints:
        d = {"name": j.name, "parent": j.parent, "child": j.child}
        if j.ref_parent is not None:
            d["ref_parent"] = [float(v) for v in j.ref_parent]
        if j.ref_child is not None:
            d["ref_child"] = [float(v) for v in j.ref_child]
        joints.append(d)
    out = {
        "format": CHAIN_FORMAT,
        "version": CHAIN_VERSION,
        "gravity": list(config.gravity),
        "solver": {"dt": config.dt, "kind": config.solver, "iterations": config.iterations},
        "links": links,
        "joints": joints,
    }
    if notes:
        out["notes"] = notes
    return out


def chain_from_dict(d: dict, source="<chain>"):
    """Validate a parsed chain document. Returns (chain, config, notes)."""
    if not isinstance(d, dict):
        raise FormatError(f"{source}: top level must be an object")
    if d.get("format") != CHAIN_FORMAT:
        raise FormatError(f"{source}: format must be {CHAIN_FORMAT!r}")
    if d.get("version") != CHAIN_VERSION:
        raise FormatError(f"{source}: unsupported version {d.get('version')!r}")
    solver = d.get("solver", {})
    try:
        config = SimConfig(dt=float(solver.get("dt", 0.01)),
                           gravity=_vec(d, "gravity", source, default=(0.0, 0.0, -9.8)),
                           solver=str(solver.get("kind", "gauss-seidel")),
                           iterations=int(solver.get("iterations", 30)))
    except (TypeError, ValueError) as e:
        raise FormatError(f"{source}.solver: {e}") from None
    raw_links = d.get("links")
    if not isinstance(raw_links, list) or not raw_links:
        raise FormatError(f"{source}: 'links' must be a non-empty list")
    links = []
    for i, ld in enumerate(raw_links):
        name = ld.get("name", f"link{i}")
        where = f"{source}: links[{i}] ({name})"
        static = bool(ld.get("static", False))
        try:
            mass = float(ld.get("mass", 0.0))
        except (TypeError, ValueError):
            raise FormatError(f"{where}.mass: must be a number") from None
        if not static and not mass > 0:
            raise FormatError(f"{where}.mass: must be positive, got {mass}")
        if static and mass < 0:
            raise FormatError(f"{where}.mass: must not be negative, got {mass}")
        inertia = _inertia9(ld.get("inertia", [1.0, 1.0, 1.0, 0.0, 0.0, 0.0]), where)
        if not static:
            eig = np.linalg.eigvalsh(np.array(inertia).reshape(3, 3))
            if eig.min() <= 0:
                raise FormatError(f"{where}.inertia: not positive definite (eigenvalues {eig})")
        q = _vec(ld, "q", where, n=4, default=(1.0, 0.0, 0.0, 0.0))
        qn = math.sqrt(sum(c * c for c in q))
        if abs(qn - 1.0) > 1e-6:
            raise FormatError(f"{where}.q: quaternion is not unit length (norm {qn:.6g})")
        links.append(RigidLink(
            name=name, mass=mass, inertia=inertia, static=static,
            t=_vec(ld, "t", where, default=(0.0, 0.0, 0.0)),
            r=_vec(ld, "r", where, default=(0.0, 0.0, 0.0)),
            a_axis=_axis(ld, "a_axis", where, default=(0.0, 1.0, 0.0)),
            b_axis=_axis(ld, "b_axis", where, default=(0.0, 1.0, 0.0)),
            n_axis=_axis(ld, "n_axis", where, default=(0.0, 0.0, -1.0)),
            x=_vec(ld, "x", where, default=(0.0, 0.0, 0.0)),
            q=q if abs(qn - 1.0) <= 1e-15 else tuple(c / qn for c in q),
            v=_vec(ld, "v", where, default=(0.0, 0.0, 0.0)),
            w=_vec(ld, "w", where, default=(0.0, 0.0, 0.0))))
    joints = []
    for k, jd in enumerate(d.get("joints", [])):
        where = f"{source}: joints[{k}] ({jd.get('name', '')})"
        try:
            p, c = int(jd["parent"]), int(jd["child"])
        except (KeyError, TypeError, ValueError):
            raise FormatError(f"{where}: integer 'parent' and 'child' are required") from None
        if not (0 <= p < len(links) and 0 <= c < len(links)):
            raise FormatError(f"{where}: link index out of range")
        refp = _axis(jd, "ref_parent", where) if "ref_parent" in jd else None
        refc = _axis(jd, "ref_child", where) if "ref_child" in jd else None
        joints.append(HingeJoint(p, c, jd.get("name", f"joint{k + 1}"), refp, refc))
    try:
        chain = ArticulatedChain(links, joints)
    except ValueError as e:
        raise FormatError(f"{source}: {e}") from None
    return chain, config, d.get("notes")


def load_chain(path):
    """Read a ``.chain`` file. Returns (chain, config)."""
    chain, config, _ = load_chain_with_notes(path)
    return chain, config


def load_chain_with_notes(path):
    path = Path(path)
    text = path.read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    return chain_from_dict(d, str(path))


def dumps_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def write_chain(path, chain: ArticulatedChain, config: SimConfig | None = None, notes=None):
    Path(path).write_text(dumps_json(chain_to_dict(chain, config, notes)))


def bundled_chain_path(name: str) -> Path:
    """Path of a chain shipped with the package (e.g. ``double_pendulum``)."""
    fname = name if name.endswith(".chain") else name + ".chain"
    p = resources.files("diffpbd") / "data" / fname
    if not p.is_file():
        raise FileNotFoundError(f"no bundled chain {name!r}")
    return Path(str(p))


# ---------------------------------------------------------------- trajectories

@dataclass
class Trajectory:
    """Joint-space samples at a constant timestep.

    ``torques`` (optional) has one row per step between samples, so one row
    fewer than ``angles`` or the same number of rows.
    """
    joint_names: list
    dt: float
    time: np.ndarray
    angles: np.ndarray
    rates: np.ndarray | None = None
    torques: np.ndarray | None = None

    def __post_init__(self):
        self.time = np.asarray(self.time, float)
        self.angles = np.atleast_2d(np.asarray(self.angles, float))
        n, J = self.angles.shape
        if len(self.joint_names) != J:
            raise FormatError(f"{J} angle columns but {len(self.joint_names)} joint names")
        if self.time.shape != (n,):
            raise FormatError("time and angle rows differ")
        if self.rates is not None:
            self.rates = np.atleast_2d(np.asarray(self.rates, float))
            if self.rates.shape != (n, J):
                raise FormatError("rates must match angles in shape")
        if self.torques is not None:
            self.torques = np.atleast_2d(np.asarray(self.torques, float))
            if self.torques.shape[1] != J or self.torques.shape[0] not in (n, n - 1):
                raise FormatError("torques need one row per step and one column per joint")
        _check_times(self.time, self.dt)

    @property
    def has_rates(self) -> bool:
        return self.rates is not None


def _check_times(time, dt, where="trajectory"):
    if not dt > 0:
        raise FormatError(f"{where}: dt must be positive")
    d = np.diff(time)
    if np.any(d <= 0):
        k = int(np.argmax(d <= 0)) + 1
        raise FormatError(f"{where}: time not strictly increasing at row {k}")
    bad = np.abs(d - dt) > DT_TOL
    if np.any(bad):
        k = int(np.argmax(bad)) + 1
        raise FormatError(f"{where}: step at row {k} is {d[k - 1]!r}, dt is {dt!r}")


def _cell(x) -> str:
    return repr(float(x))


def write_trajectory(path, traj: Trajectory):
    names = list(traj.joint_names)
    cols = ["time"] + [f"{n}.angle" for n in names]
    if traj.rates is not None:
        cols += [f"{n}.rate" for n in names]
    if traj.torques is not None:
        cols += [f"{n}.torque" for n in names]
    units = ["s"] + ["rad"] * len(names)
    if traj.rates is not None:
        units += ["rad/s"] * len(names)
    if traj.torques is not None:
        units += ["N*m"] * len(names)
    with open(path, "w", newline="") as f:
        f.write(f"# format={TRAJ_FORMAT}\n# version={TRAJ_VERSION}\n")
        f.write(f"# dt={traj.dt!r}\n# joints={','.join(names)}\n")
        f.write(f"# units={','.join(units)}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(cols)
        n = len(traj.time)
        for k in range(n):
            row = [_cell(traj.time[k])] + [_cell(v) for v in traj.angles[k]]
            if traj.rates is not None:
                row += [_cell(v) for v in traj.rates[k]]
            if traj.torques is not None:
                if k < traj.torques.shape[0]:
                    row += [_cell(v) for v in traj.torques[k]]
                else:
                    row += [""] * len(names)
            w.writerow(row)


def load_trajectory(path) -> Trajectory:
    meta = {}
    rows = []
    header = None
    with open(path, newline="") as f:
        for lineno, line in enumerate(f, 1):
            s = line.rstrip("\n")
            if not s.strip():
                continue
            if s.startswith("#"):
                if "=" in s:
                    k, v = s[1:].split("=", 1)
                    meta[k.strip()] = v.strip()
                continue
            cells = next(csv.reader([s]))
            if header is None:
                header = cells
                continue
            if len(cells) != len(header):
                raise FormatError(f"{path}:{lineno}: {len(cells)} columns, header has {len(header)}")
            rows.append((lineno, cells))
    if meta.get("format") != TRAJ_FORMAT:
        raise FormatError(f"{path}: missing '# format={TRAJ_FORMAT}' header")
    if header is None or header[0] != "time":
        raise FormatError(f"{path}: first column must be 'time'")
    try:
        dt = float(meta["dt"])
    except (KeyError, ValueError):
        raise FormatError(f"{path}: header needs '# dt=<seconds>'") from None
    names = [n for n in meta.get("joints", "").split(",") if n]
    if not names:
        raise FormatError(f"{path}: header needs '# joints=<name,...>'")

    def cols(kind):
        idx = [header.index(f"{n}.{kind}") if f"{n}.{kind}" in header else -1 for n in names]
        if all(i < 0 for i in idx):
            return None
        if any(i < 0 for i in idx):
            raise FormatError(f"{path}: {kind} columns missing for some joints")
        return idx

    ia, ir, it = cols("angle"), cols("rate"), cols("torque")
    if ia is None:
        raise FormatError(f"{path}: no angle columns")
    known = 1 + len(names) * sum(x is not None for x in (ia, ir, it))
    if known != len(header):
        raise FormatError(f"{path}: unexpected columns in header {header}")

    def num(lineno, c):
        try:
            return float(c)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: bad number {c!r}") from None

    n = len(rows)
    time = np.array([num(ln, r[0]) for ln, r in rows])
    angles = np.array([[num(ln, r[i]) for i in ia] for ln, r in rows]).reshape(n, len(names))
    rates = None
    if ir is not None:
        rates = np.array([[num(ln, r[i]) for i in ir] for ln, r in rows]).reshape(n, len(names))
    torques = None
    if it is not None:
        trows = []
        for k, (ln, r) in enumerate(rows):
            cells = [r[i] for i in it]
            if all(c == "" for c in cells):
                if k != n - 1:
                    raise FormatError(f"{path}:{ln}: empty torque cells only allowed on the last row")
                continue
            trows.append([num(ln, c) for c in cells])
        torques = np.array(trows).reshape(len(trows), len(names))
    try:
        return Trajectory(names, dt, time, angles, rates, torques)
    except FormatError as e:
        raise FormatError(f"{path}: {e}") from None


# ---------------------------------------------------------------- run results

def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


@dataclass
class RunResult:
    """Outcome of one experiment run.

    ``series`` maps a name to a dict of equally long columns used for plots.
    """
    experiment: str
    config: dict
    loss_history: list
    parameters: dict
    rmse: list | None = None
    series: dict | None = None
    summary: dict | None = None

    def to_dict(self) -> dict:
        return {
            "format": RESULT_FORMAT,
            "version": RESULT_VERSION,
            "experiment": self.experiment,
            "config": self.config,
            "loss_history": list(self.loss_history),
            "parameters": self.parameters,
            "rmse": self.rmse,
            "series": self.series or {},
            "summary": self.summary or {},
        }


def write_result(path, result: RunResult):
    Path(path).write_text(dumps_json(result.to_dict()))


def load_result(path) -> RunResult:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    if d.get("format") != RESULT_FORMAT:
        raise FormatError(f"{path}: not a {RESULT_FORMAT} file")
    return RunResult(d["experiment"], d["config"], d["loss_history"], d["parameters"],
                     d.get("rmse"), d.get("series") or {}, d.get("summary") or {})


# ---------------------------------------------------------------- plot data

# Panels per experiment kind: panel file name -> series it is cut from.
PANELS = {
    "design": {"tip_path": "tip_path", "joint_power": "joint_power",
               "torque_vs_angle": "torque_vs_angle"},
    "spring-fit": {"loss_curves": "loss_curves", "spring_torque": "spring_torque"},
    "gravity-comp": {"loss_curves": "loss_curves", "torque_fit": "torque_fit"},
    "mpc": {"angle_traces": "angle_traces", "torque_error": "torque_error"},
    "torque-map": {"net_torque_grid": "net_torque_grid"},
    "impedance-sim": {"impedance_traces": "impedance_traces"},
    "simulate": {"trajectory": "trajectory", "iterations": "iterations"},
}


def emit_plot_data(result: RunResult, kind: str | None = None, out_dir=".") -> list:
    """Write one CSV per plot panel; returns the written paths.

    Column schema: the first row names the columns, every later row is one
    sample. Panels whose series are absent raise an error that lists the
    series the result does contain.
    """
    kind = kind or result.experiment
    if kind not in PANELS:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {sorted(PANELS)}")
    series = result.series or {}
    if not series or all(not cols for cols in series.values()):
        raise ValueError(f"run {result.experiment!r} has no series to plot")
    wanted = PANELS[kind]
    present = [p for p, s in wanted.items() if s in series]
    if not present:
        raise ValueError(f"no series for {kind!r} panels {sorted(wanted.values())}; "
                         f"available: {sorted(series)}")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for panel in present:
        cols = series[wanted[panel]]
        names = list(cols)
        lengths = {len(cols[n]) for n in names}
        if len(lengths) != 1:
            raise ValueError(f"series {wanted[panel]!r} has columns of unequal length")
        path = Path(out_dir) / f"{kind}_{panel}.csv"
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(names)
            for row in zip(*(cols[n] for n in names)):
                w.writerow([_cell(v) for v in row])
        paths.append(path)
    return paths


# ---------------------------------------------------------------- net torque maps

MAP_FORMAT = "diffpbd-netmap"
MAP_VERSION = 1


def write_map(path, net_map, meta=None):
    d = {"format": MAP_FORMAT, "version": MAP_VERSION,
         "dtheta": net_map.dtheta, "omega": net_map.omega, "values": net_map.values,
         "invalid": net_map.invalid, "meta": meta or {}}
    Path(path).write_text(dumps_json(d))


def load_map(path):
    from .control import NetTorqueMap
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    if d.get("format") != MAP_FORMAT:
        raise FormatError(f"{path}: not a {MAP_FORMAT} file")
    try:
        return NetTorqueMap(d["dtheta"], d["omega"], d["values"], d.get("invalid", 0))
    except (KeyError, ValueError) as e:
        raise FormatError(f"{path}: {e}") from None
