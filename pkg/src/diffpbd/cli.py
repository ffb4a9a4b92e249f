"""Command-line driver: one subcommand per experiment.

Every subcommand writes ``<out>/<subcommand>.json`` (a run result) plus
plot-data CSV files, and prints a short deterministic summary. Exit codes:
0 success, 2 configuration error, 3 optimizer divergence.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .chain import SimConfig, pendulum_chain, place_chain
from .control import (ImpedanceParams, MapGrid, build_net_torque_map, impedance_sim,
                      single_joint_chain)
from .kinematics import gravity_torque, joint_angles, kinetic_energy, potential_energy
from .optimize import (DesignConfig, LossSpec, MpcConfig, SpringModel, design_pendulum,
                       estimate_gravity_torques, fit_spring_curve, fit_spring_sim, mpc_estimate,
                       synthetic_spring_data, synthetic_trajectory)
from .optimize.adam import DivergenceError
from .optimize.losses import SCHEMES
from .optimize.mpc import INIT_SCHEMES
from .rotations import apply_rotvec
from .solver import constraint_violation, solve_constraints, step

log = logging.getLogger("diffpbd")

EXIT_CONFIG = 2
EXIT_DIVERGED = 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- helpers

def _floats(text, what):
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--{what}: expected comma-separated numbers, got {text!r}") from None


def _load(args, default):
    path = args.chain or io.bundled_chain_path(default)
    chain, cfg = io.load_chain(path)
    return chain, _sim_config(args, cfg)


def _sim_config(args, base: SimConfig | None = None) -> SimConfig:
    base = base or SimConfig()
    dt = base.dt if args.dt is None else args.dt
    iters = base.iterations if args.iters is None else args.iters
    solver = base.solver if args.solver is None else args.solver
    if dt <= 0:
        raise ConfigError("--dt: must be positive")
    if iters < 1:
        raise ConfigError("--iters: must be >= 1")
    return SimConfig(dt=dt, gravity=base.gravity, solver=solver, iterations=iters)


def _spec(args, scheme=None, lambda3=0.0) -> LossSpec:
    l1, l2 = SCHEMES[scheme] if scheme else (1.0, 0.02)
    l1 = l1 if args.lambda1 is None else args.lambda1
    l2 = l2 if args.lambda2 is None else args.lambda2
    l3 = lambda3 if args.lambda3 is None else args.lambda3
    if min(l1, l2, l3) < 0:
        raise ConfigError("--lambda1/2/3: weights must be non-negative")
    return LossSpec(l1, l2, l3)


def _echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "func")}


def _finish(args, result: io.RunResult):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{result.experiment}.json"
    io.write_result(path, result)
    if result.series:
        io.emit_plot_data(result, result.experiment, out)
    print(f"wrote {path}")
    return 0


def _fmt(v, nd=4):
    return f"{v:.{nd}f}"


# ---------------------------------------------------------------- simulate

def _detach(chain, rng, offset):
    det = chain.copy()
    for l in det.links:
        if l.static:
            continue
        l.x = tuple(float(x) + float(d) for x, d in zip(l.x, rng.uniform(-offset, offset, 3)))
        l.q = apply_rotvec(l.q, tuple(float(d) for d in rng.uniform(-offset, offset, 3)))
    return det


def cmd_simulate(args):
    chain, cfg = _load(args, "double_pendulum")
    J = len(chain.joints)
    angles = _floats(args.angles, "angles")
    if angles is None:
        angles = [0.3] + [0.0] * (J - 1)
    if len(angles) != J:
        raise ConfigError(f"--angles: chain has {J} joints, got {len(angles)} values")
    if args.steps < 0:
        raise ConfigError("--steps: must be >= 0")
    torques = None
    if args.traj:
        tr = io.load_trajectory(args.traj)
        if tr.torques is None:
            raise ConfigError(f"--traj: {args.traj} has no torque columns")
        torques = tr.torques
        if torques.shape[1] != J:
            raise ConfigError(f"--traj: torque columns for {torques.shape[1]} joints, chain has {J}")
    ch = place_chain(chain, angles)
    g = cfg.gravity

    def energy(c):
        return float(potential_energy(c, g)) + float(kinetic_energy(c))

    rows = [[float(a) for a in joint_angles(ch)]]
    e0 = energy(ch)
    for t in range(args.steps):
        u = list(torques[min(t, len(torques) - 1)]) if torques is not None else None
        ch = step(ch, cfg, u)
        rows.append([float(a) for a in joint_angles(ch)])
    e1 = energy(ch)
    rows = np.array(rows)
    time = np.arange(len(rows)) * cfg.dt
    names = [j.name for j in chain.joints]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_trajectory(out / "trajectory.csv", io.Trajectory(names, cfg.dt, time, rows))
    drift = (e1 - e0) / max(abs(e0), 1e-12)
    gap, mis = constraint_violation(ch)
    series = {"trajectory": {"time": time.tolist(),
                             **{f"{n}.angle": rows[:, k].tolist() for k, n in enumerate(names)}}}
    summary = {"steps": args.steps, "energy_initial": e0, "energy_final": e1,
               "energy_drift_relative": drift, "final_gap": gap, "final_misalignment": mis}
    print(f"steps {args.steps}  energy {e0:.6f} -> {e1:.6f} J  relative drift {drift:+.3e}")
    print(f"final max anchor gap {gap:.3e} m  max axis misalignment {mis:.3e}")
    if args.dump_iterations:
        rng = np.random.default_rng(args.seed)
        det = _detach(place_chain(chain, angles), rng, args.detach)
        hist = []
        solve_constraints(det, cfg, callback=lambda it, c: hist.append((it + 1,) + constraint_violation(c)))
        g0, m0 = constraint_violation(det)
        series["iterations"] = {"iteration": [0] + [h[0] for h in hist],
                                "max_gap": [g0] + [h[1] for h in hist],
                                "max_misalignment": [m0] + [h[2] for h in hist]}
        summary["detached_gap_initial"] = g0
        summary["detached_gap_final"] = hist[-1][1]
        print(f"detached chain ({cfg.solver}, {cfg.iterations} iterations): "
              f"gap {g0:.3e} -> {hist[-1][1]:.3e} m, misalignment {m0:.3e} -> {hist[-1][2]:.3e}")
    result = io.RunResult("simulate", _echo(args), [], {"angles": angles}, None, series, summary)
    return _finish(args, result)


# ---------------------------------------------------------------- design

def cmd_design(args):
    chain, cfg = _load(args, "double_pendulum")
    dyn = [l for l in chain.links if not l.static]
    if len(dyn) != 2:
        raise ConfigError("--chain: design needs a two-link chain")
    lengths = [float(np.linalg.norm(np.subtract(l.t, l.r))) for l in dyn]
    dcfg = DesignConfig(sim=cfg)
    iters = 40 if args.opt_iters is None else args.opt_iters
    step0 = 0.05 if args.lr is None else args.lr
    res = design_pendulum(tuple(lengths), dcfg, iterations=iters, step0=step0)
    a, b = res.initial, res.optimal
    travel = np.abs(np.diff(np.unwrap(b.angles, axis=0), axis=0)).sum(axis=0)
    print("            link1 (m)  link2 (m)      loss   work (J)")
    for name, e in (("initial", a), ("optimal", b)):
        print(f"{name:>10}  {e.lengths[0]:9.4f}  {e.lengths[1]:9.4f}  {e.loss:8.3f}  {e.work:9.4f}")
    print(f"joint travel at optimum: {travel[0]:.4f} / {travel[1]:.4f} rad")
    series = {
        "tip_path": {"desired_x": b.desired[:, 0].tolist(), "desired_z": b.desired[:, 2].tolist(),
                     "initial_x": a.tip[:, 0].tolist(), "initial_z": a.tip[:, 2].tolist(),
                     "optimal_x": b.tip[:, 0].tolist(), "optimal_z": b.tip[:, 2].tolist()},
        "joint_power": {"time": (np.arange(len(b.power)) * cfg.dt).tolist(),
                        "joint1_power": b.power[:, 0].tolist(),
                        "joint2_power": b.power[:, 1].tolist()},
    }
    params = {"initial_lengths": a.lengths, "optimal_lengths": b.lengths}
    summary = {"initial_loss": a.loss, "initial_work": a.work, "optimal_loss": b.loss,
               "optimal_work": b.work, "joint_travel": travel}
    return _finish(args, io.RunResult("design", _echo(args), res.history, params, None, series,
                                      summary))


# ---------------------------------------------------------------- gravity compensation

def cmd_gravity_comp(args):
    chain, cfg = _load(args, "baxter_left_arm")
    J = len(chain.joints)
    if args.traj:
        poses = io.load_trajectory(args.traj).angles
        if poses.shape[1] != J:
            raise ConfigError(f"--traj: {poses.shape[1]} joints, chain has {J}")
    else:
        rng = np.random.default_rng(args.seed)
        poses = rng.uniform(-0.5, 0.5, size=(args.poses, J))
    spec = _spec(args, "angle-only")
    est = estimate_gravity_torques(chain, cfg, poses, spec)
    err = est.abs_error
    names = [j.name for j in chain.joints]
    print("joint        mean |estimate - analytic| (N*m)   max")
    for k, n in enumerate(names):
        print(f"{n:<12} {err[:, k].mean():12.5f}                 {err[:, k].max():9.5f}")
    curves = {"iteration": list(range(max(len(h) for h in est.losses)))}
    for i, h in enumerate(est.losses):
        curves[f"pose{i}"] = h + [h[-1]] * (len(curves["iteration"]) - len(h))
    fit = {"pose": [], "joint": [], "estimated": [], "analytic": []}
    for i in range(len(poses)):
        for k in range(J):
            fit["pose"].append(i)
            fit["joint"].append(k)
            fit["estimated"].append(float(est.estimated[i, k]))
            fit["analytic"].append(float(est.analytic[i, k]))
    params = {"poses": est.angles, "estimated": est.estimated, "analytic": est.analytic}
    summary = {"max_abs_error": float(err.max()), "mean_abs_error": float(err.mean())}
    return _finish(args, io.RunResult("gravity-comp", _echo(args), [h[-1] for h in est.losses],
                                      params, None, {"loss_curves": curves, "torque_fit": fit},
                                      summary))


# ---------------------------------------------------------------- spring

def _spring_chain():
    return pendulum_chain([0.5, 0.4], [3.0, 2.0])


def cmd_spring_fit(args):
    cfg = _sim_config(args)
    truth = SpringModel(k=args.k_true)
    start = SpringModel(k=args.k0, alpha2=truth.alpha2)
    spec = _spec(args, "angle-omega")
    if args.chain:
        chain, cfg = _load(args, "double_pendulum")
    else:
        chain = _spring_chain()
    J = len(chain.joints)
    if args.traj:
        tr = io.load_trajectory(args.traj)
        if tr.torques is None:
            raise ConfigError(f"--traj: {args.traj} needs torque columns with the motor torques")
        angles, motor = tr.angles[:len(tr.torques)], tr.torques
        grav = np.array([[float(g) for g in gravity_torque(place_chain(chain, list(a)), cfg.gravity)]
                         for a in angles])
    else:
        data = synthetic_spring_data(chain, cfg, truth, n_poses=args.poses, seed=args.seed,
                                     noise=args.noise)
        angles, motor, grav = data.angles, data.motor_torques, data.gravity_torques
    if angles.shape[1] != J:
        raise ConfigError(f"pose data has {angles.shape[1]} joints, chain has {J}")
    curve = fit_spring_curve(angles, motor, grav, start, fit_alpha2=args.fit_alpha2)
    lr = 0.02 if args.lr is None else args.lr
    iters = 300 if args.opt_iters is None else args.opt_iters
    sim = fit_spring_sim(chain, cfg, angles, motor, start, spec, fit_alpha2=args.fit_alpha2,
                         lr=lr, iterations=iters)
    shift = {}
    for off in (-0.05, 0.0, 0.05):
        m = SpringModel(k=args.k0, alpha2=truth.alpha2 + off)
        shift[off] = fit_spring_curve(angles, motor, grav, m, fit_alpha2=False)
    print(f"curve-fit  k = {curve.k:.3f} N/m  alpha2 = {curve.alpha2:.4f}  loss = {curve.loss:.6g}")
    print(f"diff-sim   k = {sim.k:.3f} N/m  alpha2 = {sim.alpha2:.4f}  loss = {sim.loss:.6g}")
    if not args.traj:
        print(f"true       k = {truth.k:.3f} N/m  alpha2 = {truth.alpha2:.4f}")
    print("alpha2 offset   best k (N/m)   min loss")
    for off, f in shift.items():
        print(f"{off:+13.2f}   {f.k:12.3f}   {f.loss:.6g}")
    n = max(len(curve.history), len(sim.history))
    pad = lambda h: list(h) + [h[-1]] * (n - len(h))  # noqa: E731
    series = {"loss_curves": {"iteration": list(range(n)), "curve_fit": pad(curve.history),
                              "diff_sim": pad(sim.history)}}
    th = np.linspace(angles[:, 0].min(), angles[:, 0].max(), 50)
    from .optimize import spring_torque
    from dataclasses import replace
    series["spring_torque"] = {
        "theta": th.tolist(),
        "curve_fit": [spring_torque(replace(start, k=curve.k, alpha2=curve.alpha2), t) for t in th],
        "diff_sim": [spring_torque(replace(start, k=sim.k, alpha2=sim.alpha2), t) for t in th]}
    params = {"curve_fit": {"k": curve.k, "alpha2": curve.alpha2, "loss": curve.loss},
              "diff_sim": {"k": sim.k, "alpha2": sim.alpha2, "loss": sim.loss},
              "alpha2_shift": {repr(o): {"k": f.k, "loss": f.loss} for o, f in shift.items()}}
    return _finish(args, io.RunResult("spring-fit", _echo(args), sim.history, params, None,
                                      series, {"k_true": None if args.traj else truth.k}))


# ---------------------------------------------------------------- mpc

def mpc_chain():
    return pendulum_chain([0.5, 0.4], [3.0, 2.0], angles=[0.4, 0.3])


def mpc_torque_fn(cfg):
    def fn(t, ch):
        g = [float(v) for v in gravity_torque(ch, cfg.gravity)]
        s = t * cfg.dt
        return [g[0] + 3.0 * math.sin(math.pi * s), g[1] + 1.5 * math.cos(1.6 * math.pi * s)]
    return fn


def cmd_mpc(args):
    if args.traj:
        chain, cfg = _load(args, "double_pendulum")
        tr = io.load_trajectory(args.traj)
        chain = place_chain(chain, list(tr.angles[0]))
        obs_a, obs_r, truth = tr.angles, tr.rates, tr.torques
        cfg = _sim_config(args, SimConfig(dt=tr.dt, gravity=cfg.gravity, solver=cfg.solver,
                                          iterations=cfg.iterations))
    else:
        chain = mpc_chain()
        cfg = _sim_config(args)
        obs_a, obs_r, truth = synthetic_trajectory(chain, cfg, args.steps, mpc_torque_fn(cfg))
    inits = [args.init] if args.init else list(INIT_SCHEMES)
    schemes = [args.scheme] if args.scheme else list(SCHEMES)
    horizons = [args.horizon] if args.horizon else [1, 3]
    if obs_r is None:
        schemes = [s for s in schemes if SCHEMES[s][1] == 0] or ["angle-only"]
    peak = float(np.abs(truth).max()) if truth is not None else None
    # In a sweep a diverged configuration is reported in the table and the
    # sweep goes on; a single pinned configuration fails with exit code 3.
    single = len(horizons) * len(inits) * len(schemes) == 1
    table, curves = {}, {}
    for H in horizons:
        for init in inits:
            for scheme in schemes:
                spec = _spec(args, scheme, 2e-7 if H > 1 else 0.0)
                mcfg = MpcConfig(horizon=H, init=init, iterations=args.opt_iters, lr=args.lr)
                key = f"h{H}/{init}/{scheme}"
                try:
                    res = mpc_estimate(chain, cfg, obs_a, obs_r, mcfg, spec, true_torques=truth)
                except DivergenceError as e:
                    if single:
                        raise
                    table[key] = {"rmse": None, "diverged": str(e)}
                    continue
                table[key] = {"rmse": res.rmse, "max_jump": res.max_jump,
                              "mean_jump": res.mean_jump, "mean_step_loss": float(res.step_loss.mean())}
                curves[key] = res
    print("horizon  init       scheme        " + ("RMSE per joint (N*m)" if peak else "mean step loss"))
    for key, row in table.items():
        H, init, scheme = key.split("/")
        if "diverged" in row:
            val = "diverged"
        elif row["rmse"] is not None:
            val = " ".join(_fmt(v) for v in row["rmse"])
        else:
            val = f"{row['mean_step_loss']:.3e}"
        print(f"{H[1:]:>7}  {init:<9}  {scheme:<12}  {val}")
    if peak:
        print(f"peak torque {peak:.4f} N*m")
    if not curves:
        raise DivergenceError("every MPC configuration diverged", [])
    first = next(iter(curves.values()))
    T = len(first.torques)
    angle_traces = {"step": list(range(T + 1))}
    for k in range(obs_a.shape[1]):
        angle_traces[f"observed_{k}"] = obs_a[:, k].tolist()
        angle_traces[f"simulated_{k}"] = first.angles[:, k].tolist()
    err = {"step": list(range(T))}
    if truth is not None:
        for key, res in curves.items():
            for k in range(res.torques.shape[1]):
                err[f"{key}/joint{k}"] = (res.torques[:, k] - truth[:T, k]).tolist()
    params = {key: {"torques": res.torques} for key, res in curves.items()}
    return _finish(args, io.RunResult("mpc", _echo(args), [float(v) for v in first.step_loss],
                                      params, [table[k]["rmse"] for k in table if k in curves],
                                      {"angle_traces": angle_traces, "torque_error": err},
                                      {"table": table, "peak_torque": peak}))


# ---------------------------------------------------------------- torque map / impedance

def _map_subchain(args):
    chain, cfg = _load(args, "baxter_left_arm")
    J = len(chain.joints)
    if not 0 <= args.joint < J:
        raise ConfigError(f"--joint: chain has joints 0..{J - 1}")
    angles = _floats(args.angles, "angles") or [0.0] * J
    if len(angles) != J:
        raise ConfigError(f"--angles: chain has {J} joints, got {len(angles)} values")
    return chain, cfg, angles


def _grid(args):
    return MapGrid(args.map_dtheta, args.map_omega, args.map_n, args.map_n)


def cmd_torque_map(args):
    chain, cfg, angles = _map_subchain(args)
    sub = single_joint_chain(place_chain(chain, angles), args.joint)
    m = build_net_torque_map(sub, cfg, _grid(args), seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_map(out / "net_torque_map.json", m, {"joint": chain.joints[args.joint].name})
    print(f"net torque map {m.values.shape[0]}x{m.values.shape[1]} for joint "
          f"{chain.joints[args.joint].name}: range [{m.values.min():.4f}, {m.values.max():.4f}] N*m, "
          f"{m.invalid} invalid cells")
    grid = {"dtheta": [], "omega": [], "net_torque": []}
    for i, a in enumerate(m.dtheta):
        for j, w in enumerate(m.omega):
            grid["dtheta"].append(float(a))
            grid["omega"].append(float(w))
            grid["net_torque"].append(float(m.values[i, j]))
    return _finish(args, io.RunResult("torque-map", _echo(args), [], {"invalid": m.invalid},
                                      None, {"net_torque_grid": grid},
                                      {"min": float(m.values.min()), "max": float(m.values.max())}))


def cmd_impedance_sim(args):
    chain, cfg, angles = _map_subchain(args)
    if args.map:
        m = io.load_map(args.map)
    else:
        posed = list(angles)
        posed[args.joint] = args.goal
        m = build_net_torque_map(single_joint_chain(place_chain(chain, posed), args.joint), cfg,
                                 _grid(args), seed=args.seed)
    sub = single_joint_chain(place_chain(chain, angles), args.joint)
    params = ImpedanceParams(args.K_m, args.D_m, args.scaling)
    run = impedance_sim(sub, params, m, goal=args.goal, duration=args.duration, config=cfg)
    pd = impedance_sim(sub, ImpedanceParams(args.K_m, args.D_m, 0.0), None, goal=args.goal,
                       duration=args.duration, config=cfg)
    d, rec = run.deflections(), run.recovery_times()
    d_pd = pd.deflections()
    ratio = d[1] / d[0] if len(d) > 1 and d[0] > 0 else float("nan")
    print("window  external (N*m)  deflection impedance (rad)  deflection PD (rad)  return (s)")
    for (t0, t1, mag), a, b, r in zip(run.windows, d, d_pd, rec):
        print(f"{t0:4.0f}-{t1:<4.0f} {mag:14.2f}  {a:26.6f}  {b:19.6f}  {r:9.3f}")
    print(f"deflection ratio {ratio:.4f}; map queries clamped {m.clamped}")
    traces = {"time": run.t.tolist(), "angle": run.angle.tolist(), "motor_torque": run.torque.tolist(),
              "external_torque": run.external.tolist(), "pd_angle": pd.angle.tolist(),
              "pd_motor_torque": pd.torque.tolist()}
    summary = {"deflections": d, "deflections_pd": d_pd, "ratio": ratio, "recovery_times": rec,
               "map_clamped": m.clamped}
    return _finish(args, io.RunResult("impedance-sim", _echo(args), [], {"goal": args.goal},
                                      None, {"impedance_traces": traces}, summary))


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--chain", help="chain description file (.chain)")
    common.add_argument("--traj", help="trajectory file (CSV with '#' header)")
    common.add_argument("--dt", type=float, help="timestep in seconds")
    common.add_argument("--iters", type=int, help="constraint-projection iterations per step")
    common.add_argument("--solver", choices=["gs", "jacobi"], help="projection scheme")
    common.add_argument("--lambda1", type=float, help="joint-angle loss weight")
    common.add_argument("--lambda2", type=float, help="angular-velocity loss weight")
    common.add_argument("--lambda3", type=float, help="torque-change loss weight")
    common.add_argument("--lr", type=float, help="optimizer learning rate / initial step")
    common.add_argument("--opt-iters", type=int, help="optimizer iterations")
    common.add_argument("--horizon", type=int, choices=[1, 3], help="MPC horizon")
    common.add_argument("--init", choices=list(INIT_SCHEMES), help="MPC torque initialization")
    common.add_argument("--scheme", choices=list(SCHEMES), help="loss scheme")
    common.add_argument("--seed", type=int, default=0, help="seed for every random choice")
    common.add_argument("--out", default="runs", help="output directory")

    p = argparse.ArgumentParser(prog="diffpbd", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="roll out a chain")
    s.add_argument("--steps", type=int, default=200)
    s.add_argument("--angles", help="initial joint angles, comma separated (rad)")
    s.add_argument("--dump-iterations", action="store_true",
                   help="also record per-iteration constraint violation of a detached chain")
    s.add_argument("--detach", type=float, default=0.05,
                   help="random offset (m, rad) used to detach the chain")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("design", parents=[common], help="double-pendulum link-length design")
    s.set_defaults(func=cmd_design)

    s = sub.add_parser("gravity-comp", parents=[common], help="gravity-compensation torques")
    s.add_argument("--poses", type=int, default=5, help="synthetic static poses")
    s.set_defaults(func=cmd_gravity_comp)

    s = sub.add_parser("spring-fit", parents=[common], help="spring stiffness identification")
    s.add_argument("--poses", type=int, default=30)
    s.add_argument("--noise", type=float, default=0.1, help="torque noise std (N*m)")
    s.add_argument("--k-true", type=float, default=800.0)
    s.add_argument("--k0", type=float, default=600.0, help="initial stiffness guess")
    s.add_argument("--fit-alpha2", action="store_true")
    s.set_defaults(func=cmd_spring_fit)

    s = sub.add_parser("mpc", parents=[common], help="MPC torque estimation")
    s.add_argument("--steps", type=int, default=200)
    s.set_defaults(func=cmd_mpc)

    for name, fn, hlp in (("torque-map", cmd_torque_map, "build a net torque map"),
                          ("impedance-sim", cmd_impedance_sim, "impedance control simulation")):
        s = sub.add_parser(name, parents=[common], help=hlp)
        s.add_argument("--joint", type=int, default=1, help="joint index (default: s1)")
        s.add_argument("--angles", help="posture of the other joints, comma separated")
        s.add_argument("--map-dtheta", type=float, default=0.00625)
        s.add_argument("--map-omega", type=float, default=0.5)
        s.add_argument("--map-n", type=int, default=33)
        s.set_defaults(func=fn)
        if name == "impedance-sim":
            s.add_argument("--map", help="net torque map file (built when omitted)")
            s.add_argument("--goal", type=float, default=-0.45)
            s.add_argument("--K-m", dest="K_m", type=float, default=30.0)
            s.add_argument("--D-m", dest="D_m", type=float, default=0.01)
            s.add_argument("--scaling", type=float, default=1.0)
            s.add_argument("--duration", type=float, default=35.0)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DivergenceError as e:
        print(f"diffpbd: diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ValueError, FileNotFoundError) as e:
        print(f"diffpbd: error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
