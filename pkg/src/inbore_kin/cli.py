"""Command-line entry point: wires JSON configs to the library and emits
result files under a run directory with a manifest.

Exit codes: 0 success, 2 configuration/usage error, 3 planning or
calibration failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .se3 import Pose
from .robot import default_robot, load_robot, fk
from .transmission import (default_transmission, series_stiffness,
                           transmission_from_dict)
from .world import Environment, load_environment
from .planning import (CostWeights, IKSettings, TaskWrench, optimize_setup,
                       path_is_collision_free, plan_birrt, solve_ik)
from .planning.cspace import default_insertion_wrench
from . import scenes
from .control import (ConeTrajectory, default_cone, run_rcm_trajectory)
from .calibration import (PointSet, calibrate_chain, load_volume,
                          synthesize_calibration_case, AmbiguityError,
                          DegenerateGeometryError)
from . import dexterity as dx

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILURE = 3


class ConfigError(Exception):
    pass


class PlanningFailure(Exception):
    pass


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=5,
                             cwd=os.path.dirname(os.path.abspath(__file__)))
        if out.returncode == 0:
            return out.stdout.strip()
    except Exception:
        pass
    return f"inbore-kin-{__version__}"


def write_manifest(out_dir: Path, command: str, config_paths: list[str],
                   seed: int | None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config_paths": config_paths,
        "seed": seed,
        "output_dir": str(out_dir),
        "git_describe": _git_describe(),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1))


def _parse_vector(text: str, n: int | None = None) -> np.ndarray:
    try:
        vec = np.array([float(x) for x in text.split(",")])
    except ValueError as exc:
        raise ConfigError(f"could not parse vector {text!r}: {exc}") from exc
    if n is not None and len(vec) != n:
        raise ConfigError(f"expected {n} comma-separated values, got {len(vec)}")
    return vec


def _load_pose(arg: str) -> Pose:
    try:
        if arg.strip().startswith("{"):
            return Pose.from_json_dict(json.loads(arg))
        return Pose.from_json_dict(json.loads(Path(arg).read_text()))
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"could not load pose from {arg!r}: {exc}") from exc


def _load_robot_arg(path: str | None):
    try:
        return load_robot(path) if path else default_robot()
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"could not load robot config: {exc}") from exc


def _parse_body(text: str) -> tuple[str, float]:
    try:
        profile, sigma = text.split(":")
        return profile, float(sigma)
    except ValueError as exc:
        raise ConfigError(f"body must look like 'male:0', got {text!r}") from exc


def _build_scene(args) -> scenes.SceneBundle:
    profile, sigma = _parse_body(getattr(args, "body", "male:0"))
    model = _load_robot_arg(getattr(args, "robot", None))
    try:
        return scenes.default_scene(profile, sigma,
                                    bore_radius=getattr(args, "bore_radius", 0.35),
                                    padding=getattr(args, "padding", 0.010),
                                    model=model)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _jobs_default() -> int:
    env = os.environ.get("INBORE_KIN_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


# -- subcommand handlers -------------------------------------------------------


def cmd_fk(args) -> int:
    model = _load_robot_arg(args.robot)
    q = _parse_vector(args.q, model.n_joints)
    pose = fk(model, q)
    text = json.dumps(pose.to_json_dict())
    print(text)
    if args.out:
        out = Path(args.out)
        write_manifest(out, "fk", [args.robot or "<default>"], None)
        (out / "pose.json").write_text(text)
    return EXIT_OK


def cmd_ik(args) -> int:
    model = _load_robot_arg(args.robot)
    target = _load_pose(args.target)
    q0 = _parse_vector(args.q0, model.n_joints) if args.q0 else np.zeros(model.n_joints)
    res = solve_ik(model, target, q0, IKSettings(), use_partition=not args.full)
    payload = {
        "q": [float(v) for v in res.q],
        "success": res.success,
        "iterations": res.iterations,
        "position_error_m": res.pos_error,
        "orientation_error_rad": res.ori_error,
    }
    print(json.dumps(payload, indent=1))
    if args.out:
        out = Path(args.out)
        write_manifest(out, "ik", [args.robot or "<default>"], None)
        (out / "ik_result.json").write_text(json.dumps(payload, indent=1))
    if not res.success:
        raise PlanningFailure("IK did not converge within tolerance")
    return EXIT_OK


def cmd_statics(args) -> int:
    combined = series_stiffness(args.k_link, args.k_cable)
    print(f"{combined:.3f} N/mm")
    return EXIT_OK


def cmd_setup_plan(args) -> int:
    scene = _build_scene(args)
    out = Path(args.out)
    write_manifest(out, "setup-plan", [args.robot or "<default>"], args.seed)
    target = _load_pose(args.target)
    weights = CostWeights(alpha=args.alpha, beta=args.beta, gamma=args.gamma)
    grid = tuple(int(x) for x in args.grid.split("x"))
    res = optimize_setup(scene.model, scene.env, scene.transmission, target,
                         scene.q_nominal, weights,
                         delta_adj=math.radians(args.delta_adj),
                         f_req=default_insertion_wrench(), grid_shape=grid)
    (out / "setup_result.json").write_text(json.dumps(res.to_json_dict(), indent=1))
    print(f"feasible={res.feasible} cost={res.cost:.4g}")
    if not res.feasible:
        raise PlanningFailure("no dexterous setup configuration found")
    return EXIT_OK


def cmd_birrt(args) -> int:
    scene = _build_scene(args)
    out = Path(args.out)
    write_manifest(out, "birrt", [args.robot or "<default>"], args.seed)
    q_start = _parse_vector(args.start, scene.model.n_joints)
    q_goal = _parse_vector(args.goal, scene.model.n_joints)
    try:
        plan = plan_birrt(scene.model, scene.env, q_start, q_goal, step=args.step,
                          max_samples=args.max_samples, seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if plan.success:
        with open(out / "path.csv", "w") as fh:
            fh.write(",".join(f"q{i+1}" for i in range(scene.model.n_joints)) + "\n")
            for q in plan.path:
                fh.write(",".join(f"{v:.9g}" for v in q) + "\n")
        verified = path_is_collision_free(scene.model, scene.env, plan.path, args.step)
        print(f"path waypoints={len(plan.path)} samples={plan.n_samples} "
              f"verified={verified}")
        return EXIT_OK
    raise PlanningFailure(plan.message or "no path found")


def cmd_calibrate(args) -> int:
    model = _load_robot_arg(args.robot)
    out = Path(args.out)
    write_manifest(out, "calibrate", [args.robot or "<default>"], args.seed)
    try:
        if args.synthetic:
            case = synthesize_calibration_case(model, seed=args.seed,
                                               tracker_noise=args.noise)
            res = calibrate_chain(model, case.robot_samples, case.tracker_tip_points,
                                  case.phantom_tracker_pose, case.fiducial_design,
                                  case.volume)
            truth = {
                "tracker_translation_error_m": float(np.linalg.norm(
                    res.t_base_tracker.translation - case.truth_base_tracker.translation)),
                "scanner_translation_error_m": float(np.linalg.norm(
                    res.t_base_scanner.translation - case.truth_base_scanner.translation)),
            }
        else:
            required = [args.trajectory, args.tracker, args.phantom_pose,
                        args.design, args.volume]
            if any(v is None for v in required):
                raise ConfigError("file mode needs --trajectory, --tracker, "
                                  "--phantom-pose, --design, and --volume")
            samples = np.loadtxt(args.trajectory, delimiter=",", skiprows=1)
            tracker_pts = PointSet.from_csv(args.tracker).points
            res = calibrate_chain(model, samples, tracker_pts,
                                  _load_pose(args.phantom_pose),
                                  PointSet.from_csv(args.design),
                                  load_volume(args.volume),
                                  threshold=args.threshold)
            truth = {}
    except (AmbiguityError, DegenerateGeometryError) as exc:
        raise PlanningFailure(f"calibration failed: {exc}") from exc
    except OSError as exc:
        raise ConfigError(str(exc)) from exc
    payload = {
        "t_base_tracker": res.t_base_tracker.to_json_dict(),
        "t_base_scanner": res.t_base_scanner.to_json_dict(),
        "rms_tracker_m": res.rms_tracker,
        "rms_scanner_m": res.rms_scanner,
        **truth,
    }
    (out / "calibration.json").write_text(json.dumps(payload, indent=1))
    print(f"rms tracker {res.rms_tracker*1e3:.4f} mm, scanner {res.rms_scanner*1e3:.4f} mm")
    return EXIT_OK


def cmd_servo_sim(args) -> int:
    model = _load_robot_arg(args.robot).with_base_pose(scenes.mount_pose())
    transmission = default_transmission()
    out = Path(args.out)
    write_manifest(out, "servo-sim", [args.robot or "<default>"], args.seed)
    cone = ConeTrajectory(default_cone(model, scenes.NOMINAL_CONFIG).apex,
                          zenith=math.radians(args.zenith), n_points=args.points)
    wrench_vec = _parse_vector(args.wrench, 6)
    wrench = TaskWrench(wrench_vec[:3], wrench_vec[3:])
    sig = _parse_vector(args.tracker_noise, 2)
    sigma = (float(sig[0]), math.radians(float(sig[1])))
    modes = {"closed": [True], "open": [False], "both": [True, False]}[args.mode]
    summary = {}
    for closed in modes:
        trace = run_rcm_trajectory(model, transmission, cone, closed_loop=closed,
                                   seed=args.seed, q_start=scenes.NOMINAL_CONFIG,
                                   wrench=wrench, tracker_sigma=sigma if closed else (0, 0),
                                   settle_steps=args.settle)
        name = "closed" if closed else "open"
        trace.write_csv(out / f"servo_{name}.csv")
        summary[name] = {
            "mean_position_error_mm": trace.mean_position_error * 1e3,
            "mean_orientation_error_deg": math.degrees(trace.mean_orientation_error),
            "steps": int(len(trace.rows)),
        }
        print(f"{name}: mean ep {summary[name]['mean_position_error_mm']:.3f} mm, "
              f"eo {summary[name]['mean_orientation_error_deg']:.3f} deg")
    (out / "servo_summary.json").write_text(json.dumps(summary, indent=1))
    return EXIT_OK


def cmd_dexterity_sweep(args) -> int:
    scene = _build_scene(args)
    out = Path(args.out)
    write_manifest(out, "dexterity-sweep", [args.robot or "<default>"], args.seed)
    subset_labels = [s.strip() for s in args.subset.split(",") if s.strip()]
    unknown = [s for s in subset_labels if s not in dx.JOINT_SUBSETS]
    if unknown:
        raise ConfigError(f"unknown joint subsets {unknown}; "
                          f"choose from {sorted(dx.JOINT_SUBSETS)}")
    candidates = scenes.scene_candidates(scene, max_count=args.candidates)
    opts = dx.SweepOptions(delta_adj=math.radians(args.delta_adj), jobs=args.jobs,
                           candidate_budget_s=args.budget)
    body = args.body
    subsets = {label: dx.JOINT_SUBSETS[label] for label in subset_labels}
    reports = dx.ablate(scene.model, scene.env, scene.transmission, candidates,
                        scene.q_nominal, subsets, opts=opts, body=body,
                        seed=args.seed)
    for rep in reports:
        dx.write_sweep_csv(rep, out / f"sweep_{rep.subset_label}.csv")
        print(f"{rep.subset_label}: reachable {rep.fraction:.3f} "
              f"cone-fraction {rep.mean_cone_fraction:.3f}")
    (out / "sweep_summary.json").write_text(
        json.dumps(dx.sweep_summary(reports), indent=1))
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="inbore-kin",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_robot(p):
        p.add_argument("--robot", help="robot config JSON (default: packaged crane8)")

    def add_scene(p):
        p.add_argument("--body", default="male:0", help="patient proxy profile:sigma")
        p.add_argument("--bore-radius", type=float, default=0.35)
        p.add_argument("--padding", type=float, default=0.010)

    p = sub.add_parser("fk", help="forward kinematics of a configuration")
    add_robot(p)
    p.add_argument("--q", required=True, help="comma-separated joint values")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fk)

    p = sub.add_parser("ik", help="solve IK for a target pose")
    add_robot(p)
    p.add_argument("--target", required=True, help="pose JSON file or inline JSON")
    p.add_argument("--q0", help="initial configuration (comma-separated)")
    p.add_argument("--full", action="store_true",
                   help="move all non-excluded joints instead of the task core")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ik)

    p = sub.add_parser("statics", help="series stiffness of link and cable")
    p.add_argument("--k-link", type=float, required=True, help="N/mm")
    p.add_argument("--k-cable", type=float, required=True, help="N/mm")
    p.set_defaults(func=cmd_statics)

    p = sub.add_parser("setup-plan", help="search a dexterous setup configuration")
    add_robot(p)
    add_scene(p)
    p.add_argument("--target", required=True, help="EE target pose JSON")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--delta-adj", type=float, default=15.0, help="degrees")
    p.add_argument("--grid", default="17x17")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_setup_plan)

    p = sub.add_parser("birrt", help="plan a collision-free joint-space path")
    add_robot(p)
    add_scene(p)
    p.add_argument("--start", required=True)
    p.add_argument("--goal", required=True)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--max-samples", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_birrt)

    p = sub.add_parser("calibrate", help="robot/tracker/scanner calibration")
    add_robot(p)
    p.add_argument("--synthetic", action="store_true",
                   help="generate and solve a synthetic calibration case")
    p.add_argument("--noise", type=float, default=0.0, help="tracker noise sigma (m)")
    p.add_argument("--trajectory", help="CSV of joint samples (header + q rows)")
    p.add_argument("--tracker", help="CSV of tracker tip points (id,x,y,z)")
    p.add_argument("--phantom-pose", help="phantom tracker pose JSON")
    p.add_argument("--design", help="fiducial design CSV (id,x,y,z)")
    p.add_argument("--volume", help="volume header JSON")
    p.add_argument("--threshold", type=float, default=1500.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("servo-sim", help="simulated RCM cone tracking")
    add_robot(p)
    p.add_argument("--mode", choices=["closed", "open", "both"], default="both")
    p.add_argument("--zenith", type=float, default=15.0, help="degrees")
    p.add_argument("--points", type=int, default=64)
    p.add_argument("--settle", type=int, default=25)
    p.add_argument("--wrench", default="0.8,0.8,1.5,0.01,0.01,0",
                   help="fx,fy,fz,mx,my,mz (N, N*m)")
    p.add_argument("--tracker-noise", default="0.0014,0.5", help="sigma_p m, sigma_o deg")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_servo_sim)

    p = sub.add_parser("dexterity-sweep", help="reachability sweep over a body")
    add_robot(p)
    add_scene(p)
    p.add_argument("--subset", default="8dof",
                   help="comma-separated joint subsets (e.g. 5dof,8dof)")
    p.add_argument("--candidates", type=int, default=200)
    p.add_argument("--delta-adj", type=float, default=60.0, help="degrees")
    p.add_argument("--budget", type=float, default=2.0, help="seconds per candidate")
    p.add_argument("--jobs", type=int, default=_jobs_default())
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dexterity_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PlanningFailure as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
