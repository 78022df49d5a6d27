"""Command-line entry point.

Subcommands:
  synth      write a synthetic scene as scan_<i>.csv files plus poses.txt
  filter     Doppler-filter dynamic points out of scans
  build      build a Gaussian-RCS model from scans + poses
  match      register one scan against a model and print the result
  sweep      noise-injection w_rcs sweep, writes a CSV of trial records
  summarize  aggregate a sweep CSV into per-w statistics
"""

from __future__ import annotations

import argparse
import shutil
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench, doppler, fileio, synth
from .geometry import Pose, pose_error
from .matcher import MatchParams, match
from .model import BuildConfig, build_model, load_model, save_model


def _add_build_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--voxel-size", type=float, default=1.0)
    p.add_argument("--min-points", type=int, default=10)
    p.add_argument("--max-degree", type=int, default=3)


def _add_match_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--cauchy-c", type=float, default=1.0)
    p.add_argument("--radius", type=float, default=None,
                   help="association radius (default: 2 x model voxel size)")


def _load_dataset(directory):
    directory = Path(directory)
    files = fileio.list_scan_files(directory)
    if not files:
        sys.exit(f"no scan_<index>.csv files in {directory}")
    timestamps, poses = fileio.read_poses_tum(directory / "poses.txt")
    if len(timestamps) != len(files):
        sys.exit(f"{len(files)} scans but {len(timestamps)} poses")
    scans = [fileio.read_scan_csv(f, ts) for f, ts in zip(files, timestamps)]
    return scans, poses, timestamps


def _cmd_synth(args) -> None:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    scene = synth.SCENES[args.scene]()
    traj_spec = synth.TrajectorySpec(kind=args.trajectory, speed=args.speed,
                                     duration=args.scans / args.rate,
                                     scan_rate=args.rate)
    trajectory = synth.generate_trajectory(traj_spec)
    scans, _ = synth.render_sequence(scene, trajectory, args.points,
                                     args.dynamic_fraction, args.seed,
                                     args.noise_pos, args.noise_doppler)
    timestamps = [k / args.rate for k in range(len(trajectory))]
    for i, scan in enumerate(scans):
        fileio.write_scan_csv(out / fileio.scan_filename(i), scan)
    fileio.write_poses_tum(out / "poses.txt", timestamps, [p for p, _ in trajectory])
    print(f"wrote {len(scans)} scans to {out}")


def _cmd_filter(args) -> None:
    scans, poses, timestamps = _load_dataset(args.input)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    params = doppler.DopplerRansacParams(iterations=args.iterations,
                                         inlier_threshold=args.threshold,
                                         min_inlier_ratio=args.min_inlier_ratio)
    kept = 0
    total = 0
    for i, scan in enumerate(scans):
        est = doppler.estimate_ego_velocity(scan, params, seed=args.seed + i)
        filtered = doppler.filter_dynamic(scan, est)
        fileio.write_scan_csv(out / fileio.scan_filename(i), filtered)
        kept += len(filtered)
        total += len(scan)
    if Path(args.input) != out:
        shutil.copy(Path(args.input) / "poses.txt", out / "poses.txt")
    print(f"kept {kept}/{total} points across {len(scans)} scans")


def _cmd_build(args) -> None:
    scans, poses, _ = _load_dataset(args.input)
    config = BuildConfig(voxel_size=args.voxel_size,
                         min_points_per_gaussian=args.min_points,
                         max_degree=args.max_degree)
    model = build_model(scans, poses, config)
    save_model(model, args.output)
    print(f"built {len(model)} Gaussians -> {args.output}")


def _parse_init_pose(text: str) -> Pose:
    vals = [float(v) for v in text.replace(",", " ").split()]
    if len(vals) != 7:
        sys.exit("--init wants 7 values: tx ty tz qx qy qz qw")
    tx, ty, tz, qx, qy, qz, qw = vals
    return Pose(np.array([qw, qx, qy, qz]), np.array([tx, ty, tz]))


def _cmd_match(args) -> None:
    model = load_model(args.model)
    scan = fileio.read_scan_csv(args.scan)
    initial = _parse_init_pose(args.init) if args.init else Pose.identity()
    params = MatchParams(w_rcs=args.w_rcs, max_iterations=args.max_iters,
                         cauchy_c=args.cauchy_c, association_radius=args.radius)
    result = match(scan, model, initial, params)
    q = result.pose.q
    t = result.pose.t
    print(f"converged={str(result.converged).lower()} iterations={result.iterations} "
          f"cost={result.final_cost:.6g} geo_rms={result.geo_rms:.6g} "
          f"rcs_rms={result.rcs_rms:.6g}")
    print(f"pose: t=({t[0]:.6f}, {t[1]:.6f}, {t[2]:.6f}) "
          f"q_wxyz=({q[0]:.6f}, {q[1]:.6f}, {q[2]:.6f}, {q[3]:.6f})")


def _cmd_sweep(args) -> None:
    scans, poses, _ = _load_dataset(args.input)
    if args.model:
        model = load_model(args.model)
    else:
        config = BuildConfig(voxel_size=args.voxel_size,
                             min_points_per_gaussian=args.min_points,
                             max_degree=args.max_degree)
        model = build_model(scans, poses, config)
    params = MatchParams(max_iterations=args.max_iters, cauchy_c=args.cauchy_c,
                         association_radius=args.radius)
    w_values = args.w_rcs if args.w_rcs else [0.0, 0.25, 0.5, 0.75, 1.0]
    records = bench.run_sweep(scans, poses, model, w_values, args.trials,
                              args.noise_trans, args.noise_rot, args.seed,
                              params, jobs=args.jobs)
    fileio.write_sweep_csv(args.output, records)
    print(f"wrote {len(records)} trial records -> {args.output}")


def _cmd_summarize(args) -> None:
    records = fileio.read_sweep_csv(args.input)
    summaries = bench.summarize(records)
    header = (f"{'w_rcs':>6} {'n':>5} {'conv%':>6} "
              f"{'t_mean':>9} {'t_med':>9} {'t_p90':>9} "
              f"{'r_mean':>9} {'r_med':>9} {'r_p90':>9}")
    print(header)
    for s in summaries:
        print(f"{s.w_rcs:>6.3g} {s.n_trials:>5d} {100 * s.convergence_rate:>6.1f} "
              f"{s.trans_mean:>9.4f} {s.trans_median:>9.4f} {s.trans_p90:>9.4f} "
              f"{s.rot_mean:>9.4f} {s.rot_median:>9.4f} {s.rot_p90:>9.4f}")
    if args.output:
        with open(args.output, "w") as f:
            f.write("w_rcs,n_trials,convergence_rate,trans_mean,trans_median,"
                    "trans_p90,rot_mean,rot_median,rot_p90\n")
            for s in summaries:
                f.write(",".join(repr(float(v)) if isinstance(v, float) else str(v)
                                 for v in (s.w_rcs, s.n_trials, s.convergence_rate,
                                           s.trans_mean, s.trans_median, s.trans_p90,
                                           s.rot_mean, s.rot_median, s.rot_p90)) + "\n")


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(prog="rcsmatch", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--output", required=True)
    p.add_argument("--scene", choices=sorted(synth.SCENES), default="demo")
    p.add_argument("--trajectory", choices=["line", "arc"], default="line")
    p.add_argument("--scans", type=int, default=20)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--dynamic-fraction", type=float, default=0.0)
    p.add_argument("--speed", type=float, default=1.0)
    p.add_argument("--rate", type=float, default=2.0)
    p.add_argument("--noise-pos", type=float, default=0.02)
    p.add_argument("--noise-doppler", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("filter", help="remove dynamic points via Doppler RANSAC")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--threshold", type=float, default=0.2)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--min-inlier-ratio", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("build", help="build a Gaussian-RCS model")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    _add_build_flags(p)
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser("match", help="register one scan against a model")
    p.add_argument("--model", required=True)
    p.add_argument("--scan", required=True)
    p.add_argument("--init", default=None,
                   help="initial pose 'tx ty tz qx qy qz qw' (default identity)")
    p.add_argument("--w-rcs", type=float, default=0.25)
    _add_match_flags(p)
    p.set_defaults(func=_cmd_match)

    p = sub.add_parser("sweep", help="noise-injection w_rcs sweep")
    p.add_argument("--input", required=True)
    p.add_argument("--model", default=None,
                   help="model file (default: build from the input scans)")
    p.add_argument("--output", required=True)
    p.add_argument("--w-rcs", type=float, action="append", default=None,
                   help="repeatable; default 0 0.25 0.5 0.75 1")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--noise-trans", type=float, default=2.0)
    p.add_argument("--noise-rot", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    _add_build_flags(p)
    _add_match_flags(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("summarize", help="aggregate a sweep CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--output", default=None, help="optional per-w summary CSV")
    p.set_defaults(func=_cmd_summarize)

    args = parser.parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
