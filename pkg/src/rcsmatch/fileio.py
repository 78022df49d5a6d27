"""On-disk formats: scan CSV, TUM pose files, sweep CSV.

Floats are written with repr() (shortest round-trip form), so reading a
file back reproduces the exact in-memory values and repeated runs with
identical inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np

from .geometry import Pose, Scan

SCAN_HEADER = ["x", "y", "z", "doppler", "rcs"]
SWEEP_HEADER = ["scan_index", "seed", "w_rcs", "init_trans_err", "init_rot_err",
                "final_trans_err", "final_rot_err", "iterations", "converged"]

_SCAN_NAME = re.compile(r"^scan_(\d+)\.csv$")


def scan_filename(index: int) -> str:
    return f"scan_{index}.csv"


def write_scan_csv(path, scan: Scan) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SCAN_HEADER)
        for p, d, r in zip(scan.positions, scan.doppler, scan.rcs):
            w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(p[2])),
                        repr(float(d)), repr(float(r))])


def read_scan_csv(path, timestamp: float = 0.0) -> Scan:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != SCAN_HEADER:
        raise ValueError(f"{path}: expected header {','.join(SCAN_HEADER)}")
    data = np.array([[float(v) for v in row] for row in rows[1:]], dtype=np.float64)
    if data.size == 0:
        data = data.reshape(0, 5)
    return Scan(data[:, 0:3], data[:, 3], data[:, 4], timestamp)


def list_scan_files(directory) -> list[Path]:
    """scan_<index>.csv files sorted by their numeric index."""
    directory = Path(directory)
    found = []
    for p in directory.iterdir():
        m = _SCAN_NAME.match(p.name)
        if m:
            found.append((int(m.group(1)), p))
    return [p for _, p in sorted(found)]


def write_poses_tum(path, timestamps, poses) -> None:
    """TUM trajectory lines: timestamp tx ty tz qx qy qz qw (scalar last)."""
    lines = []
    for ts, pose in zip(timestamps, poses):
        q = pose.q
        vals = [ts, pose.t[0], pose.t[1], pose.t[2], q[1], q[2], q[3], q[0]]
        lines.append(" ".join(repr(float(v)) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def read_poses_tum(path) -> tuple[list[float], list[Pose]]:
    timestamps, poses = [], []
    for ln in Path(path).read_text().splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        vals = [float(v) for v in ln.split()]
        if len(vals) != 8:
            raise ValueError(f"{path}: expected 8 fields per pose line, got {len(vals)}")
        ts, tx, ty, tz, qx, qy, qz, qw = vals
        timestamps.append(ts)
        poses.append(Pose(np.array([qw, qx, qy, qz]), np.array([tx, ty, tz])))
    return timestamps, poses


def write_sweep_csv(path, records) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SWEEP_HEADER)
        for r in records:
            w.writerow([str(r.scan_index), str(r.seed), repr(float(r.w_rcs)),
                        repr(float(r.init_trans_err)), repr(float(r.init_rot_err)),
                        repr(float(r.final_trans_err)), repr(float(r.final_rot_err)),
                        str(r.iterations), "true" if r.converged else "false"])


def read_sweep_csv(path):
    from .bench import TrialRecord

    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != SWEEP_HEADER:
        raise ValueError(f"{path}: expected header {','.join(SWEEP_HEADER)}")
    out = []
    for row in rows[1:]:
        out.append(TrialRecord(
            scan_index=int(row[0]), seed=int(row[1]), w_rcs=float(row[2]),
            init_trans_err=float(row[3]), init_rot_err=float(row[4]),
            final_trans_err=float(row[5]), final_rot_err=float(row[6]),
            iterations=int(row[7]), converged=row[8] == "true"))
    return out
