"""File formats: CSV streams and flat key-value configuration files.

All CSVs are comma-separated with a mandatory header row and '.' decimal
separator.  Formats:

- IMU:        t,wx,wy,wz,ax,ay,az            (SI units, t in seconds)
- features:   t,id,bx,by,bz                  (unit bearings, camera frame)
- trajectory: t,px,py,pz,qw,qx,qy,qz,vx,vy,vz
- truth:      t,px,py,pz[,qw,qx,qy,qz[,vx,vy,vz]]

Config files are `key = value` lines; '#' starts a comment.
"""

from __future__ import annotations

import csv
from pathlib import Path as FilePath

import numpy as np

from .dynamics import ImuInput
from .filter import GainConfig, MeasurementBatch
from .groups import Pose, Rot3
from .simulate import ScenarioConfig, Trajectory
from .states import BearingSet

IMU_HEADER = ["t", "wx", "wy", "wz", "ax", "ay", "az"]
FEATURE_HEADER = ["t", "id", "bx", "by", "bz"]
TRAJECTORY_HEADER = ["t", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz"]

BEARING_NORM_TOL = 1e-6


class FormatError(ValueError):
    """Malformed input file; the message names the offending line."""


def _read_rows(path, expected_header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if [h.strip() for h in header] != expected_header:
            raise FormatError(
                f"{path}: line 1: expected header {','.join(expected_header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            yield lineno, row


def read_imu_csv(path) -> list[ImuInput]:
    """Parse an IMU stream; rejects non-monotonic or malformed rows."""
    stream: list[ImuInput] = []
    last_t = None
    for lineno, row in _read_rows(path, IMU_HEADER):
        if len(row) != 7:
            raise FormatError(f"{path}: line {lineno}: expected 7 fields")
        try:
            vals = [float(v) for v in row]
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: non-numeric field") from None
        t = vals[0]
        if last_t is not None and t <= last_t:
            raise FormatError(
                f"{path}: line {lineno}: timestamp {t} does not increase")
        last_t = t
        stream.append(ImuInput(vals[1:4], vals[4:7], t))
    return stream


def write_imu_csv(path, stream) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(IMU_HEADER)
        for u in stream:
            writer.writerow([repr(float(u.t))] +
                            [repr(float(v)) for v in u.omega] +
                            [repr(float(v)) for v in u.accel])


def read_features_csv(path) -> list[MeasurementBatch]:
    """Parse bearing tracks grouped into per-timestamp batches."""
    frames: dict[float, dict[int, np.ndarray]] = {}
    order: list[float] = []
    for lineno, row in _read_rows(path, FEATURE_HEADER):
        if len(row) != 5:
            raise FormatError(f"{path}: line {lineno}: expected 5 fields")
        try:
            t = float(row[0])
            lid = int(row[1])
            b = np.array([float(v) for v in row[2:5]])
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: non-numeric field") from None
        norm = float(np.linalg.norm(b))
        if abs(norm - 1.0) > BEARING_NORM_TOL:
            raise FormatError(
                f"{path}: line {lineno}: bearing norm {norm:.6f} is not 1")
        if t not in frames:
            frames[t] = {}
            order.append(t)
        if lid in frames[t]:
            raise FormatError(
                f"{path}: line {lineno}: duplicate (t, id) = ({t}, {lid})")
        frames[t][lid] = b / norm
    batches = []
    for t in sorted(order):
        ids = tuple(frames[t])
        units = np.stack([frames[t][lid] for lid in ids])
        batches.append(MeasurementBatch(t, BearingSet(ids, units)))
    return batches


def write_features_csv(path, batches) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FEATURE_HEADER)
        for batch in batches:
            for lid in batch.ids:
                b = batch.bearings.bearing(lid)
                writer.writerow([repr(float(batch.t)), lid] +
                                [repr(float(v)) for v in b])


def write_trajectory_csv(path, rows) -> None:
    """rows: iterable of (t, Pose, velocity 3-vector)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_HEADER)
        for t, pose, vel in rows:
            q = pose.rotation.as_quat()
            writer.writerow([repr(float(t))] +
                            [repr(float(v)) for v in pose.translation] +
                            [repr(float(v)) for v in q] +
                            [repr(float(v)) for v in vel])


def read_trajectory_csv(path) -> Trajectory:
    """Read a trajectory or truth CSV; quaternions/velocities are optional."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if header[:4] != ["t", "px", "py", "pz"]:
            raise FormatError(f"{path}: line 1: expected header t,px,py,pz[,...]")
        has_quat = header[4:8] == ["qw", "qx", "qy", "qz"]
        has_vel = header[8:11] == ["vx", "vy", "vz"]
        times, pos, quat, vel = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < len(header):
                raise FormatError(f"{path}: line {lineno}: too few fields")
            try:
                vals = [float(v) for v in row[:len(header)]]
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: non-numeric field") from None
            times.append(vals[0])
            pos.append(vals[1:4])
            if has_quat:
                quat.append(vals[4:8])
            if has_vel:
                vel.append(vals[8:11])
    return Trajectory(np.array(times), np.array(pos).reshape(-1, 3),
                      np.array(quat) if has_quat else None,
                      np.array(vel) if has_vel else None)


# ---------------------------------------------------------------------------
# Flat key-value configuration files
# ---------------------------------------------------------------------------

def read_kv_file(path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise FormatError(f"{path}: line {lineno}: expected key = value")
            key, value = stripped.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def write_kv_file(path, values: dict) -> None:
    with open(path, "w") as fh:
        for key, value in values.items():
            fh.write(f"{key} = {value}\n")


def read_gains_file(path) -> GainConfig:
    return GainConfig.from_mapping(read_kv_file(path))


def read_scenario_file(path) -> ScenarioConfig:
    return ScenarioConfig.from_mapping(read_kv_file(path))


EXTRINSICS_KEYS = ("qw", "qx", "qy", "qz", "tx", "ty", "tz")


def read_extrinsics_file(path) -> Pose:
    """Camera-to-body pose from keys qw,qx,qy,qz,tx,ty,tz."""
    values = read_kv_file(path)
    missing = [k for k in EXTRINSICS_KEYS if k not in values]
    if missing:
        raise FormatError(f"{path}: missing extrinsics keys {missing}")
    q = [float(values[k]) for k in EXTRINSICS_KEYS[:4]]
    t = [float(values[k]) for k in EXTRINSICS_KEYS[4:]]
    return Pose(Rot3.from_quat(q), np.array(t))


def write_extrinsics_file(path, t_cam: Pose) -> None:
    q = t_cam.rotation.as_quat()
    values = {k: repr(float(v)) for k, v in zip(EXTRINSICS_KEYS, list(q) + list(t_cam.translation))}
    write_kv_file(path, values)


def write_truth_files(out_dir, truth, imu_stream, batches) -> dict[str, FilePath]:
    """Export a generated scenario in the pipeline's input formats."""
    out_dir = FilePath(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "imu": out_dir / "imu.csv",
        "features": out_dir / "features.csv",
        "truth": out_dir / "truth.csv",
        "meta": out_dir / "meta.txt",
    }
    write_imu_csv(paths["imu"], imu_stream)
    write_features_csv(paths["features"], batches)
    write_trajectory_csv(
        paths["truth"],
        [(t, s.pose, s.vel) for t, s in zip(truth.times, truth.states)])
    bias = truth.bias
    write_kv_file(paths["meta"], {
        "gyro_bias": ",".join(repr(float(v)) for v in bias.b_omega),
        "accel_bias": ",".join(repr(float(v)) for v in bias.b_accel),
    })
    return paths
