"""Rotate IMU accelerations into the motion-capture reference frame."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import CalibError

UNIT_TOL = 1e-6


def _unit(q, what: str) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != 4:
        raise CalibError(f"{what} must have 4 components, got shape {q.shape}")
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(np.abs(norm - 1.0) > UNIT_TOL):
        raise CalibError(f"{what} is not a unit quaternion (|q| off by > {UNIT_TOL})")
    return q / norm


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrices from scalar-first (w, x, y, z) unit quaternions."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
        np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
        np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
    ], -2)


@dataclass(frozen=True)
class FrameCalib:
    """Scalar-first quaternions: IMU->inertial per timestep, inertial->reference once."""

    q_imu_to_inertial: np.ndarray  # (T, 4)
    q_inertial_to_ref: np.ndarray  # (4,)

    def __post_init__(self):
        object.__setattr__(self, "q_imu_to_inertial",
                           _unit(np.atleast_2d(self.q_imu_to_inertial), "IMU orientation"))
        object.__setattr__(self, "q_inertial_to_ref", _unit(self.q_inertial_to_ref, "reference calibration"))

    @classmethod
    def from_recorded(cls, q_imu_wxyz, q_ref_xyzw) -> "FrameCalib":
        """Orientation streams store (w, x, y, z); calibration files store (x, y, z, w)."""
        q_ref = np.asarray(q_ref_xyzw, dtype=float)
        return cls(np.asarray(q_imu_wxyz, dtype=float), np.roll(q_ref, 1, axis=-1))


def imu_to_reference(a_imu, calib: FrameCalib) -> np.ndarray:
    """a_ref[t] = R(inertial->ref) @ R(imu->inertial)[t] @ a_imu[t]."""
    a = np.asarray(a_imu, dtype=float)
    if a.ndim != 2 or a.shape[1] != 3:
        raise CalibError(f"accelerations must be (T, 3), got {a.shape}")
    R_imu = quat_to_matrix(calib.q_imu_to_inertial)
    if R_imu.shape[0] not in (1, a.shape[0]):
        raise CalibError(f"{R_imu.shape[0]} orientations for {a.shape[0]} samples")
    R_ref = quat_to_matrix(calib.q_inertial_to_ref)
    R = np.matmul(R_ref, R_imu)
    return np.einsum("tij,tj->ti", np.broadcast_to(R, (a.shape[0], 3, 3)), a)
