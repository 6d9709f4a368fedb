"""Head-pose kinematics from Euler-angle time series.

Axis naming used throughout the package: pitch rotates about x (nodding),
yaw about y (turning), roll about z (tilting). A pose is the intrinsic
composition

    R = Rz(roll) @ Ry(yaw) @ Rx(pitch)

and angular velocity is read from the scaled relative rotation between
consecutive frames,

    W = (R_next @ R_t.T - I) / dt,

projected onto its antisymmetric part, with components

    wx = W[2, 1],  wy = W[0, 2],  wz = W[1, 0].

Acceleration is the forward difference of consecutive velocity samples.
All angles are radians internally. Velocity and acceleration samples carry
the timestamp of their left endpoint, so N poses yield N-1 velocity and
N-2 acceleration samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, TooShortError

# Orthonormality / unit-determinant tolerance for accepting a rotation matrix.
ROTATION_TOL = 1e-9


@dataclass(frozen=True)
class PoseSeries:
    """Timestamped pitch/yaw/roll samples for one recording, in radians.

    Attributes
    ----------
    recording_id : str
        Identifier carried through every downstream artifact.
    t : ndarray, shape (N,)
        Sample timestamps in seconds, strictly increasing.
    angles : ndarray, shape (N, 3)
        Columns are pitch, yaw, roll in radians.
    """

    recording_id: str
    t: np.ndarray
    angles: np.ndarray

    def __post_init__(self) -> None:
        t = np.ascontiguousarray(self.t, dtype=np.float64)
        angles = np.ascontiguousarray(self.angles, dtype=np.float64)
        if t.ndim != 1:
            raise InvalidInputError("timestamps must be a 1-D array")
        if t.size == 0:
            raise TooShortError("pose series is empty")
        if angles.shape != (t.size, 3):
            raise InvalidInputError(
                f"angles shape {angles.shape} does not match {t.size} timestamps"
            )
        if not np.all(np.isfinite(t)) or not np.all(np.isfinite(angles)):
            raise InvalidInputError("pose series contains non-finite values")
        if t.size > 1 and not np.all(np.diff(t) > 0.0):
            raise InvalidInputError("timestamps must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "angles", angles)

    def __len__(self) -> int:
        return int(self.t.size)

    @property
    def pitch(self) -> np.ndarray:
        return self.angles[:, 0]

    @property
    def yaw(self) -> np.ndarray:
        return self.angles[:, 1]

    @property
    def roll(self) -> np.ndarray:
        return self.angles[:, 2]

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])


@dataclass(frozen=True)
class KinematicSeries:
    """Angles plus derived angular velocity and acceleration for one recording.

    Velocity sample i describes the interval between poses i and i+1 and is
    stamped with the interval's left endpoint t[i]; acceleration sample i is
    the forward difference of velocity samples i and i+1, stamped t[i].
    """

    recording_id: str
    t: np.ndarray            # (N,) pose timestamps, seconds
    angles: np.ndarray       # (N, 3) pitch, yaw, roll, radians
    t_velocity: np.ndarray   # (N-1,)
    velocity: np.ndarray     # (N-1, 3) wx, wy, wz, rad/s
    t_acceleration: np.ndarray  # (N-2,)
    acceleration: np.ndarray    # (N-2, 3) ax, ay, az, rad/s^2

    def __len__(self) -> int:
        return int(self.t.size)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])


def _rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def is_rotation(r: np.ndarray, tol: float = ROTATION_TOL) -> bool:
    """True when r is orthonormal with determinant +1 within tol."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        return False
    if not np.allclose(r @ r.T, np.eye(3), rtol=0.0, atol=tol):
        return False
    return bool(abs(np.linalg.det(r) - 1.0) <= tol)


def _check_rotation(r: np.ndarray, name: str) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if not is_rotation(r):
        raise InvalidInputError(f"{name} is not a valid rotation matrix")
    return r


def euler_to_rotation(pitch: float, yaw: float, roll: float) -> np.ndarray:
    """Build the pose rotation Rz(roll) @ Ry(yaw) @ Rx(pitch).

    Args:
        pitch: rotation about x, radians.
        yaw: rotation about y, radians.
        roll: rotation about z, radians.

    Returns:
        (3, 3) rotation matrix.
    """
    if not (np.isfinite(pitch) and np.isfinite(yaw) and np.isfinite(roll)):
        raise InvalidInputError("euler angles must be finite")
    return _rot_z(roll) @ _rot_y(yaw) @ _rot_x(pitch)


def rotation_to_euler(r: np.ndarray) -> tuple[float, float, float]:
    """Recover (pitch, yaw, roll) from a rotation built by euler_to_rotation.

    Near the yaw singularity (|yaw| -> pi/2) pitch and roll are not separable;
    roll is then reported as 0 and pitch absorbs the remaining rotation.
    """
    r = _check_rotation(r, "rotation")
    sy = -r[2, 0]
    if abs(sy) < 1.0 - 1e-9:
        yaw = float(np.arcsin(sy))
        pitch = float(np.arctan2(r[2, 1], r[2, 2]))
        roll = float(np.arctan2(r[1, 0], r[0, 0]))
    else:
        yaw = float(np.arcsin(np.clip(sy, -1.0, 1.0)))
        pitch = float(np.arctan2(-r[1, 2], r[1, 1]))
        roll = 0.0
    return pitch, yaw, roll


def rotation_matrices(angles: np.ndarray) -> np.ndarray:
    """Vectorized euler_to_rotation for an (N, 3) array of pitch/yaw/roll."""
    angles = np.asarray(angles, dtype=np.float64)
    if angles.ndim != 2 or angles.shape[1] != 3:
        raise InvalidInputError("angles must have shape (N, 3)")
    if not np.all(np.isfinite(angles)):
        raise InvalidInputError("angles must be finite")
    n = angles.shape[0]
    cp, sp = np.cos(angles[:, 0]), np.sin(angles[:, 0])
    cy, sy = np.cos(angles[:, 1]), np.sin(angles[:, 1])
    cr, sr = np.cos(angles[:, 2]), np.sin(angles[:, 2])
    zero = np.zeros(n)
    one = np.ones(n)
    rx = np.stack(
        [one, zero, zero, zero, cp, -sp, zero, sp, cp], axis=1
    ).reshape(n, 3, 3)
    ry = np.stack(
        [cy, zero, sy, zero, one, zero, -sy, zero, cy], axis=1
    ).reshape(n, 3, 3)
    rz = np.stack(
        [cr, -sr, zero, sr, cr, zero, zero, zero, one], axis=1
    ).reshape(n, 3, 3)
    return rz @ ry @ rx


def rodrigues(v: np.ndarray) -> np.ndarray:
    """Rotation matrix for a single axis-angle vector (rotation by |v| about v).

    The inverse of the rate extraction: integrating a constant angular
    velocity w over dt advances the pose by rodrigues(w * dt).
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise InvalidInputError("axis-angle vector must be a finite (3,) array")
    theta = float(np.linalg.norm(v))
    if theta == 0.0:
        return np.eye(3)
    x, y, z = v / theta
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def rate_matrix(r_t: np.ndarray, r_next: np.ndarray, dt: float) -> np.ndarray:
    """Antisymmetrized rate matrix (R_next @ R_t.T - I)/dt for one frame step."""
    r_t = _check_rotation(r_t, "r_t")
    r_next = _check_rotation(r_next, "r_next")
    if not (np.isfinite(dt) and dt > 0.0):
        raise InvalidInputError("time step must be positive and finite")
    w = (r_next @ r_t.T - np.eye(3)) / dt
    return 0.5 * (w - w.T)


def angular_velocity(r_t: np.ndarray, r_next: np.ndarray, dt: float) -> np.ndarray:
    """Angular velocity (wx, wy, wz) in rad/s between two consecutive poses."""
    w = rate_matrix(r_t, r_next, dt)
    return np.array([w[2, 1], w[0, 2], w[1, 0]])


def angular_acceleration(w_t: np.ndarray, w_next: np.ndarray, dt: float) -> np.ndarray:
    """Forward-difference angular acceleration (w_next - w_t)/dt in rad/s^2."""
    w_t = np.asarray(w_t, dtype=np.float64)
    w_next = np.asarray(w_next, dtype=np.float64)
    if w_t.shape != (3,) or w_next.shape != (3,):
        raise InvalidInputError("velocity samples must have shape (3,)")
    if not (np.all(np.isfinite(w_t)) and np.all(np.isfinite(w_next))):
        raise InvalidInputError("velocity samples must be finite")
    if not (np.isfinite(dt) and dt > 0.0):
        raise InvalidInputError("time step must be positive and finite")
    return (w_next - w_t) / dt


def compute_kinematics(series: PoseSeries) -> KinematicSeries:
    """Derive angular velocity and acceleration for a whole pose series.

    Args:
        series: pose series with at least 3 samples.

    Returns:
        KinematicSeries with N angles, N-1 velocity samples and N-2
        acceleration samples, all stamped at interval left endpoints.
    """
    n = len(series)
    if n < 3:
        raise TooShortError(
            f"need at least 3 pose samples to derive acceleration, got {n}"
        )
    r = rotation_matrices(series.angles)
    dt = np.diff(series.t)
    w = (r[1:] @ np.swapaxes(r[:-1], 1, 2) - np.eye(3)) / dt[:, None, None]
    w = 0.5 * (w - np.swapaxes(w, 1, 2))
    velocity = np.stack([w[:, 2, 1], w[:, 0, 2], w[:, 1, 0]], axis=1)
    # Velocity samples sit at t[:-1]; their spacing is dt[:-1].
    acceleration = np.diff(velocity, axis=0) / dt[:-1, None]
    if not (np.all(np.isfinite(velocity)) and np.all(np.isfinite(acceleration))):
        raise InvalidInputError("derived kinematics contain non-finite values")
    return KinematicSeries(
        recording_id=series.recording_id,
        t=series.t,
        angles=series.angles,
        t_velocity=series.t[:-1],
        velocity=velocity,
        t_acceleration=series.t[:-2],
        acceleration=acceleration,
    )
