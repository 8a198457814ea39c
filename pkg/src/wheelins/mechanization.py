"""Strapdown propagation of the Wheel-IMU position, velocity and attitude.

The navigation frame is a flat, non-rotating NED frame anchored at the start
point, so earth rate and transport rate are ignored.

Each IMU record is treated as the *mean* rate and specific force over the
interval that ends at its timestamp (the way increment-output IMUs report).
The step is first order in attitude (single rotation vector, no coning term),
projects the specific force with the mid-interval attitude and integrates
position with the trapezoidal rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .core import (
    GRAVITY,
    dcm_to_euler,
    dcm_to_quat,
    euler_to_dcm,
    quat_from_rotvec,
    quat_mul,
    quat_normalize,
    quat_to_dcm,
)


class AlignmentError(ValueError):
    """Raised when the initial static window cannot be used for leveling."""


def _vec(x) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(3).copy()


@dataclass(frozen=True)
class ImuSample:
    t: float
    gyro: np.ndarray  # rad/s, body frame
    accel: np.ndarray  # m/s^2 specific force, body frame

    def __post_init__(self):
        object.__setattr__(self, "gyro", _vec(self.gyro))
        object.__setattr__(self, "accel", _vec(self.accel))


@dataclass
class ImuData:
    """A time-ordered IMU stream stored column-wise."""

    t: np.ndarray
    gyro: np.ndarray  # (N, 3)
    accel: np.ndarray  # (N, 3)

    @classmethod
    def from_array(cls, a) -> "ImuData":
        a = np.asarray(a, dtype=float)
        return cls(a[:, 0].copy(), a[:, 1:4].copy(), a[:, 4:7].copy())

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.t, self.gyro, self.accel])

    def __len__(self) -> int:
        return len(self.t)

    def sample(self, i: int) -> ImuSample:
        return ImuSample(self.t[i], self.gyro[i], self.accel[i])

    def slice_time(self, t0: float, t1: float) -> "ImuData":
        m = (self.t >= t0) & (self.t <= t1)
        return ImuData(self.t[m], self.gyro[m], self.accel[m])

    @property
    def rate(self) -> float:
        return 1.0 / float(np.median(np.diff(self.t)))


@dataclass
class NavState:
    t: float
    pos: np.ndarray
    vel: np.ndarray
    quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        self.pos = _vec(self.pos)
        self.vel = _vec(self.vel)
        self.quat = quat_normalize(np.asarray(self.quat, dtype=float))

    @classmethod
    def from_euler(cls, t, pos, vel, euler) -> "NavState":
        return cls(t, pos, vel, dcm_to_quat(euler_to_dcm(euler)))

    @classmethod
    def from_dcm(cls, t, pos, vel, c) -> "NavState":
        return cls(t, pos, vel, dcm_to_quat(np.asarray(c, dtype=float)))

    @property
    def dcm(self) -> np.ndarray:
        """Body-to-navigation rotation matrix."""
        return quat_to_dcm(self.quat)

    @property
    def euler(self):
        return dcm_to_euler(self.dcm)

    def copy(self) -> "NavState":
        return NavState(self.t, self.pos.copy(), self.vel.copy(), self.quat.copy())


@dataclass
class SensorErrors:
    """Estimated gyro/accel biases and scale-factor errors used for compensation."""

    bg: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ba: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sg: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sa: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("bg", "ba", "sg", "sa"):
            setattr(self, name, _vec(getattr(self, name)))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.bg, self.ba, self.sg, self.sa])

    @classmethod
    def from_vector(cls, x) -> "SensorErrors":
        x = np.asarray(x, dtype=float)
        return cls(x[0:3], x[3:6], x[6:9], x[9:12])


# -- kernels ---------------------------------------------------------------


@njit(cache=True)
def compensate_arrays(gyro, accel, err):
    """Remove bias and scale factor: ``(raw - b) / (1 + s)`` elementwise.

    ``err`` is the 12-vector ``[bg, ba, sg, sa]``.
    """
    g = np.empty(3)
    a = np.empty(3)
    for i in range(3):
        g[i] = (gyro[i] - err[i]) / (1.0 + err[6 + i])
        a[i] = (accel[i] - err[3 + i]) / (1.0 + err[9 + i])
    return g, a


@njit(cache=True)
def mech_step(pos, vel, quat, gyro, accel, dt, g):
    """Advance (pos, vel, quat) by one interval of length ``dt``."""
    dtheta = gyro * dt
    q_mid = quat_mul(quat, quat_from_rotvec(0.5 * dtheta))
    c_mid = quat_to_dcm(q_mid)
    acc_n = c_mid @ accel
    acc_n[2] += g
    vel_new = vel + acc_n * dt
    quat_new = quat_normalize(quat_mul(quat, quat_from_rotvec(dtheta)))
    pos_new = pos + 0.5 * (vel + vel_new) * dt
    return pos_new, vel_new, quat_new


# -- public API --------------------------------------------------------------


def compensate(sample: ImuSample, err: SensorErrors) -> ImuSample:
    g, a = compensate_arrays(sample.gyro, sample.accel, err.as_vector())
    return ImuSample(sample.t, g, a)


def propagate(nav: NavState, prev: ImuSample, curr: ImuSample, g: float = GRAVITY) -> NavState:
    """One strapdown step from ``prev.t`` to ``curr.t`` using ``curr``'s outputs.

    ``nav`` must be valid at ``prev.t``; samples must already be compensated.
    """
    dt = curr.t - prev.t
    if not dt > 0.0:
        raise ValueError(f"non-increasing timestamps: {prev.t!r} -> {curr.t!r}")
    pos, vel, quat = mech_step(nav.pos, nav.vel, nav.quat, curr.gyro, curr.accel, dt, g)
    return NavState(curr.t, pos, vel, quat)


def leveling(f_mean) -> tuple[float, float]:
    """Roll and pitch from a mean specific-force vector (NED, z down)."""
    fx, fy, fz = np.asarray(f_mean, dtype=float)
    roll = math.atan2(-fy, -fz)
    pitch = math.atan2(fx, math.hypot(fy, fz))
    return roll, pitch


def static_align(imu: ImuData, g: float = GRAVITY, *, detector=None, min_span: float = 0.0):
    """Coarse alignment from a static window.

    Returns ``(roll, pitch, bg_init)`` where the gyro bias estimate is simply
    the mean angular rate over the window.

    Parameters
    ----------
    imu:
        Static window of (mounting-compensated) samples.
    detector:
        Optional ``callable(gyro, accel) -> bool`` used to reject a window in
        which the vehicle is moving.
    min_span:
        Minimum window length in seconds.
    """
    if len(imu) < 2:
        raise AlignmentError("static window needs at least two samples")
    span = imu.t[-1] - imu.t[0]
    if span + 1e-9 < min_span:
        raise AlignmentError(f"static window spans {span:.3f} s, need {min_span:.3f} s")
    if detector is not None and not detector(imu.gyro, imu.accel):
        raise AlignmentError("initial window is not stationary")
    f_mean = imu.accel.mean(axis=0)
    if abs(np.linalg.norm(f_mean) - g) > 0.1 * g:
        raise AlignmentError(
            f"mean specific force {np.linalg.norm(f_mean):.3f} m/s^2 is far from gravity"
        )
    roll, pitch = leveling(f_mean)
    return roll, pitch, imu.gyro.mean(axis=0)

