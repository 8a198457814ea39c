"""Measurements and Jacobians: wheel speed with non-holonomic constraints,
mounting-angle compensation, stationarity detection, ZUPT and ZIHR.

The vehicle frame (forward-right-down) is tied to the IMU heading through a
fixed offset: for the wheel-mounted IMU the x-axis lies on the axle and points
to the right, so ``psi_vehicle = psi_imu - pi/2``; vehicle roll and pitch are
taken as zero.  A body-mounted IMU (odometer baseline) uses an offset of 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import D2R, euler_to_dcm, normalize_angle, rz, skew, yaw_of
from .errormodel import ATT, BG, SG, VEL, check_dim
from .mechanization import ImuSample, NavState

MAX_MOUNTING = 15.0 * D2R


@dataclass(frozen=True)
class GeometryConfig:
    """Installation geometry of the IMU relative to the wheel.

    ``lever_b`` points from the IMU centre to the wheel centre and is resolved
    in the mounting-compensated IMU frame.  ``mounting_pitch`` and
    ``mounting_yaw`` define ``C_b^w = euler_to_dcm((0, pitch, yaw))``.

    ``speed_sign`` maps the axle rate to forward speed.  With the x-axis
    pointing to the right of the vehicle, forward rolling is a negative
    rotation about x, hence the default of -1.
    """

    wheel_radius: float = 0.3
    lever_b: tuple = (0.0, 0.0, 0.0)
    mounting_pitch: float = 0.0
    mounting_yaw: float = 0.0
    speed_sign: int = -1
    heading_offset: float = math.pi / 2.0
    wheel_mounted: bool = True

    def __post_init__(self):
        object.__setattr__(self, "lever_b", tuple(float(x) for x in self.lever_b))
        if len(self.lever_b) != 3:
            raise ValueError("lever_b must have three components")
        if not self.wheel_radius > 0.0:
            raise ValueError(f"wheel_radius must be positive, got {self.wheel_radius!r}")
        if self.speed_sign not in (1, -1):
            raise ValueError("speed_sign must be +1 or -1")
        if self.wheel_mounted:
            if np.linalg.norm(self.lever_b) >= self.wheel_radius:
                raise ValueError("a wheel-mounted IMU must sit inside the wheel radius")
            if abs(self.mounting_pitch) >= MAX_MOUNTING or abs(self.mounting_yaw) >= MAX_MOUNTING:
                raise ValueError("mounting angles must be below 15 degrees")

    @property
    def lever(self) -> np.ndarray:
        return np.array(self.lever_b, dtype=float)

    @property
    def mounting_dcm(self) -> np.ndarray:
        """``C_b^w``: rotates IMU-frame vectors into the wheel frame."""
        return euler_to_dcm((0.0, self.mounting_pitch, self.mounting_yaw))


@dataclass(frozen=True)
class VelocityMeasurement:
    z: np.ndarray  # vehicle-frame velocity (forward, lateral=0, vertical=0)
    R: np.ndarray


@dataclass(frozen=True)
class DetectorThresholds:
    gyro_std: float = 0.2 * D2R
    gyro_x_mean: float = 0.5 * D2R
    # sized for the 200 Hz, 3 m/s/sqrt(h) VRW accelerometer (0.7 m/s^2 per sample)
    accel_std: float = 1.0
    speed: float = 0.05
    window: float = 1.0


# -- kernels ---------------------------------------------------------------


@njit(cache=True)
def heading_gradient(c_bn):
    """d(yaw)/d(phi) for ``C_est = (I - phi x) C``."""
    c0 = c_bn[:, 0]
    den = c0[0] ** 2 + c0[1] ** 2
    grad = np.zeros(3)
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        d = -np.cross(e, c0)
        grad[k] = (c0[0] * d[1] - c0[1] * d[0]) / den
    return grad


@njit(cache=True)
def vehicle_dcm_kernel(c_bn, heading_offset):
    """``C_n^v`` from the IMU heading, assuming a level vehicle."""
    return rz(yaw_of(c_bn) - heading_offset).T.copy()


@njit(cache=True)
def predict_v_kernel(vel, c_bn, omega_b, lever, heading_offset):
    c_nv = vehicle_dcm_kernel(c_bn, heading_offset)
    return c_nv @ (vel + c_bn @ np.cross(omega_b, lever))


@njit(cache=True)
def velocity_jacobian(vel, c_bn, omega_b, lever, heading_offset, n, couple, radius, sign):
    c_nv = vehicle_dcm_kernel(c_bn, heading_offset)
    u = c_bn @ np.cross(omega_b, lever)
    H = np.zeros((3, n))
    H[:, VEL:VEL + 3] = c_nv
    # heading enters through C_n^v; at zero IMU pitch the gradient is (0, 0, -1)
    g = heading_gradient(c_bn)
    zhat = np.zeros(3)
    zhat[2] = 1.0
    col = c_nv @ (skew(vel + u) @ zhat)
    H[:, ATT:ATT + 3] = c_nv @ skew(u) + np.outer(col, g)
    if n > 9:
        m = -(c_nv @ c_bn @ skew(lever))
        H[:, BG:BG + 3] = m
        if couple:
            H[0, BG] -= sign * radius
    if n > 15:
        for j in range(3):
            H[:, SG + j] = m[:, j] * omega_b[j]
        if couple:
            H[0, SG] -= sign * radius * omega_b[0]
    return H


# -- public API -------------------------------------------------------------


def apply_mounting(sample: ImuSample, geo: GeometryConfig, inverse: bool = False) -> ImuSample:
    """Rotate a sample from the IMU frame into the wheel frame (or back)."""
    m = geo.mounting_dcm
    if inverse:
        m = m.T
    return ImuSample(sample.t, m @ sample.gyro, m @ sample.accel)


def wheel_speed(gyro_x, geo: GeometryConfig, base_R: float = 0.03**2,
                nhc_R: float = 0.05**2) -> VelocityMeasurement:
    """Forward speed from the axle rate plus zero lateral/vertical velocity."""
    gyro_x = np.atleast_1d(np.asarray(gyro_x, dtype=float))
    if gyro_x.size == 0:
        raise ValueError("empty gyro window")
    speed = geo.speed_sign * float(gyro_x.mean()) * geo.wheel_radius
    return VelocityMeasurement(np.array([speed, 0.0, 0.0]), np.diag([base_R, nhc_R, nhc_R]))


def vehicle_frame_dcm(c_bn, heading_offset: float = math.pi / 2.0) -> np.ndarray:
    """``C_n^v`` for a level vehicle whose heading is the IMU heading minus the offset."""
    return vehicle_dcm_kernel(np.asarray(c_bn, float), float(heading_offset))


def vehicle_heading(c_bn, heading_offset: float = math.pi / 2.0) -> float:
    return normalize_angle(yaw_of(np.asarray(c_bn, float)) - heading_offset)


def predict_v_velocity(nav: NavState, omega_b, geo: GeometryConfig) -> np.ndarray:
    """INS-indicated velocity of the wheel centre in the vehicle frame."""
    return predict_v_kernel(nav.vel, nav.dcm, np.asarray(omega_b, float), geo.lever,
                            geo.heading_offset)


def build_H_velocity(nav: NavState, omega_b, geo: GeometryConfig, dim_mode: int = 21,
                     couple_speed_error: bool = False) -> np.ndarray:
    """Jacobian of :func:`predict_v_velocity` minus the measured speed
    with respect to the error state.

    With ``couple_speed_error`` the dependence of the measured speed on the
    axle-gyro bias and scale factor is included as well.
    """
    n = check_dim(dim_mode)
    return velocity_jacobian(nav.vel, nav.dcm, np.asarray(omega_b, float), geo.lever,
                             geo.heading_offset, n, couple_speed_error,
                             geo.wheel_radius, float(geo.speed_sign))


def detect_stationary(gyro, accel, thresholds: DetectorThresholds = DetectorThresholds(),
                      speed=None) -> bool:
    """Standstill test on a window of gyro/accel samples.

    ``speed`` (optional window of odometer speeds) adds a speed test for IMUs
    that do not spin with the wheel.
    """
    gyro = np.atleast_2d(np.asarray(gyro, float))
    accel = np.atleast_2d(np.asarray(accel, float))
    if gyro.shape[0] == 0:
        return False
    ok = (
        gyro.std(axis=0).max() < thresholds.gyro_std
        and abs(gyro[:, 0].mean()) < thresholds.gyro_x_mean
        and accel.std(axis=0).max() < thresholds.accel_std
    )
    if ok and speed is not None and len(speed):
        ok = abs(float(np.mean(speed))) < thresholds.speed
    return bool(ok)


def zupt_measurement(nav: NavState, dim_mode: int = 21, sigma: float = 0.01):
    """Zero-velocity update: innovation, Jacobian and noise covariance."""
    n = check_dim(dim_mode)
    H = np.zeros((3, n))
    H[:, VEL:VEL + 3] = np.eye(3)
    return nav.vel.copy(), H, np.eye(3) * sigma**2


def zihr_measurement(c_bn, heading_prev: float, dim_mode: int = 21, sigma: float = 0.01 * D2R):
    """Zero-integrated-heading-rate update against the heading stored at the
    previous stationary epoch."""
    n = check_dim(dim_mode)
    c_bn = np.asarray(c_bn, float)
    z = np.array([normalize_angle(yaw_of(c_bn) - heading_prev)])
    H = np.zeros((1, n))
    H[0, ATT:ATT + 3] = heading_gradient(c_bn)
    return z, H, np.array([[sigma**2]])
