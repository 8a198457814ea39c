"""Frames, attitude representations and small linear-algebra helpers.

Conventions used throughout the package:

* navigation frame ``n`` is a local, flat North-East-Down frame;
* Euler angles are ZYX (yaw, pitch, roll) and ``euler_to_dcm`` returns the
  body-to-reference matrix ``C = Rz(yaw) @ Ry(pitch) @ Rx(roll)``;
* quaternions are Hamilton, scalar first ``[w, x, y, z]`` and encode the same
  body-to-reference rotation.

The numeric kernels are compiled with numba so the filter loop can call them
without Python overhead; they remain ordinary callables from Python.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from numba import njit

GRAVITY = 9.80665
D2R = math.pi / 180.0
R2D = 180.0 / math.pi
DEG_PER_HOUR = D2R / 3600.0
GIMBAL_EPS = 1e-9


class Euler(NamedTuple):
    """ZYX Euler angles in radians; yaw is heading clockwise from north."""

    roll: float
    pitch: float
    yaw: float


@njit(cache=True)
def skew(v):
    """Cross-product matrix: ``skew(v) @ w == np.cross(v, w)``."""
    out = np.zeros((3, 3))
    out[0, 1] = -v[2]
    out[0, 2] = v[1]
    out[1, 0] = v[2]
    out[1, 2] = -v[0]
    out[2, 0] = -v[1]
    out[2, 1] = v[0]
    return out


@njit(cache=True)
def normalize_angle(a):
    """Wrap an angle to (-pi, pi]."""
    two_pi = 2.0 * math.pi
    a = a - two_pi * math.floor((a + math.pi) / two_pi)
    if a <= -math.pi:
        a += two_pi
    return a


def normalize_angles(a):
    """Vectorised :func:`normalize_angle` for arrays."""
    a = np.asarray(a, dtype=float)
    out = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    out[out == -np.pi] = np.pi
    return out


@njit(cache=True)
def _euler_to_dcm(roll, pitch, yaw):
    sr, cr = math.sin(roll), math.cos(roll)
    sp, cp = math.sin(pitch), math.cos(pitch)
    sy, cy = math.sin(yaw), math.cos(yaw)
    c = np.empty((3, 3))
    c[0, 0] = cp * cy
    c[0, 1] = -cr * sy + sr * sp * cy
    c[0, 2] = sr * sy + cr * sp * cy
    c[1, 0] = cp * sy
    c[1, 1] = cr * cy + sr * sp * sy
    c[1, 2] = -sr * cy + cr * sp * sy
    c[2, 0] = -sp
    c[2, 1] = sr * cp
    c[2, 2] = cr * cp
    return c


def euler_to_dcm(e) -> np.ndarray:
    """Rotation matrix ``Rz(yaw) Ry(pitch) Rx(roll)`` for ZYX Euler angles.

    With ``e = (0, 0, psi)`` this is the planar heading matrix
    ``[[cos, -sin, 0], [sin, cos, 0], [0, 0, 1]]``.

    Raises
    ------
    ValueError
        If the pitch is at (or numerically indistinguishable from) +-pi/2.
    """
    roll, pitch, yaw = (float(x) for x in e)
    if abs(abs(pitch) - math.pi / 2.0) < GIMBAL_EPS or abs(pitch) > math.pi / 2.0:
        raise ValueError(f"pitch {pitch!r} outside the open interval (-pi/2, pi/2)")
    return _euler_to_dcm(roll, pitch, yaw)


@njit(cache=True)
def _dcm_to_euler(c):
    pitch = math.atan2(-c[2, 0], math.sqrt(c[2, 1] ** 2 + c[2, 2] ** 2))
    roll = math.atan2(c[2, 1], c[2, 2])
    yaw = math.atan2(c[1, 0], c[0, 0])
    return normalize_angle(roll), pitch, normalize_angle(yaw)


def dcm_to_euler(c) -> Euler:
    """Inverse of :func:`euler_to_dcm` away from gimbal lock."""
    c = np.asarray(c, dtype=float)
    if abs(c[2, 0]) >= 1.0 - GIMBAL_EPS:
        raise ValueError("gimbal lock: |C[2, 0]| too close to 1")
    return Euler(*_dcm_to_euler(c))


@njit(cache=True)
def yaw_of(c):
    """Heading of the body x-axis for a body-to-nav matrix."""
    return math.atan2(c[1, 0], c[0, 0])


@njit(cache=True)
def rz(psi):
    c, s = math.cos(psi), math.sin(psi)
    out = np.eye(3)
    out[0, 0] = c
    out[0, 1] = -s
    out[1, 0] = s
    out[1, 1] = c
    return out


# -- quaternions ------------------------------------------------------------


@njit(cache=True)
def quat_mul(p, q):
    out = np.empty(4)
    out[0] = p[0] * q[0] - p[1] * q[1] - p[2] * q[2] - p[3] * q[3]
    out[1] = p[0] * q[1] + p[1] * q[0] + p[2] * q[3] - p[3] * q[2]
    out[2] = p[0] * q[2] - p[1] * q[3] + p[2] * q[0] + p[3] * q[1]
    out[3] = p[0] * q[3] + p[1] * q[2] - p[2] * q[1] + p[3] * q[0]
    return out


@njit(cache=True)
def quat_from_rotvec(rv):
    angle = math.sqrt(rv[0] ** 2 + rv[1] ** 2 + rv[2] ** 2)
    out = np.empty(4)
    if angle < 1e-8:
        # series keeps the result exact to double precision for tiny angles
        a2 = angle * angle
        out[0] = 1.0 - a2 / 8.0
        k = 0.5 - a2 / 48.0
    else:
        out[0] = math.cos(0.5 * angle)
        k = math.sin(0.5 * angle) / angle
    out[1] = k * rv[0]
    out[2] = k * rv[1]
    out[3] = k * rv[2]
    return out


@njit(cache=True)
def quat_normalize(q):
    return q / math.sqrt(q[0] ** 2 + q[1] ** 2 + q[2] ** 2 + q[3] ** 2)


@njit(cache=True)
def quat_to_dcm(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    c = np.empty((3, 3))
    c[0, 0] = w * w + x * x - y * y - z * z
    c[0, 1] = 2.0 * (x * y - w * z)
    c[0, 2] = 2.0 * (x * z + w * y)
    c[1, 0] = 2.0 * (x * y + w * z)
    c[1, 1] = w * w - x * x + y * y - z * z
    c[1, 2] = 2.0 * (y * z - w * x)
    c[2, 0] = 2.0 * (x * z - w * y)
    c[2, 1] = 2.0 * (y * z + w * x)
    c[2, 2] = w * w - x * x - y * y + z * z
    return c


@njit(cache=True)
def dcm_to_quat(c):
    tr = c[0, 0] + c[1, 1] + c[2, 2]
    q = np.empty(4)
    if tr > 0.0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q[0] = 0.25 * s
        q[1] = (c[2, 1] - c[1, 2]) / s
        q[2] = (c[0, 2] - c[2, 0]) / s
        q[3] = (c[1, 0] - c[0, 1]) / s
    elif c[0, 0] > c[1, 1] and c[0, 0] > c[2, 2]:
        s = 2.0 * math.sqrt(1.0 + c[0, 0] - c[1, 1] - c[2, 2])
        q[0] = (c[2, 1] - c[1, 2]) / s
        q[1] = 0.25 * s
        q[2] = (c[0, 1] + c[1, 0]) / s
        q[3] = (c[0, 2] + c[2, 0]) / s
    elif c[1, 1] > c[2, 2]:
        s = 2.0 * math.sqrt(1.0 + c[1, 1] - c[0, 0] - c[2, 2])
        q[0] = (c[0, 2] - c[2, 0]) / s
        q[1] = (c[0, 1] + c[1, 0]) / s
        q[2] = 0.25 * s
        q[3] = (c[1, 2] + c[2, 1]) / s
    else:
        s = 2.0 * math.sqrt(1.0 + c[2, 2] - c[0, 0] - c[1, 1])
        q[0] = (c[1, 0] - c[0, 1]) / s
        q[1] = (c[0, 2] + c[2, 0]) / s
        q[2] = (c[1, 2] + c[2, 1]) / s
        q[3] = 0.25 * s
    if q[0] < 0.0:
        q = -q
    return quat_normalize(q)


@njit(cache=True)
def rotvec_from_dcm(c):
    """Rotation vector (axis * angle) of a rotation matrix."""
    q = dcm_to_quat(c)
    vn = math.sqrt(q[1] ** 2 + q[2] ** 2 + q[3] ** 2)
    out = np.zeros(3)
    if vn < 1e-300:
        return out
    angle = 2.0 * math.atan2(vn, q[0])
    out[0] = q[1] / vn * angle
    out[1] = q[2] / vn * angle
    out[2] = q[3] / vn * angle
    return out


def is_rotation(c, tol: float = 1e-9) -> bool:
    c = np.asarray(c, dtype=float)
    return bool(
        np.allclose(c.T @ c, np.eye(3), atol=tol) and abs(np.linalg.det(c) - 1.0) < tol
    )


class Trajectory:
    """Time series of position and ZYX attitude, optionally with velocity.

    Used both for ground truth and for filter estimates written to disk.
    """

    def __init__(self, t, pos, euler, vel=None):
        self.t = np.asarray(t, dtype=float)
        self.pos = np.asarray(pos, dtype=float).reshape(-1, 3)
        self.euler = np.asarray(euler, dtype=float).reshape(-1, 3)
        self.vel = None if vel is None else np.asarray(vel, dtype=float).reshape(-1, 3)
        n = len(self.t)
        if self.pos.shape[0] != n or self.euler.shape[0] != n:
            raise ValueError("trajectory columns have different lengths")
        if self.vel is not None and self.vel.shape[0] != n:
            raise ValueError("velocity column has the wrong length")
        if n > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("trajectory timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def heading(self) -> np.ndarray:
        return self.euler[:, 2]

    def pose_at(self, t: float):
        """Interpolated ``(position, heading)`` at time ``t``."""
        if not self.t[0] <= t <= self.t[-1]:
            raise ValueError(f"time {t!r} outside trajectory span")
        pos = np.array([np.interp(t, self.t, self.pos[:, i]) for i in range(3)])
        c = np.interp(t, self.t, np.cos(self.heading))
        s = np.interp(t, self.t, np.sin(self.heading))
        return pos, math.atan2(s, c)

    def slice_time(self, t0: float, t1: float) -> "Trajectory":
        m = (self.t >= t0) & (self.t <= t1)
        return Trajectory(self.t[m], self.pos[m], self.euler[m],
                          None if self.vel is None else self.vel[m])
