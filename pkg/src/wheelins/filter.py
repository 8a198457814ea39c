"""Closed-loop error-state EKF for Wheel-IMU dead reckoning.

The loop runs per IMU sample: mounting compensation, sensor-error
compensation, strapdown step and covariance propagation.  At the measurement
cadence a wheel-speed/NHC update is applied, or ZUPT/ZIHR when the vehicle is
detected stationary.  Corrections are fed back immediately so the error state
is zero between updates.

The same loop implements the conventional odometer-aided INS (``odo-ins``):
the forward speed then comes from an odometer stream, the IMU is body-mounted
and the heading offset between IMU and vehicle is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.stats import chi2

from .core import (
    D2R,
    DEG_PER_HOUR,
    GRAVITY,
    Trajectory,
    normalize_angle,
    quat_from_rotvec,
    quat_mul,
    quat_normalize,
    quat_to_dcm,
    yaw_of,
)
from .errormodel import ATT, MAX_DT, VEL, ErrorState, NoisePsd, check_dim, propagate_cov
from .mechanization import (
    AlignmentError,
    ImuData,
    NavState,
    SensorErrors,
    compensate_arrays,
    mech_step,
    static_align,
)
from .observations import (
    DetectorThresholds,
    GeometryConfig,
    detect_stationary,
    heading_gradient,
    predict_v_kernel,
    velocity_jacobian,
)

MODES = ("wheel-ins", "odo-ins")

# update log kinds
VEL_UPDATE, ZUPT_UPDATE, ZIHR_UPDATE = 0, 1, 2


class FilterError(ValueError):
    """Invalid input stream or configuration for a filter run."""


@dataclass(frozen=True)
class InitialStd:
    """Initial 1-sigma uncertainties of the error state."""

    pos: float = 0.01
    vel: float = 0.01
    roll_pitch: float = 0.5 * D2R
    heading: float = 0.5 * D2R
    bg: float = 200.0 * DEG_PER_HOUR
    ba: float = 0.01
    sg: float = 1000e-6
    sa: float = 1000e-6

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not v > 0.0:
                raise ValueError(f"initial std {k} must be positive, got {v!r}")

    def diag(self, n: int) -> np.ndarray:
        sig = np.repeat([self.pos, self.vel, 0.0, self.bg, self.ba, self.sg, self.sa], 3)
        sig[ATT:ATT + 3] = (self.roll_pitch, self.roll_pitch, self.heading)
        return (sig**2)[:n]


@dataclass(frozen=True)
class FilterConfig:
    """Filter settings.

    ``update_interval`` is the wheel-speed/NHC cadence (s); the forward speed
    is the mean axle rate over the trailing ``speed_window`` seconds (0 uses
    the latest sample only).  The
    first ``align_duration`` seconds must be static and are used for leveling
    and the initial gyro bias; filtering starts at their end.
    """

    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    dim_mode: int = 21
    mode: str = "wheel-ins"
    init_std: InitialStd = field(default_factory=InitialStd)
    noise: NoisePsd = field(default_factory=NoisePsd)
    gravity: float = GRAVITY
    update_interval: float = 1.0
    speed_window: float = 0.0
    speed_std: float = 0.03
    nhc_std: float = 0.05
    zupt: bool = True
    zihr: bool = True
    zupt_std: float = 0.01
    zihr_std: float = 0.01 * D2R
    zihr_delay: float = 2.0
    detector: DetectorThresholds = field(default_factory=DetectorThresholds)
    gating: bool = True
    gate_probability: float = 0.999
    max_rejections: int = 5
    couple_speed_error: bool = False
    estimate_initial_bias: bool = True
    compensate_mounting: bool = True
    align_duration: float = 60.0
    log_every: int = 20
    divergence_threshold: float = 0.5

    def __post_init__(self):
        check_dim(self.dim_mode)
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.speed_window < 0.0:
            raise ValueError("speed_window must be non-negative")
        for name in ("update_interval", "speed_std", "nhc_std", "zupt_std",
                     "zihr_std", "align_duration", "gravity", "divergence_threshold"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.zihr_delay < 0.0:
            raise ValueError("zihr_delay must be non-negative")
        if not 0.0 < self.gate_probability < 1.0:
            raise ValueError("gate_probability must lie in (0, 1)")
        if self.log_every < 1 or self.max_rejections < 0:
            raise ValueError("log_every must be >= 1 and max_rejections >= 0")

    @property
    def heading_offset(self) -> float:
        return self.geometry.heading_offset


@dataclass
class FilterOutput:
    """Decimated filter history.

    ``pos``/``vel``/``quat`` describe the IMU; ``center_pos``/``center_vel``
    are transported to the wheel centre (the point the truth refers to).
    """

    t: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    quat: np.ndarray
    center_pos: np.ndarray
    center_vel: np.ndarray
    heading: np.ndarray  # vehicle heading, rad
    P_diag: np.ndarray
    sensor_errors: np.ndarray  # (M, 12): bg, ba, sg, sa
    update_t: np.ndarray
    update_kind: np.ndarray
    update_stat: np.ndarray  # normalised innovation squared
    update_accepted: np.ndarray
    psd_min_ratio: float  # worst min eigenvalue / trace over all update checkpoints
    asymmetry: float  # worst max |P - P^T| relative to max |P|
    divergence_t: np.ndarray
    dim_mode: int = 21

    def nav_state(self, i: int = -1) -> NavState:
        return NavState(self.t[i], self.pos[i], self.vel[i], self.quat[i])

    def std(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.P_diag, 0.0))

    def to_trajectory(self) -> Trajectory:
        """Wheel-centre position and vehicle heading (roll and pitch set to zero)."""
        euler = np.zeros((len(self.t), 3))
        euler[:, 2] = self.heading
        return Trajectory(self.t, self.center_pos, euler, self.center_vel)


# -- basic EKF steps --------------------------------------------------------------


@njit(cache=True)
def _kalman_update(P, z, H, R, gate, force):
    """Joseph-form update.  Returns ``(dx, P, nis, status)`` with status
    1 = applied, 0 = gated out, -1 = singular innovation covariance."""
    n = P.shape[0]
    PHt = P @ H.T
    S = H @ PHt + R
    det = np.linalg.det(S)
    if not np.isfinite(det) or abs(det) < 1e-300:
        return np.zeros(n), P, np.nan, -1
    Sinv = np.linalg.inv(S)
    nis = z @ Sinv @ z
    if gate > 0.0 and nis > gate and not force:
        return np.zeros(n), P, nis, 0
    K = PHt @ Sinv
    dx = K @ z
    IKH = np.eye(n) - K @ H
    Pn = IKH @ P @ IKH.T + K @ R @ K.T
    Pn = 0.5 * (Pn + Pn.T)
    return dx, Pn, nis, 1


@njit(cache=True)
def _feedback(pos, vel, quat, err, dx, n):
    pos = pos - dx[0:3]
    vel = vel - dx[3:6]
    quat = quat_normalize(quat_mul(quat_from_rotvec(dx[6:9].copy()), quat))
    err = err.copy()
    for i in range(n - 9):
        err[i] += dx[9 + i]
    return pos, vel, quat, err


def predict_step(state: ErrorState, Phi, Qd) -> ErrorState:
    """``dx = Phi dx`` and ``P = Phi P Phi^T + Qd`` with symmetrisation."""
    Phi = np.asarray(Phi, float)
    P = Phi @ state.P @ Phi.T + np.asarray(Qd, float)
    return ErrorState(state.dim_mode, Phi @ state.dx, 0.5 * (P + P.T))


def update_step(state: ErrorState, z, H, R, gate: float | None = None):
    """Measurement update in place.

    Returns the correction ``dx`` (zeros if the measurement was rejected by
    the gate or the innovation covariance is singular) and a status string.
    """
    z = np.atleast_1d(np.asarray(z, float))
    H = np.atleast_2d(np.asarray(H, float))
    R = np.atleast_2d(np.asarray(R, float))
    dx, P, nis, status = _kalman_update(state.P, z, H, R, -1.0 if gate is None else gate, False)
    state.P = P
    state.dx = state.dx + dx
    return dx, {1: "applied", 0: "gated", -1: "singular"}[status]


def feedback(nav: NavState, errs: SensorErrors, dx, threshold: float = 0.5):
    """Apply corrections to the nominal state.

    Returns ``(nav, errs, diverged)``; ``diverged`` flags an attitude
    correction larger than ``threshold`` rad.
    """
    dx = np.asarray(dx, float)
    n = len(dx)
    pos, vel, quat, err = _feedback(nav.pos, nav.vel, nav.quat, errs.as_vector(), dx, n)
    diverged = bool(np.linalg.norm(dx[6:9]) > threshold)
    return NavState(nav.t, pos, vel, quat), SensorErrors.from_vector(err), diverged


def gate_threshold(prob: float, dof: int) -> float:
    return float(chi2.ppf(prob, dof))


# -- initialisation ---------------------------------------------------------------


def mounted_imu(imu: ImuData, geo: GeometryConfig, compensate: bool = True) -> ImuData:
    """Rotate a whole stream into the wheel frame."""
    if not compensate:
        return imu
    m = geo.mounting_dcm
    return ImuData(imu.t, imu.gyro @ m.T, imu.accel @ m.T)


def init(static: ImuData, pose, cfg: FilterConfig):
    """Initial nominal state, error state and sensor-error estimates.

    Parameters
    ----------
    static : ImuData
        Mounting-compensated static window.
    pose : tuple
        ``(wheel_centre_position, vehicle_heading)`` from the reference.
    """
    if pose is None:
        raise AlignmentError("initial position and heading are required")
    def detector(gyro, accel):
        return detect_stationary(gyro, accel, cfg.detector)

    roll, pitch, bg = static_align(static, cfg.gravity, detector=detector)
    center, heading_v = pose
    nav = NavState.from_euler(static.t[-1], np.zeros(3), np.zeros(3),
                              (roll, pitch, heading_v + cfg.heading_offset))
    nav.pos = np.asarray(center, float) - nav.dcm @ cfg.geometry.lever
    errs = SensorErrors(bg=bg if cfg.estimate_initial_bias else np.zeros(3))
    n = cfg.dim_mode
    state = ErrorState(n, np.zeros(n), np.diag(cfg.init_std.diag(n)))
    return nav, state, errs


# -- main loop --------------------------------------------------------------------


@njit(cache=True)
def _run_kernel(t, gyro, accel, k0, pos, vel, quat, err, P, times, q_diag,
                epoch_idx, epoch_speed, speed_from_gyro, stationary,
                radius, sign, lever, offset, couple,
                r_vel, r_zupt, r_zihr, use_zupt, use_zihr, zihr_delay,
                gate3, gate1, max_rej, div_thresh, log_every, g):
    N = t.shape[0]
    n = P.shape[0]
    n_log = (N - 1 - k0) // log_every + 2
    L_t = np.empty(n_log)
    L_pos = np.empty((n_log, 3))
    L_vel = np.empty((n_log, 3))
    L_q = np.empty((n_log, 4))
    L_cpos = np.empty((n_log, 3))
    L_cvel = np.empty((n_log, 3))
    L_head = np.empty(n_log)
    L_P = np.empty((n_log, n))
    L_err = np.empty((n_log, 12))
    M = epoch_idx.shape[0]
    U_t = np.empty(2 * M)
    U_kind = np.empty(2 * M, dtype=np.int64)
    U_stat = np.empty(2 * M)
    U_acc = np.empty(2 * M, dtype=np.int64)
    D_t = np.empty(M)
    nu = 0
    nd = 0
    nl = 0
    worst_eig = np.inf
    worst_asym = 0.0
    rej_vel = 0
    rej_zupt = 0
    rej_zihr = 0
    stat_since = -1.0
    heading_ref = 0.0
    e = 0
    omega = np.zeros(3)
    f = np.zeros(3)
    for k in range(k0, N):
        if k > k0:
            dt = t[k] - t[k - 1]
            omega, f = compensate_arrays(gyro[k], accel[k], err)
            pos, vel, quat = mech_step(pos, vel, quat, omega, f, dt, g)
            P = propagate_cov(P, quat_to_dcm(quat), f, omega, times, q_diag, dt)
        else:
            omega, f = compensate_arrays(gyro[k], accel[k], err)
        while e < M and epoch_idx[e] < k:
            e += 1
        if e < M and epoch_idx[e] == k:
            c_bn = quat_to_dcm(quat)
            applied = False
            if stationary[e] and (use_zupt or use_zihr):
                if stat_since < 0.0:
                    stat_since = t[k]
                    heading_ref = yaw_of(c_bn)
                if use_zupt:
                    H = np.zeros((3, n))
                    for i in range(3):
                        H[i, VEL + i] = 1.0
                    R = np.eye(3) * r_zupt
                    dx, P, nis, st = _kalman_update(P, vel.copy(), H, R, gate3, rej_zupt >= max_rej)
                    rej_zupt = 0 if st != 0 else rej_zupt + 1
                    U_t[nu] = t[k]
                    U_kind[nu] = 1
                    U_stat[nu] = nis
                    U_acc[nu] = st
                    nu += 1
                    if st == 1:
                        pos, vel, quat, err = _feedback(pos, vel, quat, err, dx, n)
                        applied = True
                        if math.sqrt(dx[6] ** 2 + dx[7] ** 2 + dx[8] ** 2) > div_thresh:
                            D_t[nd] = t[k]
                            nd += 1
                c_bn = quat_to_dcm(quat)
                if use_zihr and t[k] - stat_since >= zihr_delay:
                    H = np.zeros((1, n))
                    gr = heading_gradient(c_bn)
                    for i in range(3):
                        H[0, ATT + i] = gr[i]
                    z = np.empty(1)
                    z[0] = normalize_angle(yaw_of(c_bn) - heading_ref)
                    R = np.eye(1) * r_zihr
                    dx, P, nis, st = _kalman_update(P, z, H, R, gate1, rej_zihr >= max_rej)
                    rej_zihr = 0 if st != 0 else rej_zihr + 1
                    U_t[nu] = t[k]
                    U_kind[nu] = 2
                    U_stat[nu] = nis
                    U_acc[nu] = st
                    nu += 1
                    if st == 1:
                        pos, vel, quat, err = _feedback(pos, vel, quat, err, dx, n)
                        applied = True
                    heading_ref = yaw_of(quat_to_dcm(quat))
            else:
                stat_since = -1.0
                if speed_from_gyro:
                    speed = sign * radius * (epoch_speed[e] - err[0]) / (1.0 + err[6])
                else:
                    speed = epoch_speed[e]
                zm = np.zeros(3)
                zm[0] = speed
                z = predict_v_kernel(vel, c_bn, omega, lever, offset) - zm
                H = velocity_jacobian(vel, c_bn, omega, lever, offset, n, couple, radius, sign)
                dx, P, nis, st = _kalman_update(P, z, H, r_vel, gate3, rej_vel >= max_rej)
                rej_vel = 0 if st != 0 else rej_vel + 1
                U_t[nu] = t[k]
                U_kind[nu] = 0
                U_stat[nu] = nis
                U_acc[nu] = st
                nu += 1
                if st == 1:
                    pos, vel, quat, err = _feedback(pos, vel, quat, err, dx, n)
                    applied = True
                    if math.sqrt(dx[6] ** 2 + dx[7] ** 2 + dx[8] ** 2) > div_thresh:
                        D_t[nd] = t[k]
                        nd += 1
            if applied:
                # covariance health checkpoint
                scale = 0.0
                asym = 0.0
                for i in range(n):
                    for j in range(n):
                        scale = max(scale, abs(P[i, j]))
                        asym = max(asym, abs(P[i, j] - P[j, i]))
                worst_asym = max(worst_asym, asym / scale)
                worst_eig = min(worst_eig, np.linalg.eigvalsh(P)[0] / np.trace(P))
        if (k - k0) % log_every == 0 or k == N - 1:
            c_bn = quat_to_dcm(quat)
            L_t[nl] = t[k]
            L_pos[nl] = pos
            L_vel[nl] = vel
            L_q[nl] = quat
            L_cpos[nl] = pos + c_bn @ lever
            L_cvel[nl] = vel + c_bn @ np.cross(omega, lever)
            L_head[nl] = normalize_angle(yaw_of(c_bn) - offset)
            for i in range(n):
                L_P[nl, i] = P[i, i]
            L_err[nl] = err
            nl += 1
    return (L_t[:nl], L_pos[:nl], L_vel[:nl], L_q[:nl], L_cpos[:nl], L_cvel[:nl], L_head[:nl],
            L_P[:nl], L_err[:nl], U_t[:nu], U_kind[:nu], U_stat[:nu], U_acc[:nu],
            worst_eig, worst_asym, D_t[:nd])


def _window_stats(t, x, idx, span):
    """Mean and (population) std of ``x`` over ``(t[k] - span, t[k]]`` for each k in idx;
    the window always holds at least sample k."""
    x = np.asarray(x, float).reshape(len(t), -1)
    c1 = np.vstack([np.zeros((1, x.shape[1])), np.cumsum(x, axis=0)])
    c2 = np.vstack([np.zeros((1, x.shape[1])), np.cumsum(x * x, axis=0)])
    lo = np.minimum(np.searchsorted(t, t[idx] - span, side="right"), idx)
    hi = idx + 1
    cnt = (hi - lo)[:, None].astype(float)
    mean = (c1[hi] - c1[lo]) / cnt
    var = np.maximum((c2[hi] - c2[lo]) / cnt - mean**2, 0.0)
    return mean, np.sqrt(var)


def _check_stream(imu: ImuData):
    t = imu.t
    if len(t) < 2:
        raise FilterError("IMU stream has fewer than two samples")
    if not (np.all(np.isfinite(imu.gyro)) and np.all(np.isfinite(imu.accel))):
        bad = int(np.flatnonzero((~np.isfinite(np.hstack([imu.gyro, imu.accel]))).any(axis=1))[0])
        raise FilterError(f"non-finite IMU record at index {bad} (t={t[bad]!r})")
    d = np.diff(t)
    if (d <= 0).any():
        i = int(np.flatnonzero(d <= 0)[0]) + 1
        raise FilterError(f"non-increasing IMU time at index {i} (t={t[i]!r})")
    if (d > MAX_DT).any():
        i = int(np.flatnonzero(d > MAX_DT)[0]) + 1
        raise FilterError(f"IMU stream gap of {d[i - 1]:.3f} s at index {i} (t={t[i]!r})")


def run(imu: ImuData, cfg: FilterConfig, initial_pose, odometer=None,
        speed_override=None) -> FilterOutput:
    """Run the filter over a whole IMU stream.

    Parameters
    ----------
    imu : ImuData
        Raw IMU stream (wheel-mounted for ``wheel-ins``, body-mounted for
        ``odo-ins``).  It must start with ``cfg.align_duration`` seconds of
        standstill.
    initial_pose : Trajectory or tuple
        Reference trajectory, or ``(centre_position, vehicle_heading)`` valid at
        the end of the alignment window.
    odometer : tuple of arrays, optional
        ``(t, speed)``; required in ``odo-ins`` mode.
    speed_override : array, optional
        Forward speeds to use at each measurement epoch instead of the
        gyro- or odometer-derived values.
    """
    _check_stream(imu)
    dt_med = float(np.median(np.diff(imu.t)))
    if cfg.update_interval < dt_med:
        raise FilterError("measurement cadence is shorter than the IMU sample period")
    geo = cfg.geometry
    data = mounted_imu(imu, geo, cfg.compensate_mounting)
    t = data.t
    t_start = t[0] + cfg.align_duration
    k0 = int(np.searchsorted(t, t_start - 1e-9))
    if k0 >= len(t) - 1:
        raise FilterError("stream ends inside the alignment window")
    if isinstance(initial_pose, Trajectory):
        initial_pose = initial_pose.pose_at(t[k0])
    nav, state, errs = init(ImuData(t[:k0 + 1], data.gyro[:k0 + 1], data.accel[:k0 + 1]),
                            initial_pose, cfg)

    # measurement epochs on a regular grid after the start
    grid = t_start + cfg.update_interval * np.arange(1, int((t[-1] - t_start) / cfg.update_interval) + 1)
    epoch_idx = np.unique(np.searchsorted(t, grid - 1e-9))
    epoch_idx = epoch_idx[(epoch_idx > k0) & (epoch_idx < len(t))]

    thr = cfg.detector
    g_mean, g_std = _window_stats(t, data.gyro, epoch_idx, thr.window)
    _, a_std = _window_stats(t, data.accel, epoch_idx, thr.window)
    stationary = ((g_std.max(axis=1) < thr.gyro_std) & (np.abs(g_mean[:, 0]) < thr.gyro_x_mean)
                  & (a_std.max(axis=1) < thr.accel_std))

    if cfg.mode == "odo-ins":
        if odometer is None and speed_override is None:
            raise FilterError("odo-ins mode needs an odometer stream")
        speed_from_gyro = False
        if odometer is not None:
            ot, ov = (np.asarray(a, float) for a in odometer)
            if len(ot) < 2 or (np.diff(ot) <= 0).any():
                raise FilterError("odometer timestamps must be strictly increasing")
            epoch_speed = np.interp(t[epoch_idx], ot, ov)
            o_mean, _ = _window_stats(ot, ov, np.clip(np.searchsorted(ot, t[epoch_idx], side="right") - 1, 0, None), thr.window)
            stationary &= np.abs(o_mean[:, 0]) < thr.speed
    else:
        speed_from_gyro = True
        epoch_speed = _window_stats(t, data.gyro[:, 0], epoch_idx, cfg.speed_window)[0][:, 0]
    if speed_override is not None:
        epoch_speed = np.asarray(speed_override, float)
        if epoch_speed.shape != epoch_idx.shape:
            raise FilterError(f"speed_override needs {len(epoch_idx)} values")
        speed_from_gyro = False

    n = cfg.dim_mode
    q_diag = cfg.noise.q_diag()
    r_vel = np.diag([cfg.speed_std**2, cfg.nhc_std**2, cfg.nhc_std**2])
    g3 = gate_threshold(cfg.gate_probability, 3) if cfg.gating else -1.0
    g1 = gate_threshold(cfg.gate_probability, 1) if cfg.gating else -1.0
    out = _run_kernel(
        t, data.gyro, data.accel, k0, nav.pos, nav.vel, nav.quat, errs.as_vector(),
        state.P.copy(), cfg.noise.gm.times, q_diag, epoch_idx.astype(np.int64),
        epoch_speed.astype(float), speed_from_gyro, stationary,
        geo.wheel_radius, float(geo.speed_sign), geo.lever, geo.heading_offset,
        cfg.couple_speed_error, r_vel, cfg.zupt_std**2, cfg.zihr_std**2, cfg.zupt, cfg.zihr,
        cfg.zihr_delay, g3, g1, cfg.max_rejections, cfg.divergence_threshold,
        cfg.log_every, cfg.gravity,
    )
    (lt, lp, lv, lq, lcp, lcv, lh, lP, le, ut, uk, us, ua, eig, asym, dt_) = out
    return FilterOutput(lt, lp, lv, lq, lcp, lcv, lh, lP, le, ut, uk, us, ua,
                        float(eig), float(asym), dt_, n)
