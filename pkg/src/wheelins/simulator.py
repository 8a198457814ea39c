"""Synthetic ground truth and sensor data for wheel-mounted and body-mounted IMUs.

Tracks are sequences of straight, arc, stop and constant-acceleration ramp
segments on a plane, optionally draped over a smooth sinusoidal height
profile.  Segment speeds are horizontal speeds; with a grade the vehicle
moves faster along the slope by ``sqrt(1 + h'^2)``.

Ideal IMU outputs are derived from the sampled attitude and velocity so that
each record equals the mean angular rate and specific force over the interval
ending at its timestamp.  Feeding them through
:func:`wheelins.mechanization.mech_step` reproduces the truth to rounding
error.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import lfilter
from scipy.spatial.transform import Rotation

from .core import D2R, DEG_PER_HOUR, GRAVITY, Trajectory
from .mechanization import ImuData
from .observations import GeometryConfig

SEGMENT_TYPES = ("straight", "arc", "stop", "ramp")


@dataclass(frozen=True)
class Segment:
    """One piece of a track.

    ``kind`` selects which fields matter: straight (length, speed), arc
    (radius, angle, speed; positive angle turns right), stop (duration) and
    ramp (v0, v1, length; constant acceleration on a straight line).
    """

    kind: str
    length: float = 0.0
    speed: float = 0.0
    radius: float = 0.0
    angle: float = 0.0
    duration: float = 0.0
    v0: float = 0.0
    v1: float = 0.0

    def __post_init__(self):
        if self.kind not in SEGMENT_TYPES:
            raise ValueError(f"unknown segment type {self.kind!r}")
        if min(self.speed, self.v0, self.v1) < 0.0:
            raise ValueError("speeds must be non-negative")
        if self.kind in ("straight", "arc") and not self.speed > 0.0:
            raise ValueError(f"{self.kind} segment needs a positive speed")
        if self.kind in ("straight", "ramp") and not self.length > 0.0:
            raise ValueError(f"{self.kind} segment needs a positive length")
        if self.kind == "arc" and not (self.radius > 0.0 and self.angle != 0.0):
            raise ValueError("arc segment needs a positive radius and a nonzero angle")
        if self.kind == "stop" and not self.duration > 0.0:
            raise ValueError("stop segment needs a positive duration")
        if self.kind == "ramp" and not self.v0 + self.v1 > 0.0:
            raise ValueError("ramp segment cannot start and end at rest")

    @property
    def path_length(self) -> float:
        if self.kind == "arc":
            return self.radius * abs(self.angle)
        return 0.0 if self.kind == "stop" else self.length

    @property
    def time(self) -> float:
        if self.kind == "stop":
            return self.duration
        if self.kind == "ramp":
            return 2.0 * self.length / (self.v0 + self.v1)
        return self.path_length / self.speed


def straight(length, speed):
    return Segment("straight", length=length, speed=speed)


def arc(radius, angle, speed):
    return Segment("arc", radius=radius, angle=angle, speed=speed)


def stop(duration):
    return Segment("stop", duration=duration)


def ramp(v0, v1, length):
    return Segment("ramp", v0=v0, v1=v1, length=length)


@dataclass(frozen=True)
class TrackSpec:
    segments: tuple
    rate: float = 200.0
    max_grade: float = 0.0  # rad, peak slope of the height profile
    grade_wavelength: float = 600.0  # m of horizontal travel per hill
    start_heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError("a track needs at least one segment")
        if not 50.0 <= self.rate <= 1000.0:
            raise ValueError("sample rate must lie in [50, 1000] Hz")
        if not 0.0 <= self.max_grade < math.pi / 4:
            raise ValueError("max_grade must lie in [0, pi/4)")
        if not self.grade_wavelength > 0.0:
            raise ValueError("grade_wavelength must be positive")

    @property
    def length(self) -> float:
        return sum(s.path_length for s in self.segments)

    @property
    def duration(self) -> float:
        return sum(s.time for s in self.segments)

    def check_wheel(self, radius: float):
        for s in self.segments:
            if s.kind == "arc" and s.radius <= radius:
                raise ValueError("arc radius must exceed the wheel radius")

    def flattened(self) -> "TrackSpec":
        return TrackSpec(self.segments, self.rate, 0.0, self.grade_wavelength, self.start_heading)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["segments"] = [{k: v for k, v in asdict(s).items() if v or k == "kind"}
                         for s in self.segments]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrackSpec":
        d = dict(d)
        segs = [Segment(**s) for s in d.pop("segments")]
        return cls(segs, **d)

    @classmethod
    def from_json(cls, path) -> "TrackSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _rounded_rectangle(long_side, short_side, radius, laps, speed, pause_lap=None):
    """Closed clockwise laps starting mid-way along a long side, with a
    5 m speed ramp at either end and an optional 20 s pause."""
    half = long_side / 2.0
    segs = [stop(60.0), ramp(0.0, speed, 5.0), straight(half - 5.0, speed)]
    for lap in range(laps):
        for side in (short_side, long_side, short_side):
            segs += [arc(radius, math.pi / 2, speed), straight(side, speed)]
        segs.append(arc(radius, math.pi / 2, speed))
        if lap < laps - 1:
            if pause_lap == lap:
                segs += [ramp(speed, 0.0, 3.0), stop(20.0), ramp(0.0, speed, 3.0),
                         straight(long_side - 6.0, speed)]
            else:
                segs.append(straight(long_side, speed))
    segs += [straight(half - 5.0, speed), ramp(speed, 0.0, 5.0), stop(10.0)]
    return segs


def _polyline(speed):
    turns = [(145.0, 6.0, 60.0), (200.0, 6.0, -90.0), (180.0, 8.0, 45.0),
             (150.0, 6.0, -30.0), (170.0, 6.0, 75.0)]
    segs = [stop(60.0), ramp(0.0, speed, 5.0)]
    for length, radius, angle in turns:
        segs += [straight(length, speed), arc(radius, angle * D2R, speed)]
    used = 5.0 + sum(s.path_length for s in segs[2:]) + 5.0
    segs += [straight(1146.0 - used, speed), ramp(speed, 0.0, 5.0), stop(10.0)]
    return segs


def preset_track(name: str) -> TrackSpec:
    """Named tracks: ``loop-small`` (about 1227 m at 1.39 m/s, five laps),
    ``polyline`` (about 1146 m at 1.25 m/s, open), ``loop-large`` (about
    12.2 km at 4.7 m/s, two laps over 10 degree hills), ``loop-large-flat``
    and ``square-100`` (one 25 m square lap)."""
    if name == "loop-small":
        return TrackSpec(_rounded_rectangle(68.27, 45.0, 3.0, 5, 1.39, pause_lap=2))
    if name == "polyline":
        return TrackSpec(_polyline(1.25))
    if name in ("loop-large", "loop-large-flat"):
        segs = _rounded_rectangle(1800.0, 1202.6, 15.0, 2, 4.7, pause_lap=0)
        grade = 10.0 * D2R if name == "loop-large" else 0.0
        return TrackSpec(segs, max_grade=grade, grade_wavelength=600.0)
    if name == "square-100":
        v = 1.0
        segs = [stop(60.0), ramp(0.0, v, 5.0), straight(5.5, v)]
        for _ in range(3):
            segs += [arc(2.0, math.pi / 2, v), straight(21.0, v)]
        segs += [arc(2.0, math.pi / 2, v), straight(5.5, v), ramp(v, 0.0, 5.0), stop(10.0)]
        return TrackSpec(segs)
    raise ValueError(f"unknown track preset {name!r}")


TRACK_PRESETS = ("loop-small", "polyline", "loop-large", "loop-large-flat", "square-100")


# -- truth ---------------------------------------------------------------------


@dataclass
class TruthData:
    """Dense truth of the wheel-centre motion.

    ``heading``/``pitch`` are vehicle Euler angles; ``wheel_angle`` is the
    accumulated rolling angle (path length over radius, positive forward).
    """

    t: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    heading: np.ndarray
    pitch: np.ndarray
    heading_rate: np.ndarray
    pitch_rate: np.ndarray
    speed: np.ndarray  # along the path (3D)
    distance: np.ndarray  # horizontal path length
    wheel_angle: np.ndarray
    wheel_radius: float

    def __len__(self):
        return len(self.t)

    def trajectory(self) -> Trajectory:
        euler = np.column_stack([np.zeros(len(self.t)), self.pitch, self.heading])
        return Trajectory(self.t, self.pos, euler, self.vel)


def _segment_kinematics(seg: Segment, tau):
    """Horizontal path length, speed and acceleration at local times ``tau``."""
    if seg.kind == "stop":
        z = np.zeros_like(tau)
        return z, z, z
    if seg.kind == "ramp":
        a = (seg.v1**2 - seg.v0**2) / (2.0 * seg.length)
        return seg.v0 * tau + 0.5 * a * tau**2, seg.v0 + a * tau, np.full_like(tau, a)
    return seg.speed * tau, np.full_like(tau, seg.speed), np.zeros_like(tau)


def generate_truth(spec: TrackSpec, wheel_radius: float = 0.3) -> TruthData:
    """Sample the track at ``spec.rate``."""
    spec.check_wheel(wheel_radius)
    times = np.array([s.time for s in spec.segments])
    starts = np.concatenate([[0.0], np.cumsum(times)])
    n = int(math.floor(starts[-1] * spec.rate + 1e-9)) + 1
    t = np.arange(n) / spec.rate
    idx = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(times) - 1)

    north = np.zeros(n)
    east = np.zeros(n)
    psi = np.zeros(n)
    psi_rate = np.zeros(n)
    sigma = np.zeros(n)
    v_h = np.zeros(n)
    p0 = np.zeros(2)
    h0 = spec.start_heading
    s0 = 0.0
    for i, seg in enumerate(spec.segments):
        m = idx == i
        tau = np.minimum(t[m] - starts[i], times[i])
        s, v, _ = _segment_kinematics(seg, tau)
        sigma[m] = s0 + s
        v_h[m] = v
        if seg.kind == "arc":
            sgn = math.copysign(1.0, seg.angle)
            centre = p0 + sgn * seg.radius * np.array([-math.sin(h0), math.cos(h0)])
            h = h0 + sgn * s / seg.radius
            north[m] = centre[0] + sgn * seg.radius * np.sin(h)
            east[m] = centre[1] - sgn * seg.radius * np.cos(h)
            psi[m] = h
            psi_rate[m] = sgn * v / seg.radius
            h_end = h0 + seg.angle
            p_end = centre + sgn * seg.radius * np.array([math.sin(h_end), -math.cos(h_end)])
        else:
            north[m] = p0[0] + s * math.cos(h0)
            east[m] = p0[1] + s * math.sin(h0)
            psi[m] = h0
            h_end = h0
            p_end = p0 + seg.path_length * np.array([math.cos(h0), math.sin(h0)])
        p0, h0, s0 = p_end, h_end, s0 + seg.path_length

    # height profile h(sigma) = A (1 - cos(k sigma)), slope peaks at max_grade
    if spec.max_grade > 0.0:
        k = 2.0 * math.pi / spec.grade_wavelength
        amp = math.tan(spec.max_grade) / k
        height = amp * (1.0 - np.cos(k * sigma))
        slope = amp * k * np.sin(k * sigma)
        curv = amp * k * k * np.cos(k * sigma)
    else:
        height = slope = curv = np.zeros(n)
    stretch = np.sqrt(1.0 + slope**2)
    pitch = np.arctan(slope)
    pitch_rate = curv * v_h / (1.0 + slope**2)
    if spec.max_grade > 0.0:
        # path length along the slope, trapezoidal in sigma
        s3d = np.concatenate([[0.0], np.cumsum(0.5 * (stretch[1:] + stretch[:-1]) * np.diff(sigma))])
    else:
        s3d = sigma.copy()

    pos = np.column_stack([north, east, -height])
    vel = np.column_stack([v_h * np.cos(psi), v_h * np.sin(psi), -slope * v_h])
    return TruthData(t, pos, vel, psi, pitch, psi_rate, pitch_rate, v_h * stretch, sigma,
                     s3d / wheel_radius, float(wheel_radius))


# -- ideal sensors -----------------------------------------------------------------


def _imu_from_motion(t, c_bn, vel, g):
    """Interval-mean gyro and specific force from sampled attitude and velocity."""
    dt = np.diff(t)
    rot = Rotation.from_matrix(c_bn)
    dtheta = (rot[:-1].inv() * rot[1:]).as_rotvec()
    c_mid = (rot[:-1] * Rotation.from_rotvec(0.5 * dtheta)).as_matrix()
    acc_n = np.diff(vel, axis=0) / dt[:, None]
    acc_n[:, 2] -= g
    gyro = np.empty((len(t), 3))
    accel = np.empty((len(t), 3))
    gyro[1:] = dtheta / dt[:, None]
    accel[1:] = np.einsum("nji,nj->ni", c_mid, acc_n)
    # the first record has no preceding interval; treat it as static
    gyro[0] = 0.0
    accel[0] = c_bn[0].T @ np.array([0.0, 0.0, -g])
    return ImuData(t.copy(), gyro, accel)


def _axle(heading):
    return np.column_stack([-np.sin(heading), np.cos(heading), np.zeros_like(heading)])


def wheel_attitude(truth: TruthData) -> np.ndarray:
    """Wheel-frame to navigation DCMs: x on the axle (to the right), rolled by
    vehicle pitch and the rolling angle."""
    ang = np.column_stack([truth.heading + math.pi / 2, truth.pitch - truth.wheel_angle])
    return Rotation.from_euler("ZX", ang).as_matrix()


def truth_to_imu(truth: TruthData, geo: GeometryConfig, g: float = GRAVITY) -> ImuData:
    """Ideal outputs of an IMU on the wheel, in its own (unaligned) frame."""
    c_wn = wheel_attitude(truth)
    rolling = truth.speed / truth.wheel_radius
    omega_n = _axle(truth.heading) * (truth.pitch_rate - rolling)[:, None]
    omega_n[:, 2] += truth.heading_rate
    omega_w = np.einsum("nji,nj->ni", c_wn, omega_n)
    lever_n = np.einsum("nij,nj->ni", c_wn, np.cross(omega_w, geo.lever))
    m = geo.mounting_dcm
    c_bn = c_wn @ m
    imu = _imu_from_motion(truth.t, c_bn, truth.vel - lever_n, g)
    return imu


def body_attitude(truth: TruthData) -> np.ndarray:
    return Rotation.from_euler("ZY", np.column_stack([truth.heading, truth.pitch])).as_matrix()


def truth_to_body_imu(truth: TruthData, lever_b, g: float = GRAVITY) -> ImuData:
    """Ideal outputs of an IMU fixed to the vehicle body; ``lever_b`` points
    from the IMU to the wheel centre in the vehicle frame."""
    c_vn = body_attitude(truth)
    omega_n = _axle(truth.heading) * truth.pitch_rate[:, None]
    omega_n[:, 2] += truth.heading_rate
    omega_v = np.einsum("nji,nj->ni", c_vn, omega_n)
    lever_n = np.einsum("nij,nj->ni", c_vn, np.cross(omega_v, np.asarray(lever_b, float)))
    return _imu_from_motion(truth.t, c_vn, truth.vel - lever_n, g)


def imu_positions(truth: TruthData, geo: GeometryConfig) -> np.ndarray:
    """Navigation-frame position of the wheel IMU."""
    return truth.pos - wheel_attitude(truth) @ geo.lever


def odometer(truth: TruthData, rate: float = 10.0, noise: float = 0.03, seed=None):
    """Forward wheel-centre speed at ``rate`` Hz with white noise."""
    step = max(int(round((len(truth.t) - 1) / (truth.t[-1] - truth.t[0]) / rate)), 1)
    sel = np.arange(0, len(truth.t), step)
    rng = np.random.default_rng(seed)
    v = truth.speed[sel] + noise * rng.standard_normal(len(sel))
    return truth.t[sel].copy(), v


# -- sensor errors -----------------------------------------------------------------


@dataclass(frozen=True)
class ErrorSpec:
    """Deterministic and stochastic IMU errors.

    Output model per axis: ``(1 + scale) * ideal + bias + gm(t) + white``.
    ``arw``/``vrw`` are white-noise densities (rad/sqrt(s), m/s/sqrt(s)); the
    Gauss-Markov terms have steady-state sigma ``gm_*_sigma`` and correlation
    time ``gm_time``.
    """

    gyro_bias: tuple = (0.0, 0.0, 0.0)
    accel_bias: tuple = (0.0, 0.0, 0.0)
    gyro_scale: tuple = (0.0, 0.0, 0.0)
    accel_scale: tuple = (0.0, 0.0, 0.0)
    arw: float = 0.0
    vrw: float = 0.0
    gm_gyro_sigma: float = 0.0
    gm_accel_sigma: float = 0.0
    gm_time: float = 1000.0
    seed: int = 0

    def __post_init__(self):
        for name in ("gyro_bias", "accel_bias", "gyro_scale", "accel_scale"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != 3:
                raise ValueError(f"{name} needs three components")
            object.__setattr__(self, name, v)
        if min(self.arw, self.vrw, self.gm_gyro_sigma, self.gm_accel_sigma) < 0.0:
            raise ValueError("noise densities and sigmas must be non-negative")
        if not self.gm_time > 0.0:
            raise ValueError("gm_time must be positive")

    @classmethod
    def icm20602(cls, seed: int = 0, scale_sigma: float = 1000e-6) -> "ErrorSpec":
        """Consumer MEMS grade: constant errors drawn per seed at the sensor
        table's 1-sigma levels (gyro bias 200 deg/h, accel bias 0.01 m/s^2,
        ARW 0.24 deg/sqrt(h), VRW 3 m/s/sqrt(h))."""
        rng = np.random.default_rng([seed, 0])
        return cls(
            gyro_bias=tuple(200.0 * DEG_PER_HOUR * rng.standard_normal(3)),
            accel_bias=tuple(0.01 * rng.standard_normal(3)),
            gyro_scale=tuple(scale_sigma * rng.standard_normal(3)),
            accel_scale=tuple(scale_sigma * rng.standard_normal(3)),
            arw=0.24 * D2R / 60.0,
            vrw=3.0 / 60.0,
            gm_gyro_sigma=20.0 * DEG_PER_HOUR,
            gm_accel_sigma=0.002,
            gm_time=1000.0,
            seed=seed,
        )

    def with_gyro_bias_offset(self, offset) -> "ErrorSpec":
        b = np.asarray(self.gyro_bias) + np.broadcast_to(np.asarray(offset, float), 3)
        return ErrorSpec(**{**asdict(self), "gyro_bias": tuple(b)})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ErrorSpec":
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ErrorSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


IMU_GRADES = ("icm20602", "ideal")


def preset_errors(name: str, seed: int = 0) -> ErrorSpec:
    if name == "icm20602":
        return ErrorSpec.icm20602(seed)
    if name == "ideal":
        return ErrorSpec(seed=seed)
    raise ValueError(f"unknown IMU grade {name!r}")


def gauss_markov(n: int, dt: float, sigma: float, tau: float, rng) -> np.ndarray:
    """Stationary first-order Gauss-Markov sequence (exact discretisation)."""
    phi = math.exp(-dt / tau)
    w = rng.standard_normal(n) * sigma * math.sqrt(1.0 - phi * phi)
    x0 = sigma * rng.standard_normal()
    out, _ = lfilter([1.0], [1.0, -phi], w, zi=[phi * x0])
    return out


def corrupt(imu: ImuData, err: ErrorSpec) -> ImuData:
    """Apply :class:`ErrorSpec` to an ideal stream; deterministic given ``err.seed``."""
    n = len(imu)
    dt = float(np.median(np.diff(imu.t))) if n > 1 else 1.0
    rate = 1.0 / dt
    rng = np.random.default_rng([err.seed, 1])
    gyro = imu.gyro * (1.0 + np.asarray(err.gyro_scale)) + np.asarray(err.gyro_bias)
    accel = imu.accel * (1.0 + np.asarray(err.accel_scale)) + np.asarray(err.accel_bias)
    if err.arw > 0.0:
        gyro = gyro + err.arw * math.sqrt(rate) * rng.standard_normal((n, 3))
    if err.vrw > 0.0:
        accel = accel + err.vrw * math.sqrt(rate) * rng.standard_normal((n, 3))
    if err.gm_gyro_sigma > 0.0:
        gyro = gyro + np.column_stack(
            [gauss_markov(n, dt, err.gm_gyro_sigma, err.gm_time, rng) for _ in range(3)])
    if err.gm_accel_sigma > 0.0:
        accel = accel + np.column_stack(
            [gauss_markov(n, dt, err.gm_accel_sigma, err.gm_time, rng) for _ in range(3)])
    return ImuData(imu.t.copy(), gyro, accel)


# -- rotation modulation --------------------------------------------------------------


def modulation_rate(eps, omega: float, t):
    """Navigation-frame projection of a constant gyro error on an IMU spinning
    about its x-axis at ``omega`` (x initially along the spin axis)."""
    ex, ey, ez = np.asarray(eps, float)
    t = np.asarray(t, float)
    c, s = np.cos(omega * t), np.sin(omega * t)
    return np.stack([np.full_like(t, ex), ey * c - ez * s, ey * s + ez * c], axis=-1)


def modulation_error(eps, omega: float, t):
    """Integral of :func:`modulation_rate` from 0 to ``t`` (closed form).

    The spin-axis component grows linearly; the other two stay bounded by
    ``2 |(eps_y, eps_z)| / omega`` and vanish after every full revolution.
    With ``omega == 0`` all components grow linearly.
    """
    ex, ey, ez = np.asarray(eps, float)
    t = np.asarray(t, float)
    if omega == 0.0:
        return np.stack([ex * t, ey * t, ez * t], axis=-1)
    c, s = np.cos(omega * t), np.sin(omega * t)
    y = (ey * s + ez * (c - 1.0)) / omega
    z = (ey * (1.0 - c) + ez * s) / omega
    return np.stack([ex * t, y, z], axis=-1)


# -- datasets ---------------------------------------------------------------------------


def default_geometry() -> GeometryConfig:
    """Wheel-IMU installation used by the presets: 0.3 m wheel, IMU a couple
    of centimetres off the hub."""
    return GeometryConfig(wheel_radius=0.3, lever_b=(0.0, 0.01, -0.02))


BODY_LEVER = (0.1, 0.2, 0.3)


@dataclass
class Dataset:
    truth: TruthData
    wheel_imu: ImuData
    geometry: GeometryConfig
    body_imu: ImuData | None = None
    odometer: tuple | None = None
    body_lever: tuple = BODY_LEVER
    meta: dict = field(default_factory=dict)

    def body_geometry(self) -> GeometryConfig:
        return GeometryConfig(wheel_radius=self.geometry.wheel_radius, lever_b=self.body_lever,
                              speed_sign=1, heading_offset=0.0, wheel_mounted=False)


def ideal_streams(track: TrackSpec, geometry: GeometryConfig | None = None,
                  body: bool = True, g: float = GRAVITY):
    """Truth with error-free wheel-IMU and body-IMU streams (seed independent)."""
    geo = geometry or default_geometry()
    truth = generate_truth(track, geo.wheel_radius)
    wheel = truth_to_imu(truth, geo, g)
    body_imu = truth_to_body_imu(truth, BODY_LEVER, g) if body else None
    return truth, wheel, body_imu


def make_dataset(track: TrackSpec, grade: str | ErrorSpec = "icm20602", seed: int = 0,
                 geometry: GeometryConfig | None = None, body: bool = True,
                 odometer_noise: float = 0.03, g: float = GRAVITY, ideal=None) -> Dataset:
    """Truth plus corrupted wheel-IMU, body-IMU and odometer streams.

    The wheel and body IMUs receive independent error realisations derived
    from ``seed``.  ``ideal`` may carry the output of :func:`ideal_streams`
    for the same track and geometry to skip regenerating it.
    """
    geo = geometry or default_geometry()
    if ideal is None:
        ideal = ideal_streams(track, geo, body, g)
    truth, wheel_ideal, body_ideal = ideal
    child = np.random.SeedSequence(seed).spawn(3)
    wseed, bseed, oseed = (int(c.generate_state(1)[0]) for c in child)
    if isinstance(grade, ErrorSpec):
        werr = grade
        berr = ErrorSpec(**{**asdict(grade), "seed": bseed})
    else:
        werr = preset_errors(grade, wseed)
        berr = preset_errors(grade, bseed)
    ds = Dataset(truth, corrupt(wheel_ideal, werr), geo, meta={
        "track": track.to_dict(), "wheel_errors": werr.to_dict(), "seed": seed,
        "geometry": asdict(geo)})
    if body:
        if body_ideal is None:
            raise ValueError("ideal streams were generated without the body IMU")
        ds.body_imu = corrupt(body_ideal, berr)
        ds.odometer = odometer(truth, 10.0, odometer_noise, oseed)
        ds.meta["body_errors"] = berr.to_dict()
    return ds
