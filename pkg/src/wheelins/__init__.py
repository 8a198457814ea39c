"""Dead reckoning with a wheel-mounted IMU: strapdown mechanization, an
error-state EKF with wheel-speed and non-holonomic constraints, a trajectory
and sensor simulator, and drift metrics."""

from .core import Euler, Trajectory, dcm_to_euler, euler_to_dcm, normalize_angle
from .errormodel import ErrorState, GmParams, NoisePsd, build_F, build_G, discretize
from .filter import FilterConfig, FilterOutput, InitialStd, run
from .mechanization import ImuData, ImuSample, NavState, SensorErrors, propagate, static_align
from .observations import DetectorThresholds, GeometryConfig

__all__ = [
    "DetectorThresholds", "ErrorState", "Euler", "FilterConfig", "FilterOutput",
    "GeometryConfig", "GmParams", "ImuData", "ImuSample", "InitialStd", "NavState",
    "NoisePsd", "SensorErrors", "Trajectory", "build_F", "build_G", "dcm_to_euler",
    "discretize", "euler_to_dcm", "normalize_angle", "propagate", "run", "static_align",
]

__version__ = "0.1.0"
