"""Accuracy metrics against a reference trajectory.

The position metric is the segmented drift rate: accumulate the travelled
distance in steps of ``l``; for each ``k`` take the largest horizontal error
seen while the distance is within ``[0, k l]`` and divide by ``k l``.  The
mean and standard deviation over ``k`` summarise a run.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import R2D, Trajectory, normalize_angles


@dataclass
class AlignedPair:
    t: np.ndarray
    est_pos: np.ndarray
    truth_pos: np.ndarray
    est_heading: np.ndarray
    truth_heading: np.ndarray
    distance: np.ndarray
    est_vel: np.ndarray | None = None
    truth_vel: np.ndarray | None = None

    def __len__(self):
        return len(self.t)

    @property
    def horizontal_error(self) -> np.ndarray:
        return np.hypot(*(self.est_pos[:, :2] - self.truth_pos[:, :2]).T)

    @property
    def heading_error(self) -> np.ndarray:
        return normalize_angles(self.est_heading - self.truth_heading)


@dataclass(frozen=True)
class DriftResult:
    mean: float  # percent
    std: float  # percent
    rates: np.ndarray  # percent, one per distance step


@dataclass(frozen=True)
class Metrics:
    drift_mean: float
    drift_std: float
    heading_rmse: float
    heading_max: float
    velocity_rms: float
    final_horizontal_error: float
    distance: float
    segment_length: float

    def to_dict(self) -> dict:
        return asdict(self)


def _interp_columns(t, tp, fp):
    return np.column_stack([np.interp(t, tp, fp[:, i]) for i in range(fp.shape[1])])


def interp_heading(t, tp, heading):
    """Interpolate angles along the shorter arc."""
    unwrapped = np.unwrap(heading)
    return normalize_angles(np.interp(t, tp, unwrapped))


def travelled_distance(pos) -> np.ndarray:
    """Cumulative 3D path length."""
    steps = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def align(est: Trajectory, truth: Trajectory) -> AlignedPair:
    """Interpolate the reference onto the estimate timestamps that fall inside
    the reference time span."""
    m = (est.t >= truth.t[0]) & (est.t <= truth.t[-1])
    if not m.any():
        raise ValueError("estimate and reference do not overlap in time")
    t = est.t[m]
    dist = np.interp(t, truth.t, travelled_distance(truth.pos))
    tv = None
    if truth.vel is not None:
        tv = _interp_columns(t, truth.t, truth.vel)
    ev = None if est.vel is None else est.vel[m]
    return AlignedPair(t, est.pos[m], _interp_columns(t, truth.t, truth.pos),
                       est.heading[m], interp_heading(t, truth.t, truth.heading),
                       dist - dist[0], ev, tv)


def segmented_drift(pair: AlignedPair, l: float = 100.0, per_window: bool = False) -> DriftResult:
    """Segmented maximum horizontal drift rate in percent.

    With ``per_window`` the maximum is taken over ``[(k-1) l, k l]`` only
    (the divisor stays ``k l``).
    """
    if not l > 0.0:
        raise ValueError("segment length must be positive")
    d = pair.distance
    total = d[-1]
    K = int(np.floor(total / l + 1e-12))
    if K < 1:
        raise ValueError(f"travelled distance {total:.2f} m is shorter than one segment ({l} m)")
    err = pair.horizontal_error
    edges = l * np.arange(1, K + 1)
    hi = np.searchsorted(d, edges, side="right")
    if per_window:
        lo = np.searchsorted(d, edges - l, side="left")
        peak = np.array([err[a:b].max() if b > a else 0.0 for a, b in zip(lo, hi)])
    else:
        peak = np.maximum.accumulate(err)[hi - 1]
    rates = 100.0 * peak / edges
    return DriftResult(float(rates.mean()), float(rates.std()), rates)


def heading_stats(pair: AlignedPair) -> tuple[float, float]:
    """RMSE and maximum absolute heading error in degrees."""
    if len(pair) == 0:
        raise ValueError("empty aligned pair")
    e = pair.heading_error * R2D
    return float(np.sqrt(np.mean(e**2))), float(np.abs(e).max())


def velocity_stats(pair: AlignedPair) -> float:
    """RMS of the horizontal velocity error (m/s).

    Missing velocity columns are replaced by finite differences of position.
    """
    if len(pair) == 0:
        raise ValueError("empty aligned pair")
    ev = pair.est_vel if pair.est_vel is not None else _fd_velocity(pair.t, pair.est_pos)
    tv = pair.truth_vel if pair.truth_vel is not None else _fd_velocity(pair.t, pair.truth_pos)
    dv = ev[:, :2] - tv[:, :2]
    return float(np.sqrt(np.mean(np.sum(dv**2, axis=1))))


def _fd_velocity(t, pos):
    if len(t) < 2:
        return np.zeros_like(pos)
    return np.gradient(pos, t, axis=0)


def evaluate(est: Trajectory, truth: Trajectory, l: float = 100.0) -> Metrics:
    pair = align(est, truth)
    drift = segmented_drift(pair, l)
    rmse, hmax = heading_stats(pair)
    return Metrics(drift.mean, drift.std, rmse, hmax, velocity_stats(pair),
                   float(pair.horizontal_error[-1]), float(pair.distance[-1]), float(l))


def write_report(metrics: Metrics | dict, path, extra: dict | None = None):
    """Plain ``key = value`` report."""
    d = metrics.to_dict() if isinstance(metrics, Metrics) else dict(metrics)
    if extra:
        d.update(extra)
    with open(path, "w") as fh:
        for k, v in d.items():
            fh.write(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n")


def read_report(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            k, _, v = line.partition("=")
            v = v.strip()
            try:
                out[k.strip()] = float(v)
            except ValueError:
                out[k.strip()] = v
    return out


def write_errors(pair: AlignedPair, path):
    """Per-sample error table for plotting."""
    dp = pair.est_pos - pair.truth_pos
    table = np.column_stack([pair.t, dp, pair.heading_error, pair.distance])
    np.savetxt(path, table, delimiter=",", fmt="%.17g",
               header="t,dn,de,dd,dheading,distance", comments="")
