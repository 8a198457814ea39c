"""Continuous-time error-state dynamics and their discretisation.

Error state (21 entries, closed-loop so its mean is zero between updates)::

    [dr(3), dv(3), phi(3), bg(3), ba(3), sg(3), sa(3)]

``dr``/``dv`` are estimate-minus-truth in the navigation frame, ``phi`` is the
attitude error with ``C_est = (I - phi x) C_true`` and the four sensor blocks
are residual gyro/accel biases and scale factors in the body frame.  The 15-
and 9-state variants keep the leading 15 / 9 entries.

Noise vector ordering::

    [w_gyro(3), w_accel(3), w_bg(3), w_ba(3), w_sg(3), w_sa(3)]
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .core import DEG_PER_HOUR, D2R, skew

POS, VEL, ATT, BG, BA, SG, SA = 0, 3, 6, 9, 12, 15, 18
DIM_MODES = (21, 15, 9)
MAX_DT = 0.05


def check_dim(dim_mode: int) -> int:
    if dim_mode not in DIM_MODES:
        raise ValueError(f"dim_mode must be one of {DIM_MODES}, got {dim_mode!r}")
    return int(dim_mode)


def noise_dim(dim_mode: int) -> int:
    return {21: 18, 15: 12, 9: 6}[check_dim(dim_mode)]


@dataclass(frozen=True)
class GmParams:
    """First-order Gauss-Markov parameters for the four sensor-error blocks.

    ``T_*`` are correlation times in seconds, ``q_*`` the per-axis PSD of the
    driving noise (units^2 / s).
    """

    T_bg: float = 3600.0
    T_ba: float = 3600.0
    T_sg: float = 3600.0
    T_sa: float = 3600.0
    q_bg: float = 2.0 * (200.0 * DEG_PER_HOUR) ** 2 / 3600.0
    q_ba: float = 2.0 * 0.01**2 / 3600.0
    q_sg: float = 2.0 * 1000e-6**2 / 3600.0
    q_sa: float = 2.0 * 1000e-6**2 / 3600.0

    def __post_init__(self):
        for name in ("T_bg", "T_ba", "T_sg", "T_sa"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        for name in ("q_bg", "q_ba", "q_sg", "q_sa"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def from_sigmas(cls, sigma_bg, sigma_ba, sigma_sg, sigma_sa, T=3600.0) -> "GmParams":
        """Driving PSDs that give the requested steady-state standard deviations."""
        return cls(T, T, T, T, 2 * sigma_bg**2 / T, 2 * sigma_ba**2 / T,
                   2 * sigma_sg**2 / T, 2 * sigma_sa**2 / T)

    @property
    def times(self) -> np.ndarray:
        return np.array([self.T_bg, self.T_ba, self.T_sg, self.T_sa])


@dataclass(frozen=True)
class NoisePsd:
    """White-noise densities plus Gauss-Markov parameters.

    Defaults follow the ICM20602 row of the sensor table: ARW 0.24 deg/sqrt(h),
    VRW 3 m/s/sqrt(h).
    """

    arw: float = 0.24 * D2R / 60.0  # rad/sqrt(s)
    vrw: float = 3.0 / 60.0  # m/s/sqrt(s)
    gm: GmParams = field(default_factory=GmParams)

    def __post_init__(self):
        if self.arw < 0 or self.vrw < 0:
            raise ValueError("noise densities must be non-negative")

    def q_diag(self) -> np.ndarray:
        """Diagonal of the 18x18 continuous noise PSD matrix."""
        gm = self.gm
        return np.repeat(
            [self.arw**2, self.vrw**2, gm.q_bg, gm.q_ba, gm.q_sg, gm.q_sa], 3
        ).astype(float)


@dataclass
class ErrorState:
    dim_mode: int
    dx: np.ndarray
    P: np.ndarray

    @classmethod
    def zeros(cls, dim_mode: int) -> "ErrorState":
        n = check_dim(dim_mode)
        return cls(n, np.zeros(n), np.zeros((n, n)))

    def is_healthy(self, rel_tol: float = 1e-10) -> bool:
        P = self.P
        scale = max(np.abs(P).max(), 1e-300)
        if np.abs(P - P.T).max() > rel_tol * scale:
            return False
        return bool(np.linalg.eigvalsh(0.5 * (P + P.T)).min() >= -1e-12 * np.trace(P))


# -- kernels ------------------------------------------------------------------


@njit(cache=True)
def build_F_full(c_bn, f_b, omega_b, times):
    F = np.zeros((21, 21))
    for i in range(3):
        F[POS + i, VEL + i] = 1.0
    A = skew(c_bn @ f_b)
    for i in range(3):
        for j in range(3):
            F[VEL + i, ATT + j] = A[i, j]
            F[VEL + i, BA + j] = c_bn[i, j]
            F[VEL + i, SA + j] = c_bn[i, j] * f_b[j]
            F[ATT + i, BG + j] = -c_bn[i, j]
            F[ATT + i, SG + j] = -c_bn[i, j] * omega_b[j]
    for blk in range(4):
        for i in range(3):
            k = BG + 3 * blk + i
            F[k, k] = -1.0 / times[blk]
    return F


@njit(cache=True)
def build_Qc(c_bn, q_diag, n):
    """``G Q G^T`` for the leading ``n`` states."""
    Qc = np.zeros((n, n))
    for i in range(3):
        for j in range(3):
            sv = 0.0
            sp = 0.0
            for k in range(3):
                sv += c_bn[i, k] * q_diag[3 + k] * c_bn[j, k]
                sp += c_bn[i, k] * q_diag[k] * c_bn[j, k]
            Qc[VEL + i, VEL + j] = sv
            Qc[ATT + i, ATT + j] = sp
    for k in range(9, n):
        Qc[k, k] = q_diag[k - 3]
    return Qc


@njit(cache=True)
def _sandwich(F, M, dt, n):
    """``(I + F dt) M (I + F dt)^T`` for symmetric ``M`` exploiting sparse ``F``."""
    rows = np.empty(n * n, dtype=np.int64)
    cols = np.empty(n * n, dtype=np.int64)
    vals = np.empty(n * n)
    nnz = 0
    for i in range(n):
        for k in range(n):
            if F[i, k] != 0.0:
                rows[nnz] = i
                cols[nnz] = k
                vals[nnz] = F[i, k]
                nnz += 1
    A = np.zeros((n, n))  # F @ M
    for e in range(nnz):
        i, k, v = rows[e], cols[e], vals[e]
        for j in range(n):
            A[i, j] += v * M[k, j]
    B = np.zeros((n, n))  # A @ F^T
    for e in range(nnz):
        j, k, v = rows[e], cols[e], vals[e]
        for i in range(n):
            B[i, j] += A[i, k] * v
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = M[i, j] + dt * (A[i, j] + A[j, i]) + dt * dt * B[i, j]
    return out


@njit(cache=True)
def propagate_cov(P, c_bn, f_b, omega_b, times, q_diag, dt):
    """First-order transition with trapezoidal process noise, in place of
    ``P = Phi P Phi^T + Qd``."""
    n = P.shape[0]
    F = build_F_full(c_bn, f_b, omega_b, times)[:n, :n].copy()
    Qc = build_Qc(c_bn, q_diag, n)
    phi_qc = _sandwich(F, Qc, dt, n)
    Pn = _sandwich(F, P, dt, n)
    for i in range(n):
        for j in range(n):
            Pn[i, j] += 0.5 * (phi_qc[i, j] + Qc[i, j]) * dt
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.5 * (Pn[i, j] + Pn[j, i])
            Pn[i, j] = s
            Pn[j, i] = s
    return Pn


# -- public API -------------------------------------------------------------


def build_F(c_bn, f_b, omega_b, gm: GmParams = GmParams(), dim_mode: int = 21) -> np.ndarray:
    """Continuous-time system matrix, rows/columns for the chosen state size."""
    n = check_dim(dim_mode)
    F = build_F_full(np.asarray(c_bn, float), np.asarray(f_b, float),
                     np.asarray(omega_b, float), gm.times)
    return F[:n, :n].copy()


def build_G(c_bn, dim_mode: int = 21) -> np.ndarray:
    """Noise distribution matrix (accel noise drives dv, gyro noise drives phi)."""
    n = check_dim(dim_mode)
    c = np.asarray(c_bn, float)
    G = np.zeros((21, 18))
    G[VEL:VEL + 3, 3:6] = c
    G[ATT:ATT + 3, 0:3] = -c
    G[9:21, 6:18] = np.eye(12)
    return G[:n, :noise_dim(n)].copy()


def gm_discrete_factor(T: float, dt: float) -> float:
    if not T > 0.0:
        raise ValueError("correlation time must be positive")
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    return math.exp(-dt / T)


def discretize(F, G, q_psd, dt: float):
    """``Phi = I + F dt`` and trapezoidal ``Qd``.

    ``q_psd`` is the diagonal of the continuous noise PSD (length = G columns).
    """
    if not 0.0 < dt <= MAX_DT:
        raise ValueError(f"dt must lie in (0, {MAX_DT}] s, got {dt!r}")
    F = np.asarray(F, float)
    G = np.asarray(G, float)
    Q = np.diag(np.asarray(q_psd, float))
    Phi = np.eye(F.shape[0]) + F * dt
    GQG = G @ Q @ G.T
    Qd = 0.5 * (Phi @ GQG @ Phi.T + GQG) * dt
    return Phi, 0.5 * (Qd + Qd.T)
