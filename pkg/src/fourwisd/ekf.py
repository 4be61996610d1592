"""Extended Kalman filter for per-wheel tire forces.

State (15): vx, vy, yaw rate, four wheel speeds, four longitudinal forces
(random walks) and four lateral forces that relax toward the linear-tire value
with length constant ``sigma``. Measurements (9): vx, vy, ax, ay, yaw rate and
the wheel speeds. Inputs: four steering angles and four wheel torques.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import VehicleParams, default_params
from .plant import static_loads

log = logging.getLogger(__name__)

N_X = 15
N_Y = 9
IX_V = slice(0, 3)
IX_W = slice(3, 7)
IX_FX = slice(7, 11)
IX_FY = slice(11, 15)
MIN_SPEED = 0.1

STATE_LABELS = ("vx", "vy", "yaw_rate", "w_FL", "w_FR", "w_RL", "w_RR",
                "Fx_FL", "Fx_FR", "Fx_RL", "Fx_RR", "Fy_FL", "Fy_FR", "Fy_RL", "Fy_RR")
MEAS_LABELS = ("vx", "vy", "ax", "ay", "yaw_rate", "w_FL", "w_FR", "w_RL", "w_RR")


def default_covariances() -> tuple[np.ndarray, np.ndarray]:
    q = np.array([1000, 1000, 100, 1, 1, 1, 1, 1000, 1000, 1000, 1000, 1, 1, 1, 1], dtype=float) * 1e-3
    r = np.array([10, 1, 10, 1, 1, 1, 1, 1, 1], dtype=float)
    return np.diag(q), np.diag(r)


@dataclass
class EkfState:
    x_star: np.ndarray
    P: np.ndarray
    Q_star: np.ndarray
    R_star: np.ndarray
    sigma: float = 0.3
    rolling_coeff: float | None = None  # multiplies F_z in the wheel-spin balance; None means R_r
    skipped: int = 0

    def __post_init__(self):
        self.x_star = np.asarray(self.x_star, dtype=float).reshape(N_X)
        self.P = np.asarray(self.P, dtype=float).reshape(N_X, N_X)
        if self.sigma <= 0:
            raise ValueError("relaxation length must be positive")

    @property
    def fx(self) -> np.ndarray:
        return self.x_star[IX_FX].copy()

    @property
    def fy(self) -> np.ndarray:
        return self.x_star[IX_FY].copy()

    def min_eig(self) -> float:
        return float(np.linalg.eigvalsh(self.P).min())


@dataclass(frozen=True)
class EkfMeasurement:
    y_star: np.ndarray = field(default_factory=lambda: np.zeros(N_Y))

    def __post_init__(self):
        y = np.asarray(self.y_star, dtype=float).reshape(-1)
        if y.shape != (N_Y,):
            raise ValueError(f"measurement needs {N_Y} entries")
        object.__setattr__(self, "y_star", y)


def initial_state(y0, Q=None, R=None, sigma: float = 0.3, rolling_coeff: float | None = None) -> EkfState:
    """Kinematic channels from the first measurement, forces zero, P0 = I."""
    Qd, Rd = default_covariances()
    y0 = np.asarray(y0, dtype=float)
    x = np.zeros(N_X)
    x[0], x[1], x[2] = y0[0], y0[1], y0[4]
    x[IX_W] = y0[5:9]
    return EkfState(x, np.eye(N_X), Qd if Q is None else np.asarray(Q, float),
                    Rd if R is None else np.asarray(R, float), sigma, rolling_coeff)


def _arm(p: VehicleParams):
    return np.array([p.l_f, p.l_f, -p.l_r, -p.l_r])


def _split(u_star):
    u = np.asarray(u_star, dtype=float).reshape(8)
    return u[:4], u[4:]


def _moment_coeffs(delta, p: VehicleParams):
    """Per-wheel coefficients of Fx and Fy in the yaw moment."""
    c, s = np.cos(delta), np.sin(delta)
    h = 0.5 * p.t_w
    side = np.array([1.0, -1.0, 1.0, -1.0])  # +1 for the left wheels
    arm = _arm(p)
    kx = arm * s + side * h * c
    ky = arm * c - side * h * s
    return kx, ky


def eval_f_star(x_star, u_star, p: VehicleParams | None = None, fz=None,
                sigma: float = 0.3, rolling_coeff: float | None = None) -> np.ndarray:
    p = p or default_params()
    x = np.asarray(x_star, dtype=float)
    vx, vy, r = x[0], x[1], x[2]
    if not vx > MIN_SPEED:
        raise ValueError(f"vx={vx} must exceed {MIN_SPEED}")
    delta, torque = _split(u_star)
    fz = static_loads(p) if fz is None else np.asarray(fz, dtype=float)
    k_roll = p.R_r if rolling_coeff is None else rolling_coeff
    Fx, Fy = x[IX_FX], x[IX_FY]
    c, s = np.cos(delta), np.sin(delta)
    kx, ky = _moment_coeffs(delta, p)
    Cs = p.cornering_stiffness()
    fy_bar = Cs * (delta - (vy + _arm(p) * r) / vx)
    out = np.zeros(N_X)
    out[0] = np.sum(Fx * c - Fy * s) / p.m + vy * r
    out[1] = np.sum(Fx * s + Fy * c) / p.m - vx * r
    out[2] = (kx @ Fx + ky @ Fy) / p.I_z
    out[IX_W] = (torque - p.R_e * (Fx + k_roll * fz)) / p.I_w
    out[IX_FY] = vx / sigma * (fy_bar - Fy)
    return out


def f_jacobian(x_star, u_star, p: VehicleParams | None = None, sigma: float = 0.3) -> np.ndarray:
    p = p or default_params()
    x = np.asarray(x_star, dtype=float)
    vx, vy, r = x[0], x[1], x[2]
    delta, _ = _split(u_star)
    Fy = x[IX_FY]
    c, s = np.cos(delta), np.sin(delta)
    kx, ky = _moment_coeffs(delta, p)
    Cs = p.cornering_stiffness()
    arm = _arm(p)
    A = np.zeros((N_X, N_X))
    A[0, 1], A[0, 2] = r, vy
    A[0, IX_FX], A[0, IX_FY] = c / p.m, -s / p.m
    A[1, 0], A[1, 2] = -r, -vx
    A[1, IX_FX], A[1, IX_FY] = s / p.m, c / p.m
    A[2, IX_FX], A[2, IX_FY] = kx / p.I_z, ky / p.I_z
    for i in range(4):
        A[3 + i, 7 + i] = -p.R_e / p.I_w
        row = 11 + i
        # (vx/sigma)*Cs*delta - (Cs/sigma)*(vy + arm*r) - (vx/sigma)*Fy
        A[row, 0] = (Cs[i] * delta[i] - Fy[i]) / sigma
        A[row, 1] = -Cs[i] / sigma
        A[row, 2] = -Cs[i] * arm[i] / sigma
        A[row, row] = -vx / sigma
    return A


def eval_h_star(x_star, u_star, p: VehicleParams | None = None) -> np.ndarray:
    p = p or default_params()
    x = np.asarray(x_star, dtype=float)
    delta, _ = _split(u_star)
    Fx, Fy = x[IX_FX], x[IX_FY]
    c, s = np.cos(delta), np.sin(delta)
    return np.array([
        x[0], x[1],
        np.sum(Fx * c - Fy * s) / p.m,
        np.sum(Fx * s + Fy * c) / p.m,
        x[2], *x[IX_W],
    ])


def h_jacobian(x_star, u_star, p: VehicleParams | None = None) -> np.ndarray:
    p = p or default_params()
    delta, _ = _split(u_star)
    c, s = np.cos(delta), np.sin(delta)
    C = np.zeros((N_Y, N_X))
    C[0, 0] = C[1, 1] = 1.0
    C[2, IX_FX], C[2, IX_FY] = c / p.m, -s / p.m
    C[3, IX_FX], C[3, IX_FY] = s / p.m, c / p.m
    C[4, 2] = 1.0
    for i in range(4):
        C[5 + i, 3 + i] = 1.0
    return C


def predict(s: EkfState, u_star, p: VehicleParams | None = None, dt: float = 0.01, fz=None) -> EkfState:
    p = p or default_params()
    f = eval_f_star(s.x_star, u_star, p, fz, s.sigma, s.rolling_coeff)
    A_d = np.eye(N_X) + f_jacobian(s.x_star, u_star, p, s.sigma) * dt
    x = s.x_star + dt * f
    P = A_d @ s.P @ A_d.T + s.Q_star
    return replace(s, x_star=x, P=0.5 * (P + P.T))


def update(s: EkfState, y, u_star, p: VehicleParams | None = None) -> EkfState:
    p = p or default_params()
    y = y.y_star if isinstance(y, EkfMeasurement) else np.asarray(y, dtype=float)
    innov = y - eval_h_star(s.x_star, u_star, p)
    if not np.all(np.isfinite(innov)):
        log.warning("non-finite innovation, update skipped")
        return replace(s, skipped=s.skipped + 1)
    C = h_jacobian(s.x_star, u_star, p)
    PCt = s.P @ C.T
    S = C @ PCt + s.R_star
    K = np.linalg.solve(S, PCt.T).T
    x = s.x_star + K @ innov
    I_KC = np.eye(N_X) - K @ C
    # Joseph form: same value as P - KCP for this gain, but stays symmetric PSD in floating point
    P = I_KC @ s.P @ I_KC.T + K @ s.R_star @ K.T
    return replace(s, x_star=x, P=0.5 * (P + P.T))


def gain(s: EkfState, u_star, p: VehicleParams | None = None) -> np.ndarray:
    p = p or default_params()
    C = h_jacobian(s.x_star, u_star, p)
    PCt = s.P @ C.T
    return np.linalg.solve(C @ PCt + s.R_star, PCt.T).T


def innovation_nis(s: EkfState, y, u_star, p: VehicleParams | None = None) -> float:
    """Normalized innovation squared for the prior ``s``."""
    p = p or default_params()
    innov = np.asarray(y, dtype=float) - eval_h_star(s.x_star, u_star, p)
    C = h_jacobian(s.x_star, u_star, p)
    S = C @ s.P @ C.T + s.R_star
    return float(innov @ np.linalg.solve(S, innov))


class EkfEstimator:
    """Predict/update driver used by the closed loop."""

    def __init__(self, p: VehicleParams | None = None, dt: float = 0.01, sigma: float = 0.3,
                 rolling_coeff: float | None = None, Q=None, R=None):
        self.p = p or default_params()
        self.dt = dt
        self.sigma = sigma
        self.rolling_coeff = rolling_coeff
        self.Q, self.R = Q, R
        self.state: EkfState | None = None

    def step(self, y, u_star, fz=None) -> EkfState:
        """Absorb measurement y taken after input u_star was applied for one period."""
        if self.state is None:
            self.state = initial_state(y, self.Q, self.R, self.sigma, self.rolling_coeff)
            return self.state
        prior = predict(self.state, u_star, self.p, self.dt, fz)
        self.state = update(prior, y, u_star, self.p)
        return self.state
