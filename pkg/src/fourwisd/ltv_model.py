"""Controller-side 4WIS prediction model.

State ``x = [vx, vy, yaw_rate, yaw, Y]``, input ``u = [delta_FL, delta_FR,
delta_RL, delta_RR]``. Longitudinal tire forces are supplied by an estimator
and held constant over the prediction; lateral forces follow the linear
cornering-stiffness model evaluated with the sideslip-based lateral speed
estimate ``vy_hat`` (a parameter, not the state ``x[1]``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import VehicleParams, WheelId, default_params

MIN_SPEED = 0.1
SIDESLIP_LIMIT = math.pi / 3

OUTPUT_MATRIX = np.array([
    [0.0, 0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 1.0],
])


@dataclass(frozen=True)
class CtrlState:
    vx: float
    vy: float
    yaw_rate: float
    yaw: float
    Y: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_array()):
            raise ValueError("non-finite controller state")
        if not self.vx > MIN_SPEED:
            raise ValueError(f"vx={self.vx} must exceed {MIN_SPEED}")

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.yaw_rate, self.yaw, self.Y])

    @classmethod
    def from_array(cls, x) -> "CtrlState":
        return cls(*(float(v) for v in x))


def _axle_arm(p: VehicleParams) -> np.ndarray:
    return np.array([p.l_f, p.l_f, -p.l_r, -p.l_r])


def lateral_force_linear(delta_i: float, vy_hat: float, yaw_rate: float, vx: float,
                         wheel: WheelId, p: VehicleParams | None = None) -> float:
    p = p or default_params()
    if not vx > MIN_SPEED:
        raise ValueError(f"vx={vx} must exceed {MIN_SPEED}")
    if wheel in (WheelId.FL, WheelId.FR):
        return p.C_f * (delta_i - (vy_hat + p.l_f * yaw_rate) / vx)
    return p.C_r * (delta_i - (vy_hat - p.l_r * yaw_rate) / vx)


def lateral_forces_linear(delta, vy, yaw_rate, vx, p: VehicleParams) -> np.ndarray:
    """Vectorised linear lateral force for all four wheels."""
    return p.cornering_stiffness() * (np.asarray(delta) - (vy + _axle_arm(p) * yaw_rate) / vx)


def _check(x, u):
    if not x[0] > MIN_SPEED:
        raise ValueError(f"vx={x[0]} must exceed {MIN_SPEED}")
    if np.any(np.abs(u) >= math.pi / 2):
        raise ValueError("steering angles must stay inside (-pi/2, pi/2)")


def eval_dynamics(x, u, fx_hat, vy_hat: float, p: VehicleParams | None = None,
                  paper_literal_f5: bool = False) -> np.ndarray:
    p = p or default_params()
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    fx = np.asarray(fx_hat, dtype=float)
    _check(x, u)
    vx, vy, r, yaw = x[0], x[1], x[2], x[3]
    fy = lateral_forces_linear(u, vy_hat, r, vx, p)
    c, s = np.cos(u), np.sin(u)
    fxb = fx * c - fy * s
    fyb = fx * s + fy * c
    mz = np.dot(_axle_arm(p), fyb) - np.dot(p.wheel_y(), fxb)
    f5 = vy if paper_literal_f5 else vx * math.sin(yaw) + vy * math.cos(yaw)
    return np.array([
        fxb.sum() / p.m + vy * r,
        fyb.sum() / p.m - vx * r,
        mz / p.I_z,
        r,
        f5,
    ])


def jacobians(x, u, fx_hat, vy_hat: float, p: VehicleParams | None = None,
              paper_literal_f5: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form (A, B) = (df/dx, df/du)."""
    p = p or default_params()
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    fx = np.asarray(fx_hat, dtype=float)
    _check(x, u)
    vx, vy, r, yaw = x[0], x[1], x[2], x[3]
    arm = _axle_arm(p)
    yw = p.wheel_y()
    Cs = p.cornering_stiffness()
    a = (vy_hat + arm * r) / vx
    fy = Cs * (u - a)
    c, s = np.cos(u), np.sin(u)
    fxb = fx * c - fy * s
    fyb = fx * s + fy * c

    # sensitivities of the body-frame forces to the slip angle and to the steer angle
    dfxb_da = -Cs * s
    dfyb_da = Cs * c
    dmz_da = arm * dfyb_da - yw * dfxb_da
    da_dvx = a / vx
    da_dr = -arm / vx

    A = np.zeros((5, 5))
    A[0, 0] = np.dot(dfxb_da, da_dvx) / p.m
    A[0, 1] = r
    A[0, 2] = np.dot(dfxb_da, da_dr) / p.m + vy
    A[1, 0] = np.dot(dfyb_da, da_dvx) / p.m - r
    A[1, 2] = np.dot(dfyb_da, da_dr) / p.m - vx
    A[2, 0] = np.dot(dmz_da, da_dvx) / p.I_z
    A[2, 2] = np.dot(dmz_da, da_dr) / p.I_z
    A[3, 2] = 1.0
    if paper_literal_f5:
        A[4, 1] = 1.0
    else:
        A[4, 0] = math.sin(yaw)
        A[4, 1] = math.cos(yaw)
        A[4, 3] = vx * math.cos(yaw) - vy * math.sin(yaw)

    dfxb_du = -fyb + dfxb_da
    dfyb_du = fxb + dfyb_da
    B = np.zeros((5, 4))
    B[0] = dfxb_du / p.m
    B[1] = dfyb_du / p.m
    B[2] = (arm * dfyb_du - yw * dfxb_du) / p.I_z
    return A, B


@dataclass(frozen=True)
class LinearizedModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    A_d: np.ndarray
    B_d: np.ndarray
    x_bar: np.ndarray
    u_bar: np.ndarray
    f_bar: np.ndarray  # f(x_bar, u_bar)
    dt: float

    @property
    def drift(self) -> np.ndarray:
        """Affine term of the discrete model: x+ = A_d x + B_d u + drift."""
        return (self.f_bar - self.A @ self.x_bar - self.B @ self.u_bar) * self.dt


def discretize(A, B, dt):
    return np.eye(A.shape[0]) + A * dt, B * dt


def linearize(x_bar, u_bar, fx_hat, vy_hat: float, p: VehicleParams | None = None,
              dt: float | None = None, paper_literal_f5: bool = False) -> LinearizedModel:
    p = p or default_params()
    dt = p.dt if dt is None else dt
    x_bar = np.asarray(x_bar, dtype=float)
    u_bar = np.asarray(u_bar, dtype=float)
    A, B = jacobians(x_bar, u_bar, fx_hat, vy_hat, p, paper_literal_f5)
    f_bar = eval_dynamics(x_bar, u_bar, fx_hat, vy_hat, p, paper_literal_f5)
    A_d, B_d = discretize(A, B, dt)
    return LinearizedModel(A, B, OUTPUT_MATRIX.copy(), A_d, B_d, x_bar, u_bar, f_bar, dt)


@dataclass(frozen=True)
class SideslipEstimate:
    beta_hat: float
    vy_hat: float
    unstable: bool = False

    @classmethod
    def from_beta(cls, beta: float, vx: float, unstable: bool = False) -> "SideslipEstimate":
        return cls(beta, vx * math.tan(beta), unstable)


def sideslip_rate(beta, fx_hat, fy_hat, delta, vx, p: VehicleParams, yaw_rate: float = 0.0) -> float:
    """Sideslip derivative from the estimated tire forces.

    The force sum gives the lateral acceleration along the velocity normal;
    subtracting the yaw rate converts it to the rate of the sideslip angle.
    """
    lateral = np.sum(-fx_hat * np.sin(beta - delta) + fy_hat * np.cos(delta - beta))
    return float(lateral) / (p.m * vx) - yaw_rate


def advance_sideslip(est: SideslipEstimate, fx_hat, fy_hat, u, vx: float, p: VehicleParams | None = None,
                     h: float | None = None, yaw_rate: float = 0.0) -> SideslipEstimate:
    """One Heun (RK2) step of the sideslip integrator, then vy_hat = vx*tan(beta)."""
    p = p or default_params()
    h = p.dt if h is None else h
    if not vx > MIN_SPEED:
        raise ValueError(f"vx={vx} must exceed {MIN_SPEED}")
    fx = np.asarray(fx_hat, dtype=float)
    fy = np.asarray(fy_hat, dtype=float)
    d = np.asarray(u, dtype=float)
    b0 = est.beta_hat
    k1 = sideslip_rate(b0, fx, fy, d, vx, p, yaw_rate)
    k2 = sideslip_rate(b0 + h * k1, fx, fy, d, vx, p, yaw_rate)
    beta = b0 + 0.5 * h * (k1 + k2)
    unstable = est.unstable
    if abs(beta) >= SIDESLIP_LIMIT:
        beta = math.copysign(SIDESLIP_LIMIT * (1 - 1e-9), beta)
        unstable = True
    return SideslipEstimate.from_beta(beta, vx, unstable)
