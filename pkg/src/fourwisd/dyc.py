"""Direct yaw-moment control: sliding-mode upper level and torque allocation.

The upper level tracks a friction-limited yaw-rate reference with a boundary
layer sliding-mode law; the lower level splits the requested moment into
per-wheel drive torques weighted by the vertical load on each wheel.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .domain import G, VehicleParams, WheelId, default_params

log = logging.getLogger(__name__)

C_MIN = 0.05  # m, smallest usable moment arm in the allocator
MIN_SPEED = 0.1

# wheel on the same side, used when one arm collapses
_SAME_SIDE = {WheelId.FL: WheelId.RL, WheelId.RL: WheelId.FL, WheelId.FR: WheelId.RR, WheelId.RR: WheelId.FR}


@dataclass(frozen=True)
class SmcConfig:
    eta: float = 0.01
    k1: float = 3000.0
    k2: float = 8000.0
    phi_b: float = 0.05
    tau_gamma: float = 0.1
    mu_hat: float = 0.85
    ref_margin: float = 0.85

    def __post_init__(self):
        if min(self.eta, self.k1, self.k2, self.phi_b, self.tau_gamma) <= 0:
            raise ValueError("eta, k1, k2, phi_b and tau_gamma must be positive")
        if self.mu_hat <= 0:
            raise ValueError("friction estimate must be positive")


@dataclass(frozen=True)
class YawRefState:
    gamma_t: float = 0.0
    gamma_des: float = 0.0


def understeer_denominator(vx: float, p: VehicleParams) -> float:
    L = p.l_f + p.l_r
    return L + p.m * vx * vx * (p.l_r * p.C_r - p.l_f * p.C_f) / (2 * p.C_r * p.C_f * L)


def steady_yaw_gain(delta_F: float, vx: float, p: VehicleParams | None = None) -> float:
    """Steady-state yaw rate of the linear bicycle model for mean front steer delta_F."""
    p = p or default_params()
    if not vx > MIN_SPEED:
        raise ValueError(f"vx={vx} must exceed {MIN_SPEED}")
    den = understeer_denominator(vx, p)
    if den <= 0:
        raise ValueError(f"unstable steady-state gain at vx={vx} (denominator {den:.4g})")
    return vx * delta_F / den


def yaw_rate_bound(vx: float, cfg: SmcConfig, g: float = G) -> float:
    return cfg.ref_margin * cfg.mu_hat * g / vx


def desired_yaw_rate(ref: YawRefState, delta_F: float, vx: float, cfg: SmcConfig,
                     h: float, p: VehicleParams | None = None) -> YawRefState:
    p = p or default_params()
    gamma_o = steady_yaw_gain(delta_F, vx, p)
    # exact discretization of the first-order lag
    a = math.exp(-h / cfg.tau_gamma)
    gamma_t = a * ref.gamma_t + (1 - a) * gamma_o
    bound = yaw_rate_bound(vx, cfg, p.g)
    return YawRefState(gamma_t, max(-bound, min(bound, gamma_t)))


def sliding_surface(gamma: float, gamma_des: float, beta_hat: float, eta: float, beta_des: float = 0.0) -> float:
    return gamma - gamma_des + eta * (beta_hat - beta_des)


def sat(x: float) -> float:
    return max(-1.0, min(1.0, x))


def lateral_force_moment(fy_hat, delta, p: VehicleParams) -> float:
    """Yaw moment produced by the lateral tire forces alone."""
    fy = np.asarray(fy_hat, dtype=float)
    d = np.asarray(delta, dtype=float)
    c, s = np.cos(d), np.sin(d)
    return float(p.l_f * (fy[0] * c[0] + fy[1] * c[1]) - p.l_r * (fy[2] * c[2] + fy[3] * c[3])
                 - 0.5 * p.t_w * (fy[0] * s[0] - fy[1] * s[1] + fy[2] * s[2] - fy[3] * s[3]))


def yaw_moment(gamma: float, gamma_des: float, beta_hat: float, fy_hat, delta,
               cfg: SmcConfig | None = None, p: VehicleParams | None = None) -> tuple[float, float]:
    """Sliding-mode yaw moment. Returns (M_z, s)."""
    cfg = cfg or SmcConfig()
    p = p or default_params()
    s = sliding_surface(gamma, gamma_des, beta_hat, cfg.eta)
    Mz = -cfg.k1 * sat(s / cfg.phi_b) - cfg.k2 * s - lateral_force_moment(fy_hat, delta, p)
    return Mz, s


def moment_arms(delta, p: VehicleParams) -> np.ndarray:
    """Coefficient of each wheel's longitudinal force in the yaw moment balance."""
    d = np.asarray(delta, dtype=float)
    c, s = np.cos(d), np.sin(d)
    h = 0.5 * p.t_w
    return np.array([
        p.l_f * s[0] + h * c[0],
        p.l_f * s[1] - h * c[1],
        -p.l_r * s[2] + h * c[2],
        -p.l_r * s[3] - h * c[3],
    ])


def longitudinal_force_moment(fx, delta, p: VehicleParams) -> float:
    return float(moment_arms(delta, p) @ np.asarray(fx, dtype=float))


def _flipped_arms(delta, p: VehicleParams) -> np.ndarray:
    d = np.asarray(delta, dtype=float)
    c, s = np.cos(d), np.sin(d)
    h = 0.5 * p.t_w
    # alternative sign pattern on the track terms; RL carries an extra leading minus
    return np.array([
        p.l_f * s[0] - h * c[0],
        p.l_f * s[1] + h * c[1],
        -(-p.l_r * s[2] + h * c[2]),
        -p.l_r * s[3] + h * c[3],
    ])


def allocate_torques(Mz: float, delta, fz, p: VehicleParams | None = None,
                     paper_literal_allocation: bool = False) -> np.ndarray:
    """Drive torques whose longitudinal forces T_i / R_e produce the yaw moment Mz."""
    p = p or default_params()
    fz = np.asarray(fz, dtype=float)
    total = fz.sum()
    if not total > 0:
        raise ValueError("total vertical load must be positive")
    w = fz / total
    arms = _flipped_arms(delta, p) if paper_literal_allocation else moment_arms(delta, p)
    if paper_literal_allocation:
        return w * Mz * p.R_e / arms
    share = w.copy()
    small = np.abs(arms) < C_MIN
    for i in np.flatnonzero(small):
        j = _SAME_SIDE[WheelId(i)]
        if small[j]:
            raise ValueError("both wheels on one side have a collapsed moment arm")
        log.info("wheel %s arm %.3g m below %.2g m; share moved to %s",
                 WheelId(i).name, arms[i], C_MIN, j.name)
        share[j] += share[i]
        share[i] = 0.0
    T = np.zeros(4)
    ok = ~small
    T[ok] = share[ok] * Mz * p.R_e / arms[ok]
    return T


def cruise_torque(vx: float, v_set: float, p: VehicleParams | None = None, gain: float = 1.0,
                  rolling: float = 0.015) -> np.ndarray:
    """Equal per-wheel drive torque holding ``v_set``.

    Proportional on the speed error (``gain`` in 1/s, acceleration per m/s of
    error) plus a feed-forward for rolling resistance.
    """
    p = p or default_params()
    force = p.m * gain * (v_set - vx) + rolling * p.m * p.g
    return np.full(4, 0.25 * force * p.R_e)
