"""Artificial potential field reference generator.

The field is the sum of an obstacle Gaussian, a lane-marking ridge, road-edge
barriers and a linear velocity ramp. The reference heading points along the
negative gradient and the lateral reference comes from integrating the
vehicle's planar kinematics along that heading.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np


class FieldError(ValueError):
    pass


@dataclass(frozen=True)
class FieldParams:
    A_o: float = 10.0
    sigma_x: float = 15.0
    sigma_y: float = 1.2
    A_l: float = 2.0
    Y_c: float = 1.8
    sigma_l: float = 0.8
    A_r: float = 2.0
    Y_lr: float = -1.8
    Y_rr: float = 5.4
    gamma_v: float = 18.0
    v_d: float = 24.22
    vx: float = 22.22
    X_obs: float = 50.0
    Y_obs: float = 0.0

    def __post_init__(self):
        if self.A_o < 0 or self.A_l <= 0 or self.A_r <= 0:
            raise FieldError("field amplitudes must be positive (A_o may be 0 to disable the obstacle)")
        if min(self.sigma_x, self.sigma_y, self.sigma_l) <= 0:
            raise FieldError("field widths must be positive")
        if self.Y_lr == self.Y_rr:
            raise FieldError("road edges coincide")
        if self.v_d <= 0:
            raise FieldError("desired speed must be positive")

    def with_speed(self, vx: float, margin: float = 2.0) -> "FieldParams":
        return replace(self, vx=vx, v_d=vx + margin)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FieldParams":
        return cls(**d)


def _check_interior(Y, p: FieldParams):
    lo, hi = min(p.Y_lr, p.Y_rr), max(p.Y_lr, p.Y_rr)
    if np.any(np.asarray(Y) <= lo) or np.any(np.asarray(Y) >= hi):
        raise FieldError(f"Y={Y} is not strictly inside the road edges ({lo}, {hi})")


def potentials(X, Y, p: FieldParams):
    """(obstacle, lane, road, velocity) terms."""
    _check_interior(Y, p)
    dx, dy = X - p.X_obs, Y - p.Y_obs
    P_o = p.A_o * np.exp(-(dx * dx / (2 * p.sigma_x ** 2) + dy * dy / (2 * p.sigma_y ** 2)))
    P_l = p.A_l * np.exp(-((Y - p.Y_c) ** 2) / (2 * p.sigma_l ** 2))
    P_r = p.A_r * ((1.0 / (Y - p.Y_lr)) ** 2 + (1.0 / (Y - p.Y_rr)) ** 2)
    P_v = p.gamma_v * (p.vx - p.v_d) * X
    return P_o, P_l, P_r, P_v


def total_potential(X, Y, p: FieldParams):
    return sum(potentials(X, Y, p))


def total_force(X, Y, p: FieldParams):
    """Closed-form negative gradient (F_TX, F_TY)."""
    _check_interior(Y, p)
    dx, dy = X - p.X_obs, Y - p.Y_obs
    P_o = p.A_o * np.exp(-(dx * dx / (2 * p.sigma_x ** 2) + dy * dy / (2 * p.sigma_y ** 2)))
    P_l = p.A_l * np.exp(-((Y - p.Y_c) ** 2) / (2 * p.sigma_l ** 2))
    F_x = P_o * dx / p.sigma_x ** 2 - p.gamma_v * (p.vx - p.v_d)
    F_y = (P_o * dy / p.sigma_y ** 2
           + P_l * (Y - p.Y_c) / p.sigma_l ** 2
           + 2 * p.A_r * ((Y - p.Y_lr) ** -3 + (Y - p.Y_rr) ** -3))
    return F_x, F_y


def heading(F_TX: float, F_TY: float) -> float:
    if F_TX == 0 and F_TY == 0:
        raise FieldError("zero force vector has no direction")
    if F_TX > 0:
        phi = math.atan(F_TY / F_TX)
    elif F_TX == 0:
        phi = math.pi - math.copysign(math.pi / 2, F_TY)
    else:
        phi = math.pi + math.atan(F_TY / F_TX)
    # wrap to (-pi, pi]
    phi = math.remainder(phi, 2 * math.pi)
    if phi == -math.pi:
        phi = math.pi
    return phi


def _rollout(start, p: FieldParams, n: int, h: float):
    X, Y, vx, vy = (float(v) for v in start)
    out = np.empty((n, 3))
    for k in range(n):
        fx, fy = total_force(X, Y, p)
        phi = heading(float(fx), float(fy))
        c, s = math.cos(phi), math.sin(phi)
        X += (vx * c - vy * s) * h
        Y += (vx * s + vy * c) * h
        out[k] = X, phi, Y
    return out


def rollout_reference(start, p: FieldParams, horizon_steps: int, h: float = 0.01) -> np.ndarray:
    """Forward-integrate the field heading from ``start = (X0, Y0, vx, vy)``.

    Returns an array of shape (horizon_steps, 2) with columns (phi_ref, Y_ref)
    for steps 1..horizon_steps. ``vx`` and ``vy`` are held at their start values.
    """
    return _rollout(start, p, horizon_steps, h)[:, 1:]


def reference_path(start, p: FieldParams, length_m: float, h: float = 0.01) -> np.ndarray:
    """Global reference as rows (X, phi, Y), starting at the start point."""
    n = int(math.ceil(length_m / max(float(start[2]) * h, 1e-6))) + 2
    body = _rollout(start, p, n, h)
    first = [float(start[0]), body[0, 1], float(start[1])]
    return np.vstack([first, body])
