"""Shared vocabulary: wheel indexing, vehicle constants and per-wheel value types.

Angles are radians everywhere inside the package. Per-wheel quantities are
stored as length-4 numpy arrays in ``WHEELS`` order (FL, FR, RL, RR).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import IntEnum

import numpy as np


class WheelId(IntEnum):
    FL = 0
    FR = 1
    RL = 2
    RR = 3


WHEELS = tuple(WheelId)
WHEEL_NAMES = tuple(w.name for w in WHEELS)

G = 9.81
MAX_STEER = math.radians(21.0)


@dataclass(frozen=True)
class VehicleParams:
    m: float = 1685.2  # kg
    I_z: float = 2315.3  # kg m^2
    I_w: float = 1.5  # kg m^2
    t_w: float = 1.795  # m
    l_f: float = 1.110  # m, CG to front axle
    l_r: float = 1.756  # m, CG to rear axle
    C_f: float = 46235.0  # N/rad per front wheel
    C_r: float = 31442.0  # N/rad per rear wheel
    R_r: float = 0.325  # m, unloaded radius
    R_e: float = 0.334  # m, effective rolling radius
    dt: float = 0.01  # s, controller sample time
    g: float = G

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"VehicleParams.{name} must be finite and > 0, got {value}")

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r

    def wheel_x(self) -> np.ndarray:
        """Longitudinal offset of each wheel from the CG."""
        return np.array([self.l_f, self.l_f, -self.l_r, -self.l_r])

    def wheel_y(self) -> np.ndarray:
        """Lateral offset of each wheel from the CG.

        The sign follows the yaw-moment balance used by the controllers, where
        a forward force on FL/RL produces a positive yaw moment of
        ``0.5 * t_w * Fx``. That places FL/RL at ``-t_w/2``.
        """
        h = 0.5 * self.t_w
        return np.array([-h, h, -h, h])

    def cornering_stiffness(self) -> np.ndarray:
        return np.array([self.C_f, self.C_f, self.C_r, self.C_r])

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "VehicleParams":
        return cls(**json.loads(text))


def default_params() -> VehicleParams:
    return VehicleParams()


def _as_wheel_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.shape != (4,):
        raise ValueError(f"{name} needs 4 entries (FL, FR, RL, RR), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries: {arr}")
    return arr


@dataclass(frozen=True)
class TireForceSet:
    fx: np.ndarray
    fy: np.ndarray
    fz: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        object.__setattr__(self, "fx", _as_wheel_array(self.fx, "fx"))
        object.__setattr__(self, "fy", _as_wheel_array(self.fy, "fy"))
        object.__setattr__(self, "fz", _as_wheel_array(self.fz, "fz"))
        if np.any(self.fz < 0):
            raise ValueError(f"negative vertical load: {self.fz}")

    def as_row(self) -> list[float]:
        """fx, fy, fz flattened in wheel order (12 values)."""
        return [*self.fx, *self.fy, *self.fz]

    @classmethod
    def from_row(cls, row) -> "TireForceSet":
        row = [float(v) for v in row]
        return cls(row[0:4], row[4:8], row[8:12])

    @classmethod
    def zeros(cls) -> "TireForceSet":
        return cls(np.zeros(4), np.zeros(4), np.zeros(4))


@dataclass(frozen=True)
class ControlCommand:
    delta: np.ndarray
    torque: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "delta", _as_wheel_array(self.delta, "delta"))
        object.__setattr__(self, "torque", _as_wheel_array(self.torque, "torque"))
        if np.any(np.abs(self.delta) > MAX_STEER + 1e-12):
            raise ValueError(f"steering beyond +-21 deg: {np.degrees(self.delta)}")

    @classmethod
    def zero(cls) -> "ControlCommand":
        return cls(np.zeros(4), np.zeros(4))

    def as_row(self) -> list[float]:
        return [*self.delta, *self.torque]


@dataclass(frozen=True)
class ImuSample:
    roll_rate: float
    pitch_rate: float
    yaw_rate: float
    roll_angle: float
    yaw_angle: float

    def as_array(self) -> np.ndarray:
        return np.array([self.roll_rate, self.pitch_rate, self.yaw_rate, self.roll_angle, self.yaw_angle])


IMU_CHANNELS = ("roll_rate", "pitch_rate", "yaw_rate", "roll_angle", "yaw_angle")
FORCE_CHANNELS = tuple(f"Fx_{w}" for w in WHEEL_NAMES) + tuple(f"Fy_{w}" for w in WHEEL_NAMES)
