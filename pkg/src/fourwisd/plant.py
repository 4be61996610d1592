"""Ground-truth vehicle simulator.

Planar rigid body (vx, vy, yaw rate, pose) on four independently steered and
driven wheels, magic-formula tires combined through a friction ellipse,
wheel spin dynamics, and a second-order roll/pitch model. The roll and pitch
states also carry the load transfer, so vertical loads never depend on the
accelerations being computed (no algebraic loop, and RK4 keeps its order).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import G, ControlCommand, ImuSample, TireForceSet, VehicleParams, default_params

log = logging.getLogger(__name__)

STATE_NAMES = (
    "vx", "vy", "yaw_rate", "yaw", "X", "Y",
    "omega_FL", "omega_FR", "omega_RL", "omega_RR",
    "roll", "roll_rate", "pitch", "pitch_rate",
)
N_STATE = len(STATE_NAMES)
MIN_SPEED = 0.1


class PlantDivergence(RuntimeError):
    def __init__(self, step_index: int, reason: str):
        super().__init__(f"plant diverged at step {step_index}: {reason}")
        self.step_index = step_index
        self.reason = reason


@dataclass(frozen=True)
class PlantState:
    vx: float
    vy: float = 0.0
    yaw_rate: float = 0.0
    yaw: float = 0.0
    X: float = 0.0
    Y: float = 0.0
    omega: np.ndarray = field(default_factory=lambda: np.zeros(4))
    roll: float = 0.0
    roll_rate: float = 0.0
    pitch: float = 0.0
    pitch_rate: float = 0.0

    @property
    def sideslip(self) -> float:
        return math.atan2(self.vy, self.vx)

    def to_vector(self) -> np.ndarray:
        return np.array([
            self.vx, self.vy, self.yaw_rate, self.yaw, self.X, self.Y,
            *np.asarray(self.omega, dtype=float),
            self.roll, self.roll_rate, self.pitch, self.pitch_rate,
        ])

    @classmethod
    def from_vector(cls, v) -> "PlantState":
        v = np.asarray(v, dtype=float)
        return cls(
            vx=float(v[0]), vy=float(v[1]), yaw_rate=float(v[2]), yaw=float(v[3]),
            X=float(v[4]), Y=float(v[5]), omega=v[6:10].copy(),
            roll=float(v[10]), roll_rate=float(v[11]), pitch=float(v[12]), pitch_rate=float(v[13]),
        )

    @classmethod
    def cruising(cls, vx: float, p: VehicleParams | None = None, **kw) -> "PlantState":
        """Straight-line start with free-rolling wheels."""
        p = p or default_params()
        return cls(vx=vx, omega=np.full(4, vx / p.R_e), **kw)


@dataclass(frozen=True)
class RoadProfile:
    """Friction along global X.

    ``segments`` holds ``(x_start, x_end, mu)`` triples. Friction blends into
    and out of each segment over ``transition`` metres (quintic smoothstep).
    """

    segments: tuple = ()
    default_mu: float = 0.85
    transition: float = 1.0

    def __post_init__(self):
        segs = tuple(tuple(float(v) for v in s) for s in self.segments)
        object.__setattr__(self, "segments", tuple(sorted(segs)))
        for a, b, mu in self.segments:
            if not a < b:
                raise ValueError(f"segment start {a} must precede end {b}")
            if not 0 < mu <= 1.2:
                raise ValueError(f"friction {mu} outside (0, 1.2]")
        if not 0 < self.default_mu <= 1.2:
            raise ValueError(f"default friction {self.default_mu} outside (0, 1.2]")
        for (_, b0, _), (a1, _, _) in zip(self.segments, self.segments[1:]):
            if a1 < b0:
                raise ValueError("road segments overlap")

    @classmethod
    def uniform(cls, mu: float = 0.85) -> "RoadProfile":
        return cls((), mu)

    def mu_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        mu = np.full(x.shape, self.default_mu)
        w = self.transition
        for a, b, seg_mu in self.segments:
            if w > 0:
                up = _smoothstep((x - a) / w + 0.5)
                down = 1.0 - _smoothstep((x - b) / w + 0.5)
                blend = np.minimum(up, down)
            else:
                blend = ((x >= a) & (x < b)).astype(float)
            mu = mu + blend * (seg_mu - self.default_mu)
        return mu

    def to_dict(self) -> dict:
        return {"segments": [list(s) for s in self.segments], "default_mu": self.default_mu,
                "transition": self.transition}

    @classmethod
    def from_dict(cls, d: dict) -> "RoadProfile":
        return cls(tuple(tuple(s) for s in d.get("segments", ())), d.get("default_mu", 0.85),
                   d.get("transition", 1.0))


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (s * (6.0 * s - 15.0) + 10.0)


def static_loads(p: VehicleParams) -> np.ndarray:
    front = p.m * p.g * p.l_r / (2.0 * p.wheelbase)
    rear = p.m * p.g * p.l_f / (2.0 * p.wheelbase)
    return np.array([front, front, rear, rear])


@dataclass(frozen=True)
class MagicTireParams:
    B_lat: tuple = (10.0, 10.0)  # front, rear
    C_lat: float = 1.9
    E_lat: float = 0.97
    B_long: float = 12.0
    C_long: float = 1.65
    E_long: float = 0.95
    f_r: float = 0.015

    @classmethod
    def for_vehicle(cls, p: VehicleParams, mu_ref: float = 0.85, **kw) -> "MagicTireParams":
        """Choose per-axle lateral B so that B*C*D at the static load equals C_f / C_r."""
        base = cls(**kw)
        fz = static_loads(p)
        b_front = p.C_f / (base.C_lat * mu_ref * fz[0])
        b_rear = p.C_r / (base.C_lat * mu_ref * fz[2])
        return replace(base, B_lat=(b_front, b_rear))

    def lateral_slope(self, mu: float, fz: np.ndarray) -> np.ndarray:
        b = np.array([self.B_lat[0], self.B_lat[0], self.B_lat[1], self.B_lat[1]])
        return b * self.C_lat * mu * fz


@dataclass(frozen=True)
class PlantConfig:
    h_cg: float = 0.53
    roll_freq_hz: float = 2.0
    roll_damping: float = 0.7
    roll_gain: float = math.radians(3.0) / (0.5 * G)  # rad per m/s^2
    pitch_gain: float = math.radians(1.5) / (0.5 * G)
    tire: MagicTireParams | None = None

    def tire_params(self, p: VehicleParams) -> MagicTireParams:
        return self.tire if self.tire is not None else MagicTireParams.for_vehicle(p)


def magic_formula(slip, B, C, E):
    bs = B * slip
    return np.sin(C * np.arctan(bs - E * (bs - np.arctan(bs))))


def vertical_loads(state: PlantState | None, ax: float, ay: float, p: VehicleParams | None = None,
                   h_cg: float = 0.53) -> np.ndarray:
    """Static split plus longitudinal and lateral load transfer.

    The lateral transfer of each axle is shared in proportion to its static
    load. A wheel that would go negative is clamped at zero and its deficit is
    taken from its axle partner, so the total always equals ``m*g``.
    """
    p = p or default_params()
    L = p.wheelbase
    front_axle = p.m * p.g * p.l_r / L - p.m * ax * h_cg / L
    rear_axle = p.m * p.g * p.l_f / L + p.m * ax * h_cg / L
    lat = p.m * ay * h_cg / p.t_w
    loads = []
    for axle, share in ((front_axle, p.l_r / L), (rear_axle, p.l_f / L)):
        d = lat * share
        # wheels at -t_w/2 (FL, RL) gain load for positive ay
        left, right = 0.5 * axle + d, 0.5 * axle - d
        if left < 0 or right < 0:
            log.warning("load transfer exceeds static load (ax=%.2f, ay=%.2f); clamping", ax, ay)
            axle = max(axle, 0.0)
            left, right = (axle, 0.0) if left > right else (0.0, axle)
        loads.extend((left, right))
    fz = np.array([loads[0], loads[1], loads[2], loads[3]])
    if fz.sum() <= 0:
        return static_loads(p)
    return fz * (p.m * p.g / fz.sum())


def _wheel_slips(vx, vy, r, delta, omega, p: VehicleParams):
    xw = p.wheel_x()
    yw = p.wheel_y()
    vwx = vx - r * yw
    vwy = vy + r * xw
    c, s = np.cos(delta), np.sin(delta)
    v_long = vwx * c + vwy * s
    v_lat = -vwx * s + vwy * c
    alpha = -np.arctan2(v_lat, np.abs(v_long))
    kappa = (omega * p.R_e - v_long) / np.maximum(np.abs(v_long), MIN_SPEED)
    return kappa, alpha


def _forces(kappa, alpha, mu, fz, tire: MagicTireParams):
    b_lat = np.array([tire.B_lat[0], tire.B_lat[0], tire.B_lat[1], tire.B_lat[1]])
    peak = mu * fz
    fx = peak * magic_formula(kappa, tire.B_long, tire.C_long, tire.E_long)
    fy = peak * magic_formula(alpha, b_lat, tire.C_lat, tire.E_lat)
    mag = np.hypot(fx, fy)
    # the 1e-14 shave keeps the rescaled pair inside the ellipse after rounding
    scale = np.where(mag > peak, (1.0 - 1e-14) * peak / np.maximum(mag, 1e-300), 1.0)
    return fx * scale, fy * scale


def tire_forces(state: PlantState, cmd: ControlCommand, mu_at_each_wheel, fz,
                p: VehicleParams | None = None, tire: MagicTireParams | None = None) -> TireForceSet:
    """Nonlinear per-wheel forces in each wheel's own frame."""
    p = p or default_params()
    tire = tire or MagicTireParams.for_vehicle(p)
    if not state.vx > MIN_SPEED:
        raise ValueError(f"slip undefined for vx={state.vx} (need > {MIN_SPEED})")
    fz = np.asarray(fz, dtype=float)
    mu = np.broadcast_to(np.asarray(mu_at_each_wheel, dtype=float), (4,))
    kappa, alpha = _wheel_slips(state.vx, state.vy, state.yaw_rate, cmd.delta, np.asarray(state.omega), p)
    fx, fy = _forces(kappa, alpha, mu, fz, tire)
    return TireForceSet(fx, fy, fz)


class _Dynamics:
    """Right-hand side of the plant ODE with all constants bound once."""

    def __init__(self, p: VehicleParams, cfg: PlantConfig):
        self.p = p
        self.cfg = cfg
        self.tire = cfg.tire_params(p)
        self.xw = p.wheel_x()
        self.yw = p.wheel_y()
        self.wn = 2 * math.pi * cfg.roll_freq_hz

    def loads(self, x) -> np.ndarray:
        ay_eff = x[10] / self.cfg.roll_gain
        ax_eff = -x[12] / self.cfg.pitch_gain
        return vertical_loads(None, ax_eff, ay_eff, self.p, self.cfg.h_cg)

    def __call__(self, x, delta, torque, road: RoadProfile):
        p = self.p
        vx, vy, r, yaw = x[0], x[1], x[2], x[3]
        omega = x[6:10]
        fz = self.loads(x)
        cy, sy = math.cos(yaw), math.sin(yaw)
        mu = road.mu_at(x[4] + self.xw * cy - self.yw * sy)
        kappa, alpha = _wheel_slips(vx, vy, r, delta, omega, p)
        fx, fy = _forces(kappa, alpha, mu, fz, self.tire)
        c, s = np.cos(delta), np.sin(delta)
        fxb = fx * c - fy * s
        fyb = fx * s + fy * c
        ax = fxb.sum() / p.m
        ay = fyb.sum() / p.m
        mz = float(np.dot(self.xw, fyb) - np.dot(self.yw, fxb))
        wn, zeta = self.wn, self.cfg.roll_damping
        dx = np.empty(N_STATE)
        dx[0] = ax + vy * r
        dx[1] = ay - vx * r
        dx[2] = mz / p.I_z
        dx[3] = r
        dx[4] = vx * cy - vy * sy
        dx[5] = vx * sy + vy * cy
        dx[6:10] = (torque - p.R_e * (fx + self.tire.f_r * fz)) / p.I_w
        dx[10] = x[11]
        dx[11] = wn * wn * (self.cfg.roll_gain * ay - x[10]) - 2 * zeta * wn * x[11]
        dx[12] = x[13]
        dx[13] = wn * wn * (-self.cfg.pitch_gain * ax - x[12]) - 2 * zeta * wn * x[13]
        return dx, (fx, fy, fz, ax, ay, mu)


def _rk4(f, x, h, *args):
    k1, aux = f(x, *args)
    k2, _ = f(x + 0.5 * h * k1, *args)
    k3, _ = f(x + 0.5 * h * k2, *args)
    k4, _ = f(x + h * k3, *args)
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4), aux


class Plant:
    """Stateful simulator. ``step`` advances one RK4 step of size ``h``.

    RK4 is stable for the wheel-spin modes up to roughly h = 2 ms at highway
    speed; ``advance`` splits longer intervals into 1 ms sub-steps.
    """

    def __init__(self, state: PlantState, road: RoadProfile | None = None,
                 p: VehicleParams | None = None, cfg: PlantConfig | None = None):
        self.p = p or default_params()
        self.cfg = cfg or PlantConfig()
        self.road = road or RoadProfile.uniform()
        self.dyn = _Dynamics(self.p, self.cfg)
        self.x = state.to_vector()
        self.steps = 0
        self.t = 0.0
        self._aux = None
        self.last_cmd = ControlCommand.zero()
        self.observe(self.last_cmd)

    @property
    def state(self) -> PlantState:
        return PlantState.from_vector(self.x)

    @property
    def tire(self) -> MagicTireParams:
        return self.dyn.tire

    def observe(self, cmd: ControlCommand):
        """Evaluate forces and accelerations at the current state under ``cmd``."""
        _, self._aux = self.dyn(self.x, cmd.delta, cmd.torque, self.road)
        return self._aux

    @property
    def forces(self) -> TireForceSet:
        fx, fy, fz = self._aux[:3]
        return TireForceSet(fx, fy, fz)

    @property
    def specific_force(self) -> tuple[float, float]:
        return float(self._aux[3]), float(self._aux[4])

    @property
    def mu_wheels(self) -> np.ndarray:
        return self._aux[5]

    def step(self, cmd: ControlCommand, h: float = 1e-3) -> PlantState:
        self.last_cmd = cmd
        x_new, _ = _rk4(self.dyn, self.x, h, cmd.delta, cmd.torque, self.road)
        self.steps += 1
        self._guard(x_new)
        self.x = x_new
        self.t += h
        self.observe(cmd)
        fx, fy, fz = self._aux[:3]
        peak = self._aux[5] * fz
        assert np.all(fx * fx + fy * fy <= peak * peak * (1 + 1e-12) + 1e-9), "friction ellipse violated"
        return self.state

    def advance(self, cmd: ControlCommand, duration: float, h: float = 1e-3, on_substep=None):
        n = max(1, int(round(duration / h)))
        for _ in range(n):
            self.step(cmd, h)
            if on_substep is not None:
                on_substep(self)
        return self.state

    def _guard(self, x):
        if not np.all(np.isfinite(x)):
            raise PlantDivergence(self.steps, "non-finite state")
        if abs(x[1]) > x[0]:
            raise PlantDivergence(self.steps, f"|vy|={abs(x[1]):.2f} exceeds vx={x[0]:.2f}")


def step(state: PlantState, cmd: ControlCommand, road: RoadProfile, h: float,
         p: VehicleParams | None = None, cfg: PlantConfig | None = None) -> PlantState:
    """Pure single RK4 step; see :class:`Plant` for the stateful form."""
    plant = Plant(state, road, p, cfg)
    return plant.step(cmd, h)


def kinetic_energy(state: PlantState, p: VehicleParams | None = None) -> float:
    p = p or default_params()
    omega = np.asarray(state.omega)
    return 0.5 * p.m * (state.vx ** 2 + state.vy ** 2) + 0.5 * p.I_z * state.yaw_rate ** 2 \
        + 0.5 * p.I_w * float(np.dot(omega, omega))


# Sensor noise -------------------------------------------------------------

IMU_NOISE_DEG = {
    # roll rate (deg/s)^2, pitch rate (deg/s)^2, yaw rate (deg/s)^2, roll (deg)^2, yaw (deg)^2
    "case1": (0.5, 0.031, 0.25, 0.125, 0.125),
    "case2": (1.0, 0.062, 0.5, 0.25, 0.25),
}

EKF_NOISE_NATIVE = {
    # vx (m/s)^2, vy (m/s)^2, ax g^2, ay g^2, yaw rate (rad/s)^2, wheel speeds rpm^2
    "case1": (0.02, 0.2, 0.02, 0.02, 0.02, 6.0, 6.0, 6.0, 6.0),
    "case2": (0.04, 0.4, 0.04, 0.04, 0.04, 12.0, 12.0, 12.0, 12.0),
}

_RPM = 2 * math.pi / 60.0


@dataclass(frozen=True)
class NoiseSpec:
    name: str
    imu_variance: np.ndarray  # SI (rad, rad/s)
    ekf_variance: np.ndarray  # SI (m/s, m/s^2, rad/s)

    @classmethod
    def case(cls, name: str | None) -> "NoiseSpec | None":
        if name in (None, "none"):
            return None
        if name not in IMU_NOISE_DEG:
            raise ValueError(f"unknown noise case {name!r}")
        imu = np.array(IMU_NOISE_DEG[name]) * (math.pi / 180.0) ** 2
        native = np.array(EKF_NOISE_NATIVE[name], dtype=float)
        scale = np.array([1.0, 1.0, G * G, G * G, 1.0] + [_RPM * _RPM] * 4)
        return cls(name, imu, native * scale)


def sample_imu(state: PlantState, noise: NoiseSpec | None = None, rng: np.random.Generator | None = None) -> ImuSample:
    values = np.array([state.roll_rate, state.pitch_rate, state.yaw_rate, state.roll, state.yaw])
    if noise is not None:
        values = values + rng.standard_normal(5) * np.sqrt(noise.imu_variance)
    return ImuSample(*map(float, values))


def sample_ekf_measurement(state: PlantState, ax: float, ay: float, noise: NoiseSpec | None = None,
                           rng: np.random.Generator | None = None) -> np.ndarray:
    """[vx, vy, ax, ay, yaw rate, omega FL..RR] with ax, ay as specific force."""
    y = np.array([state.vx, state.vy, ax, ay, state.yaw_rate, *np.asarray(state.omega)])
    if noise is not None:
        y = y + rng.standard_normal(9) * np.sqrt(noise.ekf_variance)
    return y
