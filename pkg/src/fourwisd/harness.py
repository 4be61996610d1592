"""Closed-loop executive, experiment suite and file emitters.

Every 10 ms the loop samples the sensors, runs the selected tire-force
estimator, integrates the sideslip estimate, refreshes the field-based
reference, solves the MPC, computes the sliding-mode yaw moment, allocates
wheel torques (plus a cruise hold) and advances the plant by ten 1 ms steps.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import svg
from .apf import FieldParams, reference_path, rollout_reference
from .domain import ControlCommand, VehicleParams, default_params
from .dyc import SmcConfig, YawRefState, allocate_torques, cruise_torque, desired_yaw_rate, yaw_moment
from .ekf import EkfEstimator
from .lstm import DataScenario, LstmEstimator, LstmModel, TrainConfig, generate_dataset, train
from .ltv_model import SideslipEstimate, advance_sideslip
from .metrics import (
    CHANNELS,
    RunMetrics,
    channel_rmse,
    path_departure,
    phase_plane,
    relative_error,
    write_metrics_json,
    write_phase_plane,
)
from .mpc import MpcConfig, MpcController
from .plant import (
    NoiseSpec,
    Plant,
    PlantDivergence,
    PlantState,
    RoadProfile,
    sample_ekf_measurement,
    sample_imu,
    vertical_loads,
)

log = logging.getLogger(__name__)

ESTIMATORS = ("truth", "ekf", "lstm")
NOISE_CASES = ("none", "case1", "case2")
PRESETS = ("desk", "paper")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- scenario


def _from_dict(cls, d: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    return cls(**kw)


@dataclass(frozen=True)
class Scenario:
    vx: float = 22.22
    length: float = 222.0
    road: RoadProfile = field(default_factory=lambda: RoadProfile(((45.0, 75.0, 0.2),), 0.85))
    field_params: FieldParams = field(default_factory=FieldParams)
    estimator: str = "ekf"
    noise: str = "none"
    seed: int = 0
    model: str | None = None
    mpc: MpcConfig = field(default_factory=lambda: MpcConfig(R=1.0))
    smc: SmcConfig = field(default_factory=lambda: SmcConfig(k1=6000.0, k2=30000.0, phi_b=0.2))
    preset: str = "desk"
    cruise_gain: float = 1.0
    preroll: float = 0.3
    oracle_mu: bool = True
    ekf_rolling_coeff: float | None = 0.015
    torque_limit: float = math.inf
    mpc_fx: str = "blend"
    friction_clip: bool = True

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}")
        if self.noise not in NOISE_CASES:
            raise ConfigError(f"noise must be one of {NOISE_CASES}")
        if self.preset not in PRESETS:
            raise ConfigError(f"preset must be one of {PRESETS}")
        if not self.vx > 1.0 or not self.length > 0:
            raise ConfigError("speed and length must be positive")
        if self.estimator == "lstm":
            if self.model is None or not Path(self.model).is_file():
                raise ConfigError(f"LSTM checkpoint not found: {self.model}")
        if self.mpc_fx not in ("estimate", "blend"):
            raise ConfigError("mpc_fx must be 'estimate' or 'blend'")
        if not self.torque_limit > 0:
            raise ConfigError("torque limit must be positive")
        if self.preroll < 0:
            raise ConfigError("preroll must be non-negative")

    @classmethod
    def standard(cls, **kw) -> "Scenario":
        return cls(**kw)

    @property
    def duration(self) -> float:
        return self.length / self.vx

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["road"] = self.road.to_dict()
        d["field_params"] = self.field_params.to_dict()
        d["mpc"] = asdict(self.mpc)
        d["smc"] = asdict(self.smc)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        d = dict(d)
        try:
            if "road" in d:
                d["road"] = RoadProfile.from_dict(d["road"])
            if "field_params" in d:
                d["field_params"] = _from_dict(FieldParams, d["field_params"])
            if "mpc" in d:
                d["mpc"] = _from_dict(MpcConfig, d["mpc"])
            if "smc" in d:
                d["smc"] = _from_dict(SmcConfig, d["smc"])
            return _from_dict(cls, d)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read scenario {path}: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- records


@dataclass
class LoopRecord:
    t: float
    X: float
    Y: float
    yaw: float
    vx: float
    vy: float
    yaw_rate: float
    beta: float
    beta_hat: float
    vy_hat: float
    Y_ref: float
    phi_ref: float
    mu: float
    delta: np.ndarray
    torque: np.ndarray
    Mz: float
    s: float
    gamma_des: float
    fx_true: np.ndarray
    fy_true: np.ndarray
    fx_est: np.ndarray
    fy_est: np.ndarray
    mpc_cost: float
    qp_iters: int
    active_set: int
    slack: float
    du: np.ndarray


_WHEEL_FIELDS = ("delta", "torque", "fx_true", "fy_true", "fx_est", "fy_est", "du")
_WHEELS = ("FL", "FR", "RL", "RR")


def record_columns() -> list[str]:
    cols = []
    for f in fields(LoopRecord):
        if f.name in _WHEEL_FIELDS:
            cols += [f"{f.name}_{w}" for w in _WHEELS]
        else:
            cols.append(f.name)
    return cols


def _fmt(v) -> str:
    return repr(float(v)) if not isinstance(v, (int, np.integer)) else str(int(v))


def write_trajectory(path, records: list[LoopRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(record_columns())
        for r in records:
            row = []
            for f in fields(LoopRecord):
                v = getattr(r, f.name)
                row += [_fmt(x) for x in v] if f.name in _WHEEL_FIELDS else [_fmt(v)]
            w.writerow(row)


def read_trajectory(path) -> list[LoopRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != record_columns():
        raise ValueError(f"{path} is not a trajectory CSV")
    out = []
    for row in rows[1:]:
        k = 0
        kw = {}
        for f in fields(LoopRecord):
            if f.name in _WHEEL_FIELDS:
                kw[f.name] = np.array([float(v) for v in row[k:k + 4]])
                k += 4
            else:
                kw[f.name] = int(row[k]) if f.type == "int" else float(row[k])
                k += 1
        out.append(LoopRecord(**kw))
    return out


def write_mpc_diagnostics(path, records: list[LoopRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "cost", "qp_iters", "active_set_size", "u1", "u2", "u3", "u4", "du1", "du2", "du3", "du4"])
        for r in records:
            w.writerow([_fmt(r.t), _fmt(r.mpc_cost), r.qp_iters, r.active_set,
                        *[_fmt(v) for v in r.delta], *[_fmt(v) for v in r.du]])


def read_mpc_diagnostics(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array(rows, dtype=float).reshape(-1, 12)


# ---------------------------------------------------------------- estimators


class _Truth:
    def __call__(self, plant: Plant, ctx) -> tuple[np.ndarray, np.ndarray]:
        f = plant.forces
        return f.fx.copy(), f.fy.copy()


class _Ekf:
    def __init__(self, p: VehicleParams, dt: float, rolling_coeff: float | None):
        self.est = EkfEstimator(p, dt, rolling_coeff=rolling_coeff)

    def __call__(self, plant: Plant, ctx) -> tuple[np.ndarray, np.ndarray]:
        u = np.concatenate([ctx["cmd"].delta, ctx["cmd"].torque])
        s = self.est.step(ctx["y_ekf"], u, ctx["fz"])
        return s.fx.copy(), s.fy.copy()


class _Lstm:
    def __init__(self, model: LstmModel):
        self.est = LstmEstimator(model)
        self._last = (np.zeros(4), np.zeros(4))

    def push(self, sample) -> None:
        self.est.push(sample)

    def __call__(self, plant: Plant, ctx) -> tuple[np.ndarray, np.ndarray]:
        f = self.est.estimate()
        if f is not None:
            self._last = (f.fx.copy(), f.fy.copy())
        return self._last


# ---------------------------------------------------------------- closed loop


@dataclass
class RunResult:
    records: list[LoopRecord]
    metrics: RunMetrics
    phase: np.ndarray
    imu_noise: np.ndarray
    ekf_noise: np.ndarray
    ctrl_ms: np.ndarray
    failure: str = ""

    def __iter__(self):
        return iter((self.records, self.metrics))


def _global_reference(s: Scenario, X0: float) -> np.ndarray:
    ref = reference_path((X0, 0.0, s.vx, 0.0), s.field_params, s.length + 20.0, s.mpc.dt)
    return ref


def _mpc_fx(fx_hat, torque, mode: str, p: VehicleParams) -> np.ndarray:
    """Longitudinal forces handed to the MPC.

    ``blend`` keeps the estimator's mean force but takes the left/right split from
    the torques commanded last step, which the controller knows exactly.
    """
    fx_hat = np.asarray(fx_hat, dtype=float)
    if mode == "estimate":
        return fx_hat
    tq = np.asarray(torque, dtype=float) / p.R_e
    return fx_hat.mean() + (tq - tq.mean())


def run_closed_loop(s: Scenario, model: LstmModel | None = None, p: VehicleParams | None = None,
                    tap=None) -> RunResult:
    """Run one scenario. ``tap(plant, imu)`` is called after every 1 ms plant step past the pre-roll."""
    p = p or default_params()
    dt, h = s.mpc.dt, 1e-3
    n_sub = int(round(dt / h))
    root = np.random.default_rng(s.seed)
    imu_rng, ekf_rng = (np.random.default_rng(c) for c in root.bit_generator.seed_seq.spawn(2))
    noise = NoiseSpec.case(s.noise)

    X0 = -s.vx * s.preroll
    plant = Plant(PlantState.cruising(s.vx, p, X=X0), s.road, p)
    if s.estimator == "lstm" and model is None:
        model = LstmModel.load(s.model)
    est = {"truth": _Truth, "ekf": lambda: _Ekf(p, dt, s.ekf_rolling_coeff), "lstm": lambda: _Lstm(model)}[s.estimator]()
    ref_path = _global_reference(s, 0.0)

    imu_noise, ekf_noise, betas, beta_t = [], [], [], []

    def on_substep(pl: Plant):
        st = pl.state
        clean = np.array([st.roll_rate, st.pitch_rate, st.yaw_rate, st.roll, st.yaw])
        meas = sample_imu(st, noise, imu_rng).as_array()
        imu_noise.append(meas - clean)
        ctx["imu"] = meas
        if isinstance(est, _Lstm):
            est.push(meas)
        if tap is not None and ctx.get("live"):
            tap(pl, meas)
        betas.append(st.sideslip)
        beta_t.append(pl.t - s.preroll)

    ctx: dict = {"cmd": ControlCommand.zero()}

    def sense():
        st = plant.state
        ax, ay = plant.specific_force
        y = sample_ekf_measurement(st, ax, ay, noise, ekf_rng)
        ekf_noise.append(y - sample_ekf_measurement(st, ax, ay))
        ctx["y_ekf"] = y
        ctx["fz"] = vertical_loads(None, ax, ay, p)
        return est(plant, ctx)

    # pre-roll: straight cruise so the estimators see a full window before t = 0
    n_pre = int(round(s.preroll / dt))
    try:
        for _ in range(n_pre):
            sense()
            cmd = ControlCommand(np.zeros(4), cruise_torque(plant.state.vx, s.vx, p, s.cruise_gain))
            ctx["cmd"] = cmd
            plant.advance(cmd, dt, h, on_substep)
    except PlantDivergence as exc:
        raise RuntimeError(f"plant diverged during pre-roll: {exc}") from exc
    imu_noise.clear()
    ekf_noise.clear()
    betas.clear()
    beta_t.clear()
    plant.t = 0.0
    ctx["live"] = True

    mpc = MpcController(s.mpc, p)
    side = SideslipEstimate(0.0, 0.0)
    yaw_ref = YawRefState()
    records: list[LoopRecord] = []
    ctrl_ms = []
    failure = ""
    n_steps = int(math.floor(s.duration / dt + 1e-9))
    for k in range(n_steps):
        t = k * dt
        st = plant.state
        try:
            fx_raw, fy_raw = sense()
            tic = time.perf_counter()
            mu_here = float(s.road.mu_at(st.X))
            smc = replace(s.smc, mu_hat=mu_here) if s.oracle_mu else s.smc
            fx_hat, fy_hat = fx_raw, fy_raw
            if s.friction_clip:
                # no tire can exceed mu * Fz; keeps a bad estimate from driving the controller
                cap = smc.mu_hat * np.asarray(ctx["fz"], dtype=float)
                fx_hat, fy_hat = np.clip(fx_raw, -cap, cap), np.clip(fy_raw, -cap, cap)
            imu = ctx.get("imu", np.array([st.roll_rate, st.pitch_rate, st.yaw_rate, st.roll, st.yaw]))
            gamma_m, yaw_m = float(imu[2]), float(imu[4])
            if k > 0:
                side = advance_sideslip(side, fx_hat, fy_hat, mpc.u, st.vx, p, dt, gamma_m)
            refs = rollout_reference((st.X, st.Y, st.vx, side.vy_hat), s.field_params, s.mpc.N_p, dt)
            x = np.array([st.vx, side.vy_hat, gamma_m, yaw_m, st.Y])
            u, diag = mpc.step(x, _mpc_fx(fx_hat, ctx["cmd"].torque, s.mpc_fx, p), side.vy_hat, refs)
            delta_F = 0.5 * (u[0] + u[1])
            yaw_ref = desired_yaw_rate(yaw_ref, delta_F, st.vx, smc, dt, p)
            Mz, sval = yaw_moment(gamma_m, yaw_ref.gamma_des, side.beta_hat, fy_hat, u, smc, p)
            torque = allocate_torques(Mz, u, ctx["fz"], p) + cruise_torque(st.vx, s.vx, p, s.cruise_gain)
            torque = np.clip(torque, -s.torque_limit, s.torque_limit)
            cmd = ControlCommand(u, torque)
            ctrl_ms.append(1e3 * (time.perf_counter() - tic))
            f_true = plant.forces
            records.append(LoopRecord(
                t, st.X, st.Y, st.yaw, st.vx, st.vy, st.yaw_rate, st.sideslip, side.beta_hat, side.vy_hat,
                float(np.interp(st.X, ref_path[:, 0], ref_path[:, 2])), float(refs[0, 0]), mu_here,
                u.copy(), torque, Mz, sval, yaw_ref.gamma_des, f_true.fx.copy(), f_true.fy.copy(),
                np.asarray(fx_raw, dtype=float).copy(), np.asarray(fy_raw, dtype=float).copy(),
                diag.cost, diag.qp_iters, diag.active_set_size, diag.slack, diag.du.copy()))
            ctx["cmd"] = cmd
            plant.advance(cmd, dt, h, on_substep)
        except PlantDivergence as exc:
            failure = str(exc)
            log.error("run stopped: %s", failure)
            break
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            failure = f"controller failure at t={t:.2f}: {exc}"
            log.error("run stopped: %s", failure)
            break

    metrics, phase = summarize(records, np.array(beta_t), np.array(betas), failure)
    return RunResult(records, metrics, phase, np.array(imu_noise).reshape(-1, 5),
                     np.array(ekf_noise).reshape(-1, 9), np.array(ctrl_ms), failure)


def summarize(records: list[LoopRecord], beta_t, betas, failure: str = "") -> tuple[RunMetrics, np.ndarray]:
    if not records:
        return RunMetrics([math.nan] * 8, math.nan, math.nan, [], None, True, failure or "no steps"), np.zeros((0, 3))
    truth = np.array([np.concatenate([r.fx_true, r.fy_true]) for r in records])
    est = np.array([np.concatenate([r.fx_est, r.fy_est]) for r in records])
    dep, rate = path_departure([r.Y for r in records], [r.Y_ref for r in records])
    phase = phase_plane(beta_t, betas) if len(betas) >= 2 else np.zeros((0, 3))
    # decimate the phase plane to the control rate for the JSON summary
    summary = [[float(v) for v in row] for row in phase[::10]]
    return RunMetrics(channel_rmse(truth, est), dep, rate, summary, None, bool(failure), failure), phase


def write_run(out_dir, s: Scenario, res: RunResult) -> Path:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    write_trajectory(d / "trajectory.csv", res.records)
    write_mpc_diagnostics(d / "mpc.csv", res.records)
    write_phase_plane(d / "phase.csv", res.phase)
    write_metrics_json(d / "metrics.json", res.metrics, run_meta(s))
    plot_run(d)
    return d


def run_meta(s: Scenario) -> dict:
    return {"scenario": s.to_dict(), "seed": s.seed, "estimator": s.estimator, "noise": s.noise}


def plot_run(d) -> list[Path]:
    """SVGs for a run directory holding trajectory.csv and phase.csv."""
    d = Path(d)
    recs = read_trajectory(d / "trajectory.csv")
    X = np.array([r.X for r in recs])
    out = [svg.write_chart(d / "trajectory.svg", [(X, [r.Y for r in recs], "vehicle"),
                                                  (X, [r.Y_ref for r in recs], "reference")],
                           title="Lateral position", xlabel="X [m]", ylabel="Y [m]")]
    if (d / "phase.csv").exists():
        from .metrics import read_phase_plane

        pp = read_phase_plane(d / "phase.csv")
        out.append(svg.write_chart(d / "phase.svg", [(pp[:, 1], pp[:, 2], "beta")],
                                   title="Sideslip phase plane", xlabel="beta [rad]", ylabel="beta rate [rad/s]"))
    t = [r.t for r in recs]
    out.append(svg.write_chart(d / "forces.svg",
                               [(t, [r.fy_true[0] for r in recs], "Fy FL true"),
                                (t, [r.fy_est[0] for r in recs], "Fy FL est"),
                                (t, [r.fx_true[0] for r in recs], "Fx FL true"),
                                (t, [r.fx_est[0] for r in recs], "Fx FL est")],
                               title="Tire forces, front left", xlabel="t [s]", ylabel="N"))
    return out


# ---------------------------------------------------------------- training helpers


def train_model(preset: str, seed: int = 0, hidden: int | None = None, data=None,
                cfg: TrainConfig | None = None) -> tuple[LstmModel, object, object]:
    """Generate (unless given) a dataset and train an estimator. Returns (model, history, dataset)."""
    rng = np.random.default_rng(seed)
    if data is None:
        scn = DataScenario.desk(seed) if preset == "desk" else DataScenario.paper(seed)
        data = generate_dataset(scn, rng)
    cfg = cfg or (TrainConfig.desk() if preset == "desk" else TrainConfig.paper())
    hidden = hidden or (8 if preset == "desk" else 128)
    model = data.attach_normalization(LstmModel.init(hidden, 1, rng))
    model, hist = train(model, data, cfg, rng)
    return model, hist, data


DESK_SCALE = 20


def desk_train_config(point: dict) -> TrainConfig:
    """Map a point of the tuning box to a desk-size training run (long dimensions divided by 20)."""
    return TrainConfig(
        max_epochs=max(1, round(point["max_epochs"] / DESK_SCALE)),
        validation_frequency=int(point["validation_frequency"]),
        gradient_threshold=float(point["gradient_threshold"]),
        initial_learning_rate=float(point["initial_learning_rate"]),
        lr_drop_period=max(1, round(point["lr_drop_period"] / DESK_SCALE)),
        lr_drop_factor=float(point["lr_drop_factor"]),
        mini_batch_size=int(point["mini_batch_size"]),
        sequence_length=max(8, round(point["sequence_length"] / DESK_SCALE)),
    )


def tuning_objective(data, preset: str, seed: int = 0, hidden: int | None = None):
    """Objective for the tuner: last validation RMSE of one training run."""
    def objective(point: dict) -> float:
        cfg = desk_train_config(point) if preset == "desk" else TrainConfig(**point)
        _, hist, _ = train_model(preset, seed, hidden, data, cfg)
        return hist.final_val_rmse
    return objective


# ---------------------------------------------------------------- suite


@dataclass(frozen=True)
class SuiteConfig:
    preset: str = "desk"
    seed: int = 0
    model: str | None = None
    estimators: tuple = ("ekf", "lstm")
    noise_cases: tuple = ("none", "case1", "case2")
    scenario: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "SuiteConfig":
        try:
            return _from_dict(cls, json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"cannot read suite config {path}: {exc}") from exc


def suite_workers() -> int:
    env = os.environ.get("FOURWISD_THREADS")
    n = os.cpu_count() or 1
    if env:
        try:
            n = max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"FOURWISD_THREADS must be an integer, got {env!r}") from exc
    return n


def _suite_job(args):
    scn_dict, out_dir = args
    s = Scenario.from_dict(scn_dict)
    try:
        res = run_closed_loop(s)
    except Exception as exc:  # noqa: BLE001 - a failed run is reported, the suite continues
        log.error("run %s/%s failed: %s", s.estimator, s.noise, exc)
        return s.estimator, s.noise, None, str(exc)
    write_run(out_dir, s, res)
    return s.estimator, s.noise, res.metrics.to_dict(), res.failure


def run_experiment_suite(cfg: SuiteConfig, out_dir, workers: int | None = None) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for est in cfg.estimators:
        for nc in cfg.noise_cases:
            d = dict(cfg.scenario)
            d.update({"estimator": est, "noise": nc, "seed": cfg.seed, "preset": cfg.preset})
            if est == "lstm":
                d["model"] = cfg.model
            jobs.append((Scenario.from_dict(d).to_dict(), str(out / f"{est}_{nc}")))
    workers = min(workers or suite_workers(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_suite_job, jobs))
    else:
        results = [_suite_job(j) for j in jobs]
    runs = {f"{e}_{n}": {"estimator": e, "noise": n, "metrics": m, "failure": f} for e, n, m, f in results}
    rmse_table = {e: runs[f"{e}_none"]["metrics"]["force_rmse"] if runs[f"{e}_none"]["metrics"] else None
                  for e in cfg.estimators if f"{e}_none" in runs}
    rel_table = {}
    for nc in cfg.noise_cases:
        if nc == "none":
            continue
        rel_table[nc] = {}
        for e in cfg.estimators:
            nom, pert = runs.get(f"{e}_none", {}).get("metrics"), runs[f"{e}_{nc}"]["metrics"]
            if nom is None or pert is None:
                rel_table[nc][e] = None
                continue
            rel_table[nc][e] = [relative_error(pv, nv) if nv > 0 else math.nan
                                for pv, nv in zip(pert["force_rmse"], nom["force_rmse"])]
    report = {"channels": list(CHANNELS), "runs": runs, "rmse": rmse_table, "relative_error": rel_table}
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    _write_tables(out, cfg, rmse_table, rel_table)
    _suite_svg(out, cfg)
    return report


def _write_tables(out: Path, cfg: SuiteConfig, rmse_table: dict, rel_table: dict) -> None:
    with open(out / "rmse_table.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["estimator", *CHANNELS])
        for e, row in rmse_table.items():
            w.writerow([e, *(_fmt(v) for v in (row or [math.nan] * 8))])
    with open(out / "relative_error.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "estimator", *CHANNELS])
        for nc, per in rel_table.items():
            for e, row in per.items():
                w.writerow([nc, e, *(_fmt(v) for v in (row or [math.nan] * 8))])


def _suite_svg(out: Path, cfg: SuiteConfig) -> None:
    series_y, series_pp = [], []
    for e in cfg.estimators:
        path = out / f"{e}_none" / "trajectory.csv"
        if path.exists():
            recs = read_trajectory(path)
            X = [r.X for r in recs]
            if not series_y:
                series_y.append((X, [r.Y_ref for r in recs], "reference"))
            series_y.append((X, [r.Y for r in recs], e))
            series_pp.append(([r.beta for r in recs], np.gradient([r.beta for r in recs], 0.01), e))
    if series_y:
        svg.write_chart(out / "trajectories.svg", series_y, title="Trajectories", xlabel="X [m]", ylabel="Y [m]")
        svg.write_chart(out / "phase_planes.svg", series_pp, title="Sideslip phase plane",
                        xlabel="beta [rad]", ylabel="beta rate [rad/s]")
