"""Run evaluation: force RMSE, relative error, path departure and phase-plane data."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

REFERENCE_MAX_Y = 1.8
CHANNELS = ("Fx_FL", "Fx_FR", "Fx_RL", "Fx_RR", "Fy_FL", "Fy_FR", "Fy_RL", "Fy_RR")


def rmse(truth, estimate) -> float:
    a = np.asarray(truth, dtype=float)
    b = np.asarray(estimate, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("rmse needs at least one sample")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def channel_rmse(truth, estimate) -> list[float]:
    """Per-column RMSE of two (n, channels) arrays."""
    a = np.asarray(truth, dtype=float)
    b = np.asarray(estimate, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] == 0:
        raise ValueError(f"need equal non-empty (n, c) arrays, got {a.shape} and {b.shape}")
    return [float(v) for v in np.sqrt(np.mean((a - b) ** 2, axis=0))]


def relative_error(rmse_perturbed: float, rmse_nominal: float) -> float:
    if not rmse_nominal > 0:
        raise ValueError("nominal RMSE must be positive")
    return abs(rmse_perturbed - rmse_nominal) / rmse_nominal


def path_departure(y, y_ref, reference_max: float = REFERENCE_MAX_Y) -> tuple[float, float]:
    """Largest lateral deviation from the reference and its share of ``reference_max`` in percent."""
    y = np.asarray(y, dtype=float)
    y_ref = np.asarray(y_ref, dtype=float)
    if y.shape != y_ref.shape:
        raise ValueError(f"length mismatch {y.shape} vs {y_ref.shape}")
    if y.size == 0:
        return 0.0, 0.0
    dep = float(np.max(np.abs(y - y_ref)))
    return dep, dep / reference_max * 100.0


def phase_plane(t, beta) -> np.ndarray:
    """Columns (t, beta, beta_dot); central differences inside, one-sided at the ends."""
    t = np.asarray(t, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if t.shape != beta.shape or t.size < 2:
        raise ValueError("need matching time and sideslip series of length >= 2")
    return np.column_stack([t, beta, np.gradient(beta, t, edge_order=1)])


def write_phase_plane(path, data: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "beta", "beta_dot"])
        for row in data:
            w.writerow([repr(float(v)) for v in row])


def read_phase_plane(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array(rows, dtype=float).reshape(-1, 3)


@dataclass
class RunMetrics:
    force_rmse: list[float]
    max_departure: float
    departure_rate: float
    phase_plane: list[list[float]] = field(default_factory=list)
    relative_errors: list[float] | None = None
    failed: bool = False
    failure: str = ""

    def __post_init__(self):
        if any(v < 0 for v in self.force_rmse if np.isfinite(v)):
            raise ValueError("RMSE must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunMetrics":
        return cls(**d)


def write_metrics_json(path, metrics: RunMetrics, meta: dict) -> None:
    """Stable, byte-reproducible JSON: sorted keys, fixed float repr."""
    doc = {"metrics": metrics.to_dict(), "meta": meta}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1, allow_nan=True) + "\n")


def read_metrics_json(path) -> tuple[RunMetrics, dict]:
    doc = json.loads(Path(path).read_text())
    return RunMetrics.from_dict(doc["metrics"]), doc["meta"]
