"""Gaussian-process Bayesian optimization with expected improvement.

Points live in the unit box internally; :class:`SearchSpace` maps them to the
real hyperparameter ranges and rounds integer dimensions.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.stats import norm, qmc

log = logging.getLogger(__name__)

NOISE_FLOOR = 1e-10
JITTER = 1e-8
FAILURE_PENALTY = 1e6


@dataclass(frozen=True)
class Dim:
    name: str
    lower: float
    upper: float
    integer: bool = False

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"{self.name}: lower {self.lower} must be below upper {self.upper}")


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple[Dim, ...]

    @classmethod
    def table2(cls) -> "SearchSpace":
        return cls((
            Dim("max_epochs", 500, 700, True),
            Dim("validation_frequency", 3, 10, True),
            Dim("gradient_threshold", 0.5, 1.5),
            Dim("initial_learning_rate", 0.001, 0.01),
            Dim("lr_drop_period", 100, 200, True),
            Dim("lr_drop_factor", 0.2, 0.4),
            Dim("mini_batch_size", 32, 128, True),
            Dim("sequence_length", 5000, 10000, True),
        ))

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def from_unit(self, u) -> dict:
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        out = {}
        for d, v in zip(self.dims, u):
            x = min(max(d.lower + v * (d.upper - d.lower), d.lower), d.upper)
            out[d.name] = int(round(x)) if d.integer else float(x)
        return out

    def to_unit(self, point: dict) -> np.ndarray:
        return np.array([(point[d.name] - d.lower) / (d.upper - d.lower) for d in self.dims])

    def snap(self, u) -> np.ndarray:
        """Unit point after rounding integer dimensions."""
        return self.to_unit(self.from_unit(u))


# ---------------------------------------------------------------- GP


def matern52(A, B, lengthscales):
    d = (A[:, None, :] - B[None, :, :]) / lengthscales
    r = np.sqrt(np.maximum(np.sum(d * d, axis=-1), 0.0))
    s5r = math.sqrt(5.0) * r
    return (1.0 + s5r + 5.0 / 3.0 * r * r) * np.exp(-s5r)


@dataclass
class GpSurrogate:
    X: np.ndarray
    y: np.ndarray
    lengthscales: np.ndarray
    signal_var: float
    noise_var: float
    y_mean: float
    y_scale: float
    chol: tuple = field(repr=False, default=None)
    alpha: np.ndarray = field(repr=False, default=None)

    def predict(self, Xs) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance (of the latent function) in original units."""
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        Ks = self.signal_var * matern52(Xs, self.X, self.lengthscales)
        mu = Ks @ self.alpha
        v = cho_solve(self.chol, Ks.T)
        var = np.maximum(self.signal_var - np.sum(Ks * v.T, axis=1), 0.0)
        return mu * self.y_scale + self.y_mean, var * self.y_scale ** 2

    @property
    def noise_var_original(self) -> float:
        return self.noise_var * self.y_scale ** 2


def _profiled_nll(log_ls, X, yn, noise):
    """Negative log marginal likelihood with the signal variance profiled out."""
    ls = np.exp(log_ls)
    n = yn.size
    R = matern52(X, X, ls) + (noise + JITTER) * np.eye(n)
    try:
        c = cho_factor(R, lower=True)
    except np.linalg.LinAlgError:
        return 1e25
    a = cho_solve(c, yn)
    s2 = max(float(yn @ a) / n, 1e-300)
    logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
    return 0.5 * (n * math.log(s2) + logdet + n)


def gp_fit(points, values, rng: np.random.Generator | None = None, n_starts: int = 3,
           noise_var: float = NOISE_FLOOR) -> GpSurrogate:
    X = np.atleast_2d(np.asarray(points, dtype=float))
    y = np.asarray(values, dtype=float).reshape(-1)
    if X.shape[0] != y.size:
        raise ValueError("points and values differ in length")
    if np.unique(X, axis=0).shape[0] < 2:
        raise ValueError("need at least two distinct points")
    rng = rng or np.random.default_rng(0)
    y_mean = float(y.mean())
    y_scale = float(y.std())
    if y_scale < 1e-12:
        y_scale = 1.0
    yn = (y - y_mean) / y_scale
    noise = max(noise_var, NOISE_FLOOR)
    d = X.shape[1]
    lo, hi = math.log(1e-2), math.log(10.0)
    starts = [np.full(d, math.log(0.3))] + [rng.uniform(lo, hi, d) for _ in range(n_starts - 1)]
    best = None
    for s in starts:
        res = minimize(lambda z: _profiled_nll(np.clip(z, lo, hi), X, yn, noise), s, method="Nelder-Mead",
                       options={"xatol": 1e-3, "fatol": 1e-6, "maxiter": 200 * d})
        if best is None or res.fun < best.fun:
            best = res
    ls = np.exp(np.clip(best.x, lo, hi))
    R = matern52(X, X, ls) + (noise + JITTER) * np.eye(y.size)
    chol = cho_factor(R, lower=True)
    a = cho_solve(chol, yn)
    signal = max(float(yn @ a) / y.size, 1e-12)
    # rescale the factorization to the fitted signal variance
    K = signal * matern52(X, X, ls) + (noise + JITTER) * signal * np.eye(y.size)
    chol = cho_factor(K, lower=True)
    alpha = cho_solve(chol, yn)
    return GpSurrogate(X, y, ls, signal, (noise + JITTER) * signal, y_mean, y_scale, chol, alpha)


def expected_improvement(gp: GpSurrogate, candidate, f_best: float | None = None) -> np.ndarray:
    """EI for minimization; zero where the predictive std vanishes.

    Variance at or below the noise-plus-jitter floor counts as zero, so observed
    points carry no improvement.
    """
    mu, var = gp.predict(candidate)
    f_best = float(np.min(gp.y)) if f_best is None else f_best
    sd = np.sqrt(var)
    imp = f_best - mu
    out = np.zeros_like(mu)
    floor = 2.0 * getattr(gp, "noise_var_original", 0.0)
    ok = (var > floor) & (sd > 1e-12 * max(1.0, gp.y_scale))
    z = imp[ok] / sd[ok]
    out[ok] = imp[ok] * norm.cdf(z) + sd[ok] * norm.pdf(z)
    return np.maximum(out, 0.0)


# ---------------------------------------------------------------- optimizer


@dataclass
class History:
    names: list[str]
    points: list[dict] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    failed: list[bool] = field(default_factory=list)

    @property
    def incumbent(self) -> list[float]:
        return list(np.minimum.accumulate(self.values)) if self.values else []

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.values))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", *self.names, "objective", "incumbent"])
            for k, (pt, v, inc) in enumerate(zip(self.points, self.values, self.incumbent), start=1):
                w.writerow([k, *[pt[n] for n in self.names], repr(float(v)), repr(float(inc))])

    @classmethod
    def read_csv(cls, path) -> "History":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        names = rows[0][1:-2]
        h = cls(names)
        for r in rows[1:]:
            h.points.append({n: _parse_num(v) for n, v in zip(names, r[1:-2])})
            h.values.append(float(r[-2]))
            h.failed.append(False)
        return h


def _parse_num(s: str):
    try:
        return int(s)
    except ValueError:
        return float(s)


def _evaluate(objective, point) -> tuple[float, bool]:
    try:
        v = float(objective(point))
        if not math.isfinite(v):
            raise FloatingPointError(f"objective returned {v}")
        return v, False
    except Exception as exc:  # noqa: BLE001 - any objective failure becomes a penalty
        log.warning("objective failed at %s: %s", point, exc)
        return math.nan, True


def _propose(gp: GpSurrogate, space: SearchSpace, rng, n_candidates: int, taken: np.ndarray,
             f_best: float) -> np.ndarray:
    d = space.ndim
    cand = rng.random((n_candidates, d))
    ei = expected_improvement(gp, cand, f_best)
    top = np.argsort(ei)[::-1][:3]
    best_u, best_ei = cand[top[0]], ei[top[0]]
    for k in top:
        res = minimize(lambda z: -expected_improvement(gp, z[None], f_best)[0], cand[k], method="L-BFGS-B",
                       bounds=[(0.0, 1.0)] * d, options={"maxiter": 50})
        if -res.fun > best_ei:
            best_u, best_ei = res.x, -res.fun
    u = space.snap(best_u)
    if taken.size and np.min(np.max(np.abs(taken - u), axis=1)) < 1e-9:
        # rounding collapsed onto an evaluated point; fall back to the best unseen candidate
        for k in np.argsort(ei)[::-1]:
            v = space.snap(cand[k])
            if np.min(np.max(np.abs(taken - v), axis=1)) >= 1e-9:
                return v
        return space.snap(rng.random(d))
    return u


def optimize(objective: Callable[[dict], float], space: SearchSpace, budget: int,
             rng: np.random.Generator, n_init: int = 5, n_candidates: int = 2048,
             workers: int = 1, on_eval: Callable[[int, dict, float], None] | None = None):
    """Minimize ``objective`` over ``space``. Returns (best point, history)."""
    if budget < 5:
        raise ValueError("budget must be at least 5")
    n_init = min(n_init, budget)
    hist = History(space.names)
    U: list[np.ndarray] = []
    sampler = qmc.LatinHypercube(d=space.ndim, seed=rng)
    init = [space.snap(u) for u in sampler.random(n_init)]

    def record(batch_u):
        pts = [space.from_unit(u) for u in batch_u]
        if workers > 1 and len(pts) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(lambda pt: _evaluate(objective, pt), pts))
        else:
            results = [_evaluate(objective, pt) for pt in pts]
        for u, pt, (v, failed) in zip(batch_u, pts, results):
            U.append(u)
            hist.points.append(pt)
            hist.failed.append(failed)
            hist.values.append(v)
            if on_eval is not None:
                on_eval(len(hist.values), pt, v)

    record(init)
    while len(hist.values) < budget:
        vals = _with_penalty(hist.values)
        hist.values[:] = vals
        X = np.array(U)
        q = min(max(1, workers), budget - len(hist.values))
        batch = []
        fant_X, fant_y = list(X), list(vals)
        f_best = float(np.min(vals))
        for _ in range(q):
            try:
                gp = gp_fit(np.array(fant_X), np.array(fant_y), rng)
                u = _propose(gp, space, rng, n_candidates, np.array(fant_X), f_best)
            except ValueError:
                u = space.snap(rng.random(space.ndim))
            batch.append(u)
            # constant liar: pretend the pending point returned the incumbent value
            fant_X.append(u)
            fant_y.append(f_best)
        record(batch)
    hist.values[:] = _with_penalty(hist.values)
    return hist.points[hist.best_index], hist


def _with_penalty(values: list[float]) -> list[float]:
    ok = [v for v in values if math.isfinite(v)]
    worst = max(ok) if ok else 0.0
    penalty = max(FAILURE_PENALTY, abs(worst) * 10.0)
    return [v if math.isfinite(v) else penalty for v in values]


def random_search(objective: Callable[[dict], float], space: SearchSpace, budget: int,
                  rng: np.random.Generator):
    hist = History(space.names)
    for _ in range(budget):
        pt = space.from_unit(rng.random(space.ndim))
        v, failed = _evaluate(objective, pt)
        hist.points.append(pt)
        hist.values.append(v)
        hist.failed.append(failed)
    hist.values[:] = _with_penalty(hist.values)
    return hist.points[hist.best_index], hist


def save_history(hist: History, path) -> Path:
    p = Path(path)
    hist.write_csv(p)
    return p
