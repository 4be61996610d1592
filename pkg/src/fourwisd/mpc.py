"""LTV-MPC steering controller.

The prediction uses the augmented state ``x~ = [x; u_prev]`` with input moves
``du`` as decision variables. Each step the model is re-linearized, the
condensed QP

    minimize  dU' E dU - 2 f' dU   subject to  M dU <= gamma

is assembled and solved with Hildreth's dual coordinate ascent followed by an
active-set polish that makes the KKT conditions hold to machine precision.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .domain import MAX_STEER, VehicleParams, default_params
from .ltv_model import LinearizedModel, linearize

log = logging.getLogger(__name__)


class QpInfeasible(RuntimeError):
    def __init__(self, row: int, label: str = ""):
        self.row = row
        self.label = label
        super().__init__(f"QP infeasible at constraint row {row} {label}".rstrip())


@dataclass(frozen=True)
class MpcConfig:
    N_p: int = 16
    N_u: int = 4
    Q: float = 1.0
    R: float = 1000.0
    u_max: float = MAX_STEER
    du_max: float = math.radians(90.0)  # rad/s
    y_max: tuple[float, float] = (math.radians(21.0), 5.0)
    N_1: int = 1
    dt: float = 0.01
    slack_penalty: float = 1e5
    max_iter: int = 400
    tol: float = 1e-8
    paper_literal_f5: bool = False

    def __post_init__(self):
        if not (1 <= self.N_u <= self.N_p):
            raise ValueError("need 1 <= N_u <= N_p")
        if not (1 <= self.N_1 <= self.N_p):
            raise ValueError("need 1 <= N_1 <= N_p")
        if self.Q <= 0 or self.R <= 0:
            raise ValueError("Q and R must be positive")
        if self.u_max <= 0 or self.du_max <= 0 or min(self.y_max) <= 0:
            raise ValueError("bounds must be positive")

    @property
    def du_step(self) -> float:
        return self.du_max * self.dt


@dataclass
class QpProblem:
    E: np.ndarray
    f: np.ndarray
    M: np.ndarray
    gamma: np.ndarray
    labels: list = field(default_factory=list)
    x_feas: np.ndarray | None = None  # any point known to satisfy M x <= gamma

    def __post_init__(self):
        self.E = np.asarray(self.E, dtype=float)
        self.f = np.asarray(self.f, dtype=float).reshape(-1)
        n = self.f.size
        self.M = np.asarray(self.M, dtype=float).reshape(-1, n)
        self.gamma = np.asarray(self.gamma, dtype=float).reshape(-1)
        if self.E.shape != (n, n):
            raise ValueError(f"E must be {n}x{n}")
        if self.M.shape[0] != self.gamma.size:
            raise ValueError("M and gamma row counts differ")
        self.x_feas = np.zeros(n) if self.x_feas is None else np.asarray(self.x_feas, dtype=float)

    def objective(self, x) -> float:
        return float(x @ self.E @ x - 2 * self.f @ x)


@dataclass
class QpSolution:
    x: np.ndarray
    lam: np.ndarray  # multipliers of the rows of M for the objective as stated
    iterations: int
    suboptimal: bool
    kkt_residual: float
    objective: float

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.lam > 0)


@numba.njit(cache=True)
def _hildreth(P, d, lam, max_iter, tol):
    """Coordinate ascent on the dual: min 0.5 l'Pl + d'l over l >= 0."""
    m = d.size
    it = 0
    for it in range(1, max_iter + 1):
        change = 0.0
        scale = 0.0
        for i in range(m):
            w = d[i]
            for j in range(m):
                w += P[i, j] * lam[j]
            w -= P[i, i] * lam[i]
            new = -w / P[i, i]
            if new < 0.0:
                new = 0.0
            change += (new - lam[i]) ** 2
            scale += new * new
            lam[i] = new
        if change <= tol * tol * max(1.0, scale):
            break
    return lam, it


def _kkt_residual(qp: QpProblem, x, lam) -> float:
    grad = 2 * (qp.E @ x - qp.f) + qp.M.T @ lam
    slack = qp.M @ x - qp.gamma
    stat = np.max(np.abs(grad)) / max(1.0, np.max(np.abs(2 * qp.f)))
    primal = max(0.0, float(np.max(slack))) if slack.size else 0.0
    dual = max(0.0, float(-np.min(lam))) if lam.size else 0.0
    comp = float(np.max(np.abs(lam * slack))) if lam.size else 0.0
    return max(stat, primal, dual, comp)


def _eq_step(qp: QpProblem, x, work: list[int]):
    """Step p minimizing the objective from x with M_W p = 0, and the multipliers of W."""
    n = qp.f.size
    k = len(work)
    K = np.zeros((n + k, n + k))
    K[:n, :n] = 2 * qp.E
    if k:
        Mw = qp.M[work]
        K[:n, n:] = Mw.T
        K[n:, :n] = Mw
    rhs = np.zeros(n + k)
    rhs[:n] = 2 * (qp.f - qp.E @ x)
    sol = np.linalg.solve(K, rhs)
    return sol[:n], sol[n:]


def _feasible_start(qp: QpProblem, x_hint, tol):
    """Pull x_hint toward the known feasible point until every row holds."""
    xf = qp.x_feas
    if np.max(qp.M @ xf - qp.gamma) > tol:
        return None
    dvec = x_hint - xf
    Md = qp.M @ dvec
    room = qp.gamma - qp.M @ xf
    t = 1.0
    pos = Md > 1e-300
    if pos.any():
        t = min(1.0, float(np.min(np.maximum(room[pos], 0.0) / Md[pos])))
    return xf + t * dvec


def _active_set(qp: QpProblem, x, tol, max_rounds: int = 200):
    """Primal active-set iterations from a feasible x. Returns (x, lam, rounds) or None."""
    m = qp.gamma.size
    work: list[int] = []
    slack = qp.gamma - qp.M @ x
    for i in np.argsort(slack):
        if slack[i] > 1e-12 * max(1.0, abs(qp.gamma[i])):
            break
        cand = work + [int(i)]
        if np.linalg.matrix_rank(qp.M[cand], tol=1e-10) == len(cand):
            work = cand
    for rounds in range(1, max_rounds + 1):
        p, lw = _eq_step(qp, x, work)
        if np.max(np.abs(p)) <= 1e-13 * max(1.0, np.max(np.abs(x))):
            lam = np.zeros(m)
            lam[work] = lw
            if not work or lw.min() >= -tol:
                return x, np.maximum(lam, 0.0), rounds
            work.pop(int(np.argmin(lw)))
            continue
        Mp = qp.M @ p
        alpha, block = 1.0, -1
        room = qp.gamma - qp.M @ x
        for i in range(m):
            if i in work or Mp[i] <= 1e-14:
                continue
            a = max(room[i], 0.0) / Mp[i]
            if a < alpha:
                alpha, block = a, i
        x = x + alpha * p
        if block >= 0:
            work.append(block)
    return None


def solve_qp(qp: QpProblem, tol: float = 1e-8, max_iter: int = 400,
             lam0: np.ndarray | None = None) -> QpSolution:
    n = qp.f.size
    m = qp.gamma.size
    Einv = np.linalg.inv(qp.E)
    Einv = 0.5 * (Einv + Einv.T)
    x0 = Einv @ qp.f
    if m == 0:
        return QpSolution(x0, np.zeros(0), 0, False, _kkt_residual(qp, x0, np.zeros(0)), qp.objective(x0))

    row_norm = np.linalg.norm(qp.M, axis=1)
    for i in np.flatnonzero(row_norm == 0):
        if qp.gamma[i] < -tol:
            raise QpInfeasible(int(i), qp.labels[i] if i < len(qp.labels) else "")

    # dual of min 0.5 x'(2E)x - 2f'x, multipliers for the rows as stated
    P = 0.5 * qp.M @ Einv @ qp.M.T
    d = qp.gamma - qp.M @ x0
    nz = row_norm > 0
    lam = np.zeros(m) if lam0 is None or lam0.shape != (m,) else np.maximum(lam0, 0.0).copy()
    lam_nz, iters = _hildreth(np.ascontiguousarray(P[np.ix_(nz, nz)]), d[nz].copy(),
                              lam[nz].copy(), max_iter, tol)
    lam[:] = 0.0
    lam[nz] = lam_nz
    if not np.all(np.isfinite(lam)) or np.max(lam) > 1e14:
        worst = int(np.argmax(np.where(np.isfinite(lam), lam, np.inf)))
        raise QpInfeasible(worst, qp.labels[worst] if worst < len(qp.labels) else "")
    x = x0 - 0.5 * Einv @ qp.M.T @ lam
    res = _kkt_residual(qp, x, lam)
    if res > tol:
        start = _feasible_start(qp, x, 1e-9)
        if start is None and np.max(qp.M @ x - qp.gamma) <= 1e-9:
            start = x
        polished = None if start is None else _active_set(qp, start, 1e-12)
        if polished is not None:
            xp, lp, extra = polished
            rp = _kkt_residual(qp, xp, lp)
            if rp < res:
                x, lam, res = xp, lp, rp
                iters += extra
        elif start is None and np.max(lam) > 1e12:
            worst = int(np.argmax(qp.M @ x - qp.gamma))
            raise QpInfeasible(worst, qp.labels[worst] if worst < len(qp.labels) else "")
    return QpSolution(x, lam, iters, bool(res > 1e-6), res, qp.objective(x))


# ---------------------------------------------------------------- prediction


@dataclass(frozen=True)
class Augmented:
    A: np.ndarray  # 9x9
    B: np.ndarray  # 9x4
    C: np.ndarray  # 2x9
    x: np.ndarray  # 9
    d: np.ndarray  # 9, affine drift of the linearization


def augment(lm: LinearizedModel, u_prev, x=None) -> Augmented:
    nx, nu = lm.B_d.shape
    A = np.zeros((nx + nu, nx + nu))
    A[:nx, :nx] = lm.A_d
    A[:nx, nx:] = lm.B_d
    A[nx:, nx:] = np.eye(nu)
    B = np.vstack([lm.B_d, np.eye(nu)])
    C = np.hstack([lm.C, np.zeros((lm.C.shape[0], nu))])
    x = lm.x_bar if x is None else np.asarray(x, dtype=float)
    xt = np.concatenate([x, np.asarray(u_prev, dtype=float)])
    d = np.concatenate([lm.drift, np.zeros(nu)])
    return Augmented(A, B, C, xt, d)


def prediction_matrices(aug: Augmented, cfg: MpcConfig) -> tuple[np.ndarray, np.ndarray]:
    """F stacks C A^j for j = N_1..N_p; H holds C A^(j-i) B in block (j, i), i < N_u."""
    ny, nu = aug.C.shape[0], aug.B.shape[1]
    rows = cfg.N_p - cfg.N_1 + 1
    F = np.zeros((rows * ny, aug.A.shape[0]))
    H = np.zeros((rows * ny, cfg.N_u * nu))
    # CA^k B for k = 0..N_p-1
    CAkB = []
    CAk = aug.C.copy()
    powers = []
    for _ in range(cfg.N_p + 1):
        powers.append(CAk)
        CAkB.append(CAk @ aug.B)
        CAk = CAk @ aug.A
    for r, j in enumerate(range(cfg.N_1, cfg.N_p + 1)):
        F[r * ny:(r + 1) * ny] = powers[j]
        for i in range(min(cfg.N_u, j)):
            # move i is applied at step i (0-based) and first affects output j >= i+1
            H[r * ny:(r + 1) * ny, i * nu:(i + 1) * nu] = CAkB[j - 1 - i]
    return F, H


def drift_response(aug: Augmented, cfg: MpcConfig) -> np.ndarray:
    """Output contribution of the linearization's affine term, stacked like F."""
    ny = aug.C.shape[0]
    out = np.zeros((cfg.N_p - cfg.N_1 + 1) * ny)
    acc = np.zeros_like(aug.x)
    for j in range(1, cfg.N_p + 1):
        acc = aug.A @ acc + aug.d
        if j >= cfg.N_1:
            r = j - cfg.N_1
            out[r * ny:(r + 1) * ny] = aug.C @ acc
    return out


def free_response(aug: Augmented, cfg: MpcConfig) -> np.ndarray:
    F, _ = prediction_matrices(aug, cfg)
    return F @ aug.x + drift_response(aug, cfg)


def _stack_refs(refs, cfg: MpcConfig) -> np.ndarray:
    refs = np.asarray(refs, dtype=float)
    if refs.ndim != 2 or refs.shape[1] != 2 or refs.shape[0] < cfg.N_p:
        raise ValueError(f"refs must be (>= {cfg.N_p}, 2) rows of (phi_ref, Y_ref)")
    return refs[cfg.N_1 - 1:cfg.N_p].reshape(-1)


def build_qp(aug: Augmented, refs, cfg: MpcConfig) -> tuple[QpProblem, np.ndarray, np.ndarray]:
    """Assemble the condensed QP; returns (qp, free response, H)."""
    F, H = prediction_matrices(aug, cfg)
    free = F @ aug.x + drift_response(aug, cfg)
    xi = _stack_refs(refs, cfg)
    nu = aug.B.shape[1]
    n = cfg.N_u * nu
    E = cfg.Q * H.T @ H + cfg.R * np.eye(n)
    f = cfg.Q * H.T @ (xi - free)

    rows: list[np.ndarray] = []
    rhs: list[float] = []
    labels: list[str] = []
    box = cfg.du_step
    # rate limits
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        rows += [e, -e]
        rhs += [box, box]
        labels += [f"rate+ move{k // nu} ch{k % nu}", f"rate- move{k // nu} ch{k % nu}"]
    # input magnitude: u_prev + cumulative moves
    u_prev = aug.x[-nu:]
    for i in range(cfg.N_u):
        L = np.zeros((nu, n))
        for k in range(i + 1):
            L[:, k * nu:(k + 1) * nu] = np.eye(nu)
        for c in range(nu):
            rows += [L[c], -L[c]]
            rhs += [cfg.u_max - u_prev[c], cfg.u_max + u_prev[c]]
            labels += [f"u+ step{i} ch{c}", f"u- step{i} ch{c}"]
    # outputs
    ny = aug.C.shape[0]
    ymax = np.tile(np.asarray(cfg.y_max, dtype=float), H.shape[0] // ny)
    out_rows, out_rhs, out_lab, soft = [], [], [], []
    for r in range(H.shape[0]):
        for sign, tag in ((1.0, "+"), (-1.0, "-")):
            g = ymax[r] - sign * free[r]
            out_rows.append(sign * H[r])
            out_rhs.append(g)
            out_lab.append(f"y{tag} step{r // ny + cfg.N_1} out{r % ny}")
            soft.append(g < 0)
    M = np.array(rows + out_rows)
    gamma = np.array(rhs + out_rhs)
    labels += out_lab

    # drop rows that no move inside the rate box can reach
    reach = np.abs(M) @ np.full(n, box)
    hard_keep = np.ones(len(rows), dtype=bool)
    out_keep = (reach[len(rows):] > gamma[len(rows):]) | np.array(soft, dtype=bool)
    keep = np.concatenate([hard_keep, out_keep])
    # input rows are inactive whenever the whole box stays inside the bound
    for idx in range(2 * n, len(rows)):
        keep[idx] = reach[idx] > gamma[idx]
    M, gamma = M[keep], gamma[keep]
    labels = [lab for lab, k in zip(labels, keep) if k]
    soft_mask = np.concatenate([np.zeros(len(rows), dtype=bool), np.array(soft, dtype=bool)])[keep]

    if soft_mask.any():
        # one shared slack s >= 0 relaxes every output row the free response already violates
        E = np.block([[E, np.zeros((n, 1))], [np.zeros((1, n)), np.array([[cfg.slack_penalty]])]])
        f = np.concatenate([f, [0.0]])
        col = np.where(soft_mask, -1.0, 0.0)[:, None]
        M = np.hstack([M, col])
        neg = np.zeros((1, n + 1))
        neg[0, n] = -1.0
        M = np.vstack([M, neg])
        gamma = np.concatenate([gamma, [0.0]])
        labels.append("slack>=0")
        x_feas = np.zeros(n + 1)
        x_feas[n] = max(0.0, float(np.max(-gamma[:-1][soft_mask])))
        return QpProblem(E, f, M, gamma, labels, x_feas), free, H
    return QpProblem(E, f, M, gamma, labels), free, H


@dataclass
class MpcDiagnostics:
    cost: float
    qp_iters: int
    active_set_size: int
    suboptimal: bool
    kkt_residual: float
    predicted: np.ndarray
    du: np.ndarray
    slack: float = 0.0
    failed: bool = False


def control_step(x, u_prev, fx_hat, vy_hat: float, refs, cfg: MpcConfig | None = None,
                 p: VehicleParams | None = None, lam0=None):
    """One MPC update. Returns (u_next, diagnostics, multipliers)."""
    cfg = cfg or MpcConfig()
    p = p or default_params()
    u_prev = np.asarray(u_prev, dtype=float)
    if np.any(np.abs(u_prev) > cfg.u_max + 1e-12):
        raise ValueError("u_prev outside the steering bound")
    lm = linearize(x, u_prev, fx_hat, vy_hat, p, cfg.dt, cfg.paper_literal_f5)
    aug = augment(lm, u_prev)
    qp, free, H = build_qp(aug, refs, cfg)
    nu = u_prev.size
    try:
        sol = solve_qp(qp, cfg.tol, cfg.max_iter, lam0)
    except (QpInfeasible, np.linalg.LinAlgError) as exc:
        log.warning("MPC solve failed, holding previous steering: %s", exc)
        diag = MpcDiagnostics(math.nan, 0, 0, True, math.inf, free, np.zeros(nu), failed=True)
        return u_prev.copy(), diag, None
    if sol.suboptimal:
        log.debug("MPC QP suboptimal, KKT residual %.2e", sol.kkt_residual)
    dU = sol.x[:cfg.N_u * nu]
    du = np.clip(dU[:nu], -cfg.du_step, cfg.du_step)
    u_next = np.clip(u_prev + du, -cfg.u_max, cfg.u_max)
    du = u_next - u_prev
    assert np.all(np.abs(du) <= cfg.du_step + 1e-12) and np.all(np.abs(u_next) <= cfg.u_max + 1e-12)
    slack = float(sol.x[-1]) if sol.x.size > cfg.N_u * nu else 0.0
    diag = MpcDiagnostics(sol.objective, sol.iterations, int(sol.active.size), sol.suboptimal,
                          sol.kkt_residual, free + H @ dU, du, slack)
    return u_next, diag, sol.lam


class MpcController:
    """Stateful wrapper: remembers the applied steering and warm-starts the dual."""

    def __init__(self, cfg: MpcConfig | None = None, p: VehicleParams | None = None, u0=None):
        self.cfg = cfg or MpcConfig()
        self.p = p or default_params()
        self.u = np.zeros(4) if u0 is None else np.asarray(u0, dtype=float).copy()
        self._lam = None

    def step(self, x, fx_hat, vy_hat: float, refs):
        u, diag, lam = control_step(x, self.u, fx_hat, vy_hat, refs, self.cfg, self.p, self._lam)
        self._lam = lam
        self.u = u
        return u, diag
