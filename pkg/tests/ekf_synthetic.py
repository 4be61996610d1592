"""Synthetic truth for filter consistency checks: the filter's own model driven
with mean-reverting longitudinal forces and additive measurement noise."""
from __future__ import annotations

import numpy as np

from fourwisd.domain import default_params
from fourwisd.ekf import EkfEstimator, eval_f_star, eval_h_star, predict, update
from fourwisd.plant import NoiseSpec, static_loads


def synthetic_run(n_steps: int, seed: int = 0, noise: str = "case1", Q=None, R=None,
                  dt: float = 0.01, track_psd: bool = False):
    p = default_params()
    rng = np.random.default_rng(seed)
    spec = NoiseSpec.case(noise)
    fz = static_loads(p)
    x = np.zeros(15)
    x[0] = 22.22
    x[3:7] = 22.22 / p.R_e
    est = EkfEstimator(p, dt, Q=Q, R=R)
    prior_log, post_log, truth_log = [], [], []
    min_eig = np.inf
    wheel_phase = np.arange(4)
    steer_shape = np.array([1.0, 1.0, -0.3, -0.3])
    for k in range(n_steps):
        t = k * dt
        delta = 0.02 * np.sin(0.8 * t) * steer_shape
        torque = p.R_e * (x[7:11] + p.R_r * fz)
        u = np.concatenate([delta, torque])
        x = x + dt * eval_f_star(x, u, p, fz)
        target = 300.0 * np.sin(0.5 * t + wheel_phase)
        x[7:11] += dt * (target - x[7:11]) / 0.5 + rng.standard_normal(4) * np.sqrt(dt) * 50.0
        y = eval_h_star(x, u, p) + rng.standard_normal(9) * np.sqrt(spec.ekf_variance)
        if est.state is None:
            est.step(y, u, fz)
            continue
        prior = predict(est.state, u, p, dt, fz)
        est.state = update(prior, y, u, p)
        prior_log.append(prior.x_star[7:])
        post_log.append(est.state.x_star[7:])
        truth_log.append(x[7:].copy())
        if track_psd and k % 10 == 0:
            min_eig = min(min_eig, est.state.min_eig())
    return np.array(prior_log), np.array(post_log), np.array(truth_log), est.state, min_eig
