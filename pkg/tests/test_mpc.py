import math

import numpy as np
import pytest

from fourwisd.domain import default_params
from fourwisd.ltv_model import LinearizedModel, OUTPUT_MATRIX, linearize
from fourwisd.mpc import (
    MpcConfig,
    MpcController,
    QpInfeasible,
    QpProblem,
    augment,
    build_qp,
    control_step,
    free_response,
    prediction_matrices,
    solve_qp,
)
from oracles import enumerate_qp, random_qp

P = default_params()


def _lm(A_d, B_d, x=None):
    x = np.zeros(5) if x is None else x
    return LinearizedModel(np.zeros((5, 5)), np.zeros((5, 4)), OUTPUT_MATRIX.copy(), A_d, B_d,
                           x, np.zeros(4), np.zeros(5), 0.01)


def _random_aug(rng):
    A_d = np.eye(5) + 0.05 * rng.normal(size=(5, 5))
    B_d = 0.05 * rng.normal(size=(5, 4))
    return augment(_lm(A_d, B_d, rng.normal(size=5)), rng.normal(size=4) * 0.1)


def test_config_defaults_and_validation():
    cfg = MpcConfig()
    assert (cfg.N_p, cfg.N_u, cfg.Q, cfg.R) == (16, 4, 1.0, 1000.0)
    assert cfg.du_step == pytest.approx(math.radians(0.9))
    with pytest.raises(ValueError):
        MpcConfig(N_u=5, N_p=4)
    with pytest.raises(ValueError):
        MpcConfig(R=0)


def test_augment_identity():
    aug = augment(_lm(np.eye(5), np.zeros((5, 4))), np.zeros(4))
    np.testing.assert_array_equal(aug.A, np.eye(9))


def test_augment_structure():
    rng = np.random.default_rng(0)
    B_d = rng.normal(size=(5, 4))
    aug = augment(_lm(np.eye(5), B_d), np.ones(4))
    np.testing.assert_array_equal(aug.A[:5, 5:], B_d)
    np.testing.assert_array_equal(aug.B[5:], np.eye(4))
    np.testing.assert_array_equal(aug.C[:, 5:], 0)
    np.testing.assert_array_equal(aug.x[5:], np.ones(4))


def test_zero_moves_follow_free_response():
    rng = np.random.default_rng(1)
    aug = _random_aug(rng)
    cfg = MpcConfig(N_p=6, N_u=2)
    x = aug.x.copy()
    outs = []
    for _ in range(cfg.N_p):
        x = aug.A @ x + aug.d
        outs.append(aug.C @ x)
    np.testing.assert_allclose(free_response(aug, cfg), np.concatenate(outs), atol=1e-12)


def test_single_step_prediction():
    rng = np.random.default_rng(2)
    aug = _random_aug(rng)
    F, H = prediction_matrices(aug, MpcConfig(N_p=1, N_u=1))
    np.testing.assert_allclose(F, aug.C @ aug.A)
    np.testing.assert_allclose(H, aug.C @ aug.B)


def test_prediction_is_causal():
    rng = np.random.default_rng(3)
    aug = _random_aug(rng)
    cfg = MpcConfig(N_p=8, N_u=4)
    _, H = prediction_matrices(aug, cfg)
    for j in range(cfg.N_p):
        for i in range(cfg.N_u):
            if j < i:
                assert np.all(H[2 * j:2 * j + 2, 4 * i:4 * i + 4] == 0)


def test_prediction_matches_recursion():
    rng = np.random.default_rng(4)
    for _ in range(20):
        aug = _random_aug(rng)
        cfg = MpcConfig(N_p=4, N_u=3)
        F, H = prediction_matrices(aug, cfg)
        dU = rng.normal(size=cfg.N_u * 4)
        x = aug.x.copy()
        outs = []
        for k in range(cfg.N_p):
            du = dU[4 * k:4 * k + 4] if k < cfg.N_u else np.zeros(4)
            x = aug.A @ x + aug.B @ du
            outs.append(aug.C @ x)
        np.testing.assert_allclose(F @ aug.x + H @ dU, np.concatenate(outs), atol=1e-10)


def test_qp_unconstrained():
    rng = np.random.default_rng(5)
    E, f, _, _ = random_qp(rng, n=5, m=0)
    sol = solve_qp(QpProblem(E, f, np.zeros((0, 5)), np.zeros(0)))
    np.testing.assert_allclose(sol.x, np.linalg.solve(E, f))


def test_qp_inactive_constraints():
    rng = np.random.default_rng(6)
    E, f, M, _ = random_qp(rng, n=4, m=6)
    sol = solve_qp(QpProblem(E, f, M, np.full(6, 1e6)))
    np.testing.assert_allclose(sol.x, np.linalg.solve(E, f), rtol=1e-9)
    assert sol.active.size == 0


def test_qp_clipped_scalar():
    # (x-3)^2 = x^2 - 6x + 9  ->  E = 1, f = 3
    sol = solve_qp(QpProblem([[1.0]], [3.0], [[1.0]], [1.0]))
    assert sol.x[0] == pytest.approx(1.0, abs=1e-10)


def test_qp_infeasible_row_named():
    with pytest.raises(QpInfeasible) as info:
        solve_qp(QpProblem([[1.0]], [0.0], [[0.0]], [-1.0], labels=["broken"]))
    assert info.value.row == 0


def test_qp_matches_enumeration_and_kkt():
    rng = np.random.default_rng(7)
    for _ in range(150):
        E, f, M, g = random_qp(rng)
        sol = solve_qp(QpProblem(E, f, M, g))
        _, best = enumerate_qp(E, f, M, g)
        assert sol.objective == pytest.approx(best, abs=1e-6)
        assert sol.kkt_residual <= 1e-6


def test_qp_larger_control_horizon_not_worse():
    rng = np.random.default_rng(8)
    x = np.array([22.0, 0.1, 0.02, 0.01, 0.3])
    refs = np.column_stack([np.linspace(0.0, 0.1, 16), np.linspace(0.5, 1.5, 16)])
    for _ in range(5):
        u_prev = rng.uniform(-0.05, 0.05, 4)
        lm = linearize(x, u_prev, rng.uniform(-300, 300, 4), 0.1, P)
        aug = augment(lm, u_prev)
        costs = []
        for N_u in (1, 4):
            cfg = MpcConfig(N_u=N_u)
            qp, free, H = build_qp(aug, refs, cfg)
            sol = solve_qp(qp)
            xi = refs.reshape(-1)
            dU = sol.x[:N_u * 4]
            costs.append(np.sum((xi - free - H @ dU) ** 2) * cfg.Q + cfg.R * dU @ dU)
        assert costs[1] <= costs[0] + 1e-9


def _state():
    return np.array([22.22, 0.0, 0.0, 0.0, 0.0])


def test_control_step_zero_error_holds_input():
    x = _state()
    u_prev = np.zeros(4)
    cfg = MpcConfig()
    lm = linearize(x, u_prev, np.zeros(4), 0.0, P)
    refs = free_response(augment(lm, u_prev), cfg).reshape(-1, 2)
    u, diag, _ = control_step(x, u_prev, np.zeros(4), 0.0, refs, cfg, P)
    np.testing.assert_allclose(u, u_prev, atol=1e-12)
    assert not diag.suboptimal


def test_control_step_saturated_channel_cannot_grow():
    x = _state()
    u_prev = np.full(4, math.radians(21.0))
    refs = np.column_stack([np.full(16, 0.5), np.full(16, 4.0)])
    u, _, _ = control_step(x, u_prev, np.zeros(4), 0.0, refs, MpcConfig(), P)
    assert np.all(u - u_prev <= 1e-12)


def test_control_step_rate_bound():
    rng = np.random.default_rng(9)
    ctrl = MpcController(MpcConfig(), P)
    for _ in range(40):
        x = np.array([22.0, rng.normal() * 0.3, rng.normal() * 0.1, rng.normal() * 0.05, rng.normal()])
        refs = np.column_stack([rng.normal(size=16) * 0.1, rng.normal(size=16) * 2])
        before = ctrl.u.copy()
        u, diag = ctrl.step(x, rng.normal(size=4) * 200, 0.0, refs)
        assert np.all(np.abs(u - before) <= math.radians(0.9) + 1e-12)
        assert np.all(np.abs(u) <= math.radians(21) + 1e-12)
        assert diag.kkt_residual <= 1e-6


def test_control_step_soft_output_bound():
    # lateral position already beyond the 5 m bound: the QP stays feasible via the slack
    x = np.array([22.0, 0.0, 0.0, 0.0, 5.5])
    refs = np.column_stack([np.zeros(16), np.full(16, 5.5)])
    u, diag, _ = control_step(x, np.zeros(4), np.zeros(4), 0.0, refs, MpcConfig(), P)
    assert not diag.failed
    assert diag.slack > 0


def test_control_step_rejects_bad_refs():
    with pytest.raises(ValueError):
        control_step(_state(), np.zeros(4), np.zeros(4), 0.0, np.zeros((3, 2)))
