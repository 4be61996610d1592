import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fourwisd.domain import VehicleParams, WheelId, default_params
from fourwisd.ltv_model import (
    CtrlState,
    SideslipEstimate,
    advance_sideslip,
    eval_dynamics,
    jacobians,
    lateral_force_linear,
    linearize,
)

P = default_params()


def test_lateral_force_zero_slip():
    assert lateral_force_linear(0.0, 0.0, 0.0, 20.0, WheelId.FL, P) == 0.0


def test_lateral_force_front_steer():
    assert lateral_force_linear(0.01, 0.0, 0.0, 20.0, WheelId.FL, P) == pytest.approx(P.C_f * 0.01)
    assert lateral_force_linear(0.01, 0.0, 0.0, 20.0, WheelId.FL, P) == pytest.approx(462.35)


def test_lateral_force_rear_yaw():
    expected = P.C_r * (P.l_r * 0.1 / 20.0)
    got = lateral_force_linear(0.0, 0.0, 0.1, 20.0, WheelId.RL, P)
    assert got == pytest.approx(expected)
    assert got == pytest.approx(276.1, abs=0.1)


def test_lateral_force_rejects_low_speed():
    with pytest.raises(ValueError):
        lateral_force_linear(0.0, 0.0, 0.0, 0.05, WheelId.FR, P)


def test_ctrl_state_validation():
    with pytest.raises(ValueError):
        CtrlState(0.05, 0, 0, 0, 0)
    with pytest.raises(ValueError):
        CtrlState(10, math.nan, 0, 0, 0)
    s = CtrlState(10, 1, 2, 3, 4)
    assert CtrlState.from_array(s.as_array()) == s


def test_dynamics_all_zero():
    x = np.array([20.0, 0.7, 0.0, 0.0, 0.0])
    f = eval_dynamics(x, np.zeros(4), np.zeros(4), 0.0, P, paper_literal_f5=True)
    np.testing.assert_allclose(f, [0, 0, 0, 0, 0.7], atol=1e-12)


def test_dynamics_equal_drive_force():
    F = 350.0
    x = np.array([20.0, 0.4, 0.0, 0.0, 0.0])
    f = eval_dynamics(x, np.zeros(4), np.full(4, F), 0.0, P)
    assert f[0] == pytest.approx(4 * F / P.m)
    assert f[2] == pytest.approx(0.0, abs=1e-12)


def _moment_oracle(x, u, fx, vy_hat, p: VehicleParams):
    """Yaw moment transcribed term by term from the lateral and longitudinal balances."""
    vx, r = x[0], x[2]
    fy = [
        p.C_f * (u[0] - (vy_hat + p.l_f * r) / vx),
        p.C_f * (u[1] - (vy_hat + p.l_f * r) / vx),
        p.C_r * (u[2] - (vy_hat - p.l_r * r) / vx),
        p.C_r * (u[3] - (vy_hat - p.l_r * r) / vx),
    ]
    FL, FR, RL, RR = 0, 1, 2, 3
    c, s = np.cos(u), np.sin(u)
    lat = (p.l_f * (fy[FL] * c[FL] + fy[FR] * c[FR]) - p.l_r * (fy[RL] * c[RL] + fy[RR] * c[RR])
           - 0.5 * p.t_w * (fy[FL] * s[FL] - fy[FR] * s[FR] + fy[RL] * s[RL] - fy[RR] * s[RR]))
    lon = (p.l_f * (fx[FL] * s[FL] + fx[FR] * s[FR]) - p.l_r * (fx[RL] * s[RL] + fx[RR] * s[RR])
           - 0.5 * p.t_w * (-fx[FL] * c[FL] + fx[FR] * c[FR] - fx[RL] * c[RL] + fx[RR] * c[RR]))
    return (lat + lon) / p.I_z


def _random_point(rng):
    x = np.array([rng.uniform(5, 35), rng.uniform(-3, 3), rng.uniform(-1, 1),
                  rng.uniform(-0.5, 0.5), rng.uniform(-2, 5)])
    u = rng.uniform(-0.37, 0.37, 4)
    fx = rng.uniform(-2000, 2000, 4)
    vy_hat = rng.uniform(-3, 3)
    return x, u, fx, vy_hat


def test_moment_matches_independent_transcription():
    rng = np.random.default_rng(3)
    for _ in range(200):
        x, u, fx, vy_hat = _random_point(rng)
        f = eval_dynamics(x, u, fx, vy_hat, P)
        assert f[2] == pytest.approx(_moment_oracle(x, u, fx, vy_hat, P), rel=1e-12, abs=1e-9)


@pytest.mark.parametrize("body_rate", [False, True])
def test_jacobians_match_finite_differences(body_rate):
    rng = np.random.default_rng(11)
    eps = 1e-6
    for _ in range(200):
        x, u, fx, vy_hat = _random_point(rng)
        A, B = jacobians(x, u, fx, vy_hat, P, body_rate)
        A_fd = np.zeros_like(A)
        B_fd = np.zeros_like(B)
        for j in range(5):
            e = np.zeros(5)
            e[j] = eps
            A_fd[:, j] = (eval_dynamics(x + e, u, fx, vy_hat, P, body_rate)
                          - eval_dynamics(x - e, u, fx, vy_hat, P, body_rate)) / (2 * eps)
        for j in range(4):
            e = np.zeros(4)
            e[j] = eps
            B_fd[:, j] = (eval_dynamics(x, u + e, fx, vy_hat, P, body_rate)
                          - eval_dynamics(x, u - e, fx, vy_hat, P, body_rate)) / (2 * eps)
        for an, fd in ((A, A_fd), (B, B_fd)):
            scale = np.maximum(np.abs(fd), 1.0)
            assert np.max(np.abs(an - fd) / scale) < 1e-5


def test_output_matrix_selects_yaw_and_Y():
    lm = linearize([20, 0, 0, 0, 0], np.zeros(4), np.zeros(4), 0.0, P)
    assert lm.C.shape == (2, 5)
    assert np.count_nonzero(lm.C) == 2
    assert lm.C[0, 3] == 1.0 and lm.C[1, 4] == 1.0


def test_discretization_exact():
    rng = np.random.default_rng(5)
    x, u, fx, vy_hat = _random_point(rng)
    lm = linearize(x, u, fx, vy_hat, P, dt=0.01)
    np.testing.assert_array_equal(lm.A_d, np.eye(5) + lm.A * 0.01)
    np.testing.assert_array_equal(lm.B_d, lm.B * 0.01)


def test_zero_jacobian_gives_identity():
    from fourwisd.ltv_model import discretize
    A_d, B_d = discretize(np.zeros((5, 5)), np.zeros((5, 4)), 0.37)
    np.testing.assert_array_equal(A_d, np.eye(5))


def test_drift_reproduces_nonlinear_step_at_operating_point():
    rng = np.random.default_rng(8)
    x, u, fx, vy_hat = _random_point(rng)
    lm = linearize(x, u, fx, vy_hat, P)
    x_next = lm.A_d @ x + lm.B_d @ u + lm.drift
    np.testing.assert_allclose(x_next, x + P.dt * eval_dynamics(x, u, fx, vy_hat, P), atol=1e-12)


def test_sideslip_zero_forces_unchanged():
    est = SideslipEstimate.from_beta(0.02, 20.0)
    out = advance_sideslip(est, np.zeros(4), np.zeros(4), np.zeros(4), 20.0, P, 0.01)
    assert out.beta_hat == pytest.approx(0.02, abs=1e-15)


def test_sideslip_symmetric_lateral_force_rate():
    F, vx, h = 500.0, 20.0, 1e-4
    est = SideslipEstimate.from_beta(0.0, vx)
    out = advance_sideslip(est, np.zeros(4), np.full(4, F), np.zeros(4), vx, P, h)
    assert out.beta_hat / h == pytest.approx(4 * F / (P.m * vx), rel=1e-3)


def test_sideslip_yaw_rate_term():
    est = SideslipEstimate.from_beta(0.0, 20.0)
    out = advance_sideslip(est, np.zeros(4), np.zeros(4), np.zeros(4), 20.0, P, 0.01, yaw_rate=0.2)
    assert out.beta_hat == pytest.approx(-0.002)


def test_sideslip_saturation_flags():
    est = SideslipEstimate.from_beta(1.04, 20.0)
    out = advance_sideslip(est, np.zeros(4), np.full(4, 1e5), np.zeros(4), 20.0, P, 0.01)
    assert out.unstable
    assert abs(out.beta_hat) < math.pi / 3


@settings(max_examples=100, deadline=None)
@given(beta=st.floats(-0.5, 0.5), vx=st.floats(1.0, 40.0),
       fy=st.lists(st.floats(-3000, 3000), min_size=4, max_size=4),
       fx=st.lists(st.floats(-3000, 3000), min_size=4, max_size=4),
       delta=st.lists(st.floats(-0.35, 0.35), min_size=4, max_size=4))
def test_sideslip_vy_consistency(beta, vx, fy, fx, delta):
    est = SideslipEstimate.from_beta(beta, vx)
    out = advance_sideslip(est, fx, fy, delta, vx, P, 0.01, yaw_rate=0.1)
    assert out.vy_hat == pytest.approx(vx * math.tan(out.beta_hat), rel=1e-12, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(vx=st.floats(1.0, 40.0), F=st.floats(-3000, 3000), vy=st.floats(-3, 3))
def test_zero_steer_symmetric_forces_no_moment(vx, F, vy):
    f = eval_dynamics([vx, vy, 0.0, 0.0, 0.0], np.zeros(4), np.full(4, F), 0.0, P)
    assert abs(f[2]) < 1e-9
