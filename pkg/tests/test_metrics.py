import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from fourwisd.metrics import (
    RunMetrics,
    channel_rmse,
    path_departure,
    phase_plane,
    read_metrics_json,
    read_phase_plane,
    relative_error,
    rmse,
    write_metrics_json,
    write_phase_plane,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)
vec = arrays(float, st.integers(1, 50), elements=finite)


def test_rmse_basics():
    a = np.arange(10.0)
    assert rmse(a, a) == 0.0
    assert rmse(a, a + 1.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        rmse([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        rmse([], [])


@given(vec, st.randoms(use_true_random=False))
def test_rmse_symmetric_and_permutation_invariant(a, r):
    b = a[::-1].copy()
    assert rmse(a, b) == pytest.approx(rmse(b, a))
    perm = list(range(a.size))
    r.shuffle(perm)
    assert rmse(a[perm], b[perm]) == pytest.approx(rmse(a, b), rel=1e-9, abs=1e-9)


def test_channel_rmse():
    t = np.zeros((4, 8))
    e = np.tile(np.arange(8.0), (4, 1))
    assert channel_rmse(t, e) == pytest.approx(list(np.arange(8.0)))


def test_relative_error():
    assert relative_error(3.0, 3.0) == 0.0
    assert relative_error(4.0, 2.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        relative_error(1.0, 0.0)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_relative_error_scale_invariant(p, n, lam):
    assert relative_error(lam * p, lam * n) == pytest.approx(relative_error(p, n), rel=1e-9)


def test_path_departure():
    y = np.sin(np.linspace(0, 3, 50))
    assert path_departure(y, y) == (0.0, 0.0)
    dep, rate = path_departure(y + 0.9, y)
    assert dep == pytest.approx(0.9)
    assert rate == pytest.approx(50.0)
    with pytest.raises(ValueError):
        path_departure([0.0], [0.0, 1.0])


def test_phase_plane_derivative(tmp_path):
    t = np.arange(0, 1, 0.001)
    beta = 0.1 * np.sin(2 * t)
    pp = phase_plane(t, beta)
    np.testing.assert_allclose(pp[1:-1, 2], 0.2 * np.cos(2 * t[1:-1]), atol=1e-6)
    # one-sided at the endpoints
    assert pp[0, 2] == pytest.approx((beta[1] - beta[0]) / 0.001)
    assert pp[-1, 2] == pytest.approx((beta[-1] - beta[-2]) / 0.001)
    path = tmp_path / "pp.csv"
    write_phase_plane(path, pp)
    np.testing.assert_array_equal(read_phase_plane(path), pp)


def test_metrics_json_roundtrip(tmp_path):
    m = RunMetrics([1.0] * 8, 0.9, 50.0, [[0.0, 0.1, 0.2]])
    path = tmp_path / "m.json"
    write_metrics_json(path, m, {"seed": 3})
    back, meta = read_metrics_json(path)
    assert back == m and meta == {"seed": 3}
    first = path.read_bytes()
    write_metrics_json(path, back, meta)
    assert path.read_bytes() == first


def test_run_metrics_rejects_negative_rmse():
    with pytest.raises(ValueError):
        RunMetrics([-1.0] + [0.0] * 7, 0.0, 0.0)
