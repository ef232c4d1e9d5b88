import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maat.baselines import (
    BASELINES,
    cubic_spline,
    finite_difference,
    kalman_rts,
    linear_interp,
    rbf_interp,
    run_baseline,
    savitzky_golay,
    tvregdiff_proxy,
)
from maat.dynamics import read_table
from maat.errors import InvalidInputError, NumericError, UnsupportedInputError

T = np.linspace(0.0, 4.0, 81)


def cubic(t):
    return 0.3 * t**3 - 1.2 * t**2 + 0.5 * t + 2.0


def dcubic(t):
    return 0.9 * t**2 - 2.4 * t + 0.5


def test_fd_linear_exact():
    est = finite_difference(T, 3.0 * T - 1.0)
    np.testing.assert_allclose(est.derivs[1:-1, 0], 3.0, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(est.states[:, 0], 3.0 * T - 1.0)


def test_fd_quadratic_interior_exact():
    est = finite_difference(T, T**2)
    np.testing.assert_allclose(est.derivs[1:-1, 0], 2 * T[1:-1], atol=1e-12)


def test_fd_noise_floor():
    dt, sigma = 0.01, 0.1
    t = dt * np.arange(10_000)
    y = 1.0 + np.random.default_rng(0).normal(scale=sigma, size=t.size)
    mse = np.mean(finite_difference(t, y).derivs[1:-1] ** 2)
    target = sigma**2 / (2 * dt**2)
    assert target / 2 <= mse <= 2 * target


def test_fd_needs_three_points():
    with pytest.raises(InvalidInputError):
        finite_difference([0.0, 1.0], [1.0, 2.0])


def test_savgol_cubic_reproduction():
    est = savitzky_golay(T, cubic(T), window=25, order=3)
    inner = slice(12, -12)
    np.testing.assert_allclose(est.states[inner, 0], cubic(T[inner]), rtol=0, atol=1e-10)
    np.testing.assert_allclose(est.derivs[inner, 0], dcubic(T[inner]), rtol=0, atol=1e-8)


def test_savgol_shifted_boundary_windows_exact_everywhere():
    est = savitzky_golay(T, cubic(T), boundary="interp")
    np.testing.assert_allclose(est.states[:, 0], cubic(T), rtol=0, atol=1e-10)
    np.testing.assert_allclose(est.derivs[:, 0], dcubic(T), rtol=0, atol=1e-8)


def test_savgol_constant_has_zero_derivative():
    est = savitzky_golay(T, np.full(T.size, 4.2))
    assert np.max(np.abs(est.derivs)) < 1e-12


def test_savgol_needs_uniform_grid():
    t = np.sort(np.random.default_rng(0).uniform(0, 1, 40))
    with pytest.raises(UnsupportedInputError):
        savitzky_golay(t, np.sin(t))


def test_savgol_window_validation():
    with pytest.raises(InvalidInputError):
        savitzky_golay(T, T, window=24)
    with pytest.raises(InvalidInputError):
        savitzky_golay(T, T, window=3, order=3)


def test_savgol_short_series_shrinks_window():
    t = np.linspace(0, 1, 10)
    est = savitzky_golay(t, cubic(t), boundary="interp")
    np.testing.assert_allclose(est.states[:, 0], cubic(t), atol=1e-10)


def test_tvreg_proxy_is_savgol_21():
    y = np.sin(T) + 0.1 * np.cos(7 * T)
    a = tvregdiff_proxy(T, y)
    b = savitzky_golay(T, y, window=21, order=3)
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.derivs, b.derivs)
    assert a.method == "tvreg"


def test_spline_reproduces_cubic_away_from_ends():
    t = np.linspace(0, 10, 101)
    est = cubic_spline(t, cubic(t))
    inner = slice(30, -30)
    np.testing.assert_allclose(est.states[inner, 0], cubic(t[inner]), atol=1e-9)
    np.testing.assert_allclose(est.derivs[inner, 0], dcubic(t[inner]), atol=1e-9)


def test_spline_linear_data_is_the_line():
    from scipy.interpolate import CubicSpline

    y = 2.0 * T + 1.0
    est = cubic_spline(T, y, query=np.linspace(0, 4, 333))
    np.testing.assert_allclose(est.states[:, 0], 2.0 * est.times + 1.0, atol=1e-12)
    np.testing.assert_allclose(est.derivs[:, 0], 2.0, atol=1e-12)
    assert np.max(np.abs(CubicSpline(T, y, bc_type="natural")(T, 2))) < 1e-10


def test_spline_duplicate_times():
    with pytest.raises(InvalidInputError):
        cubic_spline([0.0, 1.0, 1.0, 2.0], [0.0, 1.0, 1.0, 2.0])


def test_linear_interp_between_knots():
    est = linear_interp([0.0, 1.0, 3.0], [0.0, 2.0, 0.0], query=[0.5, 2.0])
    np.testing.assert_allclose(est.states[:, 0], [1.0, 1.0])
    np.testing.assert_allclose(est.derivs[:, 0], [2.0, -1.0])


@pytest.mark.parametrize("method", ["spline", "linear", "rbf"])
def test_interpolants_reproduce_knots(method):
    t = np.linspace(0, 3, 30)
    y = np.column_stack([np.sin(t), np.exp(-t)])
    est = run_baseline(method, t, y)
    tol = 1e-8 if method == "rbf" else 1e-12
    np.testing.assert_allclose(est.states, y, rtol=0, atol=tol)


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=4, max_size=25))
def test_linear_and_spline_hit_knots(values):
    t = np.arange(len(values), dtype=float)
    for fn in (linear_interp, cubic_spline):
        np.testing.assert_allclose(fn(t, values).states[:, 0], values, rtol=0, atol=1e-9)


def test_rbf_records_epsilon_and_scale():
    t = np.linspace(0, 2, 25)
    est = rbf_interp(t, np.sin(t))
    grid = np.array([0.25, 0.5, 1.0, 2.0, 4.0]) / np.sqrt(np.var(t))
    assert np.any(np.isclose(est.epsilon, grid, rtol=1e-14))


def test_rbf_derivative_reasonable():
    t = np.linspace(0, 2 * np.pi, 60)
    est = rbf_interp(t, np.sin(t))
    assert np.max(np.abs(est.derivs[5:-5, 0] - np.cos(t[5:-5]))) < 1e-3


def test_rbf_singular_names_epsilon(monkeypatch):
    import maat.baselines as B

    def boom(*a, **k):
        raise np.linalg.LinAlgError("singular")

    monkeypatch.setattr(B, "solve", boom)
    with pytest.raises(NumericError, match="epsilon="):
        rbf_interp(T, np.sin(T))


def test_kalman_line_velocity():
    t = np.linspace(0, 10, 201)
    est = kalman_rts(t, 2.0 * t)
    np.testing.assert_allclose(est.derivs[10:, 0], 2.0, atol=1e-3)


def test_kalman_constant_large_r():
    t = np.linspace(0, 10, 201)
    est = kalman_rts(t, np.full(t.size, 3.0), q=1.0, r=100.0)
    assert np.max(np.abs(est.derivs)) < 1e-3


def test_kalman_smoothing_shrinks_variance():
    t = np.linspace(0, 5, 100)
    y = np.sin(t) + np.random.default_rng(1).normal(scale=0.3, size=t.size)
    _, details = kalman_rts(t, y, return_details=True)
    pf = details["P_filt"][0, 1:-1, 0, 0]
    ps = details["P_smooth"][0, 1:-1, 0, 0]
    assert np.all(ps <= pf)


def test_kalman_innovations_white():
    t = 0.01 * np.arange(10_000)
    y = np.random.default_rng(2).normal(scale=np.sqrt(0.1), size=t.size)
    _, details = kalman_rts(t, y, return_details=True)
    e = details["innovations"][100:, 0]
    rho = np.corrcoef(e[:-1], e[1:])[0, 1]
    assert -0.1 <= rho <= 0.1


@pytest.mark.parametrize("method", sorted(BASELINES))
def test_shapes_and_finite(method):
    y = np.column_stack([np.sin(T), np.cos(T)])
    est = run_baseline(method, T, y)
    assert est.states.shape == est.derivs.shape == (T.size, 2)
    assert np.all(np.isfinite(est.states)) and np.all(np.isfinite(est.derivs))
    q = np.linspace(0.1, 3.9, 17)
    est_q = run_baseline(method, T, y, query=q)
    assert est_q.states.shape == (17, 2)


def test_unknown_baseline():
    with pytest.raises(InvalidInputError):
        run_baseline("gp", T, T)


def test_decreasing_times_rejected():
    with pytest.raises(InvalidInputError):
        finite_difference([0.0, 2.0, 1.0], [0.0, 1.0, 2.0])


def test_estimate_csv(tmp_path):
    est = cubic_spline(T, np.column_stack([T, T**2]))
    est.to_csv(tmp_path / "estimate_spline.csv", ["S", "I"])
    header, data = read_table(tmp_path / "estimate_spline.csv")
    assert header == ["t", "S_hat", "I_hat", "dS_hat", "dI_hat"]
    np.testing.assert_array_equal(data[:, 1:3], est.states)
