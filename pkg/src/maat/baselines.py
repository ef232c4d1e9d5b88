"""Classical state and derivative estimators used as comparison baselines.

Every estimator takes sample ``times`` of shape ``(N,)`` and ``values`` of
shape ``(N,)`` or ``(N, D)`` and returns a :class:`BaselineEstimate` on a
query grid (the sample grid by default).  Grid-based methods (finite
differences, Savitzky-Golay, Kalman) are linearly interpolated when a
different query grid is requested.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import LinAlgWarning, solve
from scipy.signal import savgol_filter

from .dynamics import FLOAT_FMT
from .errors import InvalidInputError, NumericError, UnsupportedInputError

UNIFORM_RTOL = 1e-6


@dataclass(frozen=True)
class BaselineEstimate:
    method: str
    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray

    def to_csv(self, path, state_names=None):
        D = self.states.shape[1]
        names = list(state_names) if state_names else [f"x{i + 1}" for i in range(D)]
        header = ["t", *(f"{n}_hat" for n in names), *(f"d{n}_hat" for n in names)]
        data = np.column_stack([self.times, self.states, self.derivs])
        np.savetxt(path, data, fmt=FLOAT_FMT, delimiter=",", header=",".join(header), comments="")


def _prepare(times, values, min_points=2):
    t = np.asarray(times, dtype=float)
    x = np.asarray(values, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if t.ndim != 1 or x.shape[0] != t.size:
        raise InvalidInputError("times and values must have matching first dimension")
    if t.size < min_points:
        raise InvalidInputError(f"need at least {min_points} points, got {t.size}")
    if np.any(np.diff(t) <= 0):
        raise InvalidInputError("times must be strictly increasing")
    return t, x


def _uniform_step(t):
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=UNIFORM_RTOL, atol=0):
        raise UnsupportedInputError("method requires a uniform time grid")
    return float(np.mean(dt))


def _on_query(method, t, states, derivs, query):
    if query is None:
        return BaselineEstimate(method, t, states, derivs)
    q = np.asarray(query, dtype=float)
    if q.shape == t.shape and np.array_equal(q, t):
        return BaselineEstimate(method, t, states, derivs)
    interp = lambda a: np.column_stack([np.interp(q, t, a[:, d]) for d in range(a.shape[1])])  # noqa: E731
    return BaselineEstimate(method, q, interp(states), interp(derivs))


def finite_difference(times, values, query=None):
    """Central differences inside, first-order one-sided differences at the ends."""
    t, x = _prepare(times, values, min_points=3)
    d = np.empty_like(x)
    d[1:-1] = (x[2:] - x[:-2]) / (t[2:] - t[:-2])[:, None]
    d[0] = (x[1] - x[0]) / (t[1] - t[0])
    d[-1] = (x[-1] - x[-2]) / (t[-1] - t[-2])
    return _on_query("fd", t, x.copy(), d, query)


def savitzky_golay(times, values, window=25, order=3, query=None, boundary="mirror", method="savgol"):
    """Savitzky-Golay smoothing with the analytic derivative of each local fit.

    Parameters
    ----------
    window : int
        Odd window length, larger than ``order``.  Shrunk to the largest odd
        length that fits when the series is shorter than the window.
    order : int
        Local polynomial order.
    boundary : {"mirror", "interp"}
        ``"mirror"`` reflects ``window // 2`` samples past each end;
        ``"interp"`` fits the first / last full window and evaluates it at
        the boundary samples.
    """
    t, x = _prepare(times, values, min_points=order + 2)
    dt = _uniform_step(t)
    if window % 2 == 0 or window <= order:
        raise InvalidInputError("window must be odd and larger than order")
    if window > t.size:
        window = t.size if t.size % 2 else t.size - 1
        if window <= order:
            raise InvalidInputError("series too short for the requested order")
    if boundary not in ("mirror", "interp"):
        raise InvalidInputError(f"unknown boundary mode {boundary!r}")
    states = savgol_filter(x, window, order, deriv=0, axis=0, mode=boundary)
    derivs = savgol_filter(x, window, order, deriv=1, delta=dt, axis=0, mode=boundary)
    return _on_query(method, t, states, derivs, query)


def tvregdiff_proxy(times, values, query=None):
    """Stand-in for total-variation regularised differentiation (SG, window 21, order 3)."""
    return savitzky_golay(times, values, window=21, order=3, query=query, method="tvreg")


def cubic_spline(times, values, query=None):
    """Natural cubic spline through every sample, derivative from its coefficients."""
    t, x = _prepare(times, values, min_points=4)
    spline = CubicSpline(t, x, bc_type="natural", axis=0)
    q = t if query is None else np.asarray(query, dtype=float)
    states = spline(q)
    # the interpolant passes through the knots; return them without rounding
    pos = np.clip(np.searchsorted(t, q), 0, t.size - 1)
    at_knot = t[pos] == q
    states[at_knot] = x[pos[at_knot]]
    return BaselineEstimate("spline", q, states, spline(q, 1))


def linear_interp(times, values, query=None):
    """Piecewise-linear interpolation; the derivative is the slope of the containing segment."""
    t, x = _prepare(times, values, min_points=2)
    q = t if query is None else np.asarray(query, dtype=float)
    slopes = np.diff(x, axis=0) / np.diff(t)[:, None]
    seg = np.clip(np.searchsorted(t, q, side="right") - 1, 0, t.size - 2)
    states = x[seg] + slopes[seg] * (q - t[seg])[:, None]
    return BaselineEstimate("linear", q, states, slopes[seg])


def _multiquadric(r, eps):
    return np.sqrt(1.0 + (eps * r) ** 2)


def _rbf_weights(t, x, eps):
    """Interpolation weights and whether the solve was ill-conditioned."""
    Phi = _multiquadric(np.abs(t[:, None] - t[None, :]), eps)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", LinAlgWarning)
            w = solve(Phi, x, assume_a="sym")
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"multiquadric system is singular for epsilon={eps:.6g}") from exc
    if not np.all(np.isfinite(w)):
        raise NumericError(f"multiquadric system is singular for epsilon={eps:.6g}")
    return w, any(issubclass(c.category, LinAlgWarning) for c in caught)


def rbf_interp(times, values, epsilon_grid=(0.25, 0.5, 1.0, 2.0, 4.0), query=None, holdout_every=5):
    """Multiquadric RBF interpolation with a grid-searched shape parameter.

    Candidate shape parameters are ``epsilon_grid / sqrt(Var(times))``.  Each
    is scored by interpolating every sample except every ``holdout_every``-th
    and measuring the error on the held-out ones; the winner is refit on all
    samples.  Candidates whose system is numerically singular (reciprocal
    condition number below machine precision) only compete when no
    well-conditioned candidate exists.  Derivatives use central differences
    with step ``1e-3 * dt``.

    Raises
    ------
    NumericError
        When the interpolation system is exactly singular (e.g. duplicate
        knots) for every candidate; the message names the last epsilon tried.
    """
    t, x = _prepare(times, values, min_points=3)
    base = 1.0 / np.sqrt(np.var(t))
    held = np.zeros(t.size, dtype=bool)
    held[holdout_every - 1 :: holdout_every] = True
    held[[0, -1]] = False
    best, best_key, last_exc = None, None, None
    for f in epsilon_grid:
        eps = f * base
        try:
            w, ill = _rbf_weights(t[~held], x[~held], eps)
        except NumericError as exc:
            last_exc = exc
            continue
        pred = _multiquadric(np.abs(t[held][:, None] - t[~held][None, :]), eps) @ w
        err = float(np.mean((pred - x[held]) ** 2)) if held.any() else 0.0
        key = (ill, err)
        if best_key is None or key < best_key:
            best, best_key = eps, key
    if best is None:
        raise last_exc
    w, _ = _rbf_weights(t, x, best)
    q = t if query is None else np.asarray(query, dtype=float)
    h = 1e-3 * float(np.min(np.diff(t)))
    ev = lambda s: _multiquadric(np.abs(s[:, None] - t[None, :]), best) @ w  # noqa: E731
    derivs = (ev(q + h) - ev(q - h)) / (2 * h)
    est = BaselineEstimate("rbf", q, ev(q), derivs)
    object.__setattr__(est, "epsilon", best)
    return est


def kalman_rts(times, values, q=1.0, r=0.1, query=None, return_details=False):
    """Constant-velocity Kalman filter followed by a Rauch-Tung-Striebel smoother.

    Each column is filtered independently with state ``(position, velocity)``,
    transition ``[[1, dt], [0, 1]]``, white-noise-acceleration process
    covariance ``q * [[dt^3/3, dt^2/2], [dt^2/2, dt]]`` and position
    measurements with variance ``r``.

    Parameters
    ----------
    return_details : bool
        Also return a dict with filtered / smoothed covariances and the
        innovation sequence (shape ``(N, D)``).
    """
    t, x = _prepare(times, values, min_points=2)
    N, D = x.shape
    dts = np.diff(t)
    F = np.zeros((N - 1, 2, 2))
    F[:, 0, 0] = F[:, 1, 1] = 1.0
    F[:, 0, 1] = dts
    Q = q * np.stack(
        [np.stack([dts**3 / 3, dts**2 / 2], -1), np.stack([dts**2 / 2, dts], -1)], axis=-2
    )
    span = max(t[-1] - t[0], 1e-12)
    states = np.empty((N, D))
    derivs = np.empty((N, D))
    details = {"P_filt": np.empty((D, N, 2, 2)), "P_smooth": np.empty((D, N, 2, 2)), "innovations": np.empty((N, D))}
    for d in range(D):
        z = x[:, d]
        xs_f = np.empty((N, 2))
        Ps_f = np.empty((N, 2, 2))
        xs_p = np.empty((N, 2))
        Ps_p = np.empty((N, 2, 2))
        vel_var = max(np.var(z), 1.0) / span**2 * 1e6
        xs_p[0] = (z[0], 0.0)
        Ps_p[0] = np.diag([max(np.var(z), r) * 1e6, vel_var])
        for k in range(N):
            if k > 0:
                xs_p[k] = F[k - 1] @ xs_f[k - 1]
                Ps_p[k] = F[k - 1] @ Ps_f[k - 1] @ F[k - 1].T + Q[k - 1]
            innov = z[k] - xs_p[k, 0]
            S = Ps_p[k, 0, 0] + r
            K = Ps_p[k, :, 0] / S
            xs_f[k] = xs_p[k] + K * innov
            P = Ps_p[k] - np.outer(K, Ps_p[k, 0, :])
            Ps_f[k] = 0.5 * (P + P.T)
            details["innovations"][k, d] = innov
        xs_s = xs_f.copy()
        Ps_s = Ps_f.copy()
        for k in range(N - 2, -1, -1):
            C = Ps_f[k] @ F[k].T @ np.linalg.inv(Ps_p[k + 1])
            xs_s[k] = xs_f[k] + C @ (xs_s[k + 1] - xs_p[k + 1])
            P = Ps_f[k] + C @ (Ps_s[k + 1] - Ps_p[k + 1]) @ C.T
            Ps_s[k] = 0.5 * (P + P.T)
        states[:, d] = xs_s[:, 0]
        derivs[:, d] = xs_s[:, 1]
        details["P_filt"][d] = Ps_f
        details["P_smooth"][d] = Ps_s
    est = _on_query("kalman", t, states, derivs, query)
    return (est, details) if return_details else est


BASELINES = {
    "fd": finite_difference,
    "savgol": savitzky_golay,
    "spline": cubic_spline,
    "linear": linear_interp,
    "rbf": rbf_interp,
    "tvreg": tvregdiff_proxy,
    "kalman": kalman_rts,
}


def run_baseline(method, times, values, query=None):
    try:
        fn = BASELINES[method]
    except KeyError:
        raise InvalidInputError(f"unknown baseline {method!r}; choose from {sorted(BASELINES)}") from None
    return fn(times, values, query=query)
