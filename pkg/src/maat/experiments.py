"""Experiment harness: pipelines, aggregation, ablations and side studies.

Every function here is deterministic given its seed list.  Result rows are
plain dicts; :func:`write_rows` serialises them with 17 significant digits
so reruns produce byte-identical files.  Wall-clock times are kept out of
the result tables and returned separately.
"""

import csv
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import norm

from . import baselines
from .discovery import discover, rollout
from .dynamics import generate_dataset, get_system
from .errors import IntegrationBlowupError, InvalidInputError, MaatError
from .reconstruction import OptimizerConfig, PriorSpec, evaluate, fit

MAAT_METHODS = ("maat", "maat+nonneg", "maat+priors")
BASELINE_METHODS = ("fd", "savgol", "spline", "linear", "rbf", "tvreg", "kalman")
METHODS = MAAT_METHODS + BASELINE_METHODS
NEG_TOL = -1e-3
ROW_FIELDS = (
    "system", "noise", "method", "seed",
    "state_mse", "deriv_mse", "rollout_mse", "n_negative", "n_eval",
)


class PipelineError(MaatError):
    """A pipeline cell failed; the message carries (system, method, seed)."""


def prior_preset(system, kind):
    """Prior configuration for the MAAT variants.

    ``"nonneg"`` turns on the positivity hinge; ``"priors"`` adds, for
    conservative systems, a conservation penalty and the monotone
    constraints ``S' <= 0`` and ``R' >= 0`` when those compartments exist.
    """
    system = get_system(system)
    if kind == "plain":
        return PriorSpec()
    if kind == "nonneg":
        return PriorSpec(w_nonneg=1.0)
    if kind != "priors":
        raise InvalidInputError(f"unknown prior preset {kind!r}")
    names = system.state_names
    mono = []
    if "S" in names:
        mono.append((names.index("S"), -1))
    if "R" in names:
        mono.append((names.index("R"), +1))
    return PriorSpec(
        w_nonneg=1.0,
        w_conserve=1.0 if system.conserved else 0.0,
        monotone=tuple(mono),
        w_monotone=1.0 if mono else 0.0,
    )


def _method_priors(system, method):
    return prior_preset(system, {"maat": "plain", "maat+nonneg": "nonneg", "maat+priors": "priors"}[method])


def dense_state_series(dataset, split):
    """Per-state dense series for baselines, or ``None`` when H cannot be inverted."""
    H = dataset.operator.H
    if H.shape[0] < H.shape[1] or np.linalg.matrix_rank(H) < H.shape[1]:
        return None
    return np.linalg.lstsq(H, split.Y.T, rcond=None)[0].T


def reconstruct(dataset, method, split="test", optimizer=None):
    """States and derivatives of one split on its dense grid.

    Baselines see the dense signals mapped back to state space when the
    observation operator has full column rank; otherwise they only see the
    sparse snapshots and are evaluated on the dense grid.

    Returns
    -------
    states, derivs : ndarray, shape (N, D)
    model : KernelModel or None
    """
    sp = dataset.split(split)
    if method in MAAT_METHODS:
        priors = _method_priors(dataset.system, method)
        model = fit(dataset, priors=priors, config=optimizer, split=split)
        states, derivs = evaluate(model, sp.t)
        return states, derivs, model
    if method not in BASELINE_METHODS:
        raise InvalidInputError(f"unknown method {method!r}; choose from {METHODS}")
    dense = dense_state_series(dataset, sp)
    if dense is not None:
        est = baselines.run_baseline(method, sp.t, dense)
    else:
        t_obs, x_obs = sp.t_obs, sp.X_obs
        if method in ("savgol", "tvreg"):
            # SG needs a uniform grid: resample the snapshots linearly first
            grid = np.linspace(t_obs[0], t_obs[-1], t_obs.size)
            x_obs = np.column_stack([np.interp(grid, t_obs, x_obs[:, d]) for d in range(x_obs.shape[1])])
            t_obs = grid
        est = baselines.run_baseline(method, t_obs, x_obs, query=sp.t)
    return est.states, est.derivs, None


def _mse(a, b):
    return float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))


def run_pipeline(dataset, method, seed=None, with_discovery=True, optimizer=None):
    """Reconstruct, optionally discover, and score one (dataset, method) cell.

    The state and derivative MSEs compare the reconstruction of the test
    split with its ground truth.  With ``with_discovery`` the train and val
    splits are reconstructed, a degree-2 STLS model is fitted to their
    stacked estimates and rolled out from the test split's initial state;
    its trajectory MSE is ``rollout_mse``
    (``inf`` when the rollout diverges, ``nan`` when discovery is skipped).

    Returns
    -------
    row : dict
        Keys :data:`ROW_FIELDS`.
    timing : float
        Wall-clock seconds (kept out of ``row`` to keep tables reproducible).
    """
    seed = dataset.seed if seed is None else seed
    start = time.perf_counter()
    try:
        test = dataset.test
        states, derivs, _ = reconstruct(dataset, method, "test", optimizer)
        row = {
            "system": dataset.system,
            "noise": dataset.noise,
            "method": method,
            "seed": int(seed),
            "state_mse": _mse(states, test.X_true),
            "deriv_mse": _mse(derivs, test.dX_true),
            "rollout_mse": math.nan,
            "n_negative": int(np.sum(states < NEG_TOL)),
            "n_eval": int(states.size),
        }
        if with_discovery:
            tr_states, tr_derivs, _ = reconstruct(dataset, method, "train", optimizer)
            va_states, va_derivs, _ = reconstruct(dataset, method, "val", optimizer)
            model = discover(np.vstack([tr_states, va_states]), np.vstack([tr_derivs, va_derivs]),
                             dataset.state_names)
            dt = float(test.t[1] - test.t[0])
            try:
                traj = rollout(model, test.x0, test.t[0], dt, test.n - 1)
                row["rollout_mse"] = _mse(traj, test.X_true)
            except IntegrationBlowupError:
                row["rollout_mse"] = math.inf
    except MaatError as exc:
        raise PipelineError(f"({dataset.system}, {method}, seed={seed}): {exc}") from exc
    return row, time.perf_counter() - start


@dataclass(frozen=True)
class Cell:
    system: str
    noise: str
    method: str
    seed: int
    with_discovery: bool = False
    operator_kind: str = "identity"


def _run_cell(cell):
    ds = generate_dataset(cell.system, noise=cell.noise, seed=cell.seed, operator_kind=cell.operator_kind)
    return run_pipeline(ds, cell.method, cell.seed, with_discovery=cell.with_discovery)


def run_grid(cells, workers=1):
    """Run independent cells, optionally on a process pool.

    Rows come back in the order of ``cells`` regardless of completion order.
    """
    cells = list(cells)
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]
    rows = [r for r, _ in results]
    timings = [t for _, t in results]
    return rows, timings


def noise_matrix(systems=("seir",), noises=("isotropic-gaussian", "correlated-ar1", "student-t"),
                 methods=("maat", "spline"), seeds=range(10), with_discovery=False, workers=1):
    cells = [
        Cell(s, n, m, int(seed), with_discovery)
        for s in systems
        for n in noises
        for m in methods
        for seed in seeds
    ]
    return run_grid(cells, workers)


# ---------------------------------------------------------------------------
# aggregation


def geometric_summary(values, level=0.95):
    """Geometric mean with a normal-approximation CI on the log scale.

    Non-positive or non-finite values are dropped (with a warning).

    Returns
    -------
    dict
        ``count``, ``n_excluded``, ``geo_mean``, ``ci_low``, ``ci_high``.
        With a single value the interval collapses onto it; with none all
        three statistics are ``nan``.
    """
    v = np.asarray(list(values), dtype=float)
    good = np.isfinite(v) & (v > 0)
    excluded = int((~good).sum())
    if excluded:
        warnings.warn(f"{excluded} non-positive or non-finite value(s) excluded from geometric mean", stacklevel=2)
    logs = np.log(v[good])
    out = {"count": int(good.sum()), "n_excluded": excluded}
    if logs.size == 0:
        out.update(geo_mean=math.nan, ci_low=math.nan, ci_high=math.nan)
        return out
    mu = float(np.mean(logs))
    if np.ptp(logs) == 0.0:
        # identical values (or a single one): skip the rounding in mean/std
        mu, half = float(logs[0]), 0.0
    else:
        half = float(norm.ppf(0.5 + level / 2) * np.std(logs, ddof=1) / math.sqrt(logs.size))
    out.update(geo_mean=math.exp(mu), ci_low=math.exp(mu - half), ci_high=math.exp(mu + half))
    return out


def aggregate(rows, group_keys=("system", "noise", "method"), value="state_mse"):
    """Group rows and summarise ``value`` per group (groups in first-seen order)."""
    groups = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in group_keys), []).append(r[value])
    out = []
    for key, vals in groups.items():
        with warnings.catch_warnings():
            if value == "rollout_mse":
                # diverged rollouts are inf by design
                warnings.simplefilter("ignore")
            stats = geometric_summary(vals)
        out.append({**dict(zip(group_keys, key)), "metric": value, **stats})
    return out


def summary_table(rows, value="state_mse"):
    """Wide table: one row per (system, noise), one column per method."""
    agg = aggregate(rows, ("system", "noise", "method"), value)
    methods = list(dict.fromkeys(a["method"] for a in agg))
    table = {}
    for a in agg:
        table.setdefault((a["system"], a["noise"]), {})[a["method"]] = a["geo_mean"]
    return [{"system": s, "noise": n, **{m: cols.get(m, math.nan) for m in methods}} for (s, n), cols in table.items()]


def long_format(rows, metrics=("state_mse", "deriv_mse", "rollout_mse")):
    keys = [k for k in rows[0] if k not in metrics] if rows else []
    return [{**{k: r[k] for k in keys}, "metric": m, "value": r[m]} for r in rows for m in metrics if m in r]


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_rows(path, rows, fields=None):
    """Write dict rows as CSV with a header; floats use 17 significant digits."""
    rows = list(rows)
    if fields is None:
        fields = list(dict.fromkeys(k for r in rows for k in r))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r.get(f, "")) for f in fields])


def read_rows(path):
    """Read a table written by :func:`write_rows`; numeric-looking cells become numbers."""

    def conv(s):
        for cast in (int, float):
            try:
                return cast(s)
            except ValueError:
                pass
        return s

    with Path(path).open(newline="") as fh:
        return [{k: conv(v) for k, v in r.items()} for r in csv.DictReader(fh)]


# ---------------------------------------------------------------------------
# ablations


def _ablation(system, variants, seeds, noise, optimizer=None):
    rows = []
    for seed in seeds:
        ds = generate_dataset(system, noise=noise, seed=int(seed))
        test = ds.test
        for label, priors in variants:
            model = fit(ds, priors=priors, config=optimizer, split="test")
            states, _ = evaluate(model, test.t)
            rows.append({
                "system": ds.system,
                "noise": ds.noise,
                "variant": label,
                "seed": int(seed),
                "state_mse": _mse(states, test.X_true),
                "n_negative": int(np.sum(states < NEG_TOL)),
                "n_eval": int(states.size),
            })
    return rows


def _ablation_summary(rows, plain, constrained):
    out = []
    for system in dict.fromkeys(r["system"] for r in rows):
        sub = [r for r in rows if r["system"] == system]
        a = geometric_summary(r["state_mse"] for r in sub if r["variant"] == plain)
        b = geometric_summary(r["state_mse"] for r in sub if r["variant"] == constrained)
        out.append({
            "system": system,
            f"{plain}_mse": a["geo_mean"],
            f"{plain}_ci_low": a["ci_low"],
            f"{plain}_ci_high": a["ci_high"],
            f"{constrained}_mse": b["geo_mean"],
            f"{constrained}_ci_low": b["ci_low"],
            f"{constrained}_ci_high": b["ci_high"],
            "ratio": a["geo_mean"] / b["geo_mean"],
            f"{plain}_negative": sum(r["n_negative"] for r in sub if r["variant"] == plain),
            f"{constrained}_negative": sum(r["n_negative"] for r in sub if r["variant"] == constrained),
        })
    return out


def nonneg_ablation(systems=("seirh",), seeds=range(10), noise="isotropic-gaussian", optimizer=None):
    """Plain vs positivity-constrained MAAT on the test split.

    Returns
    -------
    rows, summary : list of dict
        Per-seed rows and a per-system side-by-side geometric-mean summary.
    """
    rows = []
    for s in systems:
        rows += _ablation(s, [("plain", prior_preset(s, "plain")), ("nonneg", prior_preset(s, "nonneg"))],
                          seeds, noise, optimizer)
    return rows, _ablation_summary(rows, "plain", "nonneg")


def priors_ablation(systems=("seir", "seirh"), seeds=range(10), noise="isotropic-gaussian", optimizer=None,
                    priors=None):
    """Plain vs structurally constrained MAAT (conservation, positivity, monotonicity)."""
    rows = []
    for s in systems:
        constrained = priors if priors is not None else prior_preset(s, "priors")
        rows += _ablation(s, [("plain", prior_preset(s, "plain")), ("priors", constrained)], seeds, noise, optimizer)
    return rows, _ablation_summary(rows, "plain", "priors")


# ---------------------------------------------------------------------------
# finite-difference noise floor


@dataclass(frozen=True)
class _ConstantSeries:
    t: np.ndarray
    Y: np.ndarray
    t_obs: np.ndarray
    X_obs: np.ndarray


def fd_noise_floor(sigma=0.1, dts=(0.1, 0.05, 0.02, 0.01), n_points=500, level=1.0, seed=0,
                   maat_dt=0.01, optimizer=None):
    """Derivative error of finite differences and MAAT on a noisy constant.

    For each step ``dt`` a constant ``level`` is sampled at ``n_points``
    times with i.i.d. Gaussian noise of std ``sigma``.  The finite-difference
    derivative MSE is compared with ``sigma^2 / (2 dt^2)``; a constant ``c``
    is fitted by least squares to ``mse = c * sigma^2 / dt^2``.  MAAT is
    fitted (identity operator, snapshots at the usual sparse indices) on the
    ``maat_dt`` series.

    Returns
    -------
    rows : list of dict
        One row per ``dt``.
    summary : dict
        ``c_fit`` and the MAAT / FD derivative MSEs at ``maat_dt``.
    """
    from .dynamics import snapshot_indices

    rng = np.random.default_rng(seed)
    rows = []
    maat_mse = math.nan
    fd_at = math.nan
    for dt, child in zip(dts, rng.spawn(len(dts))):
        t = dt * np.arange(n_points)
        y = level + sigma * child.standard_normal(n_points)
        est = baselines.finite_difference(t, y)
        fd_mse = float(np.mean(est.derivs**2))
        row = {
            "dt": float(dt),
            "sigma": float(sigma),
            "n_points": int(n_points),
            "fd_deriv_mse": fd_mse,
            "predicted": sigma**2 / (2 * dt**2),
            "maat_deriv_mse": math.nan,
        }
        if math.isclose(dt, maat_dt):
            idx = snapshot_indices(n_points)
            series = _ConstantSeries(t, y[:, None], t[idx], y[idx][:, None])
            model = fit(series, H=np.eye(1), config=optimizer)
            _, d = evaluate(model, t)
            maat_mse = float(np.mean(d**2))
            fd_at = fd_mse
            row["maat_deriv_mse"] = maat_mse
        rows.append(row)
    x = np.array([sigma**2 / r["dt"] ** 2 for r in rows])
    y = np.array([r["fd_deriv_mse"] for r in rows])
    c_fit = float(x @ y / (x @ x))
    return rows, {"c_fit": c_fit, "maat_deriv_mse": maat_mse, "fd_deriv_mse": fd_at, "maat_dt": float(maat_dt)}


# ---------------------------------------------------------------------------
# lasso sample complexity


def soft_threshold(x, thr):
    return np.sign(x) * np.maximum(np.abs(x) - thr, 0.0)


def lasso_ista(X, y, lam, w0=None, max_iter=5000, tol=1e-9):
    """Accelerated proximal gradient (FISTA) with backtracking.

    Minimises ``1/(2n)||Xw - y||^2 + lam ||w||_1``.  The step size starts at
    ``1/L`` with ``L`` doubled until the quadratic upper bound holds, and the
    momentum is reset whenever the objective increases.
    """
    n, p = X.shape
    w = np.zeros(p) if w0 is None else w0.copy()
    z, tk = w.copy(), 1.0
    L = 1.0
    XtX = X.T @ X / n
    Xty = X.T @ y / n
    yy = float(y @ y) / (2 * n)
    smooth = lambda v: 0.5 * float(v @ XtX @ v) - float(Xty @ v) + yy  # noqa: E731
    obj = lambda v: smooth(v) + lam * float(np.sum(np.abs(v)))  # noqa: E731
    prev = obj(w)
    for _ in range(max_iter):
        g = XtX @ z - Xty
        f = smooth(z)
        while True:
            w_new = soft_threshold(z - g / L, lam / L)
            diff = w_new - z
            if smooth(w_new) <= f + g @ diff + 0.5 * L * (diff @ diff) + 1e-15:
                break
            L *= 2.0
        cur = obj(w_new)
        step = np.max(np.abs(w_new - w))
        if cur > prev:
            # adaptive restart
            z, tk = w.copy(), 1.0
            continue
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
        z = w_new + ((tk - 1.0) / t_next) * (w_new - w)
        w, tk, prev = w_new, t_next, cur
        if step <= tol * max(1.0, np.max(np.abs(w))):
            break
    return w


LASSO_LAMBDA_FRACTIONS = (1.0, 0.3, 0.1, 0.03, 0.01, 3e-3, 1e-3, 3e-4, 1e-4)


def lasso_trial(p, n, sigma, sparsity, seed, n_val=50, n_test=1000, null_teacher=False):
    """One teacher-student lasso fit; returns the test MSE row."""
    rng = np.random.default_rng([int(seed), int(p), int(n), int(round(sigma * 1e6))])
    w_star = np.zeros(p)
    if not null_teacher:
        support = rng.choice(p, size=sparsity, replace=False)
        w_star[support] = rng.standard_normal(sparsity)
    scale = sigma * float(np.linalg.norm(w_star))

    def draw(m, noisy=True):
        X = rng.standard_normal((m, p))
        y = X @ w_star + (scale * rng.standard_normal(m) if noisy else 0.0)
        return X, y

    X, y = draw(n)
    Xv, yv = draw(n_val)
    Xt, yt = draw(n_test, noisy=False)
    lam_max = float(np.max(np.abs(X.T @ y)) / n)
    best = (math.inf, None, 0.0)
    w = np.zeros(p)
    if lam_max > 0:
        for frac in LASSO_LAMBDA_FRACTIONS:
            lam = frac * lam_max
            w = lasso_ista(X, y, lam, w0=w)
            err = float(np.mean((Xv @ w - yv) ** 2))
            if err < best[0]:
                best = (err, w.copy(), lam)
    w_hat = best[1] if best[1] is not None else np.zeros(p)
    return {
        "p": int(p),
        "n": int(n),
        "sigma": float(sigma),
        "seed": int(seed),
        "lambda": float(best[2]),
        "test_mse": float(np.mean((Xt @ w_hat - yt) ** 2)),
        "w_norm2": float(w_star @ w_star),
    }


def lasso_experiment(p_grid=(100,), n_grid=(50, 120, 200), sigma_grid=(0.0, 0.5), seeds=range(10), sparsity=5):
    """Test error of the validated lasso over a (p, n, sigma, seed) grid."""
    return [
        lasso_trial(p, n, s, sparsity, seed)
        for p in p_grid
        for n in n_grid
        for s in sigma_grid
        for seed in seeds
    ]


EXPERIMENTS = ("noise-matrix", "nonneg", "priors", "lasso", "fd-noise-floor")


def run_experiment(name, seeds=range(10), workers=1, with_discovery=False):
    """Dispatch a named experiment; returns ``{table_name: rows}``."""
    seeds = [int(s) for s in seeds]
    if name == "noise-matrix":
        rows, _ = noise_matrix(seeds=seeds, workers=workers, with_discovery=with_discovery,
                               methods=METHODS)
        return {
            "results": rows,
            "summary": summary_table(rows),
            "aggregate": aggregate(rows),
            "long": long_format(rows),
        }
    if name == "nonneg":
        rows, summary = nonneg_ablation(seeds=seeds)
        return {"results": rows, "summary": summary}
    if name == "priors":
        rows, summary = priors_ablation(seeds=seeds)
        return {"results": rows, "summary": summary}
    if name == "lasso":
        rows = lasso_experiment(seeds=seeds)
        summary = aggregate(rows, ("p", "n", "sigma"), "test_mse")
        return {"results": rows, "summary": summary}
    if name == "fd-noise-floor":
        rows, summary = fd_noise_floor(seed=seeds[0] if seeds else 0)
        return {"results": rows, "summary": [summary]}
    raise InvalidInputError(f"unknown experiment {name!r}; choose from {EXPERIMENTS}")


__all__ = [
    "METHODS", "ROW_FIELDS", "Cell", "PipelineError", "aggregate", "fd_noise_floor",
    "geometric_summary", "lasso_experiment", "lasso_ista", "lasso_trial", "long_format",
    "noise_matrix", "nonneg_ablation", "prior_preset", "priors_ablation", "read_rows",
    "reconstruct", "run_experiment", "run_grid", "run_pipeline", "summary_table", "write_rows",
]
