"""Knowledge-informed kernel state reconstruction.

Each state dimension ``d`` is expanded over a shared grid of centers,
``x_d(t) = sum_l U[l, d] k_d(t, t_l)``, with its own Gaussian length-scale.
The coefficient matrix ``U`` minimises a composite loss

    w_s / N_obs * ||K_obs U - X_obs||^2          snapshot fidelity
  + w_i / N     * ||K U H^T - Y||^2              dense-signal fidelity
  + gamma / N   * ||Kdot U - F(K U)||^2          derivative / prior-field penalty
  + lam         * ||U||^2                        coefficient ridge
  + w_nonneg / N   * ||min(K U, 0)||^2
  + w_conserve / N * sum_t (sum_d (K U)_td - total)^2
  + w_monotone / N * sum over (d, sign) of squared hinge(-sign * (Kdot U)_d)

minimised with Adam and early stopping on held-out observations of the
same trajectory.  All products with the per-dimension Gram matrices are
batched through a single ``(D, rows, M)`` tensor so one iteration costs one
forward and one backward batched matmul.
"""

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InvalidInputError, InvalidParameterError, NumericError
from .kernel import default_length_scale, gram_stack

DEFAULT_SWEEP_FACTORS = (0.25, 0.5, 1.0, 2.0, 4.0)
TIE_TOL = 1e-12


class ExtrapolationWarning(UserWarning):
    """Evaluation times fall outside the span of the kernel centers."""


@dataclass(frozen=True)
class LossWeights:
    """Data-fidelity and ridge weights."""

    w_s: float = 1.0
    w_i: float = 1.0
    lam: float = 1e-6

    def __post_init__(self):
        if min(self.w_s, self.w_i, self.lam) < 0:
            raise InvalidParameterError("loss weights must be non-negative")


@dataclass(frozen=True)
class PriorSpec:
    """Knowledge penalties.

    Attributes
    ----------
    gamma : float
        Weight on ``||x' - F(x)||^2``.  With ``prior_field=None`` the field is
        zero and this penalises derivative magnitude.
    prior_field : callable, optional
        ``F(X) -> X'`` applied row-wise to ``(N, D)`` state arrays.
    prior_jacobian : callable, optional
        ``J(X) -> (N, D, D)``.  Estimated by central differences of
        ``prior_field`` when omitted.
    w_nonneg : float
        Squared-hinge weight on negative states.
    w_conserve : float
        Weight on deviation of the state sum from ``total``.
    total : float, optional
        Conserved total; filled in from the data's initial condition by
        :func:`fit` when left as ``None``.
    monotone : tuple of (int, int)
        ``(dim, sign)`` pairs requiring ``sign * x_dim' >= 0``.
    w_monotone : float
    """

    gamma: float = 1e-3
    prior_field: object = None
    prior_jacobian: object = None
    w_nonneg: float = 0.0
    w_conserve: float = 0.0
    total: float = None
    monotone: tuple = ()
    w_monotone: float = 0.0

    def __post_init__(self):
        if min(self.gamma, self.w_nonneg, self.w_conserve, self.w_monotone) < 0:
            raise InvalidParameterError("prior weights must be non-negative")
        mono = tuple((int(d), int(s)) for d, s in self.monotone)
        if any(s not in (-1, 1) for _, s in mono):
            raise InvalidParameterError("monotone signs must be +1 or -1")
        object.__setattr__(self, "monotone", mono)

    def check_dimension(self, D):
        if any(d < 0 or d >= D for d, _ in self.monotone):
            raise InvalidParameterError(f"monotone dimension out of range for D={D}")


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1.0
    beta1: float = 0.99
    beta2: float = 0.999
    eps: float = 1e-8
    max_iter: int = 20_000
    patience: int = 2_000
    early_stopping: bool = True
    holdout_every: int = 5
    sweep_factors: tuple = DEFAULT_SWEEP_FACTORS
    sweep_steps: int = 200


@dataclass(frozen=True)
class KernelModel:
    """Fitted kernel expansion; ``coeffs`` has shape ``(len(centers), D)``."""

    length_scales: np.ndarray
    centers: np.ndarray
    coeffs: np.ndarray
    state_names: tuple = None
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        c = np.asarray(self.centers, dtype=float)
        U = np.asarray(self.coeffs, dtype=float)
        if U.shape != (c.size, ls.size):
            raise InvalidInputError(
                f"coeffs shape {U.shape} does not match ({c.size} centers, {ls.size} dims)"
            )
        if not np.all(np.isfinite(U)):
            raise NumericError("model coefficients are not finite")
        for name, arr in (("length_scales", ls), ("centers", c), ("coeffs", U)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dimension(self):
        return self.length_scales.size

    def __call__(self, times):
        return evaluate(self, times)


# ---------------------------------------------------------------------------
# problem assembly


def _observations(data):
    """Pull ``(t, Y, t_obs, X_obs)`` out of a split-like object."""
    try:
        t = np.asarray(data.t, dtype=float)
        Y = np.asarray(data.Y, dtype=float)
        t_obs = np.asarray(data.t_obs, dtype=float)
        X_obs = np.asarray(data.X_obs, dtype=float)
    except AttributeError as exc:
        raise InvalidInputError(f"observation container is missing {exc.name!r}") from None
    if Y.ndim == 1:
        Y = Y[:, None]
    if X_obs.ndim == 1:
        X_obs = X_obs[:, None]
    return t, Y, t_obs, X_obs


def _holdout_mask(n, every):
    mask = np.zeros(n, dtype=bool)
    if every:
        mask[every - 1 :: every] = True
    return mask


@dataclass
class KsrProblem:
    """Precomputed Gram tensors and targets for one trajectory.

    Rows of ``A`` (shape ``(D, rows, M)``) are laid out as
    ``[K on the dense grid | K at off-grid snapshot times | Kdot on the dense grid]``.
    """

    centers: np.ndarray
    sigmas: np.ndarray
    H: np.ndarray
    A: np.ndarray
    n_grid: int
    snap_rows: np.ndarray
    sig_fit: np.ndarray
    sig_val: np.ndarray
    snap_fit: np.ndarray
    snap_val: np.ndarray
    Y: np.ndarray
    X_obs: np.ndarray
    grid_t: np.ndarray
    extra_t: np.ndarray

    @property
    def D(self):
        return self.sigmas.size

    @property
    def M(self):
        return self.centers.size

    @property
    def has_validation(self):
        return bool(self.sig_val.any() or self.snap_val.any())

    def with_sigmas(self, sigmas):
        """Copy of the problem with new length-scales (Grams rebuilt)."""
        sigmas = np.atleast_1d(np.asarray(sigmas, dtype=float))
        A = _assemble(self.grid_t, self.extra_t, self.centers, sigmas)
        return replace(self, sigmas=sigmas, A=A)


def _assemble(grid_t, extra_t, centers, sigmas):
    eval_t = np.concatenate([grid_t, extra_t])
    K, _ = gram_stack(eval_t, centers, sigmas, derivative=False)
    _, Kdot = gram_stack(grid_t, centers, sigmas)
    return np.ascontiguousarray(np.concatenate([K, Kdot], axis=1))


def build_problem(data, H, length_scales, centers=None, holdout_every=5):
    """Assemble a :class:`KsrProblem` from a split-like observation container.

    Parameters
    ----------
    data
        Object with attributes ``t`` (dense grid), ``Y`` (dense signals),
        ``t_obs`` and ``X_obs`` (snapshots).
    H : ndarray or ObservationOperator
        ``(S, D)`` observation matrix.
    length_scales : array_like, shape (D,)
    centers : array_like, optional
        Kernel centers; defaults to the dense grid.
    holdout_every : int or None
        Every ``holdout_every``-th signal row and snapshot is held out for
        validation; ``None`` or ``0`` uses everything for fitting.
    """
    t, Y, t_obs, X_obs = _observations(data)
    H = np.atleast_2d(np.asarray(getattr(H, "H", H), dtype=float))
    D = H.shape[1]
    sigmas = np.atleast_1d(np.asarray(length_scales, dtype=float))
    if sigmas.size != D:
        raise InvalidInputError(f"{sigmas.size} length-scales for a {D}-dimensional state")
    if Y.shape != (t.size, H.shape[0]):
        raise InvalidInputError(f"signals have shape {Y.shape}, expected {(t.size, H.shape[0])}")
    if X_obs.shape != (t_obs.size, D):
        raise InvalidInputError(f"snapshots have shape {X_obs.shape}, expected {(t_obs.size, D)}")
    if t.size == 0:
        raise InvalidInputError("empty dense grid")
    centers = t if centers is None else np.asarray(centers, dtype=float)

    # snapshots that sit on the dense grid reuse its rows
    pos = np.searchsorted(t, t_obs)
    pos_c = np.clip(pos, 0, t.size - 1)
    on_grid = (pos < t.size) & (t[pos_c] == t_obs)
    extra_t = t_obs[~on_grid]
    snap_rows = np.empty(t_obs.size, dtype=int)
    snap_rows[on_grid] = pos_c[on_grid]
    snap_rows[~on_grid] = t.size + np.arange(extra_t.size)

    sig_val = _holdout_mask(t.size, holdout_every)
    snap_val = _holdout_mask(t_obs.size, holdout_every)
    problem = KsrProblem(
        centers=centers,
        sigmas=sigmas,
        H=H,
        A=_assemble(t, extra_t, centers, sigmas),
        n_grid=t.size,
        snap_rows=snap_rows,
        sig_fit=~sig_val,
        sig_val=sig_val,
        snap_fit=~snap_val,
        snap_val=snap_val,
        Y=Y,
        X_obs=X_obs,
        grid_t=t,
        extra_t=extra_t,
    )
    return problem


# ---------------------------------------------------------------------------
# loss and gradient


def _forward(problem, U):
    Z = np.matmul(problem.A, U.T[:, :, None])[:, :, 0].T  # (rows, D)
    n = problem.n_grid
    n_state = problem.A.shape[1] - n
    return Z[:n_state], Z[n_state:]


def _check(name, value):
    if not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite value in loss term {name!r}")


def _prior_jacobian(priors, X):
    if priors.prior_jacobian is not None:
        return np.asarray(priors.prior_jacobian(X), dtype=float)
    h = 1e-6 * np.maximum(1.0, np.abs(X))
    N, D = X.shape
    J = np.empty((N, D, D))
    for j in range(D):
        step = np.zeros_like(X)
        step[:, j] = h[:, j]
        J[:, :, j] = (priors.prior_field(X + step) - priors.prior_field(X - step)) / (2 * h[:, j : j + 1])
    return J


def _loss_and_grad(U, problem, weights, priors, want_grad=True):
    """Return ``(total, terms, grad, val_loss)``."""
    U = np.asarray(U, dtype=float)
    if U.shape != (problem.M, problem.D):
        raise InvalidInputError(f"U has shape {U.shape}, expected {(problem.M, problem.D)}")
    priors.check_dimension(problem.D)
    n = problem.n_grid
    Xs, Xd = _forward(problem, U)  # states on grid+extra rows, derivatives on grid
    Xg = Xs[:n]
    G_state = np.zeros_like(Xs) if want_grad else None
    G_deriv = np.zeros_like(Xd) if want_grad else None
    terms = {}

    # snapshot fidelity
    Xo = Xs[problem.snap_rows]
    r_obs = Xo - problem.X_obs
    fit, val = problem.snap_fit, problem.snap_val
    n_obs = int(fit.sum())
    if n_obs:
        terms["snapshot"] = weights.w_s / n_obs * float(np.sum(r_obs[fit] ** 2))
        if want_grad:
            np.add.at(G_state, problem.snap_rows[fit], 2 * weights.w_s / n_obs * r_obs[fit])
    else:
        terms["snapshot"] = 0.0
    val_loss = 0.0
    if val.any():
        val_loss += weights.w_s / int(val.sum()) * float(np.sum(r_obs[val] ** 2))

    # dense signal fidelity
    r_sig = Xg @ problem.H.T - problem.Y
    fit, val = problem.sig_fit, problem.sig_val
    n_sig = int(fit.sum())
    terms["signal"] = weights.w_i / n_sig * float(np.sum(r_sig[fit] ** 2))
    if want_grad:
        G_state[:n][fit] += (2 * weights.w_i / n_sig) * (r_sig[fit] @ problem.H)
    if val.any():
        val_loss += weights.w_i / int(val.sum()) * float(np.sum(r_sig[val] ** 2))

    # derivative / prior-field penalty
    if priors.gamma > 0:
        if priors.prior_field is None:
            r_dyn = Xd
        else:
            r_dyn = Xd - np.asarray(priors.prior_field(Xg), dtype=float)
        _check("prior_field", r_dyn)
        terms["dynamics"] = priors.gamma / n * float(np.sum(r_dyn**2))
        if want_grad:
            G_deriv += (2 * priors.gamma / n) * r_dyn
            if priors.prior_field is not None:
                J = _prior_jacobian(priors, Xg)
                G_state[:n] -= (2 * priors.gamma / n) * np.einsum("ni,nij->nj", r_dyn, J)
    else:
        terms["dynamics"] = 0.0

    terms["ridge"] = weights.lam * float(np.sum(U**2))

    if priors.w_nonneg > 0:
        neg = np.minimum(Xg, 0.0)
        terms["nonneg"] = priors.w_nonneg / n * float(np.sum(neg**2))
        if want_grad:
            G_state[:n] += (2 * priors.w_nonneg / n) * neg
    else:
        terms["nonneg"] = 0.0

    if priors.w_conserve > 0:
        if priors.total is None:
            raise ConfigurationError("conservation penalty needs a total")
        r_tot = Xg.sum(axis=1) - priors.total
        terms["conserve"] = priors.w_conserve / n * float(np.sum(r_tot**2))
        if want_grad:
            G_state[:n] += (2 * priors.w_conserve / n) * r_tot[:, None]
    else:
        terms["conserve"] = 0.0

    if priors.w_monotone > 0 and priors.monotone:
        total = 0.0
        for d, sign in priors.monotone:
            viol = np.maximum(-sign * Xd[:, d], 0.0)
            total += float(np.sum(viol**2))
            if want_grad:
                G_deriv[:, d] += (-2 * sign * priors.w_monotone / n) * viol
        terms["monotone"] = priors.w_monotone / n * total
    else:
        terms["monotone"] = 0.0

    for name, value in terms.items():
        _check(name, value)
    loss = float(sum(terms.values()))

    grad = None
    if want_grad:
        G = np.concatenate([G_state, G_deriv], axis=0)  # rows match problem.A
        grad = np.matmul(problem.A.transpose(0, 2, 1), G.T[:, :, None])[:, :, 0].T
        grad += 2 * weights.lam * U
        _check("gradient", grad)
    return loss, terms, grad, val_loss


def composite_loss(U, problem, weights=None, priors=None):
    """Value of the composite reconstruction loss at ``U``.

    Parameters
    ----------
    U : ndarray, shape (M, D)
    problem : KsrProblem
        From :func:`build_problem`; carries the Grams, targets and ``H``.
    weights : LossWeights, optional
    priors : PriorSpec, optional

    Raises
    ------
    InvalidInputError
        On a shape mismatch.
    NumericError
        If a term is not finite; the message names the term.
    """
    loss, _, _, _ = _loss_and_grad(U, problem, weights or LossWeights(), priors or PriorSpec(), want_grad=False)
    return loss


def loss_terms(U, problem, weights=None, priors=None):
    """Individual loss terms as a dict (``snapshot``, ``signal``, ``dynamics``, ...)."""
    _, terms, _, _ = _loss_and_grad(U, problem, weights or LossWeights(), priors or PriorSpec(), want_grad=False)
    return terms


def composite_loss_gradient(U, problem, weights=None, priors=None):
    """Exact gradient of :func:`composite_loss` with respect to ``U``.

    Hinge terms use the zero subgradient at their kinks.
    """
    _, _, grad, _ = _loss_and_grad(U, problem, weights or LossWeights(), priors or PriorSpec())
    return grad


def validation_loss(U, problem, weights=None):
    """Snapshot plus signal fidelity on the held-out rows (priors excluded)."""
    _, _, _, val = _loss_and_grad(U, problem, weights or LossWeights(), PriorSpec(gamma=0.0), want_grad=False)
    return val


# ---------------------------------------------------------------------------
# optimisation


def _adam(problem, weights, priors, config, steps, early_stopping, record=False):
    D, M = problem.D, problem.M
    U = np.zeros((M, D))
    m = np.zeros_like(U)
    v = np.zeros_like(U)
    b1, b2 = config.beta1, config.beta2
    use_val = early_stopping and problem.has_validation
    best_U, best_val, best_it = U.copy(), math.inf, 0
    history = [] if record else None
    it = 0
    for it in range(steps):
        try:
            loss, _, g, val = _loss_and_grad(U, problem, weights, priors)
        except NumericError as exc:
            raise NumericError(f"optimisation diverged at iteration {it}: {exc}") from exc
        if record:
            history.append((loss, val))
        if use_val:
            if val < best_val:
                best_val, best_U, best_it = val, U.copy(), it
            elif it - best_it >= config.patience:
                break
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** (it + 1))
        v_hat = v / (1 - b2 ** (it + 1))
        U = U - config.lr * m_hat / (np.sqrt(v_hat) + config.eps)
        if not np.all(np.isfinite(U)):
            raise NumericError(f"optimisation diverged at iteration {it}: non-finite coefficients")
    else:
        it = steps
        if use_val:
            _, _, _, val = _loss_and_grad(U, problem, weights, priors, want_grad=False)
            if val < best_val:
                best_val, best_U, best_it = val, U.copy(), it
    if not use_val:
        best_U, best_it = U, it
        best_val = _loss_and_grad(U, problem, weights, priors, want_grad=False)[3]
    info = {
        "iterations": int(it),
        "best_iteration": int(best_it),
        "val_loss": float(best_val),
        "stopped_early": bool(use_val and it < steps),
    }
    if record:
        info["history"] = np.array(history)
    return best_U, info


def _resolve_priors(priors, data, D):
    priors = priors or PriorSpec()
    priors.check_dimension(D)
    if priors.w_conserve > 0 and priors.total is None:
        x0 = getattr(data, "x0", None)
        if x0 is None:
            raise ConfigurationError("conservation prior needs `total` or data with an initial condition x0")
        priors = replace(priors, total=float(np.sum(x0)))
    return priors


def _unpack(data, H, split):
    if hasattr(data, "train") and hasattr(data, "operator"):
        H = data.operator if H is None else H
        names = data.state_names
        data = data.split(split)
    else:
        names = None
    if H is None:
        raise InvalidInputError("an observation operator is required")
    return data, H, names


def sweep_length_scales(data, H=None, weights=None, priors=None, factors=DEFAULT_SWEEP_FACTORS,
                        steps_per_candidate=200, config=None, split="train"):
    """Coordinate-wise multiplicative sweep of the per-dimension length-scales.

    Every length-scale starts at ``sqrt(Var(t))`` of the dense grid.  For each
    dimension in order, each factor is tried with the other dimensions held
    at their current values; the candidate is trained from zero for
    ``steps_per_candidate`` Adam steps and scored by the best held-out loss
    seen during those steps (the same criterion :func:`fit` uses to pick its
    returned iterate).  Ties within ``1e-12`` go to the factor closest to 1.

    Returns
    -------
    ndarray, shape (D,)
    """
    data, H, _ = _unpack(data, H, split)
    config = config or OptimizerConfig()
    weights = weights or LossWeights()
    Hm = np.atleast_2d(np.asarray(getattr(H, "H", H), dtype=float))
    D = Hm.shape[1]
    priors = _resolve_priors(priors, data, D)
    factors = tuple(float(f) for f in factors)
    if not factors or min(factors) <= 0:
        raise InvalidParameterError("factors must be positive")
    base = default_length_scale(np.asarray(data.t, dtype=float))
    sigmas = np.full(D, base)
    if len(factors) == 1:
        return sigmas * factors[0] if factors[0] != 1.0 else sigmas
    problem = build_problem(data, Hm, sigmas, holdout_every=config.holdout_every)
    if not problem.has_validation:
        raise ConfigurationError("length-scale sweep needs held-out observations (holdout_every > 0)")
    cache = {}
    for d in range(D):
        scores = []
        for f in factors:
            trial = sigmas.copy()
            trial[d] = base * f
            key = tuple(trial)
            if key not in cache:
                p = problem.with_sigmas(trial)
                U, _ = _adam(p, weights, priors, config, steps_per_candidate, early_stopping=True)
                cache[key] = validation_loss(U, p, weights)
            scores.append(cache[key])
        best = min(scores)
        tied = [f for f, s in zip(factors, scores) if s - best <= TIE_TOL]
        chosen = min(tied, key=lambda f: (abs(f - 1.0), f))
        sigmas[d] = base * chosen
    return sigmas


def fit(data, H=None, weights=None, priors=None, config=None, length_scales=None, split="train"):
    """Fit a :class:`KernelModel` to one trajectory's observations.

    Parameters
    ----------
    data : TimeSeriesDataset or split-like
        A dataset (``split`` selects the trajectory) or any object with
        ``t``, ``Y``, ``t_obs``, ``X_obs`` attributes.
    H : ObservationOperator or ndarray, optional
        Defaults to the dataset's operator.
    weights, priors : LossWeights, PriorSpec
    config : OptimizerConfig
    length_scales : array_like, optional
        Skip the sweep and use these.

    Returns
    -------
    KernelModel
        Coefficients with the best validation loss seen (the final iterate
        when early stopping is off or nothing is held out).

    Raises
    ------
    NumericError
        If the loss becomes non-finite; the message carries the iteration.
    """
    data, H, names = _unpack(data, H, split)
    config = config or OptimizerConfig()
    weights = weights or LossWeights()
    Hm = np.atleast_2d(np.asarray(getattr(H, "H", H), dtype=float))
    priors = _resolve_priors(priors, data, Hm.shape[1])
    if length_scales is None:
        length_scales = sweep_length_scales(
            data, Hm, weights, priors, config.sweep_factors, config.sweep_steps, config
        )
    problem = build_problem(data, Hm, length_scales, holdout_every=config.holdout_every)
    U, info = _adam(problem, weights, priors, config, config.max_iter, config.early_stopping)
    return KernelModel(problem.sigmas, problem.centers, U, state_names=names, info=info)


def evaluate(model, times):
    """States and time derivatives of ``model`` at ``times``.

    Returns
    -------
    states, derivs : ndarray, shape (len(times), D)
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    lo, hi = model.centers.min(), model.centers.max()
    if times.size and (times.min() < lo or times.max() > hi):
        warnings.warn("evaluating outside the span of the kernel centers", ExtrapolationWarning, stacklevel=2)
    K, Kdot = gram_stack(times, model.centers, model.length_scales)
    U = model.coeffs.T[:, :, None]
    states = np.matmul(K, U)[:, :, 0].T
    derivs = np.matmul(Kdot, U)[:, :, 0].T
    return states, derivs


# ---------------------------------------------------------------------------
# calibration bounds


def lemma1_bounds(x_true, x_hat, H, weights=None):
    """Sandwich ``||e||^2 <= ||e||^2 + ||H e||^2 <= (1 + ||H||^2) ||e||^2``.

    ``e = x_true - x_hat`` is sampled on a grid with rows as time points; the
    L2 norms use quadrature ``weights`` (uniform unit weights by default).

    Returns
    -------
    (lower, risk, upper) : tuple of float
    """
    x_true = np.asarray(x_true, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if x_true.shape != x_hat.shape:
        raise InvalidInputError(f"trajectory shapes differ: {x_true.shape} vs {x_hat.shape}")
    if x_true.ndim == 1:
        x_true, x_hat = x_true[:, None], x_hat[:, None]
    Hm = np.atleast_2d(np.asarray(getattr(H, "H", H), dtype=float))
    if Hm.shape[1] != x_true.shape[1]:
        raise InvalidInputError("H columns must match the state dimension")
    w = np.ones(x_true.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    e = x_true - x_hat
    lower = float(np.sum(w * np.sum(e**2, axis=1)))
    observed = float(np.sum(w * np.sum((e @ Hm.T) ** 2, axis=1)))
    op_norm = float(np.linalg.norm(Hm, 2))
    risk = lower + observed
    upper = (1.0 + op_norm**2) * lower
    # the upper bound is attained when e lies in the top singular direction of
    # H; there a few ulps of rounding can put the computed risk above it
    if risk > upper and risk - upper <= 64 * np.finfo(float).eps * risk:
        upper = risk
    return lower, risk, upper


# ---------------------------------------------------------------------------
# serialisation


def _num(x):
    return "%.17g" % x


def model_to_text(model):
    """Self-describing JSON text; floats carry 17 significant digits."""

    def arr(a):
        a = np.asarray(a)
        if a.ndim == 1:
            return "[" + ", ".join(_num(v) for v in a) + "]"
        return "[\n    " + ",\n    ".join(arr(row) for row in a) + "\n  ]"

    names = json.dumps(list(model.state_names) if model.state_names else None)
    return (
        "{\n"
        '  "format": "maat-kernel-model/1",\n'
        '  "kernel": "gaussian-rbf",\n'
        f'  "state_names": {names},\n'
        f'  "length_scales": {arr(model.length_scales)},\n'
        f'  "centers": {arr(model.centers)},\n'
        f'  "coeffs": {arr(model.coeffs)}\n'
        "}\n"
    )


def model_from_text(text):
    doc = json.loads(text)
    if doc.get("format") != "maat-kernel-model/1":
        raise InvalidInputError("not a maat kernel model document")
    names = doc.get("state_names")
    return KernelModel(
        np.array(doc["length_scales"], dtype=float),
        np.array(doc["centers"], dtype=float),
        np.array(doc["coeffs"], dtype=float).reshape(len(doc["centers"]), -1),
        state_names=tuple(names) if names else None,
    )


def save_model(model, path):
    Path(path).write_text(model_to_text(model))


def load_model(path):
    return model_from_text(Path(path).read_text())
