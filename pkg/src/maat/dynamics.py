"""Ground-truth trajectories and synthetic observation datasets.

The shipped systems (SEIR, SEIRH, viral dynamics, two-species predator-prey)
all have right-hand sides that are polynomials of degree two, which makes
them useful for exact-recovery checks of the sparse regression back-end.

A dataset bundles three independent trajectories (train / val / test), each
started from a freshly jittered initial condition, observed through a dense
linear operator ``Y = X H^T + noise`` and through a handful of full-state
snapshots taken at evenly spaced grid indices.
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    IntegrationBlowupError,
    InvalidInputError,
    InvalidParameterError,
)

FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# vector fields
#
# Every field accepts states of shape (..., D) and returns the same shape, so
# it can be applied row-wise to whole trajectories.  Jacobians return
# (..., D, D) with J[..., i, j] = d f_i / d x_j.


def seir_field(state, params):
    """SEIR right-hand side with mass-action incidence ``beta S I / N``."""
    x = np.asarray(state, dtype=float)
    S, E, I, _ = np.moveaxis(x, -1, 0)
    beta, sigma, gamma, N = params["beta"], params["sigma"], params["gamma"], params["N"]
    infection = beta * S * I / N
    return np.stack(
        [-infection, infection - sigma * E, sigma * E - gamma * I, gamma * I], axis=-1
    )


def seir_jacobian(state, params):
    x = np.asarray(state, dtype=float)
    S, _, I, _ = np.moveaxis(x, -1, 0)
    beta, sigma, gamma, N = params["beta"], params["sigma"], params["gamma"], params["N"]
    J = np.zeros(x.shape + (4,))
    dS, dI = beta * I / N, beta * S / N
    J[..., 0, 0], J[..., 0, 2] = -dS, -dI
    J[..., 1, 0], J[..., 1, 1], J[..., 1, 2] = dS, -sigma, dI
    J[..., 2, 1], J[..., 2, 2] = sigma, -gamma
    J[..., 3, 2] = gamma
    return J


def seirh_field(state, params):
    """SEIR extended with a hospitalised compartment ``H``.

    State order is ``(S, E, I, H, R)``.
    """
    x = np.asarray(state, dtype=float)
    S, E, I, H, _ = np.moveaxis(x, -1, 0)
    p = params
    infection = p["beta"] * S * I / p["N"]
    return np.stack(
        [
            -infection,
            infection - p["sigma"] * E,
            p["sigma"] * E - (p["gamma"] + p["delta"]) * I,
            p["delta"] * I - p["gamma_h"] * H,
            p["gamma"] * I + p["gamma_h"] * H,
        ],
        axis=-1,
    )


def seirh_jacobian(state, params):
    x = np.asarray(state, dtype=float)
    S, _, I, _, _ = np.moveaxis(x, -1, 0)
    p = params
    J = np.zeros(x.shape + (5,))
    dS, dI = p["beta"] * I / p["N"], p["beta"] * S / p["N"]
    J[..., 0, 0], J[..., 0, 2] = -dS, -dI
    J[..., 1, 0], J[..., 1, 1], J[..., 1, 2] = dS, -p["sigma"], dI
    J[..., 2, 1], J[..., 2, 2] = p["sigma"], -(p["gamma"] + p["delta"])
    J[..., 3, 2], J[..., 3, 3] = p["delta"], -p["gamma_h"]
    J[..., 4, 2], J[..., 4, 3] = p["gamma"], p["gamma_h"]
    return J


def viral_field(state, params):
    """Target-cell limited viral dynamics, state ``(T, E, I, V)``."""
    x = np.asarray(state, dtype=float)
    T, E, I, V = np.moveaxis(x, -1, 0)
    p = params
    infection = p["beta"] * T * V
    return np.stack(
        [
            -infection,
            infection - p["k"] * E,
            p["k"] * E - p["delta"] * I,
            p["p"] * I - p["c"] * V,
        ],
        axis=-1,
    )


def viral_jacobian(state, params):
    x = np.asarray(state, dtype=float)
    T, _, _, V = np.moveaxis(x, -1, 0)
    p = params
    J = np.zeros(x.shape + (4,))
    dT, dV = p["beta"] * V, p["beta"] * T
    J[..., 0, 0], J[..., 0, 3] = -dT, -dV
    J[..., 1, 0], J[..., 1, 1], J[..., 1, 3] = dT, -p["k"], dV
    J[..., 2, 1], J[..., 2, 2] = p["k"], -p["delta"]
    J[..., 3, 2], J[..., 3, 3] = p["p"], -p["c"]
    return J


def predator_prey_field(state, params):
    """Two-species Lotka-Volterra, state ``(prey, predator)``."""
    x = np.asarray(state, dtype=float)
    u, v = np.moveaxis(x, -1, 0)
    p = params
    return np.stack([p["a"] * u - p["b"] * u * v, -p["c"] * v + p["d"] * u * v], axis=-1)


def predator_prey_jacobian(state, params):
    x = np.asarray(state, dtype=float)
    u, v = np.moveaxis(x, -1, 0)
    p = params
    J = np.zeros(x.shape + (2,))
    J[..., 0, 0], J[..., 0, 1] = p["a"] - p["b"] * v, -p["b"] * u
    J[..., 1, 0], J[..., 1, 1] = p["d"] * v, -p["c"] + p["d"] * u
    return J


# Polynomial right-hand sides written as {equation: {exponent tuple: coefficient}};
# used to print ground truth and to check sparse recovery.


def _mono(D, *idx):
    e = [0] * D
    for i in idx:
        e[i] += 1
    return tuple(e)


def _seir_terms(p):
    m = lambda *i: _mono(4, *i)  # noqa: E731
    b = p["beta"] / p["N"]
    return [
        {m(0, 2): -b},
        {m(0, 2): b, m(1): -p["sigma"]},
        {m(1): p["sigma"], m(2): -p["gamma"]},
        {m(2): p["gamma"]},
    ]


def _seirh_terms(p):
    m = lambda *i: _mono(5, *i)  # noqa: E731
    b = p["beta"] / p["N"]
    return [
        {m(0, 2): -b},
        {m(0, 2): b, m(1): -p["sigma"]},
        {m(1): p["sigma"], m(2): -(p["gamma"] + p["delta"])},
        {m(2): p["delta"], m(3): -p["gamma_h"]},
        {m(2): p["gamma"], m(3): p["gamma_h"]},
    ]


def _viral_terms(p):
    m = lambda *i: _mono(4, *i)  # noqa: E731
    return [
        {m(0, 3): -p["beta"]},
        {m(0, 3): p["beta"], m(1): -p["k"]},
        {m(1): p["k"], m(2): -p["delta"]},
        {m(2): p["p"], m(3): -p["c"]},
    ]


def _predator_prey_terms(p):
    m = lambda *i: _mono(2, *i)  # noqa: E731
    return [
        {m(0): p["a"], m(0, 1): -p["b"]},
        {m(1): -p["c"], m(0, 1): p["d"]},
    ]


@dataclass(frozen=True)
class OdeSystem:
    """An autonomous ODE ``x' = f(x)`` together with its nominal setup.

    Attributes
    ----------
    name : str
    state_names : tuple of str
    params : dict
        Nominal parameters.
    x0 : ndarray
        Nominal initial state.
    dt : float
        Default integration / sampling step.
    conserved : bool
        True when ``sum(f(x)) == 0`` identically, so the state total is a
        first integral.
    fixed_params : tuple of str
        Parameters excluded from multiplicative jitter.
    """

    name: str
    state_names: tuple
    field_fn: object
    jacobian_fn: object
    terms_fn: object
    params: dict
    x0: np.ndarray
    dt: float
    conserved: bool = False
    fixed_params: tuple = ()

    @property
    def dimension(self):
        return len(self.state_names)

    def field(self, state, params=None):
        return self.field_fn(state, self.params if params is None else params)

    def jacobian(self, state, params=None):
        return self.jacobian_fn(state, self.params if params is None else params)

    def terms(self, params=None):
        """Ground-truth monomial expansion of the right-hand side."""
        return self.terms_fn(self.params if params is None else params)

    def conserved_total(self, x0):
        """Sum of ``x0`` for conservative systems, else ``None``."""
        return float(np.sum(x0)) if self.conserved else None


SEIR = OdeSystem(
    name="seir",
    state_names=("S", "E", "I", "R"),
    field_fn=seir_field,
    jacobian_fn=seir_jacobian,
    terms_fn=_seir_terms,
    params={"beta": 0.3, "sigma": 0.2, "gamma": 0.1, "N": 1.0},
    x0=np.array([0.99, 0.005, 0.005, 0.0]),
    dt=0.2,
    conserved=True,
    fixed_params=("N",),
)

SEIRH = OdeSystem(
    name="seirh",
    state_names=("S", "E", "I", "H", "R"),
    field_fn=seirh_field,
    jacobian_fn=seirh_jacobian,
    terms_fn=_seirh_terms,
    params={"beta": 0.5, "sigma": 0.25, "gamma": 0.15, "delta": 0.12, "gamma_h": 0.2, "N": 1.0},
    x0=np.array([0.99, 0.005, 0.005, 0.0, 0.0]),
    dt=0.2,
    conserved=True,
    fixed_params=("N",),
)

VIRAL = OdeSystem(
    name="viral",
    state_names=("T", "E", "I", "V"),
    field_fn=viral_field,
    jacobian_fn=viral_jacobian,
    terms_fn=_viral_terms,
    params={"beta": 1.0, "k": 0.5, "delta": 0.4, "p": 1.0, "c": 0.6},
    x0=np.array([1.0, 0.0, 0.0, 0.01]),
    dt=0.2,
)

PREDATOR_PREY = OdeSystem(
    name="predator_prey",
    state_names=("u", "v"),
    field_fn=predator_prey_field,
    jacobian_fn=predator_prey_jacobian,
    terms_fn=_predator_prey_terms,
    params={"a": 1.0, "b": 0.5, "c": 1.0, "d": 0.25},
    x0=np.array([2.0, 1.0]),
    dt=0.05,
)

SYSTEMS = {s.name: s for s in (SEIR, SEIRH, VIRAL, PREDATOR_PREY)}


def get_system(system):
    """Look a system up by name; :class:`OdeSystem` instances pass through."""
    if isinstance(system, OdeSystem):
        return system
    try:
        return SYSTEMS[str(system).lower().replace("-", "_")]
    except KeyError:
        raise ConfigurationError(
            f"unknown system {system!r}; choose from {sorted(SYSTEMS)}"
        ) from None


# ---------------------------------------------------------------------------
# integration


def rk4_integrate(system, x0, t0, dt, steps, params=None):
    """Classical fixed-step fourth-order Runge-Kutta.

    Parameters
    ----------
    system : OdeSystem or callable
        Either a shipped system (evaluated at ``params``, default nominal) or
        a callable ``f(x) -> x'``.
    x0 : array_like, shape (D,)
    t0 : float
        Start time; the field is autonomous so it only labels rows.
    dt : float
        Positive step.
    steps : int
        Number of steps; the result has ``steps + 1`` rows.

    Returns
    -------
    ndarray, shape (steps + 1, D)
        Row ``k`` is the state at ``t0 + k * dt``.

    Raises
    ------
    IntegrationBlowupError
        If a non-finite state is produced.
    """
    if not dt > 0:
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    steps = int(steps)
    if steps < 0:
        raise InvalidParameterError("steps must be non-negative")
    if isinstance(system, OdeSystem):
        p = system.params if params is None else params
        f = lambda x: system.field_fn(x, p)  # noqa: E731
    else:
        f = system
    x = np.array(x0, dtype=float)
    out = np.empty((steps + 1, x.size))
    out[0] = x
    half = 0.5 * dt
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, steps + 1):
            k1 = f(x)
            k2 = f(x + half * k1)
            k3 = f(x + half * k2)
            k4 = f(x + dt * k3)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(x)):
                raise IntegrationBlowupError(
                    f"non-finite state at step {k} (t={t0 + k * dt:g})", step=k
                )
            out[k] = x
    return out


# ---------------------------------------------------------------------------
# observation operators


@dataclass(frozen=True)
class ObservationOperator:
    """Linear sensor map ``y = H x`` with one label per output channel."""

    H: np.ndarray
    labels: tuple

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        if H.ndim != 2 or H.shape[0] < 1:
            raise InvalidInputError("H must be a non-empty 2-D matrix")
        if np.any(np.all(H == 0, axis=1)):
            raise InvalidInputError("H has an all-zero row")
        if len(self.labels) != H.shape[0]:
            raise InvalidInputError("need one label per row of H")
        H.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n_channels(self):
        return self.H.shape[0]

    @property
    def dimension(self):
        return self.H.shape[1]

    def apply(self, X):
        return np.asarray(X, dtype=float) @ self.H.T

    def is_selection(self):
        """True when every row picks exactly one state with unit weight."""
        return bool(np.all(np.sum(self.H != 0, axis=1) == 1) and np.all(self.H[self.H != 0] == 1))

    def norm(self):
        return float(np.linalg.norm(self.H, 2))


def make_observation_operator(kind, D, dims=None, matrix=None, names=None):
    """Build an :class:`ObservationOperator`.

    ``kind`` is one of ``"identity"``, ``"select"`` (needs ``dims``),
    ``"sum-all"`` or ``"mixing"`` (needs ``matrix``).
    """
    D = int(D)
    names = tuple(names) if names is not None else tuple(f"x{i + 1}" for i in range(D))
    kind = kind.replace("_", "-")
    if kind == "identity":
        return ObservationOperator(np.eye(D), names)
    if kind == "select":
        if dims is None or len(dims) == 0:
            raise InvalidInputError("select needs a non-empty list of dims")
        dims = [int(d) for d in dims]
        if any(d < 0 or d >= D for d in dims) or len(set(dims)) != len(dims):
            raise InvalidInputError(f"invalid dims {dims} for D={D}")
        return ObservationOperator(np.eye(D)[dims], tuple(names[d] for d in dims))
    if kind == "sum-all":
        return ObservationOperator(np.ones((1, D)), ("+".join(names),))
    if kind == "mixing":
        if matrix is None:
            raise InvalidInputError("mixing needs a matrix")
        H = np.atleast_2d(np.asarray(matrix, dtype=float))
        if H.shape[1] != D:
            raise InvalidInputError(f"mixing matrix has {H.shape[1]} columns, expected {D}")
        return ObservationOperator(H, tuple(f"y{i + 1}" for i in range(H.shape[0])))
    raise ConfigurationError(f"unknown operator kind {kind!r}")


# ---------------------------------------------------------------------------
# noise

NOISE_KINDS = ("isotropic-gaussian", "correlated-ar1", "student-t")
_NOISE_ALIASES = {
    "gaussian": "isotropic-gaussian",
    "isotropic": "isotropic-gaussian",
    "ar1": "correlated-ar1",
    "correlated": "correlated-ar1",
    "student": "student-t",
    "t": "student-t",
}


def canonical_noise_kind(kind):
    kind = str(kind).lower().replace("_", "-")
    kind = _NOISE_ALIASES.get(kind, kind)
    if kind not in NOISE_KINDS:
        raise ConfigurationError(f"unknown noise kind {kind!r}; choose from {NOISE_KINDS}")
    return kind


@dataclass(frozen=True)
class NoiseModel:
    """Additive measurement noise.

    ``scale`` is the marginal standard deviation; it may be a scalar or one
    value per channel.  ``None`` means "use the 5%-of-mean-amplitude rule",
    resolved by :func:`noise_scale_rule` when a dataset is generated.
    """

    kind: str = "isotropic-gaussian"
    scale: object = None
    ar1_alpha: float = 0.8
    student_nu: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_noise_kind(self.kind))
        if self.scale is not None and np.any(np.asarray(self.scale) < 0):
            raise InvalidParameterError("noise scale must be non-negative")
        if not 0 <= self.ar1_alpha < 1:
            raise InvalidParameterError("ar1_alpha must lie in [0, 1)")
        if not self.student_nu > 2:
            raise InvalidParameterError("student_nu must exceed 2 for finite variance")


def noise_scale_rule(clean, fraction=0.05):
    """Per-channel noise std ``fraction * mean|clean|``."""
    return fraction * np.mean(np.abs(np.asarray(clean, dtype=float)), axis=0)


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def apply_noise(clean, model, rng_seed):
    """Add noise drawn from ``model`` to an ``(N, S)`` array.

    Isotropic noise is i.i.d. normal; AR(1) noise runs independently along
    the rows of each column with stationary std equal to ``scale``; Student-t
    draws are rescaled to variance ``scale**2``.
    """
    clean = np.asarray(clean, dtype=float)
    squeeze = clean.ndim == 1
    X = clean[:, None] if squeeze else clean
    scale = 0.0 if model.scale is None else model.scale
    scale = np.broadcast_to(np.asarray(scale, dtype=float), (X.shape[1],))
    rng = _rng(rng_seed)
    n = X.shape[0]
    if model.kind == "isotropic-gaussian":
        eps = rng.standard_normal(X.shape)
    elif model.kind == "correlated-ar1":
        a = model.ar1_alpha
        eta = rng.standard_normal(X.shape)
        eps = np.empty(X.shape)
        eps[0] = eta[0]
        innov = np.sqrt(1.0 - a * a)
        for i in range(1, n):
            eps[i] = a * eps[i - 1] + innov * eta[i]
    else:
        nu = model.student_nu
        eps = rng.standard_t(nu, size=X.shape) * np.sqrt((nu - 2.0) / nu)
    out = X + eps * scale[None, :]
    return out[:, 0] if squeeze else out


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class DatasetConfig:
    """Knobs for :func:`generate_dataset`.

    ``None`` for ``dt`` / ``operator_kind`` falls back to the system default.
    ``noise_scale=None`` applies the 5%-of-mean-amplitude rule per channel;
    ``noise_scale=0`` yields noiseless data.
    """

    dt: float = None
    n_train: int = 500
    n_val: int = 200
    n_test: int = 200
    noise: str = "isotropic-gaussian"
    noise_scale: float = None
    noise_fraction: float = 0.05
    operator_kind: str = "identity"
    operator_dims: tuple = None
    operator_matrix: tuple = None
    seed: int = 0
    param_jitter: float = 0.05
    ic_jitter: float = 0.10
    snapshot_noise: bool = True
    t0: float = 0.0


@dataclass(frozen=True)
class Split:
    """One trajectory with its dense signals, sparse snapshots and truth."""

    t: np.ndarray
    Y: np.ndarray
    snapshot_idx: np.ndarray
    X_obs: np.ndarray
    X_true: np.ndarray
    dX_true: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.t) <= 0):
            raise InvalidInputError("time grid must be strictly increasing")
        if self.Y.shape[0] != self.t.size or self.X_true.shape[0] != self.t.size:
            raise InvalidInputError("Y / X_true rows must match the time grid")
        if self.X_obs.shape[0] != self.snapshot_idx.size:
            raise InvalidInputError("X_obs rows must match snapshot count")
        for arr in (self.t, self.Y, self.snapshot_idx, self.X_obs, self.X_true, self.dX_true, self.x0):
            arr.setflags(write=False)

    @property
    def t_obs(self):
        return self.t[self.snapshot_idx]

    @property
    def n(self):
        return self.t.size


@dataclass(frozen=True)
class TimeSeriesDataset:
    system: str
    state_names: tuple
    operator: ObservationOperator
    train: Split
    val: Split
    test: Split
    params: dict
    seed: int
    noise: str
    config: DatasetConfig = field(default_factory=DatasetConfig)

    def split(self, name):
        if name not in ("train", "val", "test"):
            raise InvalidInputError(f"unknown split {name!r}")
        return getattr(self, name)

    @property
    def dimension(self):
        return len(self.state_names)

    def get_system(self):
        return get_system(self.system)

    def conserved_total(self, split="train"):
        return get_system(self.system).conserved_total(self.split(split).x0)


def snapshot_count(n):
    """``round(1.5 * sqrt(n))`` with halves rounded up."""
    return int(np.floor(1.5 * np.sqrt(n) + 0.5))


def snapshot_indices(n):
    count = min(snapshot_count(n), n)
    return np.unique(np.round(np.linspace(0, n - 1, count)).astype(int))


def _jitter_params(system, rng, jitter):
    params = {}
    for name in sorted(system.params):
        value = system.params[name]
        factor = rng.uniform(1.0 - jitter, 1.0 + jitter)
        params[name] = value if name in system.fixed_params else value * factor
    return params


def _make_split(system, params, operator, config, n, rng, noise_kind):
    x0 = system.x0 * rng.uniform(1.0 - config.ic_jitter, 1.0 + config.ic_jitter, size=system.dimension)
    x0 = np.clip(x0, 0.0, None)
    dt = config.dt if config.dt is not None else system.dt
    X = rk4_integrate(system, x0, config.t0, dt, n - 1, params=params)
    t = config.t0 + dt * np.arange(n)
    clean_Y = operator.apply(X)
    idx = snapshot_indices(n)
    clean_obs = X[idx]
    if config.noise_scale is None:
        sig_scale = noise_scale_rule(clean_Y, config.noise_fraction)
        obs_scale = noise_scale_rule(X, config.noise_fraction)
    else:
        sig_scale = obs_scale = config.noise_scale
    sig_seed, obs_seed = rng.spawn(2)
    Y = apply_noise(clean_Y, NoiseModel(noise_kind, sig_scale), sig_seed)
    if config.snapshot_noise:
        X_obs = apply_noise(clean_obs, NoiseModel(noise_kind, obs_scale), obs_seed)
    else:
        X_obs = clean_obs.copy()
    return Split(
        t=t,
        Y=Y,
        snapshot_idx=idx,
        X_obs=X_obs,
        X_true=X,
        dX_true=system.field(X, params),
        x0=x0,
    )


def _operator_for(system, config):
    return make_observation_operator(
        config.operator_kind,
        system.dimension,
        dims=config.operator_dims,
        matrix=config.operator_matrix,
        names=system.state_names,
    )


def generate_dataset(system, config=None, **overrides):
    """Simulate train / val / test trajectories and their observations.

    Parameters
    ----------
    system : str or OdeSystem
    config : DatasetConfig, optional
    **overrides
        Field overrides applied on top of ``config``.

    Returns
    -------
    TimeSeriesDataset
        Fully determined by ``(system, config)``, including ``config.seed``.
    """
    system = get_system(system)
    config = replace(config or DatasetConfig(), **overrides)
    noise_kind = canonical_noise_kind(config.noise)
    operator = _operator_for(system, config)
    root = np.random.default_rng(config.seed)
    param_rng, train_rng, val_rng, test_rng = root.spawn(4)
    params = _jitter_params(system, param_rng, config.param_jitter)
    splits = {
        name: _make_split(system, params, operator, config, n, rng, noise_kind)
        for name, n, rng in (
            ("train", config.n_train, train_rng),
            ("val", config.n_val, val_rng),
            ("test", config.n_test, test_rng),
        )
    }
    return TimeSeriesDataset(
        system=system.name,
        state_names=system.state_names,
        operator=operator,
        params=params,
        seed=config.seed,
        noise=noise_kind,
        config=config,
        **splits,
    )


# ---------------------------------------------------------------------------
# file format


def write_table(path, columns, header):
    """Comma-separated table with a header row and 17 significant digits."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, fmt=FLOAT_FMT, delimiter=",", header=",".join(header), comments="")


def read_table(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def _config_to_dict(config):
    out = {}
    for k, v in config.__dict__.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, tuple):
            v = [list(r) if isinstance(r, (tuple, list, np.ndarray)) else r for r in v]
        out[k] = v
    return out


def save_dataset(dataset, directory):
    """Write ``dataset`` to ``directory`` (one sub-directory per split)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = list(dataset.state_names)
    for split_name in ("train", "val", "test"):
        s = dataset.split(split_name)
        d = directory / split_name
        d.mkdir(exist_ok=True)
        write_table(d / "signals.csv", [s.t, *s.Y.T], ["t", *(f"y_{i + 1}" for i in range(s.Y.shape[1]))])
        write_table(d / "snapshots.csv", [s.t_obs, *s.X_obs.T], ["t", *names])
        write_table(d / "truth.csv", [s.t, *s.X_true.T], ["t", *names])
    meta = {
        "format": "maat-dataset/1",
        "system": dataset.system,
        "state_names": names,
        "seed": dataset.seed,
        "noise": dataset.noise,
        "operator": {
            "H": [[float(FLOAT_FMT % v) for v in row] for row in dataset.operator.H],
            "labels": list(dataset.operator.labels),
        },
        "params": {k: float(FLOAT_FMT % v) for k, v in sorted(dataset.params.items())},
        "initial_conditions": {
            k: [float(FLOAT_FMT % v) for v in dataset.split(k).x0] for k in ("train", "val", "test")
        },
        "snapshot_indices": {
            k: [int(i) for i in dataset.split(k).snapshot_idx] for k in ("train", "val", "test")
        },
        "config": _config_to_dict(dataset.config),
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return directory


def load_dataset(directory):
    """Inverse of :func:`save_dataset`."""
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"no meta.json in {directory}")
    meta = json.loads(meta_path.read_text())
    system = get_system(meta["system"])
    params = meta["params"]
    operator = ObservationOperator(np.array(meta["operator"]["H"]), tuple(meta["operator"]["labels"]))
    splits = {}
    for name in ("train", "val", "test"):
        _, sig = read_table(directory / name / "signals.csv")
        _, snap = read_table(directory / name / "snapshots.csv")
        _, truth = read_table(directory / name / "truth.csv")
        X_true = truth[:, 1:]
        splits[name] = Split(
            t=sig[:, 0],
            Y=sig[:, 1:],
            snapshot_idx=np.array(meta["snapshot_indices"][name], dtype=int),
            X_obs=snap[:, 1:],
            X_true=X_true,
            dX_true=system.field(X_true, params),
            x0=np.array(meta["initial_conditions"][name], dtype=float),
        )
    cfg = dict(meta.get("config", {}))
    for key in ("operator_dims", "operator_matrix"):
        if cfg.get(key) is not None:
            cfg[key] = tuple(tuple(r) if isinstance(r, list) else r for r in cfg[key])
    config = DatasetConfig(**cfg) if cfg else DatasetConfig()
    return TimeSeriesDataset(
        system=system.name,
        state_names=tuple(meta["state_names"]),
        operator=operator,
        params=params,
        seed=meta["seed"],
        noise=meta["noise"],
        config=config,
        **splits,
    )
