"""Sparse polynomial regression of reconstructed derivatives (STLS).

A :class:`FeatureLibrary` enumerates monomials up to ``max_degree`` in graded
order (constant, linear terms, then quadratic terms ``x_i x_j`` with
``i <= j`` and so on).  :func:`stls_fit` runs sequentially thresholded least
squares per target column and returns a :class:`SparseDynamicsModel`.
"""

import itertools
import json
import warnings
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .dynamics import FLOAT_FMT, rk4_integrate
from .errors import IntegrationBlowupError, InvalidInputError, InvalidParameterError

STLS_RIDGE = 1e-10
UNSTABLE_TAG = "discovered-model-unstable"
MODEL_FORMAT = "maat-sparse-model/1"


@dataclass(frozen=True)
class FeatureLibrary:
    n_vars: int
    max_degree: int = 2
    include_bias: bool = True
    names: tuple = None

    def __post_init__(self):
        if self.n_vars < 1:
            raise InvalidParameterError("library needs at least one variable")
        if self.max_degree < 1:
            raise InvalidParameterError("max_degree must be >= 1")
        if self.names is None:
            object.__setattr__(self, "names", tuple(f"x{i + 1}" for i in range(self.n_vars)))
        elif len(self.names) != self.n_vars:
            raise InvalidParameterError("one name per variable required")
        else:
            object.__setattr__(self, "names", tuple(self.names))

    @property
    def exponents(self):
        out = []
        start = 0 if self.include_bias else 1
        for deg in range(start, self.max_degree + 1):
            for combo in itertools.combinations_with_replacement(range(self.n_vars), deg):
                e = [0] * self.n_vars
                for i in combo:
                    e[i] += 1
                out.append(tuple(e))
        return tuple(out)

    @property
    def n_features(self):
        return comb(self.n_vars + self.max_degree, self.max_degree) - (0 if self.include_bias else 1)

    def feature_names(self):
        return [_monomial_name(e, self.names) for e in self.exponents]

    def index_of(self, exponent):
        return self.exponents.index(tuple(exponent))


def _monomial_name(exponent, names):
    parts = []
    for n, k in zip(names, exponent):
        parts.extend([n] * k)
    return "*".join(parts) if parts else "1"


def build_features(states, library):
    """Evaluate every library monomial on each row of ``states``.

    Parameters
    ----------
    states : array_like, shape (N, D)
    library : FeatureLibrary

    Returns
    -------
    ndarray, shape (N, P)
        Column ``p`` is the monomial ``library.exponents[p]``.
    """
    X = np.atleast_2d(np.asarray(states, dtype=float))
    if X.shape[1] != library.n_vars:
        raise InvalidInputError(f"states have {X.shape[1]} columns, library expects {library.n_vars}")
    cols = []
    for e in library.exponents:
        col = np.ones(X.shape[0])
        for i, k in enumerate(e):
            if k:
                col = col * X[:, i] ** k
        cols.append(col)
    return np.column_stack(cols)


@dataclass(frozen=True)
class SparseDynamicsModel:
    library: FeatureLibrary
    Xi: np.ndarray
    support: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        Xi = np.array(self.Xi, dtype=float)
        support = np.array(self.support, dtype=bool)
        if Xi.shape != support.shape or Xi.shape[0] != self.library.n_features:
            raise InvalidInputError("Xi and support must both be (n_features, D)")
        if not np.all(np.isfinite(Xi)):
            raise InvalidInputError("coefficients must be finite")
        Xi[~support] = 0.0
        Xi.setflags(write=False)
        support.setflags(write=False)
        object.__setattr__(self, "Xi", Xi)
        object.__setattr__(self, "support", support)

    @property
    def dimension(self):
        return self.Xi.shape[1]

    def field(self, states):
        """Right-hand side ``Xi^T phi(x)``; accepts ``(D,)`` or ``(N, D)``."""
        x = np.asarray(states, dtype=float)
        out = build_features(np.atleast_2d(x), self.library) @ self.Xi
        return out[0] if x.ndim == 1 else out

    def terms(self):
        """Non-zero coefficients as ``[{exponent: coefficient}]`` per equation."""
        ex = self.library.exponents
        return [
            {ex[p]: float(self.Xi[p, d]) for p in np.flatnonzero(self.support[:, d])}
            for d in range(self.dimension)
        ]

    def equations(self, precision=3):
        lines = []
        names = self.library.names
        for d in range(self.dimension):
            rhs = ""
            for p in np.flatnonzero(self.support[:, d]):
                c = self.Xi[p, d]
                mono = _monomial_name(self.library.exponents[p], names)
                body = f"{abs(c):.{precision}f}" + ("" if mono == "1" else f"*{mono}")
                if not rhs:
                    rhs = ("-" if c < 0 else "") + body
                else:
                    rhs += (" - " if c < 0 else " + ") + body
            lines.append(f"d{names[d]}/dt = {rhs or '0'}")
        return lines

    def to_text(self):
        doc = {
            "format": MODEL_FORMAT,
            "names": list(self.library.names),
            "max_degree": self.library.max_degree,
            "include_bias": self.library.include_bias,
            "exponents": [list(e) for e in self.library.exponents],
            "Xi": [[float(FLOAT_FMT % v) for v in row] for row in self.Xi],
            "support": self.support.astype(int).tolist(),
            "equations": self.equations(),
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_text(cls, text):
        doc = json.loads(text)
        if doc.get("format") != MODEL_FORMAT:
            raise InvalidInputError(f"not a sparse model document (format={doc.get('format')!r})")
        lib = FeatureLibrary(len(doc["names"]), doc["max_degree"], doc["include_bias"], tuple(doc["names"]))
        if [list(e) for e in lib.exponents] != doc["exponents"]:
            raise InvalidInputError("library descriptors do not match the stored exponents")
        return cls(lib, np.array(doc["Xi"], dtype=float), np.array(doc["support"], dtype=bool))


def _ridge_lstsq(A, b, ridge):
    P = A.shape[1]
    if P == 0:
        return np.zeros(0)
    aug = np.vstack([A, np.sqrt(ridge) * np.eye(P)])
    rhs = np.concatenate([b, np.zeros(P)])
    return np.linalg.lstsq(aug, rhs, rcond=None)[0]


def stls_fit(features, targets, threshold=0.1, decay=0.9, max_iter=20, library=None, ridge=STLS_RIDGE):
    """Sequentially thresholded least squares.

    For each target column: solve a ridge-stabilised least-squares problem on
    all features, then repeatedly zero coefficients with magnitude below
    ``threshold * decay**k`` for rounds ``k = 1, 2, ...`` and refit on the
    survivors.  A coefficient sitting exactly at ``threshold`` therefore
    survives the first round.
    The loop stops once the support no longer changes or after ``max_iter``
    thresholding rounds.  The support never grows.

    Parameters
    ----------
    features : array_like, shape (N, P)
    targets : array_like, shape (N, D)
    library : FeatureLibrary, optional
        Attached to the result; a generic one is inferred from ``P`` when
        omitted, which only works for libraries of the default form.

    Returns
    -------
    SparseDynamicsModel
        ``diagnostics`` holds per-column iteration counts, the support size
        after each round, and an ``"empty"`` list naming columns whose whole
        support was eliminated.
    """
    Theta = np.asarray(features, dtype=float)
    Y = np.asarray(targets, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Theta.ndim != 2 or Theta.shape[0] != Y.shape[0]:
        raise InvalidInputError("features and targets must share their row count")
    if not (np.all(np.isfinite(Theta)) and np.all(np.isfinite(Y))):
        raise InvalidInputError("features and targets must be finite")
    N, P = Theta.shape
    D = Y.shape[1]
    if library is None:
        library = _infer_library(P, D)
    if library.n_features != P:
        raise InvalidInputError(f"library has {library.n_features} features, got {P} columns")
    if N < P:
        warnings.warn(f"fewer samples ({N}) than features ({P}); support may be unidentifiable", stacklevel=2)

    Xi = np.zeros((P, D))
    support = np.zeros((P, D), dtype=bool)
    diag = {"iterations": [], "support_sizes": [], "empty": []}
    for d in range(D):
        active = np.ones(P, dtype=bool)
        xi = _ridge_lstsq(Theta, Y[:, d], ridge)
        sizes = [P]
        iters = 0
        for k in range(1, max_iter + 1):
            iters = k
            keep = active & (np.abs(xi) >= threshold * decay**k)
            changed = not np.array_equal(keep, active)
            active = keep
            xi = np.zeros(P)
            xi[active] = _ridge_lstsq(Theta[:, active], Y[:, d], ridge)
            sizes.append(int(active.sum()))
            if not changed:
                break
        Xi[:, d] = xi
        support[:, d] = active
        diag["iterations"].append(iters)
        diag["support_sizes"].append(sizes)
        if not active.any():
            diag["empty"].append(d)
    return SparseDynamicsModel(library, Xi, support, diag)


def _infer_library(P, D):
    for deg in range(1, 8):
        if comb(D + deg, deg) == P:
            return FeatureLibrary(D, deg)
    raise InvalidInputError(f"cannot infer a polynomial library with {P} features over {D} variables")


def refit(model, features, targets, ridge=STLS_RIDGE):
    """Least-squares refit restricted to ``model.support``."""
    Theta = np.asarray(features, dtype=float)
    Y = np.asarray(targets, dtype=float).reshape(Theta.shape[0], -1)
    Xi = np.zeros_like(model.Xi)
    for d in range(Y.shape[1]):
        s = model.support[:, d]
        Xi[s, d] = _ridge_lstsq(Theta[:, s], Y[:, d], ridge)
    return SparseDynamicsModel(model.library, Xi, model.support.copy(), dict(model.diagnostics))


def discover(states, derivs, state_names=None, max_degree=2, **stls_kwargs):
    """Build the polynomial library over ``states`` and regress ``derivs`` on it."""
    X = np.atleast_2d(np.asarray(states, dtype=float))
    lib = FeatureLibrary(X.shape[1], max_degree, names=tuple(state_names) if state_names else None)
    return stls_fit(build_features(X, lib), derivs, library=lib, **stls_kwargs)


def rollout(model, x0, t0, dt, steps):
    """Integrate the discovered field with fixed-step RK4.

    Raises
    ------
    IntegrationBlowupError
        Tagged ``"discovered-model-unstable"`` when the trajectory diverges.
    """
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            return rk4_integrate(model.field, x0, t0, dt, steps)
    except IntegrationBlowupError as exc:
        raise IntegrationBlowupError(f"{UNSTABLE_TAG}: {exc}", step=exc.step, tag=UNSTABLE_TAG) from exc


def support_matches(model, true_terms):
    """True when the non-zero pattern equals the exponent sets in ``true_terms``."""
    found = model.terms()
    return all(set(f) == set(t) for f, t in zip(found, true_terms)) and len(found) == len(true_terms)
