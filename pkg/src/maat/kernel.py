"""Gaussian RBF kernel, its time derivative, and Gram matrix construction.

All functions broadcast over numpy arrays.  The derivative is always taken
with respect to the *first* time argument, so that for a model
``x(t) = sum_l u_l k(t, t_l)`` we get ``x'(t) = sum_l u_l dk(t, t_l)``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvalidParameterError


def _check_sigma(sigma):
    sigma = np.asarray(sigma, dtype=float)
    if not np.all(np.isfinite(sigma)) or np.any(sigma <= 0):
        raise InvalidParameterError(f"kernel length-scale must be positive, got {sigma!r}")
    return sigma


def rbf_kernel(t, t_center, sigma):
    """Gaussian kernel ``exp(-(t - t_center)**2 / (2 sigma**2))``.

    Parameters
    ----------
    t, t_center : float or array_like
        Time points; broadcast against each other.
    sigma : float
        Length-scale, strictly positive.

    Returns
    -------
    float or ndarray
        Kernel values in ``(0, 1]``.
    """
    sigma = _check_sigma(sigma)
    diff = np.subtract(t, t_center, dtype=float)
    return np.exp(-0.5 * (diff / sigma) ** 2)


def rbf_kernel_dt(t, t_center, sigma):
    """Derivative of :func:`rbf_kernel` with respect to ``t``."""
    sigma = _check_sigma(sigma)
    diff = np.subtract(t, t_center, dtype=float)
    return -diff / sigma**2 * np.exp(-0.5 * (diff / sigma) ** 2)


@dataclass(frozen=True)
class GramPair:
    """Kernel matrix ``K`` and its first-argument time derivative ``Kdot``.

    ``K[i, j] = k(eval_times[i], center_times[j])`` and ``Kdot`` holds the
    matching derivative values.
    """

    K: np.ndarray
    Kdot: np.ndarray

    def __post_init__(self):
        for arr in (self.K, self.Kdot):
            arr.setflags(write=False)


def _as_grid(times, name):
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.ndim != 1 or times.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 1-D time vector")
    return times


def gram(eval_times, center_times, sigma):
    """Build the :class:`GramPair` between two time grids for one length-scale."""
    sigma = float(_check_sigma(sigma))
    t = _as_grid(eval_times, "eval_times")
    c = _as_grid(center_times, "center_times")
    diff = t[:, None] - c[None, :]
    K = np.exp(-0.5 * (diff / sigma) ** 2)
    Kdot = -diff / sigma**2 * K
    return GramPair(K, Kdot)


def gram_stack(eval_times, center_times, sigmas, derivative=True):
    """Per-dimension Gram matrices stacked along a leading axis.

    Returns ``K`` of shape ``(D, N, M)`` and, if ``derivative`` is true,
    ``Kdot`` of the same shape; otherwise ``Kdot`` is ``None``.
    """
    sigmas = np.atleast_1d(_check_sigma(sigmas))
    t = _as_grid(eval_times, "eval_times")
    c = _as_grid(center_times, "center_times")
    diff = t[:, None] - c[None, :]
    scaled = diff[None, :, :] / sigmas[:, None, None]
    K = np.exp(-0.5 * scaled**2)
    if not derivative:
        return K, None
    Kdot = -(scaled / sigmas[:, None, None]) * K
    return K, Kdot


def default_length_scale(times):
    """Variance-matched initial length-scale ``sqrt(Var(times))``."""
    times = _as_grid(times, "times")
    scale = float(np.sqrt(np.var(times)))
    if scale <= 0:
        raise InvalidInputError("need at least two distinct times to set a length-scale")
    return scale
