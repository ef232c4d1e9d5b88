import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maat.errors import InvalidInputError, InvalidParameterError
from maat.kernel import default_length_scale, gram, gram_stack, rbf_kernel, rbf_kernel_dt

finite = st.floats(-50, 50, allow_nan=False)
positive = st.floats(0.05, 20, allow_nan=False)


def test_kernel_values():
    assert rbf_kernel(3.7, 3.7, 0.5) == 1.0
    assert rbf_kernel(0.0, 1.0, 1.0) == pytest.approx(0.60653, abs=1e-5)
    assert rbf_kernel(0.0, 2.0 * np.sqrt(2.0), 2.0) == pytest.approx(0.36788, abs=1e-5)


def test_kernel_derivative_values():
    assert rbf_kernel_dt(2.0, 2.0, 1.0) == 0.0
    assert rbf_kernel_dt(1.0, 0.0, 1.0) == pytest.approx(-np.exp(-0.5))
    assert rbf_kernel_dt(0.0, 1.0, 1.0) == pytest.approx(np.exp(-0.5))


@pytest.mark.parametrize("sigma", [0.0, -1.0, np.nan])
def test_bad_sigma(sigma):
    with pytest.raises(InvalidParameterError):
        rbf_kernel(0.0, 1.0, sigma)
    with pytest.raises(InvalidParameterError):
        gram([0.0], [1.0], sigma)


def test_gram_two_points():
    g = gram([0.0, 1.0], [0.0, 1.0], 1.0)
    e = np.exp(-0.5)
    np.testing.assert_allclose(g.K, [[1.0, e], [e, 1.0]])
    np.testing.assert_array_equal(np.diag(g.Kdot), 0.0)
    assert not g.K.flags.writeable


def test_gram_empty_grid():
    with pytest.raises(InvalidInputError):
        gram([], [0.0], 1.0)


@given(st.lists(finite, min_size=1, max_size=12, unique=True), positive)
def test_gram_symmetric_unit_diagonal(times, sigma):
    g = gram(times, times, sigma)
    np.testing.assert_array_equal(g.K, g.K.T)
    np.testing.assert_array_equal(np.diag(g.K), 1.0)
    assert np.all((g.K > 0) | (g.K == 0)) and np.all(g.K <= 1.0)


@given(st.lists(finite, min_size=1, max_size=8), st.lists(finite, min_size=1, max_size=8), positive)
def test_kdot_identity_entrywise(a, b, sigma):
    g = gram(a, b, sigma)
    diff = np.subtract.outer(a, b)
    np.testing.assert_allclose(g.Kdot, -diff / sigma**2 * g.K, rtol=1e-12, atol=0)


@given(finite, finite, positive)
def test_derivative_matches_finite_difference(t, tc, sigma):
    h = 1e-6
    fd = (rbf_kernel(t + h, tc, sigma) - rbf_kernel(t - h, tc, sigma)) / (2 * h)
    assert abs(fd - rbf_kernel_dt(t, tc, sigma)) < 1e-6


@given(st.floats(0, 10), st.floats(0.01, 10), positive)
def test_monotone_decay(d, extra, sigma):
    near = rbf_kernel(0.0, d, sigma)
    far = rbf_kernel(0.0, d + extra, sigma)
    assert far <= near
    if near > 1e-300:
        assert far < near or far == 0.0


def test_gram_stack_matches_gram():
    t = np.linspace(0, 3, 7)
    c = np.linspace(0, 3, 5)
    K, Kd = gram_stack(t, c, [0.5, 2.0])
    for i, s in enumerate([0.5, 2.0]):
        g = gram(t, c, s)
        np.testing.assert_array_equal(K[i], g.K)
        np.testing.assert_allclose(Kd[i], g.Kdot, rtol=1e-14)
    K2, none = gram_stack(t, c, [1.0], derivative=False)
    assert none is None and K2.shape == (1, 7, 5)


def test_default_length_scale():
    t = np.arange(10.0)
    assert default_length_scale(t) == pytest.approx(np.std(t))
    with pytest.raises(InvalidInputError):
        default_length_scale([1.0, 1.0])
