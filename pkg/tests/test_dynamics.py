import filecmp

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maat.dynamics import (
    PREDATOR_PREY,
    SEIR,
    SEIRH,
    VIRAL,
    DatasetConfig,
    NoiseModel,
    apply_noise,
    generate_dataset,
    get_system,
    load_dataset,
    make_observation_operator,
    noise_scale_rule,
    rk4_integrate,
    save_dataset,
    snapshot_count,
    snapshot_indices,
)
from maat.errors import (
    ConfigurationError,
    IntegrationBlowupError,
    InvalidInputError,
    InvalidParameterError,
)

nonneg_state = st.lists(st.floats(0, 10, allow_nan=False), min_size=4, max_size=4)


def test_rk4_constant_field():
    out = rk4_integrate(lambda x: np.zeros_like(x), [2.5, -1.0], 0.0, 0.3, 7)
    assert out.shape == (8, 2)
    np.testing.assert_array_equal(out, np.tile([2.5, -1.0], (8, 1)))


def test_rk4_exponential():
    out = rk4_integrate(lambda x: x, [1.0], 0.0, 0.1, 10)
    assert abs(out[-1, 0] - np.e) < 1e-5


def test_rk4_fourth_order():
    err = [abs(rk4_integrate(lambda x: x, [1.0], 0.0, dt, round(1 / dt))[-1, 0] - np.e) for dt in (0.1, 0.05)]
    assert 12 <= err[0] / err[1] <= 20


def test_rk4_blowup_reports_step():
    with pytest.raises(IntegrationBlowupError) as info:
        rk4_integrate(lambda x: x**2, [1.0], 0.0, 0.5, 50)
    assert info.value.step > 0


def test_rk4_bad_dt():
    with pytest.raises(InvalidParameterError):
        rk4_integrate(lambda x: x, [1.0], 0.0, 0.0, 3)


def test_seir_conserves_population():
    X = rk4_integrate(SEIR, [0.99, 0.0, 0.01, 0.0], 0.0, 0.2, 500)
    assert np.max(np.abs(X.sum(axis=1) - 1.0)) < 1e-12


def test_seirh_conserves_population():
    X = rk4_integrate(SEIRH, SEIRH.x0, 0.0, SEIRH.dt, 500)
    assert np.max(np.abs(X.sum(axis=1) - X[0].sum())) < 1e-10


def test_seir_nominal_parameters():
    assert SEIR.params == {"beta": 0.3, "sigma": 0.2, "gamma": 0.1, "N": 1.0}


def test_disease_free_equilibria():
    np.testing.assert_array_equal(SEIR.field(np.array([0.7, 0.0, 0.0, 0.3])), 0.0)
    x = np.zeros(VIRAL.dimension)
    x[0] = 1.0
    np.testing.assert_array_equal(VIRAL.field(x), 0.0)


@given(nonneg_state)
def test_seir_field_sums_to_zero(state):
    assert abs(np.sum(SEIR.field(np.array(state)))) < 1e-12


@pytest.mark.parametrize("system", [SEIR, SEIRH, VIRAL, PREDATOR_PREY])
def test_jacobian_matches_finite_differences(system):
    x = np.asarray(system.x0, dtype=float) + 0.1
    J = system.jacobian(x)
    h = 1e-6
    fd = np.column_stack(
        [(system.field(x + h * e) - system.field(x - h * e)) / (2 * h) for e in np.eye(system.dimension)]
    )
    np.testing.assert_allclose(J, fd, atol=1e-6)


@pytest.mark.parametrize("system", [SEIR, SEIRH, VIRAL, PREDATOR_PREY])
def test_terms_reproduce_field(system):
    rng = np.random.default_rng(0)
    x = rng.uniform(0.1, 2.0, system.dimension)
    expected = [sum(c * np.prod(x ** np.array(e)) for e, c in eq.items()) for eq in system.terms()]
    np.testing.assert_allclose(expected, system.field(x), rtol=1e-12, atol=1e-14)


def test_get_system():
    assert get_system("SEIR") is SEIR
    assert get_system("predator-prey") is PREDATOR_PREY
    with pytest.raises(ConfigurationError):
        get_system("lorenz")


def test_operators():
    np.testing.assert_array_equal(make_observation_operator("sum-all", 4).H, [[1, 1, 1, 1]])
    np.testing.assert_array_equal(make_observation_operator("identity", 3).H, np.eye(3))
    sel = make_observation_operator("select", 4, dims=[0, 2])
    np.testing.assert_array_equal(sel.H, np.eye(4)[[0, 2]])
    assert sel.is_selection()
    with pytest.raises(InvalidInputError):
        make_observation_operator("select", 4, dims=[4])
    with pytest.raises(InvalidInputError):
        make_observation_operator("mixing", 2, matrix=[[0.0, 0.0]])
    with pytest.raises(ConfigurationError):
        make_observation_operator("fourier", 2)


def test_noise_zero_scale_is_identity():
    clean = np.arange(12.0).reshape(6, 2)
    for kind in ("gaussian", "ar1", "student-t"):
        np.testing.assert_array_equal(apply_noise(clean, NoiseModel(kind, 0.0), 3), clean)


def test_gaussian_noise_std():
    out = apply_noise(np.zeros(100_000), NoiseModel("isotropic-gaussian", 0.1), 1)
    assert 0.098 <= np.std(out) <= 0.102


def test_ar1_autocorrelation():
    out = apply_noise(np.zeros(100_000), NoiseModel("correlated-ar1", 1.0), 2)
    rho = np.corrcoef(out[:-1], out[1:])[0, 1]
    assert 0.78 <= rho <= 0.82
    assert 0.95 <= np.std(out) <= 1.05


def test_student_t_variance():
    out = apply_noise(np.zeros(200_000), NoiseModel("student-t", 0.5), 3)
    assert 0.48 <= np.std(out) <= 0.52


@pytest.mark.parametrize("kw", [{"scale": -1.0}, {"ar1_alpha": 1.0}, {"student_nu": 2.0}])
def test_noise_model_validation(kw):
    with pytest.raises(InvalidParameterError):
        NoiseModel(**kw)


def test_snapshot_rule():
    assert snapshot_count(500) == 34
    assert snapshot_count(200) == 21
    idx = snapshot_indices(500)
    assert idx.size == 34 and idx[0] == 0 and idx[-1] == 499


def test_dataset_defaults_and_invariants():
    ds = generate_dataset("seir", seed=3)
    assert ds.train.n == 500 and ds.val.n == 200 and ds.test.n == 200
    assert ds.train.t[1] - ds.train.t[0] == pytest.approx(0.2)
    for name in ("train", "val", "test"):
        s = ds.split(name)
        assert np.all(np.diff(s.t) > 0)
        assert set(s.t_obs) <= set(s.t)
        assert s.Y.shape == (s.n, ds.operator.n_channels)
        assert np.all(s.X_true >= -1e-12)


def test_dataset_noise_rule():
    ds = generate_dataset("seir", seed=1, n_train=5000)
    resid = ds.train.Y - ds.operator.apply(ds.train.X_true)
    target = noise_scale_rule(ds.operator.apply(ds.train.X_true))
    np.testing.assert_allclose(np.std(resid, axis=0), target, rtol=0.1)


def test_noiseless_dataset_and_snapshot_flag():
    ds = generate_dataset("viral", seed=0, noise_scale=0.0)
    np.testing.assert_array_equal(ds.train.Y, ds.operator.apply(ds.train.X_true))
    ds2 = generate_dataset("seir", seed=0, snapshot_noise=False)
    np.testing.assert_array_equal(ds2.train.X_obs, ds2.train.X_true[ds2.train.snapshot_idx])


def test_dataset_determinism(tmp_path):
    a = save_dataset(generate_dataset("seir", DatasetConfig(seed=7)), tmp_path / "a")
    b = save_dataset(generate_dataset("seir", DatasetConfig(seed=7)), tmp_path / "b")
    for rel in ("meta.json", "train/signals.csv", "train/snapshots.csv", "test/truth.csv"):
        assert filecmp.cmp(a / rel, b / rel, shallow=False)
    c = generate_dataset("seir", DatasetConfig(seed=8))
    assert not np.array_equal(c.train.Y, load_dataset(a).train.Y)


def test_dataset_round_trip(tmp_path):
    ds = generate_dataset("seirh", seed=2, operator_kind="select", operator_dims=(0, 3), n_train=80, n_val=30, n_test=30)
    back = load_dataset(save_dataset(ds, tmp_path))
    for name in ("train", "val", "test"):
        s, r = ds.split(name), back.split(name)
        for attr in ("t", "Y", "X_obs", "X_true", "snapshot_idx", "x0"):
            np.testing.assert_array_equal(getattr(s, attr), getattr(r, attr))
    np.testing.assert_array_equal(ds.operator.H, back.operator.H)
    assert back.params == ds.params and back.noise == ds.noise and back.config == ds.config


def test_load_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path)
