"""Kernel state reconstruction of dynamical systems from heterogeneous observations.

The main entry points:

- :func:`maat.dynamics.generate_dataset` simulates benchmark trajectories.
- :func:`maat.reconstruction.fit` reconstructs states and analytic
  derivatives from dense mixed signals plus sparse snapshots.
- :mod:`maat.baselines` holds the classical comparison estimators.
- :func:`maat.discovery.discover` runs sparse polynomial regression (STLS).
- :mod:`maat.experiments` reproduces the benchmark and ablation tables.
"""

from .baselines import (
    BaselineEstimate,
    cubic_spline,
    finite_difference,
    kalman_rts,
    linear_interp,
    rbf_interp,
    savitzky_golay,
    tvregdiff_proxy,
)
from .discovery import FeatureLibrary, SparseDynamicsModel, build_features, discover, refit, rollout, stls_fit
from .dynamics import (
    SYSTEMS,
    DatasetConfig,
    NoiseModel,
    ObservationOperator,
    OdeSystem,
    TimeSeriesDataset,
    apply_noise,
    generate_dataset,
    get_system,
    load_dataset,
    make_observation_operator,
    rk4_integrate,
    save_dataset,
)
from .errors import (
    ConfigurationError,
    IntegrationBlowupError,
    InvalidInputError,
    InvalidParameterError,
    MaatError,
    NumericError,
    UnsupportedInputError,
)
from .kernel import GramPair, default_length_scale, gram, gram_stack, rbf_kernel, rbf_kernel_dt
from .reconstruction import (
    KernelModel,
    LossWeights,
    OptimizerConfig,
    PriorSpec,
    build_problem,
    composite_loss,
    composite_loss_gradient,
    evaluate,
    fit,
    lemma1_bounds,
    load_model,
    save_model,
    sweep_length_scales,
)

__version__ = "0.1.0"
