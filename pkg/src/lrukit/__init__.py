"""lrukit — linear recurrent unit kernels, models, and experiments.

The package is organized in layers:

* :mod:`lrukit.numerics` / :mod:`lrukit.seeding` — DFT, spectral-radius
  and tail-probability utilities; deterministic RNG trees.
* :mod:`lrukit.initializers` — eigenvalue ring sampler, normalization
  constants, Glorot matrices, per-layer parameter containers.
* :mod:`lrukit.recurrence` — sequential and work-efficient parallel
  scans, dense-RNN forward, ZOH discretization, impulse responses.
* :mod:`lrukit.gradients` — hand-derived adjoints for the recurrence and
  a finite-difference audit harness.
* :mod:`lrukit.model` / :mod:`lrukit.training` — deep residual model
  (norm → recurrence → GLU → skip) and the AdamW/schedule loop.
* :mod:`lrukit.experiments` — reproducible studies: gain calibration,
  linear-vs-tanh convolution learning, eigenvalue-power optimization,
  spectral leakage, benchmarks.
* :mod:`lrukit.estimators` — scikit-learn compatible facades.
* :mod:`lrukit.cli` — the ``lrukit`` command-line entry point.
"""

from .checkpoint import load_params, save_params
from .estimators import LruNetworkClassifier, LruNetworkRegressor
from .gradients import FdReport, LruGrads, finite_difference_check, lru_backward
from .initializers import (
    LruParams,
    RingConfig,
    gamma_init,
    glorot_complex,
    glorot_dense,
    glorot_matrix,
    lru_init,
    ring_from_uniforms,
    sample_ring,
)
from .model import (
    BlockParams,
    ModelConfig,
    ModelParams,
    model_backward,
    model_forward,
    model_init,
)
from .numerics import (
    GelfandEstimate,
    Spectrum,
    as_complex,
    chi2_survival,
    dft,
    dft_values,
    gelfand_spectral_radius,
    regularized_gamma_upper,
    split_complex,
    trace_moment,
)
from .recurrence import (
    ZohSystem,
    affine_scan,
    dense_rnn_forward,
    impulse_response,
    impulse_response_matrix,
    lru_forward,
    to_real_block_form,
    zoh_discretize,
)
from .reporting import ExperimentReport
from .seeding import make_generator, split
from .training import (
    DivergenceError,
    OptimConfig,
    TrainState,
    TrainTask,
    adamw_step,
    lr_schedule,
    max_eigen_magnitude,
    sequence_mse,
    softmax_cross_entropy,
    train_loop,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # numerics
    "Spectrum",
    "GelfandEstimate",
    "as_complex",
    "split_complex",
    "dft",
    "dft_values",
    "gelfand_spectral_radius",
    "trace_moment",
    "regularized_gamma_upper",
    "chi2_survival",
    # seeding
    "make_generator",
    "split",
    # initializers
    "RingConfig",
    "LruParams",
    "sample_ring",
    "ring_from_uniforms",
    "gamma_init",
    "glorot_complex",
    "glorot_dense",
    "glorot_matrix",
    "lru_init",
    # recurrence
    "ZohSystem",
    "affine_scan",
    "lru_forward",
    "dense_rnn_forward",
    "zoh_discretize",
    "to_real_block_form",
    "impulse_response",
    "impulse_response_matrix",
    # gradients
    "LruGrads",
    "FdReport",
    "lru_backward",
    "finite_difference_check",
    # model
    "ModelConfig",
    "BlockParams",
    "ModelParams",
    "model_init",
    "model_forward",
    "model_backward",
    # training
    "DivergenceError",
    "OptimConfig",
    "TrainState",
    "TrainTask",
    "adamw_step",
    "lr_schedule",
    "train_loop",
    "max_eigen_magnitude",
    "sequence_mse",
    "softmax_cross_entropy",
    # checkpoint + reporting
    "save_params",
    "load_params",
    "ExperimentReport",
    # estimators
    "LruNetworkRegressor",
    "LruNetworkClassifier",
]
